//! Joint CTC-attention Transformer: a shared encoder with a strided
//! convolutional front-end, a CTC projection head, an attention decoder,
//! and the multi-task objective L = lambda * L_ctc + (1 - lambda) * L_att.

mod net;
mod train;

pub use net::{
    check_config, eval_ctc_logits, eval_decoder_logprobs, eval_encode, eval_mtl_loss, init_params,
    loss_and_grads, Graph, LossBreakdown, ModelConfig, Session, META_CONFIG,
};
pub use train::{
    evaluate, train, transfer_learn, write_epoch_log, EpochStats, TrainConfig, Utterance,
};

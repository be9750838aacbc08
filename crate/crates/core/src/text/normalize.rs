/// Arabic digit to Mandarin digit mapping.
pub const DIGIT_MAP: [(char, char); 10] = [
    ('0', '零'),
    ('1', '一'),
    ('2', '二'),
    ('3', '三'),
    ('4', '四'),
    ('5', '五'),
    ('6', '六'),
    ('7', '七'),
    ('8', '八'),
    ('9', '九'),
];

/// Full-width CJK punctuation stripped alongside ASCII punctuation.
const CJK_PUNCT: &str = "。，、！？；：「」『』（）《》〈〉【】…—·“”‘’〜・～￥＂＇＼／＠＃％＆＊＋－＝＜＞［］｛｝｜＿＾｀";

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || CJK_PUNCT.contains(c)
}

/// Normalizes a raw transcript: Arabic digits become Mandarin digits,
/// punctuation is dropped, and maximal Latin-letter runs (code-switched
/// English) collapse to the unknown token. Total and idempotent.
pub fn normalize_transcript(raw: &str, unk_token: &str) -> String {
    // digits, then punctuation, then OOV runs; this order makes a second
    // application a no-op (the unk token's angle brackets strip back to a
    // bare Latin run which maps to unk again)
    let mut s = String::with_capacity(raw.len());
    for c in raw.chars() {
        if let Some(&(_, m)) = DIGIT_MAP.iter().find(|(a, _)| *a == c) {
            s.push(m);
        } else if !is_punct(c) {
            s.push(c);
        }
    }
    let mut out = String::with_capacity(s.len());
    let mut run = false;
    for c in s.chars() {
        if c.is_ascii_alphabetic() {
            if !run {
                out.push_str(unk_token);
                run = true;
            }
        } else {
            run = false;
            out.push(c);
        }
    }
    out
}

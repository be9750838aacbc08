use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lm::ngram::{GramEntry, NGramModel};

/// Canonical ARPA text: `\data\` counts, per-order sections with
/// `log10prob<TAB>gram[<TAB>log10bow]` (6 decimals, grams in id order),
/// `\end\`. Reading back what was written is the identity.
pub fn write_arpa(lm: &NGramModel, path: &Path) -> Result<()> {
    let mut out = String::from("\\data\\\n");
    for (k, table) in lm.tables().iter().enumerate() {
        let _ = writeln!(out, "ngram {}={}", k + 1, table.len());
    }
    for (k, table) in lm.tables().iter().enumerate() {
        let _ = writeln!(out, "\n\\{}-grams:", k + 1);
        let with_bow = k + 1 < lm.order;
        for (gram, e) in table {
            let text: Vec<&str> = gram.iter().map(|&id| &*lm.tokens()[id]).collect();
            if with_bow {
                let _ = writeln!(
                    out,
                    "{:.6}\t{}\t{:.6}",
                    e.log10_prob,
                    text.join(" "),
                    e.log10_bow
                );
            } else {
                let _ = writeln!(out, "{:.6}\t{}", e.log10_prob, text.join(" "));
            }
        }
    }
    out.push_str("\n\\end\\\n");
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_arpa(path: &Path) -> Result<NGramModel> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() && lines[i].trim().is_empty() {
        i += 1;
    }
    if i >= lines.len() || lines[i].trim() != "\\data\\" {
        return Err(parse_err(i + 1, "expected \\data\\ header"));
    }
    i += 1;
    let mut declared: Vec<usize> = Vec::new();
    while i < lines.len() && lines[i].trim().starts_with("ngram ") {
        let rest = lines[i].trim().trim_start_matches("ngram ");
        let (order_s, count_s) = rest
            .split_once('=')
            .ok_or_else(|| parse_err(i + 1, "malformed ngram count line"))?;
        let order: usize = order_s
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad order `{}`", order_s)))?;
        if order != declared.len() + 1 {
            return Err(parse_err(i + 1, format!("orders out of sequence at {}", order)));
        }
        let count: usize = count_s
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad count `{}`", count_s)))?;
        declared.push(count);
        i += 1;
    }
    if declared.is_empty() {
        return Err(parse_err(i + 1, "no ngram counts declared"));
    }

    // first pass: collect token strings from unigrams to fix the id order
    let mut string_tables: Vec<Vec<(f64, Vec<String>, f64)>> = Vec::new();
    for (k, &expected) in declared.iter().enumerate() {
        while i < lines.len() && lines[i].trim().is_empty() {
            i += 1;
        }
        let header = format!("\\{}-grams:", k + 1);
        if i >= lines.len() || lines[i].trim() != header {
            return Err(parse_err(i + 1, format!("expected section header {}", header)));
        }
        i += 1;
        let mut rows = Vec::with_capacity(expected);
        while i < lines.len() {
            let line = lines[i].trim();
            if line.is_empty() || line.starts_with('\\') {
                break;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let with_bow = k + 1 < declared.len();
            let want = if with_bow { 3 } else { 2 };
            if cols.len() != want {
                return Err(parse_err(
                    i + 1,
                    format!("expected {} tab-separated fields, found {}", want, cols.len()),
                ));
            }
            let prob: f64 = cols[0]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("non-numeric probability `{}`", cols[0])))?;
            let gram: Vec<String> = cols[1].split(' ').map(|s| s.to_string()).collect();
            if gram.len() != k + 1 {
                return Err(parse_err(
                    i + 1,
                    format!("{}-gram section holds a {}-gram", k + 1, gram.len()),
                ));
            }
            let bow: f64 = if with_bow {
                cols[2]
                    .parse()
                    .map_err(|_| parse_err(i + 1, format!("non-numeric backoff `{}`", cols[2])))?
            } else {
                0.0
            };
            rows.push((prob, gram, bow));
            i += 1;
        }
        if rows.len() != expected {
            return Err(parse_err(
                i + 1,
                format!(
                    "\\data\\ declares {} {}-grams but section holds {}",
                    expected,
                    k + 1,
                    rows.len()
                ),
            ));
        }
        string_tables.push(rows);
    }
    while i < lines.len() && lines[i].trim().is_empty() {
        i += 1;
    }
    if i >= lines.len() || lines[i].trim() != "\\end\\" {
        return Err(parse_err(i + 1, "expected \\end\\ terminator"));
    }

    // ids follow unigram order, matching the writer's canonical layout
    let tokens: Vec<String> = string_tables[0]
        .iter()
        .map(|(_, g, _)| g[0].clone())
        .collect();
    let index: std::collections::HashMap<&str, usize> = tokens
        .iter()
        .enumerate()
        .map(|(id, t)| (t.as_str(), id))
        .collect();
    let mut tables: Vec<BTreeMap<Vec<usize>, GramEntry>> = Vec::new();
    for (k, rows) in string_tables.iter().enumerate() {
        let mut table = BTreeMap::new();
        for (prob, gram, bow) in rows {
            let ids: Result<Vec<usize>> = gram
                .iter()
                .map(|t| {
                    index.get(t.as_str()).copied().ok_or_else(|| {
                        parse_err(0, format!("{}-gram token `{}` missing from unigrams", k + 1, t))
                    })
                })
                .collect();
            table.insert(
                ids?,
                GramEntry {
                    log10_prob: *prob,
                    log10_bow: *bow,
                },
            );
        }
        tables.push(table);
    }
    NGramModel::new(tokens, tables)
}

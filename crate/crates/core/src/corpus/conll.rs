//! Column-format corpus reader and writer.

use super::{BioLabel, Corpus, LabelMode, Sentence, Token};
use crate::error::Error;
use crate::Result;
use std::io::{BufRead, BufReader, Read};

/// Parse the tab-separated column format.
///
/// Each token line carries `INDEX SURFACE POS HEAD RELATION LABEL`; blank
/// lines end a sentence and lines starting with `#` are ignored. Sentences
/// with zero or several head-0 tokens are repaired to a single root: the
/// first head-0 token (or the first token when there is none) becomes the
/// root and any other head-0 token is re-headed to it.
pub fn parse_conll<R: Read>(reader: R) -> Result<Corpus> {
    let reader = BufReader::new(reader);
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, Token)> = Vec::new();
    let mut saw_opinion = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !block.is_empty() {
                sentences.push(finish_sentence(
                    std::mem::take(&mut block),
                    sentences.len() + 1,
                    &mut saw_opinion,
                )?);
            }
            continue;
        }
        block.push((line_no, parse_token_line(&line, line_no, block.len() + 1)?));
    }
    if !block.is_empty() {
        sentences.push(finish_sentence(
            block,
            sentences.len() + 1,
            &mut saw_opinion,
        )?);
    }

    let mode = if saw_opinion {
        LabelMode::Full
    } else {
        LabelMode::AspectOnly
    };
    Ok(Corpus { sentences, mode })
}

fn parse_token_line(line: &str, line_no: usize, expected_index: usize) -> Result<Token> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 6 {
        return Err(Error::parse(
            line_no,
            format!("expected 6 tab-separated columns, found {}", cols.len()),
        ));
    }
    let index: usize = cols[0]
        .parse()
        .map_err(|_| Error::parse(line_no, format!("invalid token index {:?}", cols[0])))?;
    if index != expected_index {
        return Err(Error::parse(
            line_no,
            format!("token index {index} out of order, expected {expected_index}"),
        ));
    }
    let head: usize = cols[3]
        .parse()
        .map_err(|_| Error::parse(line_no, format!("invalid head index {:?}", cols[3])))?;
    let label: BioLabel = cols[5]
        .parse()
        .map_err(|_| Error::parse(line_no, format!("unknown label {:?}", cols[5])))?;
    Ok(Token {
        surface: cols[1].to_string(),
        pos: cols[2].to_string(),
        head,
        relation: cols[4].to_string(),
        label,
    })
}

fn finish_sentence(
    block: Vec<(usize, Token)>,
    ordinal: usize,
    saw_opinion: &mut bool,
) -> Result<Sentence> {
    let n = block.len();
    for (pos, (line_no, token)) in block.iter().enumerate() {
        if token.head > n {
            return Err(Error::parse(
                *line_no,
                format!(
                    "head index {} out of range for sentence of length {n}",
                    token.head
                ),
            ));
        }
        if token.head == pos + 1 {
            return Err(Error::parse(
                *line_no,
                format!("token {} is its own head", pos + 1),
            ));
        }
        if matches!(token.label, BioLabel::Bo | BioLabel::Io) {
            *saw_opinion = true;
        }
    }

    let mut tokens: Vec<Token> = block.into_iter().map(|(_, t)| t).collect();
    repair_root(&mut tokens);
    Ok(Sentence {
        id: ordinal.to_string(),
        tokens,
    })
}

/// Force a unique head-0 token.
fn repair_root(tokens: &mut [Token]) {
    let roots: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.head == 0)
        .map(|(i, _)| i)
        .collect();
    match roots.as_slice() {
        [_single] => {}
        [] => tokens[0].head = 0,
        [first, rest @ ..] => {
            let root_index = *first + 1;
            for &i in rest {
                tokens[i].head = root_index;
            }
        }
    }
}

/// Serialize a corpus back into the column format.
pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for (i, sentence) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (pos, token) in sentence.tokens.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                pos + 1,
                token.surface,
                token.pos,
                token.head,
                token.relation,
                token.label
            ));
        }
    }
    out
}

/// Rewrite the label column of `input` with `labels`, one vector per
/// sentence, leaving every other byte of the stream untouched.
pub fn rewrite_labels(input: &str, labels: &[Vec<BioLabel>]) -> Result<String> {
    let mut out = String::with_capacity(input.len());
    let mut sentence = 0usize;
    let mut position = 0usize;
    let mut in_block = false;

    for line in input.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            if in_block && !line.starts_with('#') {
                sentence += 1;
                position = 0;
                in_block = false;
            }
            out.push_str(line);
            out.push('\n');
            continue;
        }
        in_block = true;
        let new_labels = labels
            .get(sentence)
            .ok_or_else(|| Error::data("label rewrite: more sentences than label sequences"))?;
        let label = new_labels.get(position).ok_or_else(|| {
            Error::data(format!(
                "label rewrite: sentence {} has more tokens than labels",
                sentence + 1
            ))
        })?;
        let prefix = line
            .rfind('\t')
            .map(|cut| &line[..cut])
            .ok_or_else(|| Error::data("label rewrite: token line without tab"))?;
        out.push_str(prefix);
        out.push('\t');
        out.push_str(label.as_str());
        out.push('\n');
        position += 1;
    }
    Ok(out)
}

//! Minimal CoNLL-U reader: ID, FORM, UPOS, HEAD and DEPREL are kept.

use std::fmt::Write;

use super::IngestError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub upos: String,
    /// 1-based head within the sentence; 0 marks the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<Token>>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Surface forms in reading order.
    pub fn forms(&self) -> Vec<String> {
        self.sentences
            .iter()
            .flatten()
            .map(|t| t.form.clone())
            .collect()
    }

    /// Flat-index offsets of each sentence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.sentences
            .iter()
            .map(|s| {
                let o = off;
                off += s.len();
                o
            })
            .collect()
    }

    pub fn token_mut(&mut self, flat: usize) -> Option<&mut Token> {
        self.sentences.iter_mut().flatten().nth(flat)
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        message: msg.into(),
    }
}

/// Parses CoNLL-U text. Multiword-token ranges (`3-4`) and empty nodes
/// (`5.1`) are skipped; comment lines start with `#`.
pub fn parse_conllu(text: &str) -> Result<Document, IngestError> {
    let mut doc = Document::default();
    // (token, line number) so HEAD range errors can point at the line
    let mut current: Vec<(Token, usize)> = Vec::new();

    fn finish(
        doc: &mut Document,
        current: &mut Vec<(Token, usize)>,
    ) -> Result<(), IngestError> {
        if current.is_empty() {
            return Ok(());
        }
        let len = current.len();
        let mut roots = 0;
        for (tok, line) in current.iter() {
            if tok.head > len {
                return Err(parse_err(
                    *line,
                    format!("HEAD {} out of range for a {len}-token sentence", tok.head),
                ));
            }
            if tok.head == 0 {
                roots += 1;
            }
        }
        if roots != 1 {
            let line = current[0].1;
            return Err(parse_err(
                line,
                format!("sentence starting here has {roots} roots, expected 1"),
            ));
        }
        doc.sentences
            .push(current.drain(..).map(|(t, _)| t).collect());
        Ok(())
    }

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut doc, &mut current)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("newdoc id =") {
                if doc.doc_id.is_empty() {
                    doc.doc_id = id.trim().to_string();
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-integer ID `{id}`")))?;
        if id != current.len() + 1 {
            return Err(parse_err(
                lineno,
                format!("ID {id} out of sequence, expected {}", current.len() + 1),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| parse_err(lineno, format!("non-integer HEAD `{}`", cols[6])))?;
        if head == id {
            return Err(parse_err(lineno, "token is its own head"));
        }
        current.push((
            Token {
                form: cols[1].to_string(),
                upos: cols[3].to_string(),
                head,
                deprel: cols[7].to_string(),
            },
            lineno,
        ));
    }
    finish(&mut doc, &mut current)?;
    if doc.sentences.is_empty() {
        return Err(parse_err(text.lines().count().max(1), "no sentences"));
    }
    Ok(doc)
}

/// Writes the kept columns back out; unkept columns become `_`.
pub fn to_conllu(doc: &Document) -> String {
    let mut out = String::new();
    if !doc.doc_id.is_empty() {
        writeln!(out, "# newdoc id = {}", doc.doc_id).unwrap();
    }
    for sent in &doc.sentences {
        for (i, t) in sent.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                t.form,
                t.upos,
                t.head,
                t.deprel
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

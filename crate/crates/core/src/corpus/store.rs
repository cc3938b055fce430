use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, DocId, Document};

/// One line of the gold-label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub doc_id: DocId,
    pub feature_id: String,
    #[serde(with = "bool_string")]
    pub label: bool,
}

mod bool_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "true" } else { "false" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(D::Error::custom(format!("label must be \"true\" or \"false\", got {other:?}"))),
        }
    }
}

fn parse_lines<T, R>(reader: R) -> Result<Vec<T>, CorpusError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_documents<W: Write>(mut w: W, docs: &[Document]) -> Result<(), CorpusError> {
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads corpus JSONL; errors carry the 1-based line number.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Document>, CorpusError> {
    let docs: Vec<Document> = parse_lines(reader)?;
    if let Some((line, _)) = docs.iter().enumerate().find(|(_, d)| d.opinion_text.is_empty()) {
        return Err(CorpusError::Format {
            line: line + 1,
            message: "opinion_text is empty".into(),
        });
    }
    Ok(docs)
}

pub fn write_gold_labels<W: Write>(mut w: W, labels: &[GoldLabel]) -> Result<(), CorpusError> {
    for l in labels {
        serde_json::to_writer(&mut w, l).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gold_labels<R: BufRead>(reader: R) -> Result<Vec<GoldLabel>, CorpusError> {
    parse_lines(reader)
}

/// Writes the documents of `corpus` as JSONL, one per line.
pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    write_documents(BufWriter::new(File::create(path)?), corpus.documents())
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    Corpus::new(read_documents(BufReader::new(File::open(path)?))?)
}

pub fn load_gold_labels(path: &Path) -> Result<Vec<GoldLabel>, CorpusError> {
    read_gold_labels(BufReader::new(File::open(path)?))
}

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// How concatenated case exports are cut into individual cases.
///
/// `delimiter` matches text between cases (removed from block text but kept
/// as the block separator). `heading` matches the first line of a case and
/// starts a new block without consuming anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitterConfig {
    pub delimiter: Option<String>,
    pub heading: Option<String>,
}

impl Default for SplitterConfig {
    fn default() -> Self {
        Self {
            delimiter: Some(r"(?m)^[ \t]*End of Document[ \t]*\r?$".to_string()),
            heading: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splitter {
    delimiter: Option<Regex>,
    heading: Option<Regex>,
}

fn compile(field: &str, pattern: &str) -> Result<Regex, CorpusError> {
    Regex::new(pattern).map_err(|e| CorpusError::InvalidPattern {
        field: field.to_string(),
        message: e.to_string(),
    })
}

impl Splitter {
    pub fn new(config: &SplitterConfig) -> Result<Self, CorpusError> {
        Ok(Self {
            delimiter: config.delimiter.as_deref().map(|p| compile("delimiter", p)).transpose()?,
            heading: config.heading.as_deref().map(|p| compile("heading", p)).transpose()?,
        })
    }
}

/// One case's raw text and whatever followed it up to the next case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseBlock {
    pub text: String,
    pub separator: String,
}

/// Concatenates blocks with their separators; inverse of [`split_cases`].
pub fn reassemble(blocks: &[CaseBlock]) -> String {
    blocks.iter().flat_map(|b| [b.text.as_str(), b.separator.as_str()]).collect()
}

/// Cuts `raw` into case blocks such that `reassemble(blocks) == raw`.
///
/// Whitespace-only stretches never become blocks: leading ones are folded into
/// the next block's text, later ones into the previous block's separator.
pub fn split_cases(raw: &str, splitter: &Splitter) -> Result<Vec<CaseBlock>, CorpusError> {
    let mut segments: Vec<(&str, &str)> = Vec::new();
    let mut cursor = 0;
    if let Some(delim) = &splitter.delimiter {
        for m in delim.find_iter(raw) {
            if m.is_empty() {
                continue;
            }
            segments.push((&raw[cursor..m.start()], m.as_str()));
            cursor = m.end();
        }
    }
    segments.push((&raw[cursor..], ""));

    if let Some(heading) = &splitter.heading {
        segments = segments
            .into_iter()
            .flat_map(|(seg, sep)| split_at_headings(seg, heading, sep))
            .collect();
    }

    let mut blocks: Vec<CaseBlock> = Vec::new();
    let mut carry = String::new();
    for (seg, sep) in segments {
        if seg.trim().is_empty() {
            match blocks.last_mut() {
                Some(prev) => {
                    prev.separator.push_str(seg);
                    prev.separator.push_str(sep);
                }
                None => {
                    carry.push_str(seg);
                    carry.push_str(sep);
                }
            }
        } else {
            let mut text = std::mem::take(&mut carry);
            text.push_str(seg);
            blocks.push(CaseBlock {
                text,
                separator: sep.to_string(),
            });
        }
    }
    if blocks.is_empty() {
        return Err(CorpusError::NoCasesFound);
    }
    Ok(blocks)
}

fn split_at_headings<'a>(seg: &'a str, heading: &Regex, sep: &'a str) -> Vec<(&'a str, &'a str)> {
    let mut cuts: Vec<usize> = heading
        .find_iter(seg)
        .map(|m| m.start())
        .filter(|&s| s > 0)
        .collect();
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for cut in cuts {
        out.push((&seg[start..cut], ""));
        start = cut;
    }
    out.push((&seg[start..], sep));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_splitter() -> Splitter {
        Splitter::new(&SplitterConfig::default()).unwrap()
    }

    #[test]
    fn three_cases_with_markers() {
        let raw = "Case A\nopinion a\nEnd of Document\n\nCase B\nopinion b\nEnd of Document\nCase C\nopinion c\nEnd of Document\n";
        let blocks = split_cases(raw, &default_splitter()).unwrap();
        assert_eq!(blocks.len(), 3);
        assert!(blocks[1].text.trim_start().starts_with("Case B"));
        assert_eq!(reassemble(&blocks), raw);
    }

    #[test]
    fn single_case_is_identity() {
        let raw = "Only case\nwith text";
        let blocks = split_cases(raw, &default_splitter()).unwrap();
        assert_eq!(blocks, vec![CaseBlock { text: raw.into(), separator: String::new() }]);
    }

    #[test]
    fn empty_and_blank_inputs_fail() {
        assert!(matches!(split_cases("", &default_splitter()), Err(CorpusError::NoCasesFound)));
        assert!(matches!(split_cases(" \n\t", &default_splitter()), Err(CorpusError::NoCasesFound)));
        assert!(matches!(
            split_cases("End of Document\n", &default_splitter()),
            Err(CorpusError::NoCasesFound)
        ));
    }

    #[test]
    fn heading_mode_splits_before_headings() {
        let s = Splitter::new(&SplitterConfig {
            delimiter: None,
            heading: Some(r"(?m)^\d+ of \d+ DOCUMENTS$".into()),
        })
        .unwrap();
        let raw = "1 of 2 DOCUMENTS\nfirst\n2 of 2 DOCUMENTS\nsecond\n";
        let blocks = split_cases(raw, &s).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1].text, "2 of 2 DOCUMENTS\nsecond\n");
        assert_eq!(reassemble(&blocks), raw);
    }

    #[test]
    fn bad_pattern_reported() {
        let err = Splitter::new(&SplitterConfig {
            delimiter: Some("(".into()),
            heading: None,
        })
        .unwrap_err();
        assert!(matches!(err, CorpusError::InvalidPattern { .. }));
    }

    proptest! {
        #[test]
        fn split_then_reassemble_is_identity(
            parts in proptest::collection::vec("[ a-zA-Z\n]{0,20}", 0..6),
        ) {
            let raw = parts.join("End of Document\n");
            match split_cases(&raw, &default_splitter()) {
                Ok(blocks) => {
                    prop_assert_eq!(reassemble(&blocks), raw);
                    prop_assert!(blocks.iter().all(|b| !b.text.trim().is_empty()));
                }
                Err(_) => prop_assert!(parts.iter().all(|p| p.trim().is_empty())),
            }
        }
    }
}

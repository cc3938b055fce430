use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DocId, Document};

const WORD: &str = r"[A-Z][A-Za-z0-9'’&.\-]*";
const CONNECTOR: &str = r"(?:of|the|and|for|de|la|du|in|on|to|a|an|&)";
const REPORTER: &str = r"(?:U\.\s?S\.|S\.\s?Ct\.|L\.\s?Ed\.(?:\s?2d)?|F\.\s?Supp\.(?:\s?(?:2d|3d))?|F\.\s?App'x|Fed\.\s?Appx\.?|F\.(?:\s?(?:2d|3d|4th))?|U\.\s?S\.\s?P\.\s?Q\.(?:\s?2d)?|WL|Cal\.\s?Rptr\.(?:\s?(?:2d|3d))?|N\.\s?Y\.\s?S\.(?:\s?(?:2d|3d))?)";

/// Patterns used to find citations in opinion text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitationRules {
    /// Must capture `title` (the code title number) and `section`.
    pub statute: String,
    /// Must capture `title` (party names) and `reporter`.
    pub case: String,
    /// Citation signals stripped from the front of a matched case name.
    pub signals: Vec<String>,
}

impl Default for CitationRules {
    fn default() -> Self {
        let name = format!(r"{WORD}(?:,?[ \t]+(?:{CONNECTOR}[ \t]+)*{WORD})*");
        Self {
            statute: r"(?P<title>\d{1,2})\s*U\.\s?S\.\s?C\.(?:\s?A\.)?\s*(?:§{1,2}|[Ss]ec(?:tion|\.)?)\s*(?P<section>\d+[A-Za-z]?(?:\([A-Za-z0-9]{1,4}\))*)".into(),
            case: format!(r"(?P<title>{name}[ \t]+v\.[ \t]+{name}),[ \t]+(?P<reporter>\d{{1,4}}[ \t]+{REPORTER}[ \t]+\d{{1,5}})"),
            signals: ["See also", "See, e.g.,", "See", "But see", "Cf.", "Accord", "Compare", "In", "E.g.,", "Citing", "Quoting"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CitationTarget {
    Case { title: String, reporter: String },
    Statute { key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub source_doc: DocId,
    pub target: CitationTarget,
    /// Verbatim span; `opinion_text[offset..offset + raw_text.len()] == raw_text`.
    pub raw_text: String,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct CitationExtractor {
    statute: Regex,
    case: Regex,
    signals: Vec<String>,
}

impl CitationExtractor {
    pub fn new(rules: &CitationRules) -> Result<Self, CorpusError> {
        let compile = |field: &str, p: &str, groups: &[&str]| {
            let re = Regex::new(p).map_err(|e| CorpusError::InvalidPattern {
                field: field.into(),
                message: e.to_string(),
            })?;
            for g in groups {
                if re.capture_names().flatten().all(|n| n != *g) {
                    return Err(CorpusError::InvalidPattern {
                        field: field.into(),
                        message: format!("pattern has no `{g}` capture group"),
                    });
                }
            }
            Ok(re)
        };
        let mut signals = rules.signals.clone();
        // Longest first so "See also" wins over "See".
        signals.sort_by_key(|s| std::cmp::Reverse(s.len()));
        Ok(Self {
            statute: compile("statute", &rules.statute, &["title", "section"])?,
            case: compile("case", &rules.case, &["title", "reporter"])?,
            signals,
        })
    }

    pub fn extract(&self, doc: &Document) -> Vec<Citation> {
        let text = &doc.opinion_text;
        let mut out = Vec::new();
        for caps in self.statute.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let key = canonical_statute(&caps["title"], &caps["section"]);
            out.push(Citation {
                source_doc: doc.id.clone(),
                target: CitationTarget::Statute { key },
                raw_text: whole.as_str().to_string(),
                offset: whole.start(),
            });
        }
        for caps in self.case.captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let title_m = caps.name("title").unwrap();
            let skip = self.signal_prefix_len(title_m.as_str());
            let title = title_m.as_str()[skip..].trim();
            if !title.contains(" v. ") {
                continue;
            }
            let start = title_m.start() + skip;
            out.push(Citation {
                source_doc: doc.id.clone(),
                target: CitationTarget::Case {
                    title: title.to_string(),
                    reporter: collapse_ws(&caps["reporter"]),
                },
                raw_text: text[start..whole.end()].to_string(),
                offset: start,
            });
        }
        out.sort_by_key(|c| c.offset);
        out
    }

    /// Byte length of any leading citation signals (and following space).
    fn signal_prefix_len(&self, title: &str) -> usize {
        let mut skip = 0;
        loop {
            let rest = &title[skip..];
            let hit = self.signals.iter().find(|s| {
                rest.strip_prefix(s.as_str())
                    .is_some_and(|after| after.starts_with([' ', '\t']))
            });
            match hit {
                Some(s) => {
                    let after = &rest[s.len()..];
                    skip += s.len() + (after.len() - after.trim_start().len());
                }
                None => return skip,
            }
        }
    }
}

/// `17 U.S.C. § 504(c)(2)` → `17USC504(c)(2)`.
fn canonical_statute(title: &str, section: &str) -> String {
    let section: String = section.chars().filter(|c| !c.is_whitespace()).collect();
    format!("{}USC{}", title.trim(), section)
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn extract_citations(doc: &Document, rules: &CitationRules) -> Result<Vec<Citation>, CorpusError> {
    Ok(CitationExtractor::new(rules)?.extract(doc))
}

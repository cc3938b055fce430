use std::collections::BTreeMap;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusError, DocId, Document};

/// Line patterns for header fields. Each pattern is applied to a single line
/// and must capture the field in a group named `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetadataRules {
    /// When absent, the first non-blank header line not claimed by another
    /// rule is the title.
    pub title: Option<String>,
    pub case_number: String,
    pub argued_date: String,
    pub decided_date: String,
    pub court_name: String,
    pub court_district: String,
    pub court_circuit: String,
    /// Line that ends the header; when absent the header ends at the first
    /// line no rule claims.
    pub opinion_marker: Option<String>,
}

impl Default for MetadataRules {
    fn default() -> Self {
        Self {
            title: None,
            case_number: r"(?i)^\s*(?:case|civil action|docket|civil|criminal)\s+(?:no\.?|number)\s*:?\s*(?P<value>\S.*?)\s*$".into(),
            argued_date: r"(?i)^\s*argued\s*:?\s*(?P<value>\S.*?)\s*$".into(),
            decided_date: r"(?i)^\s*(?:decided|filed|date filed)\s*:?\s*(?P<value>\S.*?)\s*$".into(),
            court_name: r"(?i)^\s*court\s*:\s*(?P<value>\S.*?)\s*$".into(),
            court_district: r"(?i)^\s*district\s*:\s*(?P<value>\S.*?)\s*$".into(),
            court_circuit: r"(?i)^\s*circuit\s*:\s*(?P<value>\S.*?)\s*$".into(),
            opinion_marker: Some(r"(?i)^\s*opinion(?:\s+by\b.*)?\s*:?\s*$".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    CaseNumber,
    Argued,
    Decided,
    CourtName,
    District,
    Circuit,
}

#[derive(Debug, Clone)]
pub struct MetadataExtractor {
    fields: Vec<(Field, Regex)>,
    marker: Option<Regex>,
}

impl MetadataExtractor {
    pub fn new(rules: &MetadataRules) -> Result<Self, CorpusError> {
        let compile = |name: &str, p: &str| {
            let re = Regex::new(p).map_err(|e| CorpusError::InvalidPattern {
                field: name.into(),
                message: e.to_string(),
            })?;
            if re.capture_names().flatten().all(|n| n != "value") {
                return Err(CorpusError::InvalidPattern {
                    field: name.into(),
                    message: "pattern has no `value` capture group".into(),
                });
            }
            Ok(re)
        };
        let mut fields = Vec::new();
        if let Some(t) = &rules.title {
            fields.push((Field::Title, compile("title", t)?));
        }
        fields.push((Field::CaseNumber, compile("case_number", &rules.case_number)?));
        fields.push((Field::Argued, compile("argued_date", &rules.argued_date)?));
        fields.push((Field::Decided, compile("decided_date", &rules.decided_date)?));
        fields.push((Field::CourtName, compile("court_name", &rules.court_name)?));
        fields.push((Field::District, compile("court_district", &rules.court_district)?));
        fields.push((Field::Circuit, compile("court_circuit", &rules.court_circuit)?));
        let marker = rules
            .opinion_marker
            .as_deref()
            .map(|p| {
                Regex::new(p).map_err(|e| CorpusError::InvalidPattern {
                    field: "opinion_marker".into(),
                    message: e.to_string(),
                })
            })
            .transpose()?;
        Ok(Self {
            fields,
            marker,
        })
    }

    fn claim(&self, line: &str, found: &BTreeMap<&'static str, String>) -> Option<(Field, String)> {
        self.fields.iter().find_map(|(field, re)| {
            if found.contains_key(field_key(*field)) {
                return None;
            }
            re.captures(line)
                .and_then(|c| c.name("value"))
                .map(|m| (*field, m.as_str().trim().to_string()))
                .filter(|(_, v)| !v.is_empty())
        })
    }

    pub fn extract(&self, raw_case: &str) -> Result<Document, CorpusError> {
        let lines = lines_with_offsets(raw_case);
        let marker_line = self.marker.as_ref().and_then(|m| {
            lines.iter().position(|(_, l)| m.is_match(l))
        });
        let explicit_title = self.fields.iter().any(|(f, _)| *f == Field::Title);

        let mut found: BTreeMap<&'static str, String> = BTreeMap::new();
        let mut body_start = raw_case.len();
        for (i, (offset, line)) in lines.iter().enumerate() {
            if Some(i) == marker_line {
                body_start = offset + line.len();
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            if let Some((field, value)) = self.claim(line, &found) {
                found.insert(field_key(field), value);
                continue;
            }
            if !explicit_title && !found.contains_key("title") {
                found.insert("title", line.trim().to_string());
                continue;
            }
            if marker_line.is_none() {
                body_start = *offset;
                break;
            }
        }

        let opinion_text = raw_case[body_start..].trim().to_string();
        if opinion_text.is_empty() {
            return Err(CorpusError::MissingOpinionBody);
        }

        let mut unparsed_dates = BTreeMap::new();
        let mut date = |key: &'static str| -> Option<NaiveDate> {
            let raw = found.get(key)?;
            let parsed = parse_date(raw);
            if parsed.is_none() {
                unparsed_dates.insert(key.to_string(), raw.clone());
            }
            parsed
        };
        let argued_date = date("argued_date");
        let decided_date = date("decided_date");

        let take = |key: &str| found.get(key).cloned().unwrap_or_default();
        let case_title = take("title");
        let case_number = take("case_number");
        let id = stable_id(&case_title, &case_number, &opinion_text);
        Ok(Document {
            id,
            case_title,
            case_number,
            argued_date,
            decided_date,
            court_name: take("court_name"),
            court_district: take("court_district"),
            court_circuit: take("court_circuit"),
            opinion_text,
            unparsed_dates,
        })
    }
}

fn field_key(field: Field) -> &'static str {
    match field {
        Field::Title => "title",
        Field::CaseNumber => "case_number",
        Field::Argued => "argued_date",
        Field::Decided => "decided_date",
        Field::CourtName => "court_name",
        Field::District => "court_district",
        Field::Circuit => "court_circuit",
    }
}

fn lines_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        out.push((offset, line.trim_end_matches(['\n', '\r'])));
        offset += line.len();
    }
    out
}

fn stable_id(title: &str, number: &str, opinion: &str) -> DocId {
    let mut h = Sha256::new();
    for part in [title, number, opinion] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    DocId(format!("doc-{}", &hex::encode(h.finalize())[..12]))
}

/// Parses a header line into a `Document`.
pub fn extract_metadata(raw_case: &str, rules: &MetadataRules) -> Result<Document, CorpusError> {
    MetadataExtractor::new(rules)?.extract(raw_case)
}

const DATE_FORMATS: &[&str] = &[
    "%B %d, %Y",
    "%b %d, %Y",
    "%B %d %Y",
    "%b %d %Y",
    "%d %B %Y",
    "%d %b %Y",
    "%Y-%m-%d",
    "%m/%d/%Y",
];

/// Parses the date formats found in opinion headers, e.g. "May 2, 2006",
/// "Feb. 3, 2010", "2006-05-02", "05/02/2006". Trailing annotations such as
/// ", Decided" are ignored.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let cleaned = raw
        .replace("Sept.", "Sep")
        .replace("Sept ", "Sep ")
        .replace('.', "")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let cleaned = cleaned.trim_end_matches([',', ';', ' ']);
    let try_all = |s: &str| DATE_FORMATS.iter().find_map(|f| NaiveDate::parse_from_str(s, f).ok());
    if let Some(d) = try_all(cleaned) {
        return Some(d);
    }
    // Fall back to the longest prefix that parses ("May 2, 2006, Decided").
    let words: Vec<&str> = cleaned.split(' ').collect();
    (1..words.len()).rev().find_map(|n| try_all(words[..n].join(" ").trim_end_matches(',')))
}

use super::{
    validate_example, AnnotatedExample, Dataset, DatasetError, Label, Origin, PerturbationType,
    RationaleSet, Task, Token,
};
use crate::jsonl::numbered_lines;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{HashMap, HashSet};
use std::io::BufRead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Reject the whole file on the first violation.
    #[default]
    Strict,
    /// Skip offending lines and report them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub dataset: Dataset,
    /// Lines dropped in lenient mode; always empty in strict mode.
    pub skipped: Vec<LineIssue>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: perturbed record references missing original {id:?}")]
    DanglingPerturbationLink { line: usize, id: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {id:?} is perturbed from {target:?}, which is itself perturbed")]
    ChainedPerturbation {
        line: usize,
        id: String,
        target: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    task: Task,
    lang: String,
    segments: Vec<Vec<String>>,
    label: Value,
    rationale_sets: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perturbed_from: Option<Link>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Link {
    id: String,
    #[serde(rename = "type")]
    kind: PerturbationType,
}

fn label_from_json(task: Task, v: &Value) -> Result<Label, String> {
    match task {
        Task::Sa | Task::Sts => match v {
            Value::String(s) => Ok(Label::Class(s.clone())),
            _ => Err(format!("label for {task} must be a class name string")),
        },
        Task::Mrc => {
            let obj = v
                .as_object()
                .ok_or("label for mrc must be {\"start\",\"end\"} or {\"unanswerable\": true}")?;
            if obj.get("unanswerable").and_then(Value::as_bool) == Some(true) {
                return Ok(Label::Unanswerable);
            }
            let field = |k: &str| {
                obj.get(k)
                    .and_then(Value::as_u64)
                    .map(|x| x as usize)
                    .ok_or_else(|| format!("mrc label needs non-negative integer {k:?}"))
            };
            Ok(Label::Span {
                start: field("start")?,
                end: field("end")?,
            })
        }
    }
}

fn label_to_json(label: &Label) -> Value {
    match label {
        Label::Class(c) => Value::String(c.clone()),
        Label::Span { start, end } => serde_json::json!({ "start": start, "end": end }),
        Label::Unanswerable => serde_json::json!({ "unanswerable": true }),
    }
}

fn example_from_record(rec: Record) -> Result<AnnotatedExample, String> {
    let label = label_from_json(rec.task, &rec.label)?;
    let mut ex = AnnotatedExample::from_texts(
        rec.id,
        rec.task,
        rec.segments,
        label,
        rec.rationale_sets
            .into_iter()
            .map(RationaleSet::new)
            .collect(),
    );
    ex.language = rec.lang;
    if let Some(link) = rec.perturbed_from {
        ex.origin = Origin::PerturbedFrom {
            original_id: link.id,
            kind: link.kind,
        };
    }
    let violations = validate_example(&ex);
    if !violations.is_empty() {
        let all: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(all.join("; "));
    }
    Ok(ex)
}

fn record_from_example(ex: &AnnotatedExample) -> Record {
    Record {
        id: ex.id.clone(),
        task: ex.task,
        lang: ex.language.clone(),
        segments: ex
            .segments
            .iter()
            .map(|s| s.iter().map(|t: &Token| t.text.clone()).collect())
            .collect(),
        label: label_to_json(&ex.label),
        rationale_sets: ex
            .rationale_sets
            .iter()
            .map(|s| s.indices().to_vec())
            .collect(),
        perturbed_from: match &ex.origin {
            Origin::Original => None,
            Origin::PerturbedFrom { original_id, kind } => Some(Link {
                id: original_id.clone(),
                kind: *kind,
            }),
        },
    }
}

/// Parse a line-delimited dataset file.
///
/// Perturbation links may point forward; they are resolved after every line
/// has been read.
pub fn parse_dataset<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParseOutcome, CorpusError> {
    let mut skipped = Vec::new();
    let mut parsed: Vec<(usize, AnnotatedExample)> = Vec::new();
    let mut seen = HashSet::new();

    for (line, text) in numbered_lines(reader)? {
        let result = serde_json::from_str::<Record>(&text)
            .map_err(|e| e.to_string())
            .and_then(example_from_record);
        let ex = match (result, mode) {
            (Ok(ex), _) => ex,
            (Err(reason), ParseMode::Strict) => {
                return Err(CorpusError::MalformedRecord { line, reason })
            }
            (Err(reason), ParseMode::Lenient) => {
                skipped.push(LineIssue { line, reason });
                continue;
            }
        };
        if !seen.insert(ex.id.clone()) {
            match mode {
                ParseMode::Strict => return Err(CorpusError::DuplicateId { line, id: ex.id }),
                ParseMode::Lenient => {
                    skipped.push(LineIssue {
                        line,
                        reason: format!("duplicate id {:?}", ex.id),
                    });
                    continue;
                }
            }
        }
        parsed.push((line, ex));
    }

    // Resolve links against the surviving originals.
    let originals: HashMap<&str, bool> = parsed
        .iter()
        .map(|(_, ex)| (ex.id.as_str(), ex.is_original()))
        .collect();
    let mut link_issues: Vec<(usize, CorpusError)> = Vec::new();
    for (line, ex) in &parsed {
        if let Origin::PerturbedFrom { original_id, .. } = &ex.origin {
            match originals.get(original_id.as_str()) {
                None => link_issues.push((
                    *line,
                    CorpusError::DanglingPerturbationLink {
                        line: *line,
                        id: original_id.clone(),
                    },
                )),
                Some(false) => link_issues.push((
                    *line,
                    CorpusError::ChainedPerturbation {
                        line: *line,
                        id: ex.id.clone(),
                        target: original_id.clone(),
                    },
                )),
                Some(true) => {}
            }
        }
    }
    if !link_issues.is_empty() {
        if mode == ParseMode::Strict {
            let (_, err) = link_issues.swap_remove(0);
            return Err(err);
        }
        let bad: HashSet<usize> = link_issues.iter().map(|(l, _)| *l).collect();
        for (line, err) in link_issues {
            skipped.push(LineIssue {
                line,
                reason: err.to_string(),
            });
        }
        parsed.retain(|(line, _)| !bad.contains(line));
    }
    skipped.sort_by_key(|i| i.line);

    let dataset = Dataset::new(parsed.into_iter().map(|(_, ex)| ex).collect()).map_err(|e| {
        // Unreachable after the checks above; map for completeness.
        let line = 0;
        match e {
            DatasetError::DuplicateId(id) => CorpusError::DuplicateId { line, id },
            DatasetError::DanglingPerturbationLink(id) => {
                CorpusError::DanglingPerturbationLink { line, id }
            }
            DatasetError::ChainedPerturbation { id, target } => {
                CorpusError::ChainedPerturbation { line, id, target }
            }
        }
    })?;
    Ok(ParseOutcome { dataset, skipped })
}

pub fn parse_dataset_str(text: &str) -> Result<Dataset, CorpusError> {
    parse_dataset(text.as_bytes(), ParseMode::Strict).map(|o| o.dataset)
}

/// Serialize in file order, one JSON object per line.
pub fn serialize_dataset(ds: &Dataset) -> String {
    let records: Vec<Record> = ds.examples().iter().map(record_from_example).collect();
    crate::jsonl::to_jsonl(&records)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORIG: &str = r#"{"id":"o1","task":"sa","lang":"en","segments":[["a","good","film"]],"label":"pos","rationale_sets":[[1]]}"#;
    const PERT: &str = r#"{"id":"p1","task":"sa","lang":"en","segments":[["a","great","film"]],"label":"pos","rationale_sets":[[1]],"perturbed_from":{"id":"o1","type":"important"}}"#;

    #[test]
    fn minimal_pair() {
        let ds = parse_dataset_str(&format!("{ORIG}\n{PERT}\n")).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.pairs().len(), 1);
        assert_eq!(
            ds.pairs()[0].kind,
            PerturbationType::ImportantWordAlteration
        );
    }

    #[test]
    fn forward_links_resolve() {
        let ds = parse_dataset_str(&format!("{PERT}\n{ORIG}\n")).unwrap();
        assert_eq!(ds.pairs()[0].original_id, "o1");
    }

    #[test]
    fn index_equal_to_length_is_malformed() {
        let bad = ORIG.replace("[[1]]", "[[3]]");
        let err = parse_dataset_str(&bad).unwrap_err();
        match err {
            CorpusError::MalformedRecord { line, reason } => {
                assert_eq!(line, 1);
                assert!(reason.contains("rationale_sets"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_link() {
        let pert = PERT.replace(r#""id":"o1","type""#, r#""id":"x9","type""#);
        let err = parse_dataset_str(&format!("{ORIG}\n{pert}\n")).unwrap_err();
        assert!(
            matches!(err, CorpusError::DanglingPerturbationLink { ref id, line: 2 } if id == "x9")
        );
    }

    #[test]
    fn duplicate_id() {
        let err = parse_dataset_str(&format!("{ORIG}\n{ORIG}\n")).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn lenient_skips_and_reports() {
        let pert = PERT.replace(r#""id":"o1","type""#, r#""id":"x9","type""#);
        let text = format!("{ORIG}\nnot json\n{pert}\n");
        let out = parse_dataset(text.as_bytes(), ParseMode::Lenient).unwrap();
        assert_eq!(out.dataset.len(), 1);
        let lines: Vec<usize> = out.skipped.iter().map(|i| i.line).collect();
        assert_eq!(lines, vec![2, 3]);
    }

    #[test]
    fn mrc_labels_round_trip() {
        let text = concat!(
            r#"{"id":"m1","task":"mrc","lang":"en","segments":[["who","won"],["the","home","team","won"]],"label":{"end":2,"start":1},"rationale_sets":[[3,4]]}"#,
            "\n",
            r#"{"id":"m2","task":"mrc","lang":"en","segments":[["who","lost"],["nobody","knows"]],"label":{"unanswerable":true},"rationale_sets":[[2]]}"#,
            "\n"
        );
        let ds = parse_dataset_str(text).unwrap();
        assert_eq!(
            ds.get("m1").unwrap().label,
            Label::Span { start: 1, end: 2 }
        );
        assert_eq!(ds.get("m2").unwrap().label, Label::Unanswerable);
        // Object keys are written in sorted order.
        assert_eq!(serialize_dataset(&ds), text);
    }

    #[test]
    fn sa_label_must_be_string() {
        let bad = ORIG.replace(r#""label":"pos""#, r#""label":3"#);
        assert!(matches!(
            parse_dataset_str(&bad),
            Err(CorpusError::MalformedRecord { .. })
        ));
    }
}

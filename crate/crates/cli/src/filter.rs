//! Declarative dataset filters for building evaluation sets.

use serde_json::Value;
use sqa_core::docstore::on_domain;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("record {index} has no `{field}` field")]
    MissingField { index: usize, field: String },
}

/// Which filters to apply. Field names are fixed: `question`, `answer`,
/// `document` and `results` (a list of URLs).
#[derive(Debug, Clone, Default)]
pub struct FilterRules {
    /// Keep only records whose answer contains a URL.
    pub require_url: bool,
    /// Remove results on this domain from each record.
    pub exclude_domain: Option<String>,
    /// Keep answers whose word count lies within the 5th..95th percentile of
    /// these lengths, both ends included.
    pub length_reference: Option<Vec<f64>>,
    /// Drop records sharing a question, answer or document with these.
    pub train: Vec<Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterReport {
    pub kept: Vec<Value>,
    pub no_url: usize,
    pub out_of_length: usize,
    pub overlap: usize,
}

fn field<'a>(rec: &'a Value, index: usize, name: &str) -> Result<&'a Value, FilterError> {
    rec.get(name).ok_or_else(|| FilterError::MissingField {
        index,
        field: name.to_owned(),
    })
}

fn text<'a>(rec: &'a Value, index: usize, name: &str) -> Result<&'a str, FilterError> {
    field(rec, index, name)?.as_str().ok_or_else(|| FilterError::MissingField {
        index,
        field: name.to_owned(),
    })
}

pub fn contains_url(text: &str) -> bool {
    text.contains("http://") || text.contains("https://") || text.contains("www.")
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn filter_dataset(records: Vec<Value>, rules: &FilterRules) -> Result<FilterReport, FilterError> {
    let window = rules.length_reference.as_ref().filter(|r| !r.is_empty()).map(|r| {
        let mut sorted = r.clone();
        sorted.sort_by(f64::total_cmp);
        (percentile(&sorted, 5.0), percentile(&sorted, 95.0))
    });
    let seen = |name: &str| -> std::collections::HashSet<String> {
        rules
            .train
            .iter()
            .filter_map(|t| t.get(name).and_then(Value::as_str).map(str::to_owned))
            .collect()
    };
    let train_fields: Vec<(&str, std::collections::HashSet<String>)> =
        ["question", "answer", "document"].iter().map(|&f| (f, seen(f))).collect();

    let mut report = FilterReport::default();
    for (i, mut rec) in records.into_iter().enumerate() {
        if rules.require_url && !contains_url(text(&rec, i, "answer")?) {
            report.no_url += 1;
            continue;
        }
        if let Some((lo, hi)) = window {
            let n = word_count(text(&rec, i, "answer")?) as f64;
            if n < lo || n > hi {
                report.out_of_length += 1;
                continue;
            }
        }
        if !rules.train.is_empty() {
            let mut hit = false;
            for (name, set) in &train_fields {
                if let Some(v) = rec.get(*name).and_then(Value::as_str) {
                    hit |= set.contains(v);
                }
            }
            if hit {
                report.overlap += 1;
                continue;
            }
        }
        if let Some(domain) = &rules.exclude_domain {
            let results = field(&rec, i, "results")?
                .as_array()
                .ok_or_else(|| FilterError::MissingField { index: i, field: "results".into() })?
                .iter()
                .filter(|u| u.as_str().is_none_or(|u| !on_domain(u, domain)))
                .cloned()
                .collect();
            rec["results"] = Value::Array(results);
        }
        report.kept.push(rec);
    }
    Ok(report)
}

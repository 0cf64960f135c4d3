//! Audit CSV ingestion.
//!
//! Input is UTF-8 CSV with a header naming `group`, `y_pred` and, unless
//! the metric is DP, `y_true`. Column order is free and extra columns are
//! ignored. Binary fields accept `1`/`true`/`+` and `0`/`false`/`-`/`−`
//! (case-insensitive, surrounding whitespace ignored). Rows with an empty
//! required field are skipped and counted.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use fairsize_core::ConfusionCounts;

use crate::error::{CliError, CliResult};

/// Per-group confusion counts of one dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditData {
    pub groups: BTreeMap<String, ConfusionCounts>,
    pub skipped_rows: usize,
    pub has_true_labels: bool,
}

/// Two groups picked out of a dataset, privileged first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPair {
    pub privileged: String,
    pub comparison: String,
    pub c1: ConfusionCounts,
    pub c2: ConfusionCounts,
    pub warnings: Vec<String>,
}

pub fn parse_binary(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "+" => Some(true),
        "0" | "false" | "-" | "\u{2212}" => Some(false),
        _ => None,
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().trim_start_matches('\u{feff}') == name)
}

/// Read and tally a dataset. `need_true_labels` makes `y_true` mandatory.
pub fn read_counts<R: Read>(reader: R, need_true_labels: bool) -> CliResult<AuditData> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    let group_col = column(&headers, "group")
        .ok_or_else(|| CliError::Data("CSV is missing the required column `group`".into()))?;
    let pred_col = column(&headers, "y_pred")
        .ok_or_else(|| CliError::Data("CSV is missing the required column `y_pred`".into()))?;
    let true_col = column(&headers, "y_true");
    if need_true_labels && true_col.is_none() {
        return Err(CliError::Data(
            "CSV is missing the column `y_true`, which this metric requires".into(),
        ));
    }
    let use_true = need_true_labels && true_col.is_some();

    let mut data = AuditData {
        has_true_labels: use_true,
        ..AuditData::default()
    };
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let group = field(group_col);
        let pred = field(pred_col);
        let truth = true_col.map(field).unwrap_or("");
        if group.is_empty() || pred.is_empty() || (use_true && truth.is_empty()) {
            data.skipped_rows += 1;
            continue;
        }
        let parse = |name: &str, v: &str| {
            parse_binary(v).ok_or_else(|| {
                CliError::Data(format!(
                    "line {line}: {name} value {v:?} is not binary (expected 0/1, true/false or +/-)"
                ))
            })
        };
        let y_pred = parse("y_pred", pred)?;
        // DP only looks at predictions; the label cell is irrelevant.
        let y_true = if use_true { parse("y_true", truth)? } else { false };
        data.groups
            .entry(group.to_string())
            .or_default()
            .record(y_true, y_pred);
    }
    Ok(data)
}

pub fn read_counts_from_path(path: &Path, need_true_labels: bool) -> CliResult<AuditData> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    read_counts(file, need_true_labels)
}

impl AuditData {
    /// Select the privileged group and the group it is compared with.
    pub fn pair(&self, privileged: &str, comparison: Option<&str>) -> CliResult<GroupPair> {
        let mut warnings = Vec::new();
        if self.skipped_rows > 0 {
            warnings.push(format!(
                "{} row(s) with missing required fields were rejected",
                self.skipped_rows
            ));
        }
        let labels: Vec<&String> = self.groups.keys().collect();
        let get = |label: &str| {
            self.groups.get(label).copied().ok_or_else(|| {
                CliError::Data(format!(
                    "group {label:?} not found in data (groups present: {labels:?})"
                ))
            })
        };
        let c1 = get(privileged)?;
        let comparison = match comparison {
            Some(c) => c.to_string(),
            None => match labels.len() {
                2 => labels
                    .iter()
                    .find(|l| l.as_str() != privileged)
                    .map(|l| l.to_string())
                    .expect("two distinct labels"),
                n if n < 2 => {
                    return Err(CliError::Data(format!(
                        "data holds {n} group(s); two are required"
                    )))
                }
                n => {
                    return Err(CliError::Data(format!(
                        "data holds {n} groups {labels:?}; pass --comparison-group to pick the group compared with {privileged:?}"
                    )))
                }
            },
        };
        if comparison == privileged {
            return Err(CliError::Data(
                "privileged and comparison groups must differ".into(),
            ));
        }
        let c2 = get(&comparison)?;
        let ignored: usize = self
            .groups
            .iter()
            .filter(|(k, _)| k.as_str() != privileged && **k != comparison)
            .map(|(_, c)| c.total() as usize)
            .sum();
        if ignored > 0 {
            warnings.push(format!("{ignored} row(s) from other groups were ignored"));
        }
        Ok(GroupPair {
            privileged: privileged.to_string(),
            comparison,
            c1,
            c2,
            warnings,
        })
    }
}

/// Write one row per individual, cells in tp, fp, fn, tn order per group.
pub fn write_dataset<W: Write>(out: W, groups: &[(&str, ConfusionCounts)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "y_true", "y_pred"])?;
    for (label, c) in groups {
        for (count, y_true, y_pred) in [(c.tp, "1", "1"), (c.fp, "0", "1"), (c.fn_, "1", "0"), (c.tn, "0", "0")] {
            for _ in 0..count {
                w.write_record([*label, y_true, y_pred])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

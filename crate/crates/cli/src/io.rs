//! File formats of the command-line tool: CSV datasets, JSON artifacts and
//! atomic output writes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ovo_core::{ClassSet, LabeledDataset};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Writes `contents` to a temporary file next to `path`, then renames it
/// over `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, field: &str) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input {
        field: field.to_string(),
        message: format!("{}: {e}", path.display()),
    })
}

/// Rows of a dataset CSV.
///
/// Columns `f0 .. f{d-1}` hold features; `label` (one class name) or
/// `labels` (semicolon-separated names) hold annotations; an optional `id`
/// column names each row, which otherwise is identified by its index.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub label_names: Option<Vec<Vec<String>>>,
}

impl CsvData {
    /// Class set of the annotations: `known` when given, otherwise the
    /// sorted distinct names.
    pub fn dataset(&self, known: Option<&ClassSet>) -> Result<LabeledDataset, CliError> {
        let names = self.label_names.as_ref().ok_or_else(|| CliError::Input {
            field: "label".into(),
            message: "dataset has no `label` or `labels` column".into(),
        })?;
        let classes = match known {
            Some(c) => c.clone(),
            None => {
                let distinct: BTreeSet<&String> = names.iter().flatten().collect();
                ClassSet::new(distinct.into_iter().cloned().collect()).map_err(|e| CliError::Input {
                    field: "label".into(),
                    message: e.to_string(),
                })?
            }
        };
        let labels = self.label_indices(&classes)?;
        LabeledDataset::new(classes, self.features.clone(), labels).map_err(CliError::Core)
    }

    pub fn label_indices(&self, classes: &ClassSet) -> Result<Vec<Vec<usize>>, CliError> {
        let names = self.label_names.as_ref().ok_or_else(|| CliError::Input {
            field: "label".into(),
            message: "dataset has no `label` or `labels` column".into(),
        })?;
        names
            .iter()
            .enumerate()
            .map(|(row, set)| {
                set.iter()
                    .map(|n| {
                        classes.index_of(n).ok_or_else(|| CliError::Input {
                            field: "label".into(),
                            message: format!("row {row}: unknown class {n:?}"),
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn read_dataset_csv(path: &Path) -> Result<CsvData, CliError> {
    let bad = |message: String| CliError::Input {
        field: "input".into(),
        message: format!("{}: {message}", path.display()),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();

    let mut feature_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, h)| {
            h.strip_prefix('f')
                .and_then(|n| n.parse::<usize>().ok())
                .map(|n| (n, col))
        })
        .collect();
    feature_cols.sort_unstable();
    if feature_cols.is_empty() {
        return Err(bad("no feature columns f0..".into()));
    }
    if feature_cols.iter().enumerate().any(|(i, &(n, _))| i != n) {
        return Err(bad("feature columns must be f0..f{d-1} without gaps".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_col = find("id");
    let label_col = find("label");
    let labels_col = find("labels");
    if label_col.is_some() && labels_col.is_some() {
        return Err(bad("use either `label` or `labels`, not both".into()));
    }

    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut label_names: Option<Vec<Vec<String>>> = (label_col.is_some() || labels_col.is_some()).then(Vec::new);
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let x = feature_cols
            .iter()
            .map(|&(n, col)| {
                record
                    .get(col)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("row {row}: bad value in column f{n}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        features.push(x);
        ids.push(match id_col {
            Some(c) => record.get(c).unwrap_or_default().to_string(),
            None => row.to_string(),
        });
        if let Some(names) = label_names.as_mut() {
            let set: Vec<String> = match (label_col, labels_col) {
                (Some(c), _) => vec![record.get(c).unwrap_or_default().to_string()],
                (None, Some(c)) => record
                    .get(c)
                    .unwrap_or_default()
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                (None, None) => unreachable!(),
            };
            if set.iter().any(|s| s.is_empty()) {
                return Err(bad(format!("row {row}: empty label")));
            }
            names.push(set);
        }
    }
    if features.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(CsvData {
        ids,
        features,
        label_names,
    })
}

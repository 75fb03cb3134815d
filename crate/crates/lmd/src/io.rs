//! Deterministic persistence: JSON model containers, CSV datasets and
//! report bundles. JSON objects are emitted with lexicographic key order
//! and shortest round-trip float encoding, so identical inputs always give
//! byte-identical files.

use crate::error::{Error, Result};
use crate::graph::DataSet;
use crate::linalg::Matrix;
use crate::mlp::{Activation, FinalActivation, MLPModel};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const MODEL_FORMAT_VERSION: &str = "lmd-model/1";
pub const REPORT_FORMAT_VERSION: &str = "lmd-report/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerPayload {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format_version: String,
    pub activation: Activation,
    pub final_activation: FinalActivation,
    pub layers: Vec<LayerPayload>,
}

impl ModelContainer {
    pub fn from_model(model: &MLPModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            activation: model.activation,
            final_activation: model.final_activation,
            layers: model
                .layers
                .iter()
                .map(|w| LayerPayload {
                    rows: w.rows(),
                    cols: w.cols(),
                    data: w.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self, path: &str) -> Result<MLPModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_string(),
                msg: format!(
                    "unsupported format_version {:?}, expected {MODEL_FORMAT_VERSION:?}",
                    self.format_version
                ),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.into_iter().enumerate() {
            let m = Matrix::new(l.rows, l.cols, l.data).map_err(|e| Error::Format {
                path: path.to_string(),
                msg: format!("layer {i}: {e}"),
            })?;
            layers.push(m);
        }
        MLPModel::from_layers(layers, self.activation, self.final_activation).map_err(|e| {
            Error::Format {
                path: path.to_string(),
                msg: e.to_string(),
            }
        })
    }
}

/// Serialize through `serde_json::Value` so object keys come out in
/// lexicographic order regardless of struct field order; pretty-printed
/// with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format {
        path: "<memory>".into(),
        msg: e.to_string(),
    })?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Format {
        path: "<memory>".into(),
        msg: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn save_model(model: &MLPModel, path: impl AsRef<Path>) -> Result<()> {
    let text = to_canonical_json(&ModelContainer::from_model(model))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MLPModel> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path)?;
    let container: ModelContainer =
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path_str.clone(),
            msg: format!("malformed model document: {e}"),
        })?;
    container.into_model(&path_str)
}

/// CSV with a header row; feature columns are prefixed `x`, target columns
/// `y`. Row order is preserved.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<DataSet> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| Error::Format {
            path: path_str.clone(),
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format {
            path: path_str.clone(),
            msg: e.to_string(),
        })?
        .clone();
    let mut x_cols = Vec::new();
    let mut y_cols = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        let name = name.trim();
        if name.starts_with('x') {
            x_cols.push(i);
        } else if name.starts_with('y') {
            y_cols.push(i);
        } else {
            return Err(Error::Format {
                path: path_str,
                msg: format!("column {:?} is neither x- nor y-prefixed", name),
            });
        }
    }
    if x_cols.is_empty() {
        return Err(Error::Format {
            path: path_str,
            msg: "no x-prefixed feature columns".into(),
        });
    }

    let mut points = Vec::new();
    let mut targets = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Format {
            path: path_str.clone(),
            msg: format!("row {row_no}: {e}"),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Format {
                path: path_str,
                msg: format!(
                    "row {row_no}: ragged row with {} cells, expected {}",
                    record.len(),
                    headers.len()
                ),
            });
        }
        let parse = |cols: &[usize]| -> Result<Vec<f64>> {
            cols.iter()
                .map(|&c| {
                    record[c].trim().parse::<f64>().map_err(|_| Error::Format {
                        path: path_str.clone(),
                        msg: format!("row {row_no}: non-numeric cell {:?}", &record[c]),
                    })
                })
                .collect()
        };
        points.push(parse(&x_cols)?);
        targets.push(parse(&y_cols)?);
    }
    if points.is_empty() {
        return Err(Error::Format {
            path: path_str,
            msg: "zero data rows".into(),
        });
    }
    let points = Matrix::from_rows(&points)?;
    let targets = if y_cols.is_empty() {
        None
    } else {
        Some(Matrix::from_rows(&targets)?)
    };
    DataSet::new(points, targets)
}

pub fn save_dataset(data: &DataSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let d = data.points.cols();
    let o = data.targets.as_ref().map(|t| t.cols()).unwrap_or(0);
    let header: Vec<String> = (1..=d)
        .map(|i| format!("x{i}"))
        .chain((1..=o).map(|i| format!("y{i}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..data.len() {
        let mut cells: Vec<String> = data.points.row(r).iter().map(|v| format!("{v}")).collect();
        if let Some(t) = &data.targets {
            cells.extend(t.row(r).iter().map(|v| format!("{v}")));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportKind {
    #[serde(rename = "LAYER")]
    Layer,
    #[serde(rename = "CAPACITY")]
    Capacity,
    #[serde(rename = "ENCODING")]
    Encoding,
    #[serde(rename = "CORRESPONDENCE")]
    Correspondence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Echo of the resolved configuration that produced the payload.
    pub config: serde_json::Value,
    pub tool_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format_version: String,
    pub kind: ReportKind,
    pub payload: serde_json::Value,
    pub provenance: Provenance,
}

impl ReportBundle {
    pub fn new<T: Serialize>(kind: ReportKind, payload: &T, provenance: Provenance) -> Result<Self> {
        Ok(Self {
            format_version: REPORT_FORMAT_VERSION.to_string(),
            kind,
            payload: serde_json::to_value(payload).map_err(|e| Error::Format {
                path: "<memory>".into(),
                msg: e.to_string(),
            })?,
            provenance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitForm {
    Json,
    Csv,
}

pub fn emit_report(bundle: &ReportBundle, path: impl AsRef<Path>, form: EmitForm) -> Result<()> {
    match form {
        EmitForm::Json => {
            let text = to_canonical_json(bundle)?;
            fs::write(path, text)?;
            Ok(())
        }
        EmitForm::Csv => {
            let text = bundle_to_csv(bundle)?;
            fs::write(path, text)?;
            Ok(())
        }
    }
}

fn json_f64(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Fixed documented column orders per kind; LF endings and a trailing
/// newline.
fn bundle_to_csv(bundle: &ReportBundle) -> Result<String> {
    let p = &bundle.payload;
    let mut out = String::new();
    match bundle.kind {
        ReportKind::Capacity => {
            out.push_str("stored_count,rate\n");
            let counts = p["stored_counts"].as_array().cloned().unwrap_or_default();
            let rates = p["retrieval_rates"].as_array().cloned().unwrap_or_default();
            for (c, r) in counts.iter().zip(&rates) {
                out.push_str(&format!("{},{}\n", c, json_f64(r)));
            }
        }
        ReportKind::Layer => {
            out.push_str("layer_index,n_prime,trivial_residual\n");
            let records = p.as_array().cloned().unwrap_or_else(|| vec![p.clone()]);
            for rec in &records {
                let layer = rec["layer_index"].as_u64().unwrap_or(0);
                let curve = rec["trivial_residuals"].as_array().cloned().unwrap_or_default();
                for (k, v) in curve.iter().enumerate() {
                    out.push_str(&format!("{},{},{}\n", layer, k + 1, json_f64(v)));
                }
            }
        }
        ReportKind::Encoding => {
            out.push_str("epsilon_train,delta_probe,epsilon_perturbed,passed\n");
            out.push_str(&format!(
                "{},{},{},{}\n",
                json_f64(&p["epsilon_train"]),
                json_f64(&p["delta_probe"]),
                json_f64(&p["epsilon_perturbed"]),
                p["passed"].as_bool().unwrap_or(false)
            ));
        }
        ReportKind::Correspondence => {
            return Err(Error::InvalidArgument(
                "correspondence reports have no CSV form; use JSON".into(),
            ));
        }
    }
    Ok(out)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ReportBundle> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path)?;
    let bundle: ReportBundle = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path_str.clone(),
        msg: format!("malformed report document: {e}"),
    })?;
    if bundle.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Format {
            path: path_str,
            msg: format!(
                "unsupported format_version {:?}, expected {REPORT_FORMAT_VERSION:?}",
                bundle.format_version
            ),
        });
    }
    Ok(bundle)
}

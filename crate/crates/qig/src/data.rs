//! Interventional datasets: per-context sample matrices with declared
//! singleton targets, plus CSV/manifest ingestion.
//!
//! Second moments are uncentered throughout; data are modeled as mean zero.
//! An optional preprocessing step subtracts per-context column means.

use crate::{QigError, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// One experimental context: `target` is absent for the observational
/// context and names the intervened variable otherwise.
#[derive(Debug, Clone)]
pub struct Context {
    pub target: Option<String>,
    /// n_k x p samples, columns in dataset variable order.
    pub data: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct InterventionalDataset {
    variables: Vec<String>,
    contexts: Vec<Context>,
    /// Cached uncentered second moment per context.
    moments: Vec<DMatrix<f64>>,
}

impl InterventionalDataset {
    pub fn new(variables: Vec<String>, contexts: Vec<Context>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(QigError::InvalidData("no contexts".into()));
        }
        if contexts[0].target.is_some() {
            return Err(QigError::InvalidData(
                "context 0 must be observational (no target)".into(),
            ));
        }
        let p = variables.len();
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        for (k, ctx) in contexts.iter().enumerate() {
            if ctx.data.nrows() == 0 {
                return Err(QigError::InvalidData(format!("context {k} has no samples")));
            }
            if ctx.data.ncols() != p {
                return Err(QigError::InvalidData(format!(
                    "context {k} has {} columns, expected {p}",
                    ctx.data.ncols()
                )));
            }
            if let Some(t) = &ctx.target {
                if k == 0 {
                    unreachable!();
                }
                if !variables.contains(t) {
                    return Err(QigError::UnknownLabel(t.clone()));
                }
                if !seen.insert(t) {
                    return Err(QigError::InvalidData(format!("duplicate target `{t}`")));
                }
            } else if k > 0 {
                return Err(QigError::InvalidData(format!(
                    "context {k} lacks a target; only context 0 is observational"
                )));
            }
        }
        let moments = contexts
            .iter()
            .map(|c| {
                let n = c.data.nrows() as f64;
                c.data.transpose() * &c.data / n
            })
            .collect();
        Ok(InterventionalDataset {
            variables,
            contexts,
            moments,
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn sample_size(&self, k: usize) -> usize {
        self.contexts[k].data.nrows()
    }

    pub fn total_samples(&self) -> usize {
        self.contexts.iter().map(|c| c.data.nrows()).sum()
    }

    /// Targets in context order (contexts 1..K).
    pub fn targets(&self) -> Vec<String> {
        self.contexts
            .iter()
            .filter_map(|c| c.target.clone())
            .collect()
    }

    /// Context indices `Z_i = {k : variable i targeted in context k}`.
    pub fn target_context(&self, variable: &str) -> Option<usize> {
        self.contexts
            .iter()
            .position(|c| c.target.as_deref() == Some(variable))
    }

    /// Uncentered second moment of one context.
    pub fn moment(&self, k: usize) -> &DMatrix<f64> {
        &self.moments[k]
    }

    /// Pooled uncentered second moment over a nonempty set of contexts:
    /// the sample-size weighted average of per-context moments.
    pub fn pooled_moment(&self, contexts: &[usize]) -> Result<DMatrix<f64>> {
        if contexts.is_empty() {
            return Err(QigError::InvalidData("empty context set in pooling".into()));
        }
        let p = self.variables.len();
        let mut acc = DMatrix::<f64>::zeros(p, p);
        let mut total = 0.0;
        for &k in contexts {
            let n = self.contexts[k].data.nrows() as f64;
            acc += self.moments[k].scale(n);
            total += n;
        }
        Ok(acc / total)
    }

    /// Subtracts per-context column means in place and refreshes moments.
    pub fn center(&mut self) {
        for ctx in &mut self.contexts {
            let n = ctx.data.nrows() as f64;
            let means: Vec<f64> = (0..ctx.data.ncols())
                .map(|j| ctx.data.column(j).sum() / n)
                .collect();
            for i in 0..ctx.data.nrows() {
                for (j, m) in means.iter().enumerate() {
                    ctx.data[(i, j)] -= m;
                }
            }
        }
        self.moments = self
            .contexts
            .iter()
            .map(|c| {
                let n = c.data.nrows() as f64;
                c.data.transpose() * &c.data / n
            })
            .collect();
    }
}

/// Manifest schema: one CSV per context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub observational: PathBuf,
    #[serde(default)]
    pub interventions: Vec<InterventionEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionEntry {
    pub target: String,
    pub path: PathBuf,
}

fn read_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows: Vec<f64> = Vec::new();
    let mut nrows = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(QigError::InvalidData(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                nrows + 2,
                record.len(),
                header.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                QigError::InvalidData(format!("{}: non-numeric field `{field}`", path.display()))
            })?;
            rows.push(v);
        }
        nrows += 1;
    }
    if nrows == 0 {
        return Err(QigError::InvalidData(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok((
        header.clone(),
        DMatrix::from_row_slice(nrows, header.len(), &rows),
    ))
}

/// Loads a dataset from a JSON manifest:
/// `{"observational": path, "interventions": [{"target": .., "path": ..}]}`.
/// Relative CSV paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<InterventionalDataset> {
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let (variables, obs) = read_csv(&resolve(&manifest.observational))?;
    let mut contexts = vec![Context {
        target: None,
        data: obs,
    }];
    for entry in &manifest.interventions {
        let (header, data) = read_csv(&resolve(&entry.path))?;
        if header != variables {
            return Err(QigError::InvalidData(format!(
                "{}: header differs from observational header",
                entry.path.display()
            )));
        }
        contexts.push(Context {
            target: Some(entry.target.clone()),
            data,
        });
    }
    InterventionalDataset::new(variables, contexts)
}

/// Writes a dataset as a manifest plus one CSV per context, returning the
/// manifest path.
pub fn write_dataset(ds: &InterventionalDataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let write_csv = |name: &str, data: &DMatrix<f64>| -> Result<PathBuf> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(ds.variables())?;
        for i in 0..data.nrows() {
            let row: Vec<String> = (0..data.ncols())
                .map(|j| format!("{:.17e}", data[(i, j)]))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(PathBuf::from(name))
    };
    let observational = write_csv("observational.csv", &ds.contexts()[0].data)?;
    let mut interventions = Vec::new();
    for (k, ctx) in ds.contexts().iter().enumerate().skip(1) {
        let target = ctx.target.clone().expect("non-observational context");
        let name = format!("intervention_{k}_{target}.csv");
        let path = write_csv(&name, &ctx.data)?;
        interventions.push(InterventionEntry { target, path });
    }
    let manifest = Manifest {
        observational,
        interventions,
    };
    let mpath = dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)?;
    Ok(mpath)
}

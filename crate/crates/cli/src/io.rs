use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use awp_core::awpt::{read_matrix, write_mask, write_matrix};
use awp_core::baselines::ActivationNorms;
use awp_core::engine::CompressionResult;
use awp_core::projections::GridFile;
use awp_core::tensor::{Covariance, DenseMatrix};
use awp_core::{AwpError, Result, Scalar};
use serde::Serialize;

use crate::args::InputArgs;

/// A layer ready for compression.
pub struct Layer<T> {
    pub w: DenseMatrix<T>,
    pub cov: Covariance<T>,
    /// Available only when raw activations were given.
    pub norms: Option<ActivationNorms<T>>,
}

impl<T: Scalar> Layer<T> {
    /// Norms from the activations, or the covariance diagonal otherwise.
    pub fn norms_or_derived(&self) -> ActivationNorms<T> {
        self.norms
            .clone()
            .unwrap_or_else(|| ActivationNorms::from_covariance(&self.cov))
    }
}

pub fn load_layer<T: Scalar>(input: &InputArgs) -> Result<Layer<T>> {
    let w: DenseMatrix<T> = read_matrix(&input.weights)?;
    let (cov, norms) = match (&input.acts, &input.cov) {
        (Some(acts), _) => {
            let x: DenseMatrix<T> = read_matrix(acts)?;
            let norms = ActivationNorms::from_activations(&x)?;
            (Covariance::from_activations(&x, true)?, Some(norms))
        }
        (None, Some(cov)) => {
            let c: DenseMatrix<T> = read_matrix(cov)?;
            (Covariance::from_matrix(c, true, input.samples)?, None)
        }
        (None, None) => {
            return Err(AwpError::InvalidConfig("one of --acts or --cov is required".into()));
        }
    };
    if cov.dim() != w.cols() {
        return Err(AwpError::Shape(format!(
            "weights have {} input channels but the covariance is {}×{}",
            w.cols(),
            cov.dim(),
            cov.dim()
        )));
    }
    Ok(Layer { w, cov, norms })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Grid file plus the column scales of an activation-scaled grid.
#[derive(Serialize)]
struct GridJson<'a> {
    #[serde(flatten)]
    grid: &'a GridFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    column_scales: Option<Vec<f64>>,
}

/// Paths of the written artifacts, relative to the output directory.
#[derive(Debug, Serialize)]
pub struct Artifacts {
    pub theta: String,
    pub mask: Option<String>,
    pub grid: Option<String>,
    pub trace: String,
}

pub fn write_artifacts<T: Scalar>(dir: &Path, r: &CompressionResult<T>) -> Result<Artifacts> {
    fs::create_dir_all(dir)?;
    let at = |name: &str| -> PathBuf { dir.join(name) };
    write_matrix(at("theta.awpt"), &r.theta)?;
    let mask = match &r.mask {
        Some(m) => {
            write_mask(at("mask.awpt"), m)?;
            Some("mask.awpt".to_string())
        }
        None => None,
    };
    let grid = match &r.grid {
        Some(g) => {
            let json = GridJson {
                grid: &g.to_file(),
                column_scales: r
                    .column_scales
                    .as_ref()
                    .map(|s| s.iter().map(|v| v.as_f64()).collect()),
            };
            write_json(&at("grid.json"), &json)?;
            Some("grid.json".to_string())
        }
        None => None,
    };
    r.trace.write_csv(BufWriter::new(File::create(at("trace.csv"))?))?;
    Ok(Artifacts {
        theta: "theta.awpt".into(),
        mask,
        grid,
        trace: "trace.csv".into(),
    })
}

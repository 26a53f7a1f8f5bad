//! Plain-text matrix files and ensemble directories.
//!
//! A matrix file holds `m n` on the first line followed by `m` rows of
//! whitespace separated values. Values are written with 17 significant
//! digits so doubles round-trip exactly. An ensemble directory holds
//! `matrix_0.txt ... matrix_{d-1}.txt` plus a `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GmmvError, Result};
use crate::model::MeasurementEnsemble;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub unit_columns: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<Vec<Vec<usize>>>,
}

pub fn matrix_file_name(i: usize) -> String {
    format!("matrix_{i}.txt")
}

pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(a.len() * 25 + 16);
    let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", a[(r, c)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let err = |message: String| GmmvError::Parse { path: origin.to_path_buf(), message };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| err("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| err(format!("bad header token {t:?}"))))
        .collect::<Result<_>>()?;
    let [m, n] = dims[..] else {
        return Err(err(format!("header must be `m n`, got {header:?}")));
    };
    let mut data = Vec::with_capacity(m * n);
    let mut rows = 0;
    for (r, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| err(format!("row {r}: bad value {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != n {
            return Err(err(format!("row {r} has {} values, expected {n}", data.len() - before)));
        }
        rows += 1;
    }
    if rows != m {
        return Err(err(format!("found {rows} rows, expected {m}")));
    }
    Ok(DMatrix::from_row_slice(m, n, &data))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GmmvError::io(path, e))?;
    parse_matrix(&text, path)
}

pub fn write_matrix(path: impl AsRef<Path>, a: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(a)).map_err(|e| GmmvError::io(path, e))
}

pub fn save_ensemble(dir: impl AsRef<Path>, ensemble: &MeasurementEnsemble) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| GmmvError::io(dir, e))?;
    for (i, a) in ensemble.matrices().iter().enumerate() {
        write_matrix(dir.join(matrix_file_name(i)), a)?;
    }
    let manifest = Manifest {
        m: ensemble.rows(),
        n: ensemble.cols(),
        d: ensemble.count(),
        unit_columns: ensemble.unit_columns(),
        seed: ensemble.seed(),
        permutations: ensemble.permutations().map(|p| p.to_vec()),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| GmmvError::io(&path, e))
}

pub fn load_ensemble(dir: impl AsRef<Path>) -> Result<MeasurementEnsemble> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| GmmvError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let matrices = (0..manifest.d)
        .map(|i| read_matrix(dir.join(matrix_file_name(i))))
        .collect::<Result<Vec<_>>>()?;
    let mut ensemble = MeasurementEnsemble::new(matrices)?;
    if (ensemble.rows(), ensemble.cols()) != (manifest.m, manifest.n) {
        return Err(GmmvError::Parse {
            path,
            message: format!(
                "manifest says {}x{}, matrices are {}x{}",
                manifest.m,
                manifest.n,
                ensemble.rows(),
                ensemble.cols()
            ),
        });
    }
    if manifest.unit_columns && !ensemble.unit_columns() {
        return Err(GmmvError::Parse {
            path,
            message: "manifest claims unit columns but some column norm differs from 1".into(),
        });
    }
    if let Some(seed) = manifest.seed {
        ensemble = ensemble.with_seed(seed);
    }
    if let Some(perms) = manifest.permutations {
        ensemble = ensemble.with_permutations(perms)?;
    }
    Ok(ensemble)
}

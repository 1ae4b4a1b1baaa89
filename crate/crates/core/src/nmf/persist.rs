use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Factorization, NmfError};

/// Contents of `factorization.toml` next to `W.csv` and `H.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationMeta {
    pub k: usize,
    pub lambda: f64,
    pub seed: u64,
    pub iterations: usize,
    pub final_residual: f64,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> NmfError {
    NmfError::Io(format!("{}: {e}", path.display()))
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<(), NmfError> {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

fn read_matrix(path: &Path) -> Result<Array2<f64>, NmfError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let vals = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io_err(path, e))?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => return Err(io_err(path, "ragged rows")),
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| io_err(path, e))
}

/// Writes `W.csv`, `H.csv` (row-major, 17 significant digits) and
/// `factorization.toml` into `dir`.
pub fn write_factorization(dir: impl AsRef<Path>, f: &Factorization) -> Result<(), NmfError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_matrix(&dir.join("W.csv"), f.w())?;
    write_matrix(&dir.join("H.csv"), f.h())?;
    let meta = FactorizationMeta {
        k: f.k(),
        lambda: f.lambda(),
        seed: f.seed(),
        iterations: f.iterations(),
        final_residual: f.final_residual(),
    };
    let path = dir.join("factorization.toml");
    let text = toml::to_string(&meta).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// Reads back factors and metadata. Traces are not persisted.
pub fn read_factorization(
    dir: impl AsRef<Path>,
) -> Result<(Factorization, FactorizationMeta), NmfError> {
    let dir = dir.as_ref();
    let w = read_matrix(&dir.join("W.csv"))?;
    let h = read_matrix(&dir.join("H.csv"))?;
    let path = dir.join("factorization.toml");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let meta: FactorizationMeta = toml::from_str(&text).map_err(|e| io_err(&path, e))?;
    if w.ncols() != meta.k || h.nrows() != meta.k {
        return Err(NmfError::Shape(format!(
            "metadata K = {} but W {:?}, H {:?}",
            meta.k,
            w.dim(),
            h.dim()
        )));
    }
    Ok((Factorization::from_parts(w, h, meta.lambda, meta.seed), meta))
}

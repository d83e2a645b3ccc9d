//! JSON file format for linear-quadratic problems and primal-dual points.
//!
//! ```json
//! { "n": 3, "l": 2, "m": 0, "p": 1,
//!   "Q": [[0.1,0,0],[0,0.1,0],[0,0,0.1]], "c": [1,1,-1], "c0": 0,
//!   "g": { "A": [[-4,0,1],[0,-4,1]], "b": [0,0] },
//!   "G": { "A": [[1,0,0]], "b": [0] },
//!   "H": { "A": [[0,1,0]], "b": [0] } }
//! ```
//!
//! Matrices are row-major, either nested rows or one flat array. Missing
//! blocks mean zero rows.

use super::{Affine, LqProblem, PrimalDual};
use crate::error::{Error, Result};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixData {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    #[serde(rename = "A")]
    a: MatrixData,
    #[serde(default)]
    b: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    n: usize,
    #[serde(default)]
    l: usize,
    #[serde(default)]
    m: usize,
    #[serde(default)]
    p: usize,
    #[serde(rename = "Q", default)]
    q: Option<MatrixData>,
    #[serde(default)]
    c: Option<Vec<f64>>,
    #[serde(default)]
    c0: f64,
    #[serde(default)]
    g: Option<BlockFile>,
    #[serde(default)]
    h: Option<BlockFile>,
    #[serde(rename = "G", default)]
    big_g: Option<BlockFile>,
    #[serde(rename = "H", default)]
    big_h: Option<BlockFile>,
}

fn dim_err(context: String, expected: usize, found: usize) -> Error {
    Error::Dimension {
        context,
        expected,
        found,
    }
}

fn to_mat(data: &MatrixData, rows: usize, cols: usize, name: &str) -> Result<Mat<f64>> {
    match data {
        MatrixData::Flat(v) => {
            if v.len() != rows * cols {
                return Err(dim_err(format!("{name} entries ({rows}x{cols})"), rows * cols, v.len()));
            }
            Ok(Mat::from_fn(rows, cols, |i, j| v[i * cols + j]))
        }
        MatrixData::Rows(r) => {
            if rows == 0 && r.is_empty() {
                return Ok(Mat::zeros(0, cols));
            }
            if r.len() != rows {
                return Err(dim_err(format!("{name} rows"), rows, r.len()));
            }
            for (i, row) in r.iter().enumerate() {
                if row.len() != cols {
                    return Err(dim_err(format!("{name} row {i} length"), cols, row.len()));
                }
            }
            Ok(Mat::from_fn(rows, cols, |i, j| r[i][j]))
        }
    }
}

fn to_affine(block: &Option<BlockFile>, rows: usize, n: usize, name: &str) -> Result<Affine> {
    let Some(block) = block else {
        if rows == 0 {
            return Ok(Affine::empty(n));
        }
        return Err(dim_err(format!("{name} block rows (block missing)"), rows, 0));
    };
    let a = to_mat(&block.a, rows, n, &format!("{name}.A"))?;
    let b = match &block.b {
        None => vec![0.0; rows],
        Some(b) if b.len() == rows => b.clone(),
        Some(b) => return Err(dim_err(format!("{name}.b length"), rows, b.len())),
    };
    Ok(Affine::new(a, b))
}

fn from_file(f: ProblemFile) -> Result<LqProblem> {
    let n = f.n;
    let q = match &f.q {
        Some(q) => to_mat(q, n, n, "Q")?,
        None => Mat::zeros(n, n),
    };
    let c = match f.c {
        Some(c) if c.len() == n => c,
        Some(c) => return Err(dim_err("c length".into(), n, c.len())),
        None => vec![0.0; n],
    };
    LqProblem::new(
        q,
        c,
        f.c0,
        to_affine(&f.g, f.l, n, "g")?,
        to_affine(&f.h, f.m, n, "h")?,
        to_affine(&f.big_g, f.p, n, "G")?,
        to_affine(&f.big_h, f.p, n, "H")?,
    )
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("{e} (line {}, column {})", e.line(), e.column()),
    }
}

/// Parses problem text; `origin` is only used in error messages.
pub fn parse_lq_problem(text: &str, origin: &Path) -> Result<LqProblem> {
    let f: ProblemFile = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
    from_file(f)
}

pub fn load_lq_problem(path: impl AsRef<Path>) -> Result<LqProblem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_lq_problem(&text, path)
}

fn rows_of(m: &Mat<f64>) -> MatrixData {
    MatrixData::Rows((0..m.nrows()).map(|i| crate::linalg::row(m, i)).collect())
}

fn block_of(a: &Affine) -> Option<BlockFile> {
    (a.rows() > 0).then(|| BlockFile {
        a: rows_of(&a.a),
        b: Some(a.b.clone()),
    })
}

pub fn save_lq_problem(problem: &LqProblem, path: impl AsRef<Path>) -> Result<()> {
    use super::MpccProblem;
    let d = problem.dims();
    let f = ProblemFile {
        n: d.n,
        l: d.l,
        m: d.m,
        p: d.p,
        q: Some(rows_of(&problem.q)),
        c: Some(problem.c.clone()),
        c0: problem.c0,
        g: block_of(&problem.g),
        h: block_of(&problem.h),
        big_g: block_of(&problem.big_g),
        big_h: block_of(&problem.big_h),
    };
    let text = serde_json::to_string_pretty(&f).map_err(|e| Error::Evaluation(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a point file with keys `x`, `lambda`, `eta`, `mu`, `nu`.
pub fn load_point(path: impl AsRef<Path>) -> Result<PrimalDual> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e))
}

pub fn save_point(z: &PrimalDual, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(z).map_err(|e| Error::Evaluation(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

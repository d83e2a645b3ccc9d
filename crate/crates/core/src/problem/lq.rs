use super::{affine_eval, ConstraintJacobians, ConstraintValues, Dims, MpccProblem};
use crate::error::{Error, Result};
use crate::linalg::{dot, mat_vec};
use faer::Mat;

/// The affine map `x ↦ A x + b`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub a: Mat<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn new(a: Mat<f64>, b: Vec<f64>) -> Self {
        Affine { a, b }
    }

    pub fn empty(n: usize) -> Self {
        Affine {
            a: Mat::zeros(0, n),
            b: Vec::new(),
        }
    }

    /// `A = rows`, `b = 0`.
    pub fn linear(rows: &[&[f64]]) -> Self {
        let n = rows.first().map_or(0, |r| r.len());
        let a = Mat::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Affine { a, b: vec![0.0; rows.len()] }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        affine_eval(&self.a, &self.b, x)
    }
}

/// Linear-quadratic MPCC: `f(x) = ½xᵀQx + cᵀx + c₀` with affine `g, h, G, H`.
#[derive(Clone, Debug)]
pub struct LqProblem {
    pub q: Mat<f64>,
    pub c: Vec<f64>,
    pub c0: f64,
    pub g: Affine,
    pub h: Affine,
    pub big_g: Affine,
    pub big_h: Affine,
    /// Set when `Q` was supplied non-symmetric and replaced by `(Q + Qᵀ)/2`.
    pub symmetrized: bool,
}

impl LqProblem {
    pub fn new(q: Mat<f64>, c: Vec<f64>, c0: f64, g: Affine, h: Affine, big_g: Affine, big_h: Affine) -> Result<Self> {
        let n = c.len();
        let dim = |context: &str, expected: usize, found: usize| -> Result<()> {
            if expected == found {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context: context.to_string(),
                    expected,
                    found,
                })
            }
        };
        dim("Q rows", n, q.nrows())?;
        dim("Q columns", n, q.ncols())?;
        for (name, aff) in [("g", &g), ("h", &h), ("G", &big_g), ("H", &big_h)] {
            dim(&format!("{name}.A columns"), n, aff.a.ncols())?;
            dim(&format!("{name}.b length"), aff.a.nrows(), aff.b.len())?;
        }
        dim("H.A rows", big_g.rows(), big_h.rows())?;

        let mut q = q;
        let mut symmetrized = false;
        let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(q.read(i, j).abs()));
        let asym = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .fold(0.0f64, |m, (i, j)| m.max((q.read(i, j) - q.read(j, i)).abs()));
        if asym > 1e-14 * scale.max(1.0) {
            symmetrized = true;
        }
        if asym > 0.0 {
            q = Mat::from_fn(n, n, |i, j| 0.5 * (q.read(i, j) + q.read(j, i)));
        }
        Ok(LqProblem {
            q,
            c,
            c0,
            g,
            h,
            big_g,
            big_h,
            symmetrized,
        })
    }
}

impl MpccProblem for LqProblem {
    fn dims(&self) -> Dims {
        Dims {
            n: self.c.len(),
            l: self.g.rows(),
            m: self.h.rows(),
            p: self.big_g.rows(),
        }
    }

    fn objective(&self, x: &[f64]) -> Result<f64> {
        let qx = mat_vec(&self.q, x);
        Ok(0.5 * dot(x, &qx) + dot(&self.c, x) + self.c0)
    }

    fn objective_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = mat_vec(&self.q, x);
        g.iter_mut().zip(&self.c).for_each(|(gi, ci)| *gi += ci);
        Ok(g)
    }

    fn objective_hessian(&self, _x: &[f64]) -> Result<Mat<f64>> {
        Ok(self.q.clone())
    }

    fn constraints(&self, x: &[f64]) -> Result<ConstraintValues> {
        Ok(ConstraintValues {
            g: self.g.eval(x),
            h: self.h.eval(x),
            big_g: self.big_g.eval(x),
            big_h: self.big_h.eval(x),
        })
    }

    fn constraint_jacobians(&self, _x: &[f64]) -> Result<ConstraintJacobians> {
        Ok(ConstraintJacobians {
            g: self.g.a.clone(),
            h: self.h.a.clone(),
            big_g: self.big_g.a.clone(),
            big_h: self.big_h.a.clone(),
        })
    }

    fn affine_constraints(&self) -> bool {
        true
    }

    fn quadratic_objective(&self) -> bool {
        true
    }
}

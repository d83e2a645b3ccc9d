//! MPCC problem abstraction:
//!
//! ```text
//! min f(x)  s.t.  g(x) ≤ 0,  h(x) = 0,  G(x) ≥ 0,  H(x) ≥ 0,  G(x)ᵀH(x) = 0
//! ```
//!
//! with Lagrangian `𝓛 = f + λᵀg + ηᵀh + μᵀG + νᵀH`.

mod builtin;
mod diagnostics;
mod io;
mod lq;

pub use builtin::{obstacle, obstacle_multipliers, perturbed, toy, toy_root, toy_root_alt, Builtin};
pub use diagnostics::{
    active_partition, check_mpcc_licq, check_mpcc_ssoc, check_relaxed_lq_cq, classify_stationarity,
    IndexPartition, Stationarity, SSOC_BRANCH_LIMIT, TOL_ACT, TOL_RANK,
};
pub use io::{load_lq_problem, load_point, parse_lq_problem, save_lq_problem, save_point};
pub use lq::{Affine, LqProblem};

use crate::error::{Error, Result};
use crate::linalg::{mat_t_vec, mat_vec};
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Problem dimensions: `n` variables, `l` inequalities, `m` equalities and
/// `p` complementarity pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub p: usize,
}

impl Dims {
    /// Length of the stacked primal-dual vector `z = (x, λ, η, μ, ν)`.
    pub fn total(&self) -> usize {
        self.n + self.l + self.m + 2 * self.p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    G,
    Eq,
    Comp1,
    Comp2,
}

#[derive(Clone, Debug)]
pub struct ConstraintValues {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub big_g: Vec<f64>,
    pub big_h: Vec<f64>,
}

/// Constraint Jacobians, each `rows × n`.
#[derive(Clone, Debug)]
pub struct ConstraintJacobians {
    pub g: Mat<f64>,
    pub h: Mat<f64>,
    pub big_g: Mat<f64>,
    pub big_h: Mat<f64>,
}

/// Evaluation contract for an MPCC.
///
/// Implementations must be reentrant: the library evaluates the same problem
/// from several threads at once.
pub trait MpccProblem: Sync {
    fn dims(&self) -> Dims;

    fn objective(&self, x: &[f64]) -> Result<f64>;

    fn objective_gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn objective_hessian(&self, x: &[f64]) -> Result<Mat<f64>>;

    fn constraints(&self, x: &[f64]) -> Result<ConstraintValues>;

    fn constraint_jacobians(&self, x: &[f64]) -> Result<ConstraintJacobians>;

    /// Hessian of constraint `i` of the given kind. `None` means zero.
    fn constraint_hessian(&self, _kind: ConstraintKind, _i: usize, _x: &[f64]) -> Result<Option<Mat<f64>>> {
        Ok(None)
    }

    fn affine_constraints(&self) -> bool;

    fn quadratic_objective(&self) -> bool;

    fn is_linear_quadratic(&self) -> bool {
        self.affine_constraints() && self.quadratic_objective()
    }
}

/// The stacked iterate `z = (x, λ, η, μ, ν)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalDual {
    pub x: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub nu: Vec<f64>,
}

impl PrimalDual {
    pub fn zeros(d: Dims) -> Self {
        PrimalDual {
            x: vec![0.0; d.n],
            lambda: vec![0.0; d.l],
            eta: vec![0.0; d.m],
            mu: vec![0.0; d.p],
            nu: vec![0.0; d.p],
        }
    }

    pub fn with_x(d: Dims, x: Vec<f64>) -> Self {
        PrimalDual { x, ..PrimalDual::zeros(d) }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.x.len(),
            l: self.lambda.len(),
            m: self.eta.len(),
            p: self.mu.len(),
        }
    }

    pub fn check(&self, expected: Dims) -> Result<()> {
        let parts = [
            ("x", self.x.len(), expected.n),
            ("lambda", self.lambda.len(), expected.l),
            ("eta", self.eta.len(), expected.m),
            ("mu", self.mu.len(), expected.p),
            ("nu", self.nu.len(), expected.p),
        ];
        for (name, found, expected) in parts {
            if found != expected {
                return Err(Error::Dimension {
                    context: format!("primal-dual component {name}"),
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn stack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dims().total());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.lambda);
        v.extend_from_slice(&self.eta);
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.nu);
        v
    }

    pub fn unstack(d: Dims, v: &[f64]) -> Self {
        assert_eq!(v.len(), d.total(), "stacked vector has wrong length");
        let (x, rest) = v.split_at(d.n);
        let (lambda, rest) = rest.split_at(d.l);
        let (eta, rest) = rest.split_at(d.m);
        let (mu, nu) = rest.split_at(d.p);
        PrimalDual {
            x: x.to_vec(),
            lambda: lambda.to_vec(),
            eta: eta.to_vec(),
            mu: mu.to_vec(),
            nu: nu.to_vec(),
        }
    }

    /// `z + t·d` for a stacked direction `d`.
    pub fn axpy(&self, t: f64, d: &[f64]) -> Self {
        let mut v = self.stack();
        v.iter_mut().zip(d).for_each(|(vi, di)| *vi += t * di);
        PrimalDual::unstack(self.dims(), &v)
    }

    pub fn multipliers_norm_inf(&self) -> f64 {
        [&self.lambda, &self.eta, &self.mu, &self.nu]
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Everything the residual needs from the problem at one `x`.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub grad_f: Vec<f64>,
    pub cons: ConstraintValues,
    pub jac: ConstraintJacobians,
}

impl PointEval {
    pub fn new(problem: &dyn MpccProblem, x: &[f64]) -> Result<Self> {
        let d = problem.dims();
        if x.len() != d.n {
            return Err(Error::Dimension {
                context: "point x".into(),
                expected: d.n,
                found: x.len(),
            });
        }
        let e = PointEval {
            grad_f: problem.objective_gradient(x)?,
            cons: problem.constraints(x)?,
            jac: problem.constraint_jacobians(x)?,
        };
        e.check(d)?;
        Ok(e)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.grad_f.len(),
            l: self.cons.g.len(),
            m: self.cons.h.len(),
            p: self.cons.big_g.len(),
        }
    }

    fn check(&self, d: Dims) -> Result<()> {
        let sizes = [
            ("objective gradient", self.grad_f.len(), d.n),
            ("g", self.cons.g.len(), d.l),
            ("h", self.cons.h.len(), d.m),
            ("G", self.cons.big_g.len(), d.p),
            ("H", self.cons.big_h.len(), d.p),
        ];
        for (name, found, expected) in sizes {
            if found != expected {
                return Err(Error::Dimension {
                    context: format!("{name} values"),
                    expected,
                    found,
                });
            }
        }
        let jacs = [
            ("g'", &self.jac.g, d.l),
            ("h'", &self.jac.h, d.m),
            ("G'", &self.jac.big_g, d.p),
            ("H'", &self.jac.big_h, d.p),
        ];
        for (name, j, rows) in jacs {
            if j.nrows() != rows || j.ncols() != d.n {
                return Err(Error::Dimension {
                    context: format!("Jacobian {name} ({}x{})", j.nrows(), j.ncols()),
                    expected: rows * d.n,
                    found: j.nrows() * j.ncols(),
                });
            }
        }
        Ok(())
    }

    /// `∇ₓ𝓛 = ∇f + g′ᵀλ + h′ᵀη + G′ᵀμ + H′ᵀν`.
    pub fn grad_lagrangian(&self, z: &PrimalDual) -> Vec<f64> {
        let mut r = self.grad_f.clone();
        for (jac, mult) in [
            (&self.jac.g, &z.lambda),
            (&self.jac.h, &z.eta),
            (&self.jac.big_g, &z.mu),
            (&self.jac.big_h, &z.nu),
        ] {
            if jac.nrows() == 0 {
                continue;
            }
            let t = mat_t_vec(jac, mult);
            r.iter_mut().zip(t).for_each(|(ri, ti)| *ri += ti);
        }
        r
    }
}

#[derive(Clone, Debug)]
pub struct LagrangianEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub hess_xx: Mat<f64>,
}

/// `∇²ₓₓ𝓛` at `z`.
pub fn lagrangian_hessian(problem: &dyn MpccProblem, z: &PrimalDual) -> Result<Mat<f64>> {
    let mut hess = problem.objective_hessian(&z.x)?;
    if problem.affine_constraints() {
        return Ok(hess);
    }
    for (kind, mult) in [
        (ConstraintKind::G, &z.lambda),
        (ConstraintKind::Eq, &z.eta),
        (ConstraintKind::Comp1, &z.mu),
        (ConstraintKind::Comp2, &z.nu),
    ] {
        for (i, &w) in mult.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            if let Some(hi) = problem.constraint_hessian(kind, i, &z.x)? {
                hess += faer::scale(w) * &hi;
            }
        }
    }
    Ok(hess)
}

pub fn lagrangian(problem: &dyn MpccProblem, z: &PrimalDual) -> Result<LagrangianEval> {
    z.check(problem.dims())?;
    let pe = PointEval::new(problem, &z.x)?;
    let c = &pe.cons;
    let dot = crate::linalg::dot;
    let value = problem.objective(&z.x)?
        + dot(&z.lambda, &c.g)
        + dot(&z.eta, &c.h)
        + dot(&z.mu, &c.big_g)
        + dot(&z.nu, &c.big_h);
    Ok(LagrangianEval {
        value,
        grad_x: pe.grad_lagrangian(z),
        hess_xx: lagrangian_hessian(problem, z)?,
    })
}

pub(crate) fn affine_eval(a: &Mat<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut v = mat_vec(a, x);
    v.iter_mut().zip(b).for_each(|(vi, bi)| *vi += bi);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_roundtrip() {
        let d = Dims { n: 3, l: 2, m: 1, p: 2 };
        let v: Vec<f64> = (0..d.total()).map(|i| i as f64).collect();
        let z = PrimalDual::unstack(d, &v);
        assert_eq!(z.x, vec![0.0, 1.0, 2.0]);
        assert_eq!(z.lambda, vec![3.0, 4.0]);
        assert_eq!(z.eta, vec![5.0]);
        assert_eq!(z.mu, vec![6.0, 7.0]);
        assert_eq!(z.nu, vec![8.0, 9.0]);
        assert_eq!(z.stack(), v);
        assert!(z.check(d).is_ok());
        assert!(z.check(Dims { n: 4, ..d }).is_err());
    }

    #[test]
    fn toy_lagrangian_vanishes_at_root() {
        let p = toy(0.1).unwrap();
        let l = lagrangian(&p, &toy_root()).unwrap();
        assert!(l.grad_x.iter().all(|v| v.abs() < 1e-15));
        let l = lagrangian(&p, &toy_root_alt()).unwrap();
        assert!(l.grad_x.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_multipliers_give_objective_gradient() {
        let p = obstacle(3).unwrap();
        let d = p.dims();
        let x: Vec<f64> = (0..d.n).map(|i| (i as f64 * 0.37).sin()).collect();
        let l = lagrangian(&p, &PrimalDual::with_x(d, x.clone())).unwrap();
        assert_eq!(l.grad_x, p.objective_gradient(&x).unwrap());
    }

    #[test]
    fn perturbed_lagrangian_at_minimizer() {
        let p = perturbed(0.2).unwrap();
        let z = PrimalDual {
            x: vec![1.0, 0.0],
            lambda: vec![],
            eta: vec![],
            mu: vec![0.0],
            nu: vec![-0.2],
        };
        let l = lagrangian(&p, &z).unwrap();
        assert!(l.grad_x.iter().all(|v| v.abs() < 1e-15), "{:?}", l.grad_x);
    }
}

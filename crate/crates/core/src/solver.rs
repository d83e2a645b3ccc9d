//! Semismooth Newton iteration on `F(z) = 0`, locally and globalized with the
//! merit `Φ_FB`.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Lu};
use crate::linquad::{refine, repair_and_step};
use crate::merit::{merit_at, merit_value_at, MeritEval};
use crate::problem::{lagrangian_hessian, MpccProblem, PointEval, PrimalDual};
use crate::residual::{assemble_df_with, assemble_f_at, extract_partition, ResidualEval};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Required merit reduction `Φ(z + d) ≤ q·Φ(z)` for a full Newton step.
    pub q: f64,
    pub tau_abs: f64,
    /// Angle test parameter.
    pub rho: f64,
    pub sigma: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub singular_rcond: f64,
    pub enable_stationarity_stop: bool,
    pub tau_stat: f64,
    pub lq_repair: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            q: 0.999,
            tau_abs: 1e-11,
            rho: 1e-3,
            sigma: 0.5,
            beta: 0.5,
            max_iter: 1000,
            max_backtracks: 60,
            singular_rcond: 1e-12,
            enable_stationarity_stop: false,
            tau_stat: 1e-9,
            lq_repair: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let open_unit = [("q", self.q), ("rho", self.rho), ("sigma", self.sigma), ("beta", self.beta)];
        for (name, v) in open_unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.tau_abs > 0.0) {
            return Err(Error::InvalidParameter(format!("tau_abs must be positive, got {}", self.tau_abs)));
        }
        if self.enable_stationarity_stop && !(self.tau_stat > 0.0) {
            return Err(Error::InvalidParameter(format!("tau_stat must be positive, got {}", self.tau_stat)));
        }
        if !(self.singular_rcond >= 0.0) {
            return Err(Error::InvalidParameter("singular_rcond must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ConvergedResidual,
    StationaryMerit,
    MaxIter,
    LineSearchFailure,
    /// Local iteration only: the Newton matrix was singular and no repair applied.
    SingularSystem,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::ConvergedResidual => "converged_residual",
            Status::StationaryMerit => "stationary_merit",
            Status::MaxIter => "max_iter",
            Status::LineSearchFailure => "line_search_failure",
            Status::SingularSystem => "singular_system",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Newton step accepted by the ratio test.
    NewtonFull,
    /// Newton direction passed the angle test and was damped by Armijo.
    NewtonDamped,
    /// Newton matrix singular, gradient step.
    Gradient,
    /// Newton direction failed the angle test, gradient step.
    NewtonRejectedGradient,
    /// Step from the linear-quadratic repair.
    LqRepaired,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: StepKind,
    pub alpha: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub iterations: usize,
    pub steps: Vec<StepRecord>,
    /// `‖F(z_k)‖₂` for every visited iterate, including the last.
    pub residual_history: Vec<f64>,
    /// `Φ_FB(z_k)` for every visited iterate.
    pub merit_history: Vec<f64>,
    pub final_z: PrimalDual,
    pub final_residual_norm: f64,
    pub final_merit: f64,
    pub final_merit_grad_norm: f64,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub enum NewtonDirection {
    Step(Vec<f64>),
    Singular { rcond: f64 },
}

/// Everything known about one iterate.
struct Iterate {
    z: PrimalDual,
    res: ResidualEval,
    merit: MeritEval,
    hess: faer::Mat<f64>,
}

impl Iterate {
    fn new(problem: &dyn MpccProblem, z: PrimalDual) -> Result<Self> {
        let pe = PointEval::new(problem, &z.x)?;
        Self::from_point(problem, z, pe)
    }

    fn from_point(problem: &dyn MpccProblem, z: PrimalDual, pe: PointEval) -> Result<Self> {
        let hess = lagrangian_hessian(problem, &z)?;
        let merit = merit_at(&pe, &z, &hess);
        let res = assemble_f_at(pe, &z);
        Ok(Iterate { z, res, merit, hess })
    }

    fn newton(&self, singular_rcond: f64) -> NewtonDirection {
        let df = assemble_df_with(&self.hess, &self.res).df;
        let lu = Lu::factor(&df);
        let rcond = lu.rcond();
        if !(rcond >= singular_rcond) {
            return NewtonDirection::Singular { rcond };
        }
        let rhs: Vec<f64> = self.res.f.iter().map(|v| -v).collect();
        let d = refine(&df, &lu, &rhs, lu.solve(&rhs));
        if d.iter().any(|v| !v.is_finite()) {
            return NewtonDirection::Singular { rcond: 0.0 };
        }
        NewtonDirection::Step(d)
    }

    /// Direction to the repaired next iterate, if the repair applies and succeeds.
    fn repaired(&self, problem: &dyn MpccProblem) -> Option<Vec<f64>> {
        let part = extract_partition(&self.res);
        let out = repair_and_step(problem, &self.z, &part).ok()?;
        let (a, b) = (out.z.stack(), self.z.stack());
        Some(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }
}

/// Solves `DF(z) d = −F(z)`; reports singularity when the condition estimate
/// falls below `singular_rcond`.
pub fn newton_direction(problem: &dyn MpccProblem, z: &PrimalDual, singular_rcond: f64) -> Result<NewtonDirection> {
    z.check(problem.dims())?;
    Ok(Iterate::new(problem, z.clone())?.newton(singular_rcond))
}

struct Trace {
    start: Instant,
    steps: Vec<StepRecord>,
    residuals: Vec<f64>,
    merits: Vec<f64>,
}

impl Trace {
    fn new() -> Self {
        Trace {
            start: Instant::now(),
            steps: Vec::new(),
            residuals: Vec::new(),
            merits: Vec::new(),
        }
    }

    fn visit(&mut self, it: &Iterate) {
        self.residuals.push(it.res.norm());
        self.merits.push(it.merit.value);
    }

    fn finish(self, status: Status, it: Iterate) -> SolveReport {
        SolveReport {
            status,
            iterations: self.steps.len(),
            steps: self.steps,
            residual_history: self.residuals,
            merit_history: self.merits,
            final_residual_norm: it.res.norm(),
            final_merit: it.merit.value,
            final_merit_grad_norm: norm2(&it.merit.grad),
            final_z: it.z,
            wall_time: self.start.elapsed(),
        }
    }
}

fn trial(problem: &dyn MpccProblem, z: &PrimalDual, alpha: f64, d: &[f64]) -> Result<(PrimalDual, PointEval, f64)> {
    let zt = z.axpy(alpha, d);
    let pe = PointEval::new(problem, &zt.x)?;
    let phi = merit_value_at(&pe, &zt);
    Ok((zt, pe, phi))
}

/// Pure Newton iteration without globalization.
///
/// A singular Newton matrix ends the run with [`Status::SingularSystem`]
/// unless the linear-quadratic repair applies.
pub fn solve_local(problem: &dyn MpccProblem, z0: &PrimalDual, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    z0.check(problem.dims())?;
    let lq = opts.lq_repair && problem.is_linear_quadratic();
    let mut trace = Trace::new();
    let mut it = Iterate::new(problem, z0.clone())?;
    loop {
        trace.visit(&it);
        if it.res.norm() <= opts.tau_abs {
            return Ok(trace.finish(Status::ConvergedResidual, it));
        }
        if trace.steps.len() >= opts.max_iter {
            return Ok(trace.finish(Status::MaxIter, it));
        }
        let (d, kind) = match it.newton(opts.singular_rcond) {
            NewtonDirection::Step(d) => (d, StepKind::NewtonFull),
            NewtonDirection::Singular { .. } => match lq.then(|| it.repaired(problem)).flatten() {
                Some(d) => (d, StepKind::LqRepaired),
                None => return Ok(trace.finish(Status::SingularSystem, it)),
            },
        };
        trace.steps.push(StepRecord { kind, alpha: 1.0 });
        it = Iterate::new(problem, it.z.axpy(1.0, &d))?;
    }
}

/// Globalized semismooth Newton method.
///
/// Each iteration tries the Newton direction `d` (or, when `DF` is singular,
/// the repaired step of a linear-quadratic problem) and takes it in full if
/// `Φ(z + d) ≤ q·Φ(z)`. Otherwise `d` is kept only if it passes the angle test
/// `∇Φᵀd ≤ −ρ‖d‖‖∇Φ‖` and replaced by `−∇Φ` if not; the step length is then
/// chosen by Armijo backtracking.
pub fn solve_global(problem: &dyn MpccProblem, z0: &PrimalDual, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    z0.check(problem.dims())?;
    let lq = opts.lq_repair && problem.is_linear_quadratic();
    let mut trace = Trace::new();
    let mut it = Iterate::new(problem, z0.clone())?;
    loop {
        trace.visit(&it);
        if it.res.norm() <= opts.tau_abs {
            return Ok(trace.finish(Status::ConvergedResidual, it));
        }
        let grad_norm = norm2(&it.merit.grad);
        if opts.enable_stationarity_stop && grad_norm <= opts.tau_stat {
            return Ok(trace.finish(Status::StationaryMerit, it));
        }
        if trace.steps.len() >= opts.max_iter {
            return Ok(trace.finish(Status::MaxIter, it));
        }
        let phi = it.merit.value;

        let (newton, newton_kind) = match it.newton(opts.singular_rcond) {
            NewtonDirection::Step(d) => (Some(d), StepKind::NewtonFull),
            NewtonDirection::Singular { .. } => (lq.then(|| it.repaired(problem)).flatten(), StepKind::LqRepaired),
        };

        let mut full_trial = None;
        if let Some(d) = &newton {
            let (zt, pe, phi_t) = trial(problem, &it.z, 1.0, d)?;
            if phi_t <= opts.q * phi {
                trace.steps.push(StepRecord {
                    kind: newton_kind,
                    alpha: 1.0,
                });
                it = Iterate::from_point(problem, zt, pe)?;
                continue;
            }
            full_trial = Some((zt, pe, phi_t));
        }

        let (d, kind) = match newton {
            Some(d) if dot(&it.merit.grad, &d) <= -opts.rho * norm2(&d) * grad_norm => {
                let kind = if newton_kind == StepKind::LqRepaired {
                    StepKind::LqRepaired
                } else {
                    StepKind::NewtonDamped
                };
                (d, kind)
            }
            other => {
                full_trial = None;
                let kind = if other.is_some() {
                    StepKind::NewtonRejectedGradient
                } else {
                    StepKind::Gradient
                };
                (it.merit.grad.iter().map(|g| -g).collect::<Vec<f64>>(), kind)
            }
        };
        let slope = dot(&it.merit.grad, &d);
        if grad_norm == 0.0 && matches!(kind, StepKind::Gradient | StepKind::NewtonRejectedGradient) {
            return Ok(trace.finish(Status::StationaryMerit, it));
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for i in 0..=opts.max_backtracks {
            let (zt, pe, phi_t) = match (i, full_trial.take()) {
                (0, Some(t)) => t,
                _ => trial(problem, &it.z, alpha, &d)?,
            };
            if phi_t <= phi + opts.sigma * alpha * slope {
                accepted = Some((zt, pe));
                break;
            }
            alpha *= opts.beta;
        }
        let Some((zt, pe)) = accepted else {
            return Ok(trace.finish(Status::LineSearchFailure, it));
        };
        trace.steps.push(StepRecord { kind, alpha });
        it = Iterate::from_point(problem, zt, pe)?;
    }
}

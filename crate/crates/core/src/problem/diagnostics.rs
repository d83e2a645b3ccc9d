//! Stationarity classification and constraint qualifications at a given point.

use super::{lagrangian_hessian, MpccProblem, PointEval, PrimalDual};
use crate::error::{Error, Result};
use crate::linalg::{congruence, has_full_row_rank, kernel_basis, norm_inf, stack_rows, symmetric_min_eigenvalue};
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Default activity tolerance, scaled by `1 + ‖x‖∞`.
pub const TOL_ACT: f64 = 1e-8;
/// Default relative singular-value cutoff for rank decisions.
pub const TOL_RANK: f64 = 1e-10;
/// Largest `|I⁰⁰₀₀|` for which the SSOC branches are enumerated.
pub const SSOC_BRANCH_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    NotWeaklyStationary,
    Weakly,
    M,
    S,
}

impl std::fmt::Display for Stationarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stationarity::NotWeaklyStationary => "not_weakly_stationary",
            Stationarity::Weakly => "weakly",
            Stationarity::M => "M",
            Stationarity::S => "S",
        })
    }
}

/// Index sets at `x̄` (0-based indices).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexPartition {
    pub ig: Vec<usize>,
    pub ig_plus: Vec<usize>,
    pub i_plus0: Vec<usize>,
    pub i_0plus: Vec<usize>,
    pub i_00: Vec<usize>,
    /// Biactive with `μ ≠ 0`.
    pub i00_pm_r: Vec<usize>,
    /// Biactive with `ν ≠ 0`.
    pub i00_r_pm: Vec<usize>,
    /// Biactive with `μ = ν = 0`.
    pub i00_00: Vec<usize>,
}

impl IndexPartition {
    /// `I⁰⁺ ∪ I⁰⁰_{±ℝ}`, the rows of `G′` that must hold with equality.
    pub fn g_equal(&self) -> Vec<usize> {
        merge(&self.i_0plus, &self.i00_pm_r)
    }

    /// `I⁺⁰ ∪ I⁰⁰_{ℝ±}`.
    pub fn h_equal(&self) -> Vec<usize> {
        merge(&self.i_plus0, &self.i00_r_pm)
    }
}

fn merge(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn act_tol(tol: f64, x: &[f64]) -> f64 {
    tol * (1.0 + norm_inf(x))
}

fn partition_from(pe: &PointEval, z: &PrimalDual, tol: f64) -> IndexPartition {
    let c = &pe.cons;
    let mut part = IndexPartition::default();
    for (i, &gi) in c.g.iter().enumerate() {
        if gi.abs() <= tol {
            part.ig.push(i);
            if z.lambda[i] > 0.0 {
                part.ig_plus.push(i);
            }
        }
    }
    for i in 0..c.big_g.len() {
        let (a, b) = (c.big_g[i], c.big_h[i]);
        let (a0, b0) = (a.abs() <= tol, b.abs() <= tol);
        // both away from zero only happens at infeasible points; the smaller one counts as active
        let set = match (a0, b0) {
            (true, true) => &mut part.i_00,
            (false, true) => &mut part.i_plus0,
            (true, false) => &mut part.i_0plus,
            (false, false) if a.abs() <= b.abs() => &mut part.i_0plus,
            (false, false) => &mut part.i_plus0,
        };
        set.push(i);
    }
    for &i in &part.i_00 {
        let (mu, nu) = (z.mu[i], z.nu[i]);
        if mu != 0.0 {
            part.i00_pm_r.push(i);
        }
        if nu != 0.0 {
            part.i00_r_pm.push(i);
        }
        if mu == 0.0 && nu == 0.0 {
            part.i00_00.push(i);
        }
    }
    part
}

/// Index sets with `|·| ≤ tol_act·(1 + ‖x‖∞)` treated as zero; multiplier signs are read literally.
pub fn active_partition(problem: &dyn MpccProblem, z: &PrimalDual, tol_act: f64) -> Result<IndexPartition> {
    z.check(problem.dims())?;
    let pe = PointEval::new(problem, &z.x)?;
    Ok(partition_from(&pe, z, act_tol(tol_act, &z.x)))
}

/// Largest violation of `g ≤ 0`, `h = 0`, `G, H ≥ 0`, `GᵀH = 0` (componentwise).
fn violation(pe: &PointEval) -> f64 {
    let c = &pe.cons;
    let mut v = 0.0f64;
    for &gi in &c.g {
        v = v.max(gi);
    }
    for &hi in &c.h {
        v = v.max(hi.abs());
    }
    for (a, b) in c.big_g.iter().zip(&c.big_h) {
        v = v.max(a.min(*b).abs());
    }
    v
}

/// Strongest stationarity label satisfied at `z` with tolerance `tol`.
///
/// Feasibility and activity use `tol·(1 + ‖x‖∞)`; multiplier conditions use
/// `tol·(1 + ‖(λ,η,μ,ν)‖∞)`.
pub fn classify_stationarity(problem: &dyn MpccProblem, z: &PrimalDual, tol: f64) -> Result<Stationarity> {
    z.check(problem.dims())?;
    let pe = PointEval::new(problem, &z.x)?;
    let tx = act_tol(tol, &z.x);
    let viol = violation(&pe);
    if viol > tx {
        return Err(Error::Infeasible { violation: viol });
    }
    let part = partition_from(&pe, z, tx);
    let tm = tol * (1.0 + z.multipliers_norm_inf());

    let grad = pe.grad_lagrangian(z);
    let tg = tol * (1.0 + z.multipliers_norm_inf() + norm_inf(&pe.grad_f));
    let mut weak = norm_inf(&grad) <= tg;
    for (i, &li) in z.lambda.iter().enumerate() {
        let active = part.ig.binary_search(&i).is_ok();
        weak &= if active { li >= -tm } else { li.abs() <= tm };
    }
    weak &= part.i_plus0.iter().all(|&i| z.mu[i].abs() <= tm);
    weak &= part.i_0plus.iter().all(|&i| z.nu[i].abs() <= tm);
    if !weak {
        return Ok(Stationarity::NotWeaklyStationary);
    }
    let s = part.i_00.iter().all(|&i| z.mu[i] <= tm && z.nu[i] <= tm);
    if s {
        return Ok(Stationarity::S);
    }
    let m = part
        .i_00
        .iter()
        .all(|&i| z.mu[i].abs().min(z.nu[i].abs()) <= tm || (z.mu[i] < tm && z.nu[i] < tm));
    Ok(if m { Stationarity::M } else { Stationarity::Weakly })
}

fn full_rank(rows: Mat<f64>, tol_rank: f64) -> bool {
    has_full_row_rank(&rows, tol_rank)
}

/// MPCC-LICQ at `x`: full row rank of `[g′_{Iᵍ}; h′; G′_{I⁰⁺∪I⁰⁰}; H′_{I⁺⁰∪I⁰⁰}]`.
pub fn check_mpcc_licq(problem: &dyn MpccProblem, x: &[f64], tol_rank: f64) -> Result<bool> {
    let z = PrimalDual::with_x(problem.dims(), x.to_vec());
    let pe = PointEval::new(problem, x)?;
    let part = partition_from(&pe, &z, act_tol(TOL_ACT, x));
    let all_h: Vec<usize> = (0..problem.dims().m).collect();
    let g_rows = merge(&part.i_0plus, &part.i_00);
    let h_rows = merge(&part.i_plus0, &part.i_00);
    let j = &pe.jac;
    let rows = stack_rows(
        problem.dims().n,
        &[(&j.g, &part.ig), (&j.h, &all_h), (&j.big_g, &g_rows), (&j.big_h, &h_rows)],
    );
    Ok(full_rank(rows, tol_rank))
}

/// The multiplier-dependent relaxation of MPCC-LICQ used by the linear-quadratic repair:
/// full row rank of `[g′_{Iᵍ₊}; h′; G′_{I⁰⁺∪I⁰⁰_{±ℝ}}; H′_{I⁺⁰∪I⁰⁰_{ℝ±}}]`.
pub fn check_relaxed_lq_cq(problem: &dyn MpccProblem, z: &PrimalDual, tol_rank: f64) -> Result<bool> {
    let part = active_partition(problem, z, TOL_ACT)?;
    let pe = PointEval::new(problem, &z.x)?;
    let all_h: Vec<usize> = (0..problem.dims().m).collect();
    let j = &pe.jac;
    let rows = stack_rows(
        problem.dims().n,
        &[
            (&j.g, &part.ig_plus),
            (&j.h, &all_h),
            (&j.big_g, &part.g_equal()),
            (&j.big_h, &part.h_equal()),
        ],
    );
    Ok(full_rank(rows, tol_rank))
}

/// MPCC-SSOC: `∇²ₓₓ𝓛` positive definite on every branch subspace `S_β`, `β ⊂ I⁰⁰₀₀`.
pub fn check_mpcc_ssoc(problem: &dyn MpccProblem, z: &PrimalDual, tol: f64) -> Result<bool> {
    let part = active_partition(problem, z, TOL_ACT)?;
    let free = &part.i00_00;
    if free.len() > SSOC_BRANCH_LIMIT {
        return Err(Error::BranchLimit {
            count: free.len(),
            limit: SSOC_BRANCH_LIMIT,
        });
    }
    let pe = PointEval::new(problem, &z.x)?;
    let hess = lagrangian_hessian(problem, z)?;
    let n = problem.dims().n;
    let all_h: Vec<usize> = (0..problem.dims().m).collect();
    let j = &pe.jac;
    for mask in 0u64..(1u64 << free.len()) {
        let (beta, beta_bar): (Vec<usize>, Vec<usize>) =
            free.iter().enumerate().fold((vec![], vec![]), |(mut b, mut bb), (k, &i)| {
                if mask & (1 << k) != 0 {
                    b.push(i);
                } else {
                    bb.push(i);
                }
                (b, bb)
            });
        let g_rows = merge(&part.g_equal(), &beta);
        let h_rows = merge(&part.h_equal(), &beta_bar);
        let rows = stack_rows(
            n,
            &[(&j.g, &part.ig_plus), (&j.h, &all_h), (&j.big_g, &g_rows), (&j.big_h, &h_rows)],
        );
        let basis = kernel_basis(&rows, n, TOL_RANK);
        if basis.ncols() == 0 {
            continue;
        }
        let reduced = congruence(&hess, &basis);
        if symmetric_min_eigenvalue(&reduced) <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}

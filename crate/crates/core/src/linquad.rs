//! Index-removal repair for linear-quadratic MPCCs.
//!
//! For affine `g, h, G, H` and quadratic `f`, a Newton step with active sets
//! `(I₁, I_μ, I_ν)` is the solution `z⁺` of
//!
//! ```text
//! ∇ₓ𝓛(z⁺) = 0,
//! g(x⁺)_{I₁} = 0,  λ⁺ = 0 off I₁,
//! h(x⁺) = 0,
//! G(x⁺)_{I_μ} = 0, μ⁺ = 0 off I_μ,
//! H(x⁺)_{I_ν} = 0, ν⁺ = 0 off I_ν.
//! ```
//!
//! When this system is singular, suspect indices are removed one at a time in
//! the order of [`sort_removal_candidates`] until it becomes uniquely solvable.

use crate::error::Error;
use crate::linalg::{mat_vec, norm2, numerical_rank, Lu};
use crate::problem::{IndexPartition, MpccProblem, PointEval, PrimalDual};
use crate::residual::{ActivePartition24, Layout};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Systems up to this size are tested by SVD rank; larger ones by LU.
pub const SVD_LIMIT: usize = 512;
/// Relative singular-value cutoff for unique solvability.
pub const RANK_TOL: f64 = 1e-10;
/// Reciprocal condition cutoff used above [`SVD_LIMIT`].
pub const RCOND_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SetTag {
    L1,
    Mu,
    Nu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tag: SetTag,
    pub index: usize,
    pub key: f64,
}

/// The three index sets of the system, sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LqSets {
    pub il1: Vec<usize>,
    pub ip_mu: Vec<usize>,
    pub ip_nu: Vec<usize>,
}

impl LqSets {
    pub fn from_partition(part: &ActivePartition24) -> Self {
        LqSets {
            il1: part.il1.clone(),
            ip_mu: part.ip_mu(),
            ip_nu: part.ip_nu(),
        }
    }

    fn set_mut(&mut self, tag: SetTag) -> &mut Vec<usize> {
        match tag {
            SetTag::L1 => &mut self.il1,
            SetTag::Mu => &mut self.ip_mu,
            SetTag::Nu => &mut self.ip_nu,
        }
    }

    fn remove(&mut self, tag: SetTag, index: usize) -> bool {
        let s = self.set_mut(tag);
        match s.binary_search(&index) {
            Ok(k) => {
                s.remove(k);
                true
            }
            Err(_) => false,
        }
    }

    pub fn len(&self) -> usize {
        self.il1.len() + self.ip_mu.len() + self.ip_nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The sandwich inclusions relative to the index sets of a reference root:
    /// `Iᵍ₊ ⊂ I₁ ⊂ Iᵍ`, `I⁰⁺ ∪ I⁰⁰_{±ℝ} ⊂ I_μ ⊂ I⁰⁺ ∪ I⁰⁰`, `I⁺⁰ ∪ I⁰⁰_{ℝ±} ⊂ I_ν ⊂ I⁺⁰ ∪ I⁰⁰`.
    pub fn inclusions_hold(&self, root: &IndexPartition) -> bool {
        let subset = |a: &[usize], b: &[usize]| a.iter().all(|i| b.contains(i));
        let mu_outer: Vec<usize> = root.i_0plus.iter().chain(&root.i_00).copied().collect();
        let nu_outer: Vec<usize> = root.i_plus0.iter().chain(&root.i_00).copied().collect();
        subset(&root.ig_plus, &self.il1)
            && subset(&self.il1, &root.ig)
            && subset(&root.g_equal(), &self.ip_mu)
            && subset(&self.ip_mu, &mu_outer)
            && subset(&root.h_equal(), &self.ip_nu)
            && subset(&self.ip_nu, &nu_outer)
    }
}

fn cmp_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    a.key
        .total_cmp(&b.key)
        .then(a.tag.cmp(&b.tag))
        .then(a.index.cmp(&b.index))
}

/// Removal order: `I₁` keyed by `λᵢ`, `I_μ` by `max(|μⱼ|, |Hⱼ(x)|)`, `I_ν` by
/// `max(|νⱼ|, |Gⱼ(x)|)`, merged ascending.
pub fn sort_removal_candidates(pe: &PointEval, z: &PrimalDual, sets: &LqSets) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::with_capacity(sets.len());
    out.extend(sets.il1.iter().map(|&i| Candidate {
        tag: SetTag::L1,
        index: i,
        key: z.lambda[i],
    }));
    out.extend(sets.ip_mu.iter().map(|&j| Candidate {
        tag: SetTag::Mu,
        index: j,
        key: z.mu[j].abs().max(pe.cons.big_h[j].abs()),
    }));
    out.extend(sets.ip_nu.iter().map(|&j| Candidate {
        tag: SetTag::Nu,
        index: j,
        key: z.nu[j].abs().max(pe.cons.big_g[j].abs()),
    }));
    out.sort_by(cmp_candidates);
    out
}

/// Affine data of a linear-quadratic problem, recovered from one evaluation.
#[derive(Clone, Debug)]
pub struct LqData {
    pub q: Mat<f64>,
    pub c: Vec<f64>,
    pub pe0: PointEval,
    /// Constraint offsets `b = value − A x`.
    pub b_g: Vec<f64>,
    pub b_h: Vec<f64>,
    pub b_gg: Vec<f64>,
    pub b_hh: Vec<f64>,
}

impl LqData {
    pub fn new(problem: &dyn MpccProblem, x: &[f64]) -> crate::Result<Self> {
        let pe = PointEval::new(problem, x)?;
        let q = problem.objective_hessian(x)?;
        let qx = mat_vec(&q, x);
        let c = pe.grad_f.iter().zip(&qx).map(|(g, v)| g - v).collect();
        let off = |a: &Mat<f64>, v: &[f64]| -> Vec<f64> {
            let ax = mat_vec(a, x);
            v.iter().zip(ax).map(|(vi, ai)| vi - ai).collect()
        };
        Ok(LqData {
            b_g: off(&pe.jac.g, &pe.cons.g),
            b_h: off(&pe.jac.h, &pe.cons.h),
            b_gg: off(&pe.jac.big_g, &pe.cons.big_g),
            b_hh: off(&pe.jac.big_h, &pe.cons.big_h),
            q,
            c,
            pe0: pe,
        })
    }
}

/// The square system for `z⁺` for fixed index sets.
#[derive(Clone, Debug)]
pub struct LqSystem<'a> {
    data: &'a LqData,
    pub sets: LqSets,
    pub removed: Vec<Candidate>,
}

impl<'a> LqSystem<'a> {
    pub fn new(data: &'a LqData, sets: LqSets) -> Self {
        LqSystem {
            data,
            sets,
            removed: Vec::new(),
        }
    }

    fn layout(&self) -> Layout {
        Layout::new(self.data.pe0.dims())
    }

    pub fn matrix(&self) -> Mat<f64> {
        let lay = self.layout();
        let d = lay.dims;
        let jac = &self.data.pe0.jac;
        let nt = d.total();
        let mut k = Mat::<f64>::zeros(nt, nt);
        for j in 0..d.n {
            for i in 0..d.n {
                k.write(i, j, self.data.q.read(i, j));
            }
        }
        for (block, off) in [
            (&jac.g, lay.lambda()),
            (&jac.h, lay.eta()),
            (&jac.big_g, lay.mu()),
            (&jac.big_h, lay.nu()),
        ] {
            for r in 0..block.nrows() {
                for c in 0..d.n {
                    k.write(c, off + r, block.read(r, c));
                }
            }
        }
        let mut put_block = |block: &Mat<f64>, off: usize, active: &[usize], count: usize| {
            for r in 0..count {
                if active.binary_search(&r).is_ok() {
                    for c in 0..d.n {
                        k.write(off + r, c, block.read(r, c));
                    }
                } else {
                    k.write(off + r, off + r, 1.0);
                }
            }
        };
        let all_h: Vec<usize> = (0..d.m).collect();
        put_block(&jac.g, lay.lambda(), &self.sets.il1, d.l);
        put_block(&jac.h, lay.eta(), &all_h, d.m);
        put_block(&jac.big_g, lay.mu(), &self.sets.ip_mu, d.p);
        put_block(&jac.big_h, lay.nu(), &self.sets.ip_nu, d.p);
        k
    }

    pub fn rhs(&self) -> Vec<f64> {
        let lay = self.layout();
        let d = lay.dims;
        let mut r = vec![0.0; d.total()];
        for (i, ci) in self.data.c.iter().enumerate() {
            r[i] = -ci;
        }
        let mut put = |off: usize, active: &[usize], b: &[f64]| {
            for &i in active {
                r[off + i] = -b[i];
            }
        };
        put(lay.lambda(), &self.sets.il1, &self.data.b_g);
        put(lay.eta(), &(0..d.m).collect::<Vec<_>>(), &self.data.b_h);
        put(lay.mu(), &self.sets.ip_mu, &self.data.b_gg);
        put(lay.nu(), &self.sets.ip_nu, &self.data.b_hh);
        r
    }

    /// `‖K z − r‖₂` for a candidate solution.
    pub fn residual(&self, z: &PrimalDual) -> f64 {
        let v = mat_vec(&self.matrix(), &z.stack());
        let r = self.rhs();
        let diff: Vec<f64> = v.iter().zip(&r).map(|(a, b)| a - b).collect();
        norm2(&diff)
    }

    pub fn is_uniquely_solvable(&self) -> bool {
        uniquely_solvable(&self.matrix())
    }

    /// The unique solution, or `None` when the system is singular.
    pub fn solve(&self) -> Option<PrimalDual> {
        let k = self.matrix();
        let n = k.nrows();
        let v = if n <= SVD_LIMIT {
            if !uniquely_solvable(&k) {
                return None;
            }
            solve_refined(&k, &self.rhs())
        } else {
            let lu = Lu::factor(&k);
            if !(lu.rcond() > RCOND_TOL) {
                return None;
            }
            let rhs = self.rhs();
            let x0 = lu.solve(&rhs);
            refine(&k, &lu, &rhs, x0)
        };
        Some(PrimalDual::unstack(self.layout().dims, &v))
    }

    pub fn remove(&mut self, c: Candidate) {
        if self.sets.remove(c.tag, c.index) {
            self.removed.push(c);
        }
    }
}

fn uniquely_solvable(k: &Mat<f64>) -> bool {
    let n = k.nrows();
    if n == 0 {
        return true;
    }
    if n <= SVD_LIMIT {
        numerical_rank(k, RANK_TOL) == n
    } else {
        Lu::factor(k).rcond() > RCOND_TOL
    }
}

/// LU solve with two rounds of iterative refinement.
pub(crate) fn solve_refined(k: &Mat<f64>, rhs: &[f64]) -> Vec<f64> {
    let lu = Lu::factor(k);
    refine(k, &lu, rhs, lu.solve(rhs))
}

pub(crate) fn refine(k: &Mat<f64>, lu: &Lu, rhs: &[f64], mut x: Vec<f64>) -> Vec<f64> {
    for _ in 0..2 {
        let kx = mat_vec(k, &x);
        let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, v)| b - v).collect();
        if r.iter().all(|v| *v == 0.0) {
            break;
        }
        let dx = lu.solve(&r);
        x.iter_mut().zip(dx).for_each(|(xi, di)| *xi += di);
    }
    x
}

#[derive(Clone, Debug)]
pub struct RepairOutcome {
    pub z: PrimalDual,
    pub removed: Vec<Candidate>,
    pub sets: LqSets,
}

#[derive(Debug, thiserror::Error)]
pub enum RepairFailure {
    #[error("repair needs a linear-quadratic problem")]
    NotLinearQuadratic,
    #[error("system stays singular after removing all {removed} candidates")]
    Exhausted { removed: usize },
    #[error(transparent)]
    Evaluation(#[from] Error),
}

/// Number of leading candidates (in removal order) that must go before the
/// constraint rows can be linearly independent.
///
/// Rows are inserted last-removed first after all `h′` rows; the first row that
/// depends on its predecessors marks the shortest removal prefix. Returns
/// `None` when `h′` alone is rank deficient.
fn forced_removals(data: &LqData, cands: &[Candidate]) -> Option<usize> {
    let jac = &data.pe0.jac;
    let n = jac.g.ncols();
    let m = jac.h.nrows();
    let total = m + cands.len();
    if total == 0 {
        return Some(0);
    }
    // columns of Aᵀ in insertion order
    let at = Mat::from_fn(n, total, |i, j| {
        if j < m {
            jac.h.read(j, i)
        } else {
            let c = cands[cands.len() - 1 - (j - m)];
            match c.tag {
                SetTag::L1 => jac.g.read(c.index, i),
                SetTag::Mu => jac.big_g.read(c.index, i),
                SetTag::Nu => jac.big_h.read(c.index, i),
            }
        }
    });
    let r = at.qr().compute_thin_r();
    let diag = r.nrows().min(total);
    let mut first_dep = None;
    for k in 0..diag {
        let col_norm = norm2(at.col_as_slice(k));
        if r.read(k, k).abs() <= RANK_TOL * col_norm.max(f64::MIN_POSITIVE) {
            first_dep = Some(k);
            break;
        }
    }
    let first_dep = first_dep.or((total > n).then_some(n));
    match first_dep {
        None => Some(0),
        Some(k) if k < m => None,
        // removing every candidate inserted at or after position k
        Some(k) => Some(total - k),
    }
}

/// Removes candidates until the system for `z⁺` is uniquely solvable and returns its solution.
pub fn repair_and_step(
    problem: &dyn MpccProblem,
    z: &PrimalDual,
    partition: &ActivePartition24,
) -> Result<RepairOutcome, RepairFailure> {
    if !problem.is_linear_quadratic() {
        return Err(RepairFailure::NotLinearQuadratic);
    }
    let data = LqData::new(problem, &z.x)?;
    let sets = LqSets::from_partition(partition);
    let cands = sort_removal_candidates(&data.pe0, z, &sets);
    let mut sys = LqSystem::new(&data, sets);

    let Some(skip) = forced_removals(&data, &cands) else {
        return Err(RepairFailure::Exhausted { removed: 0 });
    };
    for c in &cands[..skip] {
        sys.remove(*c);
    }
    let mut next = skip;
    loop {
        if let Some(z_new) = sys.solve() {
            return Ok(RepairOutcome {
                z: z_new,
                removed: sys.removed.clone(),
                sets: sys.sets.clone(),
            });
        }
        if next == cands.len() {
            return Err(RepairFailure::Exhausted { removed: sys.removed.len() });
        }
        sys.remove(cands[next]);
        next += 1;
    }
}

//! The residual `F(z) = (∇ₓ𝓛; π_min(−gᵢ, λᵢ); h; φ(Gᵢ, Hᵢ, μᵢ, νᵢ))`, its Newton
//! derivative and the active sets it induces.

use crate::error::Result;
use crate::linalg::norm2;
use crate::nms::{ncp_min, phi_eval, DerivPattern, JClass, Quad};
use crate::problem::{lagrangian_hessian, Dims, MpccProblem, PointEval, PrimalDual};
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Offsets of the variable blocks inside the stacked `z`, which coincide with
/// the row blocks of `F`.
#[derive(Clone, Copy, Debug)]
pub struct Layout {
    pub dims: Dims,
}

impl Layout {
    pub fn new(dims: Dims) -> Self {
        Layout { dims }
    }
    pub fn x(&self) -> usize {
        0
    }
    pub fn lambda(&self) -> usize {
        self.dims.n
    }
    pub fn eta(&self) -> usize {
        self.dims.n + self.dims.l
    }
    pub fn mu(&self) -> usize {
        self.dims.n + self.dims.l + self.dims.m
    }
    pub fn nu(&self) -> usize {
        self.mu() + self.dims.p
    }
    pub fn total(&self) -> usize {
        self.dims.total()
    }
}

/// `F(z)` together with the derivative selections made while evaluating it.
#[derive(Clone, Debug)]
pub struct ResidualEval {
    pub dims: Dims,
    pub f: Vec<f64>,
    /// `Dπ_min(−gᵢ, λᵢ)` for every inequality.
    pub ncp: Vec<[f64; 2]>,
    /// NMS derivative for every complementarity pair.
    pub patterns: Vec<DerivPattern>,
    pub point: PointEval,
}

impl ResidualEval {
    fn layout(&self) -> Layout {
        Layout::new(self.dims)
    }

    pub fn grad_l(&self) -> &[f64] {
        &self.f[..self.dims.n]
    }

    pub fn ncp_g(&self) -> &[f64] {
        let l = self.layout();
        &self.f[l.lambda()..l.eta()]
    }

    pub fn h(&self) -> &[f64] {
        let l = self.layout();
        &self.f[l.eta()..l.mu()]
    }

    /// `(φ₁ᵢ, φ₂ᵢ)` interleaved per pair.
    pub fn nms(&self) -> &[f64] {
        &self.f[self.layout().mu()..]
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.f)
    }
}

pub fn quad(pe: &PointEval, z: &PrimalDual, i: usize) -> Quad {
    Quad::new(pe.cons.big_g[i], pe.cons.big_h[i], z.mu[i], z.nu[i])
}

/// Evaluates `F` at `z` from an existing point evaluation.
pub fn assemble_f_at(point: PointEval, z: &PrimalDual) -> ResidualEval {
    let dims = z.dims();
    let mut f = Vec::with_capacity(dims.total());
    f.extend(point.grad_lagrangian(z));
    let mut ncp = Vec::with_capacity(dims.l);
    for (gi, li) in point.cons.g.iter().zip(&z.lambda) {
        let (v, d) = ncp_min(-gi, *li);
        f.push(v);
        ncp.push(d);
    }
    f.extend_from_slice(&point.cons.h);
    let mut patterns = Vec::with_capacity(dims.p);
    for i in 0..dims.p {
        let e = phi_eval(quad(&point, z, i));
        f.extend_from_slice(&e.phi);
        patterns.push(e.deriv);
    }
    ResidualEval {
        dims,
        f,
        ncp,
        patterns,
        point,
    }
}

pub fn assemble_f(problem: &dyn MpccProblem, z: &PrimalDual) -> Result<ResidualEval> {
    z.check(problem.dims())?;
    let point = PointEval::new(problem, &z.x)?;
    Ok(assemble_f_at(point, z))
}

/// Dense Newton derivative
///
/// ```text
/// [ ∇²ₓₓ𝓛  g′ᵀ  h′ᵀ  G′ᵀ  H′ᵀ ]
/// [ A₁     A₂   0    0    0   ]
/// [ h′     0    0    0    0   ]
/// [ A₃     0    0    A₄   A₅  ]
/// ```
#[derive(Clone, Debug)]
pub struct NewtonMatrix {
    pub df: Mat<f64>,
}

pub fn assemble_df(problem: &dyn MpccProblem, z: &PrimalDual, eval: &ResidualEval) -> Result<NewtonMatrix> {
    let hess = lagrangian_hessian(problem, z)?;
    Ok(assemble_df_with(&hess, eval))
}

pub fn assemble_df_with(hess: &Mat<f64>, eval: &ResidualEval) -> NewtonMatrix {
    let d = eval.dims;
    let lay = Layout::new(d);
    let nt = d.total();
    let jac = &eval.point.jac;
    let mut df = Mat::<f64>::zeros(nt, nt);

    for j in 0..d.n {
        for i in 0..d.n {
            df.write(i, j, hess.read(i, j));
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
                df.write(c, off + r, block.read(r, c));
            }
        }
    }

    for (i, dpi) in eval.ncp.iter().enumerate() {
        let row = lay.lambda() + i;
        if dpi[0] != 0.0 {
            for c in 0..d.n {
                df.write(row, c, -dpi[0] * jac.g.read(i, c));
            }
        }
        if dpi[1] != 0.0 {
            df.write(row, lay.lambda() + i, dpi[1]);
        }
    }

    for r in 0..d.m {
        for c in 0..d.n {
            df.write(lay.eta() + r, c, jac.h.read(r, c));
        }
    }

    for (i, pat) in eval.patterns.iter().enumerate() {
        for (k, unit) in pat.rows().into_iter().enumerate() {
            let row = lay.mu() + 2 * i + k;
            let s = unit.signf();
            match unit.index() {
                1 => (0..d.n).for_each(|c| df.write(row, c, s * jac.big_g.read(i, c))),
                2 => (0..d.n).for_each(|c| df.write(row, c, s * jac.big_h.read(i, c))),
                3 => df.write(row, lay.mu() + i, s),
                _ => df.write(row, lay.nu() + i, s),
            }
        }
    }
    NewtonMatrix { df }
}

/// Active sets read off the derivative selections (0-based indices).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivePartition24 {
    pub il1: Vec<usize>,
    pub ip12: Vec<usize>,
    pub ip23: Vec<usize>,
    pub ip14: Vec<usize>,
    pub p: usize,
}

impl ActivePartition24 {
    /// `{1..p} \ I_{23}`: pairs where `G = 0` is imposed.
    pub fn ip_mu(&self) -> Vec<usize> {
        (0..self.p).filter(|i| !self.ip23.contains(i)).collect()
    }

    /// `{1..p} \ I_{14}`: pairs where `H = 0` is imposed.
    pub fn ip_nu(&self) -> Vec<usize> {
        (0..self.p).filter(|i| !self.ip14.contains(i)).collect()
    }
}

pub fn extract_partition(eval: &ResidualEval) -> ActivePartition24 {
    let mut part = ActivePartition24 {
        p: eval.dims.p,
        ..Default::default()
    };
    part.il1 = (0..eval.ncp.len()).filter(|&i| eval.ncp[i] == [1.0, 0.0]).collect();
    for (i, pat) in eval.patterns.iter().enumerate() {
        match pat.jclass {
            JClass::J12 => part.ip12.push(i),
            JClass::J23 => part.ip23.push(i),
            JClass::J14 => part.ip14.push(i),
        }
    }
    part
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_vec;
    use crate::problem::{obstacle, obstacle_multipliers, perturbed, toy, toy_root};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_z(d: Dims, rng: &mut ChaCha8Rng, scale: f64) -> PrimalDual {
        let v: Vec<f64> = (0..d.total()).map(|_| rng.gen_range(-scale..scale)).collect();
        PrimalDual::unstack(d, &v)
    }

    #[test]
    fn toy_root_is_zero() {
        let p = toy(0.1).unwrap();
        let e = assemble_f(&p, &toy_root()).unwrap();
        assert_eq!(e.f.len(), 7);
        assert!(e.f.iter().all(|v| *v == 0.0), "{:?}", e.f);
    }

    #[test]
    fn obstacle_root_is_zero() {
        let p = obstacle(4).unwrap();
        let e = assemble_f(&p, &obstacle_multipliers(&[true; 4])).unwrap();
        assert!(e.norm() < 1e-14, "{}", e.norm());
    }

    #[test]
    fn perturbed_root_and_partition() {
        let p = perturbed(0.2).unwrap();
        let z = PrimalDual {
            x: vec![1.0, 0.0],
            lambda: vec![],
            eta: vec![],
            mu: vec![0.0],
            nu: vec![-0.2],
        };
        let e = assemble_f(&p, &z).unwrap();
        assert!(e.f.iter().all(|v| *v == 0.0));
        // a = 1 > 0 forces the J23 class
        let part = extract_partition(&e);
        assert_eq!(part.ip23, vec![0]);
        assert!(part.ip_mu().is_empty());
        assert_eq!(part.ip_nu(), vec![0]);
    }

    #[test]
    fn toy_blocks_at_root() {
        let p = toy(0.1).unwrap();
        let z = toy_root();
        let e = assemble_f(&p, &z).unwrap();
        let m = assemble_df(&p, &z, &e).unwrap().df;
        // −gᵢ = 0 ≤ λᵢ selects the first argument: A₂ row zero, A₁ row −∇gᵢᵀ
        let lay = Layout::new(e.dims);
        for i in 0..2 {
            assert_eq!(e.ncp[i], [1.0, 0.0]);
            let r = lay.lambda() + i;
            assert_eq!(m.read(r, lay.lambda() + i), 0.0);
        }
        assert_eq!((m.read(3, 0), m.read(3, 1), m.read(3, 2)), (4.0, 0.0, -1.0));
        let part = extract_partition(&e);
        assert_eq!(part.il1, vec![0, 1]);
        assert_eq!(part.ip12, vec![0]);
    }

    #[test]
    fn slack_point_has_no_active_inequalities() {
        let p = toy(0.1).unwrap();
        let z = PrimalDual {
            x: vec![1.0, 1.0, 0.0],
            lambda: vec![0.0, 0.0],
            eta: vec![],
            mu: vec![0.0],
            nu: vec![0.0],
        };
        assert!(extract_partition(&assemble_f(&p, &z).unwrap()).il1.is_empty());
    }

    #[test]
    fn patterns_reproduce_values() {
        let p = obstacle(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z = random_z(p.dims(), &mut rng, 3.0);
            let e = assemble_f(&p, &z).unwrap();
            for (i, pat) in e.patterns.iter().enumerate() {
                let w = quad(&e.point, &z, i).to_array();
                assert_eq!(pat.apply(w), [e.nms()[2 * i], e.nms()[2 * i + 1]]);
            }
            for (i, d) in e.ncp.iter().enumerate() {
                let v = d[0] * -e.point.cons.g[i] + d[1] * z.lambda[i];
                assert_eq!(v, e.ncp_g()[i]);
            }
        }
    }

    #[test]
    fn linear_model_is_exact_near_roots() {
        // for linear-quadratic data F(z) = DF(z)(z − z̄) whenever the patterns at z are admissible at z̄
        let cases: Vec<(Box<dyn MpccProblem>, PrimalDual)> = vec![
            (Box::new(toy(0.1).unwrap()), toy_root()),
            (Box::new(obstacle(4).unwrap()), obstacle_multipliers(&[true, false, true, false])),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (p, root) in &cases {
            for _ in 0..100 {
                let delta: Vec<f64> = (0..p.dims().total()).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
                let z = root.axpy(1.0, &delta);
                let e = assemble_f(p.as_ref(), &z).unwrap();
                let m = assemble_df(p.as_ref(), &z, &e).unwrap().df;
                let lin = mat_vec(&m, &delta);
                for (a, b) in lin.iter().zip(&e.f) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn directional_derivative_at_smooth_points() {
        let p = obstacle(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 1e-7;
        let mut checked = 0;
        while checked < 50 {
            let z = random_z(p.dims(), &mut rng, 2.0);
            let dir: Vec<f64> = (0..p.dims().total()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e0 = assemble_f(&p, &z).unwrap();
            let e1 = assemble_f(&p, &z.axpy(t, &dir)).unwrap();
            // only compare where no selection switched
            if e0.patterns != e1.patterns || e0.ncp != e1.ncp {
                continue;
            }
            let m = assemble_df(&p, &z, &e0).unwrap().df;
            let lin = mat_vec(&m, &dir);
            for k in 0..lin.len() {
                let fd = (e1.f[k] - e0.f[k]) / t;
                assert!((fd - lin[k]).abs() <= 1e-5 * (1.0 + lin[k].abs()), "row {k}: {fd} vs {}", lin[k]);
            }
            checked += 1;
        }
    }
}

//! Smooth merit `Φ_FB(z) = ½‖F_FB(z)‖²` with
//! `F_FB = (∇ₓ𝓛; π_FB(−gᵢ, λᵢ); h; θ_FB(Gᵢ, Hᵢ, μᵢ, νᵢ))`.

use crate::error::Result;
use crate::linalg::{dot, mat_t_vec, mat_vec};
use crate::nms::{ncp_fb_grad, theta_fb_grad};
use crate::problem::{lagrangian_hessian, MpccProblem, PointEval, PrimalDual};
use crate::residual::{quad, Layout};
use faer::Mat;

#[derive(Clone, Debug)]
pub struct MeritEval {
    pub f_fb: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn f_fb_at(pe: &PointEval, z: &PrimalDual) -> Vec<f64> {
    let d = z.dims();
    let mut f = Vec::with_capacity(d.n + d.l + d.m + 4 * d.p);
    f.extend(pe.grad_lagrangian(z));
    for (gi, li) in pe.cons.g.iter().zip(&z.lambda) {
        f.push(crate::nms::ncp_fb(-gi, *li));
    }
    f.extend_from_slice(&pe.cons.h);
    for i in 0..d.p {
        f.extend_from_slice(&crate::nms::theta_fb(quad(pe, z, i)));
    }
    f
}

pub fn assemble_f_fb(problem: &dyn MpccProblem, z: &PrimalDual) -> Result<Vec<f64>> {
    z.check(problem.dims())?;
    Ok(f_fb_at(&PointEval::new(problem, &z.x)?, z))
}

/// `Φ_FB` only, for line-search trial points.
pub fn merit_value_at(pe: &PointEval, z: &PrimalDual) -> f64 {
    let f = f_fb_at(pe, z);
    0.5 * dot(&f, &f)
}

/// `Φ_FB` and `∇Φ_FB = J_FBᵀ F_FB`, assembled block by block.
pub fn merit_at(pe: &PointEval, z: &PrimalDual, hess: &Mat<f64>) -> MeritEval {
    let d = z.dims();
    let lay = Layout::new(d);
    let jac = &pe.jac;
    let mut grad = vec![0.0; d.total()];
    let mut f_fb = Vec::with_capacity(d.n + d.l + d.m + 4 * d.p);

    // ∇ₓ𝓛 block
    let r = pe.grad_lagrangian(z);
    let hr = mat_vec(hess, &r);
    grad[..d.n].copy_from_slice(&hr);
    for (block, off, rows) in [
        (&jac.g, lay.lambda(), d.l),
        (&jac.h, lay.eta(), d.m),
        (&jac.big_g, lay.mu(), d.p),
        (&jac.big_h, lay.nu(), d.p),
    ] {
        if rows > 0 {
            grad[off..off + rows].copy_from_slice(&mat_vec(block, &r));
        }
    }
    f_fb.extend_from_slice(&r);

    // accumulated coefficient of each constraint gradient in the x-part
    let mut cg = vec![0.0; d.l];
    let mut cgg = vec![0.0; d.p];
    let mut chh = vec![0.0; d.p];

    for i in 0..d.l {
        let (v, g) = ncp_fb_grad(-pe.cons.g[i], z.lambda[i]);
        f_fb.push(v);
        cg[i] = -v * g[0];
        grad[lay.lambda() + i] += v * g[1];
    }

    f_fb.extend_from_slice(&pe.cons.h);

    for i in 0..d.p {
        let (val, jt) = theta_fb_grad(quad(pe, z, i));
        let mut t = [0.0; 4];
        for k in 0..4 {
            for c in 0..4 {
                t[c] += jt[k][c] * val[k];
            }
        }
        cgg[i] = t[0];
        chh[i] = t[1];
        grad[lay.mu() + i] += t[2];
        grad[lay.nu() + i] += t[3];
        f_fb.extend_from_slice(&val);
    }

    for (block, coef) in [
        (&jac.g, &cg),
        (&jac.h, &pe.cons.h),
        (&jac.big_g, &cgg),
        (&jac.big_h, &chh),
    ] {
        if block.nrows() == 0 {
            continue;
        }
        let t = mat_t_vec(block, coef);
        grad[..d.n].iter_mut().zip(t).for_each(|(gi, ti)| *gi += ti);
    }

    let value = 0.5 * dot(&f_fb, &f_fb);
    MeritEval { f_fb, value, grad }
}

pub fn merit(problem: &dyn MpccProblem, z: &PrimalDual) -> Result<MeritEval> {
    z.check(problem.dims())?;
    let pe = PointEval::new(problem, &z.x)?;
    let hess = lagrangian_hessian(problem, z)?;
    Ok(merit_at(&pe, z, &hess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;
    use crate::problem::{obstacle, obstacle_multipliers, perturbed, toy, toy_root, toy_root_alt};
    use crate::residual::assemble_f;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(problem: &dyn MpccProblem, z: &PrimalDual) -> f64 {
        let m = merit(problem, z).unwrap();
        let v = z.stack();
        let d = problem.dims();
        let mut worst = 0.0f64;
        for k in 0..v.len() {
            let h = 1e-6 * (1.0 + v[k].abs());
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[k] += h;
            vm[k] -= h;
            let fp = merit(problem, &PrimalDual::unstack(d, &vp)).unwrap().value;
            let fm = merit(problem, &PrimalDual::unstack(d, &vm)).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            let scale = 1.0 + norm2(&m.grad);
            worst = worst.max((fd - m.grad[k]).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let problems: Vec<Box<dyn MpccProblem>> = vec![
            Box::new(toy(0.1).unwrap()),
            Box::new(perturbed(0.2).unwrap()),
            Box::new(obstacle(3).unwrap()),
        ];
        for p in &problems {
            let d = p.dims();
            for _ in 0..50 {
                let v: Vec<f64> = (0..d.total()).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let z = PrimalDual::unstack(d, &v);
                let err = fd_check(p.as_ref(), &z);
                assert!(err <= 1e-5, "relative FD error {err}");
            }
        }
    }

    #[test]
    fn vanishes_at_roots() {
        let p = toy(0.1).unwrap();
        for z in [toy_root(), toy_root_alt()] {
            let m = merit(&p, &z).unwrap();
            assert_eq!(m.value, 0.0);
            assert!(m.grad.iter().all(|g| *g == 0.0));
        }
        let p = obstacle(4).unwrap();
        let m = merit(&p, &obstacle_multipliers(&[false, true, true, false])).unwrap();
        assert!(norm2(&m.grad) <= 1e-14);
    }

    #[test]
    fn theta4_switch_is_continuous() {
        let p = perturbed(0.2).unwrap();
        let at = |mu: f64, nu: f64| PrimalDual {
            x: vec![0.3, 0.7],
            lambda: vec![],
            eta: vec![],
            mu: vec![mu],
            nu: vec![nu],
        };
        let t = 1e-12;
        for (a, b) in [(at(t, -0.4), at(-t, -0.4)), (at(-0.4, t), at(-0.4, -t))] {
            let (ma, mb) = (merit(&p, &a).unwrap(), merit(&p, &b).unwrap());
            assert!((ma.value - mb.value).abs() < 1e-10);
            for (x, y) in ma.grad.iter().zip(&mb.grad) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn norm_equivalence_with_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = obstacle(2).unwrap();
        let d = p.dims();
        for _ in 0..2000 {
            let v: Vec<f64> = (0..d.total()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z = PrimalDual::unstack(d, &v);
            let f = assemble_f(&p, &z).unwrap().norm();
            let ffb = norm2(&assemble_f_fb(&p, &z).unwrap());
            assert!(ffb / 8.0 <= f && f <= 8.0 * ffb, "{f} vs {ffb}");
        }
    }
}

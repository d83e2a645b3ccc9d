//! Scalar NCP functions and the NMS function φ = (φ₁, φ₂) whose zero set is
//! the M-stationarity set
//!
//! ```text
//! M = { (a, b, μ, ν) : 0 ≤ a ⊥ b ≥ 0, aμ = 0, bν = 0, μν = 0 or (μ < 0 and ν < 0) }.
//! ```
//!
//! Derivatives follow a strict left-to-right priority for `min`/`max` and
//! `D|x| = +1` for `x ≥ 0`. All comparisons are exact.

use serde::{Deserialize, Serialize};

/// One complementarity quadruple `(G_i(x), H_i(x), μ_i, ν_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub nu: f64,
}

impl Quad {
    pub fn new(a: f64, b: f64, mu: f64, nu: f64) -> Self {
        Quad { a, b, mu, nu }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.mu, self.nu]
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        Quad::new(w[0], w[1], w[2], w[3])
    }

    pub fn norm_inf(self) -> f64 {
        self.to_array().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// The row `sign · e_indexᵀ` in ℝ⁴, `index ∈ {1,2,3,4}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedUnit {
    index: u8,
    sign: i8,
}

impl SignedUnit {
    pub fn new(index: u8, sign: i8) -> Self {
        assert!((1..=4).contains(&index), "unit index {index} out of range");
        assert!(sign == 1 || sign == -1, "sign must be ±1");
        SignedUnit { index, sign }
    }

    fn with_sign_of(index: u8, x: f64) -> Self {
        SignedUnit::new(index, if x >= 0.0 { 1 } else { -1 })
    }

    pub fn index(self) -> u8 {
        self.index
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    /// Zero-based position in `(a, b, μ, ν)`.
    pub fn position(self) -> usize {
        self.index as usize - 1
    }

    pub fn signf(self) -> f64 {
        self.sign as f64
    }

    pub fn dense(self) -> [f64; 4] {
        let mut r = [0.0; 4];
        r[self.position()] = self.signf();
        r
    }

    /// `sign · w[index]`.
    pub fn apply(self, w: [f64; 4]) -> f64 {
        self.signf() * w[self.position()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JClass {
    J12,
    J23,
    J14,
}

impl JClass {
    fn from_indices(i: u8, j: u8) -> JClass {
        match (i.min(j), i.max(j)) {
            (1, 2) => JClass::J12,
            (2, 3) => JClass::J23,
            (1, 4) => JClass::J14,
            other => unreachable!("index pair {other:?} is not a derivative class"),
        }
    }
}

/// The 2×4 Newton derivative of φ as two signed unit rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivPattern {
    pub row1: SignedUnit,
    pub row2: SignedUnit,
    pub jclass: JClass,
}

impl DerivPattern {
    pub fn new(row1: SignedUnit, row2: SignedUnit) -> Self {
        DerivPattern {
            row1,
            row2,
            jclass: JClass::from_indices(row1.index, row2.index),
        }
    }

    pub fn apply(&self, h: [f64; 4]) -> [f64; 2] {
        [self.row1.apply(h), self.row2.apply(h)]
    }

    pub fn rows(&self) -> [SignedUnit; 2] {
        [self.row1, self.row2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmsEval {
    pub phi: [f64; 2],
    pub deriv: DerivPattern,
}

/// `π_min(a,b) = min(a,b)` with derivative `(1,0)` when `a ≤ b`.
pub fn ncp_min(a: f64, b: f64) -> (f64, [f64; 2]) {
    if a <= b {
        (a, [1.0, 0.0])
    } else {
        (b, [0.0, 1.0])
    }
}

/// Fischer–Burmeister function `√(a²+b²) − a − b`.
pub fn ncp_fb(a: f64, b: f64) -> f64 {
    a.hypot(b) - a - b
}

/// Value and gradient of `π_FB`. The gradient is zero wherever the value is.
pub fn ncp_fb_grad(a: f64, b: f64) -> (f64, [f64; 2]) {
    let r = a.hypot(b);
    let v = r - a - b;
    if v == 0.0 || r == 0.0 {
        (v, [0.0, 0.0])
    } else {
        (v, [a / r - 1.0, b / r - 1.0])
    }
}

fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

// First index attaining the extremum, scanning left to right.
fn argmax<const K: usize>(v: [f64; K]) -> usize {
    let mut k = 0;
    for i in 1..K {
        if v[i] > v[k] {
            k = i;
        }
    }
    k
}

fn argmin<const K: usize>(v: [f64; K]) -> usize {
    let mut k = 0;
    for i in 1..K {
        if v[i] < v[k] {
            k = i;
        }
    }
    k
}

fn psi_args(w: Quad) -> [[f64; 4]; 3] {
    let Quad { a, b, mu, nu } = w;
    // ψ₁, ψ₂ have three arguments; pad with −∞ so the scan never picks the pad
    [
        [-a, b.abs(), mu.abs(), f64::NEG_INFINITY],
        [-b, a.abs(), nu.abs(), f64::NEG_INFINITY],
        [a.abs(), b.abs(), mu, nu],
    ]
}

pub fn psi(w: Quad) -> [f64; 3] {
    psi_args(w).map(|args| args[argmax(args)])
}

pub fn phi_eval(w: Quad) -> NmsEval {
    let Quad { a, b, mu, nu } = w;
    let args = psi_args(w);
    let vals = args.map(|args| args[argmax(args)]);
    let k = argmin(vals);
    let pos = argmax(args[k]);
    let phi1 = vals[k];
    let row1 = match (k, pos) {
        (0, 0) => SignedUnit::new(1, -1),
        (0, 1) => SignedUnit::with_sign_of(2, b),
        (0, 2) => SignedUnit::with_sign_of(3, mu),
        (1, 0) => SignedUnit::new(2, -1),
        (1, 1) => SignedUnit::with_sign_of(1, a),
        (1, 2) => SignedUnit::with_sign_of(4, nu),
        (2, 0) => SignedUnit::with_sign_of(1, a),
        (2, 1) => SignedUnit::with_sign_of(2, b),
        (2, 2) => SignedUnit::new(3, 1),
        (2, 3) => SignedUnit::new(4, 1),
        _ => unreachable!(),
    };
    let (phi2, row2) = match row1.index {
        1 => {
            if b.abs() <= nu.abs() {
                (b.abs(), SignedUnit::with_sign_of(2, b))
            } else {
                (nu.abs(), SignedUnit::with_sign_of(4, nu))
            }
        }
        2 => {
            if a.abs() <= mu.abs() {
                (a.abs(), SignedUnit::with_sign_of(1, a))
            } else {
                (mu.abs(), SignedUnit::with_sign_of(3, mu))
            }
        }
        3 => (b.abs(), SignedUnit::with_sign_of(2, b)),
        _ => (a.abs(), SignedUnit::with_sign_of(1, a)),
    };
    NmsEval {
        phi: [phi1, phi2],
        deriv: DerivPattern::new(row1, row2),
    }
}

pub fn theta(w: Quad) -> [f64; 4] {
    let Quad { a, b, mu, nu } = w;
    [
        a.min(b).abs(),
        a.abs().min(mu.abs()),
        b.abs().min(nu.abs()),
        0f64.max(mu.min(nu.abs())).max(nu.min(mu.abs())),
    ]
}

pub fn theta_fb(w: Quad) -> [f64; 4] {
    theta_fb_grad(w).0
}

/// `θ_FB(w)` together with its 4×4 Jacobian (row `k` is `∇θ_{k,FB}`).
///
/// Rows of components with value zero are returned as zero.
pub fn theta_fb_grad(w: Quad) -> ([f64; 4], [[f64; 4]; 4]) {
    let Quad { a, b, mu, nu } = w;
    let mut val = [0.0; 4];
    let mut jac = [[0.0; 4]; 4];

    let (v, g) = ncp_fb_grad(a, b);
    val[0] = v.abs();
    if v != 0.0 {
        let s = sgn(v);
        jac[0] = [s * g[0], s * g[1], 0.0, 0.0];
    }

    let (v, g) = ncp_fb_grad(a.abs(), mu.abs());
    val[1] = v;
    jac[1] = [g[0] * sgn(a), 0.0, g[1] * sgn(mu), 0.0];

    let (v, g) = ncp_fb_grad(b.abs(), nu.abs());
    val[2] = v;
    jac[2] = [0.0, g[0] * sgn(b), 0.0, g[1] * sgn(nu)];

    if !(mu <= 0.0 && nu <= 0.0) {
        let (v, g) = ncp_fb_grad(mu.abs(), nu.abs());
        val[3] = v;
        jac[3] = [0.0, 0.0, g[0] * sgn(mu), g[1] * sgn(nu)];
    }
    (val, jac)
}

/// Explicit membership predicate for M.
pub fn in_m(w: Quad) -> bool {
    let Quad { a, b, mu, nu } = w;
    a >= 0.0
        && b >= 0.0
        && (a == 0.0 || b == 0.0)
        && (a == 0.0 || mu == 0.0)
        && (b == 0.0 || nu == 0.0)
        && (mu == 0.0 || nu == 0.0 || (mu < 0.0 && nu < 0.0))
}

/// ℓ∞-distance to M as the minimum over its three convex pieces.
pub fn dist_to_m(w: Quad) -> f64 {
    let Quad { a, b, mu, nu } = w;
    let pos = |t: f64| t.max(0.0);
    // a ≥ 0, b = μ = 0
    let d1 = 0f64.max(-a).max(b.abs()).max(mu.abs());
    // b ≥ 0, a = ν = 0
    let d2 = 0f64.max(-b).max(a.abs()).max(nu.abs());
    // a = b = 0, μ ≤ 0, ν ≤ 0
    let d3 = a.abs().max(b.abs()).max(pos(mu)).max(pos(nu));
    d1.min(d2).min(d3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: f64, b: f64, mu: f64, nu: f64) -> Quad {
        Quad::new(a, b, mu, nu)
    }

    #[test]
    fn ncp_min_priority() {
        assert_eq!(ncp_min(2.0, 0.0), (0.0, [0.0, 1.0]));
        assert_eq!(ncp_min(1.0, 1.0), (1.0, [1.0, 0.0]));
        assert_eq!(ncp_min(-3.0, 5.0), (-3.0, [1.0, 0.0]));
    }

    #[test]
    fn ncp_fb_values() {
        assert_eq!(ncp_fb(3.0, 4.0), -2.0);
        assert_eq!(ncp_fb(0.0, 0.0), 0.0);
        for t in [0.0, 0.5, 7.0, 1e10] {
            assert_eq!(ncp_fb(0.0, t), 0.0);
        }
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(q(2.0, 2.0, 1.0, 0.0)), [2.0, 2.0, 2.0]);
        assert_eq!(psi(q(0.0, 0.0, -1.0, -2.0)), [1.0, 2.0, 0.0]);
        assert_eq!(psi(q(1.0, 0.0, 0.0, 0.0)), [0.0, 1.0, 1.0]);
    }

    #[test]
    fn phi_known_points() {
        let e = phi_eval(q(1.0, 0.0, 0.0, 0.0));
        assert_eq!(e.phi, [0.0, 0.0]);
        assert_eq!(e.deriv.row1, SignedUnit::new(2, 1));
        assert_eq!(e.deriv.row2, SignedUnit::new(3, 1));
        assert_eq!(e.deriv.jclass, JClass::J23);

        let e = phi_eval(q(2.0, 2.0, 1.0, 0.0));
        assert_eq!(e.phi, [2.0, 1.0]);
        assert_eq!(e.deriv.row1, SignedUnit::new(2, 1));
        assert_eq!(e.deriv.row2, SignedUnit::new(3, 1));

        let e = phi_eval(q(0.0, 0.0, -1.0, -2.0));
        assert_eq!(e.phi, [0.0, 0.0]);
        assert_eq!(e.deriv.row1, SignedUnit::new(1, 1));
        assert_eq!(e.deriv.row2, SignedUnit::new(2, 1));
        assert_eq!(e.deriv.jclass, JClass::J12);
    }

    #[test]
    fn phi2_scaling_family() {
        for t in [0.5, 1.0, 3.0] {
            assert_eq!(phi_eval(q(2.0 * t, 2.0 * t, t, 0.0)).phi[1], t);
        }
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta(q(0.0, 0.0, -1.0, -2.0)), [0.0; 4]);
        assert_eq!(theta(q(2.0, 2.0, 1.0, 0.0)), [2.0, 1.0, 0.0, 0.0]);
        assert_eq!(theta(q(0.0, 0.0, 1.0, 1.0)), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn theta_fb_values() {
        let t = theta_fb(q(0.0, 0.0, 1.0, 1.0));
        assert_eq!(&t[..3], &[0.0; 3]);
        assert!((t[3] - (2f64.sqrt() - 2.0)).abs() < 1e-15);
        assert_eq!(theta_fb(q(3.0, 4.0, 0.0, 0.0)), [2.0, 0.0, 0.0, 0.0]);
        for w in [q(1.0, 0.0, 0.0, 5.0), q(0.0, 2.0, -3.0, 0.0), q(0.0, 0.0, -1.0, -2.0)] {
            assert_eq!(theta_fb(w), [0.0; 4]);
        }
    }

    #[test]
    fn distance_values() {
        assert_eq!(dist_to_m(q(2.0, 2.0, 1.0, 0.0)), 2.0);
        assert_eq!(dist_to_m(q(1.0, 0.0, 0.0, 0.0)), 0.0);
        assert_eq!(dist_to_m(q(0.0, 0.0, 1.0, 1.0)), 1.0);
    }

    #[test]
    fn membership_predicate() {
        assert!(in_m(q(1.0, 0.0, 0.0, -7.0)));
        assert!(in_m(q(0.0, 0.0, -1.0, -2.0)));
        assert!(in_m(q(0.0, 0.0, 3.0, 0.0)));
        assert!(!in_m(q(0.0, 0.0, 1.0, 1.0)));
        assert!(!in_m(q(0.0, 0.0, 1.0, -1.0)));
        assert!(!in_m(q(1.0, 0.0, 1.0, 0.0)));
        assert!(!in_m(q(-1.0, 0.0, 0.0, 0.0)));
    }

    fn value() -> impl Strategy<Value = f64> {
        // mix exact zeros and small integers in so ties and kinks are exercised
        prop_oneof![
            2 => -3.0..3.0f64,
            1 => Just(0.0),
            1 => (-3i32..=3).prop_map(f64::from),
        ]
    }

    fn quad() -> impl Strategy<Value = Quad> {
        (value(), value(), value(), value()).prop_map(|(a, b, mu, nu)| q(a, b, mu, nu))
    }

    // nonzero entries stay clear of the perturbation radius used below
    fn entry() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), 0.1..3.0f64, -3.0..-0.1f64]
    }

    fn point_in_m() -> impl Strategy<Value = Quad> {
        let s = 0.1..3.0f64;
        prop_oneof![
            (s.clone(), entry()).prop_map(|(a, nu)| q(a, 0.0, 0.0, nu)),
            (s.clone(), entry()).prop_map(|(b, mu)| q(0.0, b, mu, 0.0)),
            (s.clone(), s.clone()).prop_map(|(m, n)| q(0.0, 0.0, -m, -n)),
            entry().prop_map(|m| q(0.0, 0.0, m, 0.0)),
            entry().prop_map(|n| q(0.0, 0.0, 0.0, n)),
        ]
    }

    proptest! {
        #[test]
        fn zero_set_is_m(w in quad()) {
            let e = phi_eval(w);
            prop_assert_eq!(e.phi == [0.0, 0.0], in_m(w));
        }

        #[test]
        fn phi1_is_distance(w in quad()) {
            prop_assert!((phi_eval(w).phi[0] - dist_to_m(w)).abs() <= 1e-14);
        }

        #[test]
        fn phi1_is_max_theta(w in quad()) {
            let t = theta(w);
            let m = t.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            prop_assert_eq!(phi_eval(w).phi[0], m);
        }

        #[test]
        fn phi2_bounded_by_phi1(w in quad()) {
            let e = phi_eval(w);
            prop_assert!(e.phi[0] >= 0.0);
            prop_assert!(e.phi[1].abs() <= e.phi[0]);
        }

        #[test]
        fn pattern_reproduces_value(w in quad()) {
            let e = phi_eval(w);
            prop_assert_eq!(e.deriv.apply(w.to_array()), e.phi);
        }

        #[test]
        fn newton_identity_near_m(
            w in point_in_m(),
            h in prop::array::uniform4(-1.0..1.0f64),
        ) {
            let eps = 1e-3 * (1.0 + w.norm_inf());
            let h = h.map(|x| x * eps);
            let wh = Quad::from_array([w.a + h[0], w.b + h[1], w.mu + h[2], w.nu + h[3]]);
            let e = phi_eval(wh);
            let dh = e.deriv.apply(h);
            for k in 0..2 {
                prop_assert!((e.phi[k] - dh[k]).abs() <= 1e-15);
                // calmness
                prop_assert!(e.phi[k].abs() <= h.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1e-16);
            }
            let c = e.deriv.jclass;
            if w.a > 0.0 { prop_assert_eq!(c, JClass::J23); }
            if w.b > 0.0 { prop_assert_eq!(c, JClass::J14); }
            if w.mu != 0.0 { prop_assert!(c == JClass::J12 || c == JClass::J14); }
            if w.nu != 0.0 { prop_assert!(c == JClass::J12 || c == JClass::J23); }
        }

        #[test]
        fn active_set_equivalence(w in quad(), d in prop::array::uniform4(-2.0..2.0f64), pick in 0u8..16) {
            // force some components of δw onto their active-set values
            let mut d = d;
            let wa = w.to_array();
            for k in 0..4 {
                if pick & (1 << k) != 0 {
                    d[k] = -wa[k];
                }
            }
            let e = phi_eval(w);
            let lhs = e.deriv.apply(d);
            let newton = lhs[0] == -e.phi[0] && lhs[1] == -e.phi[1];
            let cond = match e.deriv.jclass {
                JClass::J23 => d[1] == -w.b && d[2] == -w.mu,
                JClass::J14 => d[0] == -w.a && d[3] == -w.nu,
                JClass::J12 => d[0] == -w.a && d[1] == -w.b,
            };
            prop_assert_eq!(newton, cond);
        }

        #[test]
        fn scalar_ncp_equivalence(a in value(), b in value()) {
            let m = ncp_min(a, b).0.abs();
            let f = ncp_fb(a, b).abs();
            let c = 2.0 + 2f64.sqrt();
            prop_assert!(2.0 / c * m <= f * (1.0 + 1e-14) + 1e-300);
            prop_assert!(f <= c * m * (1.0 + 1e-14) + 1e-300);
        }

        #[test]
        fn theta_fb_vanishes_on_m(w in point_in_m()) {
            prop_assert_eq!(theta_fb(w), [0.0; 4]);
        }
    }
}

use super::{Affine, LqProblem, PrimalDual};
use crate::error::{Error, Result};
use crate::linalg::Lu;
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Selector for the built-in test problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name")]
pub enum Builtin {
    Toy { c: f64 },
    Perturbed { eps: f64 },
    Obstacle { n: usize },
}

impl Builtin {
    pub fn build(&self) -> Result<LqProblem> {
        match *self {
            Builtin::Toy { c } => toy(c),
            Builtin::Perturbed { eps } => perturbed(eps),
            Builtin::Obstacle { n } => obstacle(n),
        }
    }

    /// The known global minimizer.
    pub fn reference_x(&self) -> Vec<f64> {
        match *self {
            Builtin::Toy { .. } => vec![0.0; 3],
            Builtin::Perturbed { .. } => vec![1.0, 0.0],
            Builtin::Obstacle { n } => vec![0.0; 3 * n],
        }
    }
}

/// `min x₁ + x₂ − x₃ + (c/2)‖x‖²` s.t. `−4x₁ + x₃ ≤ 0`, `−4x₂ + x₃ ≤ 0`, `0 ≤ x₁ ⊥ x₂ ≥ 0`.
pub fn toy(c: f64) -> Result<LqProblem> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("toy regularization c must be positive, got {c}")));
    }
    LqProblem::new(
        Mat::from_fn(3, 3, |i, j| if i == j { c } else { 0.0 }),
        vec![1.0, 1.0, -1.0],
        0.0,
        Affine::linear(&[&[-4.0, 0.0, 1.0], &[0.0, -4.0, 1.0]]),
        Affine::empty(3),
        Affine::linear(&[&[1.0, 0.0, 0.0]]),
        Affine::linear(&[&[0.0, 1.0, 0.0]]),
    )
}

/// M-stationary multipliers `λ = (3/4, 1/4)`, `μ = 2`, `ν = 0` at `x = 0`.
pub fn toy_root() -> PrimalDual {
    PrimalDual {
        x: vec![0.0; 3],
        lambda: vec![0.75, 0.25],
        eta: vec![],
        mu: vec![2.0],
        nu: vec![0.0],
    }
}

/// The second multiplier set `λ = (1/4, 3/4)`, `μ = 0`, `ν = 2`.
pub fn toy_root_alt() -> PrimalDual {
    PrimalDual {
        x: vec![0.0; 3],
        lambda: vec![0.25, 0.75],
        eta: vec![],
        mu: vec![0.0],
        nu: vec![2.0],
    }
}

/// `min ½‖x − (1, −ε)‖²` s.t. `0 ≤ x₁ ⊥ x₂ ≥ 0`.
pub fn perturbed(eps: f64) -> Result<LqProblem> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("perturbation eps must be nonnegative, got {eps}")));
    }
    LqProblem::new(
        Mat::identity(2, 2),
        vec![-1.0, eps],
        0.5 * (1.0 + eps * eps),
        Affine::empty(2),
        Affine::empty(2),
        Affine::linear(&[&[1.0, 0.0]]),
        Affine::linear(&[&[0.0, 1.0]]),
    )
}

fn laplacian(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// Discretized obstacle control problem in `x = (y, u, ξ) ∈ ℝ³ᴺ`:
/// `f = ½‖y‖² + eᵀy + ½‖u‖²`, `g = −u`, `h = Ay − u + ξ`, `G = −y`, `H = ξ`.
pub fn obstacle(n: usize) -> Result<LqProblem> {
    if n == 0 {
        return Err(Error::InvalidParameter("obstacle discretization N must be at least 1".into()));
    }
    let nx = 3 * n;
    let a = laplacian(n);
    let q = Mat::from_fn(nx, nx, |i, j| if i == j && i < 2 * n { 1.0 } else { 0.0 });
    let mut c = vec![0.0; nx];
    c[..n].iter_mut().for_each(|v| *v = 1.0);
    let g = Mat::from_fn(n, nx, |i, j| if j == n + i { -1.0 } else { 0.0 });
    let h = Mat::from_fn(n, nx, |i, j| {
        if j < n {
            a.read(i, j)
        } else if j == n + i {
            -1.0
        } else if j == 2 * n + i {
            1.0
        } else {
            0.0
        }
    });
    let big_g = Mat::from_fn(n, nx, |i, j| if j == i { -1.0 } else { 0.0 });
    let big_h = Mat::from_fn(n, nx, |i, j| if j == 2 * n + i { 1.0 } else { 0.0 });
    let zeros = || vec![0.0; n];
    LqProblem::new(
        q,
        c,
        0.0,
        Affine::new(g, zeros()),
        Affine::new(h, zeros()),
        Affine::new(big_g, zeros()),
        Affine::new(big_h, zeros()),
    )
}

/// Multipliers at `x = 0` from `[[A, I], [I − D, D]] (ν, μ) = (e, 0)` with
/// `λ = ν = −η`, where `D = diag(d)`.
pub fn obstacle_multipliers(d: &[bool]) -> PrimalDual {
    let n = d.len();
    let a = laplacian(n);
    let s: Vec<usize> = (0..n).filter(|&i| d[i]).collect();
    // ν vanishes off S and μ on S, so only A_SS ν_S = e_S needs a solve
    let a_ss = Mat::from_fn(s.len(), s.len(), |i, j| a.read(s[i], s[j]));
    let nu_s = if s.is_empty() { vec![] } else { Lu::factor(&a_ss).solve(&vec![1.0; s.len()]) };
    let mut nu = vec![0.0; n];
    for (k, &i) in s.iter().enumerate() {
        nu[i] = nu_s[k];
    }
    let mu: Vec<f64> = (0..n)
        .map(|i| if d[i] { 0.0 } else { 1.0 - (0..n).map(|j| a.read(i, j) * nu[j]).sum::<f64>() })
        .collect();
    PrimalDual {
        x: vec![0.0; 3 * n],
        lambda: nu.clone(),
        eta: nu.iter().map(|v| -v).collect(),
        mu,
        nu,
    }
}

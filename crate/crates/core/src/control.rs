//! Exact LQR mathematics for a known plant.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, spectral_norm, spectral_radius, symmetrize};

/// Convergence tolerance of the Riccati fixed-point iteration (relative to `1 + ||P||_F`).
pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITER: usize = 100_000;
/// Tolerance of the doubling Lyapunov summation (relative to `1 + ||P||_F`).
pub const LYAPUNOV_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("Riccati iteration did not converge (residual {residual:.3e} after {iterations} iterations)")]
    NotStabilizable { iterations: usize, residual: f64 },
    #[error("closed loop is not stable (spectral radius {0:.6})")]
    Unstable(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{name} must be symmetric positive definite")]
    NotPositiveDefinite { name: &'static str },
    #[error("noise variance must be positive and finite, got {0}")]
    BadNoise(f64),
}

/// Ground-truth plant `x_{t+1} = A x_t + B u_t + w_t`, `w_t ~ N(0, sigma2 I)`,
/// with stage cost `x^T Q x + u^T R u`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemTruth {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma2: f64,
}

impl SystemTruth {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma2: f64,
    ) -> Result<Self, ControlError> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || q.shape() != (n, n) {
            return Err(ControlError::Dimension(format!(
                "A {:?}, B {:?}, Q {:?}",
                a.shape(),
                b.shape(),
                q.shape()
            )));
        }
        let m = b.ncols();
        if r.shape() != (m, m) {
            return Err(ControlError::Dimension(format!("R {:?} for m = {m}", r.shape())));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(ControlError::BadNoise(sigma2));
        }
        check_spd(&q, "Q")?;
        check_spd(&r, "R")?;
        Ok(Self { a, b, q, r, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Largest `alpha0` with `Q, R >= alpha0 I`.
    pub fn alpha0(&self) -> f64 {
        linalg::min_eigenvalue(&self.q).min(linalg::min_eigenvalue(&self.r))
    }

    /// Smallest `alpha1` with `Q, R <= alpha1 I`.
    pub fn alpha1(&self) -> f64 {
        linalg::max_eigenvalue(&self.q).max(linalg::max_eigenvalue(&self.r))
    }

    /// `max(||A||_F, ||B||_F)`.
    pub fn phi(&self) -> f64 {
        self.a.norm().max(self.b.norm())
    }

    /// Stacked parameter `(A B)`.
    pub fn theta(&self) -> DMatrix<f64> {
        linalg::hcat(&self.a, &self.b)
    }

    pub fn optimal(&self) -> Result<RiccatiSolution, ControlError> {
        solve_dare(&self.a, &self.b, &self.q, &self.r)
    }

    /// `J* = sigma^2 Tr(P*)`.
    pub fn optimal_cost(&self) -> Result<f64, ControlError> {
        Ok(self.optimal()?.cost(self.sigma2))
    }

    /// Infinite-horizon average cost `J(K)` of `u = K x` on this plant.
    pub fn gain_cost(&self, k: &DMatrix<f64>) -> Result<f64, ControlError> {
        gain_cost(&self.a, &self.b, &self.q, &self.r, k, self.sigma2)
    }

    /// Spectral radius of `A + B K`.
    pub fn closed_loop_radius(&self, k: &DMatrix<f64>) -> f64 {
        spectral_radius(&(&self.a + &self.b * k))
    }

    /// `lambda_min(K* K*^T)`, the curvature constant of the A-hint controller.
    pub fn mu_star(&self) -> Result<f64, ControlError> {
        let k = self.optimal()?.k;
        Ok(linalg::min_eigenvalue(&(&k * k.transpose())))
    }
}

fn check_spd(m: &DMatrix<f64>, name: &'static str) -> Result<(), ControlError> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * (1.0 + m.norm()) || linalg::min_eigenvalue(m) <= 0.0 {
        return Err(ControlError::NotPositiveDefinite { name });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
    /// `||P - Riccati(P)||_F` at the returned `P`.
    pub residual: f64,
}

impl RiccatiSolution {
    /// Optimal average cost `sigma^2 Tr(P)` under noise variance `sigma2`.
    pub fn cost(&self, sigma2: f64) -> f64 {
        sigma2 * self.p.trace()
    }
}

struct RiccatiStep {
    next: DMatrix<f64>,
    gain: DMatrix<f64>,
}

fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Option<RiccatiStep> {
    let pb = p * b;
    let g = b.transpose() * &pb + r;
    let f = pb.transpose() * a;
    let gain = -linalg::solve_sym(&g, &f)?;
    let next = symmetrize(&(q + a.transpose() * p * a + f.transpose() * &gain));
    Some(RiccatiStep { next, gain })
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// of the Riccati map started at `P_0 = Q`, and returns the optimal gain
/// `K = -(B^T P B + R)^{-1} B^T P A`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution, ControlError> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(ControlError::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let fail = |iterations, residual| ControlError::NotStabilizable { iterations, residual };
    let mut p = symmetrize(q);
    let mut last_residual = f64::INFINITY;
    for it in 1..=DARE_MAX_ITER {
        let step = riccati_step(a, b, q, r, &p).ok_or_else(|| fail(it, f64::NAN))?;
        let residual = (&step.next - &p).norm();
        p = step.next;
        if !residual.is_finite() || p.norm() > 1e15 {
            return Err(fail(it, residual));
        }
        last_residual = residual;
        if residual <= DARE_TOL * (1.0 + p.norm()) {
            let fin = riccati_step(a, b, q, r, &p).ok_or_else(|| fail(it, f64::NAN))?;
            let residual = (&fin.next - &p).norm();
            let rho = spectral_radius(&(a + b * &fin.gain));
            if rho >= 1.0 {
                return Err(fail(it, residual));
            }
            return Ok(RiccatiSolution {
                p,
                k: fin.gain,
                iterations: it,
                residual,
            });
        }
    }
    Err(fail(DARE_MAX_ITER, last_residual))
}

/// Solves `P = M + A^T P A` for stable `A` by doubling:
/// `P <- P + A_j^T P A_j`, `A_{j+1} = A_j^2`.
pub fn solve_lyapunov_cost(a_cl: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    if !a_cl.is_square() || m.shape() != a_cl.shape() {
        return Err(ControlError::Dimension(format!("A_cl {:?}, M {:?}", a_cl.shape(), m.shape())));
    }
    let rho = spectral_radius(a_cl);
    if rho.is_nan() || rho >= 1.0 {
        return Err(ControlError::Unstable(rho));
    }
    let mut p = symmetrize(m);
    let mut power = a_cl.clone();
    // 2^64 summands is far beyond anything representable with rho < 1.
    for _ in 0..64 {
        let inc = power.transpose() * &p * &power;
        p += &inc;
        if inc.norm() <= LYAPUNOV_TOL * (1.0 + p.norm()) {
            break;
        }
        power = &power * &power;
    }
    Ok(symmetrize(&p))
}

/// `J(K) = sigma^2 Tr(P_K)` where `P_K = Q + K^T R K + (A+BK)^T P_K (A+BK)`.
pub fn gain_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    sigma2: f64,
) -> Result<f64, ControlError> {
    let a_cl = a + b * k;
    let m = q + k.transpose() * r * k;
    Ok(sigma2 * solve_lyapunov_cost(&a_cl, &m)?.trace())
}

/// `(k, ell)` strong-stability certificate derived from a cost bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityCertificate {
    pub k: f64,
    pub ell: f64,
    pub source_cost: f64,
}

/// A gain with `J(K) <= J` is `(k, ell)` strongly stable with
/// `k = J / (alpha0 sigma^2)` and `ell = alpha0 sigma^2 / (2 J)`.
pub fn certify_from_cost(j_of_k: f64, alpha0: f64, sigma2: f64) -> StabilityCertificate {
    let scale = alpha0 * sigma2;
    StabilityCertificate {
        k: j_of_k / scale,
        ell: scale / (2.0 * j_of_k),
        source_cost: j_of_k,
    }
}

impl StabilityCertificate {
    /// Empirical check `||K|| <= k` and `rho(A + B K) <= 1 - ell / 2`.
    pub fn holds_for(&self, a: &DMatrix<f64>, b: &DMatrix<f64>, gain: &DMatrix<f64>) -> bool {
        spectral_norm(gain) <= self.k && spectral_radius(&(a + b * gain)) <= 1.0 - self.ell / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_dynamics_gives_p_equal_q() {
        let s = solve_dare(&m1(0.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert!((s.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(s.k[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn scalar_golden_ratio() {
        // P^2 - P - 1 = 0, K = -P / (P + 1).
        let s = solve_dare(&m1(1.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s.p[(0, 0)] - golden).abs() < 1e-9);
        assert!((s.k[(0, 0)] + golden / (golden + 1.0)).abs() < 1e-9);
        assert!((s.k[(0, 0)] + 0.6180339887).abs() < 1e-9);
    }

    #[test]
    fn unstabilizable_pair_is_reported() {
        // Unstable mode with no actuation.
        let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = solve_dare(&a, &b, &DMatrix::identity(2, 2), &m1(1.0)).unwrap_err();
        assert!(matches!(err, ControlError::NotStabilizable { .. }));
    }

    #[test]
    fn lyapunov_examples() {
        let p = solve_lyapunov_cost(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2)).unwrap();
        assert!((p - DMatrix::identity(2, 2)).norm() < 1e-15);
        let p = solve_lyapunov_cost(&m1(0.5), &m1(1.0)).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            solve_lyapunov_cost(&m1(1.0), &m1(1.0)),
            Err(ControlError::Unstable(_))
        ));
    }

    #[test]
    fn certificate_formulas() {
        let c = certify_from_cost(2.0, 1.0, 1.0);
        assert_eq!((c.k, c.ell), (2.0, 0.25));
        let c = certify_from_cost(3.0, 3.0, 1.0);
        assert_eq!((c.k, c.ell), (1.0, 0.5));
        let c = certify_from_cost(10.0, 0.5, 2.0);
        assert!((c.k - 10.0).abs() < 1e-15 && (c.ell - 0.05).abs() < 1e-15);
    }

    #[test]
    fn truth_rejects_bad_inputs() {
        let bad_q = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(SystemTruth::new(m1(1.0), m1(1.0), bad_q, m1(1.0), 1.0).is_err());
        assert!(SystemTruth::new(m1(1.0), m1(1.0), m1(1.0), m1(1.0), 0.0).is_err());
        assert!(SystemTruth::new(m1(1.0), DMatrix::zeros(2, 1), m1(1.0), m1(1.0), 1.0).is_err());
    }

    #[test]
    fn optimal_cost_matches_lyapunov_route() {
        let t = SystemTruth::new(m1(1.2), m1(0.7), m1(2.0), m1(0.5), 1.5).unwrap();
        let sol = t.optimal().unwrap();
        let via_lyap = t.gain_cost(&sol.k).unwrap();
        assert!((via_lyap - sol.cost(1.5)).abs() < 1e-8);
    }
}

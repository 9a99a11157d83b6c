//! Regularized least-squares identification and the hint-augmented Gram algebra.
//!
//! Notation used throughout, with `z_s = (x_s, u_s)` and sums over the
//! samples seen so far:
//!
//! * `W = sum z z^T + lambda I` (joint Gram),
//! * `V_x = sum x x^T + lambda I`, `V_u = sum u u^T + lambda I`,
//! * `Y_u = V_u - (sum u x^T) V_x^{-1} (sum x u^T)`, the Schur complement of
//!   the state block; this is the `Y` of the B-hint identity,
//! * `Y_x = V_x - (sum x u^T) V_u^{-1} (sum u x^T)`, the Schur complement of
//!   the action block; this is the `Y` of the A-hint identity.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::control::SystemTruth;
use crate::hints::HintMode;
use crate::linalg::{self, block2, hcat, right_solve_sym, stack, symmetrize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("regularized Gram matrix is singular")]
    Singular,
    #[error("hint weight gamma = {0} leaves no data weight (needs gamma < 1)")]
    DegenerateGamma(f64),
    #[error("noise-weighted sums were not recorded for every sample")]
    MissingNoise,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Running sums of the observed transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct GramAccumulator {
    n: usize,
    m: usize,
    pub lambda: f64,
    pub count: usize,
    /// `sum x_s x_s^T`
    pub xx: DMatrix<f64>,
    /// `sum x_s u_s^T`
    pub xu: DMatrix<f64>,
    /// `sum u_s u_s^T`
    pub uu: DMatrix<f64>,
    /// `sum x_{s+1} x_s^T`
    pub xnext_x: DMatrix<f64>,
    /// `sum x_{s+1} u_s^T`
    pub xnext_u: DMatrix<f64>,
    /// `sum w_s z_s^T`. Oracle-only channel, never filled by a controller.
    noise_z: Option<DMatrix<f64>>,
    noise_count: usize,
}

impl GramAccumulator {
    pub fn new(n: usize, m: usize, lambda: f64) -> Self {
        Self {
            n,
            m,
            lambda,
            count: 0,
            xx: DMatrix::zeros(n, n),
            xu: DMatrix::zeros(n, m),
            uu: DMatrix::zeros(m, m),
            xnext_x: DMatrix::zeros(n, n),
            xnext_u: DMatrix::zeros(n, m),
            noise_z: None,
            noise_count: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn accumulate(&mut self, x: &DVector<f64>, u: &DVector<f64>, x_next: &DVector<f64>) {
        assert_eq!(x.len(), self.n, "state dimension");
        assert_eq!(u.len(), self.m, "action dimension");
        assert_eq!(x_next.len(), self.n, "next-state dimension");
        self.xx.ger(1.0, x, x, 1.0);
        self.xu.ger(1.0, x, u, 1.0);
        self.uu.ger(1.0, u, u, 1.0);
        self.xnext_x.ger(1.0, x_next, x, 1.0);
        self.xnext_u.ger(1.0, x_next, u, 1.0);
        self.count += 1;
    }

    /// Like [`accumulate`](Self::accumulate) but also records `w_s z_s^T`,
    /// which the closed-form identities need.
    pub fn accumulate_with_noise(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
        w: &DVector<f64>,
    ) {
        self.accumulate(x, u, x_next);
        let z = stack(x, u);
        let acc = self
            .noise_z
            .get_or_insert_with(|| DMatrix::zeros(self.n, self.n + self.m));
        acc.ger(1.0, w, &z, 1.0);
        self.noise_count += 1;
    }

    /// `sum w_s z_s^T` if every sample carried its noise.
    pub fn noise_weighted(&self) -> Option<DMatrix<f64>> {
        self.noise_sum().ok()
    }

    fn noise_sum(&self) -> Result<DMatrix<f64>, EstimationError> {
        if self.noise_count != self.count {
            return Err(EstimationError::MissingNoise);
        }
        Ok(self
            .noise_z
            .clone()
            .unwrap_or_else(|| DMatrix::zeros(self.n, self.n + self.m)))
    }

    /// Joint regularized Gram `W`.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.n + self.m;
        block2(&self.xx, &self.xu, &self.xu.transpose(), &self.uu) + DMatrix::identity(d, d) * self.lambda
    }

    /// Unregularized `sum z z^T`.
    pub fn raw_gram(&self) -> DMatrix<f64> {
        block2(&self.xx, &self.xu, &self.xu.transpose(), &self.uu)
    }

    /// `V_x = sum x x^T + lambda I`.
    pub fn state_gram(&self) -> DMatrix<f64> {
        &self.xx + DMatrix::identity(self.n, self.n) * self.lambda
    }

    /// `V_u = sum u u^T + lambda I`.
    pub fn action_gram(&self) -> DMatrix<f64> {
        &self.uu + DMatrix::identity(self.m, self.m) * self.lambda
    }

    /// `Y_u`, the Schur complement of the state block of `W`.
    pub fn action_schur(&self) -> Result<DMatrix<f64>, EstimationError> {
        let vinv_xu = linalg::solve_sym(&self.state_gram(), &self.xu).ok_or(EstimationError::Singular)?;
        Ok(symmetrize(&(self.action_gram() - self.xu.transpose() * vinv_xu)))
    }

    /// `Y_x`, the Schur complement of the action block of `W`.
    pub fn state_schur(&self) -> Result<DMatrix<f64>, EstimationError> {
        let vinv_ux = linalg::solve_sym(&self.action_gram(), &self.xu.transpose()).ok_or(EstimationError::Singular)?;
        Ok(symmetrize(&(self.state_gram() - &self.xu * vinv_ux)))
    }

    /// `(sum x_{s+1} x_s^T   sum x_{s+1} u_s^T)`.
    pub fn cross_moments(&self) -> DMatrix<f64> {
        hcat(&self.xnext_x, &self.xnext_u)
    }

    /// Joint ridge estimate `(A B) = (sum x' x^T, sum x' u^T) W^{-1}`.
    pub fn rls_joint(&self) -> Result<EstimatePair, EstimationError> {
        let theta = right_solve_sym(&self.cross_moments(), &self.gram()).ok_or(EstimationError::Singular)?;
        Ok(EstimatePair::from_theta(&theta, self.n))
    }

    /// Ridge estimate of `A` with `B` held fixed:
    /// `A = (sum x' x^T - B sum u x^T) V_x^{-1}`.
    pub fn rls_a_given_b(&self, b_fixed: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimationError> {
        if b_fixed.shape() != (self.n, self.m) {
            return Err(EstimationError::Dimension(format!("B {:?}", b_fixed.shape())));
        }
        let lhs = &self.xnext_x - b_fixed * self.xu.transpose();
        right_solve_sym(&lhs, &self.state_gram()).ok_or(EstimationError::Singular)
    }

    /// Ridge estimate of `B` with `A` held fixed:
    /// `B = (sum x' u^T - A sum x u^T) V_u^{-1}`.
    pub fn rls_b_given_a(&self, a_fixed: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimationError> {
        if a_fixed.shape() != (self.n, self.n) {
            return Err(EstimationError::Dimension(format!("A {:?}", a_fixed.shape())));
        }
        let lhs = &self.xnext_u - a_fixed * &self.xu;
        right_solve_sym(&lhs, &self.action_gram()).ok_or(EstimationError::Singular)
    }

    /// `W^{-1}` assembled blockwise from `V_x^{-1}` and `Y_u^{-1}`.
    pub fn assembled_inverse(&self) -> Result<DMatrix<f64>, EstimationError> {
        let vinv = linalg::inverse_sym(&self.state_gram()).ok_or(EstimationError::Singular)?;
        let yinv = linalg::inverse_sym(&self.action_schur()?).ok_or(EstimationError::Singular)?;
        let vx = &vinv * &self.xu;
        let top_left = &vinv + &vx * &yinv * vx.transpose();
        let top_right = -(&vx * &yinv);
        Ok(block2(&top_left, &top_right, &top_right.transpose(), &yinv))
    }

    /// Hint-augmented Gram.
    ///
    /// For a B hint the action block gains `gamma/(1-gamma) Y_u`; for an A
    /// hint the state block gains `gamma/(1-gamma) Y_x`. In both cases the
    /// matching Schur complement of the augmented matrix is `Y / (1-gamma)`.
    pub fn hinted_gram(&self, mode: HintMode, gamma: f64) -> Result<HintedGram, EstimationError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(EstimationError::DegenerateGamma(gamma));
        }
        let weight = gamma / (1.0 - gamma);
        let mut augmented = self.gram();
        let (base_schur, schur) = match mode {
            HintMode::B => {
                let y = self.action_schur()?;
                let mut block = augmented.view_mut((self.n, self.n), (self.m, self.m));
                block += &y * weight;
                let s = linalg::schur_complement(&augmented, self.n).ok_or(EstimationError::Singular)?;
                (y, s)
            }
            HintMode::A => {
                let y = self.state_schur()?;
                let mut block = augmented.view_mut((0, 0), (self.n, self.n));
                block += &y * weight;
                let s = trailing_schur(&augmented, self.n).ok_or(EstimationError::Singular)?;
                (y, s)
            }
        };
        Ok(HintedGram {
            mode,
            gamma,
            augmented: symmetrize(&augmented),
            schur,
            base_schur,
        })
    }

    /// Right-hand side of the closed-form identity for the B-hint pipeline
    /// (joint ridge estimate, hint on `B`, ridge re-fit of `A`):
    ///
    /// `(A* B*) - lambda (A* B*) W^-1 + (sum w z^T) W^-1 + (0, E Y_u / (1-gamma)) W^-1`
    ///
    /// with `W` the B-augmented Gram. `gamma = 1` substitutes `B = B* + E`
    /// directly.
    pub fn closed_form_identity_b(
        &self,
        truth: &SystemTruth,
        gamma: f64,
        e: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>, EstimationError> {
        let noise = self.noise_sum()?;
        let n = self.n;
        if gamma >= 1.0 {
            let vx = self.state_gram();
            let wx = noise.columns(0, n).into_owned();
            let corr = -&truth.a * self.lambda + wx - e * self.xu.transpose();
            let a = &truth.a + right_solve_sym(&corr, &vx).ok_or(EstimationError::Singular)?;
            return Ok(hcat(&a, &(&truth.b + e)));
        }
        let hg = self.hinted_gram(HintMode::B, gamma)?;
        let theta = truth.theta();
        let hint_term = hcat(&DMatrix::zeros(n, n), &(e * &hg.base_schur / (1.0 - gamma)));
        let corr = -&theta * self.lambda + noise + hint_term;
        Ok(theta + right_solve_sym(&corr, &hg.augmented).ok_or(EstimationError::Singular)?)
    }

    /// Closed form for the A-hint pipeline (joint ridge estimate, hint on `A`,
    /// ridge re-fit of `B`):
    ///
    /// `(A* B*) - lambda (A* B*) Z + (sum w z^T) Z + (E Y_x / (1-gamma), 0) Z`
    ///
    /// where `Z` is the inverse of the A-augmented Gram.
    pub fn closed_form_identity_a(
        &self,
        truth: &SystemTruth,
        gamma: f64,
        e: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>, EstimationError> {
        let noise = self.noise_sum()?;
        let (n, m) = (self.n, self.m);
        if gamma >= 1.0 {
            let vu = self.action_gram();
            let wu = noise.columns(n, m).into_owned();
            let corr = -&truth.b * self.lambda + wu - e * &self.xu;
            let b = &truth.b + right_solve_sym(&corr, &vu).ok_or(EstimationError::Singular)?;
            return Ok(hcat(&(&truth.a + e), &b));
        }
        let hg = self.hinted_gram(HintMode::A, gamma)?;
        let theta = truth.theta();
        let hint_term = hcat(&(e * &hg.base_schur / (1.0 - gamma)), &DMatrix::zeros(n, m));
        let corr = -&theta * self.lambda + noise + hint_term;
        Ok(theta + right_solve_sym(&corr, &hg.augmented).ok_or(EstimationError::Singular)?)
    }
}

fn trailing_schur(x: &DMatrix<f64>, split: usize) -> Option<DMatrix<f64>> {
    // Schur complement of the trailing block: A - B C^{-1} B^T.
    let d = x.nrows();
    let a = x.view((0, 0), (split, split)).into_owned();
    let b = x.view((0, split), (split, d - split)).into_owned();
    let c = x.view((split, split), (d - split, d - split)).into_owned();
    let cinv_bt = linalg::solve_sym(&c, &b.transpose())?;
    Some(symmetrize(&(a - b * cinv_bt)))
}

/// Hint-augmented Gram matrix together with its Schur complements.
#[derive(Clone, Debug, PartialEq)]
pub struct HintedGram {
    pub mode: HintMode,
    pub gamma: f64,
    /// `W-hat` for a B hint, `Z^{-1}` for an A hint.
    pub augmented: DMatrix<f64>,
    /// Schur complement of `augmented` on the hinted block.
    pub schur: DMatrix<f64>,
    /// The un-augmented `Y` the augmentation was built from.
    pub base_schur: DMatrix<f64>,
}

impl HintedGram {
    /// Relative Frobenius gap `||Y-hat - Y/(1-gamma)|| / (1 + ||Y/(1-gamma)||)`.
    pub fn schur_identity_gap(&self) -> f64 {
        let expected = &self.base_schur / (1.0 - self.gamma);
        (&self.schur - &expected).norm() / (1.0 + expected.norm())
    }
}

/// Estimated `(A, B)` with an optional distance to the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatePair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `||(A - A*, B - B*)||` (operator norm), when the truth is at hand.
    pub delta_norm: Option<f64>,
}

impl EstimatePair {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        Self { a, b, delta_norm: None }
    }

    pub fn from_theta(theta: &DMatrix<f64>, n: usize) -> Self {
        let m = theta.ncols() - n;
        Self::new(theta.columns(0, n).into_owned(), theta.columns(n, m).into_owned())
    }

    pub fn theta(&self) -> DMatrix<f64> {
        hcat(&self.a, &self.b)
    }

    pub fn with_truth(mut self, truth: &SystemTruth) -> Self {
        self.delta_norm = Some(linalg::spectral_norm(&(self.theta() - truth.theta())));
        self
    }
}

/// The hint model: `estimate + gamma (target - estimate) + E`.
pub fn apply_hint(estimate: &DMatrix<f64>, target: &DMatrix<f64>, gamma: f64, e: &DMatrix<f64>) -> DMatrix<f64> {
    estimate + (target - estimate) * gamma + e
}

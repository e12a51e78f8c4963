//! ℓ2-robust logistic loss.
//!
//! For `Q(w; x, y) = ln(1 + exp(-y <x, w>))` the inner maximum over
//! `‖δ‖ ≤ ε` is attained at `δ* = -ε y w / ‖w‖`, which gives the closed form
//!
//! ```text
//! g(w; x, y) = softplus(-y <x, w> + ε ‖w‖)
//! ∇g(w; x, y) = σ(z) (-y x + ε w / ‖w‖),   z = -y <x, w> + ε ‖w‖
//! ```
//!
//! At `‖w‖ ≤ DEGENERATE_NORM` the perturbation and the `w / ‖w‖` factor are
//! replaced by zero.

use crate::dataset::{AgentDataset, Label, NetworkDataset, Sample};
use crate::numeric::{dot, norm};
use crate::{Error, Result};

/// Norm below which `w` is treated as zero for the FGM direction.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dim(w: &[f64], s: &Sample) -> Result<()> {
    if w.len() != s.x.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: s.x.len(),
        });
    }
    Ok(())
}

pub fn clean_loss(w: &[f64], s: &Sample) -> Result<f64> {
    check_dim(w, s)?;
    Ok(softplus(-s.y.sign() * dot(&s.x, w)))
}

/// `δ* = -ε y w / ‖w‖`, or zero when `‖w‖` is degenerate.
pub fn fgm_perturbation(w: &[f64], y: Label, epsilon: f64) -> Vec<f64> {
    let n = norm(w);
    if n <= DEGENERATE_NORM || epsilon == 0.0 {
        return vec![0.0; w.len()];
    }
    let scale = -epsilon * y.sign() / n;
    w.iter().map(|wi| scale * wi).collect()
}

/// Adversarial loss evaluator with `‖w‖` precomputed.
#[derive(Debug, Clone, Copy)]
pub struct RobustScorer<'a> {
    w: &'a [f64],
    penalty: f64,
}

impl<'a> RobustScorer<'a> {
    pub fn new(w: &'a [f64], epsilon: f64) -> Self {
        let n = norm(w);
        let penalty = if n <= DEGENERATE_NORM { 0.0 } else { epsilon * n };
        Self { w, penalty }
    }

    #[inline]
    pub fn margin(&self, x: &[f64], y: Label) -> f64 {
        -y.sign() * dot(x, self.w) + self.penalty
    }

    #[inline]
    pub fn loss(&self, s: &Sample) -> f64 {
        softplus(self.margin(&s.x, s.y))
    }
}

pub fn adversarial_loss(w: &[f64], s: &Sample, epsilon: f64) -> Result<f64> {
    check_dim(w, s)?;
    Ok(RobustScorer::new(w, epsilon).loss(s))
}

/// Writes `∇g(w; x, y)` into `out`. No dimension checks.
#[inline]
pub fn adversarial_gradient_into(w: &[f64], x: &[f64], y: Label, epsilon: f64, out: &mut [f64]) {
    let n = norm(w);
    let sign = y.sign();
    let (penalty, direction_scale) = if n <= DEGENERATE_NORM {
        (0.0, 0.0)
    } else {
        (epsilon * n, epsilon / n)
    };
    let z = -sign * dot(x, w) + penalty;
    let s = sigmoid(z);
    for ((o, &xi), &wi) in out.iter_mut().zip(x).zip(w) {
        *o = s * (-sign * xi + direction_scale * wi);
    }
}

pub fn adversarial_gradient(w: &[f64], s: &Sample, epsilon: f64) -> Result<Vec<f64>> {
    check_dim(w, s)?;
    let mut g = vec![0.0; w.len()];
    adversarial_gradient_into(w, &s.x, s.y, epsilon, &mut g);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Empirical,
    UserOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantProvenance {
    pub l_w: Provenance,
    pub l_ww: Provenance,
    pub l_wx: Provenance,
}

impl ConstantProvenance {
    fn uniform(p: Provenance) -> Self {
        Self {
            l_w: p,
            l_ww: p,
            l_wx: p,
        }
    }
}

/// Smoothness constants of the loss.
///
/// - `l_w`: Lipschitz constant of the loss in `w`;
/// - `l_ww`: Lipschitz constant of the gradient in `w`;
/// - `l_wx`: Lipschitz constant of the gradient in `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    pub l_w: f64,
    pub l_ww: f64,
    pub l_wx: f64,
    pub provenance: ConstantProvenance,
}

impl LipschitzConstants {
    /// User-supplied constants.
    pub fn new(l_w: f64, l_ww: f64, l_wx: f64) -> Result<Self> {
        Self::checked(l_w, l_ww, l_wx, ConstantProvenance::uniform(Provenance::UserOverride))
    }

    fn checked(l_w: f64, l_ww: f64, l_wx: f64, provenance: ConstantProvenance) -> Result<Self> {
        for (name, v) in [("L_w", l_w), ("L_ww", l_ww), ("L_wx", l_wx)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::DegenerateConstants(format!(
                    "{name} = {v} must be finite and strictly positive"
                )));
            }
        }
        Ok(Self {
            l_w,
            l_ww,
            l_wx,
            provenance,
        })
    }

    /// Largest step for which the adaptation map is certified
    /// non-expansive (exclusive).
    pub fn step_limit(&self) -> f64 {
        1.0 / self.l_ww
    }
}

/// Analytic smoothness constants for the logistic loss over the observed
/// data, valid for iterates with `‖w‖ ≤ iterate_norm_cap`.
///
/// The adversarial loss evaluates `Q` at perturbed points `x + δ` with
/// `‖δ‖ ≤ ε`, so the feature radius used is `R = max ‖x‖ + ε` over the
/// training data and the holdout:
///
/// - `L_w  = R`            (`‖∇_w Q‖ = σ · ‖x‖`)
/// - `L_ww = R² / 4`       (`σ' ≤ 1/4`)
/// - `L_wx = 1 + R · B / 4` (operator norm of the mixed derivative)
///
/// With `ε = 0` these reduce to the plain data constants.
pub fn estimate_lipschitz_constants(
    data: &NetworkDataset,
    holdout: &AgentDataset,
    epsilon: f64,
    iterate_norm_cap: f64,
) -> Result<LipschitzConstants> {
    if data.num_agents() == 0 || data.samples_per_agent() == 0 {
        return Err(Error::InvalidDataset("empty dataset".into()));
    }
    if !(iterate_norm_cap >= 0.0) {
        return Err(Error::DegenerateConstants(format!(
            "iterate norm cap must be nonnegative, got {iterate_norm_cap}"
        )));
    }
    let radius = data.max_feature_norm().max(holdout.max_feature_norm()) + epsilon;
    LipschitzConstants::checked(
        radius,
        radius * radius / 4.0,
        1.0 + radius * iterate_norm_cap / 4.0,
        ConstantProvenance::uniform(Provenance::Analytic),
    )
}

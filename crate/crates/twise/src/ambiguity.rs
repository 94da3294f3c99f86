//! Expected-loss calculus over discrete depth mixtures.
//!
//! A pixel near an occlusion boundary is modeled as a discrete mixture: its
//! true depth is dᵢ with probability pᵢ. An estimator trained on
//! representative data converges to the minimizer of the expected loss
//! `E{L}(d) = Σᵢ pᵢ L(d − dᵢ)`, so evaluating that minimizer for each loss
//! predicts what a trained network outputs at ambiguous pixels without
//! training anything.
//!
//! For the piecewise-linear losses the expected loss is piecewise linear in
//! d, so its minimum sits at one of the mixture depths (a corner). For the
//! binary mixture (d1, d2) with probabilities (p1, p2) the corner values
//! under ale are `p2(d2−d1)/γ` at d1 and `p1(d2−d1)γ` at d2, which makes d1
//! the minimizer exactly when γ exceeds √(p2/p1). The rale threshold is the
//! same with the probability ratio inverted.

use serde::{Deserialize, Serialize};

use crate::losses::{ale_raw, rale_raw};
use crate::{Error, Result};

/// Relative tolerance for calling two corner values a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Discrete depth mixture at one pixel.
///
/// Depths are strictly increasing; probabilities sum to one. The binary case
/// `[d1, d2]` with d1 < d2 reads as foreground/background. Mixtures with more
/// than two points are accepted and handled by corner enumeration, but the
/// binary case is the analytically characterized fast path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityModel {
    depths: Vec<f64>,
    probs: Vec<f64>,
}

impl AmbiguityModel {
    pub fn new(depths: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let model = Self { depths, probs };
        model.validate()?;
        Ok(model)
    }

    /// Binary mixture: depth `d1` with probability `p1`, else `d2`.
    pub fn binary(d1: f64, d2: f64, p1: f64) -> Result<Self> {
        Self::new(vec![d1, d2], vec![p1, 1.0 - p1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths.len() != self.probs.len() {
            return Err(Error::InvalidModel(
                "depths and probs must be non-empty and equal-length".into(),
            ));
        }
        if self.depths.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidModel("non-finite depth".into()));
        }
        if !self.depths.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidModel("depths must be strictly increasing".into()));
        }
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel("probabilities must be non-negative".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_binary(&self) -> bool {
        self.depths.len() == 2
    }

    /// Mixture mean `Σ pᵢ dᵢ`, the squared-loss minimizer.
    pub fn mean(&self) -> f64 {
        self.depths
            .iter()
            .zip(&self.probs)
            .map(|(d, p)| d * p)
            .sum()
    }
}

/// Loss selector for the expected-loss analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Asymmetric linear error (foreground estimator).
    Ale,
    /// Reflected asymmetric linear error (background estimator).
    Rale,
    /// Absolute error.
    Abs,
    /// Squared error.
    Sq,
}

impl LossKind {
    fn eval(self, epsilon: f64, gamma: f64) -> f64 {
        match self {
            LossKind::Ale => ale_raw(epsilon, gamma).value,
            LossKind::Rale => rale_raw(epsilon, gamma).value,
            LossKind::Abs => epsilon.abs(),
            LossKind::Sq => epsilon * epsilon,
        }
    }
}

/// Expected loss `Σᵢ pᵢ L(d − dᵢ)` of estimating depth `d` under the mixture.
pub fn expected_loss(model: &AmbiguityModel, loss: LossKind, gamma: f64, d: f64) -> Result<f64> {
    model.validate()?;
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::domain(format!("gamma must be ≥ 1, got {gamma}")));
    }
    Ok(model
        .depths
        .iter()
        .zip(&model.probs)
        .map(|(di, pi)| pi * loss.eval(d - di, gamma))
        .sum())
}

/// Minimizer of the expected loss, with a tie flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub depth: f64,
    /// Set when the two lowest corner values differ by less than
    /// [`TIE_TOLERANCE`] relative.
    pub is_tie: bool,
}

/// Argmin of [`expected_loss`] over d.
///
/// For the piecewise-linear losses the minimum lies at one of the mixture
/// depths, so the search enumerates corners. For the squared loss the
/// minimizer is the mixture mean in closed form.
pub fn minimizer(model: &AmbiguityModel, loss: LossKind, gamma: f64) -> Result<Minimizer> {
    model.validate()?;
    if loss == LossKind::Sq {
        return Ok(Minimizer {
            depth: model.mean(),
            is_tie: false,
        });
    }
    let mut best = (f64::INFINITY, 0usize);
    let mut second = f64::INFINITY;
    for (i, &d) in model.depths.iter().enumerate() {
        let v = expected_loss(model, loss, gamma, d)?;
        if v < best.0 {
            second = best.0;
            best = (v, i);
        } else if v < second {
            second = v;
        }
    }
    let is_tie = if second.is_finite() {
        let scale = best.0.abs().max(second.abs()).max(f64::MIN_POSITIVE);
        (second - best.0) / scale < TIE_TOLERANCE
    } else {
        false
    };
    Ok(Minimizer {
        depth: model.depths[best.1],
        is_tie,
    })
}

/// Selection threshold `√(p2/p1)` of the foreground estimator.
///
/// The expected-ale minimizer of a binary mixture is d1 exactly when γ is
/// strictly above this value, d2 when strictly below, and a tie at equality.
/// The rale threshold inverts the ratio: `gamma_threshold(p2, p1)`.
pub fn gamma_threshold(p1: f64, p2: f64) -> Result<f64> {
    if !p1.is_finite() || p1 <= 0.0 {
        return Err(Error::domain(format!("p1 must be > 0, got {p1}")));
    }
    if p2 < 0.0 || !p2.is_finite() {
        return Err(Error::domain(format!("p2 must be ≥ 0, got {p2}")));
    }
    Ok((p2 / p1).sqrt())
}

/// Fusion-weight minimizer with a tie flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionChoice {
    /// Optimal blend weight, 1 selecting the foreground estimate.
    pub sigma: f64,
    /// Set at p = 0.5, where the expected fusion loss is constant in σ.
    pub is_tie: bool,
}

/// Minimizer of the expected fusion loss over σ ∈ [0, 1].
///
/// The expected loss is linear in σ, so the optimum is σ = 1 when the
/// foreground probability exceeds 0.5 and σ = 0 below it. At exactly 0.5
/// every σ attains the same value; σ = 1 is returned with the tie flag set.
pub fn fusion_minimizer(p: f64) -> FusionChoice {
    debug_assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
    if p > 0.5 {
        FusionChoice {
            sigma: 1.0,
            is_tie: false,
        }
    } else if p < 0.5 {
        FusionChoice {
            sigma: 0.0,
            is_tie: false,
        }
    } else {
        FusionChoice {
            sigma: 1.0,
            is_tie: true,
        }
    }
}

#[cfg(test)]
pub(crate) mod brute {
    //! Grid brute-force oracles, independent of the corner search.

    use super::*;

    /// Argmin of the expected loss over a uniform grid.
    pub fn grid_minimizer(
        model: &AmbiguityModel,
        loss: LossKind,
        gamma: f64,
        lo: f64,
        hi: f64,
        step: f64,
    ) -> f64 {
        let mut best = (f64::INFINITY, lo);
        let n = ((hi - lo) / step).ceil() as usize;
        for k in 0..=n {
            let d = lo + k as f64 * step;
            let v = expected_loss(model, loss, gamma, d).unwrap();
            if v < best.0 {
                best = (v, d);
            }
        }
        best.1
    }

}

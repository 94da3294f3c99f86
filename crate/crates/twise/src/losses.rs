//! Elementwise loss kernels with values and analytic subgradients.
//!
//! The asymmetric linear error and its reflection,
//!
//! ```text
//! ale(ε)  = max(−ε/γ, γ·ε)        rale(ε) = max(ε/γ, −γ·ε)
//! ```
//!
//! generalize the absolute error (both reduce to |ε| at γ = 1). The slope γ
//! on one side and 1/γ on the other is what biases a trained estimator
//! toward the foreground (ale) or background (rale) surface at ambiguous
//! pixels. The fusion loss scores the sigmoid-blended depth
//! `σ·d̂1 + (1−σ)·d̂2` against the target, and the combined per-pixel loss
//! sums all three terms over the valid target pixels.
//!
//! Gradients are hand-derived; at kinks the subgradient convention returns
//! the positive-branch slope.

use serde::{Deserialize, Serialize};

use crate::depth::{pairwise_sum, DepthMap};
use crate::fitter::TwinSurfaceField;
use crate::{Error, Result};

/// Logit magnitude beyond which the sigmoid is clamped. Keeps σ away from
/// exactly 0 or 1 and the exponential away from overflow.
pub const SIGMA_LOGIT_CLAMP: f64 = 30.0;

/// Numerically safe sigmoid with the ±30 logit clamp.
#[inline]
pub fn sigmoid(logit: f64) -> f64 {
    let x = logit.clamp(-SIGMA_LOGIT_CLAMP, SIGMA_LOGIT_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`sigmoid`] on the open unit interval, clamped to ±30.
#[inline]
pub fn logit(sigma: f64) -> f64 {
    let s = sigma.clamp(1e-15, 1.0 - 1e-15);
    (s / (1.0 - s)).ln().clamp(-SIGMA_LOGIT_CLAMP, SIGMA_LOGIT_CLAMP)
}

/// Loss hyperparameters shared by every trainer in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Asymmetry slope, ≥ 1. γ = 1 reduces ale/rale to the absolute error.
    pub gamma: f64,
    /// Multi-scale weights (full, half, quarter resolution).
    pub omega: [f64; 3],
    /// Weight of the fusion term inside the combined loss.
    pub fusion_weight: f64,
    /// When set, gradients of the fusion term also flow into the two depth
    /// channels. Off by default: the foreground/background estimators then
    /// see only their own asymmetric losses and stay unbiased by fusion.
    #[serde(default, skip_serializing_if = "is_false")]
    pub fusion_full_flow: bool,
}

fn is_false(b: &bool) -> bool {
    !b
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            omega: [1.0, 0.0, 0.0],
            fusion_weight: 1.0,
            fusion_full_flow: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 1.0 {
            return Err(Error::domain(format!("gamma must be ≥ 1, got {}", self.gamma)));
        }
        if self.omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("omega weights must be non-negative"));
        }
        if !self.fusion_weight.is_finite() || self.fusion_weight < 0.0 {
            return Err(Error::domain("fusion_weight must be non-negative"));
        }
        Ok(())
    }
}

/// Value and subgradient of a scalar loss at one residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// Subgradient w.r.t. the estimate.
    pub dvalue: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::domain(format!("gamma must be ≥ 1, got {gamma}")));
    }
    Ok(())
}

/// Asymmetric linear error `max(−ε/γ, γ·ε)`.
pub fn ale(epsilon: f64, gamma: f64) -> Result<LossEval> {
    check_gamma(gamma)?;
    if !epsilon.is_finite() {
        return Err(Error::domain("epsilon must be finite"));
    }
    Ok(ale_raw(epsilon, gamma))
}

/// Reflected asymmetric linear error `max(ε/γ, −γ·ε)`.
///
/// Satisfies `rale(ε, γ) == ale(−ε, γ)` exactly.
pub fn rale(epsilon: f64, gamma: f64) -> Result<LossEval> {
    check_gamma(gamma)?;
    if !epsilon.is_finite() {
        return Err(Error::domain("epsilon must be finite"));
    }
    Ok(rale_raw(epsilon, gamma))
}

#[inline]
pub(crate) fn ale_raw(epsilon: f64, gamma: f64) -> LossEval {
    // +0.0 normalizes the signed zero at the kink
    let value = (-epsilon / gamma).max(gamma * epsilon) + 0.0;
    let dvalue = if epsilon < 0.0 { -1.0 / gamma } else { gamma };
    LossEval { value, dvalue }
}

#[inline]
pub(crate) fn rale_raw(epsilon: f64, gamma: f64) -> LossEval {
    let value = (epsilon / gamma).max(-(gamma * epsilon)) + 0.0;
    let dvalue = if epsilon < 0.0 { -gamma } else { 1.0 / gamma };
    LossEval { value, dvalue }
}

/// Value and subgradients of the fusion term at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionEval {
    pub value: f64,
    /// Blend weight σ = sigmoid(c3) used for the evaluation.
    pub sigma: f64,
    /// Subgradient w.r.t. the fusion logit c3.
    pub d_c3: f64,
    /// Subgradient w.r.t. the foreground depth estimate.
    pub d_d1: f64,
    /// Subgradient w.r.t. the background depth estimate.
    pub d_d2: f64,
}

/// Fusion loss `|σ·d̂1 + (1−σ)·d̂2 − d_t|` with σ = sigmoid(c3).
///
/// All three subgradients are returned; whether the depth-channel ones are
/// applied is the caller's choice (see [`LossConfig::fusion_full_flow`]).
pub fn fusion_loss(d1_hat: f64, d2_hat: f64, c3: f64, d_true: f64) -> Result<FusionEval> {
    for (name, v) in [
        ("d1_hat", d1_hat),
        ("d2_hat", d2_hat),
        ("c3", c3),
        ("d_true", d_true),
    ] {
        if !v.is_finite() {
            return Err(Error::domain(format!("{name} must be finite")));
        }
    }
    Ok(fusion_raw(d1_hat, d2_hat, c3, d_true))
}

#[inline]
pub(crate) fn fusion_raw(d1_hat: f64, d2_hat: f64, c3: f64, d_true: f64) -> FusionEval {
    let sigma = sigmoid(c3);
    let fused = sigma * d1_hat + (1.0 - sigma) * d2_hat;
    let r = fused - d_true;
    let sign = if r < 0.0 { -1.0 } else { 1.0 };
    let dsig = sigma * (1.0 - sigma);
    FusionEval {
        value: r.abs(),
        sigma,
        d_c3: sign * (d1_hat - d2_hat) * dsig,
        d_d1: sign * sigma,
        d_d2: sign * (1.0 - sigma),
    }
}

/// Per-channel gradient of [`combined_loss`], laid out like the field.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinSurfaceGrad {
    pub d_c1: Vec<f64>,
    pub d_c2: Vec<f64>,
    pub d_c3: Vec<f64>,
}

impl TwinSurfaceGrad {
    fn zeros(n: usize) -> Self {
        Self {
            d_c1: vec![0.0; n],
            d_c2: vec![0.0; n],
            d_c3: vec![0.0; n],
        }
    }
}

/// Combined three-channel loss over the valid target pixels:
///
/// ```text
/// (1/N) Σ_j [ ale(c1j − dtj) + rale(c2j − dtj) + w_F · fusion(c1j, c2j, c3j; dtj) ]
/// ```
///
/// Pixels with invalid target contribute zero value and zero gradient; N is
/// the count of valid pixels.
pub fn combined_loss(
    field: &TwinSurfaceField,
    target: &DepthMap,
    cfg: &LossConfig,
) -> Result<(f64, TwinSurfaceGrad)> {
    cfg.validate()?;
    if field.width() != target.width() || field.height() != target.height() {
        return Err(Error::ShapeMismatch {
            expected_w: field.width(),
            expected_h: field.height(),
            got_w: target.width(),
            got_h: target.height(),
        });
    }
    if !field.all_finite() {
        return Err(Error::domain("field contains non-finite values"));
    }
    let n = field.len();
    let mut grad = TwinSurfaceGrad::zeros(n);
    let mut contributions = Vec::with_capacity(target.valid_count());
    let mut valid = 0usize;
    for i in 0..n {
        let dt = target.data()[i];
        if dt <= 0.0 {
            continue;
        }
        valid += 1;
        let (c1, c2, c3) = (field.c1[i], field.c2[i], field.c3[i]);
        let a = ale_raw(c1 - dt, cfg.gamma);
        let r = rale_raw(c2 - dt, cfg.gamma);
        let f = fusion_raw(c1, c2, c3, dt);
        contributions.push(a.value + r.value + cfg.fusion_weight * f.value);
        grad.d_c1[i] = a.dvalue;
        grad.d_c2[i] = r.dvalue;
        grad.d_c3[i] = cfg.fusion_weight * f.d_c3;
        if cfg.fusion_full_flow {
            grad.d_c1[i] += cfg.fusion_weight * f.d_d1;
            grad.d_c2[i] += cfg.fusion_weight * f.d_d2;
        }
    }
    if valid == 0 {
        return Err(Error::NoValidPixels);
    }
    let inv_n = 1.0 / valid as f64;
    for g in grad
        .d_c1
        .iter_mut()
        .chain(grad.d_c2.iter_mut())
        .chain(grad.d_c3.iter_mut())
    {
        *g *= inv_n;
    }
    Ok((pairwise_sum(&contributions) * inv_n, grad))
}

/// Weighted sum of per-scale combined losses: `Σ ωᵢ · Lᵢ`.
///
/// `fields[s]` and `targets[s]` hold scale `s` (full, half, quarter); scales
/// with ωᵢ = 0 are skipped entirely.
pub fn multiscale_loss(
    fields: &[TwinSurfaceField],
    targets: &[DepthMap],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    if fields.len() != targets.len() {
        return Err(Error::config(format!(
            "{} fields vs {} targets",
            fields.len(),
            targets.len()
        )));
    }
    if fields.is_empty() || fields.len() > 3 {
        return Err(Error::config("expected 1 to 3 scales"));
    }
    let mut total = 0.0;
    for (s, (field, target)) in fields.iter().zip(targets).enumerate() {
        let w = cfg.omega[s];
        if w == 0.0 {
            continue;
        }
        let (value, _) = combined_loss(field, target, cfg)?;
        total += w * value;
    }
    Ok(total)
}

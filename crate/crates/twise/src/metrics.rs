//! Depth evaluation: standard, inverse and trimmed metrics, per-region
//! breakdowns, and pairwise error-difference analysis.
//!
//! All computation is in meters; [`MetricsReport::to_millimeters`] converts
//! for table-style output (inverse metrics then read in 1/km). The trimmed
//! metrics clamp per-pixel error magnitude at a threshold t (squared error at
//! t²) so a handful of boundary outliers cannot dominate the aggregate.
//!
//! The error-difference maps compare two methods pixelwise:
//! `A(i) = |pred_a − gt| − |pred_b − gt|` and its squared analogue `S(i)`,
//! evaluated only where ground truth is valid. Positive values mean `pred_b`
//! wins that pixel.

use serde::{Deserialize, Serialize};

use crate::depth::{pairwise_sum, DepthMap, Grid};
use crate::scenegen::LabelMap;
use crate::{Error, Result};

/// Default trim threshold for tMAE/tRMSE (meters).
pub const DEFAULT_TRIM_THRESHOLD: f64 = 2.0;

/// Image region a report was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Whole,
    Edge,
    Inside,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::Edge => "edge",
            Region::Inside => "inside",
        }
    }
}

/// Unit the scalar fields of a report are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthUnit {
    Meters,
    Millimeters,
}

/// Scalar evaluation metrics over one region.
///
/// Depth metrics carry `unit`; the inverse metrics are in 1/km when the unit
/// is millimeters (the table convention) and 1/m when meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub imae: f64,
    pub irmse: f64,
    pub tmae: f64,
    pub trmse: f64,
    pub valid_count: usize,
    pub region: Region,
    pub unit: DepthUnit,
}

impl MetricsReport {
    /// Convert a meters report to millimeters (inverse metrics to 1/km).
    pub fn to_millimeters(&self) -> MetricsReport {
        match self.unit {
            DepthUnit::Millimeters => *self,
            DepthUnit::Meters => MetricsReport {
                mae: self.mae * 1000.0,
                rmse: self.rmse * 1000.0,
                imae: self.imae * 1000.0,
                irmse: self.irmse * 1000.0,
                tmae: self.tmae * 1000.0,
                trmse: self.trmse * 1000.0,
                valid_count: self.valid_count,
                region: self.region,
                unit: DepthUnit::Millimeters,
            },
        }
    }

    pub const CSV_HEADER: &'static str = "region,mae,rmse,imae,irmse,tmae,trmse,valid_count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.region.name(),
            self.mae,
            self.rmse,
            self.imae,
            self.irmse,
            self.tmae,
            self.trmse,
            self.valid_count
        )
    }
}

/// Standard + inverse + trimmed metrics over the valid ground-truth pixels.
///
/// The prediction must be dense wherever ground truth is valid; a hole there
/// is an error (completion methods produce dense output). See
/// [`trimmed_metrics`] for the hole-tolerant trimmed variant.
pub fn standard_metrics(pred: &DepthMap, gt: &DepthMap, trim_threshold: f64) -> Result<MetricsReport> {
    standard_metrics_masked(pred, gt, trim_threshold, None, Region::Whole)
}

/// [`standard_metrics`] restricted to pixels where `mask` is true.
pub fn standard_metrics_masked(
    pred: &DepthMap,
    gt: &DepthMap,
    trim_threshold: f64,
    mask: Option<&[bool]>,
    region: Region,
) -> Result<MetricsReport> {
    pred.expect_same_shape(gt)?;
    if !trim_threshold.is_finite() || trim_threshold <= 0.0 {
        return Err(Error::domain("trim threshold must be positive"));
    }
    if let Some(m) = mask {
        if m.len() != gt.len() {
            return Err(Error::config("mask length does not match image"));
        }
    }
    let t = trim_threshold;
    let mut abs = Vec::new();
    let mut sq = Vec::new();
    let mut iabs = Vec::new();
    let mut isq = Vec::new();
    let mut tabs = Vec::new();
    let mut tsq = Vec::new();
    for i in 0..gt.len() {
        let g = gt.data()[i];
        if g <= 0.0 || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let p = pred.data()[i];
        if p <= 0.0 {
            return Err(Error::domain(format!(
                "prediction invalid at valid ground-truth pixel {i}"
            )));
        }
        let e = p - g;
        abs.push(e.abs());
        sq.push(e * e);
        let ie = 1.0 / p - 1.0 / g;
        iabs.push(ie.abs());
        isq.push(ie * ie);
        tabs.push(e.abs().min(t));
        tsq.push((e * e).min(t * t));
    }
    let n = abs.len();
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let inv_n = 1.0 / n as f64;
    let report = MetricsReport {
        mae: pairwise_sum(&abs) * inv_n,
        rmse: (pairwise_sum(&sq) * inv_n).sqrt(),
        imae: pairwise_sum(&iabs) * inv_n,
        irmse: (pairwise_sum(&isq) * inv_n).sqrt(),
        tmae: pairwise_sum(&tabs) * inv_n,
        trmse: (pairwise_sum(&tsq) * inv_n).sqrt(),
        valid_count: n,
        region,
        unit: DepthUnit::Meters,
    };
    debug_assert!(report.rmse >= report.mae - 1e-12);
    debug_assert!(report.tmae <= report.mae + 1e-12 && report.trmse <= report.rmse + 1e-12);
    Ok(report)
}

/// Trimmed metrics only, tolerating prediction holes: a pixel with valid
/// ground truth but no prediction counts as an error of magnitude t.
pub fn trimmed_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    trim_threshold: f64,
    mask: Option<&[bool]>,
) -> Result<(f64, f64, usize)> {
    pred.expect_same_shape(gt)?;
    if !trim_threshold.is_finite() || trim_threshold <= 0.0 {
        return Err(Error::domain("trim threshold must be positive"));
    }
    let t = trim_threshold;
    let mut tabs = Vec::new();
    let mut tsq = Vec::new();
    for i in 0..gt.len() {
        let g = gt.data()[i];
        if g <= 0.0 || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let p = pred.data()[i];
        if p <= 0.0 {
            tabs.push(t);
            tsq.push(t * t);
        } else {
            let e = (p - g).abs();
            tabs.push(e.min(t));
            tsq.push((e * e).min(t * t));
        }
    }
    let n = tabs.len();
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let inv_n = 1.0 / n as f64;
    Ok((
        pairwise_sum(&tabs) * inv_n,
        (pairwise_sum(&tsq) * inv_n).sqrt(),
        n,
    ))
}

/// Pixelwise error differences of two predictions against shared ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDiffMap {
    /// Absolute-error difference |pred_a − gt| − |pred_b − gt|.
    pub a: Grid,
    /// Squared-error difference.
    pub s: Grid,
    /// True where ground truth is valid (A and S are zero elsewhere).
    pub valid: Vec<bool>,
}

/// Build the error-difference maps. `pred_a` plays the reference-method role:
/// positive A/S means `pred_b` wins the pixel. Both predictions must be dense
/// at valid ground truth.
pub fn error_diff(pred_a: &DepthMap, pred_b: &DepthMap, gt: &DepthMap) -> Result<ErrorDiffMap> {
    pred_a.expect_same_shape(gt)?;
    pred_b.expect_same_shape(gt)?;
    let (w, h) = (gt.width(), gt.height());
    let mut a = Grid::filled(w, h, 0.0);
    let mut s = Grid::filled(w, h, 0.0);
    let mut valid = vec![false; gt.len()];
    #[allow(clippy::needless_range_loop)] // several rasters share the index
    for i in 0..gt.len() {
        let g = gt.data()[i];
        if g <= 0.0 {
            continue;
        }
        let pa = pred_a.data()[i];
        let pb = pred_b.data()[i];
        if pa <= 0.0 || pb <= 0.0 {
            return Err(Error::domain(format!(
                "prediction invalid at valid ground-truth pixel {i}"
            )));
        }
        let ea = (pa - g).abs();
        let eb = (pb - g).abs();
        a.data_mut()[i] = ea - eb;
        s.data_mut()[i] = ea * ea - eb * eb;
        valid[i] = true;
    }
    Ok(ErrorDiffMap { a, s, valid })
}

/// Uniform histogram binning specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl BinSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.lo.is_nan() || self.hi.is_nan() || self.lo >= self.hi {
            return Err(Error::config("bin spec needs hi > lo and count > 0"));
        }
        Ok(())
    }
}

/// Histogram with uniform bins; out-of-range values clamp into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: impl Iterator<Item = f64>, spec: &BinSpec) -> Histogram {
        let width = (spec.hi - spec.lo) / spec.count as f64;
        let edges: Vec<f64> = (0..=spec.count).map(|i| spec.lo + i as f64 * width).collect();
        let mut counts = vec![0u64; spec.count];
        for v in values {
            let bin = (((v - spec.lo) / width).floor() as i64).clamp(0, spec.count as i64 - 1);
            counts[bin as usize] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV rows `bin_left,bin_right,count`.
    pub fn csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

/// Win/loss split of an error-difference map.
///
/// "Wins" are pixels where the difference is positive (`pred_b` better);
/// "losses" where negative. Zero-difference pixels belong to neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffHistograms {
    pub a_wins: Histogram,
    pub a_losses: Histogram,
    pub s_wins: Histogram,
    pub s_losses: Histogram,
    pub win_count: u64,
    pub loss_count: u64,
    /// Mean |A| over wins / losses (0 when the population is empty).
    pub mean_win_a: f64,
    pub mean_loss_a: f64,
}

/// Histogram the |A| and |S| magnitudes of the win and loss populations.
pub fn diff_histograms(map: &ErrorDiffMap, bins: &BinSpec) -> Result<DiffHistograms> {
    bins.validate()?;
    if !map.valid.iter().any(|v| *v) {
        return Err(Error::NoValidPixels);
    }
    let a_values = |keep_wins: bool| {
        map.a
            .data()
            .iter()
            .zip(&map.valid)
            .filter(move |&(&v, &ok)| ok && if keep_wins { v > 0.0 } else { v < 0.0 })
            .map(|(&v, _)| v.abs())
    };
    let s_values = |keep_wins: bool| {
        map.s
            .data()
            .iter()
            .zip(&map.valid)
            .filter(move |&(&v, &ok)| ok && if keep_wins { v > 0.0 } else { v < 0.0 })
            .map(|(&v, _)| v.abs())
    };
    let win_count = a_values(true).count() as u64;
    let loss_count = a_values(false).count() as u64;
    let mean = |it: Box<dyn Iterator<Item = f64> + '_>, n: u64| {
        if n == 0 {
            0.0
        } else {
            it.sum::<f64>() / n as f64
        }
    };
    Ok(DiffHistograms {
        a_wins: Histogram::build(a_values(true), bins),
        a_losses: Histogram::build(a_values(false), bins),
        s_wins: Histogram::build(s_values(true), bins),
        s_losses: Histogram::build(s_values(false), bins),
        win_count,
        loss_count,
        mean_win_a: mean(Box::new(a_values(true)), win_count),
        mean_loss_a: mean(Box::new(a_values(false)), loss_count),
    })
}

/// Split an image into edge and inside masks from an instance label map.
///
/// A pixel is an edge pixel when some differently-labeled pixel lies within
/// Chebyshev distance < `edge_radius`; the rest are inside pixels. The two
/// masks partition the image; intersect them with ground-truth validity when
/// evaluating per-region metrics.
pub fn region_masks(labels: &LabelMap, edge_radius: usize) -> (Vec<bool>, Vec<bool>) {
    let (w, h) = (labels.width, labels.height);
    let mut edge = vec![false; w * h];
    if edge_radius > 1 {
        let r = (edge_radius - 1) as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let own = labels.ids[(y * w as i64 + x) as usize];
                'scan: for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        if labels.ids[(ny * w as i64 + nx) as usize] != own {
                            edge[(y * w as i64 + x) as usize] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
    let inside = edge.iter().map(|e| !e).collect();
    (edge, inside)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: &[f64]) -> DepthMap {
        DepthMap::from_data(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_all_zero() {
        let gt = map(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = standard_metrics(&gt, &gt, 2.0).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.imae, 0.0);
        assert_eq!(r.trmse, 0.0);
        assert_eq!(r.valid_count, 4);
    }

    #[test]
    fn hand_arithmetic_oracle() {
        // errors {1, 3} m with t = 2
        let gt = map(2, 1, &[10.0, 10.0]);
        let pred = map(2, 1, &[11.0, 13.0]);
        let r = standard_metrics(&pred, &gt, 2.0).unwrap();
        assert!((r.mae - 2.0).abs() < 1e-12);
        assert!((r.rmse - 5.0f64.sqrt()).abs() < 1e-12);
        assert!((r.tmae - 1.5).abs() < 1e-12);
        assert!((r.trmse - 2.5f64.sqrt()).abs() < 1e-12);
        // inverse metrics: 1/11 − 1/10 and 1/13 − 1/10, in 1/m
        let i1 = (1.0 / 11.0f64 - 0.1).abs();
        let i2 = (1.0 / 13.0f64 - 0.1).abs();
        assert!((r.imae - (i1 + i2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn trimming_bound() {
        let gt = map(1, 1, &[10.0]);
        let pred = map(1, 1, &[15.0]);
        let r = standard_metrics(&pred, &gt, 2.0).unwrap();
        assert_eq!(r.tmae, 2.0);
        assert_eq!(r.mae, 5.0);
        assert!(r.tmae <= r.mae);
    }

    #[test]
    fn millimeter_conversion() {
        let gt = map(1, 1, &[10.0]);
        let pred = map(1, 1, &[10.5]);
        let r = standard_metrics(&pred, &gt, 2.0).unwrap().to_millimeters();
        assert!((r.mae - 500.0).abs() < 1e-9);
        assert_eq!(r.unit, DepthUnit::Millimeters);
        // 1/10.5 − 1/10 in 1/m is ~4.76e-3 → ~4.76 in 1/km
        assert!((r.imae - 4.761904761904762).abs() < 1e-9);
    }

    #[test]
    fn dense_requirement() {
        let gt = map(2, 1, &[10.0, 10.0]);
        let pred = map(2, 1, &[10.0, 0.0]);
        assert!(standard_metrics(&pred, &gt, 2.0).is_err());
        // trimmed variant tolerates the hole as a t-magnitude error
        let (tmae, trmse, n) = trimmed_metrics(&pred, &gt, 2.0, None).unwrap();
        assert_eq!(n, 2);
        assert!((tmae - 1.0).abs() < 1e-12);
        assert!((trmse - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn no_valid_pixels_error() {
        let gt = DepthMap::new(2, 2);
        let pred = map(2, 2, &[1.0; 4]);
        assert!(matches!(standard_metrics(&pred, &gt, 2.0), Err(Error::NoValidPixels)));
    }

    #[test]
    fn error_diff_hand_values() {
        let gt = map(1, 1, &[10.0]);
        let a = map(1, 1, &[13.0]); // error 3
        let b = map(1, 1, &[11.0]); // error 1
        let d = error_diff(&a, &b, &gt).unwrap();
        assert_eq!(d.a.data()[0], 2.0);
        assert_eq!(d.s.data()[0], 8.0);

        let same = error_diff(&a, &a, &gt).unwrap();
        assert_eq!(same.a.data()[0], 0.0);
        assert_eq!(same.s.data()[0], 0.0);

        // swapping negates exactly
        let swapped = error_diff(&b, &a, &gt).unwrap();
        assert_eq!(swapped.a.data()[0], -d.a.data()[0]);
        assert_eq!(swapped.s.data()[0], -d.s.data()[0]);
    }

    #[test]
    fn diff_histograms_counts() {
        // 9 wins of magnitude 1, 1 loss of magnitude 2
        let gt = map(10, 1, &[10.0; 10]);
        let mut a_vals = vec![12.0; 9];
        a_vals.push(10.0);
        let mut b_vals = vec![11.0; 9];
        b_vals.push(12.0);
        let a = map(10, 1, &a_vals);
        let b = map(10, 1, &b_vals);
        let d = error_diff(&a, &b, &gt).unwrap();
        let h = diff_histograms(&d, &BinSpec { lo: 0.0, hi: 5.0, count: 5 }).unwrap();
        assert_eq!(h.win_count, 9);
        assert_eq!(h.loss_count, 1);
        assert_eq!(h.a_wins.total(), 9);
        assert_eq!(h.a_losses.total(), 1);
        assert!((h.mean_win_a - 1.0).abs() < 1e-12);
        assert!((h.mean_loss_a - 2.0).abs() < 1e-12);

        // all-zero map: both populations empty, counts 0
        let d0 = error_diff(&a, &a, &gt).unwrap();
        let h0 = diff_histograms(&d0, &BinSpec { lo: 0.0, hi: 5.0, count: 5 }).unwrap();
        assert_eq!(h0.win_count + h0.loss_count, 0);
        assert_eq!(h0.a_wins.total(), 0);

        // empty map errors
        let empty = error_diff(&a, &b, &DepthMap::new(10, 1)).unwrap();
        assert!(diff_histograms(&empty, &BinSpec { lo: 0.0, hi: 5.0, count: 5 }).is_err());
    }

    #[test]
    fn region_masks_uniform_and_split() {
        use crate::scenegen::LabelMap;
        // uniform labels → empty edge mask
        let uniform = LabelMap { width: 5, height: 5, ids: vec![3; 25] };
        let (edge, inside) = region_masks(&uniform, 3);
        assert!(edge.iter().all(|e| !e));
        assert!(inside.iter().all(|i| *i));

        // vertical split on 10×10 at column 5, radius 3: pixels within
        // Chebyshev distance {1, 2} of the seam on each side are edge,
        // i.e. columns 3..=6 by enumeration
        let ids: Vec<u8> = (0..100).map(|i| if i % 10 < 5 { 0 } else { 1 }).collect();
        let labels = LabelMap { width: 10, height: 10, ids: ids.clone() };
        let (edge, inside) = region_masks(&labels, 3);

        // independent oracle: brute-force over all pixel pairs
        for y in 0..10usize {
            for x in 0..10usize {
                let mut min_d = usize::MAX;
                for yy in 0..10usize {
                    for xx in 0..10usize {
                        if ids[yy * 10 + xx] != ids[y * 10 + x] {
                            let d = x.abs_diff(xx).max(y.abs_diff(yy));
                            min_d = min_d.min(d);
                        }
                    }
                }
                assert_eq!(edge[y * 10 + x], min_d < 3, "pixel ({x},{y})");
            }
        }
        let edge_cols: Vec<usize> = (0..10).filter(|&x| edge[x]).collect();
        assert_eq!(edge_cols, vec![3, 4, 5, 6]);
        // partition
        for i in 0..100 {
            assert_ne!(edge[i], inside[i]);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn depth_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            let v = proptest::collection::vec(0.5f64..60.0, 16);
            (v.clone(), v)
        }

        proptest! {
            #[test]
            fn trimming_and_power_mean((gt, pred) in depth_pair(), t in 0.1f64..10.0) {
                let gt = DepthMap::from_data(4, 4, gt).unwrap();
                let pred = DepthMap::from_data(4, 4, pred).unwrap();
                let r = standard_metrics(&pred, &gt, t).unwrap();
                prop_assert!(r.tmae <= r.mae + 1e-12);
                prop_assert!(r.trmse <= r.rmse + 1e-12);
                prop_assert!(r.rmse >= r.mae - 1e-12);
                // equality iff every |e| ≤ t
                let all_small = gt.data().iter().zip(pred.data()).all(|(g, p)| (p - g).abs() <= t);
                if all_small {
                    prop_assert!((r.tmae - r.mae).abs() < 1e-12);
                } else {
                    prop_assert!(r.tmae < r.mae);
                }
            }

            #[test]
            fn permutation_invariance((gt, pred) in depth_pair(), seed in 0u64..1000) {
                use rand::seq::SliceRandom;
                use rand_chacha::rand_core::SeedableRng;
                let mut order: Vec<usize> = (0..16).collect();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                order.shuffle(&mut rng);
                let gt_p: Vec<f64> = order.iter().map(|&i| gt[i]).collect();
                let pred_p: Vec<f64> = order.iter().map(|&i| pred[i]).collect();
                let r1 = standard_metrics(
                    &DepthMap::from_data(4, 4, pred).unwrap(),
                    &DepthMap::from_data(4, 4, gt).unwrap(),
                    2.0,
                ).unwrap();
                let r2 = standard_metrics(
                    &DepthMap::from_data(4, 4, pred_p).unwrap(),
                    &DepthMap::from_data(4, 4, gt_p).unwrap(),
                    2.0,
                ).unwrap();
                prop_assert!((r1.mae - r2.mae).abs() < 1e-12);
                prop_assert!((r1.rmse - r2.rmse).abs() < 1e-12);
            }

            #[test]
            fn antisymmetry((gt, a) in depth_pair(), shift in -3.0f64..3.0) {
                let b: Vec<f64> = a.iter().map(|v| (v + shift).max(0.5)).collect();
                let gt = DepthMap::from_data(4, 4, gt).unwrap();
                let a = DepthMap::from_data(4, 4, a).unwrap();
                let b = DepthMap::from_data(4, 4, b).unwrap();
                let ab = error_diff(&a, &b, &gt).unwrap();
                let ba = error_diff(&b, &a, &gt).unwrap();
                for i in 0..16 {
                    prop_assert_eq!(ab.a.data()[i], -ba.a.data()[i]);
                    prop_assert_eq!(ab.s.data()[i], -ba.s.data()[i]);
                }
            }
        }
    }
}

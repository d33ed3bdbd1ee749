//! Bland-Altman method agreement: pairwise differences (automated minus
//! reference) summarized by their mean (bias) and 95% limits of agreement
//! at bias +- 1.96 SD, with the (pair mean, difference) points kept for
//! plotting.

use super::hypothesis::{mean, variance};
use super::StatsError;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlandAltmanResult {
    /// mean of auto - manual (ml)
    pub bias: f64,
    /// sample SD (n-1) of the differences
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// (pair mean, auto - manual) per pair
    pub points: Vec<(f64, f64)>,
}

pub fn bland_altman(manual: &[f64], auto: &[f64]) -> Result<BlandAltmanResult, StatsError> {
    if manual.len() != auto.len() {
        return Err(StatsError::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            manual.len(),
            auto.len()
        )));
    }
    if manual.len() < 2 {
        return Err(StatsError::InvalidArgument(
            "need at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = auto.iter().zip(manual).map(|(a, m)| a - m).collect();
    let bias = mean(&diffs);
    let sd_diff = variance(&diffs).sqrt();
    let points = manual
        .iter()
        .zip(auto)
        .map(|(m, a)| ((m + a) / 2.0, a - m))
        .collect();
    Ok(BlandAltmanResult {
        bias,
        sd_diff,
        loa_low: bias - 1.96 * sd_diff,
        loa_high: bias + 1.96 * sd_diff,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_offset_collapses_limits() {
        let manual = [100.0, 200.0, 300.0];
        let auto = [96.0, 196.0, 296.0];
        let r = bland_altman(&manual, &auto).unwrap();
        assert_eq!(r.bias, -4.0);
        assert_eq!(r.sd_diff, 0.0);
        assert_eq!(r.loa_low, -4.0);
        assert_eq!(r.loa_high, -4.0);
    }

    #[test]
    fn hand_case() {
        let manual = [100.0, 200.0, 300.0];
        let auto = [96.0, 198.0, 294.0];
        let r = bland_altman(&manual, &auto).unwrap();
        assert!((r.bias + 4.0).abs() < 1e-12);
        assert!((r.sd_diff - 2.0).abs() < 1e-12);
        assert!((r.loa_low + 7.92).abs() < 1e-9);
        assert!((r.loa_high + 0.08).abs() < 1e-9);
    }

    #[test]
    fn swapping_series_negates_bias_and_limits() {
        let manual = [10.0, 25.0, 31.0, 44.0];
        let auto = [12.0, 22.0, 35.0, 41.0];
        let fwd = bland_altman(&manual, &auto).unwrap();
        let rev = bland_altman(&auto, &manual).unwrap();
        assert!((fwd.bias + rev.bias).abs() < 1e-12);
        assert!((fwd.loa_low + rev.loa_high).abs() < 1e-12);
        assert!((fwd.loa_high + rev.loa_low).abs() < 1e-12);
    }

    #[test]
    fn summary_recomputable_from_points() {
        let manual = [100.0, 140.0, 180.0, 220.0, 260.0];
        let auto = [103.0, 137.0, 185.0, 214.0, 266.0];
        let r = bland_altman(&manual, &auto).unwrap();
        let diffs: Vec<f64> = r.points.iter().map(|&(_, d)| d).collect();
        let bias = mean(&diffs);
        let sd = variance(&diffs).sqrt();
        assert_eq!(bias, r.bias);
        assert_eq!(sd, r.sd_diff);
        assert_eq!(bias - 1.96 * sd, r.loa_low);
        assert_eq!(bias + 1.96 * sd, r.loa_high);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(bland_altman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(bland_altman(&[1.0], &[1.0]).is_err());
    }
}

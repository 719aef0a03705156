//! Performance metrics for fitted models: relative bias, coefficient of
//! variation, credible-interval coverage, baseline-surface SSE, and WAIC
//! with its delta-based model ranking.

use crate::error::{Error, Result};
use crate::util::{log_mean_exp, mean, population_variance, quantile, sample_variance};

/// (posterior mean - truth) / truth.
pub fn relative_bias(posterior_mean: f64, truth: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::Parameter(
            "relative bias is undefined for a zero true value".into(),
        ));
    }
    Ok((posterior_mean - truth) / truth)
}

/// Posterior SD / posterior mean, with the SD taken over the R retained
/// draws using the divisor R (population form).
pub fn coefficient_of_variation(draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Parameter("CV of an empty sample".into()));
    }
    let m = mean(draws);
    if m == 0.0 {
        return Err(Error::Parameter("CV is undefined for a zero mean".into()));
    }
    Ok(population_variance(draws).sqrt() / m)
}

/// Equal-tailed 95% credible interval from the 2.5% and 97.5% quantiles.
pub fn credible_interval(draws: &[f64]) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::Parameter("credible interval of an empty sample".into()));
    }
    Ok((quantile(draws, 0.025), quantile(draws, 0.975)))
}

/// Whether the equal-tailed 95% interval contains the truth.
pub fn covers(draws: &[f64], truth: f64) -> Result<bool> {
    let (lo, hi) = credible_interval(draws)?;
    Ok(lo <= truth && truth <= hi)
}

/// Posterior summary of one scalar parameter against its true value.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub relative_bias: f64,
    pub cv: f64,
    pub covered: bool,
}

impl PosteriorSummary {
    pub fn from_draws(draws: &[f64], truth: f64) -> Result<Self> {
        let m = mean(draws);
        let (lower, upper) = credible_interval(draws)?;
        Ok(PosteriorSummary {
            mean: m,
            sd: population_variance(draws).sqrt(),
            lower,
            upper,
            relative_bias: relative_bias(m, truth)?,
            cv: coefficient_of_variation(draws)?,
            covered: lower <= truth && truth <= upper,
        })
    }
}

/// Per-detector and total squared-error score of the estimated baseline
/// surface: SSE_j = (1/R) sum_r (p0_j^(r) - p0_j)^2, SSE = sum_j SSE_j.
pub fn sse_surface(baseline_draws: &[Vec<f64>], truth_p0: &[f64]) -> Result<(Vec<f64>, f64)> {
    if baseline_draws.is_empty() {
        return Err(Error::Parameter("SSE of zero retained surfaces".into()));
    }
    let j = truth_p0.len();
    if baseline_draws.iter().any(|d| d.len() != j) {
        return Err(Error::Parameter(format!(
            "surface draws must have length {j} to match the true surface"
        )));
    }
    let r = baseline_draws.len() as f64;
    let per_detector: Vec<f64> = (0..j)
        .map(|jj| {
            baseline_draws
                .iter()
                .map(|d| (d[jj] - truth_p0[jj]).powi(2))
                .sum::<f64>()
                / r
        })
        .collect();
    let total = per_detector.iter().sum();
    Ok((per_detector, total))
}

/// WAIC from the pooled pointwise log-likelihood draws, `pointwise[r][i]`:
/// lppd_i by log-mean-exp over draws, penalty p_w by the per-row sample
/// variance (divisor R-1), WAIC = -2 lppd + 2 p_w.
pub fn waic(pointwise: &[Vec<f64>]) -> Result<Waic> {
    let r = pointwise.len();
    if r < 2 {
        return Err(Error::Parameter(format!(
            "WAIC needs at least 2 retained draws to estimate the penalty, got {r}"
        )));
    }
    let m = pointwise[0].len();
    if pointwise.iter().any(|row| row.len() != m) {
        return Err(Error::Parameter(
            "pointwise log-likelihood draws differ in length".into(),
        ));
    }
    let mut lppd = 0.0;
    let mut p_w = 0.0;
    let mut column = vec![0.0; r];
    for i in 0..m {
        for (rr, row) in pointwise.iter().enumerate() {
            column[rr] = row[i];
        }
        lppd += log_mean_exp(&column);
        p_w += sample_variance(&column);
    }
    Ok(Waic {
        lppd,
        penalty: p_w,
        waic: -2.0 * lppd + 2.0 * p_w,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Waic {
    pub lppd: f64,
    pub penalty: f64,
    pub waic: f64,
}

/// Differences to the best WAIC in the supplied list and the winning index.
/// Ties go to the earliest entry, so callers should list models in the
/// preference order used for reporting.
pub fn delta_scores(waics: &[f64]) -> Result<(Vec<f64>, usize)> {
    if waics.is_empty() {
        return Err(Error::Parameter("delta scores of an empty list".into()));
    }
    if waics.iter().any(|w| !w.is_finite()) {
        return Err(Error::Parameter("delta scores need finite WAIC values".into()));
    }
    let mut best = 0usize;
    for (k, &w) in waics.iter().enumerate() {
        if w < waics[best] {
            best = k;
        }
    }
    let deltas = waics.iter().map(|w| w - waics[best]).collect();
    Ok((deltas, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn relative_bias_signs() {
        assert_relative_eq!(relative_bias(330.0, 300.0).unwrap(), 0.1);
        assert_relative_eq!(relative_bias(270.0, 300.0).unwrap(), -0.1);
        assert!(relative_bias(1.0, 0.0).is_err());
    }

    #[test]
    fn cv_uses_population_sd() {
        // draws {1, 3}: mean 2, population SD 1 -> CV = 0.5
        assert_relative_eq!(coefficient_of_variation(&[1.0, 3.0]).unwrap(), 0.5);
        assert!(coefficient_of_variation(&[]).is_err());
        assert!(coefficient_of_variation(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn interval_and_coverage() {
        let draws: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let (lo, hi) = credible_interval(&draws).unwrap();
        // type-7 quantiles of 1..1000 at 2.5% / 97.5%
        assert_relative_eq!(lo, 1.0 + 0.025 * 999.0, epsilon = 1e-9);
        assert_relative_eq!(hi, 1.0 + 0.975 * 999.0, epsilon = 1e-9);
        assert!(covers(&draws, 500.0).unwrap());
        assert!(!covers(&draws, 0.5).unwrap());
        assert!(!covers(&draws, 1000.0).unwrap());
        // boundary inclusion
        assert!(covers(&draws, lo).unwrap());
    }

    #[test]
    fn summary_consistent_with_parts() {
        let draws = [280.0, 300.0, 320.0, 310.0];
        let s = PosteriorSummary::from_draws(&draws, 300.0).unwrap();
        assert_relative_eq!(s.mean, 302.5);
        assert_relative_eq!(s.relative_bias, 2.5 / 300.0);
        assert!(s.covered);
    }

    #[test]
    fn sse_hand_computed() {
        // single detector, draws {0.2, 0.4}, truth 0.3:
        // SSE_1 = ((0.01) + (0.01)) / 2 = 0.01
        let (per, total) = sse_surface(&[vec![0.2], vec![0.4]], &[0.3]).unwrap();
        assert_relative_eq!(per[0], 0.01, epsilon = 1e-15);
        assert_relative_eq!(total, 0.01, epsilon = 1e-15);
        // two detectors sum
        let (per, total) =
            sse_surface(&[vec![0.2, 0.5], vec![0.4, 0.5]], &[0.3, 0.5]).unwrap();
        assert_relative_eq!(per[1], 0.0);
        assert_relative_eq!(total, 0.01, epsilon = 1e-15);
        assert!(sse_surface(&[], &[0.3]).is_err());
        assert!(sse_surface(&[vec![0.1, 0.2]], &[0.3]).is_err());
    }

    #[test]
    fn waic_hand_computed_toy() {
        // 2 rows, 3 draws of log-likelihoods
        let ll = vec![
            vec![-1.0, -2.0],
            vec![-1.5, -2.5],
            vec![-0.5, -1.5],
        ];
        let col1 = [-1.0f64, -1.5, -0.5];
        let col2 = [-2.0f64, -2.5, -1.5];
        let lme = |c: &[f64]| {
            let s: f64 = c.iter().map(|v| v.exp()).sum();
            (s / c.len() as f64).ln()
        };
        let var = |c: &[f64]| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (c.len() as f64 - 1.0)
        };
        let expected_lppd = lme(&col1) + lme(&col2);
        let expected_pw = var(&col1) + var(&col2);
        let got = waic(&ll).unwrap();
        assert_relative_eq!(got.lppd, expected_lppd, epsilon = 1e-12);
        assert_relative_eq!(got.penalty, expected_pw, epsilon = 1e-12);
        assert_relative_eq!(
            got.waic,
            -2.0 * expected_lppd + 2.0 * expected_pw,
            epsilon = 1e-12
        );
    }

    #[test]
    fn waic_needs_multiple_draws() {
        assert!(waic(&[vec![-1.0, -2.0]]).is_err());
        assert!(waic(&[]).is_err());
        assert!(waic(&[vec![-1.0], vec![-1.0, -2.0]]).is_err());
    }

    #[test]
    fn delta_scores_tie_breaks_to_earliest() {
        let (deltas, best) = delta_scores(&[10.0, 8.0, 8.0, 12.0]).unwrap();
        assert_eq!(best, 1);
        assert_eq!(deltas, vec![2.0, 0.0, 0.0, 4.0]);
        assert!(delta_scores(&[]).is_err());
        assert!(delta_scores(&[1.0, f64::NAN]).is_err());
    }
}

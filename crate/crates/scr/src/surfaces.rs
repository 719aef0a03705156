//! Detector-specific baseline detection probability surfaces.
//!
//! A zero-mean Gaussian random field with exponential covariance
//! gamma_jj' = exp(-phi * delta_jj') drives either a continuous
//! (logit-linear) or a categorical (median-split) transform of the
//! baseline detection probability, characterized by Moran's I.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::DetectorGrid;
use crate::util::{inv_logit, logit};

/// Diagonal jitter applied once if the exact Cholesky fails.
const CHOLESKY_JITTER: f64 = 1e-10;

/// Symmetric positive-definite exponential covariance matrix.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
    phi: f64,
}

/// Builds the covariance with entries exp(-phi * delta), unit diagonal.
pub fn exponential_covariance(distances: &DMatrix<f64>, phi: f64) -> Result<CovarianceMatrix> {
    if !(phi >= 0.0) {
        return Err(Error::Parameter(format!(
            "decay rate phi must be nonnegative, got {phi}"
        )));
    }
    let matrix = distances.map(|d| (-phi * d).exp());
    Ok(CovarianceMatrix { matrix, phi })
}

impl CovarianceMatrix {
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor, with a single jitter retry on failure.
    pub fn factorize(&self) -> Result<FieldSampler> {
        match Cholesky::new(self.matrix.clone()) {
            Some(chol) => Ok(FieldSampler { chol }),
            None => {
                let mut jittered = self.matrix.clone();
                for i in 0..jittered.nrows() {
                    jittered[(i, i)] += CHOLESKY_JITTER;
                }
                Cholesky::new(jittered)
                    .map(|chol| FieldSampler { chol })
                    .ok_or(Error::CholeskyFailed {
                        jitter: CHOLESKY_JITTER,
                    })
            }
        }
    }
}

/// Cached Cholesky factor for repeated field draws.
pub struct FieldSampler {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl FieldSampler {
    /// One draw W ~ MVN(0, Gamma) as L * z with z standard normal.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            w[i] = acc;
        }
        w
    }

    /// Log-density of MVN(0, Gamma) at w.
    pub fn ln_pdf(&self, w: &[f64]) -> f64 {
        let n = w.len();
        let wv = DVector::from_column_slice(w);
        // solve L y = w, quadratic form = |y|^2
        let y = self.chol.l_dirty().solve_lower_triangular(&wv).unwrap();
        let quad = y.norm_squared();
        let ln_det = 2.0 * (0..n).map(|i| self.chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        -0.5 * (quad + ln_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// z = L^{-1} w: the white-noise vector that generates `w`.
    pub fn whiten(&self, w: &[f64]) -> Vec<f64> {
        let wv = DVector::from_column_slice(w);
        self.chol
            .l_dirty()
            .solve_lower_triangular(&wv)
            .expect("triangular solve on a valid Cholesky factor")
            .iter()
            .copied()
            .collect()
    }

    /// w = L z: the field generated by white-noise vector `z`.
    pub fn unwhiten(&self, z: &[f64]) -> Vec<f64> {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            w[i] = acc;
        }
        w
    }

    /// Precision matrix Gamma^{-1}.
    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Log-determinant of Gamma.
    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.chol.l_dirty().nrows())
            .map(|i| self.chol.l_dirty()[(i, i)].ln())
            .sum::<f64>()
    }
}

/// Convenience wrapper: factorize and draw once.
pub fn sample_gaussian_field<R: Rng>(cov: &CovarianceMatrix, rng: &mut R) -> Result<Vec<f64>> {
    Ok(cov.factorize()?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Continuous,
    Categorical,
}

/// Per-detector baseline detection probabilities with the generating field.
#[derive(Debug, Clone)]
pub struct BaselineSurface {
    pub p0: Vec<f64>,
    pub w: Vec<f64>,
    pub eta: f64,
    pub kind: SurfaceKind,
}

/// Continuous transform: p0_j = inv_logit(logit(eta) + W_j).
pub fn continuous_surface(w: &[f64], eta: f64) -> Result<BaselineSurface> {
    check_eta(eta)?;
    let mu = logit(eta);
    let p0 = w.iter().map(|&wj| inv_logit(mu + wj)).collect();
    Ok(BaselineSurface {
        p0,
        w: w.to_vec(),
        eta,
        kind: SurfaceKind::Continuous,
    })
}

/// Categorical transform: the half of detectors with W at or below the median
/// become inactive (p0 = 0); the rest get constant p0 = eta. Ties at the
/// median are broken by detector index, lower indices inactive first.
pub fn categorical_surface(w: &[f64], eta: f64) -> Result<BaselineSurface> {
    check_eta(eta)?;
    let j = w.len();
    let n_inactive = j.div_ceil(2);
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap().then(a.cmp(&b)));
    let mut p0 = vec![eta; j];
    for &idx in order.iter().take(n_inactive) {
        p0[idx] = 0.0;
    }
    Ok(BaselineSurface {
        p0,
        w: w.to_vec(),
        eta,
        kind: SurfaceKind::Categorical,
    })
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!(
            "average baseline detection probability eta must lie in (0,1), got {eta}"
        )));
    }
    Ok(())
}

/// Moran's I with binary rook-adjacency weights on the detector lattice.
pub fn morans_i(values: &[f64], grid: &DetectorGrid) -> Result<f64> {
    if values.len() != grid.n_detectors() {
        return Err(Error::Parameter(format!(
            "expected {} values, got {}",
            grid.n_detectors(),
            values.len()
        )));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let denom: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return Err(Error::ConstantInput);
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut cross = 0.0;
    let mut s0 = 0.0f64;
    for row in 0..ny {
        for col in 0..nx {
            let j = row * nx + col;
            let zj = values[j] - mean;
            // east and north neighbors; each undirected pair counted twice
            if col + 1 < nx {
                cross += 2.0 * zj * (values[j + 1] - mean);
                s0 += 2.0;
            }
            if row + 1 < ny {
                cross += 2.0 * zj * (values[j + nx] - mean);
                s0 += 2.0;
            }
        }
    }
    Ok((n as f64 / s0) * (cross / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn grid(nx: usize, ny: usize) -> DetectorGrid {
        DetectorGrid::build(nx, ny, 1.0, Point::ORIGIN).unwrap()
    }

    #[test]
    fn covariance_phi_zero_all_ones() {
        let d = grid(3, 3).pairwise_distances();
        let c = exponential_covariance(&d, 0.0).unwrap();
        assert!(c.matrix().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn covariance_huge_phi_is_identity() {
        let d = grid(3, 3).pairwise_distances();
        let c = exponential_covariance(&d, 1e6).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                if i == j {
                    assert_eq!(c.matrix()[(i, j)], 1.0);
                } else {
                    assert!(c.matrix()[(i, j)] < 1e-300);
                }
            }
        }
    }

    #[test]
    fn covariance_unit_distance() {
        let d = grid(2, 1).pairwise_distances();
        let c = exponential_covariance(&d, 1.0).unwrap();
        assert_relative_eq!(c.matrix()[(0, 1)], (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn covariance_rejects_negative_phi() {
        let d = grid(2, 2).pairwise_distances();
        assert!(exponential_covariance(&d, -0.1).is_err());
    }

    #[test]
    fn covariance_monotone_in_phi_and_distance() {
        let d = grid(4, 4).pairwise_distances();
        let c1 = exponential_covariance(&d, 0.5).unwrap();
        let c2 = exponential_covariance(&d, 1.5).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    assert!(c2.matrix()[(i, j)] < c1.matrix()[(i, j)]);
                }
            }
        }
        // larger distance, smaller entry at fixed phi
        assert!(c1.matrix()[(0, 15)] < c1.matrix()[(0, 1)]);
    }

    #[test]
    fn field_identity_covariance_gives_independent_normals() {
        let d = grid(3, 1).pairwise_distances();
        let c = exponential_covariance(&d, 1e9).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let w = sample_gaussian_field(&c, &mut rng).unwrap();
        let mut rng2 = ChaCha12Rng::seed_from_u64(7);
        let z: Vec<f64> = (0..3).map(|_| rng2.sample::<f64, _>(StandardNormal)).collect();
        for (a, b) in w.iter().zip(z.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn field_same_seed_is_bit_reproducible() {
        let d = grid(4, 4).pairwise_distances();
        let c = exponential_covariance(&d, 0.3).unwrap();
        let w1 = sample_gaussian_field(&c, &mut ChaCha12Rng::seed_from_u64(11)).unwrap();
        let w2 = sample_gaussian_field(&c, &mut ChaCha12Rng::seed_from_u64(11)).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn field_marginal_variance_is_one() {
        // Monte Carlo check of unit marginal variance on a small grid.
        let g = grid(6, 6);
        let c = exponential_covariance(&g.pairwise_distances(), 0.05).unwrap();
        let sampler = c.factorize().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let n_draws = 10_000;
        let mut sums = vec![0.0; 36];
        let mut sq = vec![0.0; 36];
        for _ in 0..n_draws {
            let w = sampler.sample(&mut rng);
            for (j, &wj) in w.iter().enumerate() {
                sums[j] += wj;
                sq[j] += wj * wj;
            }
        }
        for j in 0..36 {
            let m = sums[j] / n_draws as f64;
            let var = sq[j] / n_draws as f64 - m * m;
            assert!((var - 1.0).abs() < 0.05, "marginal variance {var} at {j}");
        }
    }

    #[test]
    fn field_pairwise_correlation_matches_covariance() {
        // two points at distance ln(2) so gamma = 0.5
        let dist = ln2_distance_matrix();
        let c = exponential_covariance(&dist, 1.0).unwrap();
        assert_relative_eq!(c.matrix()[(0, 1)], 0.5, epsilon = 1e-12);
        let sampler = c.factorize().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 100_000;
        let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let w = sampler.sample(&mut rng);
            s1 += w[0];
            s2 += w[1];
            s11 += w[0] * w[0];
            s22 += w[1] * w[1];
            s12 += w[0] * w[1];
        }
        let nf = n as f64;
        let cov = s12 / nf - (s1 / nf) * (s2 / nf);
        let v1 = s11 / nf - (s1 / nf) * (s1 / nf);
        let v2 = s22 / nf - (s2 / nf) * (s2 / nf);
        let corr = cov / (v1 * v2).sqrt();
        assert!((corr - 0.5).abs() < 0.01, "correlation {corr}");
    }

    #[test]
    fn whiten_unwhiten_round_trips() {
        let g = grid(4, 4);
        let c = exponential_covariance(&g.pairwise_distances(), 0.3).unwrap();
        let f = c.factorize().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let w = f.sample(&mut rng);
        let z = f.whiten(&w);
        let back = f.unwhiten(&z);
        for (a, b) in w.iter().zip(back.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
        // whitening a sample reproduces the exact standard normals it was
        // built from
        let mut rng2 = ChaCha12Rng::seed_from_u64(8);
        let raw: Vec<f64> = (0..16).map(|_| rng2.sample::<f64, _>(StandardNormal)).collect();
        for (a, b) in z.iter().zip(raw.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    fn ln2_distance_matrix() -> DMatrix<f64> {
        let d = 2f64.ln();
        DMatrix::from_row_slice(2, 2, &[0.0, d, d, 0.0])
    }

    #[test]
    fn continuous_surface_values() {
        let s = continuous_surface(&[0.0; 5], 0.3).unwrap();
        for &p in &s.p0 {
            assert_relative_eq!(p, 0.3, epsilon = 1e-12);
        }
        let shift = logit(0.6) - logit(0.1);
        let s = continuous_surface(&[shift], 0.1).unwrap();
        assert_relative_eq!(s.p0[0], 0.6, epsilon = 1e-12);
        let s = continuous_surface(&[1.0], 0.5).unwrap();
        assert_relative_eq!(s.p0[0], inv_logit(1.0), epsilon = 1e-15);
        assert_relative_eq!(s.p0[0], 0.731058578630005, epsilon = 1e-12);
    }

    #[test]
    fn continuous_surface_logit_inversion_recovers_w() {
        let w = [-3.0, -0.5, 0.0, 0.7, 4.0];
        let eta = 0.3;
        let s = continuous_surface(&w, eta).unwrap();
        for (p, wj) in s.p0.iter().zip(w.iter()) {
            assert!((logit(*p) - logit(eta) - wj).abs() < 1e-12);
        }
    }

    #[test]
    fn continuous_surface_rejects_bad_eta() {
        assert!(continuous_surface(&[0.0], 0.0).is_err());
        assert!(continuous_surface(&[0.0], 1.0).is_err());
    }

    #[test]
    fn categorical_surface_median_split() {
        let s = categorical_surface(&[-1.0, -0.5, 0.5, 1.0], 0.3).unwrap();
        assert_eq!(s.p0, vec![0.0, 0.0, 0.3, 0.3]);
    }

    #[test]
    fn categorical_surface_two_levels_and_exact_half() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..1024).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s = categorical_surface(&w, 0.1).unwrap();
        let zeros = s.p0.iter().filter(|&&p| p == 0.0).count();
        assert_eq!(zeros, 512);
        assert!(s.p0.iter().all(|&p| p == 0.0 || p == 0.1));
    }

    #[test]
    fn categorical_surface_odd_count_ceil_split() {
        let s = categorical_surface(&[0.1, 0.2, 0.3], 0.3).unwrap();
        assert_eq!(s.p0.iter().filter(|&&p| p == 0.0).count(), 2);
    }

    #[test]
    fn morans_i_checkerboard_is_minus_one() {
        let g = grid(8, 8);
        let values: Vec<f64> = (0..64)
            .map(|j| if (j / 8 + j % 8) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert_relative_eq!(morans_i(&values, &g).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn morans_i_constant_input_errors() {
        let g = grid(4, 4);
        assert!(matches!(
            morans_i(&[1.0; 16], &g),
            Err(Error::ConstantInput)
        ));
    }

    #[test]
    fn morans_i_length_mismatch_errors() {
        let g = grid(4, 4);
        assert!(morans_i(&[1.0; 15], &g).is_err());
    }
}

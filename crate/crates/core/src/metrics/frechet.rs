use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::MetricError;
use crate::embedder::FeatureVector;

pub const DEFAULT_FID_REG: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-9;
const EIGEN_MAX_ITER: usize = 10_000;

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self, MetricError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(MetricError::DimMismatch(d, cov.nrows()));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(MetricError::NotSymmetric(asym));
        }
        Ok(GaussianStats {
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Sample mean and unbiased (`n − 1`) covariance, symmetrised.
pub fn fit_gaussian(features: &[FeatureVector]) -> Result<GaussianStats, MetricError> {
    if features.len() < 2 {
        return Err(MetricError::TooFewSamples {
            need: 2,
            got: features.len(),
        });
    }
    let d = features[0].dim();
    if let Some(f) = features.iter().find(|f| f.dim() != d) {
        return Err(MetricError::DimMismatch(d, f.dim()));
    }
    let n = features.len();
    let mut mean = DVector::zeros(d);
    for f in features {
        mean += DVector::from_column_slice(f.values());
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f.values()) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianStats { mean, cov })
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricError> {
    SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_ITER).ok_or(MetricError::NumericalFailure)
}

/// PSD square root through the eigendecomposition; negative eigenvalues are
/// treated as zero.
fn sqrt_psd(m: DMatrix<f64>) -> Result<DMatrix<f64>, MetricError> {
    let eig = eigen(m)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Fréchet distance between two Gaussians:
/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`.
///
/// `reg·I` is added to both covariances first. The cross term uses the
/// symmetric form `Tr((√Σa Σb √Σa)^{1/2})`, which has the same trace but
/// stays within symmetric eigenproblems.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats, reg: f64) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimMismatch(a.dim(), b.dim()));
    }
    let d = a.dim();
    let eye = DMatrix::<f64>::identity(d, d) * reg.max(0.0);
    let sa = &a.cov + &eye;
    let sb = &b.cov + &eye;

    let diff = &a.mean - &b.mean;
    let mean_term = diff.dot(&diff);

    let root_a = sqrt_psd(sa.clone())?;
    let inner = &root_a * &sb * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = eigen(inner)?.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();

    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fit_two_points() {
        let g = fit_gaussian(&[fv(&[0.0, 0.0]), fv(&[2.0, 0.0])]).unwrap();
        assert_eq!(g.mean().as_slice(), &[1.0, 0.0]);
        assert_eq!(g.cov(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn fit_identical_points_has_zero_cov() {
        let g = fit_gaussian(&[fv(&[0.3, 0.7, 0.1]), fv(&[0.3, 0.7, 0.1])]).unwrap();
        assert!(g.cov().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_gaussian(&[fv(&[1.0])]), Err(MetricError::TooFewSamples { .. })));
        assert!(matches!(
            fit_gaussian(&[fv(&[1.0]), fv(&[1.0, 2.0])]),
            Err(MetricError::DimMismatch(1, 2))
        ));
    }

    #[test]
    fn rejects_asymmetric_cov() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(GaussianStats::new(vec![0.0; 2], cov), Err(MetricError::NotSymmetric(_))));
    }

    #[test]
    fn closed_forms() {
        let d = 5;
        let a = GaussianStats::new(vec![0.0; d], DMatrix::identity(d, d)).unwrap();
        let mut mu = vec![0.0; d];
        mu[0] = 2.0;
        let b = GaussianStats::new(mu, DMatrix::identity(d, d)).unwrap();
        assert!((frechet_distance(&a, &b, 0.0).unwrap() - 4.0).abs() < 1e-9);
        assert!((frechet_distance(&a, &b, DEFAULT_FID_REG).unwrap() - 4.0).abs() < 1e-9);

        let s1 = GaussianStats::new(vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let s4 = GaussianStats::new(vec![0.0], DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert!((frechet_distance(&s1, &s4, 0.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singular_self_distance() {
        let g = fit_gaussian(&[fv(&[0.0, 1.0, 2.0]), fv(&[1.0, 1.0, 0.0]), fv(&[0.5, 1.0, 1.0])]).unwrap();
        assert!(frechet_distance(&g, &g, DEFAULT_FID_REG).unwrap() <= 1e-6);
    }
}

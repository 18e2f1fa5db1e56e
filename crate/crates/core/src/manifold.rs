//! Constant-curvature manifolds `{x ∈ R^{d+1} : ⟨x, x⟩ = 1/κ}`.
//!
//! For κ > 0 the form is Euclidean and the manifold is a sphere of radius
//! `κ^{-1/2}`; for κ < 0 the last coordinate is negated (Minkowski form) and
//! the manifold is the upper sheet of a hyperboloid.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ManifoldError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("vectors need at least 2 coordinates, got {0}")]
    TooShort(usize),
    #[error("invalid manifold spec: {0}")]
    InvalidSpec(String),
    #[error("usage: {0}")]
    Usage(String),
}

/// Shape of the membership score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipForm {
    /// `exp(−(⟨z,z⟩ − 1/κ)² / 2ζ²)`: exactly 1 on the manifold, → 0 away from it.
    #[default]
    Gaussian,
    /// `exp((−⟨z,z⟩ − 1/κ) / 2ζ²)`, kept for comparison runs. Not bounded by 1.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcmSpec {
    pub kappa: f64,
    /// Manifold dimension; points live in `R^{d+1}`.
    pub d: usize,
    pub zeta: f64,
    #[serde(default)]
    pub membership: MembershipForm,
}

impl Default for CcmSpec {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            d: 5,
            zeta: 1.0,
            membership: MembershipForm::Gaussian,
        }
    }
}

impl CcmSpec {
    pub fn new(kappa: f64, d: usize, zeta: f64) -> Result<Self, ManifoldError> {
        let spec = Self {
            kappa,
            d,
            zeta,
            membership: MembershipForm::Gaussian,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        if self.kappa == 0.0 || !self.kappa.is_finite() {
            return Err(ManifoldError::InvalidSpec("kappa must be finite and non-zero".into()));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(ManifoldError::InvalidSpec("zeta must be positive".into()));
        }
        if self.d == 0 {
            return Err(ManifoldError::InvalidSpec("d must be positive".into()));
        }
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        self.d + 1
    }

    /// Target value `1/κ` of the self inner product.
    pub fn radius_term(&self) -> f64 {
        1.0 / self.kappa
    }
}

/// A latent point with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint {
    pub z: Vec<f64>,
    pub user_id: String,
    pub date: chrono::NaiveDate,
}

/// Curvature-dependent bilinear form.
pub fn signature_inner(x: &[f64], y: &[f64], kappa: f64) -> Result<f64, ManifoldError> {
    if x.len() != y.len() {
        return Err(ManifoldError::Dimension(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(ManifoldError::TooShort(x.len()));
    }
    Ok(signature_inner_unchecked(x, y, kappa))
}

fn signature_inner_unchecked(x: &[f64], y: &[f64], kappa: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let last = x.len() - 1;
    let head: f64 = x[..last].iter().zip(&y[..last]).map(|(a, b)| a * b).sum();
    if kappa > 0.0 {
        head + x[last] * y[last]
    } else {
        head - x[last] * y[last]
    }
}

/// `|⟨z, z⟩ − 1/κ|`
pub fn deviation(z: &[f64], spec: &CcmSpec) -> f64 {
    (signature_inner_unchecked(z, z, spec.kappa) - spec.radius_term()).abs()
}

pub fn membership(z: &[f64], spec: &CcmSpec) -> f64 {
    let q = signature_inner_unchecked(z, z, spec.kappa);
    let two_zeta_sq = 2.0 * spec.zeta * spec.zeta;
    match spec.membership {
        MembershipForm::Gaussian => {
            let dev = q - spec.radius_term();
            (-(dev * dev) / two_zeta_sq).exp()
        }
        MembershipForm::Printed => ((-q - spec.radius_term()) / two_zeta_sq).exp(),
    }
}

/// Draws `count` points exactly on the manifold, deterministically in `seed`.
pub fn sample_prior(spec: &CcmSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_prior_with(spec, count, &mut rng)
}

pub fn sample_prior_with<R: Rng + ?Sized>(spec: &CcmSpec, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count).map(|_| sample_one(spec, rng)).collect()
}

fn sample_one<R: Rng + ?Sized>(spec: &CcmSpec, rng: &mut R) -> Vec<f64> {
    let dim = spec.ambient_dim();
    if spec.kappa > 0.0 {
        // Uniform on the sphere: normalize an isotropic Gaussian.
        loop {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                let r = 1.0 / spec.kappa.sqrt();
                return g.into_iter().map(|v| r * v / norm).collect();
            }
        }
    } else {
        // Exponential map at the base point (0, …, 0, R) of the Gaussian
        // tangent vector u = (v, 0), R = |κ|^{-1/2}:
        //   exp(u) = (R sinh(|v|/R) v/|v|, R cosh(|v|/R)).
        let r = 1.0 / (-spec.kappa).sqrt();
        let v: Vec<f64> = (0..dim - 1).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut z = vec![0.0; dim];
        if norm > 0.0 {
            let t = norm / r;
            let s = r * t.sinh() / norm;
            for (zi, vi) in z.iter_mut().zip(&v) {
                *zi = s * vi;
            }
            z[dim - 1] = r * t.cosh();
        } else {
            z[dim - 1] = r;
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSummary {
    pub mean: f64,
    pub max: f64,
}

pub fn manifold_deviation<P: AsRef<[f64]>>(points: &[P], spec: &CcmSpec) -> Result<DeviationSummary, ManifoldError> {
    if points.is_empty() {
        return Err(ManifoldError::Usage("manifold_deviation needs at least one point".into()));
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for p in points {
        let d = deviation(p.as_ref(), spec);
        sum += d;
        max = max.max(d);
    }
    Ok(DeviationSummary {
        mean: sum / points.len() as f64,
        max,
    })
}

/// Rescales `z` onto the manifold along its own ray where possible. Analysis only.
pub fn project(z: &[f64], spec: &CcmSpec) -> Option<Vec<f64>> {
    let q = signature_inner_unchecked(z, z, spec.kappa);
    let target = spec.radius_term();
    if q == 0.0 || q.signum() != target.signum() {
        return None;
    }
    let s = (target / q).sqrt();
    let mut out: Vec<f64> = z.iter().map(|v| v * s).collect();
    if spec.kappa < 0.0 && out[out.len() - 1] < 0.0 {
        for v in &mut out {
            *v = -*v;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_examples() {
        assert_eq!(signature_inner(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], -1.0).unwrap(), -1.0);
        assert_eq!(signature_inner(&[3.0, 4.0, 0.0], &[0.0, 0.0, 2.0], -1.0).unwrap(), 0.0);
        assert_eq!(signature_inner(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 1.0).unwrap(), 1.0);
        assert_eq!(signature_inner(&[1.0, 0.0], &[1.0], 1.0), Err(ManifoldError::Dimension(2, 1)));
        assert_eq!(signature_inner(&[1.0], &[1.0], 1.0), Err(ManifoldError::TooShort(1)));
    }

    #[test]
    fn membership_examples() {
        let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        assert_eq!(membership(&[0.6, 0.8, 0.0], &spec), 1.0);
        assert!((membership(&[0.0, 0.0, 0.0], &spec) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((membership(&[0.0, 0.0, 0.0], &spec) - 0.60653).abs() < 1e-5);
        let wide = CcmSpec::new(1.0, 2, 1e8).unwrap();
        assert!((membership(&[3.0, -7.0, 2.0], &wide) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn printed_form_peaks_on_the_wrong_quadric() {
        let mut spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        spec.membership = MembershipForm::Printed;
        // Not bounded by one: at z = 0 the score is exp(−1/2) but keeps growing
        // as ⟨z,z⟩ decreases, which the Euclidean form cannot do below zero.
        assert!((membership(&[0.0, 0.0, 0.0], &spec) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(membership(&[1.0, 0.0, 0.0], &spec) < membership(&[0.0, 0.0, 0.0], &spec));
    }

    #[test]
    fn deviation_summary() {
        let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        let zeros = vec![vec![0.0; 3]; 4];
        let s = manifold_deviation(&zeros, &spec).unwrap();
        assert_eq!((s.mean, s.max), (1.0, 1.0));
        let mixed = vec![vec![1.0, 0.0, 0.0], vec![0.0; 3]];
        assert_eq!(manifold_deviation(&mixed, &spec).unwrap().mean, 0.5);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(manifold_deviation(&empty, &spec), Err(ManifoldError::Usage(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(CcmSpec::new(0.0, 2, 1.0).is_err());
        assert!(CcmSpec::new(1.0, 2, 0.0).is_err());
        assert!(CcmSpec::new(-0.5, 3, 0.1).is_ok());
    }

    #[test]
    fn projection_lands_on_manifold() {
        let spec = CcmSpec::new(-1.0, 2, 1.0).unwrap();
        let p = project(&[0.3, 0.1, -2.0], &spec).unwrap();
        assert!(deviation(&p, &spec) < 1e-12);
        assert!(p[2] > 0.0);
        let sphere = CcmSpec::new(4.0, 2, 1.0).unwrap();
        let p = project(&[1.0, 1.0, 1.0], &sphere).unwrap();
        assert!(deviation(&p, &sphere) < 1e-12);
    }
}

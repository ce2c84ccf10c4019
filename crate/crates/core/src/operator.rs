use std::sync::Arc;

use ndarray::Array1;

use crate::basis::EigenBasis;
use crate::error::{Error, Result};
use crate::field::Field;

/// Spectral power of the Dirichlet Laplacian: the operator acts on mode k by
/// multiplication with `mu_k = lambda_k^s`, `s` in (0, 1]. Negative powers
/// invert on the truncated span, so `p = 1` followed by `p = -1` is the
/// identity there.
#[derive(Debug, Clone)]
pub struct FractionalOperator {
    s: f64,
    basis: Arc<EigenBasis>,
    mu: Array1<f64>,
}

impl FractionalOperator {
    pub fn new(basis: Arc<EigenBasis>, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidConfig(format!("s = {s} outside (0, 1]")));
        }
        let mu = basis.lambdas().mapv(|l| l.powf(s));
        Ok(Self { s, basis, mu })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    /// Operator eigenvalue of mode k.
    pub fn mu(&self, mode: usize) -> f64 {
        self.mu[mode]
    }

    pub fn mu_all(&self) -> &Array1<f64> {
        &self.mu
    }

    /// Largest operator eigenvalue on the truncation.
    pub fn mu_max(&self) -> f64 {
        self.mu[self.mu.len() - 1]
    }

    /// Multiplies coefficient k by `mu_k^p`.
    pub fn scale_coeffs(&self, coeffs: &Array1<f64>, p: f64) -> Array1<f64> {
        let mut out = coeffs.clone();
        for (c, &mu) in out.iter_mut().zip(&self.mu) {
            *c *= mu.powf(p);
        }
        out
    }

    /// Applies the operator power `A^p` to a field.
    pub fn apply_power(&self, field: &mut Field, p: f64) -> Result<Field> {
        if !Arc::ptr_eq(field.basis(), &self.basis) {
            return Err(Error::BasisMismatch);
        }
        let coeffs = field.coefficients()?.clone();
        Field::from_coeffs(self.basis.clone(), self.scale_coeffs(&coeffs, p))
    }

    /// Energy norm `(sum_k mu_k c_k^2)^(1/2)`.
    pub fn norm_h(&self, field: &mut Field) -> Result<f64> {
        if !Arc::ptr_eq(field.basis(), &self.basis) {
            return Err(Error::BasisMismatch);
        }
        let c = field.coefficients()?;
        Ok(c.iter().zip(&self.mu).map(|(&ck, &mu)| mu * ck * ck).sum::<f64>().sqrt())
    }

    /// Dual norm `(sum_k c_k^2 / mu_k)^(1/2)`.
    pub fn norm_hstar(&self, field: &mut Field) -> Result<f64> {
        if !Arc::ptr_eq(field.basis(), &self.basis) {
            return Err(Error::BasisMismatch);
        }
        let c = field.coefficients()?;
        Ok(c.iter().zip(&self.mu).map(|(&ck, &mu)| ck * ck / mu).sum::<f64>().sqrt())
    }
}

/// Comparability constants of phi1 against distance-to-boundary: min and max
/// over interior nodes of `phi1(x) / (dist(x) ^ 1)`. Finite and positive on
/// rectangles.
pub fn phi1_distance_ratio(basis: &EigenBasis) -> (f64, f64) {
    let domain = basis.domain();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (idx, p) in domain.nodes().enumerate() {
        let d = domain.dist_to_boundary(p).min(1.0);
        let r = basis.phi1_grid()[idx] / d;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// First eigenfunction as a field.
pub fn phi1_profile(basis: &Arc<EigenBasis>) -> Field {
    let mut f = Field::eigenfunction(basis.clone(), 0);
    f.sync().expect("synthesis of a unit coefficient vector");
    f
}

use std::sync::Arc;

use ndarray::Array1;

use crate::basis::EigenBasis;
use crate::error::{Error, Result};

/// Which representation of a [`Field`] is authoritative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Authoritative {
    Grid,
    Coeffs,
    Both,
}

/// A function on the domain held simultaneously as interior-grid samples and
/// spectral coefficients. Construction marks one side authoritative; the
/// other is filled in lazily by [`Field::sync`]. Synchronization requires the
/// single owner (`&mut self`); a synced field is freely shared read-only.
#[derive(Debug, Clone)]
pub struct Field {
    basis: Arc<EigenBasis>,
    grid: Array1<f64>,
    coeffs: Array1<f64>,
    state: Authoritative,
}

impl Field {
    pub fn from_grid(basis: Arc<EigenBasis>, grid: Array1<f64>) -> Result<Self> {
        if grid.len() != basis.domain().node_count() {
            return Err(Error::InvalidConfig(format!(
                "grid length {} does not match the {}-node domain",
                grid.len(),
                basis.domain().node_count()
            )));
        }
        let m = basis.len();
        Ok(Self { basis, grid, coeffs: Array1::zeros(m), state: Authoritative::Grid })
    }

    pub fn from_coeffs(basis: Arc<EigenBasis>, coeffs: Array1<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::InvalidConfig(format!(
                "coefficient length {} does not match the {}-mode basis",
                coeffs.len(),
                basis.len()
            )));
        }
        let n = basis.domain().node_count();
        Ok(Self { basis, grid: Array1::zeros(n), coeffs, state: Authoritative::Coeffs })
    }

    pub fn zero(basis: Arc<EigenBasis>) -> Self {
        let n = basis.domain().node_count();
        let m = basis.len();
        Self { basis, grid: Array1::zeros(n), coeffs: Array1::zeros(m), state: Authoritative::Both }
    }

    /// The k-th eigenfunction as a field (unit coefficient vector).
    pub fn eigenfunction(basis: Arc<EigenBasis>, mode: usize) -> Self {
        let mut coeffs = Array1::zeros(basis.len());
        coeffs[mode] = 1.0;
        Self::from_coeffs(basis, coeffs).expect("unit coefficient vector")
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn same_basis(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
    }

    pub fn is_synced(&self) -> bool {
        self.state == Authoritative::Both
    }

    /// Fills the stale representation from the authoritative one.
    pub fn sync(&mut self) -> Result<()> {
        match self.state {
            Authoritative::Both => {}
            Authoritative::Grid => {
                self.coeffs = self.basis.forward(&self.grid)?;
                self.state = Authoritative::Both;
            }
            Authoritative::Coeffs => {
                self.grid = self.basis.inverse(&self.coeffs)?;
                self.state = Authoritative::Both;
            }
        }
        Ok(())
    }

    pub fn grid_values(&mut self) -> Result<&Array1<f64>> {
        if self.state == Authoritative::Coeffs {
            self.sync()?;
        }
        Ok(&self.grid)
    }

    pub fn coefficients(&mut self) -> Result<&Array1<f64>> {
        if self.state == Authoritative::Grid {
            self.sync()?;
        }
        Ok(&self.coeffs)
    }

    /// Grid view of a synchronized field.
    ///
    /// Panics when the grid side is stale; fields coming out of the solvers
    /// are always stored synchronized.
    pub fn grid_ref(&self) -> &Array1<f64> {
        assert!(self.state != Authoritative::Coeffs, "field grid values are stale; call sync() first");
        &self.grid
    }

    /// Coefficient view of a synchronized field. Panics when stale.
    pub fn coeffs_ref(&self) -> &Array1<f64> {
        assert!(self.state != Authoritative::Grid, "field coefficients are stale; call sync() first");
        &self.coeffs
    }

    pub fn min_grid_value(&self) -> f64 {
        self.grid_ref().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.grid_ref().iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// True when the grid minimum stays above `-clip_tolerance`.
    pub fn is_nonnegative(&self, clip_tolerance: f64) -> bool {
        self.min_grid_value() >= -clip_tolerance
    }

    /// New field with grid values mapped pointwise; coefficients go stale.
    pub fn map_grid(&self, f: impl Fn(f64) -> f64) -> Field {
        let grid = self.grid_ref().mapv(&f);
        Field { basis: self.basis.clone(), grid, coeffs: Array1::zeros(self.basis.len()), state: Authoritative::Grid }
    }

    /// New field scaled by a constant (acts on whichever side is valid).
    pub fn scaled(&self, factor: f64) -> Field {
        let mut out = self.clone();
        match out.state {
            Authoritative::Grid => out.grid *= factor,
            Authoritative::Coeffs => out.coeffs *= factor,
            Authoritative::Both => {
                out.grid *= factor;
                out.coeffs *= factor;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn interval_basis(n: usize, m: usize) -> Arc<EigenBasis> {
        EigenBasis::build(DomainSpec::unit_interval(n).unwrap(), m).unwrap()
    }

    #[test]
    fn eigenfunction_forward_picks_out_unit_vector() {
        let basis = interval_basis(64, 8);
        let mut phi2 = Field::from_grid(basis.clone(), basis.eval_mode_on_grid(1)).unwrap();
        let coeffs = phi2.coefficients().unwrap();
        for (k, &c) in coeffs.iter().enumerate() {
            let expect = if k == 1 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-12, "coefficient {k} was {c}");
        }
    }

    #[test]
    fn unit_coefficient_synthesizes_phi1() {
        let basis = interval_basis(32, 4);
        let mut f = Field::eigenfunction(basis.clone(), 0);
        let grid = f.grid_values().unwrap().clone();
        for (i, &v) in grid.iter().enumerate() {
            assert_relative_eq!(v, basis.phi1_grid()[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn round_trip_band_limited_1d() {
        let basis = interval_basis(128, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coeffs: Array1<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = basis.inverse(&coeffs).unwrap();
        let back = basis.forward(&grid).unwrap();
        let err = (&back - &coeffs).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(err <= 1e-12, "round trip error {err}");
    }

    #[test]
    fn round_trip_band_limited_2d() {
        let basis = EigenBasis::build(DomainSpec::rectangle(1.0, 1.3, 24).unwrap(), 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeffs: Array1<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = basis.inverse(&coeffs).unwrap();
        let back = basis.forward(&grid).unwrap();
        let err = (&back - &coeffs).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(err <= 1e-12, "round trip error {err}");
    }

    #[test]
    fn forward_refuses_aliased_modes() {
        let basis = interval_basis(16, 20);
        let grid = Array1::zeros(16);
        assert!(matches!(basis.forward(&grid), Err(Error::AliasedMode { .. })));
    }

    #[test]
    fn stale_access_panics() {
        let basis = interval_basis(32, 4);
        let f = Field::from_coeffs(basis, Array1::zeros(4)).unwrap();
        let r = std::panic::catch_unwind(|| f.grid_ref().len());
        assert!(r.is_err());
    }
}

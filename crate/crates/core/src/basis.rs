use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::domain::{Coord, DomainSpec};
use crate::error::{Error, Result};

/// One Dirichlet eigenpair of the Laplacian on the rectangle. Indices are
/// 1-based; the second component is 0 on intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: [usize; 2],
    pub lambda: f64,
}

/// Dirichlet eigenbasis of the Laplacian, truncated at `M` modes and sorted by
/// nondecreasing eigenvalue with lexicographic tie-break on the index tuple.
///
/// Eigenfunctions are closed-form sine products, L2-normalized:
/// on (0, L) the pair k is ((k pi / L)^2, sqrt(2/L) sin(k pi x / L)), and
/// rectangles carry the tensor products. The basis owns per-axis tables of
/// eigenfunction values on the interior grid, so grid synthesis never
/// re-evaluates sines.
#[derive(Debug)]
pub struct EigenBasis {
    domain: DomainSpec,
    modes: Vec<Mode>,
    /// Per-axis tables: `axis_tables[a][(i, k)]` is the 1-d factor of mode
    /// index k+1 at interior node i along axis a.
    axis_tables: Vec<Array2<f64>>,
    /// Largest 1-d index used along each axis.
    max_index: [usize; 2],
    phi1_grid: Array1<f64>,
}

impl EigenBasis {
    /// Builds the first `modes` eigenpairs on `domain`.
    pub fn build(domain: DomainSpec, modes: usize) -> Result<Arc<Self>> {
        if modes == 0 {
            return Err(Error::InvalidConfig("basis needs at least one mode".into()));
        }
        let list = match domain.dimension() {
            1 => {
                let l = domain.side(0);
                (1..=modes)
                    .map(|k| Mode { index: [k, 0], lambda: (k as f64 * PI / l).powi(2) })
                    .collect::<Vec<_>>()
            }
            2 => enumerate_rectangle_modes(&domain, modes),
            d => return Err(Error::UnsupportedDomain(d)),
        };

        let mut max_index = [0usize; 2];
        for m in &list {
            max_index[0] = max_index[0].max(m.index[0]);
            max_index[1] = max_index[1].max(m.index[1]);
        }

        let mut axis_tables = Vec::new();
        for a in 0..domain.dimension() {
            axis_tables.push(axis_table(&domain, a, max_index[a]));
        }

        let mut basis = Self { domain, modes: list, axis_tables, max_index, phi1_grid: Array1::zeros(0) };
        basis.phi1_grid = basis.eval_mode_on_grid(0);
        Ok(Arc::new(basis))
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn lambda(&self, mode: usize) -> f64 {
        self.modes[mode].lambda
    }

    pub fn lambdas(&self) -> Array1<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// First eigenfunction sampled on the interior grid. Strictly positive.
    pub fn phi1_grid(&self) -> &Array1<f64> {
        &self.phi1_grid
    }

    /// Evaluates eigenfunction `mode` (0-based position in the sorted list)
    /// at an arbitrary point of the domain.
    pub fn eval_mode(&self, mode: usize, p: Coord) -> f64 {
        let m = &self.modes[mode];
        let mut v = 1.0;
        for a in 0..self.domain.dimension() {
            let l = self.domain.side(a);
            v *= (2.0 / l).sqrt() * (m.index[a] as f64 * PI * p[a] / l).sin();
        }
        v
    }

    /// Eigenfunction `mode` on the full interior grid (flattened row-major).
    pub fn eval_mode_on_grid(&self, mode: usize) -> Array1<f64> {
        let m = &self.modes[mode];
        match self.domain.dimension() {
            1 => self.axis_tables[0].column(m.index[0] - 1).to_owned(),
            _ => {
                let n = self.domain.nodes_per_side();
                let cx = self.axis_tables[0].column(m.index[0] - 1);
                let cy = self.axis_tables[1].column(m.index[1] - 1);
                let mut out = Array1::zeros(n * n);
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = cx[i] * cy[j];
                    }
                }
                out
            }
        }
    }

    /// Largest 1-d index in use along each axis.
    pub fn max_index(&self) -> [usize; 2] {
        self.max_index
    }

    /// Quadrature of a grid function: cell volume times the node sum.
    pub fn integrate(&self, values: &Array1<f64>) -> f64 {
        self.domain.cell_volume() * values.sum()
    }

    /// Quadrature of `values * phi1`.
    pub fn integrate_weighted(&self, values: &Array1<f64>) -> f64 {
        self.domain.cell_volume() * values.dot(&self.phi1_grid)
    }

    /// Gram matrix of the basis under the grid quadrature; identity up to
    /// aliasing when every index stays at or below the nodes per side.
    pub fn gram_matrix(&self) -> Array2<f64> {
        let m = self.len();
        let mut g = Array2::zeros((m, m));
        let vol = self.domain.cell_volume();
        let grids: Vec<Array1<f64>> = (0..m).map(|k| self.eval_mode_on_grid(k)).collect();
        for a in 0..m {
            for b in a..m {
                let v = vol * grids[a].dot(&grids[b]);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Worst deviation of the Gram matrix from the identity.
    pub fn gram_defect(&self) -> f64 {
        let g = self.gram_matrix();
        let m = self.len();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g[(a, b)] - target).abs());
            }
        }
        worst
    }

    /// True when every mode index is resolvable on the grid, which makes the
    /// forward/inverse transform pair exact on the truncated span.
    pub fn transform_exact(&self) -> bool {
        let n = self.domain.nodes_per_side();
        self.max_index[0] <= n && self.max_index[1] <= n
    }
}

impl EigenBasis {
    /// Forward transform: spectral coefficients of a grid function by
    /// quadrature, `c_k = h^d sum_i g(x_i) phi_k(x_i)`.
    ///
    /// Exact (a bijection with [`EigenBasis::inverse`] on the truncated span)
    /// as long as every mode index is at most the interior node count per
    /// side; beyond that the sine columns alias and the transform is refused.
    pub fn forward(&self, grid: &Array1<f64>) -> Result<Array1<f64>> {
        if grid.len() != self.domain.node_count() {
            return Err(Error::InvalidConfig(format!(
                "grid length {} does not match the {}-node domain",
                grid.len(),
                self.domain.node_count()
            )));
        }
        let n = self.domain.nodes_per_side();
        if !self.transform_exact() {
            let bad = self
                .modes
                .iter()
                .find(|m| m.index[0] > n || m.index[1] > n)
                .map(|m| m.index)
                .unwrap_or([0, 0]);
            return Err(Error::AliasedMode { index: bad, limit: n });
        }
        let vol = self.domain.cell_volume();
        match self.domain.dimension() {
            1 => {
                let rect = self.axis_tables[0].t().dot(grid) * vol;
                Ok(self.modes.iter().map(|m| rect[m.index[0] - 1]).collect())
            }
            _ => {
                let g = grid.view().into_shape_with_order((n, n)).expect("square grid");
                let rect = self.axis_tables[0].t().dot(&g).dot(&self.axis_tables[1]) * vol;
                Ok(self.modes.iter().map(|m| rect[(m.index[0] - 1, m.index[1] - 1)]).collect())
            }
        }
    }

    /// Inverse transform: grid synthesis `g(x_i) = sum_k c_k phi_k(x_i)`.
    pub fn inverse(&self, coeffs: &Array1<f64>) -> Result<Array1<f64>> {
        if coeffs.len() != self.len() {
            return Err(Error::InvalidConfig(format!(
                "coefficient length {} does not match the {}-mode basis",
                coeffs.len(),
                self.len()
            )));
        }
        match self.domain.dimension() {
            1 => {
                let mut rect = Array1::zeros(self.max_index[0]);
                for (m, &c) in self.modes.iter().zip(coeffs) {
                    rect[m.index[0] - 1] += c;
                }
                Ok(self.axis_tables[0].dot(&rect))
            }
            _ => {
                let mut rect = Array2::zeros((self.max_index[0], self.max_index[1]));
                for (m, &c) in self.modes.iter().zip(coeffs) {
                    rect[(m.index[0] - 1, m.index[1] - 1)] += c;
                }
                let g = self.axis_tables[0].dot(&rect).dot(&self.axis_tables[1].t());
                Ok(Array1::from_iter(g.into_iter()))
            }
        }
    }
}

fn axis_table(domain: &DomainSpec, axis: usize, max_index: usize) -> Array2<f64> {
    let n = domain.nodes_per_side();
    let l = domain.side(axis);
    let norm = (2.0 / l).sqrt();
    let mut t = Array2::zeros((n, max_index));
    for i in 0..n {
        let x = (i + 1) as f64 * domain.spacing(axis);
        for k in 1..=max_index {
            t[(i, k - 1)] = norm * (k as f64 * PI * x / l).sin();
        }
    }
    t
}

/// The `modes` smallest tensor eigenvalues on a rectangle. The candidate
/// bound grows until every excluded index pair provably exceeds the cut.
fn enumerate_rectangle_modes(domain: &DomainSpec, modes: usize) -> Vec<Mode> {
    let (l1, l2) = (domain.side(0), domain.side(1));
    let lam = |k: usize, l: usize| (k as f64 * PI / l1).powi(2) + (l as f64 * PI / l2).powi(2);
    let mut bound = (modes as f64).sqrt().ceil() as usize + 1;
    loop {
        let mut cand: Vec<Mode> = Vec::with_capacity(bound * bound);
        for k in 1..=bound {
            for l in 1..=bound {
                cand.push(Mode { index: [k, l], lambda: lam(k, l) });
            }
        }
        cand.sort_by(|a, b| {
            a.lambda
                .partial_cmp(&b.lambda)
                .unwrap()
                .then(a.index[0].cmp(&b.index[0]))
                .then(a.index[1].cmp(&b.index[1]))
        });
        cand.truncate(modes);
        // Any pair with an index beyond `bound` has eigenvalue at least this.
        let excluded_min = lam(bound + 1, 1).min(lam(1, bound + 1));
        if cand.len() == modes && cand.last().unwrap().lambda <= excluded_min {
            return cand;
        }
        bound *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_eigenpairs() {
        let basis = EigenBasis::build(DomainSpec::unit_interval(64).unwrap(), 3).unwrap();
        let expect = [PI * PI, 4.0 * PI * PI, 9.0 * PI * PI];
        for (k, &l) in expect.iter().enumerate() {
            assert_relative_eq!(basis.lambda(k), l, max_relative = 1e-14);
        }
        // phi_k(x) = sqrt(2) sin(k pi x) on the unit interval
        assert_relative_eq!(basis.eval_mode(0, [0.5, 0.0]), 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(basis.eval_mode(1, [0.25, 0.0]), 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn unit_square_ordering_with_tie_break() {
        let basis = EigenBasis::build(DomainSpec::rectangle(1.0, 1.0, 24).unwrap(), 3).unwrap();
        let pi2 = PI * PI;
        assert_relative_eq!(basis.lambda(0), 2.0 * pi2, max_relative = 1e-14);
        assert_relative_eq!(basis.lambda(1), 5.0 * pi2, max_relative = 1e-14);
        assert_relative_eq!(basis.lambda(2), 5.0 * pi2, max_relative = 1e-14);
        assert_eq!(basis.modes()[0].index, [1, 1]);
        assert_eq!(basis.modes()[1].index, [1, 2]);
        assert_eq!(basis.modes()[2].index, [2, 1]);
    }

    #[test]
    fn ordering_nondecreasing_many_modes() {
        let basis = EigenBasis::build(DomainSpec::rectangle(1.0, 0.7, 32).unwrap(), 40).unwrap();
        for w in basis.modes().windows(2) {
            assert!(w[0].lambda <= w[1].lambda);
        }
    }

    #[test]
    fn gram_identity_on_interval() {
        let basis = EigenBasis::build(DomainSpec::unit_interval(128).unwrap(), 64).unwrap();
        assert!(basis.gram_defect() <= 1e-10);
    }

    #[test]
    fn gram_identity_on_square() {
        let basis = EigenBasis::build(DomainSpec::rectangle(1.0, 1.0, 32).unwrap(), 16).unwrap();
        assert!(basis.gram_defect() <= 1e-10);
    }

    #[test]
    fn phi1_positive_everywhere() {
        for domain in [DomainSpec::unit_interval(64).unwrap(), DomainSpec::rectangle(1.5, 1.0, 24).unwrap()] {
            let basis = EigenBasis::build(domain, 8).unwrap();
            assert!(basis.phi1_grid().iter().all(|&v| v > 0.0));
        }
    }
}

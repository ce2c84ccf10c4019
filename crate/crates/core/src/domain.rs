use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the domain. The second coordinate is ignored for 1-d domains.
pub type Coord = [f64; 2];

/// Axis-aligned interval (0, L) or rectangle (0, L1) x (0, L2) with a uniform
/// interior-node grid. Boundary nodes carry the homogeneous Dirichlet value 0
/// and are not stored as unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    dimension: usize,
    sides: [f64; 2],
    grid_points_per_side: usize,
}

impl DomainSpec {
    pub fn new(dimension: usize, sides: &[f64], grid_points_per_side: usize) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::UnsupportedDomain(dimension));
        }
        if sides.len() != dimension {
            return Err(Error::InvalidDomain(format!(
                "expected {} side lengths, got {}",
                dimension,
                sides.len()
            )));
        }
        if sides.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidDomain("side lengths must be positive".into()));
        }
        if grid_points_per_side < 16 {
            return Err(Error::InvalidDomain(format!(
                "grid_points_per_side = {} below the minimum of 16",
                grid_points_per_side
            )));
        }
        let mut s = [0.0; 2];
        s[..dimension].copy_from_slice(sides);
        Ok(Self { dimension, sides: s, grid_points_per_side })
    }

    pub fn interval(length: f64, grid_points: usize) -> Result<Self> {
        Self::new(1, &[length], grid_points)
    }

    pub fn rectangle(l1: f64, l2: f64, grid_points: usize) -> Result<Self> {
        Self::new(2, &[l1, l2], grid_points)
    }

    /// Unit interval with the given number of interior nodes.
    pub fn unit_interval(grid_points: usize) -> Result<Self> {
        Self::interval(1.0, grid_points)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.sides[axis]
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides[..self.dimension]
    }

    /// Interior nodes per side.
    pub fn nodes_per_side(&self) -> usize {
        self.grid_points_per_side
    }

    /// Total number of interior nodes.
    pub fn node_count(&self) -> usize {
        self.grid_points_per_side.pow(self.dimension as u32)
    }

    /// Grid spacing along an axis: h = L / (n + 1).
    pub fn spacing(&self, axis: usize) -> f64 {
        self.sides[axis] / (self.grid_points_per_side + 1) as f64
    }

    /// Quadrature weight of one grid cell (trapezoid rule with zero boundary
    /// values collapses to a plain cell-volume weight on interior nodes).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dimension).map(|a| self.spacing(a)).product()
    }

    /// Coordinates of the flattened interior node `idx` (row-major in 2-d).
    pub fn node(&self, idx: usize) -> Coord {
        let n = self.grid_points_per_side;
        match self.dimension {
            1 => [(idx + 1) as f64 * self.spacing(0), 0.0],
            _ => {
                let i = idx / n;
                let j = idx % n;
                [(i + 1) as f64 * self.spacing(0), (j + 1) as f64 * self.spacing(1)]
            }
        }
    }

    /// Integer grid offsets (i, j) of a flattened node; j = 0 in 1-d.
    pub fn node_indices(&self, idx: usize) -> [usize; 2] {
        let n = self.grid_points_per_side;
        match self.dimension {
            1 => [idx + 1, 0],
            _ => [idx / n + 1, idx % n + 1],
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.node_count()).map(move |i| self.node(i))
    }

    /// Distance to the boundary of the rectangle.
    pub fn dist_to_boundary(&self, p: Coord) -> f64 {
        let mut d = f64::INFINITY;
        for a in 0..self.dimension {
            d = d.min(p[a]).min(self.sides[a] - p[a]);
        }
        d
    }

    /// Euclidean distance restricted to the active coordinates.
    pub fn distance(&self, p: Coord, q: Coord) -> f64 {
        match self.dimension {
            1 => (p[0] - q[0]).abs(),
            _ => ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.dimension {
            1 => self.sides[0],
            _ => (self.sides[0].powi(2) + self.sides[1].powi(2)).sqrt(),
        }
    }

    pub fn contains_interior(&self, p: Coord) -> bool {
        (0..self.dimension).all(|a| p[a] > 0.0 && p[a] < self.sides[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(DomainSpec::new(3, &[1.0, 1.0, 1.0], 32), Err(Error::UnsupportedDomain(3))));
        assert!(matches!(DomainSpec::new(0, &[], 32), Err(Error::UnsupportedDomain(0))));
        assert!(DomainSpec::new(1, &[-1.0], 32).is_err());
        assert!(DomainSpec::new(1, &[1.0], 8).is_err());
    }

    #[test]
    fn interval_grid_layout() {
        let d = DomainSpec::unit_interval(99).unwrap();
        assert_eq!(d.node_count(), 99);
        assert!((d.spacing(0) - 0.01).abs() < 1e-15);
        assert!((d.node(0)[0] - 0.01).abs() < 1e-15);
        assert!((d.node(98)[0] - 0.99).abs() < 1e-15);
        assert!((d.dist_to_boundary([0.25, 0.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rectangle_grid_layout() {
        let d = DomainSpec::rectangle(2.0, 1.0, 16).unwrap();
        assert_eq!(d.node_count(), 256);
        let p = d.node(16); // i = 1, j = 0
        assert!((p[0] - 2.0 * 2.0 / 17.0).abs() < 1e-14);
        assert!((p[1] - 1.0 / 17.0).abs() < 1e-14);
        assert!((d.cell_volume() - d.spacing(0) * d.spacing(1)).abs() < 1e-16);
        assert!((d.diameter() - 5.0f64.sqrt()).abs() < 1e-14);
    }
}

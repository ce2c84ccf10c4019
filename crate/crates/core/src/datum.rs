use std::sync::Arc;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::basis::EigenBasis;
use crate::domain::Coord;
use crate::error::{Error, Result};
use crate::field::Field;

/// Named closed-form initial data, grid-sampled. All are bounded and
/// nonnegative; indicators are smoothed over two grid cells.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Datum {
    Zero,
    /// `amplitude * phi1`.
    Phi1 { amplitude: f64 },
    /// Linear combination of eigenfunctions by 1-based rank.
    Modes { components: Vec<(usize, f64)> },
    /// Compact cosine-squared bump of the given half-width around a center.
    Bump {
        center: Vec<f64>,
        width: f64,
        height: f64,
    },
    /// Mass concentrated near the boundary, vanishing in the middle: the
    /// datum whose waiting time is long.
    Hole { height: f64, margin: f64, width: f64 },
    /// Indicator of an axis-aligned box, ramped down over two grid cells.
    Indicator { from: Vec<f64>, to: Vec<f64>, height: f64 },
    /// Separated-profile datum `V t0^(-1/(m-1))`; needs the elliptic profile,
    /// so it is materialized by the orchestration layer.
    Giant { t0: f64 },
    /// Pointwise sum of closed-form data. A bump plus a small phi1 floor
    /// keeps m > 1, s = 1 runs away from the vacuum free boundary.
    Sum { parts: Vec<Datum> },
}

/// Standard compactly supported mollifier profile `exp(1 - 1/(1 - r^2))`;
/// smooth cutoffs keep the spectral tail (and hence clipping) at roundoff.
fn smooth_bump(p: Coord, center: Coord, width: f64, height: f64, dim: usize) -> f64 {
    let r2: f64 = (0..dim).map(|a| ((p[a] - center[a]) / width).powi(2)).sum();
    if r2 < 1.0 {
        height * (1.0 - 1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

impl Datum {
    pub fn label(&self) -> String {
        match self {
            Datum::Zero => "zero".into(),
            Datum::Phi1 { .. } => "phi1".into(),
            Datum::Modes { .. } => "modes".into(),
            Datum::Bump { .. } => "bump".into(),
            Datum::Hole { .. } => "hole".into(),
            Datum::Indicator { .. } => "indicator".into(),
            Datum::Giant { .. } => "giant".into(),
            Datum::Sum { parts } => {
                let inner: Vec<String> = parts.iter().map(|p| p.label()).collect();
                format!("sum({})", inner.join("+"))
            }
        }
    }

    pub fn needs_elliptic_profile(&self) -> bool {
        match self {
            Datum::Giant { .. } => true,
            Datum::Sum { parts } => parts.iter().any(|p| p.needs_elliptic_profile()),
            _ => false,
        }
    }

    pub fn sample(&self, basis: &Arc<EigenBasis>) -> Result<Field> {
        let domain = basis.domain().clone();
        let dim = domain.dimension();
        match self {
            Datum::Zero => Ok(Field::zero(basis.clone())),
            Datum::Phi1 { amplitude } => {
                let grid = basis.phi1_grid().mapv(|v| amplitude * v);
                Field::from_grid(basis.clone(), grid)
            }
            Datum::Modes { components } => {
                let mut coeffs = Array1::zeros(basis.len());
                for &(rank, amp) in components {
                    if rank == 0 || rank > basis.len() {
                        return Err(Error::InvalidConfig(format!(
                            "mode rank {rank} outside 1..={}",
                            basis.len()
                        )));
                    }
                    coeffs[rank - 1] += amp;
                }
                let mut f = Field::from_coeffs(basis.clone(), coeffs)?;
                f.sync()?;
                Ok(f)
            }
            Datum::Bump { center, width, height } => {
                if center.len() != dim {
                    return Err(Error::InvalidConfig("bump center dimension mismatch".into()));
                }
                if !(*width > 0.0) {
                    return Err(Error::InvalidConfig("bump width must be positive".into()));
                }
                let mut c = [0.0; 2];
                c[..dim].copy_from_slice(center);
                let grid: Array1<f64> =
                    domain.nodes().map(|p| smooth_bump(p, c, *width, *height, dim)).collect();
                Field::from_grid(basis.clone(), grid)
            }
            Datum::Hole { height, margin, width } => {
                // One bump per boundary face, centered `margin` inside.
                let mut centers: Vec<Coord> = Vec::new();
                match dim {
                    1 => {
                        let l = domain.side(0);
                        centers.push([*margin, 0.0]);
                        centers.push([l - margin, 0.0]);
                    }
                    _ => {
                        let (l1, l2) = (domain.side(0), domain.side(1));
                        centers.push([*margin, l2 / 2.0]);
                        centers.push([l1 - margin, l2 / 2.0]);
                        centers.push([l1 / 2.0, *margin]);
                        centers.push([l1 / 2.0, l2 - margin]);
                    }
                }
                let grid: Array1<f64> = domain
                    .nodes()
                    .map(|p| centers.iter().map(|&c| smooth_bump(p, c, *width, *height, dim)).sum())
                    .collect();
                Field::from_grid(basis.clone(), grid)
            }
            Datum::Indicator { from, to, height } => {
                if from.len() != dim || to.len() != dim {
                    return Err(Error::InvalidConfig("indicator box dimension mismatch".into()));
                }
                let ramp = 2.0 * (0..dim).map(|a| domain.spacing(a)).fold(0.0f64, f64::max);
                let grid: Array1<f64> = domain
                    .nodes()
                    .map(|p| {
                        let mut v = *height;
                        for a in 0..dim {
                            let d_in = (p[a] - from[a]).min(to[a] - p[a]);
                            let factor = if d_in >= 0.0 {
                                1.0
                            } else if d_in > -ramp {
                                (std::f64::consts::FRAC_PI_2 * (-d_in) / ramp).cos().powi(2)
                            } else {
                                0.0
                            };
                            v *= factor;
                        }
                        v
                    })
                    .collect();
                Field::from_grid(basis.clone(), grid)
            }
            Datum::Giant { .. } => Err(Error::MissingInput(
                "giant datum needs the elliptic profile; materialize it via the run orchestration".into(),
            )),
            Datum::Sum { parts } => {
                if parts.is_empty() {
                    return Err(Error::InvalidConfig("sum datum needs at least one part".into()));
                }
                let mut acc = Array1::zeros(domain.node_count());
                for part in parts {
                    let mut f = part.sample(basis)?;
                    acc += f.grid_values()?;
                }
                Field::from_grid(basis.clone(), acc)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;

    fn basis() -> Arc<EigenBasis> {
        EigenBasis::build(DomainSpec::unit_interval(64).unwrap(), 16).unwrap()
    }

    #[test]
    fn bump_is_compact_and_nonnegative() {
        let b = basis();
        let d = Datum::Bump { center: vec![0.5], width: 0.2, height: 1.0 };
        let mut f = d.sample(&b).unwrap();
        let grid = f.grid_values().unwrap();
        assert!(grid.iter().all(|&v| v >= 0.0));
        assert!(grid[0] == 0.0 && grid[63] == 0.0);
        let peak = grid.iter().cloned().fold(0.0f64, f64::max);
        assert!((peak - 1.0).abs() < 0.01);
    }

    #[test]
    fn hole_vanishes_in_the_middle() {
        let b = basis();
        let d = Datum::Hole { height: 1.0, margin: 0.15, width: 0.1 };
        let mut f = d.sample(&b).unwrap();
        let grid = f.grid_values().unwrap();
        let mid = grid[31];
        assert_eq!(mid, 0.0);
        assert!(grid.iter().cloned().fold(0.0f64, f64::max) > 0.5);
    }

    #[test]
    fn modes_rank_validation() {
        let b = basis();
        assert!(Datum::Modes { components: vec![(0, 1.0)] }.sample(&b).is_err());
        assert!(Datum::Modes { components: vec![(17, 1.0)] }.sample(&b).is_err());
        let f = Datum::Modes { components: vec![(1, 1.0), (3, 0.5)] }.sample(&b).unwrap();
        let c = f.coeffs_ref();
        assert_eq!(c[0], 1.0);
        assert_eq!(c[2], 0.5);
    }

    #[test]
    fn indicator_ramps_inside_box() {
        let b = basis();
        let d = Datum::Indicator { from: vec![0.3], to: vec![0.6], height: 2.0 };
        let mut f = d.sample(&b).unwrap();
        let grid = f.grid_values().unwrap().clone();
        let domain = b.domain().clone();
        for (i, p) in domain.nodes().enumerate() {
            if p[0] > 0.31 && p[0] < 0.59 {
                assert_eq!(grid[i], 2.0);
            }
            if p[0] < 0.25 || p[0] > 0.65 {
                assert_eq!(grid[i], 0.0);
            }
        }
    }

    #[test]
    fn giant_defers_to_orchestration() {
        let b = basis();
        assert!(matches!(Datum::Giant { t0: 1.0 }.sample(&b), Err(Error::MissingInput(_))));
    }

    #[test]
    fn serde_round_trip() {
        let d = Datum::Bump { center: vec![0.4], width: 0.1, height: 2.0 };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Datum>(&s).unwrap(), d);
        // Unknown keys rejected.
        let bad = r#"{"name":"bump","center":[0.4],"width":0.1,"height":2.0,"extra":1}"#;
        assert!(serde_json::from_str::<Datum>(bad).is_err());
    }
}

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::operator::FractionalOperator;
use crate::solver::Trajectory;

/// Configuration of the sublinear elliptic fixed point for `A(V^m) = lambda V`.
#[derive(Debug, Clone)]
pub struct EllipticConfig {
    pub lambda: f64,
    pub m: f64,
    pub max_iterations: usize,
    /// Sup-norm tolerance on successive iterates.
    pub tolerance: f64,
    /// Relaxation weight in (0, 1]; halved automatically when the residual
    /// grows, floored at 1/16.
    pub relaxation: f64,
}

impl EllipticConfig {
    pub fn new(lambda: f64, m: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda = {lambda} must be positive")));
        }
        if !(m > 1.0) {
            return Err(Error::InvalidConfig(format!("m = {m} must exceed 1")));
        }
        Ok(Self { lambda, m, max_iterations: 400, tolerance: 1e-12, relaxation: 1.0 })
    }
}

#[derive(Debug)]
pub struct EllipticSolution {
    /// Nonnegative profile V, synchronized.
    pub profile: Field,
    /// Final `||A(V^m) - lambda V||` in the phi1-weighted L1 norm.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    /// Set when the residual decreased non-monotonically by more than 10%
    /// after the initial transient.
    pub nonmonotone_warning: bool,
}

/// The separation-of-variables coefficient: `U(t) = V t^(-1/(m-1))` solves
/// the evolution exactly when V solves the elliptic problem at this lambda.
pub fn giant_lambda(m: f64) -> f64 {
    1.0 / (m - 1.0)
}

/// Solves `A(V^m) = lambda V` by the sublinear fixed point
/// `V <- (lambda A^-1 V)^(1/m)` with relaxation blending in V-space.
/// Negative parts of `A^-1 V` are clipped; they vanish in exact arithmetic
/// since the inverse preserves positivity.
pub fn solve_elliptic(
    cfg: &EllipticConfig,
    op: &FractionalOperator,
    seed: Option<Field>,
) -> Result<EllipticSolution> {
    let basis = op.basis().clone();
    let mut v: Array1<f64> = match seed {
        Some(mut f) => {
            if !std::sync::Arc::ptr_eq(f.basis(), &basis) {
                return Err(Error::BasisMismatch);
            }
            f.sync()?;
            f.grid_ref().clone()
        }
        // Default seed phi1^(1/m) already has the expected boundary profile.
        None => basis.phi1_grid().mapv(|p| p.max(0.0).powf(1.0 / cfg.m)),
    };
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate("all-zero elliptic seed; supply a positive seed".into()));
    }

    let residual_of = |v: &Array1<f64>| -> Result<f64> {
        let vm = v.mapv(|x| x.max(0.0).powf(cfg.m));
        let avm = basis.inverse(&op.scale_coeffs(&basis.forward(&vm)?, 1.0))?;
        let r = &avm - &(v * cfg.lambda);
        Ok(basis.integrate_weighted(&r.mapv(f64::abs)))
    };

    let mut theta = cfg.relaxation;
    let mut history = Vec::new();
    let mut warned = false;
    let mut iterations = 0;
    let mut converged = false;
    let mut prev_res = f64::INFINITY;
    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let inv = basis.inverse(&op.scale_coeffs(&basis.forward(&v)?, -1.0))?;
        let candidate = inv.mapv(|w| (cfg.lambda * w).max(0.0).powf(1.0 / cfg.m));
        let next = (1.0 - theta) * &v + theta * &candidate;
        let update = (&next - &v).iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        v = next;
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::Degenerate("elliptic iteration collapsed to zero".into()));
        }
        let res = residual_of(&v)?;
        history.push(res);
        if it > 3 && res > 1.1 * prev_res && res > 10.0 * cfg.tolerance {
            warned = true;
            theta = (theta / 2.0).max(1.0 / 16.0);
        }
        prev_res = res;
        if update < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let residual = *history.last().unwrap();
    if !converged {
        return Err(Error::InnerNonConvergence { iterations, last_update: residual });
    }
    let mut profile = Field::from_grid(basis, v)?;
    profile.sync()?;
    Ok(EllipticSolution { profile, residual, residual_history: history, iterations, nonmonotone_warning: warned })
}

/// The separated profile at elapsed time `t` with offset `h`:
/// `V (t + h)^(-1/(m-1))`. Requires `t + h > 0`.
pub fn giant_field(v: &Field, m: f64, t: f64, h: f64) -> Result<Field> {
    if t + h <= 0.0 {
        return Err(Error::InvalidConfig(format!("t + h = {} must be positive", t + h)));
    }
    Ok(v.scaled((t + h).powf(-1.0 / (m - 1.0))))
}

/// Closed-form trajectory of the separated solution at the given times.
pub fn giant_trajectory(v: &Field, m: f64, h: f64, times: &[f64]) -> Result<Trajectory> {
    let states = times.iter().map(|&t| giant_field(v, m, t, h)).collect::<Result<Vec<_>>>()?;
    Trajectory::from_states(v.basis().clone(), times.to_vec(), states, m)
}

/// Two-sided boundary-profile report for an elliptic solution:
/// `h0 |V|_w phi1 <= V^m <= h1 phi1` on the interior grid with `h0 = c0
/// lambda` (kernel-fit lower constant) and `h1` fitted as the largest ratio.
#[derive(Debug, Clone)]
pub struct SandwichOutcome {
    pub h0: f64,
    pub h1_fitted: f64,
    /// Weighted norm of the profile; the effective lower profile coefficient
    /// is `h0 * weighted_norm`.
    pub weighted_norm: f64,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    /// sup and inf of the ratio field `V^m / phi1`.
    pub ratio_sup: f64,
    pub ratio_inf: f64,
    pub pass: bool,
}

pub fn elliptic_sandwich(
    v: &mut Field,
    lambda: f64,
    m: f64,
    c0: f64,
    tolerance: f64,
) -> Result<SandwichOutcome> {
    v.sync()?;
    let basis = v.basis().clone();
    if v.sup_norm() == 0.0 {
        return Err(Error::Degenerate("sandwich report refuses zero profiles".into()));
    }
    let grid = v.grid_ref();
    let weighted_norm = basis.integrate_weighted(&grid.mapv(f64::abs));
    let h0 = c0 * lambda;

    let mut ratio_sup = 0.0f64;
    let mut ratio_inf = f64::INFINITY;
    for i in 0..grid.len() {
        let ratio = grid[i].max(0.0).powf(m) / basis.phi1_grid()[i];
        ratio_sup = ratio_sup.max(ratio);
        ratio_inf = ratio_inf.min(ratio);
    }
    let h1 = ratio_sup;

    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;
    for i in 0..grid.len() {
        let phi1 = basis.phi1_grid()[i];
        let vm = grid[i].max(0.0).powf(m);
        let lower_rhs = vm;
        let lower_lhs = h0 * weighted_norm * phi1;
        worst_lower = worst_lower.min((lower_rhs - lower_lhs) / lower_rhs.abs().max(1e-300));
        let upper_rhs = h1 * phi1;
        worst_upper = worst_upper.min((upper_rhs - vm) / upper_rhs.abs().max(1e-300));
    }
    let pass = worst_lower >= -tolerance && worst_upper >= -tolerance;
    Ok(SandwichOutcome {
        h0,
        h1_fitted: h1,
        weighted_norm,
        worst_lower_margin: worst_lower,
        worst_upper_margin: worst_upper,
        ratio_sup,
        ratio_inf,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::EigenBasis;
    use crate::domain::DomainSpec;
    use crate::green::GreenEvaluator;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn operator(n: usize, modes: usize, s: f64) -> FractionalOperator {
        let basis = EigenBasis::build(DomainSpec::unit_interval(n).unwrap(), modes).unwrap();
        FractionalOperator::new(basis, s).unwrap()
    }

    #[test]
    fn homogeneity_in_lambda() {
        let op = operator(64, 64, 1.0);
        let m = 2.0;
        let sol1 = solve_elliptic(&EllipticConfig::new(1.0, m).unwrap(), &op, None).unwrap();
        let sol2 =
            solve_elliptic(&EllipticConfig::new(2.0f64.powf(m - 1.0), m).unwrap(), &op, None).unwrap();
        let g1 = sol1.profile.grid_ref();
        let g2 = sol2.profile.grid_ref();
        for i in 0..g1.len() {
            assert_relative_eq!(g2[i] / g1[i], 2.0, max_relative = 1e-7);
        }
    }

    #[test]
    fn residual_small_and_positive_profile() {
        let op = operator(128, 128, 1.0);
        let sol = solve_elliptic(&EllipticConfig::new(1.0, 2.0).unwrap(), &op, None).unwrap();
        assert!(sol.residual <= 1e-8, "residual {}", sol.residual);
        assert!(sol.profile.grid_ref().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn two_seed_agreement() {
        let op = operator(64, 64, 0.5);
        let basis = op.basis().clone();
        let cfg = EllipticConfig::new(1.0, 2.0).unwrap();
        let a = solve_elliptic(&cfg, &op, None).unwrap();
        let bump: Array1<f64> = basis
            .domain()
            .nodes()
            .map(|p| {
                let r = (p[0] - 0.5).abs() / 0.4;
                if r < 1.0 {
                    0.7 * (0.5 * PI * r).cos().powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        let b = solve_elliptic(&cfg, &op, Some(Field::from_grid(basis, bump).unwrap())).unwrap();
        let ga = a.profile.grid_ref();
        let gb = b.profile.grid_ref();
        let err = (0..ga.len()).map(|i| (ga[i] - gb[i]).abs()).fold(0.0f64, f64::max);
        assert!(err < 1e-6, "seeds disagree by {err}");
    }

    #[test]
    fn zero_seed_rejected() {
        let op = operator(32, 32, 0.5);
        let zero = Field::zero(op.basis().clone());
        let cfg = EllipticConfig::new(1.0, 2.0).unwrap();
        assert!(matches!(solve_elliptic(&cfg, &op, Some(zero)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn giant_time_scaling() {
        let op = operator(48, 48, 0.5);
        let m = 2.0;
        let sol = solve_elliptic(&EllipticConfig::new(giant_lambda(m), m).unwrap(), &op, None).unwrap();
        let u1 = giant_field(&sol.profile, m, 1.0, 0.0).unwrap();
        let u2 = giant_field(&sol.profile, m, 2.0, 0.0).unwrap();
        let g1 = u1.grid_ref();
        let g2 = u2.grid_ref();
        for i in 0..g1.len() {
            assert_relative_eq!(g2[i] / g1[i], 0.5, max_relative = 1e-12);
        }
        assert!(giant_field(&sol.profile, m, -2.0, 1.0).is_err());
    }

    #[test]
    fn giant_sup_decays_monotonically() {
        let op = operator(48, 48, 0.5);
        let m = 2.0;
        let sol = solve_elliptic(&EllipticConfig::new(giant_lambda(m), m).unwrap(), &op, None).unwrap();
        let times: Vec<f64> = (1..=8).map(|k| k as f64 * 0.5).collect();
        let traj = giant_trajectory(&sol.profile, m, 0.0, &times).unwrap();
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].sup_norm < w[0].sup_norm);
        }
    }

    #[test]
    fn giant_satisfies_evolution_residual() {
        // Central difference in t plus the spectral operator on the profile.
        let op = operator(96, 96, 0.5);
        let m = 2.0;
        let sol = solve_elliptic(&EllipticConfig::new(giant_lambda(m), m).unwrap(), &op, None).unwrap();
        let basis = op.basis().clone();
        let (t, dt) = (1.0, 1e-4);
        let up = giant_field(&sol.profile, m, t + dt, 0.0).unwrap();
        let dn = giant_field(&sol.profile, m, t - dt, 0.0).unwrap();
        let mid = giant_field(&sol.profile, m, t, 0.0).unwrap();
        let du: Array1<f64> = (up.grid_ref() - dn.grid_ref()) / (2.0 * dt);
        let am = basis
            .inverse(&op.scale_coeffs(&basis.forward(&mid.grid_ref().mapv(|v| v.powf(m))).unwrap(), 1.0))
            .unwrap();
        let res = (&du + &am).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(res < 1e-6, "evolution residual {res}");
    }

    #[test]
    fn pointwise_identity_through_kernel() {
        let op = operator(64, 64, 0.5);
        let lambda = 1.0;
        let m = 2.0;
        let sol = solve_elliptic(&EllipticConfig::new(lambda, m).unwrap(), &op, None).unwrap();
        let green = GreenEvaluator::new(op.clone(), 0.0);
        let mut v = sol.profile.clone();
        v.sync().unwrap();
        let basis = op.basis().clone();
        for idx in [5usize, 20, 40, 60] {
            let x0 = basis.domain().node(idx);
            let lhs = v.grid_ref()[idx].powf(m);
            let rhs = lambda * green.pairing(&mut v, x0).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn sandwich_refuses_zero_and_passes_on_profile() {
        let op = operator(64, 64, 1.0);
        let basis = op.basis().clone();
        let mut zero = Field::zero(basis);
        assert!(matches!(elliptic_sandwich(&mut zero, 1.0, 2.0, 0.1, 1e-3), Err(Error::Degenerate(_))));

        let sol = solve_elliptic(&EllipticConfig::new(1.0, 2.0).unwrap(), &op, None).unwrap();
        let green = GreenEvaluator::new(op, 0.0);
        let fit = green.fit_envelopes_grid().unwrap();
        let mut v = sol.profile.clone();
        let out = elliptic_sandwich(&mut v, 1.0, 2.0, fit.c0, 1e-3).unwrap();
        assert!(out.pass, "lower {}, upper {}", out.worst_lower_margin, out.worst_upper_margin);
        assert!(out.ratio_inf > 0.0 && out.ratio_sup.is_finite());
        // Effective lower profile coefficient cannot exceed the upper one.
        assert!(out.h0 * out.weighted_norm <= out.h1_fitted);
    }

    #[test]
    fn residual_history_mostly_decreasing() {
        let op = operator(64, 64, 0.75);
        let sol = solve_elliptic(&EllipticConfig::new(1.0, 3.0).unwrap(), &op, None).unwrap();
        let h = &sol.residual_history;
        // After the transient the history should trend downward.
        assert!(h.last().unwrap() < &h[2]);
        let _ = Arc::strong_count(op.basis());
    }
}

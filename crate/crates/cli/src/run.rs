use std::sync::Arc;

use fpme_core::basis::EigenBasis;
use fpme_core::constants::{evaluate_formulas, ConstantInputs, ConstantSet};
use fpme_core::elliptic::{giant_field, giant_lambda, giant_trajectory, solve_elliptic, EllipticConfig};
use fpme_core::green::{EnvelopeConstants, GreenEvaluator};
use fpme_core::solver::{PmeSolver, SolverConfig, Trajectory};
use fpme_core::verify::{self, CheckParams, CheckReport, SamplePlan};
use fpme_core::{Datum, Error, Field, FractionalOperator, Result};

use crate::config::{CheckSpec, LinearPath, RunConfig};

/// Operator stack shared by every command.
pub struct Prepared {
    pub basis: Arc<EigenBasis>,
    pub op: FractionalOperator,
    pub green: GreenEvaluator,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let domain = cfg.domain.build()?;
    let basis = EigenBasis::build(domain, cfg.physics.modes)?;
    let op = FractionalOperator::new(basis.clone(), cfg.physics.s)?;
    let green = GreenEvaluator::new(op.clone(), cfg.green.epsilon);
    Ok(Prepared { basis, op, green })
}

pub fn solver_config(cfg: &RunConfig) -> Result<SolverConfig> {
    let mut sc = SolverConfig::new(cfg.physics.m)?;
    sc.dt = cfg.time.dt.policy();
    sc.inner.tolerance = cfg.solver.inner_tolerance;
    sc.inner.max_iterations = cfg.solver.max_inner_iterations;
    sc.clip_tolerance = cfg.solver.clip_tolerance;
    sc.lipschitz_margin = cfg.solver.lipschitz_margin;
    sc.max_clipped_fraction = cfg.solver.max_clipped_fraction;
    sc.linear_stepping = cfg.solver.linear_stepping.to_core();
    Ok(sc)
}

/// Everything a verification run produces.
pub struct RunOutput {
    pub config: RunConfig,
    pub trajectory: Trajectory,
    pub constants: Option<ConstantSet>,
    pub kernel_fit: Option<EnvelopeConstants>,
    pub giant_profile: Option<Field>,
    pub u0_weighted_mass: f64,
    pub checks: Vec<CheckReport>,
    pub notes: Vec<String>,
}

/// Frozen empirical constants carried into the profile checks. Fitted on the
/// separated extremal profile (which dominates every solution from the same
/// operator) plus the run ensemble, then inflated by a small discretization
/// allowance.
pub struct FrozenFits {
    pub k2: f64,
    pub k2_bar: f64,
    pub k4_backward: f64,
}

pub fn materialize_datum(
    cfg: &RunConfig,
    prepared: &Prepared,
    giant_profile: Option<&Field>,
) -> Result<Field> {
    match &cfg.datum {
        Datum::Giant { t0 } => {
            let v = giant_profile.ok_or_else(|| {
                Error::MissingInput("giant datum requires the elliptic profile".into())
            })?;
            giant_field(v, cfg.physics.m, *t0, 0.0)
        }
        other => other.sample(&prepared.basis),
    }
}

fn check_params(cfg: &RunConfig) -> CheckParams {
    CheckParams {
        dimension: cfg.domain.dimension,
        m: cfg.physics.m,
        s: cfg.physics.s,
        datum: cfg.datum.label(),
    }
}

/// Full verification pipeline: materialize the datum, integrate, measure the
/// kernel constants, evaluate the formula constants, freeze the empirical
/// profile constants and run the configured checks.
pub fn execute(cfg: &RunConfig, seed: u64, tolerance_scale: f64) -> Result<RunOutput> {
    let prepared = prepare(cfg)?;
    let mut notes = Vec::new();

    let n = prepared.basis.domain().nodes_per_side();
    let max_idx = prepared.basis.max_index();
    if max_idx[0].max(max_idx[1]) * 4 > n {
        notes.push(format!(
            "dealiasing margin below 4x: {n} nodes per side for max mode index {}",
            max_idx[0].max(max_idx[1])
        ));
    }

    // The separated profile doubles as the giant datum and as the training
    // reference for the frozen constants.
    let m = cfg.physics.m;
    let giant_profile = if m > 1.0 {
        let ecfg = EllipticConfig {
            lambda: giant_lambda(m),
            m,
            max_iterations: cfg.elliptic.max_iterations,
            tolerance: cfg.elliptic.tolerance,
            relaxation: cfg.elliptic.relaxation,
        };
        let sol = solve_elliptic(&ecfg, &prepared.op, None)?;
        notes.push(format!(
            "elliptic profile: residual {:.3e} after {} iterations",
            sol.residual, sol.iterations
        ));
        Some(sol.profile)
    } else {
        None
    };

    let mut u0 = materialize_datum(cfg, &prepared, giant_profile.as_ref())?;
    u0.sync()?;
    let u0_weighted_mass = prepared.basis.integrate_weighted(u0.grid_ref());

    let sc = solver_config(cfg)?;
    let solver = PmeSolver::new(prepared.op.clone(), sc)?;
    let trajectory = if m == 1.0 && cfg.solver.linear_path == LinearPath::Exact {
        solver.solve_linear_exact(u0, &cfg.time.output_times)?
    } else {
        solver.solve(u0, &cfg.time.output_times)?
    };
    if trajectory.total_rejections > 0 {
        notes.push(format!("{} step rejections (dt halvings)", trajectory.total_rejections));
    }

    // Constant measurement chain, only meaningful in the nonlinear regime.
    let (constants, kernel_fit, frozen) = if m > 1.0 {
        let fit = prepared.green.fit_envelopes_grid()?;
        let c2 = prepared.green.sup_q_integral(1.0)?;
        let v = giant_profile.as_ref().expect("profile exists for m > 1");
        let boot = prepared.green.bootstrap_upper(&mut v.clone(), giant_lambda(m), m, 1e-6)?;
        if boot.hypothesis_violations > 0 {
            notes.push(format!(
                "bootstrap hypothesis violated at {} of {} nodes (worst {:.3e})",
                boot.hypothesis_violations, boot.sampled, boot.worst_hypothesis_margin
            ));
        }
        if let Some(trace) = &boot.nu_trace {
            notes.push(format!(
                "bootstrap exponent trace: {}",
                trace.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" -> ")
            ));
        }
        let inputs = ConstantInputs {
            dimension: cfg.domain.dimension,
            m,
            s: cfg.physics.s,
            gamma: 1.0,
            mu1: prepared.op.mu(0),
            lambda1: prepared.basis.lambda(0),
            phi1_sup: prepared.basis.phi1_grid().iter().cloned().fold(0.0, f64::max),
            diameter: prepared.basis.domain().diameter(),
            c0: fit.c0,
            c1: fit.c1,
            c2,
            c5: boot.c5,
        };
        let constants = evaluate_formulas(&inputs)?;
        let frozen = freeze_profile_fits(&prepared, v, &trajectory, &constants, cfg)?;
        (Some(constants), Some(fit), Some(frozen))
    } else {
        (None, None, None)
    };

    let checks = run_checks(
        cfg,
        &prepared,
        &trajectory,
        constants.as_ref(),
        frozen.as_ref(),
        u0_weighted_mass,
        seed,
        tolerance_scale,
        &mut notes,
    )?;

    Ok(RunOutput {
        config: cfg.clone(),
        trajectory,
        constants,
        kernel_fit,
        giant_profile,
        u0_weighted_mass,
        checks,
        notes,
    })
}

fn freeze_profile_fits(
    prepared: &Prepared,
    v: &Field,
    trajectory: &Trajectory,
    constants: &ConstantSet,
    cfg: &RunConfig,
) -> Result<FrozenFits> {
    let basis = &prepared.basis;
    let m = cfg.physics.m;
    let inv_m = 1.0 / m;
    let grid = v.grid_ref();
    let mut k2 = 0.0f64;
    for (i, &vi) in grid.iter().enumerate() {
        k2 = k2.max(vi / basis.phi1_grid()[i].powf(inv_m));
    }
    // Pairing of the profile at every node in one synthesis.
    let pairings = basis.inverse(&prepared.op.scale_coeffs(v.coeffs_ref(), -1.0))?;
    let mut k2_bar = 0.0f64;
    for (i, &p) in pairings.iter().enumerate() {
        k2_bar = k2_bar.max(p / basis.phi1_grid()[i]);
    }

    let times: Vec<f64> = trajectory.times.iter().cloned().filter(|&t| t > 0.0).collect();
    let gtraj = giant_trajectory(v, m, 0.0, &times)?;
    let k4_backward = verify::fit_backward_smoothing_constant(
        &[trajectory, &gtraj],
        constants,
        m,
        cfg.physics.s,
        cfg.domain.dimension,
    )?;
    Ok(FrozenFits { k2: 1.02 * k2, k2_bar: 1.02 * k2_bar, k4_backward: 1.05 * k4_backward })
}

fn spec_tolerance(spec: &CheckSpec, default: f64, scale: f64) -> f64 {
    spec.tolerance.unwrap_or(default) * scale
}

#[allow(clippy::too_many_arguments)]
fn run_checks(
    cfg: &RunConfig,
    prepared: &Prepared,
    trajectory: &Trajectory,
    constants: Option<&ConstantSet>,
    frozen: Option<&FrozenFits>,
    u0_weighted_mass: f64,
    seed: u64,
    tolerance_scale: f64,
    notes: &mut Vec<String>,
) -> Result<Vec<CheckReport>> {
    let params = check_params(cfg);
    let mut plan = SamplePlan::new(seed);
    let mut reports = Vec::new();
    let need = |name: &str| -> Result<&ConstantSet> {
        constants.ok_or_else(|| Error::Inapplicable(format!("{name} needs the constant set (m > 1)")))
    };
    for spec in cfg.effective_checks() {
        match spec.name.as_str() {
            "absolute_bound" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                reports.push(verify::check_absolute_bound(
                    trajectory,
                    need("absolute_bound")?,
                    params.clone(),
                    tol,
                )?);
            }
            "backward_smoothing" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                let f = frozen.ok_or_else(|| {
                    Error::Inapplicable("backward_smoothing needs frozen fits (m > 1)".into())
                })?;
                reports.push(verify::check_backward_smoothing(
                    trajectory,
                    need("backward_smoothing")?,
                    f.k4_backward,
                    params.clone(),
                    tol,
                )?);
            }
            "benilan_crandall" => {
                let tol = spec_tolerance(&spec, 1e-6, tolerance_scale);
                reports.push(verify::check_benilan_crandall(trajectory, params.clone(), tol)?);
            }
            "boundary_upper" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                let f = frozen.ok_or_else(|| {
                    Error::Inapplicable("boundary_upper needs frozen fits (m > 1)".into())
                })?;
                reports.push(verify::check_boundary_upper(
                    trajectory,
                    &prepared.green,
                    f.k2,
                    f.k2_bar,
                    params.clone(),
                    tol,
                    &mut plan,
                )?);
            }
            "green_pairing_sandwich" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                reports.push(verify::check_green_pairing_sandwich(
                    trajectory,
                    &prepared.green,
                    spec.tuples.unwrap_or(50),
                    params.clone(),
                    tol,
                    &mut plan,
                )?);
            }
            "harnack" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                let min_side =
                    (0..cfg.domain.dimension).map(|a| prepared.basis.domain().side(a)).fold(f64::INFINITY, f64::min);
                let radii = spec.radii.clone().unwrap_or_else(|| vec![0.1 * min_side]);
                reports.push(verify::check_harnack(
                    trajectory,
                    &radii,
                    spec.max_ratio.unwrap_or(50.0),
                    params.clone(),
                    tol,
                    &mut plan,
                )?);
            }
            "linear_limit" => {
                let tol = spec_tolerance(&spec, 1e-9, tolerance_scale);
                let mu: Vec<f64> = (0..prepared.basis.len()).map(|k| prepared.op.mu(k)).collect();
                reports.push(verify::check_linear_limit(trajectory, &mu, params.clone(), tol)?);
            }
            "lower_bound" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                reports.push(verify::check_lower_bound(
                    trajectory,
                    need("lower_bound")?,
                    u0_weighted_mass,
                    params.clone(),
                    tol,
                )?);
            }
            "ordered_contraction" => {
                let tol = spec_tolerance(&spec, 1e-6, tolerance_scale);
                let scale = spec.pair_scale.unwrap_or(0.5);
                let lower = run_scaled_companion(cfg, prepared, scale)?;
                notes.push(format!("contraction companion datum scaled by {scale}"));
                reports.push(verify::check_ordered_contraction(
                    trajectory,
                    &lower,
                    need("ordered_contraction")?,
                    params.clone(),
                    tol,
                )?);
            }
            "smoothing" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                let cs = need("smoothing")?;
                reports.push(verify::check_smoothing(trajectory, cs, true, params.clone(), tol)?);
                reports.push(verify::check_smoothing(trajectory, cs, false, params.clone(), tol)?);
            }
            "weighted_l1" => {
                let tol = spec_tolerance(&spec, verify::POINTWISE_TOL, tolerance_scale);
                reports.push(verify::check_weighted_l1(
                    trajectory,
                    constants,
                    prepared.op.mu(0),
                    params.clone(),
                    tol,
                    1e-4,
                )?);
            }
            other => return Err(Error::InvalidConfig(format!("unknown check '{other}'"))),
        }
    }
    Ok(reports)
}

/// Companion trajectory from the same datum scaled down, for the ordered
/// contraction check.
fn run_scaled_companion(cfg: &RunConfig, prepared: &Prepared, scale: f64) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&scale) {
        return Err(Error::InvalidConfig(format!("pair_scale {scale} outside [0, 1]")));
    }
    let giant_profile = if cfg.datum.needs_elliptic_profile() {
        let m = cfg.physics.m;
        let ecfg = EllipticConfig {
            lambda: giant_lambda(m),
            m,
            max_iterations: cfg.elliptic.max_iterations,
            tolerance: cfg.elliptic.tolerance,
            relaxation: cfg.elliptic.relaxation,
        };
        Some(solve_elliptic(&ecfg, &prepared.op, None)?.profile)
    } else {
        None
    };
    let u0 = materialize_datum(cfg, prepared, giant_profile.as_ref())?;
    let mut v0 = u0.scaled(scale);
    v0.sync()?;
    let solver = PmeSolver::new(prepared.op.clone(), solver_config(cfg)?)?;
    solver.solve(v0, &cfg.time.output_times)
}

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::ConstantSet;
use crate::error::{Error, Result};
use crate::green::GreenEvaluator;
use crate::solver::Trajectory;

/// Default tolerance for pointwise profile checks, dominated by kernel
/// truncation near the boundary.
pub const POINTWISE_TOL: f64 = 1e-3;
/// Default tolerance for spectral identities.
pub const SPECTRAL_TOL: f64 = 1e-6;

/// Names of every check the suite can run, in report order.
pub const CHECK_NAMES: &[&str] = &[
    "absolute_bound",
    "backward_smoothing",
    "benilan_crandall",
    "boundary_upper",
    "green_pairing_sandwich",
    "harnack",
    "linear_limit",
    "lower_bound",
    "ordered_contraction",
    "smoothing",
    "weighted_l1",
];

#[derive(Debug, Clone, Serialize)]
pub struct CheckParams {
    pub dimension: usize,
    pub m: f64,
    pub s: f64,
    pub datum: String,
}

/// One sampled comparison; margin is `(rhs - lhs)` normalized by the RHS
/// magnitude.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleRow {
    pub t: f64,
    pub x: [f64; 2],
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Outcome of one inequality verification.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Stable identifier of the estimate the check verifies.
    pub anchor: String,
    pub params: CheckParams,
    pub samples: usize,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Set when failure is the structurally expected outcome (for instance a
    /// positivity bound applied to the zero datum).
    pub expected_fail: bool,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<SampleRow>,
}

impl CheckReport {
    pub fn new(name: &str, anchor: &str, params: CheckParams, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            params,
            samples: 0,
            worst_margin: f64::INFINITY,
            tolerance,
            pass: false,
            expected_fail: false,
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn record(&mut self, t: f64, x: [f64; 2], lhs: f64, rhs: f64) -> f64 {
        let margin = normalized_margin(lhs, rhs);
        self.samples += 1;
        self.worst_margin = self.worst_margin.min(margin);
        self.rows.push(SampleRow { t, x, lhs, rhs, margin });
        margin
    }

    /// Records a comparison normalized by an explicit scale instead of the
    /// RHS (used where both sides can vanish together).
    pub fn record_scaled(&mut self, t: f64, x: [f64; 2], lhs: f64, rhs: f64, scale: f64) -> f64 {
        let margin = (rhs - lhs) / scale.abs().max(1e-300);
        self.samples += 1;
        self.worst_margin = self.worst_margin.min(margin);
        self.rows.push(SampleRow { t, x, lhs, rhs, margin });
        margin
    }

    /// Records a sample whose margin was computed elsewhere.
    pub fn record_margin(&mut self, t: f64, x: [f64; 2], lhs: f64, rhs: f64, margin: f64) {
        self.samples += 1;
        self.worst_margin = self.worst_margin.min(margin);
        self.rows.push(SampleRow { t, x, lhs, rhs, margin });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn finish(mut self) -> Self {
        if self.samples == 0 {
            self.worst_margin = 0.0;
            self.note("no samples evaluated");
        }
        self.pass = self.worst_margin >= -self.tolerance;
        self
    }
}

fn normalized_margin(lhs: f64, rhs: f64) -> f64 {
    (rhs - lhs) / rhs.abs().max(1e-300)
}

/// Deterministic sample plan drawn from a seeded generator.
pub struct SamplePlan {
    rng: ChaCha8Rng,
}

impl SamplePlan {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn pick_nodes(&mut self, node_count: usize, how_many: usize) -> Vec<usize> {
        (0..how_many).map(|_| self.rng.gen_range(0..node_count)).collect()
    }

    /// Ordered index triples i <= j <= k into a time grid.
    pub fn pick_time_triples(&mut self, len: usize, how_many: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(how_many);
        for _ in 0..how_many {
            let mut v = [
                self.rng.gen_range(0..len),
                self.rng.gen_range(0..len),
                self.rng.gen_range(0..len),
            ];
            v.sort_unstable();
            out.push((v[0], v[1], v[2]));
        }
        out
    }
}

/// Indices of grid nodes at least `cells` spacings away from the boundary.
pub fn interior_node_indices(traj: &Trajectory, cells: usize) -> Vec<usize> {
    let domain = traj.basis().domain();
    let n = domain.nodes_per_side();
    (0..domain.node_count())
        .filter(|&i| {
            let idx = domain.node_indices(i);
            (0..domain.dimension()).all(|a| idx[a] > cells && idx[a] <= n - cells)
        })
        .collect()
}

/// Profile ratios `u(t, x) t^(1/(m-1)) / phi1(x)^(1/m)` reduced over a node
/// set: (min, max) per snapshot.
pub fn profile_ratio_series(traj: &Trajectory, m: f64, nodes: &[usize]) -> Vec<(f64, f64, f64)> {
    let basis = traj.basis();
    let alpha = 1.0 / (m - 1.0);
    let inv_m = 1.0 / m;
    traj.times
        .iter()
        .zip(&traj.snapshots)
        .map(|(&t, snap)| {
            let grid = snap.grid_ref();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in nodes {
                let r = grid[i] * t.powf(alpha) / basis.phi1_grid()[i].powf(inv_m);
                lo = lo.min(r);
                hi = hi.max(r);
            }
            (t, lo, hi)
        })
        .collect()
}

/// Absolute decay bound: `|u(t)|_inf <= K1 t^(-1/(m-1))` with the
/// formula-tagged constant; the sharpest fitted ratio is reported alongside.
pub fn check_absolute_bound(
    traj: &Trajectory,
    constants: &ConstantSet,
    params: CheckParams,
    tolerance: f64,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("no absolute bound in the linear case".into()));
    }
    let k1 = constants.get("K1")?;
    let alpha = 1.0 / (params.m - 1.0);
    let mut report = CheckReport::new("absolute_bound", "upper/absolute-decay", params, tolerance);
    let mut fitted: f64 = 0.0;
    for (i, &t) in traj.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let sup = traj.diagnostics[i].sup_norm;
        report.record(t, [0.0, 0.0], sup, k1 * t.powf(-alpha));
        fitted = fitted.max(sup * t.powf(alpha));
    }
    report.note(format!("formula K1 = {k1:.6e}, fitted ratio = {fitted:.6e}"));
    Ok(report.finish())
}

/// Boundary-profile upper bound with a frozen, training-fitted constant:
/// `u(t,x) <= K2_emp phi1(x)^(1/m) t^(-1/(m-1))`, plus the pairing variant
/// `int u G(., x0) <= K2bar_emp phi1(x0) t^(-1/(m-1))` at sampled nodes.
pub fn check_boundary_upper(
    traj: &Trajectory,
    green: &GreenEvaluator,
    k2_emp: f64,
    k2_bar_emp: f64,
    params: CheckParams,
    tolerance: f64,
    plan: &mut SamplePlan,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("boundary profile bound requires m > 1".into()));
    }
    let basis = traj.basis().clone();
    let alpha = 1.0 / (params.m - 1.0);
    let inv_m = 1.0 / params.m;
    let mut report = CheckReport::new("boundary_upper", "upper/boundary-profile", params, tolerance);
    for (i, &t) in traj.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let grid = traj.snapshots[i].grid_ref();
        let decay = t.powf(-alpha);
        let mut worst = (f64::INFINITY, 0usize);
        for (j, &u) in grid.iter().enumerate() {
            let rhs = k2_emp * basis.phi1_grid()[j].powf(inv_m) * decay;
            let margin = normalized_margin(u, rhs);
            if margin < worst.0 {
                worst = (margin, j);
            }
        }
        // Record only the worst node per time to keep the CSV bounded.
        let j = worst.1;
        report.record(
            t,
            basis.domain().node(j),
            grid[j],
            k2_emp * basis.phi1_grid()[j].powf(inv_m) * decay,
        );
    }
    let pointwise_worst = report.worst_margin;

    let x0s = plan.pick_nodes(basis.domain().node_count(), 12);
    for (i, &t) in traj.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let coeffs = traj.snapshots[i].coeffs_ref();
        for &j in &x0s {
            let x0 = basis.domain().node(j);
            let lhs = green.pairing_coeffs(coeffs, x0);
            let rhs = k2_bar_emp * basis.phi1_grid()[j] * t.powf(-alpha);
            report.record(t, x0, lhs, rhs);
        }
    }
    report.note(format!(
        "pointwise worst = {pointwise_worst:.3e}, pairing worst = {:.3e} (frozen K2 = {k2_emp:.4e}, K2_bar = {k2_bar_emp:.4e})",
        report.worst_margin
    ));
    Ok(report.finish())
}

/// Smoothing effect at the same time: plain (`K3`, exponent `N theta1`, L1
/// norm) or weighted (`K4`, exponent `(N+1) theta11`, phi1-weighted norm),
/// with the weaker datum-norm variant recorded as well.
pub fn check_smoothing(
    traj: &Trajectory,
    constants: &ConstantSet,
    weighted: bool,
    params: CheckParams,
    tolerance: f64,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("smoothing exponents require m > 1".into()));
    }
    let n = params.dimension as f64;
    let (name, anchor, k, expo, norm_pow) = if weighted {
        let t11 = constants.get("theta11")?;
        ("smoothing", "upper/smoothing-weighted", constants.get("K4")?, (n + 1.0) * t11, 2.0 * params.s * t11)
    } else {
        let t1 = constants.get("theta1")?;
        ("smoothing", "upper/smoothing-plain", constants.get("K3")?, n * t1, 2.0 * params.s * t1)
    };
    let mut report = CheckReport::new(name, anchor, params, tolerance);
    let datum_norm = if weighted { traj.diagnostics[0].weighted_mass } else { traj.diagnostics[0].l1_norm };
    let mut fitted: f64 = 0.0;
    for (i, &t) in traj.times.iter().enumerate() {
        if t <= 0.0 {
            continue;
        }
        let d = &traj.diagnostics[i];
        let same_norm = if weighted { d.weighted_mass } else { d.l1_norm };
        let rhs_same = k * t.powf(-expo) * same_norm.max(0.0).powf(norm_pow);
        report.record(t, [0.0, 0.0], d.sup_norm, rhs_same);
        let rhs_datum = k * t.powf(-expo) * datum_norm.max(0.0).powf(norm_pow);
        report.record(t, [1.0, 0.0], d.sup_norm, rhs_datum);
        if d.sup_norm > 0.0 && same_norm > 0.0 {
            fitted = fitted.max(t.powf(expo) * d.sup_norm / same_norm.powf(norm_pow));
        }
    }
    report.note(format!(
        "{} constant: formula = {k:.6e}, fitted = {fitted:.6e}",
        if weighted { "weighted" } else { "plain" }
    ));
    Ok(report.finish())
}

/// Sharpest constant for the backward smoothing form over an ensemble:
/// `sup t^((N+1)theta11) |u(t)|_inf / [(1 v h/t)^(2s theta11/(m-1))
/// |u(t+h)|_w^(2s theta11)]`. Distinct from the same-time fit because the
/// `1 v h/t` factor under-counts the mass growth for h < t.
pub fn fit_backward_smoothing_constant(
    ensemble: &[&Trajectory],
    constants: &ConstantSet,
    m: f64,
    s: f64,
    dimension: usize,
) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptySamples);
    }
    let t11 = constants.get("theta11")?;
    let n = dimension as f64;
    let expo = (n + 1.0) * t11;
    let pow_mass = 2.0 * s * t11;
    let pow_back = 2.0 * s * t11 / (m - 1.0);
    let mut best = 0.0f64;
    for traj in ensemble {
        for i in 0..traj.len() {
            let t = traj.times[i];
            if t <= 0.0 {
                continue;
            }
            let sup = traj.diagnostics[i].sup_norm;
            if sup == 0.0 {
                continue;
            }
            for j in i..traj.len() {
                let h = traj.times[j] - t;
                let mass = traj.diagnostics[j].weighted_mass.max(0.0);
                if mass == 0.0 {
                    continue;
                }
                let denom = (1.0f64).max(h / t).powf(pow_back) * mass.powf(pow_mass);
                best = best.max(t.powf(expo) * sup / denom);
            }
        }
    }
    Ok(best)
}

/// Backward smoothing: `|u(t)|_inf <= K4 t^(-(N+1)theta11)
/// (1 v h/t)^(2s theta11 / (m-1)) |u(t+h)|_w^(2s theta11)` over sampled
/// snapshot pairs, judged with a fitted constant (the formula value is
/// recorded in the notes).
pub fn check_backward_smoothing(
    traj: &Trajectory,
    constants: &ConstantSet,
    k4_fitted: f64,
    params: CheckParams,
    tolerance: f64,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("backward smoothing requires m > 1".into()));
    }
    let t11 = constants.get("theta11")?;
    let n = params.dimension as f64;
    let expo = (n + 1.0) * t11;
    let pow_mass = 2.0 * params.s * t11;
    let pow_back = 2.0 * params.s * t11 / (params.m - 1.0);
    let mut report =
        CheckReport::new("backward_smoothing", "upper/smoothing-backward", params, tolerance);
    for i in 0..traj.len() {
        let t = traj.times[i];
        if t <= 0.0 {
            continue;
        }
        for j in i..traj.len() {
            let h = traj.times[j] - t;
            let future_mass = traj.diagnostics[j].weighted_mass.max(0.0);
            let rhs = k4_fitted
                * t.powf(-expo)
                * (1.0f64).max(h / t).powf(pow_back)
                * future_mass.powf(pow_mass);
            report.record(t, [h, 0.0], traj.diagnostics[i].sup_norm, rhs);
        }
    }
    report.note(format!(
        "fitted K4 = {k4_fitted:.6e}, formula K4 = {:.6e}",
        constants.get("K4")?
    ));
    Ok(report.finish())
}

/// Weighted-mass estimates: monotonicity, the exact balance-law residual,
/// the Hoelder-in-time modulus with the formula constant, and half-mass
/// persistence on the prescribed window.
pub fn check_weighted_l1(
    traj: &Trajectory,
    constants: Option<&ConstantSet>,
    mu1: f64,
    params: CheckParams,
    tolerance: f64,
    balance_rate_tol: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("weighted_l1", "weighted-mass/monotone-balance", params.clone(), tolerance);
    let mass0 = traj.diagnostics[0].weighted_mass;
    // (a) monotone nonincreasing mass.
    for w in 0..traj.len() - 1 {
        let (a, b) = (traj.diagnostics[w].weighted_mass, traj.diagnostics[w + 1].weighted_mass);
        report.record_scaled(traj.times[w + 1], [0.0, 0.0], b, a, mass0.max(1e-300));
    }
    // (b) balance-law residual where the exact dissipation accumulator exists.
    if let Some(d0) = traj.diagnostics[0].cumulative_weighted_dissipation {
        let base = traj.diagnostics[0].weighted_mass + mu1 * d0;
        for (i, d) in traj.diagnostics.iter().enumerate() {
            if let Some(di) = d.cumulative_weighted_dissipation {
                let residual = (d.weighted_mass + mu1 * di - base).abs();
                let allowed = balance_rate_tol * mass0.max(1e-300) * traj.times[i].max(traj.times[0]);
                report.record_scaled(traj.times[i], [2.0, 0.0], residual, allowed, allowed.max(1e-300));
            }
        }
    } else {
        report.note("balance accumulator unavailable (closed-form trajectory)");
    }
    // (c) + (d) need the exponent theta11, so m > 1 and a constant set.
    if params.m > 1.0 {
        if let Some(cs) = constants {
            let k5 = cs.get("K5")?;
            let t11 = cs.get("theta11")?;
            let pow = 2.0 * params.s * t11;
            let mass_pow = 2.0 * params.s * (params.m - 1.0) * t11 + 1.0;
            let tau0 = 0usize;
            let mtau0 = traj.diagnostics[tau0].weighted_mass.max(0.0);
            let mut fitted_k5 = 0.0f64;
            for i in tau0..traj.len() {
                for j in tau0..traj.len() {
                    let (ti, tj) = (traj.times[i], traj.times[j]);
                    if ti == tj {
                        continue;
                    }
                    let lhs = traj.diagnostics[i].weighted_mass;
                    let rhs = traj.diagnostics[j].weighted_mass
                        + k5 * (tj - ti).abs().powf(pow) * mtau0.powf(mass_pow);
                    report.record_scaled(ti, [3.0, tj], lhs, rhs, mass0.max(1e-300));
                    let gain = lhs - traj.diagnostics[j].weighted_mass;
                    if gain > 0.0 && mtau0 > 0.0 {
                        fitted_k5 =
                            fitted_k5.max(gain / ((tj - ti).abs().powf(pow) * mtau0.powf(mass_pow)));
                    }
                }
            }
            report.note(format!("formula K5 = {k5:.6e}, fitted K5 = {fitted_k5:.6e}"));
            // Half-mass persistence on the window set by the formula constant.
            if mtau0 > 0.0 {
                let window = cs.half_mass_window(mtau0)?;
                let mut covered = 0usize;
                for (i, &t) in traj.times.iter().enumerate() {
                    if t <= traj.times[tau0] + window {
                        covered += 1;
                        report.record_scaled(
                            t,
                            [4.0, 0.0],
                            mtau0 / 2.0,
                            traj.diagnostics[i].weighted_mass,
                            mass0.max(1e-300),
                        );
                    }
                }
                report.note(format!("half-mass window length {window:.3e} covers {covered} output times"));
            }
        }
    }
    Ok(report.finish())
}

/// Two-sided pairing sandwich over sampled `(t0 <= t1 <= t, x0)` tuples:
/// the pairing drop `int u(t0) G - int u(t1) G` is bounded below by
/// `(t0/t1)^(m/(m-1)) (t1-t0) u^m(t0,x0)` and above by
/// `(m-1) t^(m/(m-1)) t0^(-1/(m-1)) u^m(t,x0)`. Margins are normalized by
/// the pairing magnitude at t0.
pub fn check_green_pairing_sandwich(
    traj: &Trajectory,
    green: &GreenEvaluator,
    tuples: usize,
    params: CheckParams,
    tolerance: f64,
    plan: &mut SamplePlan,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("the pairing sandwich requires m > 1".into()));
    }
    let m = params.m;
    let basis = traj.basis().clone();
    let mut report =
        CheckReport::new("green_pairing_sandwich", "pointwise/pairing-sandwich", params, tolerance);
    let triples = plan.pick_time_triples(traj.len(), tuples);
    let nodes = plan.pick_nodes(basis.domain().node_count(), tuples);
    for ((i0, i1, i2), node) in triples.into_iter().zip(nodes) {
        let (t0, t1, t) = (traj.times[i0], traj.times[i1], traj.times[i2]);
        if t0 <= 0.0 || t0 == t1 {
            continue;
        }
        let x0 = basis.domain().node(node);
        let p0 = green.pairing_coeffs(traj.snapshots[i0].coeffs_ref(), x0);
        let p1 = green.pairing_coeffs(traj.snapshots[i1].coeffs_ref(), x0);
        let drop = p0 - p1;
        let u_t0 = traj.snapshots[i0].grid_ref()[node].max(0.0);
        let u_t = traj.snapshots[i2].grid_ref()[node].max(0.0);
        let lower = (t0 / t1).powf(m / (m - 1.0)) * (t1 - t0) * u_t0.powf(m);
        let upper = (m - 1.0) * t.powf(m / (m - 1.0)) * t0.powf(-1.0 / (m - 1.0)) * u_t.powf(m);
        let scale = p0.abs().max(1e-300);
        report.record_scaled(t0, x0, lower, drop, scale);
        report.record_scaled(t0, x0, drop, upper, scale);
    }
    Ok(report.finish())
}

/// Outcome of the waiting-time fit shared by the lower-bound and Harnack
/// checks.
#[derive(Debug, Clone, Copy)]
pub struct WaitingTimeFit {
    pub l1_fitted: f64,
    pub t_star_emp: Option<f64>,
    pub t_star_index: Option<usize>,
}

/// Fits the empirical lower-profile constant at the final time (with a 5%
/// safety factor) and finds the earliest output time from which the profile
/// bound holds onward.
pub fn fit_waiting_time(traj: &Trajectory, m: f64, nodes: &[usize]) -> WaitingTimeFit {
    let series = profile_ratio_series(traj, m, nodes);
    let final_lo = series.last().map(|&(_, lo, _)| lo).unwrap_or(0.0);
    if !(final_lo > 0.0) {
        return WaitingTimeFit { l1_fitted: 0.0, t_star_emp: None, t_star_index: None };
    }
    let l1 = 0.95 * final_lo;
    let mut idx = None;
    for i in (0..series.len()).rev() {
        if series[i].1 >= l1 {
            idx = Some(i);
        } else {
            break;
        }
    }
    WaitingTimeFit {
        l1_fitted: l1,
        t_star_emp: idx.map(|i| traj.times[i]),
        t_star_index: idx,
    }
}

/// Lower positivity bound after the waiting time: fits `L1` and `t*` from
/// the run, asserts `u >= L1 phi1^(1/m) t^(-1/(m-1))` from `t*` on, and
/// reports the ratio against the formula waiting time. Zero data are
/// reported as an expected failure.
pub fn check_lower_bound(
    traj: &Trajectory,
    constants: &ConstantSet,
    u0_mass: f64,
    params: CheckParams,
    tolerance: f64,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("lower profile bound requires m > 1".into()));
    }
    let mut report = CheckReport::new("lower_bound", "lower/positivity-profile", params.clone(), tolerance);
    let nodes = interior_node_indices(traj, 2);
    let boundary_nodes: Vec<usize> = {
        let all: std::collections::HashSet<usize> = nodes.iter().cloned().collect();
        (0..traj.basis().domain().node_count()).filter(|i| !all.contains(i)).collect()
    };
    let fit = fit_waiting_time(traj, params.m, &nodes);
    match (fit.t_star_emp, fit.t_star_index) {
        (Some(ts), Some(ti)) => {
            let alpha = 1.0 / (params.m - 1.0);
            let inv_m = 1.0 / params.m;
            let basis = traj.basis().clone();
            for i in ti..traj.len() {
                let t = traj.times[i];
                let grid = traj.snapshots[i].grid_ref();
                // Worst interior node at this time.
                let mut worst = (f64::INFINITY, nodes[0]);
                for &j in &nodes {
                    let rhs = grid[j];
                    let lhs = fit.l1_fitted * basis.phi1_grid()[j].powf(inv_m) * t.powf(-alpha);
                    let mg = normalized_margin(lhs, rhs);
                    if mg < worst.0 {
                        worst = (mg, j);
                    }
                }
                let j = worst.1;
                let lhs = fit.l1_fitted * basis.phi1_grid()[j].powf(inv_m) * t.powf(-alpha);
                report.record(t, basis.domain().node(j), lhs, grid[j]);
            }
            if let Ok(ts_formula) = constants.t_star(u0_mass) {
                report.note(format!(
                    "t*_emp = {ts:.4e}, t*_formula = {ts_formula:.4e}, ratio = {:.4e}",
                    ts / ts_formula
                ));
            }
            report.note(format!("fitted L1 = {:.6e}, formula L1 = {:.6e}", fit.l1_fitted, constants.get("L1")?));
            // Early-time profile ratios are data, not assertions.
            let early = profile_ratio_series(traj, params.m, &nodes)
                .into_iter()
                .take_while(|&(t, _, _)| t < ts)
                .map(|(t, lo, _)| format!("({t:.3e}, {lo:.3e})"))
                .collect::<Vec<_>>();
            if !early.is_empty() {
                report.note(format!("pre-waiting profile minima: {}", early.join(" ")));
            }
            if !boundary_nodes.is_empty() {
                let b = profile_ratio_series(traj, params.m, &boundary_nodes);
                let worst = b.iter().skip(ti).map(|&(_, lo, _)| lo).fold(f64::INFINITY, f64::min);
                report.note(format!("boundary-adjacent (2 cells) worst profile ratio: {worst:.3e}"));
            }
            // Derived alternative form reported, not separately checked.
            report.note(format!(
                "alternative two-term form: u >= L1 phi1^(1/m) t^(-1/(m-1)) [1 - (t*/t)^(1/(m-1))] with L1 = {:.4e}, t* = {ts:.4e}",
                fit.l1_fitted
            ));
        }
        _ => {
            report.record(traj.times[0], [0.0, 0.0], 1.0, 0.0);
            report.expected_fail = traj.diagnostics.iter().all(|d| d.sup_norm == 0.0);
            report.note(if report.expected_fail {
                "zero datum: positivity bound vacuously fails (expected)"
            } else {
                "no waiting time found within the run horizon"
            });
        }
    }
    Ok(report.finish())
}

/// Global and local Harnack inequalities after the fitted waiting time. The
/// global two-sided profile bound is fitted; the check asserts the fitted
/// ratio stays below `max_ratio` and that ball-local oscillation obeys the
/// transferred bound `(H1/H0) Hphi^(1/m)`.
pub fn check_harnack(
    traj: &Trajectory,
    radii: &[f64],
    max_ratio: f64,
    params: CheckParams,
    tolerance: f64,
    plan: &mut SamplePlan,
) -> Result<CheckReport> {
    if params.m <= 1.0 {
        return Err(Error::Inapplicable("elliptic-type Harnack requires m > 1".into()));
    }
    let mut report = CheckReport::new("harnack", "harnack/global-and-local", params.clone(), tolerance);
    let nodes = interior_node_indices(traj, 2);
    let fit = fit_waiting_time(traj, params.m, &nodes);
    let Some(ti) = fit.t_star_index else {
        report.record(traj.times[0], [0.0, 0.0], 1.0, 0.0);
        report.expected_fail = traj.diagnostics.iter().all(|d| d.sup_norm == 0.0);
        report.note("no waiting time found; Harnack window empty");
        return Ok(report.finish());
    };
    let series = profile_ratio_series(traj, params.m, &nodes);
    let h0 = series[ti..].iter().map(|&(_, lo, _)| lo).fold(f64::INFINITY, f64::min);
    let h1 = series[ti..].iter().map(|&(_, _, hi)| hi).fold(0.0f64, f64::max);
    report.note(format!("fitted H0 = {h0:.6e}, H1 = {h1:.6e}, ratio = {:.4e}", h1 / h0));
    report.record(traj.times[ti], [0.0, 0.0], h1 / h0, max_ratio);

    // Ball-local oscillation bound, transferred through the phi1 Harnack
    // ratio on the same ball. Balls too close to the boundary are excluded.
    let basis = traj.basis().clone();
    let domain = basis.domain().clone();
    let m = params.m;
    let centers = plan.pick_nodes(domain.node_count(), 8);
    let mut excluded = 0usize;
    for &r in radii {
        for &c in &centers {
            let x0 = domain.node(c);
            if domain.dist_to_boundary(x0) <= 2.0 * r {
                excluded += 1;
                continue;
            }
            let ball: Vec<usize> = (0..domain.node_count())
                .filter(|&i| domain.distance(domain.node(i), x0) <= r)
                .collect();
            if ball.is_empty() {
                continue;
            }
            let phi_ratio = {
                let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                for &i in &ball {
                    lo = lo.min(basis.phi1_grid()[i]);
                    hi = hi.max(basis.phi1_grid()[i]);
                }
                hi / lo
            };
            for i in ti..traj.len() {
                let grid = traj.snapshots[i].grid_ref();
                let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                for &j in &ball {
                    lo = lo.min(grid[j]);
                    hi = hi.max(grid[j]);
                }
                if lo <= 0.0 {
                    continue;
                }
                let rhs = (h1 / h0) * phi_ratio.powf(1.0 / m) * lo;
                report.record(traj.times[i], x0, hi, rhs);
            }
        }
    }
    if excluded > 0 {
        report.note(format!("{excluded} ball placements touching the boundary excluded"));
    }
    Ok(report.finish())
}

/// Ordered almost-contraction in the weighted norm: the gap
/// `int (u - v) phi1` never grows, and its backward modulus obeys the K7
/// bound with both the measured-input formula constant and a fitted one.
pub fn check_ordered_contraction(
    upper: &Trajectory,
    lower: &Trajectory,
    constants: &ConstantSet,
    params: CheckParams,
    tolerance: f64,
) -> Result<CheckReport> {
    if upper.times != lower.times {
        return Err(Error::InvalidConfig("trajectories must share output times".into()));
    }
    // Ordered data: u0 >= v0 nodewise up to solver tolerance.
    {
        let a = upper.snapshots[0].grid_ref();
        let b = lower.snapshots[0].grid_ref();
        let worst = (0..a.len()).map(|i| a[i] - b[i]).fold(f64::INFINITY, f64::min);
        if worst < -1e-9 {
            return Err(Error::InvalidConfig(format!("data not ordered: min(u0 - v0) = {worst:e}")));
        }
    }
    let mut report =
        CheckReport::new("ordered_contraction", "contraction/ordered-weighted", params.clone(), tolerance);
    let gap: Vec<f64> = (0..upper.len())
        .map(|i| upper.diagnostics[i].weighted_mass - lower.diagnostics[i].weighted_mass)
        .collect();
    let scale = gap[0].abs().max(1e-300);
    for w in 0..gap.len() - 1 {
        report.record_scaled(upper.times[w + 1], [0.0, 0.0], gap[w + 1], gap[w], scale);
    }
    if params.m > 1.0 {
        let u_norm = upper.diagnostics[0].weighted_mass;
        let v_norm = lower.diagnostics[0].weighted_mass;
        let k7 = constants.k7(u_norm, v_norm)?;
        let t11 = constants.get("theta11")?;
        let pow = 2.0 * params.s * t11;
        let mut fitted = 0.0f64;
        for i in 0..gap.len() {
            for j in 0..gap.len() {
                if i == j {
                    continue;
                }
                let dt = (upper.times[j] - upper.times[i]).abs().powf(pow);
                let rhs = gap[j] + k7 * dt * gap[0];
                report.record_scaled(upper.times[i], [5.0, upper.times[j]], gap[i], rhs, scale);
                let growth = gap[i] - gap[j];
                if growth > 0.0 && gap[0] > 0.0 {
                    fitted = fitted.max(growth / (dt * gap[0]));
                }
            }
        }
        report.note(format!("formula K7 = {k7:.6e}, fitted K7 = {fitted:.6e}"));
    }
    Ok(report.finish())
}

/// Long-time behaviour of the linear flow: beyond three spectral-gap times
/// the renormalized solution collapses onto phi1 with a residual controlled
/// by the remaining-mode amplitude, and the residual decay rate matches the
/// spectral gap.
pub fn check_linear_limit(
    traj: &Trajectory,
    mu: &[f64],
    params: CheckParams,
    tolerance_floor: f64,
) -> Result<CheckReport> {
    if params.m != 1.0 {
        return Err(Error::Inapplicable("the spectral collapse check requires m = 1".into()));
    }
    if mu.len() < 2 {
        return Err(Error::InvalidConfig("need at least two modes".into()));
    }
    let mut report =
        CheckReport::new("linear_limit", "linear/phi1-collapse", params, tolerance_floor);
    let basis = traj.basis().clone();
    let (mu1, gap) = (mu[0], mu[1] - mu[0]);
    let t_first = traj.times[0];
    let c_first = traj.snapshots[0].coeffs_ref();
    // Reconstruct the initial coefficients through the exact linear flow.
    let c0: Vec<f64> =
        c_first.iter().enumerate().map(|(k, &c)| c * (mu[k] * t_first).exp()).collect();
    if c0[0].abs() < 1e-12 {
        report.expected_fail = true;
        report.note("degenerate normalization: the datum has no phi1 component");
        report.record(t_first, [0.0, 0.0], 1.0, 0.0);
        return Ok(report.finish());
    }
    // Amplitude of everything above mode 1, measured in the sup norm through
    // the crude bound |phi_k|_inf <= prod sqrt(2/L).
    let sup_phi: f64 = (0..basis.domain().dimension())
        .map(|a| (2.0 / basis.domain().side(a)).sqrt())
        .product();
    let tail_amp: f64 = c0.iter().skip(1).map(|c| c.abs() * sup_phi).sum::<f64>() / c0[0].abs();

    let phi1 = basis.phi1_grid().clone();
    let mut residuals = Vec::new();
    for (i, &t) in traj.times.iter().enumerate() {
        let grid = traj.snapshots[i].grid_ref();
        let res = (0..grid.len())
            .map(|j| (grid[j] * (mu1 * t).exp() / c0[0] - phi1[j]).abs())
            .fold(0.0f64, f64::max);
        residuals.push((t, res));
        if t >= 3.0 / gap {
            let allowed = (2.0 * tail_amp * (-gap * t).exp()).max(tolerance_floor);
            report.record_scaled(t, [0.0, 0.0], res, allowed, allowed);
        }
    }
    if report.samples == 0 {
        report.note(format!("no output times beyond three gap times (3/gap = {:.3e})", 3.0 / gap));
    }
    // Fit the decay rate of the residual where it is clean.
    let usable: Vec<(f64, f64)> =
        residuals.iter().filter(|&&(_, r)| r > 1e-13).map(|&(t, r)| (t, r.ln())).collect();
    if usable.len() >= 3 {
        let slope = least_squares_slope(&usable);
        report.note(format!("residual decay rate = {:.6e}, spectral gap = {gap:.6e}", -slope));
    }
    Ok(report.finish())
}

/// Ordinary least-squares slope of y over x.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Bundles the Benilan-Crandall monotonicity margin as a report.
pub fn check_benilan_crandall(
    traj: &Trajectory,
    params: CheckParams,
    tolerance: f64,
) -> Result<CheckReport> {
    let worst = crate::solver::benilan_crandall_margin(traj, params.m)?;
    let sup0 = traj.diagnostics.iter().map(|d| d.sup_norm).fold(0.0f64, f64::max);
    let mut report =
        CheckReport::new("benilan_crandall", "monotonicity/time-rescaled", params, tolerance);
    report.record_scaled(traj.times[0], [0.0, 0.0], -worst, 0.0, sup0.max(1e-300));
    report.note(format!("worst raw margin = {worst:.6e}, sup scale = {sup0:.6e}"));
    Ok(report.finish())
}

/// Margin sign convention sanity: every report's pass flag must agree with
/// its recorded worst margin.
pub fn report_consistent(report: &CheckReport) -> bool {
    report.pass == (report.worst_margin >= -report.tolerance)
}

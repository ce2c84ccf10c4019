use std::sync::Arc;

use ndarray::Array1;

use crate::basis::EigenBasis;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::operator::FractionalOperator;

/// Adaptive step-size policy: `dt` grows by `safety * growth` after an
/// accepted step, is halved on rejection, and is truncated to land exactly on
/// output times.
#[derive(Debug, Clone)]
pub struct DtPolicy {
    pub initial: f64,
    pub safety: f64,
    pub growth: f64,
    pub max: f64,
    pub min: f64,
}

impl DtPolicy {
    pub fn fixed(dt: f64) -> Self {
        Self { initial: dt, safety: 1.0, growth: 1.0, max: dt, min: dt * 1e-8 }
    }
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { initial: 1e-4, safety: 0.9, growth: 1.3, max: 1e-2, min: 1e-14 }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointCfg {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FixedPointCfg {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-11 }
    }
}

/// Stepping used when m = 1: the diagonal system is integrated either by the
/// exact per-step propagator or by the backward-Euler resolvent the nonlinear
/// scheme degenerates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearStepping {
    Exponential,
    BackwardEuler,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub m: f64,
    pub dt: DtPolicy,
    pub inner: FixedPointCfg,
    /// Allowed dip below zero before a field stops counting as nonnegative.
    pub clip_tolerance: f64,
    /// Pre-step cap `dt <= margin / (m |u|^(m-1) mu_max)` keeping the inner
    /// fixed point contractive.
    pub lipschitz_margin: f64,
    /// The run aborts when the mass clipped within any single step exceeds
    /// this fraction of the initial mass; silent sign errors would
    /// invalidate every check. (A per-state bound: a cumulative one would
    /// scale with the step count rather than with the fields.)
    pub max_clipped_fraction: f64,
    pub linear_stepping: LinearStepping,
}

impl SolverConfig {
    pub fn new(m: f64) -> Result<Self> {
        if !(m >= 1.0) {
            return Err(Error::InvalidConfig(format!("m = {m} must be at least 1")));
        }
        Ok(Self {
            m,
            dt: DtPolicy::default(),
            inner: FixedPointCfg::default(),
            clip_tolerance: 1e-9,
            lipschitz_margin: 0.4,
            max_clipped_fraction: 1e-4,
            linear_stepping: LinearStepping::Exponential,
        })
    }
}

/// Per-snapshot scalar diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Diagnostics {
    pub time: f64,
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub min_value: f64,
    /// `int u phi1 dx`.
    pub weighted_mass: f64,
    /// `int u^m phi1 dx` (negative part clipped before the power).
    pub weighted_power_mass: f64,
    pub cumulative_clipped_mass: f64,
    /// Exact accumulation of `int_0^t int u^m phi1 dx dtau` along the steps;
    /// absent on trajectories assembled from closed forms.
    pub cumulative_weighted_dissipation: Option<f64>,
}

/// Time-stamped snapshots with diagnostics. Snapshots are stored fully
/// synchronized (grid and coefficients both valid).
#[derive(Debug, Clone)]
pub struct Trajectory {
    basis: Arc<EigenBasis>,
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    pub diagnostics: Vec<Diagnostics>,
    pub total_steps: usize,
    pub total_rejections: usize,
}

impl Trajectory {
    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Assembles a trajectory from externally computed states (closed-form
    /// solutions, scaled copies); diagnostics are recomputed, the exact
    /// dissipation accumulator is unavailable.
    pub fn from_states(basis: Arc<EigenBasis>, times: Vec<f64>, mut states: Vec<Field>, m: f64) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidConfig("times and snapshots must align".into()));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("times must be strictly increasing".into()));
        }
        let mut diagnostics = Vec::with_capacity(times.len());
        for (t, f) in times.iter().zip(states.iter_mut()) {
            f.sync()?;
            diagnostics.push(snapshot_diagnostics(&basis, f, *t, m, 0.0, None));
        }
        Ok(Self { basis, times, snapshots: states, diagnostics, total_steps: 0, total_rejections: 0 })
    }
}

fn snapshot_diagnostics(
    basis: &EigenBasis,
    field: &Field,
    time: f64,
    m: f64,
    cumulative_clipped: f64,
    cumulative_dissipation: Option<f64>,
) -> Diagnostics {
    let grid = field.grid_ref();
    let vol = basis.domain().cell_volume();
    let power: Array1<f64> = grid.mapv(|v| v.max(0.0).powf(m));
    Diagnostics {
        time,
        sup_norm: field.sup_norm(),
        l1_norm: vol * grid.iter().map(|v| v.abs()).sum::<f64>(),
        min_value: field.min_grid_value(),
        weighted_mass: basis.integrate_weighted(grid),
        weighted_power_mass: basis.integrate_weighted(&power),
        cumulative_clipped_mass: cumulative_clipped,
        cumulative_weighted_dissipation: cumulative_dissipation,
    }
}

/// Outcome of one accepted step.
#[derive(Debug)]
pub struct StepResult {
    pub field: Field,
    pub inner_iterations: usize,
    /// Mass removed by clipping negatives in the accepted iterate.
    pub clipped_mass: f64,
    /// `int w^m phi1 dx` of the implicit iterate, the exact integrand of the
    /// weighted balance law over this step.
    pub weighted_power_mass: f64,
}

/// Semi-implicit spectral integrator for `u_t + A(u^m) = 0`: backward Euler
/// in the operator with the nonlinearity resolved by an inner fixed point,
/// `c' = c - dt mu fwd(w^m)`, `w <- inv(c')`, started from the current state.
#[derive(Debug)]
pub struct PmeSolver {
    op: FractionalOperator,
    cfg: SolverConfig,
}

impl PmeSolver {
    pub fn new(op: FractionalOperator, cfg: SolverConfig) -> Result<Self> {
        if !op.basis().transform_exact() {
            let n = op.basis().domain().nodes_per_side();
            return Err(Error::AliasedMode { index: op.basis().max_index(), limit: n });
        }
        Ok(Self { op, cfg })
    }

    pub fn operator(&self) -> &FractionalOperator {
        &self.op
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn basis(&self) -> &Arc<EigenBasis> {
        self.op.basis()
    }

    /// One step of size `dt` from a synchronized nonnegative state.
    pub fn step(&self, u: &mut Field, dt: f64) -> Result<StepResult> {
        if !Arc::ptr_eq(u.basis(), self.basis()) {
            return Err(Error::BasisMismatch);
        }
        u.sync()?;
        if self.cfg.m == 1.0 {
            return self.step_linear(u, dt);
        }
        let basis = self.basis().clone();
        let vol = basis.domain().cell_volume();
        let m = self.cfg.m;
        let coeffs = u.coeffs_ref().clone();
        let mut w = u.grid_ref().clone();

        let mut clipped = 0.0;
        let mut power_mass = 0.0;
        let mut converged = false;
        let mut iterations = 0;
        let mut last_update = f64::INFINITY;
        for it in 0..self.cfg.inner.max_iterations {
            iterations = it + 1;
            let mut clip_acc = 0.0;
            let wm: Array1<f64> = w.mapv(|v| {
                if v < 0.0 {
                    clip_acc -= v;
                    0.0
                } else {
                    v.powf(m)
                }
            });
            let mut new_coeffs = basis.forward(&wm)?;
            for (k, c) in new_coeffs.iter_mut().enumerate() {
                *c = coeffs[k] - dt * self.op.mu(k) * *c;
            }
            let new_grid = basis.inverse(&new_coeffs)?;
            last_update = (&new_grid - &w).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            w = new_grid;
            if last_update < self.cfg.inner.tolerance {
                clipped = clip_acc * vol;
                power_mass = basis.integrate_weighted(&wm);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InnerNonConvergence { iterations, last_update });
        }
        let mut field = Field::from_grid(basis, w)?;
        field.sync()?;
        Ok(StepResult { field, inner_iterations: iterations, clipped_mass: clipped, weighted_power_mass: power_mass })
    }

    fn step_linear(&self, u: &mut Field, dt: f64) -> Result<StepResult> {
        let basis = self.basis().clone();
        let coeffs = u.coefficients()?;
        let new: Array1<f64> = match self.cfg.linear_stepping {
            LinearStepping::Exponential => coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * (-self.op.mu(k) * dt).exp())
                .collect(),
            LinearStepping::BackwardEuler => {
                coeffs.iter().enumerate().map(|(k, &c)| c / (1.0 + self.op.mu(k) * dt)).collect()
            }
        };
        // Exact weighted balance integrand over the step: for the propagator
        // the time integral of c1 is closed form, for backward Euler the
        // implicit value carries the balance.
        let power_mass = match self.cfg.linear_stepping {
            LinearStepping::Exponential => {
                let mu1 = self.op.mu(0);
                coeffs[0] * (1.0 - (-mu1 * dt).exp()) / (mu1 * dt)
            }
            LinearStepping::BackwardEuler => new[0],
        };
        let mut field = Field::from_coeffs(basis, new)?;
        field.sync()?;
        Ok(StepResult { field, inner_iterations: 0, clipped_mass: 0.0, weighted_power_mass: power_mass })
    }

    fn dt_cap(&self, sup: f64) -> f64 {
        if self.cfg.m == 1.0 {
            return f64::INFINITY;
        }
        let scale = self.cfg.m * sup.max(1e-300).powf(self.cfg.m - 1.0) * self.op.mu_max();
        self.cfg.lipschitz_margin / scale
    }

    /// Integrates from `u0` and records a snapshot at each output time,
    /// hitting the times exactly by truncating the step.
    pub fn solve(&self, mut u0: Field, output_times: &[f64]) -> Result<Trajectory> {
        if output_times.is_empty() {
            return Err(Error::InvalidConfig("no output times".into()));
        }
        if !output_times.windows(2).all(|w| w[0] < w[1]) || output_times[0] < 0.0 {
            return Err(Error::InvalidConfig("output times must be nonnegative and strictly increasing".into()));
        }
        if !Arc::ptr_eq(u0.basis(), self.basis()) {
            return Err(Error::BasisMismatch);
        }
        u0.sync()?;
        if !u0.is_nonnegative(self.cfg.clip_tolerance) {
            return Err(Error::InvalidConfig(format!(
                "initial datum dips to {:e}, below -clip_tolerance",
                u0.min_grid_value()
            )));
        }
        let basis = self.basis().clone();
        let initial_mass = basis.integrate(&u0.grid_ref().mapv(f64::abs));
        let clip_budget = self.cfg.max_clipped_fraction * initial_mass;

        let mut times = Vec::with_capacity(output_times.len());
        let mut snapshots = Vec::with_capacity(output_times.len());
        let mut diagnostics = Vec::with_capacity(output_times.len());

        let mut state = u0;
        let mut t = 0.0f64;
        let mut dt_nominal = self.cfg.dt.initial.min(self.cfg.dt.max);
        let mut cum_clipped = 0.0;
        let mut cum_dissipation = 0.0;
        let mut total_steps = 0usize;
        let mut total_rejections = 0usize;

        for &target in output_times {
            while t < target {
                let remaining = target - t;
                let dt_try = dt_nominal.min(self.dt_cap(state.sup_norm()));
                let truncated = dt_try >= remaining;
                let dt_used = if truncated { remaining } else { dt_try };
                match self.step(&mut state, dt_used) {
                    Ok(res) => {
                        t = if truncated { target } else { t + dt_used };
                        state = res.field;
                        cum_clipped += res.clipped_mass;
                        cum_dissipation += dt_used * res.weighted_power_mass;
                        total_steps += 1;
                        if res.clipped_mass > clip_budget && clip_budget > 0.0 {
                            return Err(Error::ExcessiveClipping {
                                clipped: res.clipped_mass,
                                limit: self.cfg.max_clipped_fraction,
                            });
                        }
                        if !truncated {
                            dt_nominal =
                                (self.cfg.dt.safety * self.cfg.dt.growth * dt_used).min(self.cfg.dt.max);
                        }
                    }
                    Err(Error::InnerNonConvergence { .. }) => {
                        total_rejections += 1;
                        dt_nominal = dt_used / 2.0;
                        if dt_nominal < self.cfg.dt.min {
                            return Err(Error::DtUnderflow { dt: dt_nominal, min: self.cfg.dt.min });
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            state.sync()?;
            times.push(target);
            snapshots.push(state.clone());
            diagnostics.push(snapshot_diagnostics(
                &basis,
                &state,
                target,
                self.cfg.m,
                cum_clipped,
                Some(cum_dissipation),
            ));
        }

        Ok(Trajectory { basis, times, snapshots, diagnostics, total_steps, total_rejections })
    }

    /// Exact propagator path for m = 1: evaluates `c_k e^(-mu_k t)` directly
    /// at each output time. The oracle against which stepping is checked.
    pub fn solve_linear_exact(&self, mut u0: Field, output_times: &[f64]) -> Result<Trajectory> {
        if self.cfg.m != 1.0 {
            return Err(Error::Inapplicable("exact propagator requires m = 1".into()));
        }
        if output_times.is_empty() {
            return Err(Error::InvalidConfig("no output times".into()));
        }
        u0.sync()?;
        let basis = self.basis().clone();
        let c0 = u0.coeffs_ref().clone();
        let mu1 = self.op.mu(0);
        let mut times = Vec::new();
        let mut snapshots = Vec::new();
        let mut diagnostics = Vec::new();
        for &t in output_times {
            let coeffs: Array1<f64> =
                c0.iter().enumerate().map(|(k, &c)| c * (-self.op.mu(k) * t).exp()).collect();
            let mut f = Field::from_coeffs(basis.clone(), coeffs)?;
            f.sync()?;
            // Closed-form dissipation integral of the first coefficient.
            let dissipation = c0[0] * (1.0 - (-mu1 * t).exp()) / mu1;
            diagnostics.push(snapshot_diagnostics(&basis, &f, t, 1.0, 0.0, Some(dissipation)));
            times.push(t);
            snapshots.push(f);
        }
        Ok(Trajectory { basis, times, snapshots, diagnostics, total_steps: 0, total_rejections: 0 })
    }
}

/// Worst discrete monotonicity margin of `t^(1/(m-1)) u(t, x)` over
/// consecutive snapshots and grid nodes. Nonnegative (up to tolerance) for
/// solutions of the nonlinear problem.
pub fn benilan_crandall_margin(traj: &Trajectory, m: f64) -> Result<f64> {
    if m <= 1.0 {
        return Err(Error::Inapplicable("the monotonicity estimate requires m > 1".into()));
    }
    if traj.len() < 2 {
        return Err(Error::Inapplicable("need at least two snapshots".into()));
    }
    let alpha = 1.0 / (m - 1.0);
    let mut worst = f64::INFINITY;
    for w in 0..traj.len() - 1 {
        let (t1, t2) = (traj.times[w], traj.times[w + 1]);
        let (a, b) = (t1.powf(alpha), t2.powf(alpha));
        let g1 = traj.snapshots[w].grid_ref();
        let g2 = traj.snapshots[w + 1].grid_ref();
        for i in 0..g1.len() {
            worst = worst.min(g2[i] * b - g1[i] * a);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup(n: usize, modes: usize, s: f64) -> (Arc<EigenBasis>, FractionalOperator) {
        let basis = EigenBasis::build(DomainSpec::unit_interval(n).unwrap(), modes).unwrap();
        let op = FractionalOperator::new(basis.clone(), s).unwrap();
        (basis, op)
    }

    fn mollifier(x: f64, center: f64, width: f64, height: f64) -> f64 {
        let r2 = ((x - center) / width).powi(2);
        if r2 < 1.0 {
            height * (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }

    #[test]
    fn linear_step_backward_euler_formula() {
        let (basis, op) = setup(64, 8, 1.0);
        let mut cfg = SolverConfig::new(1.0).unwrap();
        cfg.linear_stepping = LinearStepping::BackwardEuler;
        let solver = PmeSolver::new(op.clone(), cfg).unwrap();
        let mut u = Field::eigenfunction(basis.clone(), 2);
        let dt = 1e-2;
        let mut out = solver.step(&mut u, dt).unwrap().field;
        let c = out.coefficients().unwrap();
        assert_relative_eq!(c[2], 1.0 / (1.0 + dt * op.mu(2)), max_relative = 1e-14);
    }

    #[test]
    fn zero_datum_stays_zero() {
        let (basis, op) = setup(32, 8, 0.5);
        let solver = PmeSolver::new(op, SolverConfig::new(2.0).unwrap()).unwrap();
        let traj = solver.solve(Field::zero(basis), &[0.1, 0.2]).unwrap();
        for d in &traj.diagnostics {
            assert_eq!(d.sup_norm, 0.0);
            assert_eq!(d.weighted_mass, 0.0);
        }
    }

    #[test]
    fn linear_single_mode_decay() {
        let (basis, op) = setup(64, 8, 1.0);
        let solver = PmeSolver::new(op.clone(), SolverConfig::new(1.0).unwrap()).unwrap();
        let u0 = Field::eigenfunction(basis.clone(), 0);
        let traj = solver.solve(u0, &[0.05, 0.1, 0.5, 1.0]).unwrap();
        for (i, &t) in traj.times.iter().enumerate() {
            let expect = (-op.mu(0) * t).exp();
            let got = traj.snapshots[i].coeffs_ref()[0];
            assert!((got - expect).abs() < 1e-8, "t = {t}: {got} vs {expect}");
        }
    }

    #[test]
    fn exact_propagator_matches_formula() {
        let (basis, op) = setup(64, 8, 0.5);
        let solver = PmeSolver::new(op.clone(), SolverConfig::new(1.0).unwrap()).unwrap();
        let mut c = Array1::zeros(8);
        c[0] = 1.0;
        c[2] = 0.5;
        let u0 = Field::from_coeffs(basis.clone(), c).unwrap();
        let traj = solver.solve_linear_exact(u0, &[0.3]).unwrap();
        let got = traj.snapshots[0].coeffs_ref();
        assert_relative_eq!(got[0], (-op.mu(0) * 0.3).exp(), max_relative = 1e-14);
        assert_relative_eq!(got[2], 0.5 * (-op.mu(2) * 0.3).exp(), max_relative = 1e-14);
    }

    #[test]
    fn weighted_mass_monotone_and_balance_exact() {
        let (basis, op) = setup(256, 64, 0.5);
        let solver = PmeSolver::new(op.clone(), SolverConfig::new(2.0).unwrap()).unwrap();
        let bump: Array1<f64> =
            basis.domain().nodes().map(|p| mollifier(p[0], 0.5, 0.3, 1.0)).collect();
        let u0 = Field::from_grid(basis.clone(), bump).unwrap();
        let traj = solver.solve(u0, &[0.02, 0.05, 0.1, 0.3]).unwrap();
        let mass0 = traj.diagnostics[0].weighted_mass
            + op.mu(0) * traj.diagnostics[0].cumulative_weighted_dissipation.unwrap();
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].weighted_mass <= w[0].weighted_mass + 1e-12);
        }
        for d in &traj.diagnostics {
            let balance = d.weighted_mass + op.mu(0) * d.cumulative_weighted_dissipation.unwrap();
            assert!((balance - mass0).abs() < 1e-10 * mass0.max(1.0), "balance drift {balance} vs {mass0}");
        }
    }

    #[test]
    fn comparison_preserved_for_ordered_data() {
        let (basis, op) = setup(256, 64, 0.5);
        let solver = PmeSolver::new(op, SolverConfig::new(2.0).unwrap()).unwrap();
        let bump = |scale: f64| -> Field {
            let g: Array1<f64> =
                basis.domain().nodes().map(|p| mollifier(p[0], 0.45, 0.3, scale)).collect();
            Field::from_grid(basis.clone(), g).unwrap()
        };
        let times = [0.05, 0.2];
        let hi = solver.solve(bump(1.0), &times).unwrap();
        let lo = solver.solve(bump(0.5), &times).unwrap();
        for i in 0..times.len() {
            let gh = hi.snapshots[i].grid_ref();
            let gl = lo.snapshots[i].grid_ref();
            for j in 0..gh.len() {
                assert!(gh[j] >= gl[j] - 1e-6, "order violated at node {j}");
            }
        }
    }

    #[test]
    fn scale_invariance_exact_correspondence() {
        let (basis, op) = setup(48, 12, 0.5);
        let lambda = 2.0f64;
        let m = 2.0;
        let mut cfg1 = SolverConfig::new(m).unwrap();
        cfg1.dt = DtPolicy::fixed(1e-3);
        let mut cfg2 = cfg1.clone();
        cfg2.dt = DtPolicy::fixed(1e-3 / lambda);
        cfg2.inner.tolerance = cfg1.inner.tolerance * lambda.powf(1.0 / (m - 1.0));
        let solver1 = PmeSolver::new(op.clone(), cfg1).unwrap();
        let solver2 = PmeSolver::new(op.clone(), cfg2).unwrap();

        let g: Array1<f64> = basis
            .domain()
            .nodes()
            .map(|p| (PI * p[0]).sin().powi(2))
            .collect();
        let u0 = Field::from_grid(basis.clone(), g.clone()).unwrap();
        let scaled0 =
            Field::from_grid(basis.clone(), g.mapv(|v| v * lambda.powf(1.0 / (m - 1.0)))).unwrap();

        let t_out = [0.05, 0.1];
        let scaled_times: Vec<f64> = t_out.iter().map(|t| t * lambda).collect();
        let traj1 = solver1.solve(u0, &scaled_times).unwrap();
        let traj2 = solver2.solve(scaled0, &t_out).unwrap();
        for i in 0..t_out.len() {
            let a = traj1.snapshots[i].grid_ref();
            let b = traj2.snapshots[i].grid_ref();
            let factor = lambda.powf(1.0 / (m - 1.0));
            for j in 0..a.len() {
                assert!((a[j] * factor - b[j]).abs() < 1e-6, "node {j}: {} vs {}", a[j] * factor, b[j]);
            }
        }
    }

    #[test]
    fn benilan_crandall_requires_m_above_one_and_two_snapshots() {
        let (basis, op) = setup(32, 8, 0.5);
        let solver = PmeSolver::new(op, SolverConfig::new(2.0).unwrap()).unwrap();
        let traj = solver.solve(Field::zero(basis.clone()), &[0.1]).unwrap();
        assert!(matches!(benilan_crandall_margin(&traj, 2.0), Err(Error::Inapplicable(_))));
        let traj2 = Trajectory::from_states(
            basis.clone(),
            vec![0.1, 0.2],
            vec![Field::zero(basis.clone()), Field::zero(basis)],
            2.0,
        )
        .unwrap();
        assert!(matches!(benilan_crandall_margin(&traj2, 1.0), Err(Error::Inapplicable(_))));
        assert_eq!(benilan_crandall_margin(&traj2, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn pairing_of_phi1_is_inverse_eigenvalue() {
        use crate::green::GreenEvaluator;
        let (basis, op) = setup(48, 16, 0.5);
        let green = GreenEvaluator::new(op.clone(), 0.0);
        let mut phi1 = Field::eigenfunction(basis.clone(), 0);
        let x0 = [0.3, 0.0];
        let got = green.pairing(&mut phi1, x0).unwrap();
        assert_relative_eq!(got, basis.eval_mode(0, x0) / op.mu(0), max_relative = 1e-12);
        let mut zero = Field::zero(basis);
        assert_eq!(green.pairing(&mut zero, x0).unwrap(), 0.0);
    }

    #[test]
    fn pairing_nonincreasing_along_trajectory() {
        use crate::green::GreenEvaluator;
        let (basis, op) = setup(48, 12, 0.5);
        let solver = PmeSolver::new(op.clone(), SolverConfig::new(2.0).unwrap()).unwrap();
        let green = GreenEvaluator::new(op, 0.0);
        let g: Array1<f64> = basis.domain().nodes().map(|p| (PI * p[0]).sin().powi(4)).collect();
        let u0 = Field::from_grid(basis.clone(), g).unwrap();
        let mut traj = solver.solve(u0, &[0.02, 0.06, 0.15, 0.4]).unwrap();
        for x0 in [[0.25, 0.0], [0.5, 0.0], [0.77, 0.0]] {
            let mut prev = f64::INFINITY;
            for snap in traj.snapshots.iter_mut() {
                let p = green.pairing(snap, x0).unwrap();
                assert!(p <= prev + 1e-10, "pairing grew: {p} after {prev}");
                prev = p;
            }
        }
    }

    #[test]
    fn rejects_negative_datum() {
        let (basis, op) = setup(32, 8, 0.5);
        let solver = PmeSolver::new(op, SolverConfig::new(2.0).unwrap()).unwrap();
        let g = Array1::from_elem(32, -0.5);
        let u0 = Field::from_grid(basis, g).unwrap();
        assert!(solver.solve(u0, &[0.1]).is_err());
    }
}

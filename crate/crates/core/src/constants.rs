use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::Trajectory;

/// Whether a constant came out of an explicit formula or was fitted from
/// simulation output. The two are never mixed inside one inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Formula,
    Fitted,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantValue {
    pub value: f64,
    pub tag: Provenance,
    pub inputs: BTreeMap<String, f64>,
}

/// Raw inputs feeding the constant formulas. The kernel constants c0, c1 and
/// the integral bound c2 are numerically measured; c5 comes from the
/// integral bootstrap fit. Everywhere the formulas involve the first
/// eigenvalue of the generator, the operator eigenvalue `mu1 = lambda1^s` is
/// used for dimensional consistency with the semigroup.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantInputs {
    pub dimension: usize,
    pub m: f64,
    pub s: f64,
    pub gamma: f64,
    pub mu1: f64,
    pub lambda1: f64,
    pub phi1_sup: f64,
    pub diameter: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c5: f64,
}

/// Scaling exponent `1 / (2s + (N + gamma)(m - 1))`.
pub fn theta(s: f64, m: f64, n: usize, gamma: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(Error::InvalidConfig(format!("theta requires m > 1, got {m}")));
    }
    if !(s > 0.0 && s <= 1.0) || gamma < 0.0 || n == 0 {
        return Err(Error::InvalidConfig(format!("theta inputs out of range: s={s}, gamma={gamma}, N={n}")));
    }
    Ok(1.0 / (2.0 * s + (n as f64 + gamma) * (m - 1.0)))
}

/// Residual of the exponent identity `1 - 2sm theta11 = (m-1)(N-2s+1) theta11`.
pub fn exponent_identity_residual(s: f64, m: f64, n: usize) -> f64 {
    let t11 = 1.0 / (2.0 * s + (n as f64 + 1.0) * (m - 1.0));
    (1.0 - 2.0 * s * m * t11 - (m - 1.0) * (n as f64 - 2.0 * s + 1.0) * t11).abs()
}

/// Surface area of the unit sphere in dimension N (1-d: two endpoints).
pub fn omega_n(n: usize) -> f64 {
    match n {
        1 => 2.0,
        _ => 2.0 * PI,
    }
}

/// Structural form of the absolute-bound constant with its explicit
/// `(diam + 1/s)^N` factor; used to exhibit the blow-up as s drops. The
/// dimensional prefactor is normalized to one.
pub fn k1_structural(m: f64, s: f64, n: usize, c1: f64, diameter: f64, phi1_sup: f64) -> f64 {
    let base = 2f64.powf(m / (m - 1.0))
        * c1
        * (diameter + 1.0 / s).powi(n as i32)
        * phi1_sup.powi(2);
    base.powf(1.0 / (m - 1.0))
}

/// Every explicit constant of the estimate suite, tagged by provenance.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantSet {
    pub inputs: ConstantInputs,
    pub values: BTreeMap<String, ConstantValue>,
}

impl ConstantSet {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.values
            .get(name)
            .map(|c| c.value)
            .ok_or_else(|| Error::MissingInput(format!("constant {name}")))
    }

    /// Waiting time `t* = L0 mass^-(m-1)` for a datum of the given weighted
    /// mass.
    pub fn t_star(&self, weighted_mass: f64) -> Result<f64> {
        if !(weighted_mass > 0.0) {
            return Err(Error::Degenerate(format!("weighted mass {weighted_mass} must be positive")));
        }
        Ok(self.get("L0")? * weighted_mass.powf(-(self.inputs.m - 1.0)))
    }

    /// Ordered-contraction modulus constant for a pair of data with the
    /// given weighted norms.
    pub fn k7(&self, u_norm: f64, v_norm: f64) -> Result<f64> {
        let m = self.inputs.m;
        let two_s_t11 = 2.0 * self.inputs.s * self.get("theta11")?;
        Ok(self.get("K7_base")? * u_norm.max(v_norm).powf(two_s_t11 * (m - 1.0)))
    }

    /// Length of the window on which at least half the weighted mass
    /// persists: `(2 K5)^(-1/(2s theta11)) mass^-(m-1)`.
    pub fn half_mass_window(&self, weighted_mass: f64) -> Result<f64> {
        if !(weighted_mass > 0.0) {
            return Err(Error::Degenerate("half-mass window needs positive mass".into()));
        }
        let e = 1.0 / (2.0 * self.inputs.s * self.get("theta11")?);
        Ok((2.0 * self.get("K5")?).powf(-e) * weighted_mass.powf(-(self.inputs.m - 1.0)))
    }
}

/// Evaluates the formula-tagged constants from the measured inputs.
pub fn evaluate_formulas(inputs: &ConstantInputs) -> Result<ConstantSet> {
    let ConstantInputs { dimension: n, m, s, gamma, mu1, phi1_sup, diameter, c0, c1, c2, c5, .. } = *inputs;
    for (name, v) in [
        ("c0", c0),
        ("c1", c1),
        ("c2", c2),
        ("c5", c5),
        ("mu1", mu1),
        ("phi1_sup", phi1_sup),
        ("diameter", diameter),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::MissingInput(format!("{name} = {v} is not a positive finite input")));
        }
    }
    let nf = n as f64;
    let theta1 = theta(s, m, n, 0.0)?;
    let theta11 = theta(s, m, n, 1.0)?;
    let theta1g = theta(s, m, n, gamma)?;
    let om = omega_n(n);
    let two_pow = 2f64.powf(m / (m - 1.0));

    let k1 = (two_pow * c2).powf(1.0 / (m - 1.0));
    let k1_struct = k1_structural(m, s, n, c1, diameter, phi1_sup);
    let k3 = 2f64.powf((nf - 2.0 * s) * theta1 + 2.0)
        * (om / (2.0 * s)).powf(m * (nf - 2.0 * s) * theta1)
        * (c1 * two_pow).powf(m * nf * theta1);
    let k4 = (2f64.powf((nf - 2.0 * s + 1.0) * theta11 + 2.0)
        * (om / (2.0 * s)).powf(m * (nf - 2.0 * s + 1.0) * theta11)
        * (c1 * two_pow).powf(m * (nf + 1.0) * theta11))
    .powf(1.0 / m);
    let k2 = c5 * 2f64.powf(m / (m - 1.0).powi(2));
    let k2_bar = c5.powf(m) * 2f64.powf(m / (m - 1.0).powi(2));
    let k5 = mu1 * k4 / (2.0 * s * theta11);
    let k7_base = m * k4.powf(m - 1.0) * mu1 / (2.0 * s * theta11);
    let l0 = (4.0 * k2_bar / c0).powf(m - 1.0);
    let l1 = (c0 / (4.0 * (m - 1.0) * (2.0 * k5).powf(1.0 / (2.0 * s * theta1g * (m - 1.0)))))
        .powf(1.0 / m);

    let mut values = BTreeMap::new();
    let mut put = |name: &str, value: f64, tag: Provenance, ins: &[(&str, f64)]| {
        let inputs: BTreeMap<String, f64> = ins.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        values.insert(name.to_string(), ConstantValue { value, tag, inputs });
    };

    put("theta1", theta1, Provenance::Formula, &[("s", s), ("m", m), ("N", nf)]);
    put("theta11", theta11, Provenance::Formula, &[("s", s), ("m", m), ("N", nf)]);
    put("theta1gamma", theta1g, Provenance::Formula, &[("s", s), ("m", m), ("N", nf), ("gamma", gamma)]);
    put("K1", k1, Provenance::Formula, &[("c2", c2), ("m", m)]);
    put("K1_structural", k1_struct, Provenance::Formula, &[("c1", c1), ("diameter", diameter), ("phi1_sup", phi1_sup)]);
    put("K2", k2, Provenance::Formula, &[("c5", c5), ("m", m)]);
    put("K2_bar", k2_bar, Provenance::Formula, &[("c5", c5), ("m", m)]);
    put("K3", k3, Provenance::Formula, &[("c1", c1), ("theta1", theta1)]);
    put("K4", k4, Provenance::Formula, &[("c1", c1), ("theta11", theta11)]);
    put("K5", k5, Provenance::Formula, &[("mu1", mu1), ("K4", k4), ("theta11", theta11)]);
    put("K7_base", k7_base, Provenance::Formula, &[("mu1", mu1), ("K4", k4), ("m", m)]);
    put("L0", l0, Provenance::Formula, &[("K2_bar", k2_bar), ("c0", c0)]);
    put("L1", l1, Provenance::Formula, &[("c0", c0), ("K5", k5), ("theta1gamma", theta1g)]);
    put("H0", l1, Provenance::Formula, &[("L1", l1)]);
    put("H1", k2, Provenance::Formula, &[("K2", k2)]);
    put("h0_per_lambda", c0, Provenance::Formula, &[("c0", c0)]);
    put("h1_base", c5, Provenance::Formula, &[("c5", c5)]);

    let set = ConstantSet { inputs: inputs.clone(), values };
    for (name, v) in &set.values {
        if !v.value.is_finite() || v.value <= 0.0 {
            return Err(Error::Degenerate(format!("constant {name} evaluated to {}", v.value)));
        }
    }
    Ok(set)
}

/// Boundary-profile constants for the elliptic sandwich at a given lambda:
/// `h0 = c0 lambda`, `h1 = c5 lambda^(1/(m-1))`.
pub fn elliptic_h_constants(c0: f64, c5: f64, lambda: f64, m: f64) -> (f64, f64) {
    (c0 * lambda, c5 * lambda.powf(1.0 / (m - 1.0)))
}

/// Empirically fitted sharp constants; each is a max over the ensemble, so
/// adding runs can only grow the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalConstant {
    /// `sup_t t^(1/(m-1)) |u(t)|_inf`.
    K1,
    /// `sup_(t,x) t^(1/(m-1)) u(t,x) / phi1(x)^(1/m)`.
    K2,
    /// Same-time plain smoothing ratio `t^(N theta1) |u|_inf / |u|_L1^(2s theta1)`.
    K3,
    /// Same-time weighted smoothing ratio
    /// `t^((N+1) theta11) |u|_inf / |u|_(L1 phi1)^(2s theta11)`.
    K4,
}

pub fn fit_empirical(
    ensemble: &[&Trajectory],
    which: EmpiricalConstant,
    m: f64,
    s: f64,
) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut best = 0.0f64;
    for traj in ensemble {
        let n = traj.basis().domain().dimension();
        let theta1 = theta(s, m, n, 0.0)?;
        let theta11 = theta(s, m, n, 1.0)?;
        for (i, &t) in traj.times.iter().enumerate() {
            if t <= 0.0 {
                continue;
            }
            let d = &traj.diagnostics[i];
            let value = match which {
                EmpiricalConstant::K1 => t.powf(1.0 / (m - 1.0)) * d.sup_norm,
                EmpiricalConstant::K2 => {
                    let grid = traj.snapshots[i].grid_ref();
                    let basis = traj.basis();
                    let mut worst = 0.0f64;
                    for (j, &u) in grid.iter().enumerate() {
                        worst = worst.max(u / basis.phi1_grid()[j].powf(1.0 / m));
                    }
                    t.powf(1.0 / (m - 1.0)) * worst
                }
                EmpiricalConstant::K3 => {
                    if d.sup_norm == 0.0 {
                        0.0
                    } else {
                        t.powf(n as f64 * theta1) * d.sup_norm / d.l1_norm.powf(2.0 * s * theta1)
                    }
                }
                EmpiricalConstant::K4 => {
                    if d.sup_norm == 0.0 {
                        0.0
                    } else {
                        t.powf((n as f64 + 1.0) * theta11) * d.sup_norm
                            / d.weighted_mass.max(0.0).powf(2.0 * s * theta11)
                    }
                }
            };
            best = best.max(value);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::EigenBasis;
    use crate::domain::DomainSpec;
    use crate::elliptic::{giant_lambda, giant_trajectory, solve_elliptic, EllipticConfig};
    use crate::operator::FractionalOperator;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_values() {
        assert_relative_eq!(theta(1.0, 2.0, 1, 0.0).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(theta(0.5, 2.0, 1, 1.0).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(theta(1.0, 2.0, 1, 1.0).unwrap(), 0.25);
        assert!(theta(0.5, 1.0, 1, 0.0).is_err());
    }

    #[test]
    fn theta_monotone_in_gamma() {
        let t0 = theta(0.5, 2.0, 1, 0.0).unwrap();
        let t1 = theta(0.5, 2.0, 1, 1.0).unwrap();
        assert!(t1 < t0);
    }

    #[test]
    fn exponent_identity_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let s = rng.gen_range(0.05..=1.0);
            let m = rng.gen_range(1.01..5.0);
            let n = if rng.gen_bool(0.5) { 1 } else { 2 };
            let r = exponent_identity_residual(s, m, n);
            assert!(r < 1e-12, "identity residual {r} at s={s}, m={m}, N={n}");
        }
    }

    fn test_inputs() -> ConstantInputs {
        ConstantInputs {
            dimension: 1,
            m: 2.0,
            s: 0.5,
            gamma: 1.0,
            mu1: PI,
            lambda1: PI * PI,
            phi1_sup: 2f64.sqrt(),
            diameter: 1.0,
            c0: 0.3,
            c1: 0.8,
            c2: 0.5,
            c5: 1.2,
        }
    }

    #[test]
    fn full_set_finite_positive() {
        let set = evaluate_formulas(&test_inputs()).unwrap();
        for (name, v) in &set.values {
            assert!(v.value.is_finite() && v.value > 0.0, "{name} = {}", v.value);
        }
        assert_eq!(set.get("H0").unwrap(), set.get("L1").unwrap());
        assert_eq!(set.get("H1").unwrap(), set.get("K2").unwrap());
    }

    #[test]
    fn t_star_factory_scaling() {
        let set = evaluate_formulas(&test_inputs()).unwrap();
        let l0 = set.get("L0").unwrap();
        assert_relative_eq!(set.t_star(1.0).unwrap(), l0, max_relative = 1e-14);
        // m = 2: doubling the mass halves the waiting time.
        assert_relative_eq!(set.t_star(2.0).unwrap(), l0 / 2.0, max_relative = 1e-14);
        assert!(set.t_star(0.0).is_err());
    }

    #[test]
    fn missing_input_reported() {
        let mut inputs = test_inputs();
        inputs.c5 = f64::NAN;
        assert!(matches!(evaluate_formulas(&inputs), Err(Error::MissingInput(_))));
    }

    #[test]
    fn structural_k1_monotone_as_s_drops() {
        let mut prev = 0.0;
        for k in (0..=20).rev() {
            let s = 0.05 * (1.0f64 / 0.05).powf(k as f64 / 20.0); // log grid down from 1
            let v = k1_structural(2.0, s, 1, 0.8, 1.0, 2f64.sqrt());
            assert!(v > prev, "not increasing while s decreases: {v} after {prev}");
            prev = v;
        }
    }

    #[test]
    fn giant_only_ensemble_saturates_k1() {
        let basis = EigenBasis::build(DomainSpec::unit_interval(48).unwrap(), 48).unwrap();
        let op = FractionalOperator::new(basis, 0.5).unwrap();
        let m = 2.0;
        let sol = solve_elliptic(&EllipticConfig::new(giant_lambda(m), m).unwrap(), &op, None).unwrap();
        let times: Vec<f64> = (1..=6).map(|k| 0.3 * k as f64).collect();
        let traj = giant_trajectory(&sol.profile, m, 0.0, &times).unwrap();
        let fitted = fit_empirical(&[&traj], EmpiricalConstant::K1, m, 0.5).unwrap();
        let v_sup = sol.profile.sup_norm();
        assert_relative_eq!(fitted, v_sup, max_relative = 1e-12);
    }

    #[test]
    fn empty_and_zero_ensembles() {
        assert!(matches!(fit_empirical(&[], EmpiricalConstant::K1, 2.0, 0.5), Err(Error::EmptySamples)));
        let basis = EigenBasis::build(DomainSpec::unit_interval(32).unwrap(), 8).unwrap();
        let zero = crate::field::Field::zero(basis.clone());
        let traj =
            Trajectory::from_states(basis, vec![0.5, 1.0], vec![zero.clone(), zero], 2.0).unwrap();
        let v = fit_empirical(&[&traj], EmpiricalConstant::K4, 2.0, 0.5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn fits_monotone_under_ensemble_growth() {
        let basis = EigenBasis::build(DomainSpec::unit_interval(48).unwrap(), 48).unwrap();
        let op = FractionalOperator::new(basis, 0.5).unwrap();
        let m = 2.0;
        let sol = solve_elliptic(&EllipticConfig::new(giant_lambda(m), m).unwrap(), &op, None).unwrap();
        let t1 = giant_trajectory(&sol.profile, m, 0.0, &[0.5, 1.0]).unwrap();
        let t2 = giant_trajectory(&sol.profile, m, 1.0, &[0.5, 1.0]).unwrap();
        for which in [EmpiricalConstant::K1, EmpiricalConstant::K2, EmpiricalConstant::K4] {
            let small = fit_empirical(&[&t1], which, m, 0.5).unwrap();
            let large = fit_empirical(&[&t1, &t2], which, m, 0.5).unwrap();
            assert!(large >= small);
        }
    }

    use std::f64::consts::PI;
}

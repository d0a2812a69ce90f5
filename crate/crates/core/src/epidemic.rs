//! Degree-based mean-field SIS dynamics of one information strand.
//!
//! A node of degree `k` is informed with density `I_k`; informed nodes forget
//! at unit rate and uninformed ones are informed at rate `α k Θ`, where `Θ`
//! is the probability that a neighbor (picked by edge) is informed.

use serde::{Deserialize, Serialize};

use crate::degree::{strand_model, DegreeDistribution, LayerSpec, StrandId};
use crate::error::{invalid, Error, Result};

/// Spreading rates at or below `α_c + NEAR_THRESHOLD` are treated as subcritical.
pub const NEAR_THRESHOLD: f64 = 1e-8;

/// Contact rate and threat level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreatParams {
    pub gamma: f64,
    pub delta: f64,
}

impl Default for ThreatParams {
    fn default() -> Self {
        ThreatParams {
            gamma: 1.0,
            delta: 0.0,
        }
    }
}

impl ThreatParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        effective_rate(gamma, delta)?;
        Ok(ThreatParams { gamma, delta })
    }

    pub fn alpha(&self) -> f64 {
        self.gamma * (1.0 - self.delta)
    }
}

/// Per-contact spreading rate `γ(1 − δ)` under threat level `δ`.
pub fn effective_rate(gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!(
            "contact rate gamma = {gamma} must be positive"
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(invalid(format!(
            "threat level delta = {delta} outside [0, 1]"
        )));
    }
    Ok(gamma * (1.0 - delta))
}

/// Smallest spreading rate with a non-trivial equilibrium, `E[K]/E[K²]`.
pub fn epidemic_threshold<D: DegreeDistribution + ?Sized>(model: &D) -> Result<f64> {
    let mean = model.mean();
    if mean <= 0.0 {
        return Err(Error::UndefinedThreshold);
    }
    Ok(mean / model.second_moment())
}

/// Truncated series shared by the fixed-point map and the informed average.
struct Series {
    pmf: Vec<f64>,
    mean: f64,
}

impl Series {
    fn new<D: DegreeDistribution + ?Sized>(model: &D) -> Self {
        Series {
            pmf: model.pmf_table(),
            mean: model.mean(),
        }
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &p)| (k as f64, p))
    }

    /// `(F(Θ), F'(Θ))`.
    fn map(&self, alpha: f64, theta: f64) -> (f64, f64) {
        if self.mean <= 0.0 {
            return (0.0, 0.0);
        }
        let (mut value, mut slope) = (0.0, 0.0);
        for (k, p) in self.terms() {
            let denom = 1.0 + alpha * k * theta;
            value += p * k * k * alpha * theta / denom;
            slope += p * k * k * alpha / (denom * denom);
        }
        (value / self.mean, slope / self.mean)
    }

    fn average_informed(&self, alpha: f64, theta: f64) -> f64 {
        self.terms()
            .map(|(k, p)| p * stationary_informed(alpha, theta, k))
            .sum()
    }
}

/// Right side of the self-consistency equation:
/// `F(Θ) = Σ_k k P(k) · αkΘ/(1 + αkΘ) / E[K]`.
pub fn theta_map<D: DegreeDistribution + ?Sized>(model: &D, alpha: f64, theta: f64) -> f64 {
    Series::new(model).map(alpha, theta).0
}

/// Stationary informed density of degree-`k` nodes given `Θ`.
pub fn stationary_informed(alpha: f64, theta: f64, k: f64) -> f64 {
    let x = alpha * k * theta;
    x / (1.0 + x)
}

/// Average informed density `Σ_k I_k P(k)` over the truncated support.
pub fn average_informed<D: DegreeDistribution + ?Sized>(model: &D, alpha: f64, theta: f64) -> f64 {
    Series::new(model).average_informed(alpha, theta)
}

/// Closed-form lower bound `max(0, 1 − 1/(α E[K]))`.
pub fn theta_approx<D: DegreeDistribution + ?Sized>(model: &D, alpha: f64) -> f64 {
    let x = alpha * model.mean();
    if x <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting iterate, clamped into `(0, 1]`.
    pub start: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 100_000,
            start: 1.0,
        }
    }
}

/// Stationary state of one strand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub strand: Option<StrandId>,
    pub alpha: f64,
    pub theta: f64,
    /// `I_k` for `k = 0..=k_max`.
    pub informed_by_degree: Vec<f64>,
    pub average_informed: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `|Θ − F(Θ)|` at the returned `Θ`.
    pub residual: f64,
}

/// Solves `Θ = F(Θ)` for the largest root.
///
/// Below the threshold the only root is `Θ = 0`. Above it, `Θ − F(Θ)` is
/// convex with one positive root; iterates are Newton steps on it, kept
/// inside a shrinking bracket `(lo, hi]` and replaced by bisection whenever
/// the Newton step leaves the bracket. From the default start `Θ₀ = 1` the
/// Newton steps decrease monotonically onto the root.
pub fn solve_theta_exact<D: DegreeDistribution + ?Sized>(
    model: &D,
    alpha: f64,
    opts: SolveOptions,
) -> Result<EquilibriumResult> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid(format!(
            "spreading rate alpha = {alpha} must be non-negative"
        )));
    }
    let series = Series::new(model);
    let finish = |theta: f64, iterations: usize, converged: bool| {
        let informed_by_degree: Vec<f64> = (0..series.pmf.len())
            .map(|k| stationary_informed(alpha, theta, k as f64))
            .collect();
        EquilibriumResult {
            strand: model.strand(),
            alpha,
            theta,
            average_informed: series.average_informed(alpha, theta),
            informed_by_degree,
            converged,
            iterations,
            residual: (theta - series.map(alpha, theta).0).abs(),
        }
    };

    let subcritical = match epidemic_threshold(model) {
        Ok(ac) => alpha <= ac + NEAR_THRESHOLD,
        Err(Error::UndefinedThreshold) => true,
        Err(e) => return Err(e),
    };
    if subcritical {
        return Ok(finish(0.0, 0, true));
    }

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut theta = if opts.start > 0.0 {
        opts.start.min(1.0)
    } else {
        1.0
    };
    for iter in 1..=opts.max_iter {
        let (f, df) = series.map(alpha, theta);
        let phi = f - theta;
        if phi > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let slope = df - 1.0;
        let mut next = if slope < 0.0 {
            theta - phi / slope
        } else {
            f64::NAN
        };
        if !(next > lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - theta).abs();
        theta = next;
        if step < opts.tol || phi == 0.0 {
            return Ok(finish(theta, iter, true));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_theta: theta,
    })
}

/// Plain successive substitution `Θ ← F(Θ)` until `|ΔΘ| < tol`.
///
/// Slow near the threshold, where the map's slope at the root approaches 1;
/// kept as an independent route for cross-checking [`solve_theta_exact`].
pub fn picard_iterate<D: DegreeDistribution + ?Sized>(
    model: &D,
    alpha: f64,
    start: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let series = Series::new(model);
    let mut theta = start;
    for iter in 1..=max_iter {
        let next = series.map(alpha, theta).0;
        let step = (next - theta).abs();
        theta = next;
        if step < tol {
            return Ok((theta, iter));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_theta: theta,
    })
}

/// Equilibria of every strand of a network at spreading rate `alpha`:
/// intra strands, ordered inter pairs, then the combined strand.
pub fn evaluate_strands(layers: &[LayerSpec], alpha: f64) -> Result<Vec<EquilibriumResult>> {
    StrandId::all(layers.len())
        .into_iter()
        .map(|s| {
            let model = strand_model(layers, s)?;
            solve_theta_exact(&model, alpha, SolveOptions::default())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsState {
    pub t: f64,
    pub densities: Vec<f64>,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub step: f64,
    /// Stop early once `max_k |dI_k/dt|` drops below this.
    pub stationary_tol: Option<f64>,
    /// Record a state every this many steps (the final state is always kept).
    pub record_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            t_end: 100.0,
            step: 0.01,
            stationary_tol: None,
            record_every: 100,
        }
    }
}

const RANGE_SLACK: f64 = 1e-6;

/// Classic RK4 integration of the per-degree densities for
/// `k = 0..=k_max`, with `Θ(t) = Σ k P(k) I_k(t) / E[K]`.
///
/// `initial` shorter than `k_max + 1` is padded with its last value.
pub fn integrate_dynamics<D: DegreeDistribution + ?Sized>(
    model: &D,
    alpha: f64,
    initial: &[f64],
    opts: IntegrateOptions,
) -> Result<Vec<DynamicsState>> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(invalid(format!("step {} must be positive", opts.step)));
    }
    if initial.is_empty() || initial.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid(
            "initial densities must be non-empty and lie in [0, 1]",
        ));
    }
    let pmf = model.pmf_table();
    let mean = model.mean();
    let n = pmf.len();
    let weights: Vec<f64> = if mean > 0.0 {
        pmf.iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p / mean)
            .collect()
    } else {
        vec![0.0; n]
    };
    let theta_of = |state: &[f64]| -> f64 { weights.iter().zip(state).map(|(w, i)| w * i).sum() };
    let rhs = |state: &[f64], out: &mut [f64]| {
        let theta = theta_of(state);
        for (k, (o, i)) in out.iter_mut().zip(state).enumerate() {
            *o = -i + alpha * k as f64 * (1.0 - i) * theta;
        }
    };

    let last = *initial.last().unwrap();
    let mut state: Vec<f64> = (0..n)
        .map(|k| initial.get(k).copied().unwrap_or(last))
        .collect();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let h = opts.step;
    let steps = (opts.t_end / h).ceil().max(0.0) as usize;
    let record_every = opts.record_every.max(1);
    let mut out = vec![DynamicsState {
        t: 0.0,
        theta: theta_of(&state),
        densities: state.clone(),
    }];

    let mut done = 0;
    for s in 1..=steps {
        rhs(&state, &mut k1);
        if let Some(tol) = opts.stationary_tol {
            if k1.iter().all(|d| d.abs() < tol) {
                break;
            }
        }
        for j in 0..n {
            tmp[j] = state[j] + 0.5 * h * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..n {
            tmp[j] = state[j] + 0.5 * h * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..n {
            tmp[j] = state[j] + h * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 0..n {
            state[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            if !(state[j] >= -RANGE_SLACK && state[j] <= 1.0 + RANGE_SLACK) {
                return Err(Error::StepSize {
                    step: h,
                    degree: j,
                    value: state[j],
                });
            }
        }
        done = s;
        if s % record_every == 0 {
            out.push(DynamicsState {
                t: s as f64 * h,
                theta: theta_of(&state),
                densities: state.clone(),
            });
        }
    }
    if done % record_every != 0 {
        out.push(DynamicsState {
            t: done as f64 * h,
            theta: theta_of(&state),
            densities: state,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::{DegreeModel, PointMass};
    use std::f64::consts::PI;

    fn poisson(mu: f64) -> DegreeModel {
        DegreeModel::poisson(StrandId::Intra(0), mu).unwrap()
    }

    #[test]
    fn effective_rate_cases() {
        assert_eq!(effective_rate(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(effective_rate(1.0, 1.0).unwrap(), 0.0);
        assert!((effective_rate(1.0, 0.3).unwrap() - 0.7).abs() < 1e-15);
        assert!(effective_rate(1.0, 1.2).is_err());
        assert!(effective_rate(1.0, -0.1).is_err());
        assert!(effective_rate(0.0, 0.1).is_err());
        assert_eq!(ThreatParams::default().alpha(), 1.0);
    }

    #[test]
    fn threshold_values() {
        let ac = epidemic_threshold(&poisson(PI)).unwrap();
        assert!((ac - 1.0 / (1.0 + PI)).abs() < 1e-12);
        assert!((ac - 0.2415).abs() < 5e-5);
        let ac = epidemic_threshold(&poisson(12.57)).unwrap();
        assert!((ac - 0.0737).abs() < 5e-5);
        assert_eq!(epidemic_threshold(&PointMass(8)).unwrap(), 1.0 / 8.0);
        assert_eq!(
            epidemic_threshold(&poisson(0.0)),
            Err(Error::UndefinedThreshold)
        );
    }

    #[test]
    fn theta_map_basics() {
        let m = poisson(PI);
        assert_eq!(theta_map(&m, 0.9, 0.0), 0.0);
        assert!(theta_map(&m, 0.9, 1.0) < 1.0);
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = theta_map(&m, 0.6, i as f64 / 100.0);
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn below_threshold_is_zero() {
        let m = poisson(PI);
        let ac = epidemic_threshold(&m).unwrap();
        let r = solve_theta_exact(&m, 0.5 * ac, SolveOptions::default()).unwrap();
        assert_eq!(r.theta, 0.0);
        assert_eq!(r.average_informed, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn near_threshold_reported_subcritical() {
        let m = poisson(PI);
        let ac = epidemic_threshold(&m).unwrap();
        let r = solve_theta_exact(&m, ac + 0.5 * NEAR_THRESHOLD, SolveOptions::default()).unwrap();
        assert_eq!(r.theta, 0.0);
    }

    #[test]
    fn dense_strand_equilibrium_sits_just_above_bound() {
        let m = poisson(12.57);
        let r = solve_theta_exact(&m, 0.5, SolveOptions::default()).unwrap();
        let bound = theta_approx(&m, 0.5);
        assert!((bound - 0.8409).abs() < 5e-5);
        assert!(
            r.theta >= bound && r.theta - bound < 0.02,
            "{} vs {bound}",
            r.theta
        );
        assert!(r.residual < 1e-9);
        let low = solve_theta_exact(
            &m,
            0.5,
            SolveOptions {
                start: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((low.theta - r.theta).abs() < 1e-8);
    }

    #[test]
    fn newton_route_agrees_with_successive_substitution() {
        for (mu, alpha) in [(PI, 0.5), (2.0 * PI, 0.3), (12.57, 0.2), (31.4, 0.9)] {
            let m = poisson(mu);
            let r = solve_theta_exact(&m, alpha, SolveOptions::default()).unwrap();
            let (p, _) = picard_iterate(&m, alpha, 1.0, 1e-14, 1_000_000).unwrap();
            assert!(
                (r.theta - p).abs() < 1e-9,
                "mu {mu} alpha {alpha}: {} vs {p}",
                r.theta
            );
        }
    }

    #[test]
    fn equilibrium_fields_consistent() {
        let m = poisson(6.0);
        let r = solve_theta_exact(&m, 0.4, SolveOptions::default()).unwrap();
        for (k, i) in r.informed_by_degree.iter().enumerate() {
            let x = 0.4 * k as f64 * r.theta;
            assert!((i - x / (1.0 + x)).abs() < 1e-15);
        }
        let avg: f64 = r
            .informed_by_degree
            .iter()
            .zip(m.pmf_table())
            .map(|(i, p)| i * p)
            .sum();
        assert!((avg - r.average_informed).abs() < 1e-12);
        assert!(r.average_informed < 1.0);
        assert!(r.average_informed <= r.informed_by_degree.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn point_mass_closed_form() {
        // Deterministic degree k0: Θ = 1 − 1/(α k0), the bound is exact.
        let m = PointMass(10);
        let r = solve_theta_exact(&m, 0.5, SolveOptions::default()).unwrap();
        assert!((r.theta - 0.8).abs() < 1e-12);
        assert!((theta_approx(&m, 0.5) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn approx_clamps() {
        assert_eq!(theta_approx(&poisson(2.0), 0.5), 0.0);
        assert_eq!(theta_approx(&poisson(2.0), 0.4), 0.0);
        assert!((theta_approx(&poisson(12.57), 0.5) - (1.0 - 1.0 / 6.285)).abs() < 1e-12);
    }

    #[test]
    fn stationary_informed_cases() {
        assert_eq!(stationary_informed(0.7, 0.5, 0.0), 0.0);
        assert_eq!(stationary_informed(0.7, 0.0, 9.0), 0.0);
        let (alpha, mean) = (0.6, 9.0);
        let theta = 1.0 - 1.0 / (alpha * mean);
        assert!((stationary_informed(alpha, theta, mean) - theta).abs() < 1e-15);
        assert!(stationary_informed(0.7, 0.5, 4.0) < stationary_informed(0.7, 0.5, 5.0));
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let m = poisson(8.0);
        let traj = integrate_dynamics(
            &m,
            0.9,
            &[0.0],
            IntegrateOptions {
                t_end: 5.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(traj.iter().all(|s| s.densities.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dynamics_relax_to_fixed_point() {
        let m = poisson(2.0 * PI);
        let alpha = 0.4;
        let eq = solve_theta_exact(&m, alpha, SolveOptions::default()).unwrap();
        let opts = IntegrateOptions {
            t_end: 1e4,
            stationary_tol: Some(1e-9),
            ..Default::default()
        };
        let traj = integrate_dynamics(&m, alpha, &[0.01], opts).unwrap();
        let last = traj.last().unwrap();
        assert!((last.theta - eq.theta).abs() < 1e-6);
        for (a, b) in last.densities.iter().zip(&eq.informed_by_degree) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn subcritical_dynamics_die_out() {
        let m = poisson(PI);
        let alpha = 0.8 * epidemic_threshold(&m).unwrap();
        let opts = IntegrateOptions {
            t_end: 1e4,
            stationary_tol: Some(1e-9),
            ..Default::default()
        };
        let traj = integrate_dynamics(&m, alpha, &[0.5], opts).unwrap();
        let last = traj.last().unwrap();
        let avg: f64 = last
            .densities
            .iter()
            .zip(m.pmf_table())
            .map(|(i, p)| i * p)
            .sum();
        assert!(avg < 1e-6);
    }

    #[test]
    fn oversized_step_rejected() {
        let m = poisson(30.0);
        let opts = IntegrateOptions {
            t_end: 5.0,
            step: 0.5,
            ..Default::default()
        };
        match integrate_dynamics(&m, 1.0, &[0.5], opts) {
            Err(Error::StepSize { .. }) => {}
            other => panic!("expected step-size error, got {other:?}"),
        }
        assert!(integrate_dynamics(&m, 1.0, &[1.5], IntegrateOptions::default()).is_err());
    }

    #[test]
    fn all_strands_evaluated() {
        let layers = [
            LayerSpec::fixed(5.0, 0.5).unwrap(),
            LayerSpec::fixed(20.0, 0.2).unwrap(),
        ];
        let res = evaluate_strands(&layers, 0.8).unwrap();
        let strands: Vec<_> = res.iter().map(|r| r.strand.unwrap()).collect();
        assert_eq!(strands, StrandId::all(2));
        assert!(res.iter().all(|r| r.converged));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn bound_and_residual(mu in 0.5f64..40.0, frac in 1.05f64..20.0) {
                let m = poisson(mu);
                let alpha = (frac / (1.0 + mu)).min(1.0);
                let r = solve_theta_exact(&m, alpha, SolveOptions::default()).unwrap();
                prop_assert!(r.converged);
                prop_assert!(r.residual < 1e-9);
                prop_assert!(theta_approx(&m, alpha) <= r.theta + 1e-12);
                let low = solve_theta_exact(&m, alpha, SolveOptions { start: 1e-3, ..Default::default() }).unwrap();
                prop_assert!((low.theta - r.theta).abs() < 1e-8);
            }

            #[test]
            fn theta_monotone_in_alpha_and_mean(mu in 0.5f64..30.0, a in 0.02f64..0.95) {
                let opts = SolveOptions::default();
                let base = solve_theta_exact(&poisson(mu), a, opts).unwrap().theta;
                let more_alpha = solve_theta_exact(&poisson(mu), a + 0.05, opts).unwrap().theta;
                let more_mean = solve_theta_exact(&poisson(mu * 1.1), a, opts).unwrap().theta;
                prop_assert!(more_alpha >= base - 1e-10);
                prop_assert!(more_mean >= base - 1e-10);
            }
        }
    }
}

//! Multi-start ascent on the power sphere for the shaping programs.
//!
//! The min-power program `min π(z) s.t. z^H Z_p z ≥ d²` is solved through its
//! scale-free equivalent: maximize `min_p f_p(z) / π(z)` and rescale at the end.
//! The minimum is smoothed by a softmin whose temperature is annealed towards
//! zero. The best exact ratio seen along the way is what gets returned.

use std::f64::consts::LN_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::QcqpInstance;
use crate::seed;
use crate::{CVector, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Grow on success, halve on failure.
    Backtracking,
    /// Constant step; a rejected step ends the stage.
    Fixed,
}

fn default_max_iters() -> usize {
    5000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_restarts() -> usize {
    8
}
fn default_schedule() -> Vec<f64> {
    vec![10.0, 3.0, 1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001]
}
fn default_step_rule() -> StepRule {
    StepRule::Backtracking
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Softmin temperatures relative to the current minimum pair value.
    #[serde(default = "default_schedule")]
    pub smoothing_schedule: Vec<f64>,
    #[serde(default = "default_step_rule")]
    pub step_rule: StepRule,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: default_max_iters(),
            tol: default_tol(),
            restarts: default_restarts(),
            seed: 0,
            smoothing_schedule: default_schedule(),
            step_rule: default_step_rule(),
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.max_iters < 1 {
            bad.push("solver.max_iters must be at least 1".to_string());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            bad.push("solver.tol must be positive".to_string());
        }
        if self.restarts < 1 {
            bad.push("solver.restarts must be at least 1".to_string());
        }
        if self.smoothing_schedule.is_empty()
            || self.smoothing_schedule.iter().any(|s| !(*s > 0.0 && s.is_finite()))
        {
            bad.push("solver.smoothing_schedule must be a nonempty list of positive reals".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SolverConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    /// Smallest pair value at unit power.
    pub min_form: f64,
}

/// CSV with columns `iter,objective,min_form`.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut s = String::from("iter,objective,min_form\n");
    for t in trace {
        s.push_str(&format!(
            "{},{},{}\n",
            t.iter,
            crate::io::fmt_f64(t.objective),
            crate::io::fmt_f64(t.min_form)
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub z: CVector,
    /// Power under the instance's metric.
    pub power: f64,
    /// `z^H z`.
    pub variable_norm_sqr: f64,
    pub min_form_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized `min f / power` for min-power runs, the bound value otherwise.
    pub objective: f64,
    /// Index of the restart that produced `z`.
    pub restart: usize,
    pub trace: Vec<TracePoint>,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `z` rescaled to `π(z) = target`, or `None` for a zero-power point.
fn project(inst: &QcqpInstance, z: &CVector, target: f64) -> Option<CVector> {
    let p = inst.power(z);
    if !(p > 0.0 && p.is_finite()) {
        return None;
    }
    Some(z * C64::new((target / p).sqrt(), 0.0))
}

fn random_start<R: Rng>(inst: &QcqpInstance, rng: &mut R) -> CVector {
    let touched = inst.touched();
    CVector::from_fn(inst.dim, |i, _| {
        let v = seed::complex_gaussian(rng, 1.0);
        if touched[i] {
            v
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn masked(inst: &QcqpInstance, z: &CVector) -> CVector {
    let touched = inst.touched();
    CVector::from_fn(inst.dim, |i, _| if touched[i] { z[i] } else { C64::new(0.0, 0.0) })
}

/// A smooth function of the pair values, to be maximized.
trait PairObjective {
    fn value(&self, f: &[f64]) -> f64;
    /// `∂value / ∂f_p`.
    fn weights(&self, f: &[f64]) -> Vec<f64>;
}

struct Softmin {
    tau: f64,
}

impl PairObjective for Softmin {
    fn value(&self, f: &[f64]) -> f64 {
        let m = min_of(f);
        let s: f64 = f.iter().map(|v| (-(v - m) / self.tau).exp()).sum();
        m - self.tau * s.ln()
    }

    fn weights(&self, f: &[f64]) -> Vec<f64> {
        let m = min_of(f);
        let e: Vec<f64> = f.iter().map(|v| (-(v - m) / self.tau).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
}

/// `-log` of the pairwise union bound (up to a constant).
struct NegLogUnion {
    rho: f64,
}

impl PairObjective for NegLogUnion {
    fn value(&self, f: &[f64]) -> f64 {
        Softmin { tau: 4.0 / self.rho }.value(f) * self.rho / 4.0
    }

    fn weights(&self, f: &[f64]) -> Vec<f64> {
        let k = self.rho / 4.0;
        Softmin { tau: 4.0 / self.rho }
            .weights(f)
            .into_iter()
            .map(|w| w * k)
            .collect()
    }
}

struct MiBound<'a> {
    rho: f64,
    n_r: usize,
    n: usize,
    pairs: &'a [(usize, usize)],
}

impl MiBound<'_> {
    fn inner_sums(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e: Vec<f64> = f.iter().map(|v| (-self.rho * v / 2.0).exp()).collect();
        let mut s = vec![0.0; self.n];
        for (&(i, j), &ep) in self.pairs.iter().zip(&e) {
            s[i] += ep;
            s[j] += ep;
        }
        (e, s)
    }
}

impl PairObjective for MiBound<'_> {
    fn value(&self, f: &[f64]) -> f64 {
        let (_, s) = self.inner_sums(f);
        mi_from_sums(&s, self.n, self.n_r)
    }

    fn weights(&self, f: &[f64]) -> Vec<f64> {
        let (e, s) = self.inner_sums(f);
        let c = self.rho / (2.0 * self.n as f64 * LN_2);
        self.pairs
            .iter()
            .zip(&e)
            .map(|(&(i, j), &ep)| c * ep * (1.0 / (1.0 + s[i]) + 1.0 / (1.0 + s[j])))
            .collect()
    }
}

fn mi_from_sums(s: &[f64], n: usize, n_r: usize) -> f64 {
    let log_e = std::f64::consts::LOG2_E;
    let penalty: f64 = s.iter().map(|v| (1.0 + v).log2()).sum::<f64>() / n as f64;
    (n as f64).log2() + n_r as f64 * (1.0 - log_e) - penalty
}

/// `(1/N) Σ_pairs exp(-ρ f_p / 4)`, the pairwise union bound on SER.
pub fn union_bound_from_values(f: &[f64], n: usize, rho: f64) -> f64 {
    f.iter().map(|v| (-rho * v / 4.0).exp()).sum::<f64>() / n as f64
}

/// `log₂N + N_r(1 - log₂e) - (1/N) Σ_i log₂(1 + Σ_{i'≠i} exp(-ρ f_ii' / 2))`.
pub fn mi_bound_from_values(f: &[f64], pairs: &[(usize, usize)], n: usize, rho: f64, n_r: usize) -> f64 {
    MiBound { rho, n_r, n, pairs }.value(f)
}

struct Walk<'a> {
    inst: &'a QcqpInstance,
    target: f64,
    rule: StepRule,
    tol: f64,
    iterations: usize,
}

impl Walk<'_> {
    /// Ascend `obj` from `z` (already at power `target`) for at most `budget`
    /// iterations. `visit` sees every accepted point with its pair values.
    fn run(
        &mut self,
        obj: &dyn PairObjective,
        z: &mut CVector,
        budget: usize,
        visit: &mut dyn FnMut(usize, &CVector, &[f64], f64),
    ) {
        let mut f = self.inst.pair_values(z);
        let mut v = obj.value(&f);
        let mut eta: f64 = 0.1;
        let mut checkpoint = v;
        let mut since_check = 0usize;
        for _ in 0..budget {
            self.iterations += 1;
            let w = obj.weights(&f);
            let gz = self.inst.weighted_form_gradient(z, &w);
            let pz = self.inst.power_gradient(z);
            let pi = self.inst.power(z);
            let mu = z.dotc(&gz).re / pi;
            let g = gz - pz * C64::new(mu, 0.0);
            let gn = g.norm();
            if !(gn > 0.0 && gn.is_finite()) {
                break;
            }
            let scale = z.norm() / gn;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &*z + &g * C64::new(eta * scale, 0.0);
                if let Some(trial) = project(self.inst, &trial, self.target) {
                    let tf = self.inst.pair_values(&trial);
                    let tv = obj.value(&tf);
                    if tv > v {
                        *z = trial;
                        f = tf;
                        v = tv;
                        accepted = true;
                        break;
                    }
                }
                if self.rule == StepRule::Fixed {
                    break;
                }
                eta *= 0.5;
                if eta < 1e-14 {
                    break;
                }
            }
            if !accepted {
                break;
            }
            visit(self.iterations, z, &f, v);
            if self.rule == StepRule::Backtracking {
                eta = (eta * 2.0).min(1.0);
            }
            since_check += 1;
            if since_check == 10 {
                if v - checkpoint <= self.tol * checkpoint.abs() {
                    break;
                }
                checkpoint = v;
                since_check = 0;
            }
        }
    }
}

fn start_point(inst: &QcqpInstance, cfg: &SolverConfig, restart: usize, warm: Option<&CVector>, target: f64) -> CVector {
    if restart == 0 {
        if let Some(w) = warm.and_then(|w| project(inst, &masked(inst, w), target)) {
            return w;
        }
    }
    let mut rng = seed::rng(seed::mix(cfg.seed, restart as u64));
    loop {
        if let Some(z) = project(inst, &random_start(inst, &mut rng), target) {
            return z;
        }
    }
}

fn check_warm(inst: &QcqpInstance, warm: Option<&CVector>) -> Result<()> {
    if let Some(w) = warm {
        if w.len() != inst.dim {
            return Err(Error::mismatch(format!(
                "warm start has length {}, instance expects {}",
                w.len(),
                inst.dim
            )));
        }
    }
    Ok(())
}

struct RestartOutcome {
    z: CVector,
    ratio: f64,
    iterations: usize,
    trace: Vec<TracePoint>,
}

fn max_min_restart(inst: &QcqpInstance, cfg: &SolverConfig, restart: usize, warm: Option<&CVector>) -> RestartOutcome {
    let mut z = start_point(inst, cfg, restart, warm, 1.0);
    let f0 = inst.pair_values(&z);
    let mut best_ratio = min_of(&f0);
    let mut best_z = z.clone();
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(TracePoint { iter: 0, objective: best_ratio, min_form: best_ratio });
    }
    let mut walk = Walk { inst, target: 1.0, rule: cfg.step_rule, tol: cfg.tol, iterations: 0 };
    let stages = cfg.smoothing_schedule.len();
    let per_stage = (cfg.max_iters / stages).max(1);
    for &s in &cfg.smoothing_schedule {
        let f = inst.pair_values(&z);
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let tau = s * min_of(&f).max(1e-6 * mean).max(f64::MIN_POSITIVE);
        let obj = Softmin { tau };
        walk.run(&obj, &mut z, per_stage, &mut |it, zc, fc, v| {
            let m = min_of(fc);
            if m > best_ratio {
                best_ratio = m;
                best_z = zc.clone();
            }
            if cfg.record_trace {
                trace.push(TracePoint { iter: it, objective: v, min_form: m });
            }
        });
        // continue annealing from the best point found so far
        z = best_z.clone();
    }
    RestartOutcome { z: best_z, ratio: best_ratio, iterations: walk.iterations, trace }
}

/// Smallest-power `z` with every pair value at least `d_target²`.
///
/// Restart 0 starts from `warm` when it is given and nonzero, so a feasible
/// warm start is never worsened.
pub fn solve_min_power(
    inst: &QcqpInstance,
    d_target: f64,
    cfg: &SolverConfig,
    warm: Option<&CVector>,
) -> Result<SolverResult> {
    cfg.validate()?;
    if !(d_target > 0.0 && d_target.is_finite()) {
        return Err(Error::invalid("d_target must be positive"));
    }
    check_warm(inst, warm)?;
    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| max_min_restart(inst, cfg, r, warm))
        .collect();
    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    // largest ratio means smallest power; the first restart wins ties
    let mut best = 0;
    for (r, o) in outcomes.iter().enumerate() {
        if o.ratio > outcomes[best].ratio {
            best = r;
        }
    }
    let o = &outcomes[best];
    let feasible = o.ratio > 0.0 && o.ratio.is_finite();
    let z = if feasible {
        &o.z * C64::new(d_target / o.ratio.sqrt(), 0.0)
    } else {
        o.z.clone()
    };
    let min_form_value = min_of(&inst.pair_values(&z));
    let power = inst.power(&z);
    let converged = feasible && min_form_value >= (1.0 - cfg.tol) * d_target * d_target;
    Ok(SolverResult {
        variable_norm_sqr: z.norm_squared(),
        objective: if power > 0.0 { min_form_value / power } else { 0.0 },
        z,
        power,
        min_form_value,
        iterations,
        converged,
        restart: best,
        trace: o.trace.clone(),
    })
}

fn budget_solve(
    inst: &QcqpInstance,
    budget: f64,
    cfg: &SolverConfig,
    warm: Option<&CVector>,
    obj: &(dyn PairObjective + Sync),
) -> Vec<(CVector, f64, usize, Vec<TracePoint>)> {
    (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut z = start_point(inst, cfg, r, warm, budget);
            let mut walk = Walk { inst, target: budget, rule: cfg.step_rule, tol: cfg.tol, iterations: 0 };
            let mut trace = Vec::new();
            let f0 = inst.pair_values(&z);
            if cfg.record_trace {
                trace.push(TracePoint { iter: 0, objective: obj.value(&f0), min_form: min_of(&f0) / budget });
            }
            walk.run(obj, &mut z, cfg.max_iters, &mut |it, _, fc, v| {
                if cfg.record_trace {
                    trace.push(TracePoint { iter: it, objective: v, min_form: min_of(fc) / budget });
                }
            });
            let v = obj.value(&inst.pair_values(&z));
            (z, v, walk.iterations, trace)
        })
        .collect()
}

fn finish_budget(
    inst: &QcqpInstance,
    cfg: &SolverConfig,
    budget: f64,
    runs: Vec<(CVector, f64, usize, Vec<TracePoint>)>,
    report: impl Fn(&[f64]) -> f64,
) -> SolverResult {
    let iterations = runs.iter().map(|r| r.2).sum();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 > runs[best].1 {
            best = r;
        }
    }
    let (z, _, _, trace) = runs.into_iter().nth(best).expect("at least one restart");
    let f = inst.pair_values(&z);
    let min_form_value = min_of(&f);
    let power = inst.power(&z);
    SolverResult {
        variable_norm_sqr: z.norm_squared(),
        objective: report(&f),
        z,
        power,
        min_form_value,
        iterations,
        converged: (power - budget).abs() <= 1e-9 * budget && cfg.validate().is_ok(),
        restart: best,
        trace,
    }
}

fn check_budget(rho: f64, budget: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho must be positive"));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::invalid("power_budget must be positive"));
    }
    Ok(())
}

/// Minimize the pairwise union bound on SER at power `power_budget`.
/// The reported objective is the bound itself.
pub fn solve_mser(
    inst: &QcqpInstance,
    rho: f64,
    power_budget: f64,
    cfg: &SolverConfig,
    warm: Option<&CVector>,
) -> Result<SolverResult> {
    cfg.validate()?;
    check_budget(rho, power_budget)?;
    check_warm(inst, warm)?;
    let obj = NegLogUnion { rho };
    let runs = budget_solve(inst, power_budget, cfg, warm, &obj);
    let n = inst.n_codewords;
    Ok(finish_budget(inst, cfg, power_budget, runs, |f| union_bound_from_values(f, n, rho)))
}

/// Maximize the mutual-information lower bound at power `power_budget`.
pub fn solve_mmi(
    inst: &QcqpInstance,
    rho: f64,
    n_r: usize,
    power_budget: f64,
    cfg: &SolverConfig,
    warm: Option<&CVector>,
) -> Result<SolverResult> {
    cfg.validate()?;
    check_budget(rho, power_budget)?;
    check_warm(inst, warm)?;
    let obj = MiBound { rho, n_r, n: inst.n_codewords, pairs: &inst.pair_index };
    let runs = budget_solve(inst, power_budget, cfg, warm, &obj);
    let n = inst.n_codewords;
    let pairs = inst.pair_index.clone();
    Ok(finish_budget(inst, cfg, power_budget, runs, |f| mi_bound_from_values(f, &pairs, n, rho, n_r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcqp::{build_distance_forms, LayoutArgs};
    use crate::{CMatrix, C64};

    fn antipodal() -> QcqpInstance {
        build_distance_forms(&CMatrix::identity(1, 1), &LayoutArgs::Fdss { n_codewords: 2 }).unwrap()
    }

    #[test]
    fn antipodal_power() {
        let cfg = SolverConfig::default();
        let r1 = solve_min_power(&antipodal(), 1.0, &cfg, None).unwrap();
        assert!((r1.power - 0.5).abs() < 1e-6, "{}", r1.power);
        assert!(r1.converged);
        let r2 = solve_min_power(&antipodal(), 2.0, &cfg, None).unwrap();
        assert!((r2.power - 2.0).abs() < 1e-6);
        assert!((r1.z[0] + r1.z[1]).norm() < 1e-6);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        c.restarts = 0;
        c.tol = 0.0;
        match c.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
        let parsed: SolverConfig = serde_json::from_str("{\"restarts\": 2}").unwrap();
        assert_eq!(parsed.max_iters, 5000);
        assert_eq!(parsed.restarts, 2);
    }

    #[test]
    fn deterministic_and_warm_monotone() {
        let h = CMatrix::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64 * 0.3 + 0.1, i as f64 - 0.2));
        let inst = build_distance_forms(&h, &LayoutArgs::Fdss { n_codewords: 4 }).unwrap();
        let cfg = SolverConfig { restarts: 2, max_iters: 300, ..Default::default() };
        let a = solve_min_power(&inst, 1.0, &cfg, None).unwrap();
        let b = solve_min_power(&inst, 1.0, &cfg, None).unwrap();
        assert_eq!(a, b);
        let warm = a.z.clone();
        let c = solve_min_power(&inst, 1.0, &cfg.with_seed(99), Some(&warm)).unwrap();
        assert!(c.power <= a.power * (1.0 + 1e-12));
    }

    #[test]
    fn trace_is_recorded() {
        let cfg = SolverConfig { record_trace: true, restarts: 1, ..Default::default() };
        let r = solve_min_power(&antipodal(), 1.0, &cfg, None).unwrap();
        assert!(!r.trace.is_empty());
        let csv = trace_csv(&r.trace);
        assert!(csv.starts_with("iter,objective,min_form\n"));
        assert_eq!(csv.lines().count(), r.trace.len() + 1);
    }

    #[test]
    fn mser_single_pair_is_antipodal() {
        let cfg = SolverConfig { restarts: 2, ..Default::default() };
        let r = solve_mser(&antipodal(), 10.0, 1.0, &cfg, None).unwrap();
        assert!((r.power - 1.0).abs() < 1e-9);
        assert!((r.z[0] + r.z[1]).norm() < 1e-3);
        assert!((r.objective - 0.5 * (-10.0f64 * 2.0 / 4.0).exp()).abs() < 1e-6);
    }

    #[test]
    fn bound_limits() {
        let pairs = crate::qcqp::pair_order(4);
        let zero = vec![0.0; 6];
        assert!((union_bound_from_values(&zero, 4, 0.0) - 1.5).abs() < 1e-15);
        let base = 2.0 * (1.0 - std::f64::consts::LOG2_E);
        assert!((mi_bound_from_values(&zero, &pairs, 4, 0.0, 2) - base).abs() < 1e-12);
        let far = vec![1e9; 6];
        assert!((mi_bound_from_values(&far, &pairs, 4, 1.0, 2) - (2.0 + base)).abs() < 1e-12);
    }
}

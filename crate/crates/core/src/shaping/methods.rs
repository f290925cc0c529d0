//! The shaping methods.

use rayon::prelude::*;

use super::{
    enumerate_allocations_weighted, normalize_power, normalized_min_distance, product_constellation,
    HybridParts, Method, ShapingCodebook, ShapingStats, SymbolAllocation,
};
use crate::precoding::AnalogCodebook;
use crate::qcqp::{
    build_distance_forms, solve_min_power, solve_mmi, solve_mser, LayoutArgs, QcqpInstance,
    SolverConfig, SolverResult,
};
use crate::seed;
use crate::{CMatrix, CVector, Error, Result};

/// Unprecoded symbol sets per beamspace for one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSymbolSets {
    pub allocation: SymbolAllocation,
    pub per_beamspace: Vec<Vec<CVector>>,
    pub constellation_tags: Vec<String>,
}

impl CandidateSymbolSets {
    pub fn from_allocation(allocation: &SymbolAllocation, n_rf: usize) -> Self {
        let mut per = Vec::with_capacity(allocation.sizes.len());
        let mut tags = Vec::with_capacity(allocation.sizes.len());
        for &n in &allocation.sizes {
            if n == 0 {
                per.push(Vec::new());
                tags.push(String::from("-"));
                continue;
            }
            let bits = n.trailing_zeros();
            per.push(product_constellation(bits, n_rf));
            let orders: Vec<String> = super::stream_bits(bits, n_rf)
                .into_iter()
                .map(|b| format!("{}", 1u64 << b))
                .collect();
            tags.push(orders.join("x"));
        }
        CandidateSymbolSets { allocation: allocation.clone(), per_beamspace: per, constellation_tags: tags }
    }

    /// `(beamspace, symbol)` in label order.
    pub fn codeword_list(&self) -> Vec<(usize, CVector)> {
        self.per_beamspace
            .iter()
            .enumerate()
            .flat_map(|(k, set)| set.iter().map(move |s| (k, s.clone())))
            .collect()
    }

    pub fn labels(&self) -> Vec<(usize, usize)> {
        self.per_beamspace
            .iter()
            .enumerate()
            .flat_map(|(k, set)| (0..set.len()).map(move |l| (k, l)))
            .collect()
    }
}

/// Candidate sets for the top `cap` allocations, ranked with the beamspace energies.
pub fn candidate_sets(analog: &AnalogCodebook, n_bits: usize, cap: usize) -> Result<Vec<CandidateSymbolSets>> {
    let n = codeword_count(n_bits)?;
    let allocs = enumerate_allocations_weighted(n, &analog.energies, cap)?;
    Ok(allocs
        .iter()
        .map(|a| CandidateSymbolSets::from_allocation(a, analog.n_rf()))
        .collect())
}

fn codeword_count(n_bits: usize) -> Result<usize> {
    if n_bits == 0 || n_bits >= usize::BITS as usize {
        return Err(Error::invalid(format!("n_bits = {n_bits} is out of range")));
    }
    Ok(1usize << n_bits)
}

fn check_analog(h: &CMatrix, analog: &AnalogCodebook) -> Result<()> {
    if analog.is_empty() {
        return Err(Error::invalid("analog codebook is empty"));
    }
    if analog.n_t() != h.ncols() {
        return Err(Error::mismatch(format!(
            "analog precoders have {} rows, channel has {} columns",
            analog.n_t(),
            h.ncols()
        )));
    }
    Ok(())
}

/// `d_min` of the codewords of `z` at unit average power.
fn normalized_from(inst: &QcqpInstance, res: &SolverResult) -> f64 {
    let n = inst.n_codewords as f64;
    if res.power > 0.0 {
        (res.min_form_value * n / res.power).sqrt()
    } else {
        0.0
    }
}

fn finish(
    method: Method,
    n_bits: usize,
    h: &CMatrix,
    vectors: Vec<CVector>,
    labels: Vec<(usize, usize)>,
    hybrid: Option<HybridParts>,
    stats: ShapingStats,
) -> Result<ShapingCodebook> {
    let raw = ShapingCodebook {
        method,
        n_bits,
        power: 0.0,
        vectors,
        labels,
        d_min_design: None,
        hybrid,
        stats,
    };
    let mut book = normalize_power(&raw, 1.0)?;
    book.d_min_design = Some(super::min_distance(&book, h)?);
    Ok(book)
}

/// Index of the largest value; the first one wins ties.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn identity_digital(analog: &AnalogCodebook) -> Vec<CMatrix> {
    let n_rf = analog.n_rf();
    vec![CMatrix::identity(n_rf, n_rf); analog.len()]
}

/// Joint symbol-set optimization, grown one codeword at a time.
pub fn joss(h: &CMatrix, analog: &AnalogCodebook, n_bits: usize, cfg: &SolverConfig) -> Result<ShapingCodebook> {
    let n = codeword_count(n_bits)?;
    check_analog(h, analog)?;
    cfg.validate()?;
    let k = analog.len();
    let n_rf = analog.n_rf();
    let mut iterations = 0;
    let mut calls = 0;

    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect();
    let results: Vec<Result<(f64, CVector, usize, bool)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(idx, &(a, b))| {
            let seq = vec![analog.analog[a].clone(), analog.analog[b].clone()];
            let inst = build_distance_forms(h, &LayoutArgs::Joss { analog_sequence: seq })?;
            let r = solve_min_power(&inst, 1.0, &cfg.with_seed(seed::mix2(cfg.seed, 2, idx as u64)), None)?;
            Ok((normalized_from(&inst, &r), r.z, r.iterations, r.converged))
        })
        .collect();
    let results: Vec<(f64, CVector, usize, bool)> = results.into_iter().collect::<Result<_>>()?;
    calls += results.len();
    iterations += results.iter().map(|r| r.2).sum::<usize>();
    let scores: Vec<f64> = results.iter().map(|r| if r.3 { r.0 } else { f64::NAN }).collect();
    let best = argmax(&scores).ok_or(Error::ShapingFailure {
        step: 2,
        message: "no feasible two-codeword candidate".into(),
    })?;
    let mut seq = vec![pairs[best].0, pairs[best].1];
    let mut z = results[best].1.clone();
    let mut steps = 0;

    for t in 3..=n {
        let mean_energy = z.norm_squared() / z.len() as f64;
        let ext: Vec<Result<(f64, CVector, usize, bool)>> = (0..k)
            .into_par_iter()
            .map(|cand| {
                let mut s = seq.clone();
                s.push(cand);
                let mats: Vec<CMatrix> = s.iter().map(|&i| analog.analog[i].clone()).collect();
                let inst = build_distance_forms(h, &LayoutArgs::Joss { analog_sequence: mats })?;
                let sd = seed::mix2(cfg.seed, t as u64, cand as u64);
                let mut rng = seed::rng(sd);
                let mut warm = CVector::zeros(z.len() + n_rf);
                warm.rows_mut(0, z.len()).copy_from(&z);
                for r in 0..n_rf {
                    warm[z.len() + r] = seed::complex_gaussian(&mut rng, mean_energy);
                }
                let res = solve_min_power(&inst, 1.0, &cfg.with_seed(sd), Some(&warm))?;
                Ok((normalized_from(&inst, &res), res.z, res.iterations, res.converged))
            })
            .collect();
        let ext: Vec<(f64, CVector, usize, bool)> = ext.into_iter().collect::<Result<_>>()?;
        calls += ext.len();
        iterations += ext.iter().map(|r| r.2).sum::<usize>();
        let scores: Vec<f64> = ext.iter().map(|r| if r.3 { r.0 } else { f64::NAN }).collect();
        let best = argmax(&scores).ok_or_else(|| Error::ShapingFailure {
            step: t,
            message: format!("no feasible extension; partial precoder sequence {seq:?}"),
        })?;
        seq.push(best);
        z = ext[best].1.clone();
        steps += 1;
    }

    let mut counts = vec![0usize; k];
    let mut labels = Vec::with_capacity(n);
    let mut symbols = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for (i, &b) in seq.iter().enumerate() {
        labels.push((b, counts[b]));
        counts[b] += 1;
        let s = z.rows(i * n_rf, n_rf).into_owned();
        vectors.push(&analog.analog[b] * &s);
        symbols.push(s);
    }
    let stats = ShapingStats {
        iterations,
        candidates: calls,
        extension_steps: steps,
        best_candidate_d_min: None,
        allocation: Some(SymbolAllocation { sizes: counts }),
    };
    let hybrid = HybridParts { analog: analog.analog.clone(), digital: identity_digital(analog), symbols };
    finish(Method::Joss, n_bits, h, vectors, labels, Some(hybrid), stats)
}

#[derive(Clone, Copy, PartialEq)]
enum Refinement {
    Full,
    Diagonal,
}

/// Companion digital precoders laid out as the refinement variable.
fn companion_warm(analog: &AnalogCodebook, mode: Refinement) -> CVector {
    let n_rf = analog.n_rf();
    let mut q = Vec::new();
    for bb in &analog.companion_digital {
        match mode {
            Refinement::Full => {
                for r in 0..n_rf {
                    for c in 0..n_rf {
                        q.push(bb[(r, c)]);
                    }
                }
            }
            Refinement::Diagonal => q.extend((0..n_rf).map(|r| bb[(r, r)])),
        }
    }
    CVector::from_vec(q)
}

/// Digital precoders recovered from the refinement variable.
fn digital_from(q: &CVector, k: usize, n_rf: usize, mode: Refinement) -> Vec<CMatrix> {
    (0..k)
        .map(|b| match mode {
            Refinement::Full => {
                CMatrix::from_fn(n_rf, n_rf, |r, c| q[b * n_rf * n_rf + r * n_rf + c])
            }
            Refinement::Diagonal => CMatrix::from_diagonal(&q.rows(b * n_rf, n_rf).into_owned()),
        })
        .collect()
}

fn refine(
    h: &CMatrix,
    analog: &AnalogCodebook,
    n_bits: usize,
    candidates: &[CandidateSymbolSets],
    cfg: &SolverConfig,
    mode: Refinement,
) -> Result<ShapingCodebook> {
    let n = codeword_count(n_bits)?;
    check_analog(h, analog)?;
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate symbol sets"));
    }
    if let Some(c) = candidates.iter().find(|c| c.allocation.total() != n) {
        return Err(Error::invalid(format!(
            "candidate allocation {:?} does not sum to {n}",
            c.allocation.sizes
        )));
    }
    let warm = companion_warm(analog, mode);
    let outcomes: Vec<Result<(f64, f64, CVector, usize)>> = candidates
        .par_iter()
        .enumerate()
        .map(|(j, cand)| {
            let symbols = cand.codeword_list();
            let args = match mode {
                Refinement::Full => LayoutArgs::Fpss { analog: analog.analog.clone(), symbols },
                Refinement::Diagonal => LayoutArgs::Dpss { analog: analog.analog.clone(), symbols },
            };
            let inst = build_distance_forms(h, &args)?;
            let start = normalized_min_distance(&inst.codewords(&warm)?, h)?;
            let res = solve_min_power(&inst, 1.0, &cfg.with_seed(seed::mix(cfg.seed, j as u64)), Some(&warm))?;
            let refined = if res.converged { normalized_from(&inst, &res) } else { 0.0 };
            // the start point is itself a candidate answer
            if refined >= start {
                Ok((refined, start, res.z, res.iterations))
            } else {
                Ok((start, start, warm.clone(), res.iterations))
            }
        })
        .collect();
    let outcomes: Vec<(f64, f64, CVector, usize)> = outcomes.into_iter().collect::<Result<_>>()?;
    let scores: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let best = argmax(&scores).ok_or(Error::ShapingFailure { step: 0, message: "no usable candidate".into() })?;
    if !(scores[best] > 0.0) {
        return Err(Error::ShapingFailure { step: 0, message: "every candidate collapsed".into() });
    }
    let best_start = outcomes.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let cand = &candidates[best];
    let q = &outcomes[best].2;
    let digital = digital_from(q, analog.len(), analog.n_rf(), mode);
    let list = cand.codeword_list();
    let symbols: Vec<CVector> = list.iter().map(|(_, s)| s.clone()).collect();
    let labels = cand.labels();
    let hybrid = HybridParts { analog: analog.analog.clone(), digital, symbols };
    let vectors = hybrid.reconstruct(&labels);
    let stats = ShapingStats {
        iterations: outcomes.iter().map(|o| o.3).sum(),
        candidates: candidates.len(),
        extension_steps: 0,
        best_candidate_d_min: Some(best_start),
        allocation: Some(cand.allocation.clone()),
    };
    let method = match mode {
        Refinement::Full => Method::Fpss,
        Refinement::Diagonal => Method::Dpss,
    };
    finish(method, n_bits, h, vectors, labels, Some(hybrid), stats)
}

/// Refine full digital precoders per beamspace for each candidate.
pub fn fpss(
    h: &CMatrix,
    analog: &AnalogCodebook,
    n_bits: usize,
    candidates: &[CandidateSymbolSets],
    cfg: &SolverConfig,
) -> Result<ShapingCodebook> {
    refine(h, analog, n_bits, candidates, cfg, Refinement::Full)
}

/// Refine diagonal digital precoders per beamspace for each candidate.
pub fn dpss(
    h: &CMatrix,
    analog: &AnalogCodebook,
    n_bits: usize,
    candidates: &[CandidateSymbolSets],
    cfg: &SolverConfig,
) -> Result<ShapingCodebook> {
    refine(h, analog, n_bits, candidates, cfg, Refinement::Diagonal)
}

fn fdss_solve(h: &CMatrix, n_bits: usize, cfg: &SolverConfig) -> Result<(QcqpInstance, SolverResult)> {
    let n = codeword_count(n_bits)?;
    cfg.validate()?;
    let inst = build_distance_forms(h, &LayoutArgs::Fdss { n_codewords: n })?;
    let res = solve_min_power(&inst, 1.0, cfg, None)?;
    if !res.converged {
        return Err(Error::ShapingFailure { step: 0, message: "fully digital solve found no separated point".into() });
    }
    Ok((inst, res))
}

fn fdss_book(method: Method, h: &CMatrix, n_bits: usize, inst: &QcqpInstance, res: &SolverResult) -> Result<ShapingCodebook> {
    let vectors = inst.codewords(&res.z)?;
    let n = vectors.len();
    let stats = ShapingStats {
        iterations: res.iterations,
        candidates: 1,
        allocation: Some(SymbolAllocation { sizes: vec![n] }),
        ..Default::default()
    };
    finish(method, n_bits, h, vectors, (0..n).map(|i| (0, i)).collect(), None, stats)
}

/// Unconstrained codewords: the fully digital bound.
pub fn fdss(h: &CMatrix, n_bits: usize, cfg: &SolverConfig) -> Result<ShapingCodebook> {
    let (inst, res) = fdss_solve(h, n_bits, cfg)?;
    fdss_book(Method::Fdss, h, n_bits, &inst, &res)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Union-bound SER at SNR `rho` (linear).
    Mser { rho: f64 },
    /// Mutual-information lower bound at SNR `rho` with `n_r` receive antennas.
    Mmi { rho: f64, n_r: usize },
}

/// Fully digital codebook for a bound criterion, started from the max-min solution.
pub fn fdss_criterion(h: &CMatrix, n_bits: usize, criterion: Criterion, cfg: &SolverConfig) -> Result<ShapingCodebook> {
    let (inst, mmed) = fdss_solve(h, n_bits, cfg)?;
    let budget = inst.n_codewords as f64;
    let (res, method) = match criterion {
        Criterion::Mser { rho } => (solve_mser(&inst, rho, budget, cfg, Some(&mmed.z))?, Method::FdssMser),
        Criterion::Mmi { rho, n_r } => (solve_mmi(&inst, rho, n_r, budget, cfg, Some(&mmed.z))?, Method::FdssMmi),
    };
    let mut book = fdss_book(method, h, n_bits, &inst, &res)?;
    book.stats.iterations += mmed.iterations;
    Ok(book)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Bbss,
    Ubmss,
    Amss,
}

/// Unrefined codebook `x = F_RF^k F_BB^k s` for one candidate.
fn companion_book(analog: &AnalogCodebook, cand: &CandidateSymbolSets) -> (Vec<CVector>, HybridParts) {
    let labels = cand.labels();
    let list = cand.codeword_list();
    let hybrid = HybridParts {
        analog: analog.analog.clone(),
        digital: analog.companion_digital.clone(),
        symbols: list.into_iter().map(|(_, s)| s).collect(),
    };
    (hybrid.reconstruct(&labels), hybrid)
}

/// Fixed-constellation baselines. `cap` bounds the AMSS allocation search.
pub fn baseline(
    h: &CMatrix,
    analog: &AnalogCodebook,
    n_bits: usize,
    mode: BaselineMode,
    cap: usize,
) -> Result<ShapingCodebook> {
    let n = codeword_count(n_bits)?;
    check_analog(h, analog)?;
    let k = analog.len();
    let n_rf = analog.n_rf();
    let (cand, method, best_start, evaluated) = match mode {
        BaselineMode::Bbss => (
            CandidateSymbolSets::from_allocation(&SymbolAllocation::single(n, k), n_rf),
            Method::Bbss,
            None,
            1,
        ),
        BaselineMode::Ubmss => (
            CandidateSymbolSets::from_allocation(&SymbolAllocation::uniform(n, k)?, n_rf),
            Method::Ubmss,
            None,
            1,
        ),
        BaselineMode::Amss => {
            let cands = candidate_sets(analog, n_bits, cap)?;
            let scores: Vec<f64> = cands
                .par_iter()
                .map(|c| {
                    let (v, _) = companion_book(analog, c);
                    normalized_min_distance(&v, h).unwrap_or(0.0)
                })
                .collect();
            let best = argmax(&scores).ok_or(Error::DegenerateCodebook)?;
            let count = cands.len();
            (cands[best].clone(), Method::Amss, Some(scores[best]), count)
        }
    };
    let (vectors, hybrid) = companion_book(analog, &cand);
    let stats = ShapingStats {
        iterations: 0,
        candidates: evaluated,
        extension_steps: 0,
        best_candidate_d_min: best_start,
        allocation: Some(cand.allocation.clone()),
    };
    finish(method, n_bits, h, vectors, cand.labels(), Some(hybrid), stats)
}

//! Link-level evaluation of codebooks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::qcqp::{mi_bound_from_values, pair_order, union_bound_from_values};
use crate::seed;
use crate::shaping::ShapingCodebook;
use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub snr_db_list: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dac_bits: Option<u32>,
    #[serde(default)]
    pub csi_eta: Option<f64>,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.trials < 1 {
            bad.push("eval.trials must be at least 1".to_string());
        }
        if self.snr_db_list.is_empty() || self.snr_db_list.iter().any(|s| !s.is_finite()) {
            bad.push("eval.snr_db_list must be a nonempty list of finite values".to_string());
        }
        if self.dac_bits == Some(0) {
            bad.push("eval.dac_bits must be at least 1".to_string());
        }
        if let Some(eta) = self.csi_eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                bad.push("eval.csi_eta must be nonnegative".to_string());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerPoint {
    pub snr_db: f64,
    pub ser: f64,
    pub trials: usize,
    pub errors: usize,
    pub union_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerCurve {
    pub method: String,
    pub points: Vec<SerPoint>,
}

/// Noise-free received points `H x_i`, for repeated detection.
pub struct Detector {
    points: Vec<CVector>,
}

impl Detector {
    pub fn new(h: &CMatrix, book: &ShapingCodebook) -> Result<Self> {
        if let Some(v) = book.vectors.iter().find(|v| v.len() != h.ncols()) {
            return Err(Error::mismatch(format!(
                "codeword length {} does not match channel width {}",
                v.len(),
                h.ncols()
            )));
        }
        Ok(Detector { points: book.vectors.iter().map(|x| h * x).collect() })
    }

    /// Nearest received point; the lowest index wins ties.
    pub fn detect(&self, y: &CVector) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// `argmin_i ||y - H x_i||`, ties to the lowest index.
pub fn ml_detect(y: &CVector, h: &CMatrix, book: &ShapingCodebook) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, x) in book.vectors.iter().enumerate() {
        let d = (y - h * x).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn pair_distances(book: &ShapingCodebook, h: &CMatrix) -> Vec<f64> {
    let y: Vec<CVector> = book.vectors.iter().map(|x| h * x).collect();
    pair_order(y.len())
        .into_iter()
        .map(|(i, j)| (&y[i] - &y[j]).norm_squared())
        .collect()
}

fn effective_rho(book: &ShapingCodebook, rho: f64) -> f64 {
    if book.power > 0.0 {
        rho / book.power
    } else {
        rho
    }
}

/// Pairwise union bound `(1/2N) Σ_i Σ_{i'≠i} exp(-(ρ/4P) ||H(x_i - x_i')||²)`.
pub fn ser_union_bound(book: &ShapingCodebook, h: &CMatrix, rho: f64) -> f64 {
    let f = pair_distances(book, h);
    union_bound_from_values(&f, book.len(), effective_rho(book, rho))
}

/// Mutual-information lower bound in bits per channel use.
pub fn mi_lower_bound(book: &ShapingCodebook, h: &CMatrix, rho: f64, n_r: usize) -> f64 {
    let f = pair_distances(book, h);
    let pairs = pair_order(book.len());
    mi_bound_from_values(&f, &pairs, book.len(), effective_rho(book, rho), n_r)
}

/// Monte-Carlo SER under ML detection with `σ² = P / ρ`.
pub fn monte_carlo_ser(book: &ShapingCodebook, h: &CMatrix, cfg: &EvalConfig, method: &str) -> Result<SerCurve> {
    cfg.validate()?;
    let points = cfg
        .snr_db_list
        .iter()
        .enumerate()
        .map(|(si, &snr_db)| ser_point(book, h, snr_db, si, cfg.trials, cfg.seed))
        .collect::<Result<_>>()?;
    Ok(SerCurve { method: method.to_string(), points })
}

/// One SNR point; trial `t` draws from `mix2(seed, snr_index, t)`.
pub fn ser_point(
    book: &ShapingCodebook,
    h: &CMatrix,
    snr_db: f64,
    snr_index: usize,
    trials: usize,
    seed_base: u64,
) -> Result<SerPoint> {
    if book.len() < 2 {
        return Err(Error::invalid("SER needs at least two codewords"));
    }
    if trials < 1 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let det = Detector::new(h, book)?;
    let n = book.len();
    let n_r = h.nrows();
    let p = if book.power > 0.0 { book.power } else { book.average_power() };
    let rho = db_to_linear(snr_db);
    let var = p / rho;
    let errors: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::mix2(seed_base, snr_index as u64, t as u64));
            let sent = rng.random_range(0..n);
            let mut y = det.points[sent].clone();
            for r in 0..n_r {
                y[r] += seed::complex_gaussian(&mut rng, var);
            }
            usize::from(det.detect(&y) != sent)
        })
        .sum();
    Ok(SerPoint {
        snr_db,
        ser: errors as f64 / trials as f64,
        trials,
        errors,
        union_bound: ser_union_bound(book, h, rho),
    })
}

/// Empirical CDF of per-channel d_min values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DminCdf {
    /// `(channel index, d_min)`, sorted by d_min then index.
    pub samples: Vec<(usize, f64)>,
    /// Channels whose shaping failed.
    pub failures: Vec<usize>,
}

impl DminCdf {
    /// `(d_min, cumulative fraction)` over the successful channels.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.samples.len() as f64;
        self.samples
            .iter()
            .enumerate()
            .map(|(i, &(_, d))| (d, (i + 1) as f64 / n))
            .collect()
    }

    pub fn median(&self) -> Option<f64> {
        let n = self.samples.len();
        if n == 0 {
            return None;
        }
        Some(if n % 2 == 1 {
            self.samples[n / 2].1
        } else {
            0.5 * (self.samples[n / 2 - 1].1 + self.samples[n / 2].1)
        })
    }
}

/// Run `runner` on every channel and collect its d_min values.
pub fn min_distance_cdf<F>(ensemble: &[ChannelRealization], runner: F) -> Result<DminCdf>
where
    F: Fn(usize, &ChannelRealization) -> Result<f64> + Sync,
{
    if ensemble.is_empty() {
        return Err(Error::invalid("channel ensemble is empty"));
    }
    let outcomes: Vec<Result<f64>> = ensemble.par_iter().enumerate().map(|(i, c)| runner(i, c)).collect();
    Ok(cdf_from_outcomes(outcomes))
}

pub fn cdf_from_outcomes(outcomes: Vec<Result<f64>>) -> DminCdf {
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(d) => samples.push((i, d)),
            Err(_) => failures.push(i),
        }
    }
    samples.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    DminCdf { samples, failures }
}

/// Uniform mid-rise quantization of every real and imaginary component.
///
/// The clipping range is `±3σ_x` with `σ_x` the RMS component value over the
/// book; the result is scaled back to the original power.
pub fn quantize_dac(book: &ShapingCodebook, bits: u32) -> Result<ShapingCodebook> {
    if bits < 1 || bits > 30 {
        return Err(Error::invalid(format!("DAC resolution {bits} is out of range 1..=30")));
    }
    let count: usize = book.vectors.iter().map(|v| 2 * v.len()).sum();
    let energy: f64 = book.vectors.iter().map(|v| v.norm_squared()).sum();
    if !(energy > 0.0) || count == 0 {
        return Err(Error::DegenerateCodebook);
    }
    let sigma = (energy / count as f64).sqrt();
    let levels = 1i64 << bits;
    let step = 6.0 * sigma / levels as f64;
    let q = |v: f64| {
        let idx = ((v / step).floor() as i64).clamp(-levels / 2, levels / 2 - 1);
        (idx as f64 + 0.5) * step
    };
    let mut out = book.clone();
    for v in &mut out.vectors {
        for c in v.iter_mut() {
            *c = C64::new(q(c.re), q(c.im));
        }
    }
    out.hybrid = None;
    out.d_min_design = None;
    let target = if book.power > 0.0 { book.power } else { book.average_power() };
    let mut n = crate::shaping::normalize_power(&out, target)?;
    n.d_min_design = None;
    Ok(n)
}

/// Binomial standard deviation of an SER estimate.
pub fn binomial_sd(p: f64, trials: usize) -> f64 {
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaping::{min_distance, Method, ShapingStats};

    fn book(vals: &[(f64, f64)], power: f64) -> ShapingCodebook {
        ShapingCodebook {
            method: Method::Fdss,
            n_bits: 2,
            power,
            vectors: vals.iter().map(|&(a, b)| CVector::from_vec(vec![C64::new(a, 0.0), C64::new(b, 0.0)])).collect(),
            labels: (0..vals.len()).map(|i| (0, i)).collect(),
            d_min_design: None,
            hybrid: None,
            stats: ShapingStats::default(),
        }
    }

    fn qpsk() -> ShapingCodebook {
        book(&[(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)], 1.0)
    }

    #[test]
    fn detection_rules() {
        let b = qpsk();
        let h = CMatrix::identity(2, 2);
        assert_eq!(ml_detect(&b.vectors[3], &h, &b), 3);
        let mid = (&b.vectors[0] + &b.vectors[2]) * C64::new(0.5, 0.0);
        assert_eq!(ml_detect(&mid, &h, &b), 0);
        let det = Detector::new(&h, &b).unwrap();
        assert_eq!(det.detect(&mid), 0);
        let h2 = h.scale(3.0);
        let y = &b.vectors[2] * C64::new(3.0, 0.0);
        assert_eq!(ml_detect(&y, &h2, &b), 2);
    }

    #[test]
    fn bounds_limits() {
        let b = qpsk();
        let h = CMatrix::identity(2, 2);
        assert_eq!(ser_union_bound(&b, &h, 0.0), 1.5);
        assert!(ser_union_bound(&b, &h, 1e6) < 1e-100);
        let base = 2.0 * (1.0 - std::f64::consts::LOG2_E);
        assert!((mi_lower_bound(&b, &h, 0.0, 2) - base).abs() < 1e-12);
        assert!((mi_lower_bound(&b, &h, 1e6, 2) - (2.0 + base)).abs() < 1e-6);
        let two = book(&[(1.0, 0.0), (-1.0, 0.0)], 1.0);
        let rho = 3.0;
        assert!((ser_union_bound(&two, &h, rho) - 0.5 * (-rho * 4.0 / 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn ser_is_deterministic_and_clean_at_high_snr() {
        let b = qpsk();
        let h = CMatrix::identity(2, 2);
        let cfg = EvalConfig { snr_db_list: vec![0.0, 60.0], trials: 10_000, seed: 9, dac_bits: None, csi_eta: None };
        let a = monte_carlo_ser(&b, &h, &cfg, "x").unwrap();
        let c = monte_carlo_ser(&b, &h, &cfg, "x").unwrap();
        assert_eq!(a, c);
        assert_eq!(a.points[1].errors, 0);
        assert!(a.points[0].errors > 0);
        for p in &a.points {
            assert!(p.ser <= p.union_bound + 3.0 * binomial_sd(p.union_bound.min(1.0), p.trials));
        }
    }

    #[test]
    fn dac_levels() {
        let b = book(&[(0.9, -0.2), (-0.4, 0.1), (0.3, 0.7), (-0.8, -0.6)], 1.0);
        let b = crate::shaping::normalize_power(&b, 1.0).unwrap();
        let h = CMatrix::identity(2, 2);
        let fine = quantize_dac(&b, 16).unwrap();
        let d0 = min_distance(&b, &h).unwrap();
        assert!((min_distance(&fine, &h).unwrap() - d0).abs() < 1e-3 * d0);
        let one = quantize_dac(&b, 1).unwrap();
        // unit power over two complex entries: RMS component 0.5
        let sigma = 0.5;
        for v in &one.vectors {
            for c in v.iter() {
                assert!((c.re.abs() - sigma).abs() < 1e-12);
                assert!((c.im.abs() - sigma).abs() < 1e-12);
            }
        }
        assert!(quantize_dac(&b, 0).is_err());
        assert!(one.d_min_design.is_none());
    }

    #[test]
    fn cdf_sorting() {
        let cdf = cdf_from_outcomes(vec![Ok(2.0), Err(Error::DegenerateCodebook), Ok(1.0), Ok(1.0)]);
        assert_eq!(cdf.samples, vec![(2, 1.0), (3, 1.0), (0, 2.0)]);
        assert_eq!(cdf.failures, vec![1]);
        assert_eq!(cdf.points().last().unwrap().1, 1.0);
        assert_eq!(cdf.median(), Some(1.0));
    }
}

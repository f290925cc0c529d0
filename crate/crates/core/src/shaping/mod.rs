//! Transmit codebooks: JOSS, FPSS, DPSS, FDSS and the fixed-constellation
//! baselines, plus the distance and power utilities they share.

mod allocation;
mod constellation;
mod methods;

pub use allocation::{enumerate_allocations, enumerate_allocations_weighted, uniform_count, SymbolAllocation};
pub use constellation::{product_constellation, qam, stream_bits};
pub use methods::{baseline, candidate_sets, CandidateSymbolSets, dpss, fdss, fdss_criterion, fpss, joss, BaselineMode, Criterion};

use serde::{Deserialize, Serialize};

use crate::io;
use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Joss,
    Fpss,
    Dpss,
    Fdss,
    FdssMser,
    FdssMmi,
    Bbss,
    Ubmss,
    Amss,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Joss => "joss",
            Method::Fpss => "fpss",
            Method::Dpss => "dpss",
            Method::Fdss => "fdss",
            Method::FdssMser => "fdss_mser",
            Method::FdssMmi => "fdss_mmi",
            Method::Bbss => "bbss",
            Method::Ubmss => "ubmss",
            Method::Amss => "amss",
        }
    }

    /// Whether the method needs the analog codebook.
    pub fn is_hybrid(&self) -> bool {
        !matches!(self, Method::Fdss | Method::FdssMser | Method::FdssMmi)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Per-beamspace analog and digital precoders plus the unprecoded symbol of
/// each codeword, so that `x_i = analog[k] * digital[k] * symbols[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridParts {
    pub analog: Vec<CMatrix>,
    pub digital: Vec<CMatrix>,
    pub symbols: Vec<CVector>,
}

impl HybridParts {
    pub fn reconstruct(&self, labels: &[(usize, usize)]) -> Vec<CVector> {
        labels
            .iter()
            .zip(&self.symbols)
            .map(|(&(k, _), s)| &self.analog[k] * (&self.digital[k] * s))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapingStats {
    pub iterations: usize,
    /// Solver calls or candidate evaluations.
    pub candidates: usize,
    /// Recursion steps after the two-codeword initialization (JOSS).
    pub extension_steps: usize,
    /// Best design-channel d_min among unrefined candidates (FPSS/DPSS/AMSS).
    pub best_candidate_d_min: Option<f64>,
    pub allocation: Option<SymbolAllocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingCodebook {
    pub method: Method,
    pub n_bits: usize,
    pub power: f64,
    #[serde(with = "io::cvectors")]
    pub vectors: Vec<CVector>,
    /// `(beamspace, symbol index within the beamspace)` per codeword.
    pub labels: Vec<(usize, usize)>,
    #[serde(default)]
    pub d_min_design: Option<f64>,
    #[serde(skip)]
    pub hybrid: Option<HybridParts>,
    #[serde(skip)]
    pub stats: ShapingStats,
}

impl ShapingCodebook {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        average_power(&self.vectors)
    }

    /// Set sizes per beamspace recovered from the labels.
    pub fn allocation(&self, k_spaces: usize) -> SymbolAllocation {
        let k = self
            .labels
            .iter()
            .map(|l| l.0 + 1)
            .max()
            .unwrap_or(0)
            .max(k_spaces);
        let mut sizes = vec![0; k];
        for &(b, _) in &self.labels {
            sizes[b] += 1;
        }
        SymbolAllocation { sizes }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let book: ShapingCodebook = io::read_json(path)?;
        if book.labels.len() != book.vectors.len() {
            return Err(Error::invalid("codebook labels and vectors differ in count"));
        }
        Ok(book)
    }
}

pub fn average_power(vectors: &[CVector]) -> f64 {
    vectors.iter().map(|v| v.norm_squared()).sum::<f64>() / vectors.len().max(1) as f64
}

/// Smallest received distance `min ||H x_i - H x_i'||` over all pairs.
pub fn min_distance_vectors(vectors: &[CVector], h: &CMatrix) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::invalid("min distance needs at least two codewords"));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != h.ncols()) {
        return Err(Error::mismatch(format!(
            "codeword length {} does not match channel width {}",
            v.len(),
            h.ncols()
        )));
    }
    let y: Vec<CVector> = vectors.iter().map(|x| h * x).collect();
    let mut best = f64::INFINITY;
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            best = best.min((&y[i] - &y[j]).norm_squared());
        }
    }
    Ok(best.sqrt())
}

pub fn min_distance(book: &ShapingCodebook, h: &CMatrix) -> Result<f64> {
    min_distance_vectors(&book.vectors, h)
}

/// d_min after scaling the codebook to unit average power.
pub fn normalized_min_distance(vectors: &[CVector], h: &CMatrix) -> Result<f64> {
    let p = average_power(vectors);
    if !(p > 0.0) {
        return Err(Error::DegenerateCodebook);
    }
    Ok(min_distance_vectors(vectors, h)? / p.sqrt())
}

/// Uniform scaling to average power `p`.
pub fn normalize_power(book: &ShapingCodebook, p: f64) -> Result<ShapingCodebook> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid("target power must be positive"));
    }
    let current = book.average_power();
    if !(current > 0.0) {
        return Err(Error::DegenerateCodebook);
    }
    let s = (p / current).sqrt();
    let mut out = book.clone();
    if s != 1.0 {
        let c = C64::new(s, 0.0);
        for v in &mut out.vectors {
            *v *= c;
        }
        if let Some(h) = &mut out.hybrid {
            for sym in &mut h.symbols {
                *sym *= c;
            }
        }
        out.d_min_design = out.d_min_design.map(|d| d * s);
    }
    out.power = p;
    Ok(out)
}

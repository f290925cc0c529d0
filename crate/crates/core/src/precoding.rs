//! Beamspace subspaces and their hybrid analog/digital factorizations.
//!
//! Every `N_RF`-subset of the channel's right singular vectors defines one
//! beamspace. Each beamspace is approximated by a unit-modulus analog
//! precoder times a small digital precoder, either by greedy atom selection
//! over an array-response dictionary (fully connected) or by per-subarray phase
//! extraction (partially connected).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::channel::{array_response, ArrayGeometry, ChannelMatrix, PathSet};
use crate::io;
use crate::linalg::{dominant_left_singular_vector, frobenius, least_squares, ThinSvd};
use crate::{CMatrix, Error, Result, C64};

/// Default dictionary grid: elevation x azimuth points.
pub const DEFAULT_GRID: (usize, usize) = (8, 16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    #[serde(alias = "fch")]
    FullyConnected,
    #[serde(alias = "pch")]
    PartiallyConnected,
}

impl Structure {
    pub fn tag(&self) -> &'static str {
        match self {
            Structure::FullyConnected => "fch",
            Structure::PartiallyConnected => "pch",
        }
    }
}

/// One orthonormal basis per `N_RF`-subset of the first `m` right singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSet {
    pub bases: Vec<CMatrix>,
    pub index_tuples: Vec<Vec<usize>>,
    /// Sum of the singular values behind each basis.
    pub energies: Vec<f64>,
}

impl SubspaceSet {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }
}

fn combinations(m: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, m: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < r - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, r, cur, out);
            cur.pop();
        }
    }
    rec(0, m, r, &mut cur, &mut out);
    out
}

fn basis_for(svd: &ThinSvd, tuple: &[usize]) -> CMatrix {
    let mut b = CMatrix::zeros(svd.v.nrows(), tuple.len());
    for (j, &c) in tuple.iter().enumerate() {
        b.set_column(j, &svd.v.column(c));
    }
    b
}

/// Bases ordered by descending singular-value sum, ties by index tuple.
pub fn enumerate_subspaces(chan: &ChannelMatrix, n_rf: usize) -> Result<SubspaceSet> {
    let m = chan.rank;
    if n_rf == 0 {
        return Err(Error::invalid("n_rf must be at least 1"));
    }
    if n_rf > m {
        return Err(Error::InfeasibleRank { requested: n_rf, rank: m });
    }
    let mut tuples = combinations(m, n_rf);
    let energy = |t: &[usize]| t.iter().map(|&i| chan.svd.sigma[i]).sum::<f64>();
    // stable sort keeps the lexicographic order among equal energies
    tuples.sort_by(|a, b| energy(b).partial_cmp(&energy(a)).unwrap_or(std::cmp::Ordering::Equal));
    Ok(subspaces_from_tuples(chan, tuples))
}

/// Bases for an explicit tuple order (used to align OFDM carriers).
pub fn subspaces_with_order(chan: &ChannelMatrix, tuples: &[Vec<usize>]) -> Result<SubspaceSet> {
    for t in tuples {
        if t.iter().any(|&i| i >= chan.rank) {
            return Err(Error::InfeasibleRank {
                requested: t.iter().max().map(|i| i + 1).unwrap_or(0),
                rank: chan.rank,
            });
        }
    }
    Ok(subspaces_from_tuples(chan, tuples.to_vec()))
}

fn subspaces_from_tuples(chan: &ChannelMatrix, tuples: Vec<Vec<usize>>) -> SubspaceSet {
    let bases = tuples.iter().map(|t| basis_for(&chan.svd, t)).collect();
    let energies = tuples
        .iter()
        .map(|t| t.iter().map(|&i| chan.svd.sigma[i]).sum())
        .collect();
    SubspaceSet { bases, index_tuples: tuples, energies }
}

/// Columns are unit-norm array responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub atoms: Arc<CMatrix>,
}

type GridKey = (usize, usize, u64, usize, usize);

fn grid_cache() -> &'static Mutex<HashMap<GridKey, Arc<CMatrix>>> {
    static CACHE: OnceLock<Mutex<HashMap<GridKey, Arc<CMatrix>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Dictionary {
    pub fn new(atoms: CMatrix) -> Self {
        Dictionary { atoms: Arc::new(atoms) }
    }

    /// Responses on a `g_theta x g_phi` grid of cell midpoints over
    /// `[0, π) x [0, 2π)`. Memoized per geometry and grid.
    pub fn upa_grid(geom: &ArrayGeometry, g_theta: usize, g_phi: usize) -> Result<Self> {
        geom.validate()?;
        let key = (geom.w1, geom.w2, geom.spacing_over_lambda.to_bits(), g_theta, g_phi);
        if let Some(hit) = grid_cache().lock().expect("dictionary cache poisoned").get(&key) {
            return Ok(Dictionary { atoms: hit.clone() });
        }
        let n = geom.elements();
        let mut atoms = CMatrix::zeros(n, g_theta * g_phi);
        for i in 0..g_theta {
            let theta = (i as f64 + 0.5) * std::f64::consts::PI / g_theta as f64;
            for j in 0..g_phi {
                let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / g_phi as f64;
                atoms.set_column(i * g_phi + j, &array_response(geom, theta, phi)?);
            }
        }
        let atoms = Arc::new(atoms);
        grid_cache()
            .lock()
            .expect("dictionary cache poisoned")
            .insert(key, atoms.clone());
        Ok(Dictionary { atoms })
    }

    /// Default grid followed by the exact departure responses of `paths`, if any.
    pub fn for_transmitter(geom: &ArrayGeometry, paths: Option<&PathSet>) -> Result<Self> {
        let grid = Self::upa_grid(geom, DEFAULT_GRID.0, DEFAULT_GRID.1)?;
        match paths {
            Some(p) => {
                let extra = p
                    .paths
                    .iter()
                    .map(|q| array_response(geom, q.aod_elevation, q.aod_azimuth))
                    .collect::<Result<Vec<_>>>()?;
                Ok(grid.extended(&extra))
            }
            None => Ok(grid),
        }
    }

    /// Default grid followed by the exact arrival responses of `paths`, if any.
    pub fn for_receiver(geom: &ArrayGeometry, paths: Option<&PathSet>) -> Result<Self> {
        let grid = Self::upa_grid(geom, DEFAULT_GRID.0, DEFAULT_GRID.1)?;
        match paths {
            Some(p) => {
                let extra = p
                    .paths
                    .iter()
                    .map(|q| array_response(geom, q.aoa_elevation, q.aoa_azimuth))
                    .collect::<Result<Vec<_>>>()?;
                Ok(grid.extended(&extra))
            }
            None => Ok(grid),
        }
    }

    /// Dictionary with `extra` atoms appended after the existing ones.
    pub fn extended(&self, extra: &[crate::CVector]) -> Self {
        let n = self.atoms.nrows();
        let base = self.atoms.ncols();
        let mut atoms = CMatrix::zeros(n, base + extra.len());
        atoms.view_mut((0, 0), (n, base)).copy_from(&*self.atoms);
        for (j, a) in extra.iter().enumerate() {
            atoms.set_column(base + j, a);
        }
        Dictionary::new(atoms)
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }
}

/// `F_RF * F_BB` approximation of one basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridFactor {
    pub f_rf: CMatrix,
    pub f_bb: CMatrix,
    pub residual: f64,
}

/// Analog + digital factorization shared by several carriers.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedFactor {
    pub f_rf: CMatrix,
    pub f_bb: Vec<CMatrix>,
    pub residuals: Vec<f64>,
}

impl SharedFactor {
    /// `sqrt(Σ_k residual_k²)`.
    pub fn total_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

/// Factorize one basis. Fully connected needs a dictionary.
pub fn decompose_hybrid(
    basis: &CMatrix,
    mode: Structure,
    dictionary: Option<&Dictionary>,
) -> Result<HybridFactor> {
    let shared = broadband_shared_analog(std::slice::from_ref(basis), mode, dictionary)?;
    Ok(HybridFactor {
        f_rf: shared.f_rf,
        f_bb: shared.f_bb.into_iter().next().expect("one carrier"),
        residual: shared.residuals[0],
    })
}

/// One analog precoder for all carriers, one digital precoder per carrier.
///
/// Minimizes `Σ_k ||F[k] - F_RF F_BB[k]||_F²` greedily and then rescales each
/// `F_BB[k]` so that `||F_RF F_BB[k]||_F = ||F[k]||_F`.
pub fn broadband_shared_analog(
    bases_per_carrier: &[CMatrix],
    mode: Structure,
    dictionary: Option<&Dictionary>,
) -> Result<SharedFactor> {
    let first = bases_per_carrier
        .first()
        .ok_or_else(|| Error::invalid("at least one carrier basis is required"))?;
    let (n_t, n_rf) = first.shape();
    if n_rf == 0 {
        return Err(Error::invalid("basis has no columns"));
    }
    if bases_per_carrier.iter().any(|b| b.shape() != (n_t, n_rf)) {
        return Err(Error::invalid("carrier bases differ in dimension"));
    }
    let f_rf = match mode {
        Structure::FullyConnected => {
            let dict = dictionary.filter(|d| !d.is_empty()).ok_or(Error::MissingDictionary)?;
            omp_select(bases_per_carrier, &dict.atoms, n_rf)?
        }
        Structure::PartiallyConnected => subarray_phases(bases_per_carrier, n_rf)?,
    };
    let mut f_bb = Vec::with_capacity(bases_per_carrier.len());
    let mut residuals = Vec::with_capacity(bases_per_carrier.len());
    for basis in bases_per_carrier {
        let mut bb = least_squares(&f_rf, basis);
        let achieved = frobenius(&(&f_rf * &bb));
        let target = frobenius(basis);
        if achieved > 0.0 {
            bb *= C64::new(target / achieved, 0.0);
        }
        residuals.push(frobenius(&(basis - &f_rf * &bb)));
        f_bb.push(bb);
    }
    Ok(SharedFactor { f_rf, f_bb, residuals })
}

fn omp_select(targets: &[CMatrix], atoms: &CMatrix, n_rf: usize) -> Result<CMatrix> {
    let n_t = targets[0].nrows();
    if atoms.nrows() != n_t {
        return Err(Error::mismatch(format!(
            "dictionary atoms have {} entries, bases have {}",
            atoms.nrows(),
            n_t
        )));
    }
    if atoms.ncols() < n_rf {
        return Err(Error::invalid(format!(
            "dictionary has {} atoms, {} RF chains requested",
            atoms.ncols(),
            n_rf
        )));
    }
    let mut residuals: Vec<CMatrix> = targets.to_vec();
    let mut chosen: Vec<usize> = Vec::with_capacity(n_rf);
    let mut f_rf = CMatrix::zeros(n_t, 0);
    for _ in 0..n_rf {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..atoms.ncols() {
            if chosen.contains(&j) {
                continue;
            }
            let a = atoms.column(j);
            let score: f64 = residuals
                .iter()
                .map(|r| (a.adjoint() * r).iter().map(|c| c.norm_sqr()).sum::<f64>())
                .sum();
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let (j, _) = best.expect("dictionary has unused atoms");
        chosen.push(j);
        f_rf = CMatrix::from_fn(n_t, chosen.len(), |r, c| atoms[(r, chosen[c])]);
        for (res, target) in residuals.iter_mut().zip(targets) {
            let bb = least_squares(&f_rf, target);
            *res = target - &f_rf * bb;
        }
    }
    Ok(f_rf)
}

fn subarray_phases(targets: &[CMatrix], n_rf: usize) -> Result<CMatrix> {
    let n_t = targets[0].nrows();
    if n_t % n_rf != 0 {
        return Err(Error::invalid(format!(
            "partially connected layout needs N_RF | N_t, got N_t={n_t}, N_RF={n_rf}"
        )));
    }
    let block = n_t / n_rf;
    let scale = (n_rf as f64 / n_t as f64).sqrt();
    let mut f_rf = CMatrix::zeros(n_t, n_rf);
    for chain in 0..n_rf {
        let rows = chain * block;
        let mut stacked = CMatrix::zeros(block, n_rf * targets.len());
        for (k, t) in targets.iter().enumerate() {
            stacked
                .view_mut((0, k * n_rf), (block, n_rf))
                .copy_from(&t.view((rows, 0), (block, n_rf)));
        }
        let u = dominant_left_singular_vector(&stacked);
        for r in 0..block {
            let phase = if u[r].norm() > 0.0 { u[r].arg() } else { 0.0 };
            f_rf[(rows + r, chain)] = C64::from_polar(scale, phase);
        }
    }
    Ok(f_rf)
}

/// The `K` analog precoders with their companion digital precoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogCodebook {
    #[serde(with = "io::cmatrices")]
    pub analog: Vec<CMatrix>,
    pub structure: Structure,
    #[serde(with = "io::cmatrices")]
    pub companion_digital: Vec<CMatrix>,
    /// Beamspace strength used for ordering heuristics (descending).
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl AnalogCodebook {
    pub fn len(&self) -> usize {
        self.analog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analog.is_empty()
    }

    pub fn n_t(&self) -> usize {
        self.analog.first().map(|a| a.nrows()).unwrap_or(0)
    }

    pub fn n_rf(&self) -> usize {
        self.analog.first().map(|a| a.ncols()).unwrap_or(0)
    }

    /// Keep only the first `k` (strongest) beamspaces.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.len());
        AnalogCodebook {
            analog: self.analog[..k].to_vec(),
            structure: self.structure,
            companion_digital: self.companion_digital[..k].to_vec(),
            energies: self.energies[..k].to_vec(),
            residuals: self.residuals[..k].to_vec(),
        }
    }
}

pub fn build_analog_codebook(
    subspaces: &SubspaceSet,
    structure: Structure,
    dictionary: Option<&Dictionary>,
) -> Result<AnalogCodebook> {
    let mut analog = Vec::with_capacity(subspaces.len());
    let mut digital = Vec::with_capacity(subspaces.len());
    let mut residuals = Vec::with_capacity(subspaces.len());
    for b in &subspaces.bases {
        let f = decompose_hybrid(b, structure, dictionary)?;
        analog.push(f.f_rf);
        digital.push(f.f_bb);
        residuals.push(f.residual);
    }
    Ok(AnalogCodebook {
        analog,
        structure,
        companion_digital: digital,
        energies: subspaces.energies.clone(),
        residuals,
    })
}

/// Shared analog precoders across carriers; returns one codebook per carrier.
///
/// Beamspaces are matched across carriers by singular-index tuple, using the
/// energy order of carrier 0.
pub fn build_broadband_codebooks(
    carriers: &[ChannelMatrix],
    n_rf: usize,
    structure: Structure,
    dictionary: Option<&Dictionary>,
) -> Result<Vec<AnalogCodebook>> {
    let first = carriers
        .first()
        .ok_or_else(|| Error::invalid("no carriers given"))?;
    let reference = enumerate_subspaces(first, n_rf)?;
    let per_carrier: Vec<SubspaceSet> = carriers
        .iter()
        .map(|c| subspaces_with_order(c, &reference.index_tuples))
        .collect::<Result<_>>()?;
    let k = reference.len();
    let mut books: Vec<AnalogCodebook> = per_carrier
        .iter()
        .map(|s| AnalogCodebook {
            analog: Vec::with_capacity(k),
            structure,
            companion_digital: Vec::with_capacity(k),
            energies: s.energies.clone(),
            residuals: Vec::with_capacity(k),
        })
        .collect();
    for idx in 0..k {
        let bases: Vec<CMatrix> = per_carrier.iter().map(|s| s.bases[idx].clone()).collect();
        let shared = broadband_shared_analog(&bases, structure, dictionary)?;
        for (c, book) in books.iter_mut().enumerate() {
            book.analog.push(shared.f_rf.clone());
            book.companion_digital.push(shared.f_bb[c].clone());
            book.residuals.push(shared.residuals[c]);
        }
    }
    Ok(books)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridCombiner {
    pub w_rf: CMatrix,
    pub w_bb: CMatrix,
}

impl HybridCombiner {
    pub fn combined(&self) -> CMatrix {
        &self.w_rf * &self.w_bb
    }
}

/// Hybrid approximation of the top `n_rf_r` left singular vectors.
///
/// The digital combiner is corrected so that `W_RF W_BB` has orthonormal
/// columns: the combined noise stays white with the same variance and the
/// effective channel `W_BB^H W_RF^H H` never lengthens a received difference.
pub fn design_hybrid_combiner(
    chan: &ChannelMatrix,
    n_rf_r: usize,
    dictionary: Option<&Dictionary>,
) -> Result<(HybridCombiner, CMatrix)> {
    let (n_r, n_t) = chan.h.shape();
    if n_rf_r < 1 || n_rf_r > n_r {
        return Err(Error::invalid(format!("n_rf_r must lie in 1..={n_r}, got {n_rf_r}")));
    }
    // pad with zero columns so the thin SVD yields a full N_r x N_r left basis
    let mut padded = CMatrix::zeros(n_r, n_t + n_r);
    padded.view_mut((0, 0), (n_r, n_t)).copy_from(&chan.h);
    let svd = ThinSvd::compute(&padded);
    let w_r = svd.u.columns(0, n_rf_r).into_owned();
    let f = decompose_hybrid(&w_r, Structure::FullyConnected, dictionary)?;
    let combined = &f.f_rf * &f.f_bb;
    let polar = ThinSvd::compute(&combined);
    let inv_sigma = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        polar.sigma.len(),
        polar
            .sigma
            .iter()
            .map(|&s| C64::new(if s > 0.0 { 1.0 / s } else { 0.0 }, 0.0)),
    ));
    let w_bb = &f.f_bb * &polar.v * inv_sigma * polar.v.adjoint();
    let comb = HybridCombiner { w_rf: f.f_rf, w_bb };
    let effective = comb.combined().adjoint() * &chan.h;
    Ok((comb, effective))
}

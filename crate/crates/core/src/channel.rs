//! Sparse mmWave MIMO channels: UPA responses, Saleh-Valenzuela assembly,
//! per-subcarrier OFDM channels and CSI-error injection.

use std::f64::consts::PI;
use std::path::Path as FsPath;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io::{self, ComplexPair};
use crate::linalg::ThinSvd;
use crate::seed;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Default element spacing in wavelengths.
pub const HALF_WAVELENGTH: f64 = 0.5;

/// Uniform planar array with `w1` horizontal and `w2` vertical elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub w1: usize,
    pub w2: usize,
    pub spacing_over_lambda: f64,
}

impl ArrayGeometry {
    pub fn new(w1: usize, w2: usize, spacing_over_lambda: f64) -> Result<Self> {
        let g = ArrayGeometry { w1, w2, spacing_over_lambda };
        g.validate()?;
        Ok(g)
    }

    /// Square UPA for perfect-square counts, otherwise a linear `n x 1` array.
    pub fn for_elements(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side == n {
            Self::new(side, side, HALF_WAVELENGTH)
        } else {
            Self::new(n, 1, HALF_WAVELENGTH)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1 == 0 || self.w2 == 0 {
            return Err(Error::InvalidGeometry(format!(
                "array dimensions must be positive, got {}x{}",
                self.w1, self.w2
            )));
        }
        if !(self.spacing_over_lambda > 0.0 && self.spacing_over_lambda.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "element spacing must be positive, got {}",
                self.spacing_over_lambda
            )));
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.w1 * self.w2
    }
}

/// UPA response for elevation `theta` and azimuth `phi`.
///
/// Element `(x, y)` sits at index `x * w2 + y` (x-major) and carries phase
/// `2π(d/λ)(x sin φ sin θ + y cos θ)`; the vector is scaled to unit norm.
pub fn array_response(geom: &ArrayGeometry, theta: f64, phi: f64) -> Result<CVector> {
    geom.validate()?;
    if !(theta.is_finite() && phi.is_finite()) {
        return Err(Error::invalid("array response angles must be finite"));
    }
    let n = geom.elements();
    let scale = 1.0 / (n as f64).sqrt();
    let kx = 2.0 * PI * geom.spacing_over_lambda * phi.sin() * theta.sin();
    let ky = 2.0 * PI * geom.spacing_over_lambda * theta.cos();
    let mut out = CVector::zeros(n);
    for x in 0..geom.w1 {
        for y in 0..geom.w2 {
            let phase = kx * x as f64 + ky * y as f64;
            out[x * geom.w2 + y] = C64::from_polar(scale, phase);
        }
    }
    Ok(out)
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    #[serde(with = "complex_pair")]
    pub gain: C64,
    pub aoa_elevation: f64,
    pub aoa_azimuth: f64,
    pub aod_elevation: f64,
    pub aod_azimuth: f64,
}

mod complex_pair {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
        io::pair(*c).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
        Ok(io::unpair(ComplexPair::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathSet {
    pub paths: Vec<PropagationPath>,
}

impl PathSet {
    pub fn new(paths: Vec<PropagationPath>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::invalid("a path set needs at least one path"));
        }
        for (i, p) in paths.iter().enumerate() {
            let ok = (0.0..PI).contains(&p.aoa_elevation)
                && (0.0..2.0 * PI).contains(&p.aoa_azimuth)
                && (0.0..=PI).contains(&p.aod_elevation)
                && (0.0..=2.0 * PI).contains(&p.aod_azimuth);
            if !ok {
                return Err(Error::invalid(format!("path {i} has an angle outside its range")));
            }
        }
        Ok(PathSet { paths })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Draw `l_count` paths with CN(0,1) gains and uniform angles.
pub fn sample_paths(rng_seed: u64, l_count: usize) -> Result<PathSet> {
    if l_count < 1 {
        return Err(Error::invalid("l_count must be at least 1"));
    }
    let mut rng = seed::rng(rng_seed);
    let paths = (0..l_count)
        .map(|_| {
            let gain = seed::complex_gaussian(&mut rng, 1.0);
            PropagationPath {
                gain,
                aoa_elevation: rng.random::<f64>() * PI,
                aoa_azimuth: rng.random::<f64>() * 2.0 * PI,
                aod_elevation: rng.random::<f64>() * PI,
                aod_azimuth: rng.random::<f64>() * 2.0 * PI,
            }
        })
        .collect();
    PathSet::new(paths)
}

/// A single channel matrix with its cached thin SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: CMatrix,
    pub svd: ThinSvd,
    pub rank: usize,
}

impl ChannelMatrix {
    pub fn new(h: CMatrix) -> Self {
        let svd = ThinSvd::compute(&h);
        let rank = svd.rank();
        ChannelMatrix { h, svd, rank }
    }
}

/// Narrowband (one matrix) or broadband (one matrix per subcarrier) channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub n_r: usize,
    pub n_t: usize,
    pub subcarriers: Vec<ChannelMatrix>,
    pub seed: Option<u64>,
    pub paths: Option<PathSet>,
}

impl ChannelRealization {
    pub fn narrowband(h: CMatrix) -> Self {
        let (n_r, n_t) = h.shape();
        ChannelRealization {
            n_r,
            n_t,
            subcarriers: vec![ChannelMatrix::new(h)],
            seed: None,
            paths: None,
        }
    }

    pub fn broadband(carriers: Vec<CMatrix>) -> Result<Self> {
        let first = carriers
            .first()
            .ok_or_else(|| Error::invalid("a broadband channel needs at least one carrier"))?;
        let (n_r, n_t) = first.shape();
        if carriers.iter().any(|h| h.shape() != (n_r, n_t)) {
            return Err(Error::mismatch("subcarrier matrices differ in shape"));
        }
        Ok(ChannelRealization {
            n_r,
            n_t,
            subcarriers: carriers.into_iter().map(ChannelMatrix::new).collect(),
            seed: None,
            paths: None,
        })
    }

    /// First (or only) channel matrix.
    pub fn h(&self) -> &CMatrix {
        &self.subcarriers[0].h
    }

    pub fn primary(&self) -> &ChannelMatrix {
        &self.subcarriers[0]
    }

    pub fn rank(&self) -> usize {
        self.subcarriers[0].rank
    }

    pub fn carriers(&self) -> usize {
        self.subcarriers.len()
    }

    /// Channel with every matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.subcarriers {
            *m = ChannelMatrix::new(m.h.scale(c));
        }
        out
    }

    /// Narrowband channel built from carrier `k`.
    pub fn carrier(&self, k: usize) -> ChannelRealization {
        ChannelRealization {
            n_r: self.n_r,
            n_t: self.n_t,
            subcarriers: vec![self.subcarriers[k].clone()],
            seed: self.seed,
            paths: self.paths.clone(),
        }
    }

    pub fn to_doc(&self) -> ChannelDoc {
        ChannelDoc {
            n_r: self.n_r,
            n_t: self.n_t,
            subcarriers: self.subcarriers.iter().map(|m| io::matrix_rows(&m.h)).collect(),
            seed: self.seed,
            paths: self.paths.clone(),
        }
    }

    pub fn from_doc(doc: ChannelDoc) -> Result<Self> {
        let mut mats = Vec::with_capacity(doc.subcarriers.len());
        for rows in &doc.subcarriers {
            let m = io::matrix_from_rows(rows).map_err(Error::invalid)?;
            if m.shape() != (doc.n_r, doc.n_t) {
                return Err(Error::mismatch(format!(
                    "subcarrier is {}x{}, header says {}x{}",
                    m.nrows(),
                    m.ncols(),
                    doc.n_r,
                    doc.n_t
                )));
            }
            mats.push(m);
        }
        let mut chan = ChannelRealization::broadband(mats)?;
        chan.seed = doc.seed;
        chan.paths = doc.paths;
        Ok(chan)
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        io::write_json(path, &self.to_doc())
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        Self::from_doc(io::read_json(path)?)
    }
}

/// On-disk channel document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDoc {
    pub n_r: usize,
    pub n_t: usize,
    pub subcarriers: Vec<Vec<Vec<ComplexPair>>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Option<PathSet>,
}

/// The 4x4 constant channel used for the fixed-channel comparison.
pub const CONSTANT_CHANNEL_JSON: &str = include_str!("../fixtures/constant_channel_4x4.json");

pub fn constant_channel() -> ChannelRealization {
    let doc: ChannelDoc = serde_json::from_str(CONSTANT_CHANNEL_JSON).expect("bundled fixture parses");
    ChannelRealization::from_doc(doc).expect("bundled fixture is valid")
}

fn path_term(p: &PropagationPath, tx: &ArrayGeometry, rx: &ArrayGeometry) -> Result<CMatrix> {
    let fr = array_response(rx, p.aoa_elevation, p.aoa_azimuth)?;
    let ft = array_response(tx, p.aod_elevation, p.aod_azimuth)?;
    Ok((fr * ft.adjoint()).scale_mut_by(p.gain))
}

trait ScaleBy {
    fn scale_mut_by(self, c: C64) -> Self;
}

impl ScaleBy for CMatrix {
    fn scale_mut_by(mut self, c: C64) -> Self {
        self.iter_mut().for_each(|v| *v *= c);
        self
    }
}

/// `H = (1/√L) Σ_l α_l f_r(θ_l^r, φ_l^r) f_t(θ_l^t, φ_l^t)^H`.
pub fn assemble_channel(
    paths: &PathSet,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<ChannelRealization> {
    tx.validate()?;
    rx.validate()?;
    let norm = 1.0 / (paths.len() as f64).sqrt();
    let mut h = CMatrix::zeros(rx.elements(), tx.elements());
    for p in &paths.paths {
        h += path_term(p, tx, rx)?;
    }
    let mut chan = ChannelRealization::narrowband(h.scale(norm));
    chan.paths = Some(paths.clone());
    Ok(chan)
}

/// Per-subcarrier channel with delay tap `l` (1-based) on path `l`:
/// `H[k] = (1/√L) Σ_l α_l f_r f_t^H exp(-j 2π l k / K)`.
pub fn assemble_ofdm_channel(
    paths: &PathSet,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    k_carriers: usize,
) -> Result<ChannelRealization> {
    if k_carriers < 1 {
        return Err(Error::invalid("k_carriers must be at least 1"));
    }
    tx.validate()?;
    rx.validate()?;
    let norm = 1.0 / (paths.len() as f64).sqrt();
    let terms: Vec<CMatrix> = paths
        .paths
        .iter()
        .map(|p| path_term(p, tx, rx).map(|t| t.scale(norm)))
        .collect::<Result<_>>()?;
    let carriers = (0..k_carriers)
        .map(|k| {
            let mut h = CMatrix::zeros(rx.elements(), tx.elements());
            for (idx, t) in terms.iter().enumerate() {
                let l = (idx + 1) as f64;
                let phase = C64::from_polar(1.0, -2.0 * PI * l * k as f64 / k_carriers as f64);
                h += t.clone().scale_mut_by(phase);
            }
            h
        })
        .collect();
    let mut chan = ChannelRealization::broadband(carriers)?;
    chan.paths = Some(paths.clone());
    Ok(chan)
}

/// `H + H_e` with `H_e` entries i.i.d. CN(0, eta * noise_var), per subcarrier.
pub fn inject_csi_error(
    chan: &ChannelRealization,
    eta: f64,
    noise_var: f64,
    rng_seed: u64,
) -> Result<ChannelRealization> {
    if !(eta >= 0.0) {
        return Err(Error::invalid("eta must be nonnegative"));
    }
    if !(noise_var > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    if eta == 0.0 {
        return Ok(chan.clone());
    }
    let variance = eta * noise_var;
    let mut rng = seed::rng(rng_seed);
    let mut out = chan.clone();
    for m in &mut out.subcarriers {
        let mut h = m.h.clone();
        // column-major fill keeps the draw order fixed
        h.iter_mut().for_each(|v| *v += seed::complex_gaussian(&mut rng, variance));
        *m = ChannelMatrix::new(h);
    }
    Ok(out)
}

//! Pairwise-distance quadratic forms and the programs built on them.
//!
//! Every shaping layout writes codeword `i` as `x_i = A (c_i ∘ z)`, where `z`
//! is the optimization variable, `A` is a fixed synthesis matrix and `c_i` a
//! per-codeword selector. The received distance between codewords `i` and
//! `i'` is then `z^H Z_ii' z` with `Z_ii' = R ∘ (conj(δ) δ^T)`,
//! `R = (HA)^H (HA)` and `δ = c_i - c_i'`. Forms are kept in this factored
//! form and only materialized on request.

mod solver;

pub use solver::{
    mi_bound_from_values, solve_min_power, solve_mmi, solve_mser, trace_csv, union_bound_from_values,
    SolverConfig, SolverResult, StepRule, TracePoint,
};

use serde::{Deserialize, Serialize};

use crate::io::{self, ComplexPair};
use crate::linalg::hermitian_defect;
use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Joss,
    Fpss,
    Dpss,
    Fdss,
    /// Explicit forms supplied by the caller.
    Custom,
}

/// How the solver measures the power of `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMetric {
    /// `z^H z`.
    Variable,
    /// `Σ_i ||x_i||²` over the synthesized codewords.
    Transmit,
}

/// Inputs that fix a layout's synthesis matrix and selectors.
#[derive(Debug, Clone, PartialEq)]
pub enum LayoutArgs {
    /// One analog precoder per codeword, `G = [F^{k_1}, ..., F^{k_N}]`.
    Joss { analog_sequence: Vec<CMatrix> },
    /// Full digital precoder per beamspace; `symbols` are `(beamspace, s)` pairs.
    Fpss { analog: Vec<CMatrix>, symbols: Vec<(usize, CVector)> },
    /// Diagonal digital precoder per beamspace.
    Dpss { analog: Vec<CMatrix>, symbols: Vec<(usize, CVector)> },
    /// Unstructured codewords of length `N_t`.
    Fdss { n_codewords: usize },
}

/// Canonical unordered pair order `(0,1), (0,2), ..., (1,2), ...`.
pub fn pair_order(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Structured {
        a: CMatrix,
        b: CMatrix,
        /// Sparse selector per codeword: `(variable index, coefficient)`.
        selectors: Vec<Vec<(usize, C64)>>,
    },
    Dense {
        forms: Vec<CMatrix>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpInstance {
    pub layout: Layout,
    pub dim: usize,
    pub n_codewords: usize,
    pub pair_index: Vec<(usize, usize)>,
    pub power_metric: PowerMetric,
    repr: Repr,
}

pub fn build_distance_forms(h: &CMatrix, args: &LayoutArgs) -> Result<QcqpInstance> {
    let (n_r, n_t) = h.shape();
    match args {
        LayoutArgs::Joss { analog_sequence } => {
            let n = analog_sequence.len();
            let n_rf = check_analog(analog_sequence, n_t)?;
            let dim = n * n_rf;
            let mut a = CMatrix::zeros(n_t, dim);
            let mut selectors = Vec::with_capacity(n);
            for (i, f) in analog_sequence.iter().enumerate() {
                a.view_mut((0, i * n_rf), (n_t, n_rf)).copy_from(f);
                selectors.push((0..n_rf).map(|r| (i * n_rf + r, C64::new(1.0, 0.0))).collect());
            }
            QcqpInstance::structured(Layout::Joss, h, a, selectors)
        }
        LayoutArgs::Fpss { analog, symbols } => {
            let n_rf = check_analog(analog, n_t)?;
            let block = n_rf * n_rf;
            let mut a = CMatrix::zeros(n_t, analog.len() * block);
            for (k, f) in analog.iter().enumerate() {
                for r in 0..n_rf {
                    for c in 0..n_rf {
                        a.set_column(k * block + r * n_rf + c, &f.column(r));
                    }
                }
            }
            let selectors = symbol_selectors(symbols, analog.len(), n_rf, |k, s| {
                let mut sel = Vec::with_capacity(block);
                for r in 0..n_rf {
                    for c in 0..n_rf {
                        sel.push((k * block + r * n_rf + c, s[c]));
                    }
                }
                sel
            })?;
            QcqpInstance::structured(Layout::Fpss, h, a, selectors)
        }
        LayoutArgs::Dpss { analog, symbols } => {
            let n_rf = check_analog(analog, n_t)?;
            let mut a = CMatrix::zeros(n_t, analog.len() * n_rf);
            for (k, f) in analog.iter().enumerate() {
                a.view_mut((0, k * n_rf), (n_t, n_rf)).copy_from(f);
            }
            let selectors = symbol_selectors(symbols, analog.len(), n_rf, |k, s| {
                (0..n_rf).map(|r| (k * n_rf + r, s[r])).collect()
            })?;
            QcqpInstance::structured(Layout::Dpss, h, a, selectors)
        }
        LayoutArgs::Fdss { n_codewords } => {
            let n = *n_codewords;
            if n < 2 {
                return Err(Error::invalid("at least two codewords are required"));
            }
            let dim = n * n_t;
            let mut a = CMatrix::zeros(n_t, dim);
            let mut selectors = Vec::with_capacity(n);
            for i in 0..n {
                for t in 0..n_t {
                    a[(t, i * n_t + t)] = C64::new(1.0, 0.0);
                }
                selectors.push((0..n_t).map(|t| (i * n_t + t, C64::new(1.0, 0.0))).collect());
            }
            let _ = n_r;
            QcqpInstance::structured(Layout::Fdss, h, a, selectors)
        }
    }
}

fn check_analog(analog: &[CMatrix], n_t: usize) -> Result<usize> {
    let first = analog
        .first()
        .ok_or_else(|| Error::invalid("no analog precoders supplied"))?;
    let n_rf = first.ncols();
    if n_rf == 0 {
        return Err(Error::invalid("analog precoder has no columns"));
    }
    for f in analog {
        if f.shape() != (n_t, n_rf) {
            return Err(Error::mismatch(format!(
                "analog precoder is {}x{}, expected {}x{}",
                f.nrows(),
                f.ncols(),
                n_t,
                n_rf
            )));
        }
    }
    Ok(n_rf)
}

fn symbol_selectors(
    symbols: &[(usize, CVector)],
    k_spaces: usize,
    n_rf: usize,
    make: impl Fn(usize, &CVector) -> Vec<(usize, C64)>,
) -> Result<Vec<Vec<(usize, C64)>>> {
    if symbols.len() < 2 {
        return Err(Error::invalid("at least two codewords are required"));
    }
    symbols
        .iter()
        .map(|(k, s)| {
            if *k >= k_spaces {
                return Err(Error::invalid(format!("beamspace {k} out of range 0..{k_spaces}")));
            }
            if s.len() != n_rf {
                return Err(Error::mismatch(format!(
                    "symbol vector has length {}, expected {}",
                    s.len(),
                    n_rf
                )));
            }
            Ok(make(*k, s))
        })
        .collect()
}

impl QcqpInstance {
    fn structured(
        layout: Layout,
        h: &CMatrix,
        a: CMatrix,
        selectors: Vec<Vec<(usize, C64)>>,
    ) -> Result<Self> {
        if h.ncols() != a.nrows() {
            return Err(Error::mismatch(format!(
                "channel has {} columns, codewords have length {}",
                h.ncols(),
                a.nrows()
            )));
        }
        let n = selectors.len();
        let b = h * &a;
        Ok(QcqpInstance {
            layout,
            dim: a.ncols(),
            n_codewords: n,
            pair_index: pair_order(n),
            power_metric: PowerMetric::Transmit,
            repr: Repr::Structured { a, b, selectors },
        })
    }

    /// Instance from explicit Hermitian PSD forms, measured with `z^H z`.
    ///
    /// Pair labels follow the canonical order for the smallest `N` whose pair
    /// count covers the forms.
    pub fn from_forms(forms: Vec<CMatrix>) -> Result<Self> {
        let first = forms.first().ok_or_else(|| Error::invalid("no forms supplied"))?;
        let dim = first.nrows();
        for f in &forms {
            if f.shape() != (dim, dim) {
                return Err(Error::mismatch("forms must be square and of equal size"));
            }
            let scale = f.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
            if hermitian_defect(f) > 1e-12 * scale {
                return Err(Error::invalid("form is not Hermitian"));
            }
        }
        let mut n = 2;
        while n * (n - 1) / 2 < forms.len() {
            n += 1;
        }
        let mut pair_index = pair_order(n);
        pair_index.truncate(forms.len());
        Ok(QcqpInstance {
            layout: Layout::Custom,
            dim,
            n_codewords: n,
            pair_index,
            power_metric: PowerMetric::Variable,
            repr: Repr::Dense { forms },
        })
    }

    pub fn n_forms(&self) -> usize {
        self.pair_index.len()
    }

    /// Materialize every pair form (dense `dim x dim`).
    pub fn forms(&self) -> Vec<CMatrix> {
        match &self.repr {
            Repr::Dense { forms } => forms.clone(),
            Repr::Structured { b, selectors, .. } => {
                let r = b.adjoint() * b;
                self.pair_index
                    .iter()
                    .map(|&(i, j)| {
                        let delta = self.dense_selector(&selectors[i]) - self.dense_selector(&selectors[j]);
                        CMatrix::from_fn(self.dim, self.dim, |p, q| {
                            delta[p].conj() * r[(p, q)] * delta[q]
                        })
                    })
                    .collect()
            }
        }
    }

    fn dense_selector(&self, sel: &[(usize, C64)]) -> CVector {
        let mut v = CVector::zeros(self.dim);
        for &(a, c) in sel {
            v[a] += c;
        }
        v
    }

    /// Synthesized codewords `x_i = A (c_i ∘ z)`. Not defined for custom forms.
    pub fn codewords(&self, z: &CVector) -> Result<Vec<CVector>> {
        self.check_len(z)?;
        match &self.repr {
            Repr::Structured { a, selectors, .. } => {
                Ok(selectors.iter().map(|s| synth(a, s, z)).collect())
            }
            Repr::Dense { .. } => Err(Error::NotComputed(
                "custom instances have no codeword synthesis".into(),
            )),
        }
    }

    /// Variables that at least one codeword depends on.
    pub fn touched(&self) -> Vec<bool> {
        match &self.repr {
            Repr::Structured { selectors, .. } => {
                let mut t = vec![false; self.dim];
                for s in selectors {
                    for &(a, c) in s {
                        if c != C64::new(0.0, 0.0) {
                            t[a] = true;
                        }
                    }
                }
                t
            }
            Repr::Dense { .. } => vec![true; self.dim],
        }
    }

    fn check_len(&self, z: &CVector) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::mismatch(format!(
                "variable has length {}, instance expects {}",
                z.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `z^H Z_p z` for every pair `p`.
    pub fn pair_values(&self, z: &CVector) -> Vec<f64> {
        match &self.repr {
            Repr::Dense { forms } => forms
                .iter()
                .map(|f| (z.adjoint() * f * z)[(0, 0)].re)
                .collect(),
            Repr::Structured { b, selectors, .. } => {
                let y: Vec<CVector> = selectors.iter().map(|s| synth(b, s, z)).collect();
                self.pair_index
                    .iter()
                    .map(|&(i, j)| (&y[i] - &y[j]).norm_squared())
                    .collect()
            }
        }
    }

    /// `Σ_p w_p Z_p z`.
    pub fn weighted_form_gradient(&self, z: &CVector, w: &[f64]) -> CVector {
        match &self.repr {
            Repr::Dense { forms } => {
                let mut g = CVector::zeros(self.dim);
                for (f, &wp) in forms.iter().zip(w) {
                    if wp != 0.0 {
                        g += (f * z) * C64::new(wp, 0.0);
                    }
                }
                g
            }
            Repr::Structured { b, selectors, .. } => {
                let y: Vec<CVector> = selectors.iter().map(|s| synth(b, s, z)).collect();
                let mut u: Vec<CVector> = vec![CVector::zeros(b.nrows()); self.n_codewords];
                for (&(i, j), &wp) in self.pair_index.iter().zip(w) {
                    if wp == 0.0 {
                        continue;
                    }
                    let d = (&y[i] - &y[j]) * C64::new(wp, 0.0);
                    u[i] += &d;
                    u[j] -= &d;
                }
                adjoint_accumulate(b, selectors, &u, self.dim)
            }
        }
    }

    /// Power of `z` under the instance's metric.
    pub fn power(&self, z: &CVector) -> f64 {
        match (&self.repr, self.power_metric) {
            (Repr::Structured { a, selectors, .. }, PowerMetric::Transmit) => {
                selectors.iter().map(|s| synth(a, s, z).norm_squared()).sum()
            }
            _ => z.norm_squared(),
        }
    }

    /// Gradient of the power, `P z`.
    pub fn power_gradient(&self, z: &CVector) -> CVector {
        match (&self.repr, self.power_metric) {
            (Repr::Structured { a, selectors, .. }, PowerMetric::Transmit) => {
                let x: Vec<CVector> = selectors.iter().map(|s| synth(a, s, z)).collect();
                adjoint_accumulate(a, selectors, &x, self.dim)
            }
            _ => z.clone(),
        }
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc {
            layout: self.layout,
            dim: self.dim,
            pair_index: self.pair_index.clone(),
            forms: self.forms().iter().map(io::matrix_rows).collect(),
        }
    }
}

fn synth(m: &CMatrix, sel: &[(usize, C64)], z: &CVector) -> CVector {
    let mut out = CVector::zeros(m.nrows());
    for &(a, c) in sel {
        let coef = c * z[a];
        if coef != C64::new(0.0, 0.0) {
            out.axpy(coef, &m.column(a), C64::new(1.0, 0.0));
        }
    }
    out
}

/// `Σ_i conj(c_i) ∘ (M^H v_i)`.
fn adjoint_accumulate(m: &CMatrix, selectors: &[Vec<(usize, C64)>], v: &[CVector], dim: usize) -> CVector {
    let mut g = CVector::zeros(dim);
    for (sel, vi) in selectors.iter().zip(v) {
        for &(a, c) in sel {
            g[a] += c.conj() * m.column(a).dotc(vi);
        }
    }
    g
}

/// JSON export of a materialized instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub layout: Layout,
    pub dim: usize,
    pub pair_index: Vec<(usize, usize)>,
    pub forms: Vec<Vec<Vec<ComplexPair>>>,
}

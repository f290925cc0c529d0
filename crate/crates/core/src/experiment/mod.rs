//! Configuration-driven pipeline: channels, precoders, shaping, evaluation
//! and the CSV/JSON artifacts behind them.
//!
//! All randomness derives from the master seed: stage `s` of channel `c`
//! uses `mix2(master, s, c)`, so results do not depend on scheduling.

mod config;
mod report;

pub use config::{ChannelSource, ExperimentConfig, ReceiverConfig, SystemConfig};
pub use report::{
    emit_plotdata, DminRow, ExperimentReport, FailureRow, MethodSummary, PlotKind, Provenance, SerRow,
};

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{assemble_channel, assemble_ofdm_channel, constant_channel, inject_csi_error, sample_paths};
use crate::channel::{ArrayGeometry, ChannelMatrix, ChannelRealization};
use crate::eval::{db_to_linear, quantize_dac, ser_point, SerPoint};
use crate::precoding::{
    build_analog_codebook, build_broadband_codebooks, design_hybrid_combiner, enumerate_subspaces,
    AnalogCodebook, Dictionary,
};
use crate::qcqp::SolverConfig;
use crate::seed;
use crate::shaping::{
    baseline, candidate_sets, dpss, fdss, fdss_criterion, fpss, joss, min_distance, uniform_count,
    BaselineMode, Criterion, Method, ShapingCodebook,
};
use crate::{CMatrix, Error, Result};

const CHANNEL_STREAM: u64 = 4;
const SOLVER_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const CSI_STREAM: u64 = 3;

/// Transmit and receive array geometries for the system.
pub fn geometries(system: &SystemConfig) -> Result<(ArrayGeometry, ArrayGeometry)> {
    Ok((ArrayGeometry::for_elements(system.n_t)?, ArrayGeometry::for_elements(system.n_r)?))
}

pub fn build_channels(cfg: &ExperimentConfig) -> Result<Vec<ChannelRealization>> {
    let (tx, rx) = geometries(&cfg.system)?;
    let base = |s: &Option<u64>| s.unwrap_or_else(|| seed::mix(cfg.seed, CHANNEL_STREAM));
    let chans = match &cfg.channel_source {
        ChannelSource::Sampled { seed: s, count } => (0..*count)
            .map(|i| {
                let sd = seed::mix(base(s), i as u64);
                let paths = sample_paths(sd, cfg.system.l_paths)?;
                let mut c = assemble_channel(&paths, &tx, &rx)?;
                c.seed = Some(sd);
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?,
        ChannelSource::Ofdm { seed: s, k_carriers, count } => (0..*count)
            .map(|i| {
                let sd = seed::mix(base(s), i as u64);
                let paths = sample_paths(sd, cfg.system.l_paths)?;
                let mut c = assemble_ofdm_channel(&paths, &tx, &rx, *k_carriers)?;
                c.seed = Some(sd);
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?,
        ChannelSource::Fixture { path } => vec![ChannelRealization::load(path)?],
        ChannelSource::Constant => vec![constant_channel()],
    };
    for c in &chans {
        if (c.n_r, c.n_t) != (cfg.system.n_r, cfg.system.n_t) {
            return Err(Error::Validation(vec![format!(
                "channel is {}x{} but system declares n_r = {}, n_t = {}",
                c.n_r, c.n_t, cfg.system.n_r, cfg.system.n_t
            )]));
        }
    }
    Ok(chans)
}

/// Checks that need the realized channels.
pub fn validate_channels(cfg: &ExperimentConfig, chans: &[ChannelRealization]) -> Result<()> {
    let mut bad = Vec::new();
    let n = 1usize << cfg.system.n_bits;
    if cfg.methods.contains(&Method::Ubmss) {
        for (i, c) in chans.iter().enumerate() {
            let mut m = c.rank();
            if let Some(r) = cfg.receiver {
                m = m.min(r.n_rf_r);
            }
            if m < cfg.system.n_rf {
                continue;
            }
            let k = binomial(m, cfg.system.n_rf);
            let k_hat = uniform_count(k);
            if n % k_hat != 0 {
                bad.push(format!(
                    "ubmss needs K̂ = 2^⌊log₂K⌋ to divide N: channel {i} has K = {k}, K̂ = {k_hat}, N = {n}"
                ));
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(bad))
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Design and evaluation channels per subcarrier, with analog codebooks.
pub struct Prepared {
    pub design: Vec<CMatrix>,
    pub evaluation: Vec<CMatrix>,
    pub analog: std::result::Result<Vec<AnalogCodebook>, String>,
}

/// Channels the shaping sees (`design`) and the link uses (`truth`).
pub fn prepare(cfg: &ExperimentConfig, design: &ChannelRealization, truth: &ChannelRealization) -> Result<Prepared> {
    let (tx, rx) = geometries(&cfg.system)?;
    let tx_dict = Dictionary::for_transmitter(&tx, design.paths.as_ref())?;
    let (design_h, eval_h, design_mats): (Vec<CMatrix>, Vec<CMatrix>, Vec<ChannelMatrix>) = match cfg.receiver {
        Some(r) => {
            let rx_dict = Dictionary::for_receiver(&rx, design.paths.as_ref())?;
            let (comb, eff) = design_hybrid_combiner(design.primary(), r.n_rf_r, Some(&rx_dict))?;
            let w = comb.combined();
            let eval = w.adjoint() * truth.h();
            (vec![eff.clone()], vec![eval], vec![ChannelMatrix::new(eff)])
        }
        None => (
            design.subcarriers.iter().map(|m| m.h.clone()).collect(),
            truth.subcarriers.iter().map(|m| m.h.clone()).collect(),
            design.subcarriers.clone(),
        ),
    };
    let needs_analog = cfg.methods.iter().any(|m| m.is_hybrid());
    let analog = if !needs_analog {
        Err("no hybrid methods requested".to_string())
    } else if design_mats.len() > 1 {
        build_broadband_codebooks(&design_mats, cfg.system.n_rf, cfg.structure, Some(&tx_dict)).map_err(|e| e.to_string())
    } else {
        enumerate_subspaces(&design_mats[0], cfg.system.n_rf)
            .and_then(|s| build_analog_codebook(&s, cfg.structure, Some(&tx_dict)))
            .map(|a| vec![a])
            .map_err(|e| e.to_string())
    };
    Ok(Prepared { design: design_h, evaluation: eval_h, analog })
}

/// Shape one codebook with `method` on channel `h`.
pub fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    h: &CMatrix,
    analog: Option<&AnalogCodebook>,
    solver: &SolverConfig,
) -> Result<ShapingCodebook> {
    let n_bits = cfg.system.n_bits;
    let need = || analog.ok_or_else(|| Error::invalid("analog codebook unavailable"));
    match method {
        Method::Joss => joss(h, need()?, n_bits, solver),
        Method::Fpss => {
            let a = need()?;
            fpss(h, a, n_bits, &candidate_sets(a, n_bits, cfg.candidate_cap)?, solver)
        }
        Method::Dpss => {
            let a = need()?;
            dpss(h, a, n_bits, &candidate_sets(a, n_bits, cfg.candidate_cap)?, solver)
        }
        Method::Fdss => fdss(h, n_bits, solver),
        Method::FdssMser => fdss_criterion(h, n_bits, Criterion::Mser { rho: db_to_linear(cfg.design_snr_db) }, solver),
        Method::FdssMmi => fdss_criterion(
            h,
            n_bits,
            Criterion::Mmi { rho: db_to_linear(cfg.design_snr_db), n_r: h.nrows() },
            solver,
        ),
        Method::Bbss => baseline(h, need()?, n_bits, BaselineMode::Bbss, cfg.candidate_cap),
        Method::Ubmss => baseline(h, need()?, n_bits, BaselineMode::Ubmss, cfg.candidate_cap),
        Method::Amss => baseline(h, need()?, n_bits, BaselineMode::Amss, cfg.candidate_cap),
    }
}

fn solver_for(cfg: &ExperimentConfig, channel: usize) -> SolverConfig {
    cfg.solver
        .with_seed(seed::mix2(seed::mix(cfg.seed, cfg.solver.seed), SOLVER_STREAM, channel as u64))
}

/// Codebooks per method and subcarrier for one prepared channel.
pub fn shape_all(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    solver: &SolverConfig,
) -> Vec<(Method, Vec<Result<ShapingCodebook>>)> {
    cfg.methods
        .iter()
        .map(|&m| {
            let books = prep
                .design
                .iter()
                .enumerate()
                .map(|(k, h)| {
                    let analog = match &prep.analog {
                        Ok(a) => Some(&a[k]),
                        Err(e) if m.is_hybrid() => return Err(Error::invalid(e.clone())),
                        Err(_) => None,
                    };
                    run_method(cfg, m, h, analog, solver)
                })
                .collect();
            (m, books)
        })
        .collect()
}

/// One shaped codebook of a configured experiment.
#[derive(Debug)]
pub struct DesignedCodebook {
    pub channel_id: usize,
    pub carrier: Option<usize>,
    pub method: Method,
    pub book: Result<ShapingCodebook>,
}

/// Every codebook `run_experiment` would design, without evaluating them.
pub fn design_codebooks(cfg: &ExperimentConfig) -> Result<Vec<DesignedCodebook>> {
    cfg.validate()?;
    let chans = build_channels(cfg)?;
    validate_channels(cfg, &chans)?;
    let per_channel: Vec<Result<Vec<DesignedCodebook>>> = chans
        .par_iter()
        .enumerate()
        .map(|(idx, chan)| {
            let prep = prepare(cfg, chan, chan)?;
            let carriers = prep.design.len();
            let mut out = Vec::new();
            for (method, books) in shape_all(cfg, &prep, &solver_for(cfg, idx)) {
                for (k, book) in books.into_iter().enumerate() {
                    out.push(DesignedCodebook {
                        channel_id: idx * carriers + k,
                        carrier: (carriers > 1).then_some(k),
                        method,
                        book,
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for p in per_channel {
        all.extend(p?);
    }
    Ok(all)
}

fn impaired(cfg: &ExperimentConfig, book: &ShapingCodebook) -> Result<ShapingCodebook> {
    match cfg.eval.as_ref().and_then(|e| e.dac_bits) {
        Some(b) => quantize_dac(book, b),
        None => Ok(book.clone()),
    }
}

struct ChannelOutcome {
    rows: Vec<DminRow>,
    failures: Vec<FailureRow>,
    /// Per method: one SER point list per subcarrier.
    ser: Vec<(Method, Vec<Vec<(usize, SerPoint)>>)>,
}

fn process_channel(cfg: &ExperimentConfig, idx: usize, chan: &ChannelRealization) -> Result<ChannelOutcome> {
    let solver = solver_for(cfg, idx);
    let prep = prepare(cfg, chan, chan)?;
    let shaped = shape_all(cfg, &prep, &solver);
    let carriers = prep.design.len();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (m, books) in &shaped {
        for (k, b) in books.iter().enumerate() {
            let flat = idx * carriers + k;
            match b {
                Ok(book) => {
                    let eval_book = impaired(cfg, book)?;
                    rows.push(DminRow {
                        method: m.tag().to_string(),
                        channel_id: flat,
                        carrier: (carriers > 1).then_some(k),
                        d_min: book.d_min_design.unwrap_or(f64::NAN),
                        d_min_eval: min_distance(&eval_book, &prep.evaluation[k])?,
                        allocation: book.stats.allocation.clone().map(|a| a.sizes).unwrap_or_default(),
                        iterations: book.stats.iterations,
                        best_candidate_d_min: book.stats.best_candidate_d_min,
                    });
                }
                Err(e) => failures.push(FailureRow { method: m.tag().to_string(), channel_id: flat, message: e.to_string() }),
            }
        }
    }
    let mut ser = Vec::new();
    if let Some(ev) = &cfg.eval {
        let eta = ev.csi_eta.unwrap_or(0.0);
        for (m, books) in &shaped {
            let mut per_carrier = Vec::with_capacity(carriers);
            for (k, b) in books.iter().enumerate() {
                let flat = (idx * carriers + k) as u64;
                let eval_seed = seed::mix2(seed::mix(cfg.seed, ev.seed), EVAL_STREAM, flat);
                let Ok(book) = b else {
                    per_carrier.push(Vec::new());
                    continue;
                };
                let mut pts = Vec::with_capacity(ev.snr_db_list.len());
                for (si, &snr) in ev.snr_db_list.iter().enumerate() {
                    let (use_book, h_eval) = if eta > 0.0 {
                        // redesign on the imperfect channel for this noise level
                        let noise = 1.0 / db_to_linear(snr);
                        let csi_seed = seed::mix2(cfg.seed, CSI_STREAM, idx as u64 * 1_000_003 + si as u64);
                        let im = inject_csi_error(chan, eta, noise, csi_seed)?;
                        let p = prepare(cfg, &im, chan)?;
                        let analog = p.analog.as_ref().ok().map(|a| &a[k]);
                        match run_method(cfg, *m, &p.design[k], analog, &solver) {
                            Ok(bk) => (impaired(cfg, &bk)?, p.evaluation[k].clone()),
                            Err(e) => {
                                failures.push(FailureRow {
                                    method: m.tag().to_string(),
                                    channel_id: flat as usize,
                                    message: format!("imperfect-CSI design at {snr} dB: {e}"),
                                });
                                continue;
                            }
                        }
                    } else {
                        (impaired(cfg, book)?, prep.evaluation[k].clone())
                    };
                    pts.push((si, ser_point(&use_book, &h_eval, snr, si, ev.trials, eval_seed)?));
                }
                per_carrier.push(pts);
            }
            ser.push((*m, per_carrier));
        }
    }
    Ok(ChannelOutcome { rows, failures, ser })
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Run the configured experiment and write its artifacts to `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = compute_report(cfg)?;
    write_artifacts(&report, &cfg.out_dir, cfg.eval.is_some())?;
    Ok(report)
}

/// Everything `run_experiment` does except writing files.
pub fn compute_report(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let chans = build_channels(cfg)?;
    validate_channels(cfg, &chans)?;
    let outcomes: Vec<Result<ChannelOutcome>> = chans
        .par_iter()
        .enumerate()
        .map(|(i, c)| process_channel(cfg, i, c))
        .collect();
    let outcomes: Vec<ChannelOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut dmin = Vec::new();
    let mut failures = Vec::new();
    for o in &outcomes {
        dmin.extend(o.rows.iter().cloned());
        failures.extend(o.failures.iter().cloned());
    }
    let methods = cfg
        .methods
        .iter()
        .map(|m| {
            let rows: Vec<&DminRow> = dmin.iter().filter(|r| r.method == m.tag()).collect();
            let mut d: Vec<f64> = rows.iter().map(|r| r.d_min).collect();
            let n = rows.len();
            MethodSummary {
                method: m.tag().to_string(),
                channels: n,
                failures: failures.iter().filter(|f| f.method == m.tag()).count(),
                mean_d_min: (n > 0).then(|| d.iter().sum::<f64>() / n as f64),
                median_d_min: median(&mut d),
                mean_iterations: (n > 0).then(|| rows.iter().map(|r| r.iterations as f64).sum::<f64>() / n as f64),
            }
        })
        .collect();

    let mut ser = Vec::new();
    if let Some(ev) = &cfg.eval {
        for (mi, m) in cfg.methods.iter().enumerate() {
            for (si, &snr) in ev.snr_db_list.iter().enumerate() {
                let mut trials = 0;
                let mut errors = 0;
                let mut bound = 0.0;
                let mut count = 0usize;
                for o in &outcomes {
                    for pts in &o.ser[mi].1 {
                        if let Some((_, p)) = pts.iter().find(|(i, _)| *i == si) {
                            trials += p.trials;
                            errors += p.errors;
                            bound += p.union_bound;
                            count += 1;
                        }
                    }
                }
                if count > 0 {
                    ser.push(SerRow {
                        method: m.tag().to_string(),
                        snr_db: snr,
                        trials,
                        errors,
                        ser: errors as f64 / trials as f64,
                        union_bound: bound / count as f64,
                    });
                }
            }
        }
    }
    Ok(ExperimentReport {
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            crate_name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        methods,
        dmin,
        failures,
        ser,
    })
}

impl ExperimentReport {
    /// True when no method produced a codebook on any channel.
    pub fn all_failed(&self) -> bool {
        self.dmin.is_empty() && !self.failures.is_empty()
    }
}

/// `report.json` plus the CSV tables that the report contains.
pub fn write_artifacts(report: &ExperimentReport, out_dir: &Path, with_ser: bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let rp = out_dir.join("report.json");
    crate::io::write_json(&rp, report)?;
    files.push(rp);
    if !report.dmin.is_empty() {
        files.extend(emit_plotdata(report, PlotKind::Cdf, out_dir)?);
        files.extend(emit_plotdata(report, PlotKind::DminBar, out_dir)?);
    }
    if with_ser && !report.ser.is_empty() {
        files.extend(emit_plotdata(report, PlotKind::Ser, out_dir)?);
    }
    Ok(files)
}

/// Set the dotted `field` of a JSON config to `value`.
pub fn set_field(doc: &mut serde_json::Value, field: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = field.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Validation(vec![format!("sweep field {field}: {p} is not inside an object")]))?;
        if i + 1 == parts.len() {
            obj.insert((*p).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*p).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(Error::Validation(vec![format!("sweep field {field} is empty")]))
}

/// One run per value of `field`, written to `out_dir/<field>=<index>`.
pub fn sweep(
    base: &serde_json::Value,
    field: &str,
    values: &[serde_json::Value],
    out_dir: &Path,
) -> Result<Vec<(PathBuf, ExperimentReport)>> {
    if values.is_empty() {
        return Err(Error::Validation(vec!["sweep needs at least one value".into()]));
    }
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut doc = base.clone();
        set_field(&mut doc, field, v.clone())?;
        let mut cfg: ExperimentConfig = serde_json::from_value(doc)
            .map_err(|e| Error::Validation(vec![format!("sweep value {v}: {e}")]))?;
        let dir = out_dir.join(format!("{field}={i}"));
        cfg.out_dir = dir.clone();
        let report = run_experiment(&cfg)?;
        out.push((dir, report));
    }
    Ok(out)
}

//! Monte Carlo sweep runner. One variable (antenna count, Eb/N0, or
//! detection depth) sweeps over a value list; every configured receiver
//! runs on the same channel, noise, and data realizations at each point,
//! so scheme-to-scheme differences are paired rather than buried in
//! independent sampling noise.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::s;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channel::{
    builtin_models, draw_channel, find_model, parse_pdp_table, propagate, sample_pdp, PdpModel,
    SampledPdp,
};
use crate::conventional::{
    ls_estimate, mmse_combine, mrc_combine, reconstruct_cfr, ChannelEstimate,
};
use crate::error::{Error, Result};
use crate::metrics::{average_sinr_db, average_sir_db, ebn0_to_noise_var, ErrorAccumulator};
use crate::pilots::{build_frames, zc_pilot_book, PilotBook, PilotPlacement};
use crate::rng::TrialStreams;
use crate::sliding::{run_sliding, AlphaMode, AlphaTable};
use crate::waveform::{hard_decision, Constellation, SpaceTimeGrid, SystemConfig, UserFrame};

/// Receiver under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Comb pilots, least-squares estimation, impulse-response
    /// reconstruction, maximum-ratio combining.
    ConventionalMrc,
    /// Same front end with the regularized-inverse combiner.
    ConventionalMmse,
    /// Single-pilot-subcarrier sliding receiver. `None` takes the depth
    /// from the configuration (or the depth sweep); `Some(d)` pins it.
    Sliding { depth: Option<usize> },
}

impl Scheme {
    pub fn is_sliding(&self) -> bool {
        matches!(self, Scheme::Sliding { .. })
    }

    /// Depth this scheme runs at under `config`, None for conventional.
    pub fn resolved_depth(&self, config: &SystemConfig) -> Option<usize> {
        match self {
            Scheme::Sliding { depth } => Some(depth.unwrap_or(config.depth)),
            _ => None,
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "conventional-mrc" => Ok(Scheme::ConventionalMrc),
            "conventional-mmse" => Ok(Scheme::ConventionalMmse),
            "sliding" => Ok(Scheme::Sliding { depth: None }),
            _ => {
                if let Some(d) = text.strip_prefix("sliding:") {
                    let depth = d.parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad depth in scheme '{text}'"))
                    })?;
                    Ok(Scheme::Sliding { depth: Some(depth) })
                } else {
                    Err(Error::InvalidConfig(format!(
                        "unknown scheme '{text}' (expected conventional-mrc, \
                         conventional-mmse, sliding, or sliding:D)"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::ConventionalMrc => write!(f, "conventional-mrc"),
            Scheme::ConventionalMmse => write!(f, "conventional-mmse"),
            Scheme::Sliding { depth: None } => write!(f, "sliding"),
            Scheme::Sliding { depth: Some(d) } => write!(f, "sliding:{d}"),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Which knob the sweep turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    /// Receive antenna count.
    Q,
    /// Eb/N0 in dB, converted to noise variance per point.
    Ebn0,
    /// Sliding detection depth.
    Depth,
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "q" | "Q" => Ok(SweepVariable::Q),
            "ebn0" => Ok(SweepVariable::Ebn0),
            "depth" => Ok(SweepVariable::Depth),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep variable '{text}' (expected q, ebn0, or depth)"
            ))),
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepVariable::Q => write!(f, "q"),
            SweepVariable::Ebn0 => write!(f, "ebn0"),
            SweepVariable::Depth => write!(f, "depth"),
        }
    }
}

/// Full description of one experiment; serializable so a run can be
/// reproduced from its JSON sidecar alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schemes: Vec<Scheme>,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    /// Independent channel/noise/data realizations per sweep point.
    pub trials: usize,
    pub config: SystemConfig,
    /// Power-delay profile name (built in, or from `pdp_file`).
    pub pdp: String,
    /// Optional table of extra profiles; names there shadow built-ins.
    pub pdp_file: Option<PathBuf>,
    pub alpha_mode: AlphaMode,
    /// CSV output path; the spec itself lands next to it as `<out>.json`.
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::ConventionalMmse, Scheme::Sliding { depth: None }],
            sweep: SweepVariable::Ebn0,
            values: vec![0.0],
            trials: 10,
            config: SystemConfig::default(),
            pdp: "etu".into(),
            pdp_file: None,
            alpha_mode: AlphaMode::Exact,
            out: PathBuf::from("results.csv"),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("no schemes to run".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("no sweep values".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        for &v in &self.values {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("sweep value {v} not finite")));
            }
            match self.sweep {
                SweepVariable::Q if v < 1.0 || v.fract() != 0.0 => {
                    return Err(Error::InvalidConfig(format!(
                        "antenna sweep needs positive integers, got {v}"
                    )));
                }
                SweepVariable::Depth if v < 0.0 || v.fract() != 0.0 => {
                    return Err(Error::InvalidConfig(format!(
                        "depth sweep needs non-negative integers, got {v}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One CSV row: a scheme at a sweep point, aggregated over trials.
/// `frames` counts the realizations behind the metrics; frames the
/// detector abandoned are excluded from the averages and reported in
/// `failed_frames`. `None` metrics print as `NA`.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    pub scheme: Scheme,
    pub antennas: usize,
    pub ebn0_db: Option<f64>,
    /// Input SNR per receive antenna, 1 / noise variance, in dB.
    pub snr_db: f64,
    pub depth: Option<usize>,
    pub sinr_db: Option<f64>,
    pub sir_db: Option<f64>,
    pub ber: Option<f64>,
    pub frames: u64,
    pub failed_frames: u64,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "scheme,Q,ebn0_db,snr_db,depth,sinr_db,sir_db,ber,frames,failed_frames,seed";

fn cell_f64(v: f64) -> String {
    // Shortest round-trip decimal; infinities print as "inf". Adding 0.0
    // collapses negative zero so -0 never appears in a cell.
    format!("{}", v + 0.0)
}

fn cell_opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

impl MetricRecord {
    pub fn csv_row(&self) -> String {
        [
            self.scheme.to_string(),
            self.antennas.to_string(),
            cell_opt(self.ebn0_db.map(cell_f64)),
            cell_f64(self.snr_db),
            cell_opt(self.depth),
            cell_opt(self.sinr_db.map(cell_f64)),
            cell_opt(self.sir_db.map(cell_f64)),
            cell_opt(self.ber.map(cell_f64)),
            self.frames.to_string(),
            self.failed_frames.to_string(),
            self.seed.to_string(),
        ]
        .join(",")
    }
}

pub fn write_csv<W: io::Write>(records: &[MetricRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for record in records {
        writeln!(out, "{}", record.csv_row())?;
    }
    Ok(())
}

pub fn csv_string(records: &[MetricRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("rows are ASCII")
}

/// Look up a profile by name among `pdp_file` entries (if given) and the
/// built-in models; file entries shadow built-ins of the same name.
pub fn resolve_model(name: &str, pdp_file: Option<&Path>) -> Result<PdpModel> {
    let mut models = Vec::new();
    if let Some(path) = pdp_file {
        models.extend(parse_pdp_table(&fs::read_to_string(path)?)?);
    }
    models.extend(builtin_models());
    find_model(&models, name).cloned()
}

/// Inputs shared by every trial of every sweep point.
struct Shared {
    schemes: Vec<Scheme>,
    pdps: Vec<SampledPdp>,
    book: PilotBook,
    constellation: Constellation,
    conv_placement: Option<PilotPlacement>,
    sliding_placement: PilotPlacement,
    alpha: AlphaTable,
}

impl Shared {
    fn prepare(spec: &ExperimentSpec) -> Result<Self> {
        let cfg = &spec.config;
        let model = resolve_model(&spec.pdp, spec.pdp_file.as_deref())?;
        let pdp = sample_pdp(&model, cfg.sample_rate())?;
        cfg.validate_channel_len(pdp.channel_len())?;
        let pdps = vec![pdp; cfg.users];
        let book = zc_pilot_book(cfg.pilot_slots, cfg.users, cfg.zc_root)?;
        let constellation = Constellation::new(cfg.constellation_order)?;
        let conv_placement = if spec.schemes.iter().any(|s| !s.is_sliding()) {
            Some(PilotPlacement::conventional(
                cfg.subcarriers,
                pdps[0].channel_len(),
                cfg.pilot_slots,
            )?)
        } else {
            None
        };
        let sliding_placement = PilotPlacement::single_subcarrier(
            cfg.subcarriers,
            cfg.reference_index(),
            cfg.pilot_slots,
        );
        let mut radius = cfg.depth;
        for scheme in &spec.schemes {
            if let Scheme::Sliding { depth: Some(d) } = scheme {
                radius = radius.max(*d);
            }
        }
        if spec.sweep == SweepVariable::Depth {
            for &v in &spec.values {
                radius = radius.max(v as usize);
            }
        }
        let alpha = AlphaTable::new(
            spec.alpha_mode,
            &pdps,
            cfg.subcarriers,
            cfg.subcarrier_spacing,
            cfg.sample_rate(),
            radius,
        );
        Ok(Self {
            schemes: spec.schemes.clone(),
            pdps,
            book,
            constellation,
            conv_placement,
            sliding_placement,
            alpha,
        })
    }
}

/// One sweep point: the base configuration with the swept variable applied.
struct Point {
    cfg: SystemConfig,
    value: f64,
}

fn make_point(spec: &ExperimentSpec, value: f64) -> Result<Point> {
    let mut cfg = spec.config.clone();
    match spec.sweep {
        SweepVariable::Q => cfg.antennas = value as usize,
        SweepVariable::Ebn0 => {
            cfg.noise_var = ebn0_to_noise_var(value, cfg.constellation_order);
        }
        SweepVariable::Depth => cfg.depth = value as usize,
    }
    cfg.validate()?;
    Ok(Point { cfg, value })
}

enum Combiner {
    Mrc,
    Mmse,
}

fn conventional_estimates(
    grid: &SpaceTimeGrid,
    placement: &PilotPlacement,
    book: &PilotBook,
    cfg: &SystemConfig,
) -> Result<Vec<ChannelEstimate>> {
    let mut at_pilots = Vec::with_capacity(placement.pilot_subcarriers.len());
    for &m in &placement.pilot_subcarriers {
        let y = grid.subcarrier(m);
        at_pilots.push(ls_estimate(
            y.slice(s![.., ..cfg.pilot_slots]),
            book,
            cfg.noise_var,
        )?);
    }
    reconstruct_cfr(&at_pilots, &placement.pilot_subcarriers, cfg.subcarriers)
}

fn accumulate_conventional(
    acc: &mut ErrorAccumulator,
    grid: &SpaceTimeGrid,
    frames: &[UserFrame],
    placement: &PilotPlacement,
    estimates: &[ChannelEstimate],
    combiner: &Combiner,
    constellation: &Constellation,
    cfg: &SystemConfig,
) -> Result<()> {
    let bits = constellation.bits_per_symbol();
    for m in 0..cfg.subcarriers {
        let y = grid.subcarrier(m);
        let est = &estimates[m];
        let x_hat = match combiner {
            Combiner::Mrc => mrc_combine(y, est)?,
            Combiner::Mmse => mmse_combine(y, est, cfg.noise_var)?,
        };
        let first_data = if placement.is_pilot_subcarrier(m) {
            cfg.pilot_slots
        } else {
            0
        };
        for n in first_data..cfg.n_symbols() {
            for (k, frame) in frames.iter().enumerate() {
                let soft = x_hat[(k, n)];
                acc.add_symbol(k, soft, frame.symbols[(m, n)]);
                let (_, label) = hard_decision(soft, constellation);
                acc.add_labels(k, label, frame.labels[(m, n)], bits);
            }
        }
    }
    acc.count_frame(false);
    Ok(())
}

fn accumulate_sliding(
    acc: &mut ErrorAccumulator,
    result: &crate::detection::DetectionResult,
    frames: &[UserFrame],
    placement: &PilotPlacement,
    constellation: &Constellation,
) {
    if result.failed {
        acc.count_frame(true);
        return;
    }
    let bits = constellation.bits_per_symbol();
    let (m_n, n_n) = frames[0].shape();
    for m in 0..m_n {
        for n in 0..n_n {
            if placement.is_pilot_re(m, n) {
                continue;
            }
            for (k, frame) in frames.iter().enumerate() {
                acc.add_symbol(k, result.soft[(m, k, n)], frame.symbols[(m, n)]);
                acc.add_labels(k, result.hard[(m, k, n)], frame.labels[(m, n)], bits);
            }
        }
    }
    acc.count_frame(false);
}

/// One realization of every scheme at one sweep point. Channel, noise,
/// and data bits depend only on (seed, trial), never on the point or the
/// scheme, so comparisons across points and schemes are paired.
fn run_trial(shared: &Shared, point: &Point, trial: usize) -> Result<Vec<ErrorAccumulator>> {
    let cfg = &point.cfg;
    let streams = TrialStreams::new(cfg.seed, trial as u64);
    let chan = draw_channel(&shared.pdps, cfg.antennas, &streams)?;
    let mut accs: Vec<ErrorAccumulator> = shared
        .schemes
        .iter()
        .map(|_| ErrorAccumulator::new(cfg.users))
        .collect();

    if let Some(placement) = &shared.conv_placement {
        let frames = build_frames(
            placement,
            &shared.book,
            &shared.constellation,
            cfg,
            &streams,
        )?;
        let grid = propagate(&frames, &chan, cfg, &streams)?;
        let estimates = conventional_estimates(&grid, placement, &shared.book, cfg)?;
        for (idx, scheme) in shared.schemes.iter().enumerate() {
            let combiner = match scheme {
                Scheme::ConventionalMrc => Combiner::Mrc,
                Scheme::ConventionalMmse => Combiner::Mmse,
                Scheme::Sliding { .. } => continue,
            };
            accumulate_conventional(
                &mut accs[idx],
                &grid,
                &frames,
                placement,
                &estimates,
                &combiner,
                &shared.constellation,
                cfg,
            )?;
        }
    }

    if shared.schemes.iter().any(Scheme::is_sliding) {
        let placement = &shared.sliding_placement;
        let frames = build_frames(
            placement,
            &shared.book,
            &shared.constellation,
            cfg,
            &streams,
        )?;
        let grid = propagate(&frames, &chan, cfg, &streams)?;
        for (idx, scheme) in shared.schemes.iter().enumerate() {
            let Scheme::Sliding { depth } = scheme else {
                continue;
            };
            let mut cfg_d = cfg.clone();
            if let Some(d) = depth {
                cfg_d.depth = *d;
            }
            let result = run_sliding(&grid, placement, &shared.book, &shared.alpha, &cfg_d)?;
            accumulate_sliding(
                &mut accs[idx],
                &result,
                &frames,
                placement,
                &shared.constellation,
            );
        }
    }
    Ok(accs)
}

fn point_records(
    spec: &ExperimentSpec,
    point: &Point,
    outcomes: &[Result<Vec<ErrorAccumulator>>],
) -> Vec<MetricRecord> {
    let mut accs: Vec<ErrorAccumulator> = spec
        .schemes
        .iter()
        .map(|_| ErrorAccumulator::new(spec.config.users))
        .collect();
    let mut failure = None;
    for outcome in outcomes {
        match outcome {
            Ok(per_scheme) => {
                for (acc, part) in accs.iter_mut().zip(per_scheme) {
                    acc.merge(part);
                }
            }
            Err(err) => {
                failure = Some(err.to_string());
                break;
            }
        }
    }
    if let Some(msg) = &failure {
        eprintln!(
            "sweep point {} = {}: aborted, {msg}",
            spec.sweep, point.value
        );
    }
    let noiseless = point.cfg.noise_var == 0.0;
    let ebn0_db = (spec.sweep == SweepVariable::Ebn0).then_some(point.value);
    let snr_db = if noiseless {
        f64::INFINITY
    } else {
        -10.0 * point.cfg.noise_var.log10()
    };
    spec.schemes
        .iter()
        .zip(&accs)
        .map(|(scheme, acc)| {
            let usable = failure.is_none() && acc.successful_frames() > 0;
            let (sinr_db, sir_db, ber) = if usable {
                let sir = if noiseless {
                    average_sir_db(acc, point.cfg.noise_var).expect("noiseless")
                } else {
                    None
                };
                (average_sinr_db(acc), sir, acc.ber())
            } else {
                (None, None, None)
            };
            let (frames, failed_frames) = if failure.is_some() {
                (0, spec.trials as u64)
            } else {
                (acc.successful_frames(), acc.failed_frames())
            };
            MetricRecord {
                scheme: *scheme,
                antennas: point.cfg.antennas,
                ebn0_db,
                snr_db,
                depth: scheme.resolved_depth(&point.cfg),
                sinr_db,
                sir_db,
                ber,
                frames,
                failed_frames,
                seed: point.cfg.seed,
            }
        })
        .collect()
}

/// Run the sweep. Trials run in parallel under the ambient rayon pool;
/// results are reduced in a fixed order, so the records (and the CSV
/// written from them) are identical for any worker count. A module error
/// inside a trial aborts that sweep point: its schemes get diagnostic
/// rows with `NA` metrics and zero frames, and the sweep moves on.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<MetricRecord>> {
    spec.validate()?;
    let shared = Shared::prepare(spec)?;
    let points: Vec<Point> = spec
        .values
        .iter()
        .map(|&v| make_point(spec, v))
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let outcomes: Vec<Result<Vec<ErrorAccumulator>>> = tasks
        .par_iter()
        .map(|&(p, t)| run_trial(&shared, &points[p], t))
        .collect();

    let mut records = Vec::with_capacity(points.len() * spec.schemes.len());
    for (p, point) in points.iter().enumerate() {
        let slice = &outcomes[p * spec.trials..(p + 1) * spec.trials];
        records.extend(point_records(spec, point, slice));
    }
    Ok(records)
}

/// Write the CSV and its JSON sidecar (`<out>.json`, the full spec).
/// Returns both paths.
pub fn write_outputs(
    spec: &ExperimentSpec,
    records: &[MetricRecord],
) -> Result<(PathBuf, PathBuf)> {
    let csv_path = spec.out.clone();
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&csv_path, csv_string(records))?;
    let mut json_path = csv_path.clone().into_os_string();
    json_path.push(".json");
    let json_path = PathBuf::from(json_path);
    let mut body = serde_json::to_string_pretty(spec)?;
    body.push('\n');
    fs::write(&json_path, body)?;
    Ok((csv_path, json_path))
}

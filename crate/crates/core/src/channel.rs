//! Multipath channel models: power-delay profiles, Rayleigh tap draws,
//! frequency response, and uplink propagation.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::TrialStreams;
use crate::waveform::{
    assemble_space_time, ofdm_demodulate, ofdm_modulate, PropagationPath, SpaceTimeGrid,
    SystemConfig, UserFrame,
};

/// A power-delay profile: tap delays in seconds with mean powers in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpModel {
    pub name: String,
    pub delays_s: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl PdpModel {
    pub fn new(name: impl Into<String>, delays_s: Vec<f64>, powers_db: Vec<f64>) -> Result<Self> {
        let model = Self {
            name: name.into(),
            delays_s,
            powers_db,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.delays_s.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "profile '{}' has no taps",
                self.name
            )));
        }
        if self.delays_s.len() != self.powers_db.len() {
            return Err(Error::InvalidConfig(format!(
                "profile '{}': {} delays vs {} powers",
                self.name,
                self.delays_s.len(),
                self.powers_db.len()
            )));
        }
        let increasing = self.delays_s.windows(2).all(|w| w[1] > w[0]);
        if !(self.delays_s[0] >= 0.0 && increasing) {
            return Err(Error::InvalidConfig(format!(
                "profile '{}': delays must be non-negative and strictly increasing",
                self.name
            )));
        }
        Ok(())
    }

    /// Longest tap delay in seconds.
    pub fn span_s(&self) -> f64 {
        *self.delays_s.last().expect("validated non-empty")
    }
}

const NS: f64 = 1e-9;

/// 3GPP Extended Typical Urban profile.
pub fn etu() -> PdpModel {
    PdpModel::new(
        "ETU",
        [
            0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0,
        ]
        .iter()
        .map(|d| d * NS)
        .collect(),
        vec![-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0],
    )
    .expect("static profile is valid")
}

/// 3GPP Extended Pedestrian A profile.
pub fn epa() -> PdpModel {
    PdpModel::new(
        "EPA",
        [0.0, 30.0, 70.0, 90.0, 110.0, 190.0, 410.0]
            .iter()
            .map(|d| d * NS)
            .collect(),
        vec![0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8],
    )
    .expect("static profile is valid")
}

/// 3GPP Extended Vehicular A profile.
pub fn eva() -> PdpModel {
    PdpModel::new(
        "EVA",
        [
            0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0,
        ]
        .iter()
        .map(|d| d * NS)
        .collect(),
        vec![0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9],
    )
    .expect("static profile is valid")
}

pub fn builtin_models() -> Vec<PdpModel> {
    vec![etu(), epa(), eva()]
}

/// Look up a profile by name, case-insensitively.
pub fn find_model<'a>(models: &'a [PdpModel], name: &str) -> Result<&'a PdpModel> {
    models
        .iter()
        .find(|m| m.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownPdp(name.to_string()))
}

/// Parse a whitespace-separated profile table: one `name delay_ns power_db`
/// entry per line, `#` starts a comment. Lines sharing a name form one
/// profile, in first-appearance order.
pub fn parse_pdp_table(text: &str) -> Result<Vec<PdpModel>> {
    let mut order: Vec<String> = Vec::new();
    let mut taps: std::collections::HashMap<String, (Vec<f64>, Vec<f64>)> =
        std::collections::HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::PdpParse {
                line: idx + 1,
                msg: format!("cannot parse {what} '{s}'"),
            })
        };
        let mut fields = line.split_whitespace();
        let (name, delay, power) = match (fields.next(), fields.next(), fields.next()) {
            (Some(n), Some(d), Some(p)) => (n, d, p),
            _ => {
                return Err(Error::PdpParse {
                    line: idx + 1,
                    msg: "expected 'name delay_ns power_db'".into(),
                })
            }
        };
        if fields.next().is_some() {
            return Err(Error::PdpParse {
                line: idx + 1,
                msg: "trailing fields after 'name delay_ns power_db'".into(),
            });
        }
        let delay_s = parse(delay, "delay")? * NS;
        let power_db = parse(power, "power")?;
        if !taps.contains_key(name) {
            order.push(name.to_string());
        }
        let entry = taps.entry(name.to_string()).or_default();
        entry.0.push(delay_s);
        entry.1.push(power_db);
    }
    order
        .into_iter()
        .map(|name| {
            let (delays, powers) = taps.remove(&name).expect("collected above");
            PdpModel::new(name, delays, powers)
        })
        .collect()
}

/// A profile resolved onto the sampling grid: mean tap powers per sample
/// index, normalized to unit total power.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPdp {
    /// rho[l] = mean power of tap l; length is the channel length L.
    pub rho: Vec<f64>,
}

impl SampledPdp {
    pub fn channel_len(&self) -> usize {
        self.rho.len()
    }
}

/// Resolve a profile onto the sampling grid of rate `sample_rate_hz`.
///
/// Each specified tap lands at the sample index containing its delay
/// (truncation, with a half-nanosecond-scale guard so delays intended to be
/// exact grid multiples are not knocked one sample down by rounding error).
/// Taps that land on the same index add in linear power, and the result is
/// normalized to unit total power.
pub fn sample_pdp(model: &PdpModel, sample_rate_hz: f64) -> Result<SampledPdp> {
    if !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    model.validate()?;
    let indices: Vec<usize> = model
        .delays_s
        .iter()
        .map(|d| (d * sample_rate_hz + 1e-9) as usize)
        .collect();
    let len = indices.last().expect("validated non-empty") + 1;
    let mut rho = vec![0.0; len];
    for (idx, p_db) in indices.iter().zip(&model.powers_db) {
        rho[*idx] += 10f64.powf(p_db / 10.0);
    }
    let total: f64 = rho.iter().sum();
    for r in &mut rho {
        *r /= total;
    }
    Ok(SampledPdp { rho })
}

/// Coherence bandwidth in Hz, sample_rate / (L - 1); infinite for a
/// single-tap channel.
pub fn coherence_bandwidth(pdp: &SampledPdp, sample_rate_hz: f64) -> f64 {
    let l = pdp.channel_len();
    if l <= 1 {
        f64::INFINITY
    } else {
        sample_rate_hz / (l - 1) as f64
    }
}

/// One draw of all user-to-antenna impulse responses.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Taps, (antennas x users x L). Rows for users with shorter profiles
    /// are zero-padded.
    pub taps: Array3<Complex64>,
    /// Per-user sampled profile.
    pub pdps: Vec<SampledPdp>,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.taps.len_of(Axis(0))
    }

    pub fn users(&self) -> usize {
        self.taps.len_of(Axis(1))
    }

    pub fn channel_len(&self) -> usize {
        self.taps.len_of(Axis(2))
    }
}

/// Draw independent Rayleigh taps, tap l of user k having variance
/// `pdps[k].rho[l]`, from the per-(antenna, user) streams of `streams`.
pub fn draw_channel(
    pdps: &[SampledPdp],
    antennas: usize,
    streams: &TrialStreams,
) -> Result<ChannelRealization> {
    if pdps.is_empty() || antennas == 0 {
        return Err(Error::InvalidConfig(
            "draw_channel needs at least one user profile and one antenna".into(),
        ));
    }
    let users = pdps.len();
    let len = pdps
        .iter()
        .map(SampledPdp::channel_len)
        .max()
        .expect("non-empty");
    let mut taps = Array3::zeros((antennas, users, len));
    for q in 0..antennas {
        for (k, pdp) in pdps.iter().enumerate() {
            let mut rng = streams.channel_taps(q, k);
            for (l, &rho) in pdp.rho.iter().enumerate() {
                let sigma = (rho / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                taps[(q, k, l)] = Complex64::new(sigma * re, sigma * im);
            }
        }
    }
    Ok(ChannelRealization {
        taps,
        pdps: pdps.to_vec(),
    })
}

/// Channel frequency response at every subcarrier,
/// (subcarriers x antennas x users).
#[derive(Debug, Clone)]
pub struct CfrTensor {
    pub lambda: Array3<Complex64>,
}

impl CfrTensor {
    pub fn subcarriers(&self) -> usize {
        self.lambda.len_of(Axis(0))
    }

    /// The (antennas x users) response matrix at subcarrier `m`.
    pub fn at(&self, m: usize) -> ArrayView2<'_, Complex64> {
        self.lambda.index_axis(Axis(0), m)
    }
}

/// Frequency response of every impulse response:
/// lambda[m] = sum_l h[l] exp(-j 2 pi m l / M).
pub fn cir_to_cfr(chan: &ChannelRealization, subcarriers: usize) -> Result<CfrTensor> {
    let len = chan.channel_len();
    if len > subcarriers {
        return Err(Error::InvalidConfig(format!(
            "channel length {len} exceeds subcarrier count {subcarriers}"
        )));
    }
    let (q_n, k_n) = (chan.antennas(), chan.users());
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(subcarriers);
    let mut lambda = Array3::zeros((subcarriers, q_n, k_n));
    let mut buf = vec![Complex64::ZERO; subcarriers];
    for q in 0..q_n {
        for k in 0..k_n {
            buf.fill(Complex64::ZERO);
            for l in 0..len {
                buf[l] = chan.taps[(q, k, l)];
            }
            fft.process(&mut buf);
            for (m, v) in buf.iter().enumerate() {
                lambda[(m, q, k)] = *v;
            }
        }
    }
    Ok(CfrTensor { lambda })
}

/// Pass user frames through the channel and collect the per-subcarrier
/// receive tensor, using the path selected by `config.propagation`.
pub fn propagate(
    frames: &[UserFrame],
    chan: &ChannelRealization,
    config: &SystemConfig,
    streams: &TrialStreams,
) -> Result<SpaceTimeGrid> {
    match config.propagation {
        PropagationPath::FrequencyDomain => {
            let cfr = cir_to_cfr(chan, config.subcarriers)?;
            propagate_frequency_domain(frames, &cfr, config, streams)
        }
        PropagationPath::TimeDomain => propagate_time_domain(frames, chan, config, streams),
    }
}

/// Per-subcarrier model: Y_m = Lambda_m X_m + W_m. Exact when the channel
/// fits inside the cyclic prefix.
pub fn propagate_frequency_domain(
    frames: &[UserFrame],
    cfr: &CfrTensor,
    config: &SystemConfig,
    streams: &TrialStreams,
) -> Result<SpaceTimeGrid> {
    let (m_n, n_n) = check_frames(frames, config)?;
    let users = frames.len();
    let antennas = cfr.lambda.len_of(Axis(1));
    if cfr.subcarriers() != m_n || cfr.lambda.len_of(Axis(2)) != users {
        return Err(Error::DimensionMismatch(format!(
            "response tensor {:?} does not match {m_n} subcarriers x {users} users",
            cfr.lambda.dim()
        )));
    }
    let mut grid = SpaceTimeGrid::zeros(m_n, antennas, n_n);
    let mut x = Array2::zeros((users, n_n));
    for m in 0..m_n {
        for (k, frame) in frames.iter().enumerate() {
            x.row_mut(k).assign(&frame.symbols.row(m));
        }
        let lam = cfr.at(m);
        let mut out = grid.samples.index_axis_mut(Axis(0), m);
        ndarray::linalg::general_mat_mul(Complex64::ONE, &lam, &x, Complex64::ZERO, &mut out);
    }
    add_noise(&mut grid, config, streams);
    Ok(grid)
}

/// Reference path: OFDM-modulate each user, convolve with its impulse
/// response, sum over users, demodulate per antenna. Noise is injected per
/// resource element after demodulation, from the same streams as the
/// frequency-domain path, so both paths see identical noise.
pub fn propagate_time_domain(
    frames: &[UserFrame],
    chan: &ChannelRealization,
    config: &SystemConfig,
    streams: &TrialStreams,
) -> Result<SpaceTimeGrid> {
    let (_, n_n) = check_frames(frames, config)?;
    if chan.users() != frames.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} user frames vs {} channel users",
            frames.len(),
            chan.users()
        )));
    }
    config.validate_channel_len(chan.channel_len())?;
    let tx: Vec<Vec<Complex64>> = frames
        .iter()
        .map(|f| ofdm_modulate(&f.symbols, config))
        .collect::<Result<_>>()?;
    let sig_len = n_n * (config.cp_len + config.subcarriers);
    let mut antenna_frames = Vec::with_capacity(chan.antennas());
    let mut acc = vec![Complex64::ZERO; sig_len + chan.channel_len() - 1];
    for q in 0..chan.antennas() {
        acc.fill(Complex64::ZERO);
        for (k, sig) in tx.iter().enumerate() {
            for l in 0..chan.channel_len() {
                let h = chan.taps[(q, k, l)];
                if h == Complex64::ZERO {
                    continue;
                }
                for (i, s) in sig.iter().enumerate() {
                    acc[i + l] += h * s;
                }
            }
        }
        antenna_frames.push(ofdm_demodulate(&acc[..sig_len], config)?);
    }
    let mut grid = assemble_space_time(&antenna_frames)?;
    add_noise(&mut grid, config, streams);
    Ok(grid)
}

fn check_frames(frames: &[UserFrame], config: &SystemConfig) -> Result<(usize, usize)> {
    if frames.is_empty() {
        return Err(Error::DimensionMismatch("no user frames".into()));
    }
    let shape = frames[0].shape();
    if shape.0 != config.subcarriers || frames.iter().any(|f| f.shape() != shape) {
        return Err(Error::DimensionMismatch(format!(
            "user frames must all be {} x N, got {:?}",
            config.subcarriers, shape
        )));
    }
    Ok(shape)
}

/// Add circular white Gaussian noise of variance `noise_var` per resource
/// element, one stream per antenna. A noiseless run draws nothing.
fn add_noise(grid: &mut SpaceTimeGrid, config: &SystemConfig, streams: &TrialStreams) {
    if config.noise_var == 0.0 {
        return;
    }
    let sigma = (config.noise_var / 2.0).sqrt();
    let (m_n, q_n, n_n) = grid.samples.dim();
    for q in 0..q_n {
        let mut rng = streams.noise(q);
        for m in 0..m_n {
            for n in 0..n_n {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                grid.samples[(m, q, n)] += Complex64::new(sigma * re, sigma * im);
            }
        }
    }
}

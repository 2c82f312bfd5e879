//! OFDM framing, Gray-mapped square QAM, and the per-subcarrier space-time
//! view of the received signal.
//!
//! The uplink grid has `subcarriers` tones and `pilot_slots + data_slots`
//! OFDM symbols. After demodulation, slicing the received tensor at one
//! subcarrier m yields the (antennas x symbols) matrix that every receiver
//! in this crate works on.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which propagation model `channel::propagate` applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationPath {
    /// Per-subcarrier multiplication by the channel frequency response.
    #[default]
    FrequencyDomain,
    /// Full time-domain chain: modulate, convolve with the impulse
    /// response, add noise, demodulate. Reference path for validation.
    TimeDomain,
}

/// Dimensioning and operating point of one simulated uplink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of subcarriers M.
    pub subcarriers: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
    /// Number of single-antenna users K.
    pub users: usize,
    /// Number of base-station antennas Q.
    pub antennas: usize,
    /// Training symbols per frame N_p.
    pub pilot_slots: usize,
    /// Payload symbols per frame N_d.
    pub data_slots: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// Complex noise variance per resource element.
    pub noise_var: f64,
    /// Sliding-receiver cross-combining depth D.
    pub depth: usize,
    /// QAM order (4, 16, 64, ...).
    pub constellation_order: usize,
    /// Master seed for all random draws.
    pub seed: u64,
    /// Zadoff-Chu root of the pilot book.
    pub zc_root: u32,
    /// Reference subcarrier of the single-pilot-subcarrier frame;
    /// defaults to M/2.
    pub reference_subcarrier: Option<usize>,
    /// Propagation model.
    pub propagation: PropagationPath,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            subcarriers: 1024,
            cp_len: 80,
            users: 7,
            antennas: 200,
            pilot_slots: 7,
            data_slots: 7,
            subcarrier_spacing: 15e3,
            noise_var: 0.25,
            depth: 3,
            constellation_order: 16,
            seed: 1,
            zc_root: 1,
            reference_subcarrier: None,
            propagation: PropagationPath::FrequencyDomain,
        }
    }
}

impl SystemConfig {
    /// Total OFDM symbols per frame, N = N_p + N_d.
    pub fn n_symbols(&self) -> usize {
        self.pilot_slots + self.data_slots
    }

    /// Sampling rate f_s = M * subcarrier spacing.
    pub fn sample_rate(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing
    }

    /// Reference subcarrier index, defaulting to M/2.
    pub fn reference_index(&self) -> usize {
        self.reference_subcarrier.unwrap_or(self.subcarriers / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.subcarriers == 0 {
            return fail("subcarriers must be positive".into());
        }
        if self.users == 0 || self.antennas == 0 {
            return fail("users and antennas must be positive".into());
        }
        if self.pilot_slots == 0 || self.data_slots == 0 {
            return fail("pilot_slots and data_slots must be positive".into());
        }
        if self.pilot_slots < self.users {
            return fail(format!(
                "pilot book needs pilot_slots >= users, got {} < {}",
                self.pilot_slots, self.users
            ));
        }
        if !(self.subcarrier_spacing > 0.0) {
            return fail("subcarrier_spacing must be positive".into());
        }
        if self.noise_var < 0.0 {
            return fail("noise_var must be non-negative".into());
        }
        if let Some(i) = self.reference_subcarrier {
            if i >= self.subcarriers {
                return fail(format!(
                    "reference_subcarrier {i} out of range for {} subcarriers",
                    self.subcarriers
                ));
            }
        }
        Constellation::new(self.constellation_order)?;
        Ok(())
    }

    /// Check that a channel of `channel_len` taps fits inside the cyclic
    /// prefix, the condition for the per-subcarrier model to be exact.
    pub fn validate_channel_len(&self, channel_len: usize) -> Result<()> {
        if channel_len > self.cp_len + 1 {
            return Err(Error::ChannelTooLong {
                channel_len,
                cp_len: self.cp_len,
            });
        }
        if channel_len > self.subcarriers {
            return Err(Error::InvalidConfig(format!(
                "channel length {} exceeds subcarrier count {}",
                channel_len, self.subcarriers
            )));
        }
        Ok(())
    }
}

/// Gray-mapped square QAM with unit average symbol energy.
///
/// A label's upper half-bits select the real level and the lower half the
/// imaginary level, each through a reflected Gray code, so labels of
/// neighbouring points differ in exactly one bit. `points[label]` is the
/// symbol for that label.
#[derive(Debug, Clone)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

impl Constellation {
    /// Build an `order`-point square QAM. `order` must be an even power of
    /// two between 4 and 4096.
    pub fn new(order: usize) -> Result<Self> {
        let valid = order >= 4
            && order <= 4096
            && order.is_power_of_two()
            && order.trailing_zeros() % 2 == 0;
        if !valid {
            return Err(Error::InvalidConfig(format!(
                "constellation order {order} is not a square power of two in [4, 4096]"
            )));
        }
        let bits_per_symbol = order.trailing_zeros() as usize;
        let side = 1usize << (bits_per_symbol / 2);
        // Unit average energy: E{|x|^2} = 2 (side^2 - 1) / 3 before scaling.
        let scale = (3.0 / (2.0 * (side * side - 1) as f64)).sqrt();
        let level = |bits: usize| {
            let idx = gray_decode(bits);
            scale * (2.0 * idx as f64 - (side - 1) as f64)
        };
        let half_mask = side - 1;
        let points = (0..order)
            .map(|label| {
                let re = level(label >> (bits_per_symbol / 2));
                let im = level(label & half_mask);
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn point(&self, label: u16) -> Complex64 {
        self.points[label as usize]
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Bits of a label, most significant first.
    pub fn label_bits(&self, label: u16) -> impl Iterator<Item = bool> + '_ {
        (0..self.bits_per_symbol)
            .rev()
            .map(move |b| (label >> b) & 1 == 1)
    }
}

/// Reflected-Gray decode (inverse of `g = b ^ (b >> 1)`).
fn gray_decode(g: usize) -> usize {
    let mut b = g;
    let mut shift = 1;
    while (g >> shift) != 0 {
        b ^= g >> shift;
        shift += 1;
    }
    b
}

/// Map a bit stream to constellation symbols, `bits_per_symbol` bits each,
/// most significant bit first.
pub fn map_bits(bits: &[bool], constellation: &Constellation) -> Result<Vec<Complex64>> {
    let bps = constellation.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(Error::DimensionMismatch(format!(
            "bit count {} is not a multiple of {} bits per symbol",
            bits.len(),
            bps
        )));
    }
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| {
            let label = chunk.iter().fold(0u16, |acc, &b| (acc << 1) | b as u16);
            constellation.point(label)
        })
        .collect())
}

/// Nearest constellation point in Euclidean distance and its label.
/// Ties break deterministically to the smallest label.
pub fn hard_decision(soft: Complex64, constellation: &Constellation) -> (Complex64, u16) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (label, p) in constellation.points().iter().enumerate() {
        let d2 = (soft - p).norm_sqr();
        if d2 < best_d2 {
            best_d2 = d2;
            best = label;
        }
    }
    (constellation.points()[best], best as u16)
}

/// One user's frequency-domain transmit frame.
#[derive(Debug, Clone)]
pub struct UserFrame {
    /// Transmit symbols, (subcarriers x symbols).
    pub symbols: Array2<Complex64>,
    /// Constellation labels at data positions; `PILOT_LABEL` elsewhere.
    pub labels: Array2<u16>,
    /// True where the resource element carries a pilot.
    pub pilot_mask: Array2<bool>,
}

/// Label marker for resource elements that carry pilots, not data.
pub const PILOT_LABEL: u16 = u16::MAX;

impl UserFrame {
    pub fn shape(&self) -> (usize, usize) {
        self.symbols.dim()
    }

    /// Number of pilot resource elements in the frame.
    pub fn pilot_res(&self) -> usize {
        self.pilot_mask.iter().filter(|&&p| p).count()
    }
}

/// Received frequency-domain tensor, (subcarriers x antennas x symbols).
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    pub samples: Array3<Complex64>,
}

impl SpaceTimeGrid {
    pub fn zeros(subcarriers: usize, antennas: usize, symbols: usize) -> Self {
        Self {
            samples: Array3::zeros((subcarriers, antennas, symbols)),
        }
    }

    pub fn subcarriers(&self) -> usize {
        self.samples.len_of(Axis(0))
    }

    pub fn antennas(&self) -> usize {
        self.samples.len_of(Axis(1))
    }

    pub fn symbols(&self) -> usize {
        self.samples.len_of(Axis(2))
    }

    /// The (antennas x symbols) receive matrix at subcarrier `m`.
    pub fn subcarrier(&self, m: usize) -> ArrayView2<'_, Complex64> {
        self.samples.index_axis(Axis(0), m)
    }

    pub fn subcarrier_mut(&mut self, m: usize) -> ArrayViewMut2<'_, Complex64> {
        self.samples.index_axis_mut(Axis(0), m)
    }
}

/// Stack per-antenna demodulated frames (subcarriers x symbols) into the
/// per-subcarrier space-time tensor.
pub fn assemble_space_time(antenna_frames: &[Array2<Complex64>]) -> Result<SpaceTimeGrid> {
    let q = antenna_frames.len();
    if q == 0 {
        return Err(Error::DimensionMismatch("no antenna frames".into()));
    }
    let (m, n) = antenna_frames[0].dim();
    let mut grid = SpaceTimeGrid::zeros(m, q, n);
    for (qi, frame) in antenna_frames.iter().enumerate() {
        if frame.dim() != (m, n) {
            return Err(Error::DimensionMismatch(format!(
                "antenna frame {qi} has shape {:?}, expected {:?}",
                frame.dim(),
                (m, n)
            )));
        }
        grid.samples.slice_mut(s![.., qi, ..]).assign(frame);
    }
    Ok(grid)
}

/// IFFT each OFDM symbol (unitary convention) and prepend the cyclic
/// prefix. Output length is `symbols * (cp_len + subcarriers)`.
pub fn ofdm_modulate(frame: &Array2<Complex64>, cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    let (m, n) = frame.dim();
    if m != cfg.subcarriers {
        return Err(Error::DimensionMismatch(format!(
            "frame has {m} subcarriers, config says {}",
            cfg.subcarriers
        )));
    }
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(m);
    let norm = 1.0 / (m as f64).sqrt();
    let sym_len = cfg.cp_len + m;
    let mut out = Vec::with_capacity(n * sym_len);
    let mut buf = vec![Complex64::ZERO; m];
    for sym in 0..n {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = frame[(i, sym)] * norm;
        }
        ifft.process(&mut buf);
        out.extend_from_slice(&buf[m - cfg.cp_len..]);
        out.extend_from_slice(&buf);
    }
    Ok(out)
}

/// Strip cyclic prefixes and FFT each OFDM symbol (unitary convention).
/// Trailing samples beyond the last whole symbol (channel tails) are ignored.
pub fn ofdm_demodulate(samples: &[Complex64], cfg: &SystemConfig) -> Result<Array2<Complex64>> {
    let m = cfg.subcarriers;
    let sym_len = cfg.cp_len + m;
    let n = samples.len() / sym_len;
    if n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} samples is shorter than one OFDM symbol of {sym_len}",
            samples.len()
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let norm = 1.0 / (m as f64).sqrt();
    let mut out = Array2::zeros((m, n));
    let mut buf = vec![Complex64::ZERO; m];
    for sym in 0..n {
        let start = sym * sym_len + cfg.cp_len;
        buf.copy_from_slice(&samples[start..start + m]);
        fft.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            out[(i, sym)] = b * norm;
        }
    }
    Ok(out)
}

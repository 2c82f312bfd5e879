//! Link-quality metrics: SINR, SIR, and BER, accumulated over data
//! resource elements across Monte Carlo trials.

use ndarray::ArrayView2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Mean error power at or below this floor is reported as error-free
/// (+inf dB): residuals of exactly-recovered symbols never reach floating
/// point zero, so a numerical floor stands in for "zero error".
pub const ZERO_ERROR_FLOOR: f64 = 1e-15;

/// Per-user error statistics for one detection scheme at one operating
/// point. Sums are commutative, so accumulation order never matters.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    err_power: Vec<f64>,
    res: Vec<u64>,
    bit_errors: Vec<u64>,
    bits: Vec<u64>,
    frames: u64,
    failed_frames: u64,
}

impl ErrorAccumulator {
    pub fn new(users: usize) -> Self {
        Self {
            err_power: vec![0.0; users],
            res: vec![0; users],
            bit_errors: vec![0; users],
            bits: vec![0; users],
            frames: 0,
            failed_frames: 0,
        }
    }

    pub fn users(&self) -> usize {
        self.err_power.len()
    }

    /// Record one equalized data block (users x symbols) against the truth.
    pub fn add_block(
        &mut self,
        soft: ArrayView2<'_, Complex64>,
        truth: ArrayView2<'_, Complex64>,
    ) -> Result<()> {
        if soft.dim() != truth.dim() || soft.nrows() != self.users() {
            return Err(Error::DimensionMismatch(format!(
                "block {:?} vs truth {:?} for {} users",
                soft.dim(),
                truth.dim(),
                self.users()
            )));
        }
        for k in 0..soft.nrows() {
            for n in 0..soft.ncols() {
                self.add_symbol(k, soft[(k, n)], truth[(k, n)]);
            }
        }
        Ok(())
    }

    /// Record one equalized data symbol of user `k`.
    pub fn add_symbol(&mut self, k: usize, soft: Complex64, truth: Complex64) {
        self.err_power[k] += (soft - truth).norm_sqr();
        self.res[k] += 1;
    }

    /// Record the decided label of user `k` against the transmitted one.
    pub fn add_labels(&mut self, k: usize, decided: u16, truth: u16, bits_per_symbol: usize) {
        self.bit_errors[k] += u64::from((decided ^ truth).count_ones());
        self.bits[k] += bits_per_symbol as u64;
    }

    /// Close out one frame; failed frames are counted but contribute no
    /// symbol or bit statistics (the caller must not add any for them).
    pub fn count_frame(&mut self, failed: bool) {
        self.frames += 1;
        if failed {
            self.failed_frames += 1;
        }
    }

    pub fn merge(&mut self, other: &ErrorAccumulator) {
        assert_eq!(self.users(), other.users(), "accumulators must match");
        for k in 0..self.users() {
            self.err_power[k] += other.err_power[k];
            self.res[k] += other.res[k];
            self.bit_errors[k] += other.bit_errors[k];
            self.bits[k] += other.bits[k];
        }
        self.frames += other.frames;
        self.failed_frames += other.failed_frames;
    }

    /// Mean error power of user `k`, if any symbol was recorded.
    pub fn mse(&self, k: usize) -> Option<f64> {
        (self.res[k] > 0).then(|| self.err_power[k] / self.res[k] as f64)
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn successful_frames(&self) -> u64 {
        self.frames - self.failed_frames
    }

    pub fn failed_frames(&self) -> u64 {
        self.failed_frames
    }

    pub fn total_bits(&self) -> u64 {
        self.bits.iter().sum()
    }

    /// Aggregate bit error rate over all users.
    pub fn ber(&self) -> Option<f64> {
        let bits = self.total_bits();
        (bits > 0).then(|| self.bit_errors.iter().sum::<u64>() as f64 / bits as f64)
    }
}

fn sinr_linear(mse: f64) -> f64 {
    // Unit-power constellation: SINR_k = E|x|^2 / E|x_hat - x|^2 = 1 / mse.
    if mse <= ZERO_ERROR_FLOOR {
        f64::INFINITY
    } else {
        1.0 / mse
    }
}

/// Per-user SINR in dB: 10 log10(1 / mean error power), +inf when the mean
/// error power sits at the zero floor. None for a user with no recorded
/// symbols.
pub fn measure_sinr(acc: &ErrorAccumulator) -> Vec<Option<f64>> {
    (0..acc.users())
        .map(|k| acc.mse(k).map(|mse| 10.0 * sinr_linear(mse).log10()))
        .collect()
}

/// SINR averaged over users in linear scale, then converted to dB.
pub fn average_sinr_db(acc: &ErrorAccumulator) -> Option<f64> {
    let mut sum = 0.0f64;
    for k in 0..acc.users() {
        sum += sinr_linear(acc.mse(k)?);
    }
    Some(10.0 * (sum / acc.users() as f64).log10())
}

/// Per-user SIR in dB: the SINR estimator restricted to noiseless runs,
/// where the residual is interference and approximation error only.
pub fn measure_sir(acc: &ErrorAccumulator, noise_var: f64) -> Result<Vec<Option<f64>>> {
    if noise_var != 0.0 {
        return Err(Error::SirOnNoisyRun(noise_var));
    }
    Ok(measure_sinr(acc))
}

/// SIR averaged over users in linear scale, then converted to dB.
pub fn average_sir_db(acc: &ErrorAccumulator, noise_var: f64) -> Result<Option<f64>> {
    if noise_var != 0.0 {
        return Err(Error::SirOnNoisyRun(noise_var));
    }
    Ok(average_sinr_db(acc))
}

/// Bit error rate between two equal-length bit streams.
pub fn measure_ber(decided: &[bool], truth: &[bool]) -> Result<f64> {
    if decided.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decided bits vs {} truth bits",
            decided.len(),
            truth.len()
        )));
    }
    if decided.is_empty() {
        return Ok(0.0);
    }
    let errors = decided.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / decided.len() as f64)
}

/// Noise variance for a target Eb/N0 under unit symbol energy:
/// sigma_w^2 = 1 / (log2(order) * 10^(ebn0/10)). Cyclic-prefix energy
/// overhead is deliberately not charged to Eb.
pub fn ebn0_to_noise_var(ebn0_db: f64, constellation_order: usize) -> f64 {
    assert!(
        constellation_order >= 4 && constellation_order.is_power_of_two(),
        "constellation order must be a power of two >= 4"
    );
    let bits = constellation_order.trailing_zeros() as f64;
    1.0 / (bits * 10f64.powf(ebn0_db / 10.0))
}

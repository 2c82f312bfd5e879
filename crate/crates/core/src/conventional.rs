//! Conventional per-subcarrier receiver: least-squares channel estimation
//! on the training slots, impulse-response-based interpolation across the
//! band, and MRC or MMSE combining.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{adjoint, invert, lu_factor};
use crate::pilots::{interpolation_matrix, PilotBook};

/// Where a channel estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    /// Least squares on known pilot slots.
    Pilot,
    /// Least squares on re-encoded hard decisions.
    VirtualPilot,
    /// Interpolated from pilot subcarriers through the impulse response.
    Interpolated,
}

/// Channel estimate at one subcarrier, with the Gram-matrix term that
/// removes the estimation-noise bias from combiner statistics.
///
/// For an estimate Hat = Y S^H (S S^H)^-1 formed on a known block S, the
/// estimation error Wt = Hat - Lambda satisfies
/// E{Wt^H Wt} = Q sigma_w^2 (S S^H)^-1, which is `noise_mitigation`.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Estimated response, (antennas x users).
    pub lambda: Array2<Complex64>,
    /// E{Wt^H Wt} of the estimation error, (users x users).
    pub noise_mitigation: Array2<Complex64>,
    pub source: EstimateSource,
}

impl ChannelEstimate {
    pub fn antennas(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn users(&self) -> usize {
        self.lambda.ncols()
    }
}

/// Least-squares estimate from the training slots of one subcarrier:
/// Hat = (1/N_p) Y P^H, using P P^H = N_p I. `y_pilot` is
/// (antennas x pilot_slots).
pub fn ls_estimate(
    y_pilot: ArrayView2<'_, Complex64>,
    book: &PilotBook,
    noise_var: f64,
) -> Result<ChannelEstimate> {
    let n_p = book.pilot_slots();
    if y_pilot.ncols() != n_p {
        return Err(Error::DimensionMismatch(format!(
            "{} received training slots vs book length {n_p}",
            y_pilot.ncols()
        )));
    }
    let antennas = y_pilot.nrows() as f64;
    let lambda = y_pilot.dot(&adjoint(book.matrix.view())) / Complex64::from(n_p as f64);
    // (S S^H)^-1 = I / N_p for the orthogonal book, so
    // Q sigma^2 (S S^H)^-1 has the closed form below.
    let gram = book.matrix.dot(&adjoint(book.matrix.view()));
    let noise_mitigation = gram * Complex64::from(antennas * noise_var / (n_p * n_p) as f64);
    Ok(ChannelEstimate {
        lambda,
        noise_mitigation,
        source: EstimateSource::Pilot,
    })
}

/// Recover the response at every subcarrier from estimates on the pilot
/// comb: solve A h = lambda restricted to the comb for each
/// (antenna, user) impulse response, then transform h back to all `m`
/// subcarriers.
///
/// `pilot_estimates[r]` is the estimate at subcarrier `indices[r]`. The
/// comb must be well conditioned (guaranteed by
/// [`crate::pilots::conventional_pilot_indices`]).
pub fn reconstruct_cfr(
    pilot_estimates: &[ChannelEstimate],
    indices: &[usize],
    subcarriers: usize,
) -> Result<Vec<ChannelEstimate>> {
    let l_n = indices.len();
    if pilot_estimates.len() != l_n {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates vs {} pilot subcarriers",
            pilot_estimates.len(),
            l_n
        )));
    }
    if l_n == 0 || l_n > subcarriers {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= pilot subcarriers <= {subcarriers}, got {l_n}"
        )));
    }
    if indices.iter().any(|&m| m >= subcarriers) {
        return Err(Error::InvalidConfig(
            "pilot subcarrier index out of range".into(),
        ));
    }
    let (q_n, k_n) = pilot_estimates[0].lambda.dim();
    if pilot_estimates.iter().any(|e| e.lambda.dim() != (q_n, k_n)) {
        return Err(Error::DimensionMismatch(
            "pilot estimates differ in shape".into(),
        ));
    }

    let a = interpolation_matrix(subcarriers, indices);
    let lu = lu_factor(a.view())?;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(subcarriers);

    let mut lambdas: Vec<Array2<Complex64>> = vec![Array2::zeros((q_n, k_n)); subcarriers];
    let mut rhs = vec![Complex64::ZERO; l_n];
    let mut buf = vec![Complex64::ZERO; subcarriers];
    for q in 0..q_n {
        for k in 0..k_n {
            for (r, e) in pilot_estimates.iter().enumerate() {
                rhs[r] = e.lambda[(q, k)];
            }
            lu.solve_in_place(&mut rhs);
            buf.fill(Complex64::ZERO);
            buf[..l_n].copy_from_slice(&rhs);
            fft.process(&mut buf);
            for (m, v) in buf.iter().enumerate() {
                lambdas[m][(q, k)] = *v;
            }
        }
    }

    let noise_mitigation = pilot_estimates[0].noise_mitigation.clone();
    Ok(lambdas
        .into_iter()
        .map(|lambda| ChannelEstimate {
            lambda,
            noise_mitigation: noise_mitigation.clone(),
            source: EstimateSource::Interpolated,
        })
        .collect())
}

/// Per-user gain floor, scaled by the antenna count.
const GAIN_FLOOR_SCALE: f64 = 1e-9;

/// Channel-hardening gains: gamma_k = ||hat_lambda_k||^2 minus the
/// estimation-noise bias, floored at 1e-9 * antennas.
fn hardening_gains(est: &ChannelEstimate) -> Array1<f64> {
    let floor = GAIN_FLOOR_SCALE * est.antennas() as f64;
    Array1::from_shape_fn(est.users(), |k| {
        let norm2: f64 = est.lambda.column(k).iter().map(|z| z.norm_sqr()).sum();
        (norm2 - est.noise_mitigation[(k, k)].re).max(floor)
    })
}

/// Maximum-ratio combining with hardening normalization:
/// x_hat = Gamma^-1 Hat^H y.
pub fn mrc_combine(
    y: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
) -> Result<Array2<Complex64>> {
    check_receive(y, est)?;
    let gains = hardening_gains(est);
    let mut x = adjoint(est.lambda.view()).dot(&y);
    for (k, mut row) in x.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|z| z / gains[k]);
    }
    Ok(x)
}

/// Scale applied to the trace when regularizing a singular MMSE Gram.
const RIDGE_SCALE: f64 = 1e-12;

/// MMSE combining weights,
/// Phi = (Hat^H Hat - noise_mitigation + sigma_w^2 I)^-1 Hat^H,
/// returned as a (users x antennas) matrix. A numerically singular Gram is
/// retried once with a ridge of 1e-12 * trace / users on the diagonal.
pub fn mmse_weights(est: &ChannelEstimate, noise_var: f64) -> Result<Array2<Complex64>> {
    let k_n = est.users();
    let ah = adjoint(est.lambda.view());
    let mut gram = ah.dot(&est.lambda);
    gram -= &est.noise_mitigation;
    for i in 0..k_n {
        gram[(i, i)] += noise_var;
    }
    let inv = match invert(gram.view()) {
        Ok(inv) => inv,
        Err(Error::Singular) => {
            let trace: f64 = (0..k_n).map(|i| gram[(i, i)].re).sum();
            let ridge = RIDGE_SCALE * trace / k_n as f64;
            for i in 0..k_n {
                gram[(i, i)] += ridge;
            }
            invert(gram.view())?
        }
        Err(e) => return Err(e),
    };
    Ok(inv.dot(&ah))
}

/// MMSE combining: x_hat = Phi y.
pub fn mmse_combine(
    y: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
    noise_var: f64,
) -> Result<Array2<Complex64>> {
    check_receive(y, est)?;
    Ok(mmse_weights(est, noise_var)?.dot(&y))
}

fn check_receive(y: ArrayView2<'_, Complex64>, est: &ChannelEstimate) -> Result<()> {
    if y.nrows() != est.antennas() {
        return Err(Error::DimensionMismatch(format!(
            "{} receive antennas vs estimate for {}",
            y.nrows(),
            est.antennas()
        )));
    }
    Ok(())
}

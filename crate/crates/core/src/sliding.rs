//! Single-pilot-subcarrier receiver.
//!
//! All training sits on one reference subcarrier. Its least-squares
//! estimate seeds two directional sweeps across the band; at each new
//! subcarrier the data is equalized with the estimates of up to `depth`
//! already-visited neighbours (scaled by the inter-subcarrier correlation),
//! hard decisions are re-encoded as a virtual pilot block to estimate the
//! local channel, and the sweep slides on. The two sweeps run independently
//! (one per direction) and their outputs are averaged.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{coherence_bandwidth, SampledPdp};
use crate::conventional::{ls_estimate, mmse_weights, ChannelEstimate, EstimateSource};
use crate::detection::DetectionResult;
use crate::error::{Error, Result};
use crate::linalg::{adjoint, hermitian_eigenvalues, invert};
use crate::pilots::{PilotBook, PilotPlacement};
use crate::waveform::{hard_decision, Constellation, SpaceTimeGrid, SystemConfig, PILOT_LABEL};

/// Correlation-magnitude guard for the anchor fallback: scaling by a
/// smaller correlation would enhance noise more than the combining gains.
pub const ALPHA_MIN: f64 = 0.1;

/// Smallest singular-value ratio of a hard-decision block accepted for a
/// virtual-pilot estimate.
pub const RANK_RATIO_MIN: f64 = 1e-6;

/// How inter-subcarrier correlation coefficients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// From the sampled power-delay profile (exact, complex).
    #[default]
    Exact,
    /// From the coherence bandwidth alone (approximate, real magnitude).
    Approx,
}

impl std::str::FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(AlphaMode::Exact),
            "approx" => Ok(AlphaMode::Approx),
            other => Err(Error::InvalidConfig(format!(
                "unknown correlation mode '{other}', expected 'exact' or 'approx'"
            ))),
        }
    }
}

impl std::fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlphaMode::Exact => "exact",
            AlphaMode::Approx => "approx",
        })
    }
}

/// Fold a subcarrier offset into the canonical range (-M/2, M/2].
fn fold_offset(offset: i64, subcarriers: usize) -> i64 {
    let m = subcarriers as i64;
    let mut r = offset.rem_euclid(m);
    if r > m / 2 {
        r -= m;
    }
    r
}

/// Exact correlation between the responses of subcarriers `m` and
/// `m + offset`: alpha = sum_l rho[l] exp(-j 2 pi offset l / M).
/// Periodic in `offset` with period M; exactly 1 at offset 0.
pub fn alpha_exact(pdp: &SampledPdp, offset: i64, subcarriers: usize) -> Complex64 {
    let folded = fold_offset(offset, subcarriers);
    if folded == 0 {
        return Complex64::ONE;
    }
    let step = -2.0 * std::f64::consts::PI * folded as f64 / subcarriers as f64;
    let mut acc = Complex64::ZERO;
    for (l, &rho) in pdp.rho.iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        let arg = step * l as f64;
        acc += rho * Complex64::new(arg.cos(), arg.sin());
    }
    acc
}

/// Correlation magnitude from the coherence bandwidth alone:
/// |alpha| ~ sqrt(1 - (spacing * offset / coherence)^2), defined while the
/// frequency separation stays inside the coherence bandwidth.
pub fn alpha_approx(offset: i64, spacing_hz: f64, coherence_hz: f64) -> Result<f64> {
    let x = spacing_hz * offset.unsigned_abs() as f64 / coherence_hz;
    if x >= 1.0 {
        return Err(Error::BeyondCoherence { offset });
    }
    Ok((1.0 - x * x).sqrt())
}

/// Per-user correlation coefficients versus subcarrier offset, with the
/// small offsets used by the sweep precomputed.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    mode: AlphaMode,
    subcarriers: usize,
    spacing_hz: f64,
    pdps: Vec<SampledPdp>,
    coherence_hz: Vec<f64>,
    cache_radius: i64,
    /// cache[user][offset + cache_radius]; None marks an offset outside
    /// the coherence bandwidth in approximate mode.
    cache: Vec<Vec<Option<Complex64>>>,
}

impl AlphaTable {
    pub fn new(
        mode: AlphaMode,
        pdps: &[SampledPdp],
        subcarriers: usize,
        spacing_hz: f64,
        sample_rate_hz: f64,
        cache_radius: usize,
    ) -> Self {
        let coherence_hz: Vec<f64> = pdps
            .iter()
            .map(|p| coherence_bandwidth(p, sample_rate_hz))
            .collect();
        let radius = cache_radius as i64;
        let mut table = Self {
            mode,
            subcarriers,
            spacing_hz,
            pdps: pdps.to_vec(),
            coherence_hz,
            cache_radius: radius,
            cache: Vec::new(),
        };
        table.cache = (0..pdps.len())
            .map(|k| {
                (-radius..=radius)
                    .map(|off| table.compute(k, off).ok())
                    .collect()
            })
            .collect();
        table
    }

    pub fn mode(&self) -> AlphaMode {
        self.mode
    }

    pub fn users(&self) -> usize {
        self.pdps.len()
    }

    /// Correlation for user `k` between subcarriers separated by `offset`
    /// (any integer; folded modulo the band).
    pub fn value(&self, user: usize, offset: i64) -> Result<Complex64> {
        let folded = fold_offset(offset, self.subcarriers);
        if folded.abs() <= self.cache_radius {
            let idx = (folded + self.cache_radius) as usize;
            return self.cache[user][idx].ok_or(Error::BeyondCoherence { offset });
        }
        self.compute(user, folded)
    }

    fn compute(&self, user: usize, folded: i64) -> Result<Complex64> {
        if folded == 0 {
            return Ok(Complex64::ONE);
        }
        match self.mode {
            AlphaMode::Exact => Ok(alpha_exact(&self.pdps[user], folded, self.subcarriers)),
            AlphaMode::Approx => {
                alpha_approx(folded, self.spacing_hz, self.coherence_hz[user]).map(Complex64::from)
            }
        }
    }
}

/// Apply `phi` to the receive block and undo the per-user correlation
/// rotation: rows of phi * y are scaled by 1 / alpha_k.
fn scaled_combine(
    phi: &Array2<Complex64>,
    y: ArrayView2<'_, Complex64>,
    alpha: &AlphaTable,
    offset: i64,
) -> Result<Array2<Complex64>> {
    let users = phi.nrows();
    let mut inv_alpha = Vec::with_capacity(users);
    for k in 0..users {
        inv_alpha.push(alpha.value(k, offset)?.inv());
    }
    let mut x = phi.dot(&y);
    for (k, mut row) in x.rows_mut().into_iter().enumerate() {
        let s = inv_alpha[k];
        row.mapv_inplace(|z| z * s);
    }
    Ok(x)
}

/// Cross-subcarrier MRC: equalize subcarrier `m' + offset` with the
/// channel estimated at `m'`, x = Psi^-1 Gamma^-1 Hat^H y. Refuses with
/// [`Error::NoiseEnhancement`] when any user's correlation magnitude falls
/// below [`ALPHA_MIN`].
pub fn cross_combine_mrc(
    y: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
    alpha: &AlphaTable,
    offset: i64,
) -> Result<Array2<Complex64>> {
    guard_alpha(est.users(), alpha, offset)?;
    let mut x = crate::conventional::mrc_combine(y, est)?;
    for (k, mut row) in x.rows_mut().into_iter().enumerate() {
        let s = alpha.value(k, offset)?.inv();
        row.mapv_inplace(|z| z * s);
    }
    Ok(x)
}

/// One term of the sliding equalizer: x = Psi_offset^-1 Phi_{m'} y, the
/// MMSE combiner of the source subcarrier applied `offset` subcarriers
/// away.
pub fn sliding_mmse_step(
    y: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
    alpha: &AlphaTable,
    offset: i64,
    noise_var: f64,
) -> Result<Array2<Complex64>> {
    let phi = mmse_weights(est, noise_var)?;
    scaled_combine(&phi, y, alpha, offset)
}

fn guard_alpha(users: usize, alpha: &AlphaTable, offset: i64) -> Result<()> {
    for k in 0..users {
        let a = alpha.value(k, offset)?;
        if a.norm() < ALPHA_MIN {
            return Err(Error::NoiseEnhancement {
                alpha: a.norm(),
                guard: ALPHA_MIN,
                user: k,
            });
        }
    }
    Ok(())
}

/// Outcome of a virtual-pilot estimation attempt.
#[derive(Debug)]
pub enum VirtualPilotOutcome {
    Updated(ChannelEstimate),
    /// The hard-decision block was too close to rank deficient.
    Refused {
        singular_ratio: f64,
    },
}

/// Re-estimate the channel from re-encoded hard decisions:
/// Hat = Y X^H (X X^H)^-1 with noise mitigation Q sigma^2 (X X^H)^-1.
/// Refused when the block's singular-value ratio drops below
/// [`RANK_RATIO_MIN`].
pub fn virtual_pilot_update(
    y: ArrayView2<'_, Complex64>,
    hd_symbols: ArrayView2<'_, Complex64>,
    noise_var: f64,
) -> Result<VirtualPilotOutcome> {
    if y.ncols() != hd_symbols.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} received symbols vs {} decided symbols",
            y.ncols(),
            hd_symbols.ncols()
        )));
    }
    let gram = hd_symbols.dot(&adjoint(hd_symbols.view()));
    let eig = hermitian_eigenvalues(gram.view())?;
    let max = eig.last().copied().unwrap_or(0.0);
    let min = eig.first().copied().unwrap_or(0.0).max(0.0);
    let singular_ratio = if max > 0.0 { (min / max).sqrt() } else { 0.0 };
    if singular_ratio < RANK_RATIO_MIN {
        return Ok(VirtualPilotOutcome::Refused { singular_ratio });
    }
    let inv = invert(gram.view())?;
    let lambda = y.dot(&adjoint(hd_symbols.view())).dot(&inv);
    let noise_mitigation = inv * Complex64::from(y.nrows() as f64 * noise_var);
    Ok(VirtualPilotOutcome::Updated(ChannelEstimate {
        lambda,
        noise_mitigation,
        source: EstimateSource::VirtualPilot,
    }))
}

/// Channel knowledge a sweep carries for one subcarrier.
struct PassEntry {
    lambda: Array2<Complex64>,
    phi: Array2<Complex64>,
}

/// Result of one directional sweep.
struct PassOutput {
    soft: Vec<Option<Array2<Complex64>>>,
    lambdas: Vec<Option<Array2<Complex64>>>,
    estimate_refusals: usize,
}

/// Detect a whole frame from a single pilot subcarrier.
///
/// With depth 0 a single upward sweep produces the lone estimate per
/// subcarrier; otherwise one sweep per direction runs independently (each
/// seeded by the reference estimate) and the outputs are averaged.
pub fn run_sliding(
    grid: &SpaceTimeGrid,
    placement: &PilotPlacement,
    book: &PilotBook,
    alpha: &AlphaTable,
    config: &SystemConfig,
) -> Result<DetectionResult> {
    let reference = placement.reference().ok_or_else(|| {
        Error::InvalidConfig("run_sliding needs a single-subcarrier placement".into())
    })?;
    let m_n = grid.subcarriers();
    let n_n = grid.symbols();
    let users = book.users();
    if m_n != config.subcarriers || n_n != config.n_symbols() {
        return Err(Error::DimensionMismatch(format!(
            "grid is {m_n} x {} x {n_n}, config says {} x {}",
            grid.antennas(),
            config.subcarriers,
            config.n_symbols()
        )));
    }
    if alpha.users() != users {
        return Err(Error::DimensionMismatch(format!(
            "correlation table covers {} users, book has {users}",
            alpha.users()
        )));
    }
    let constellation = Constellation::new(config.constellation_order)?;
    let noise_var = config.noise_var;
    let n_p = config.pilot_slots;

    let y_ref = grid.subcarrier(reference);
    let est_ref = ls_estimate(y_ref.slice(s![.., ..n_p]), book, noise_var)?;
    let phi_ref = mmse_weights(&est_ref, noise_var)?;

    let directions: &[i64] = if config.depth == 0 { &[1] } else { &[-1, 1] };
    let mut passes = Vec::with_capacity(directions.len());
    for &dir in directions {
        passes.push(run_pass(
            grid,
            reference,
            dir,
            &est_ref,
            &phi_ref,
            alpha,
            &constellation,
            config,
        )?);
    }

    // Average the directional outputs; a subcarrier skipped by one sweep
    // keeps the other sweep's output alone.
    let mut soft = Array3::zeros((m_n, users, n_n));
    let mut hard = Array3::from_elem((m_n, users, n_n), 0u16);
    let mut estimates: Vec<Option<Array2<Complex64>>> = vec![None; m_n];
    let mut skipped = 0usize;
    for m in 0..m_n {
        if m == reference {
            continue;
        }
        let available: Vec<&Array2<Complex64>> =
            passes.iter().filter_map(|p| p.soft[m].as_ref()).collect();
        if available.is_empty() {
            skipped += 1;
            continue;
        }
        let scale = Complex64::from(1.0 / available.len() as f64);
        let mut out = soft.index_axis_mut(Axis(0), m);
        for part in &available {
            out += &part.view();
        }
        out.mapv_inplace(|z| z * scale);

        let lambdas: Vec<&Array2<Complex64>> = passes
            .iter()
            .filter_map(|p| p.lambdas[m].as_ref())
            .collect();
        if !lambdas.is_empty() {
            let mut avg = Array2::zeros(lambdas[0].raw_dim());
            for l in &lambdas {
                avg += &l.view();
            }
            avg.mapv_inplace(|z| z / Complex64::from(lambdas.len() as f64));
            estimates[m] = Some(avg);
        }
    }

    // Reference subcarrier: payload slots detected with its own estimate.
    let x_ref = phi_ref.dot(&y_ref.slice(s![.., n_p..]));
    soft.slice_mut(s![reference, .., n_p..]).assign(&x_ref);
    estimates[reference] = Some(est_ref.lambda.clone());

    for m in 0..m_n {
        for k in 0..users {
            for n in 0..n_n {
                hard[(m, k, n)] = if placement.is_pilot_re(m, n) {
                    PILOT_LABEL
                } else {
                    hard_decision(soft[(m, k, n)], &constellation).1
                };
            }
        }
    }

    Ok(DetectionResult {
        soft,
        hard,
        estimates,
        pilot_res_per_user: placement.pilot_res_per_user(),
        skipped_subcarriers: skipped,
        estimate_refusals: passes.iter().map(|p| p.estimate_refusals).sum(),
        failed: skipped > 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_pass(
    grid: &SpaceTimeGrid,
    reference: usize,
    dir: i64,
    est_ref: &ChannelEstimate,
    phi_ref: &Array2<Complex64>,
    alpha: &AlphaTable,
    constellation: &Constellation,
    config: &SystemConfig,
) -> Result<PassOutput> {
    let m_n = grid.subcarriers() as i64;
    let users = est_ref.users();
    let n_n = grid.symbols();
    let noise_var = config.noise_var;
    let depth = config.depth as i64;

    let mut entries: Vec<Option<PassEntry>> = (0..m_n).map(|_| None).collect();
    entries[reference] = Some(PassEntry {
        lambda: est_ref.lambda.clone(),
        phi: phi_ref.clone(),
    });
    let mut soft: Vec<Option<Array2<Complex64>>> = (0..m_n).map(|_| None).collect();
    let mut estimate_refusals = 0usize;
    let mut anchor = reference as i64;

    for step in 1..m_n {
        let m = (reference as i64 + dir * step).rem_euclid(m_n) as usize;
        let y_m = grid.subcarrier(m);

        // Cross-combine with every already-estimated neighbour in the
        // sweep direction; sources outside the coherence bandwidth (in
        // approximate mode) contribute nothing.
        let mut sum = Array2::<Complex64>::zeros((users, n_n));
        let mut used = 0usize;
        for dm in 1..=depth {
            let src = (m as i64 - dir * dm).rem_euclid(m_n) as usize;
            let Some(entry) = entries[src].as_ref() else {
                continue;
            };
            match scaled_combine(&entry.phi, y_m, alpha, dir * dm) {
                Ok(term) => {
                    sum += &term;
                    used += 1;
                }
                Err(Error::BeyondCoherence { .. }) => continue,
                Err(e) => return Err(e),
            }
        }

        let x_soft = if used > 0 {
            sum.mapv_inplace(|z| z / used as f64);
            sum
        } else {
            // Fall back to the anchor, the last subcarrier whose estimate
            // was refreshed. Refuse rather than amplify noise when the
            // correlation has decayed.
            let offset = m as i64 - anchor;
            let entry = entries[anchor as usize]
                .as_ref()
                .ok_or(Error::MissingEstimate(anchor as usize))?;
            if guard_alpha(users, alpha, offset).is_err() {
                continue;
            }
            match scaled_combine(&entry.phi, y_m, alpha, offset) {
                Ok(x) => x,
                Err(Error::BeyondCoherence { .. }) => continue,
                Err(e) => return Err(e),
            }
        };

        // Re-encode hard decisions and refresh the local estimate when the
        // decided block is well conditioned.
        let mut hd = Array2::zeros((users, n_n));
        for k in 0..users {
            for n in 0..n_n {
                hd[(k, n)] = hard_decision(x_soft[(k, n)], constellation).0;
            }
        }
        soft[m] = Some(x_soft);
        match virtual_pilot_update(y_m, hd.view(), noise_var)? {
            VirtualPilotOutcome::Updated(est) => match mmse_weights(&est, noise_var) {
                Ok(phi) => {
                    entries[m] = Some(PassEntry {
                        lambda: est.lambda,
                        phi,
                    });
                    anchor = m as i64;
                }
                Err(_) => estimate_refusals += 1,
            },
            VirtualPilotOutcome::Refused { .. } => estimate_refusals += 1,
        }
    }

    Ok(PassOutput {
        lambdas: entries
            .into_iter()
            .map(|e| e.map(|entry| entry.lambda))
            .collect(),
        soft,
        estimate_refusals,
    })
}

//! Pilot books and pilot placement.
//!
//! All users transmit pilots simultaneously during the training slots; user
//! separation comes from the rows of a Zadoff-Chu book being orthogonal
//! under cyclic shifts. Placement decides *where* those training slots sit:
//! on a comb of subcarriers (conventional) or on one reference subcarrier.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::cond2;
use crate::rng::TrialStreams;
use crate::waveform::{Constellation, SystemConfig, UserFrame, PILOT_LABEL};

/// Largest acceptable 2-norm condition number of the interpolation matrix
/// built on the conventional pilot comb.
pub const COND_LIMIT: f64 = 1e6;

/// Per-user pilot sequences, one row per user, transmitted over the
/// training slots of a pilot-bearing subcarrier.
#[derive(Debug, Clone)]
pub struct PilotBook {
    /// (users x pilot_slots), rows are cyclic shifts of one Zadoff-Chu
    /// sequence.
    pub matrix: Array2<Complex64>,
    pub root: u32,
}

impl PilotBook {
    pub fn users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn pilot_slots(&self) -> usize {
        self.matrix.ncols()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Build a Zadoff-Chu pilot book: base sequence
/// z[n] = exp(-j pi u n (n+1) / N_p) for odd length N_p and root u coprime
/// with N_p; row k is the base cyclically shifted by k. Any `users` <= N_p
/// distinct shifts satisfy P P^H = N_p I.
pub fn zc_pilot_book(pilot_slots: usize, users: usize, root: u32) -> Result<PilotBook> {
    if pilot_slots % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "Zadoff-Chu length must be odd, got {pilot_slots}"
        )));
    }
    if users == 0 || users > pilot_slots {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= users <= pilot_slots, got {users} users for {pilot_slots} slots"
        )));
    }
    if root == 0 || gcd(root as u64, pilot_slots as u64) != 1 {
        return Err(Error::InvalidConfig(format!(
            "root {root} is not coprime with length {pilot_slots}"
        )));
    }
    let base: Vec<Complex64> = (0..pilot_slots)
        .map(|n| {
            let arg =
                -std::f64::consts::PI * (root as f64) * (n * (n + 1)) as f64 / pilot_slots as f64;
            Complex64::new(arg.cos(), arg.sin())
        })
        .collect();
    let matrix = Array2::from_shape_fn((users, pilot_slots), |(k, n)| base[(n + k) % pilot_slots]);
    Ok(PilotBook { matrix, root })
}

/// How pilots are laid out over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotScheme {
    /// Training slots on a comb of `L` subcarriers spread over the band.
    Conventional,
    /// Training slots on a single reference subcarrier.
    SingleSubcarrier,
}

/// Pilot positions on the (subcarrier x symbol) grid.
#[derive(Debug, Clone)]
pub struct PilotPlacement {
    pub scheme: PilotScheme,
    /// Pilot-bearing subcarriers, ascending.
    pub pilot_subcarriers: Vec<usize>,
    /// Training slots per pilot-bearing subcarrier.
    pub pilot_slots: usize,
    subcarriers: usize,
    is_pilot_sc: Vec<bool>,
}

impl PilotPlacement {
    /// Conventional comb of `channel_len` pilot subcarriers over `m` tones,
    /// guarded against an ill-conditioned reconstruction.
    pub fn conventional(
        subcarriers: usize,
        channel_len: usize,
        pilot_slots: usize,
    ) -> Result<Self> {
        let indices = conventional_pilot_indices(subcarriers, channel_len)?;
        Ok(Self::from_indices(
            PilotScheme::Conventional,
            subcarriers,
            indices,
            pilot_slots,
        ))
    }

    /// All training on the single subcarrier `reference`.
    pub fn single_subcarrier(subcarriers: usize, reference: usize, pilot_slots: usize) -> Self {
        assert!(reference < subcarriers, "reference subcarrier out of range");
        Self::from_indices(
            PilotScheme::SingleSubcarrier,
            subcarriers,
            vec![reference],
            pilot_slots,
        )
    }

    fn from_indices(
        scheme: PilotScheme,
        subcarriers: usize,
        pilot_subcarriers: Vec<usize>,
        pilot_slots: usize,
    ) -> Self {
        let mut is_pilot_sc = vec![false; subcarriers];
        for &m in &pilot_subcarriers {
            is_pilot_sc[m] = true;
        }
        Self {
            scheme,
            pilot_subcarriers,
            pilot_slots,
            subcarriers,
            is_pilot_sc,
        }
    }

    /// Reference subcarrier of a single-subcarrier placement.
    pub fn reference(&self) -> Option<usize> {
        match self.scheme {
            PilotScheme::SingleSubcarrier => Some(self.pilot_subcarriers[0]),
            PilotScheme::Conventional => None,
        }
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn is_pilot_subcarrier(&self, m: usize) -> bool {
        self.is_pilot_sc[m]
    }

    /// Does resource element (m, n) carry a pilot?
    pub fn is_pilot_re(&self, m: usize, n: usize) -> bool {
        n < self.pilot_slots && self.is_pilot_sc[m]
    }

    /// Pilot resource elements spent per user per frame.
    pub fn pilot_res_per_user(&self) -> usize {
        self.pilot_subcarriers.len() * self.pilot_slots
    }
}

/// Spread `channel_len` pilot subcarriers evenly over `subcarriers` tones:
/// index p maps to round(p * M / L) mod M, advancing past duplicates. The
/// interpolation matrix on these indices must satisfy
/// cond_2 <= [`COND_LIMIT`].
pub fn conventional_pilot_indices(subcarriers: usize, channel_len: usize) -> Result<Vec<usize>> {
    if channel_len == 0 || channel_len > subcarriers {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= channel_len <= subcarriers, got {channel_len} of {subcarriers}"
        )));
    }
    let mut taken = vec![false; subcarriers];
    let mut indices = Vec::with_capacity(channel_len);
    for p in 0..channel_len {
        let ideal = (p as f64 * subcarriers as f64 / channel_len as f64).round() as usize;
        let mut idx = ideal % subcarriers;
        while taken[idx] {
            idx = (idx + 1) % subcarriers;
        }
        taken[idx] = true;
        indices.push(idx);
    }
    indices.sort_unstable();

    let f_sub = interpolation_matrix(subcarriers, &indices);
    let cond = cond2(f_sub.view())?;
    if !(cond <= COND_LIMIT) {
        return Err(Error::IllConditioned {
            cond,
            limit: COND_LIMIT,
        });
    }
    Ok(indices)
}

/// Rows `indices` of the first L columns of the DFT matrix scaled so that
/// A h = lambda restricted to those subcarriers:
/// A[r][l] = exp(-j 2 pi indices[r] l / M).
pub fn interpolation_matrix(subcarriers: usize, indices: &[usize]) -> Array2<Complex64> {
    let l_n = indices.len();
    Array2::from_shape_fn((l_n, l_n), |(r, l)| {
        let arg = -2.0 * std::f64::consts::PI * (indices[r] * l) as f64 / subcarriers as f64;
        Complex64::new(arg.cos(), arg.sin())
    })
}

/// Build every user's transmit frame: pilot rows of the book at the
/// placement's training elements, random data symbols elsewhere, with each
/// user's bits drawn from its own stream.
pub fn build_frames(
    placement: &PilotPlacement,
    book: &PilotBook,
    constellation: &Constellation,
    config: &SystemConfig,
    streams: &TrialStreams,
) -> Result<Vec<UserFrame>> {
    if placement.subcarriers() != config.subcarriers {
        return Err(Error::DimensionMismatch(format!(
            "placement spans {} subcarriers, config says {}",
            placement.subcarriers(),
            config.subcarriers
        )));
    }
    if placement.pilot_slots != config.pilot_slots {
        return Err(Error::DimensionMismatch(format!(
            "placement has {} training slots, config says {}",
            placement.pilot_slots, config.pilot_slots
        )));
    }
    if book.users() != config.users || book.pilot_slots() != config.pilot_slots {
        return Err(Error::DimensionMismatch(format!(
            "pilot book is {}x{}, config needs {}x{}",
            book.users(),
            book.pilot_slots(),
            config.users,
            config.pilot_slots
        )));
    }
    let (m_n, n_n) = (config.subcarriers, config.n_symbols());
    let bps = constellation.bits_per_symbol();
    let mut frames = Vec::with_capacity(config.users);
    for k in 0..config.users {
        let mut rng = streams.data_bits(k);
        let mut symbols = Array2::zeros((m_n, n_n));
        let mut labels = Array2::from_elem((m_n, n_n), PILOT_LABEL);
        let mut pilot_mask = Array2::from_elem((m_n, n_n), false);
        for m in 0..m_n {
            for n in 0..n_n {
                if placement.is_pilot_re(m, n) {
                    symbols[(m, n)] = book.matrix[(k, n)];
                    pilot_mask[(m, n)] = true;
                } else {
                    let mut label = 0u16;
                    for _ in 0..bps {
                        label = (label << 1) | rng.random::<bool>() as u16;
                    }
                    symbols[(m, n)] = constellation.point(label);
                    labels[(m, n)] = label;
                }
            }
        }
        frames.push(UserFrame {
            symbols,
            labels,
            pilot_mask,
        });
    }
    Ok(frames)
}

//! Output of a whole-frame detector.

use ndarray::{Array3, Axis};
use num_complex::Complex64;

/// Per-frame detector output across every subcarrier.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    /// Equalized symbols, (subcarriers x users x symbols). Elements at
    /// training positions, and at subcarriers the detector had to skip,
    /// are zero.
    pub soft: Array3<Complex64>,
    /// Hard-decision labels for `soft`.
    pub hard: Array3<u16>,
    /// Final channel estimate per subcarrier, where one was formed.
    pub estimates: Vec<Option<ndarray::Array2<Complex64>>>,
    /// Pilot resource elements each user spent on this frame.
    pub pilot_res_per_user: usize,
    /// Subcarriers where no direction could form any output.
    pub skipped_subcarriers: usize,
    /// Hard-decision blocks rejected by the rank guard (so no estimate was
    /// refreshed there).
    pub estimate_refusals: usize,
    /// True when some subcarrier produced no output; such frames are
    /// excluded from metric averages.
    pub failed: bool,
}

impl DetectionResult {
    pub fn subcarriers(&self) -> usize {
        self.soft.len_of(Axis(0))
    }

    pub fn users(&self) -> usize {
        self.soft.len_of(Axis(1))
    }

    pub fn symbols(&self) -> usize {
        self.soft.len_of(Axis(2))
    }
}

//! Intentionally empty: this crate exists to host the criterion bench
//! targets under `benches/`.

//! Statistical behavior over channel and noise ensembles: scaling laws,
//! correlation-model convergence, and end-to-end sanity floors that single
//! realizations cannot pin down.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmlink::conventional::EstimateSource;
use mmlink::sliding::cross_combine_mrc;
use mmlink::{
    average_sinr_db, cir_to_cfr, draw_channel, etu, mmse_combine, run_experiment, sample_pdp,
    AlphaMode, AlphaTable, ChannelEstimate, Constellation, ErrorAccumulator, ExperimentSpec,
    PdpModel, Scheme, SweepVariable, SystemConfig, TrialStreams,
};

fn micro_profile(sample_rate_hz: f64) -> PdpModel {
    // Two equal-scale taps two sample periods apart: frequency selective,
    // short enough for any cyclic prefix used here.
    let t = 1.0 / sample_rate_hz;
    PdpModel::new("micro", vec![0.0, 2.0 * t], vec![0.0, -3.0]).unwrap()
}

/// Combiner output SINR with the true response handed to the combiner.
/// Doubling the antennas must buy 3 dB, the array-gain scaling law.
#[test]
fn perfect_csi_mmse_gains_3db_per_antenna_doubling() {
    let subcarriers = 32;
    let users = 3;
    let symbols = 8;
    let noise_var = 1.0f64;
    let trials = 24;
    let constellation = Constellation::new(16).unwrap();
    let pdp = sample_pdp(
        &micro_profile(subcarriers as f64 * 15e3),
        subcarriers as f64 * 15e3,
    )
    .unwrap();
    let pdps = vec![pdp; users];

    let mut sinrs = Vec::new();
    for antennas in [64, 128, 256] {
        let mut acc = ErrorAccumulator::new(users);
        for trial in 0..trials {
            let streams = TrialStreams::new(5, trial);
            let chan = draw_channel(&pdps, antennas, &streams).unwrap();
            let cfr = cir_to_cfr(&chan, subcarriers).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            for m in 0..subcarriers {
                let x = Array2::from_shape_fn((users, symbols), |_| {
                    constellation.point(rng.random_range(0..16))
                });
                let lambda = cfr.at(m).to_owned();
                let mut y = lambda.dot(&x);
                let sigma = (noise_var / 2.0).sqrt();
                y.mapv_inplace(|v| {
                    v + Complex64::new(
                        sigma * rng.sample::<f64, _>(rand_distr::StandardNormal),
                        sigma * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    )
                });
                let est = ChannelEstimate {
                    lambda,
                    noise_mitigation: Array2::zeros((users, users)),
                    source: EstimateSource::Pilot,
                };
                let x_hat = mmse_combine(y.view(), &est, noise_var).unwrap();
                acc.add_block(x_hat.view(), x.view()).unwrap();
            }
        }
        sinrs.push(average_sinr_db(&acc).unwrap());
    }
    for pair in sinrs.windows(2) {
        let gain = pair[1] - pair[0];
        assert!(
            (2.0..=4.0).contains(&gain),
            "antenna doubling bought {gain:.2} dB, outside [2, 4] (sinrs {sinrs:?})"
        );
    }
}

/// Aggregate bit error rate of the conventional chain at generous Eb/N0:
/// with 200 antennas the post-combining margin is enormous, so anything
/// above the floor indicates a detection-path defect.
#[test]
fn conventional_mmse_ber_floor_at_high_ebn0() {
    let spec = ExperimentSpec {
        schemes: vec![Scheme::ConventionalMmse],
        sweep: SweepVariable::Ebn0,
        values: vec![10.0],
        trials: 3,
        config: SystemConfig {
            seed: 21,
            ..SystemConfig::default()
        },
        pdp: "etu".into(),
        ..ExperimentSpec::default()
    };
    let records = run_experiment(&spec).unwrap();
    let record = &records[0];
    assert_eq!(record.frames, 3);
    let ber = record.ber.unwrap();
    assert!(ber < 1e-3, "ber {ber} at Eb/N0 10 dB");
}

/// Single user, flat channel, no noise: every stage of the sliding chain
/// is exact, so the interference-only residual sits at the zero floor and
/// both receivers report the infinity sentinel.
#[test]
fn flat_noiseless_link_reports_infinite_sir() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("flat.txt");
    std::fs::write(&profile, "flat 0 0\n").unwrap();
    let spec = ExperimentSpec {
        schemes: vec![Scheme::ConventionalMmse, Scheme::Sliding { depth: Some(2) }],
        sweep: SweepVariable::Q,
        values: vec![4.0],
        trials: 2,
        config: SystemConfig {
            subcarriers: 16,
            cp_len: 4,
            users: 1,
            antennas: 4,
            pilot_slots: 3,
            data_slots: 5,
            noise_var: 0.0,
            depth: 2,
            constellation_order: 16,
            seed: 9,
            zc_root: 1,
            ..SystemConfig::default()
        },
        pdp: "flat".into(),
        pdp_file: Some(profile),
        ..ExperimentSpec::default()
    };
    let records = run_experiment(&spec).unwrap();
    for record in &records {
        assert_eq!(record.frames, 2, "{:?}", record.scheme);
        assert_eq!(record.sir_db, Some(f64::INFINITY), "{:?}", record.scheme);
        assert_eq!(record.ber, Some(0.0), "{:?}", record.scheme);
    }
}

/// Equalizing a subcarrier with an estimate carried from offset 1 must
/// beat carrying it from offset 10: the correlation model degrades with
/// distance, which is the premise behind bounding the depth.
#[test]
fn nearby_estimates_equalize_better_than_distant_ones() {
    let subcarriers = 1024;
    let users = 1;
    let antennas = 128;
    let symbols = 10;
    let reference = 512;
    let constellation = Constellation::new(4).unwrap();
    let pdp = sample_pdp(&etu(), subcarriers as f64 * 15e3).unwrap();
    let pdps = vec![pdp; users];
    let alpha = AlphaTable::new(
        AlphaMode::Exact,
        &pdps,
        subcarriers,
        15e3,
        subcarriers as f64 * 15e3,
        16,
    );

    let mut mse = [0.0f64; 2];
    let trials = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..trials {
        let streams = TrialStreams::new(31, trial);
        let chan = draw_channel(&pdps, antennas, &streams).unwrap();
        let cfr = cir_to_cfr(&chan, subcarriers).unwrap();
        let est = ChannelEstimate {
            lambda: cfr.at(reference).to_owned(),
            noise_mitigation: Array2::zeros((users, users)),
            source: EstimateSource::Pilot,
        };
        for (slot, offset) in [1i64, 10].into_iter().enumerate() {
            let m = (reference as i64 + offset) as usize;
            let x = Array2::from_shape_fn((users, symbols), |_| {
                constellation.point(rng.random_range(0..4))
            });
            let y = cfr.at(m).to_owned().dot(&x);
            let x_hat = cross_combine_mrc(y.view(), &est, &alpha, offset).unwrap();
            mse[slot] += (&x_hat - &x).mapv(|v| v.norm_sqr()).sum();
        }
    }
    assert!(
        mse[0] < mse[1] / 2.0,
        "offset-1 error {:.4e} not clearly below offset-10 error {:.4e}",
        mse[0],
        mse[1]
    );
}

//! Link evaluation against analytic references and physical bounds.

use dualcast::analog::design_analog;
use dualcast::channel::{generate_channel_set_for_trial, SystemConfig};
use dualcast::digital::{effective_channels, zero_forcing_directions, EffectiveChannels, UnicastDirections};
use dualcast::linalg::{CMatrix, CVector};
use dualcast::link::{ber_monte_carlo, ber_monte_carlo_with, DecodeOrder, LinkMetrics};
use dualcast::sca::{sca_optimize, PowerSolution, ScaModel, ScaSettings, Variant};
use num_complex::Complex64;
use statrs::function::erf::erfc;

fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn bare_solution(p: Vec<f64>, m: CVector) -> PowerSolution {
    let k = p.len();
    PowerSolution {
        p,
        m,
        u: None,
        mu: vec![0.0; k],
        upsilon: vec![0.0; k],
        delta: 0.0,
        objective_trace: Vec::new(),
        converged: true,
        coords: Vec::new(),
        history: Vec::new(),
    }
}

/// Standard error of a bit-error fraction over `bits` bits.
fn std_err(ber: f64, bits: f64) -> f64 {
    (ber.max(1.0 / bits) * (1.0 - ber) / bits).sqrt()
}

#[test]
fn single_user_awgn_matches_qpsk_analytic() {
    let one = Complex64::new(1.0, 0.0);
    let eff = EffectiveChannels { rows: CMatrix::from_element(1, 1, one) };
    let dirs = UnicastDirections { directions: CMatrix::from_element(1, 1, one), gains: vec![one] };
    let sol = bare_solution(vec![1.0], CVector::zeros(1));
    let n = 1_000_000;
    for (i, es_n0_db) in [0.0f64, 4.0, 7.0].into_iter().enumerate() {
        let es_n0 = 10f64.powf(es_n0_db / 10.0);
        let r = ber_monte_carlo(&eff, &dirs, &sol, 1.0 / es_n0, n, 100 + i as u64).unwrap();
        let expected = q_function(es_n0.sqrt());
        let se = std_err(expected, 2.0 * n as f64);
        assert!((r.unicast_ber - expected).abs() <= 3.0 * se, "Es/N0 {es_n0_db} dB: {} vs {expected}", r.unicast_ber);
    }
}

struct Solved {
    cfg: SystemConfig,
    analog: dualcast::analog::AnalogConfiguration,
    eff: EffectiveChannels,
    dirs: UnicastDirections,
    sol: PowerSolution,
    model: ScaModel,
    sigma_max: Vec<f64>,
}

fn solved(snr_db: f64, trial: u64) -> Solved {
    let cfg = SystemConfig::default().with_snr_db(snr_db);
    let set = generate_channel_set_for_trial(&cfg, 21, trial);
    let analog = design_analog(&set, &cfg).unwrap();
    let eff = effective_channels(&set, &analog).unwrap();
    let dirs = zero_forcing_directions(&eff).unwrap();
    let model = ScaModel::new(&analog, &eff, &dirs, &cfg, Variant::Pldm2).unwrap();
    let sol = sca_optimize(&model, &ScaSettings::default(), trial).unwrap();
    let sigma_max = set.channels.iter().map(|c| c.sigma_max).collect();
    Solved { cfg, analog, eff, dirs, sol, model, sigma_max }
}

#[test]
fn ber_does_not_improve_with_more_noise() {
    let s = solved(0.0, 3);
    let n = 100_000;
    let hi = ber_monte_carlo(&s.eff, &s.dirs, &s.sol, s.cfg.sigma2, n, 9).unwrap();
    let lo = ber_monte_carlo(&s.eff, &s.dirs, &s.sol, s.cfg.sigma2 / 2.0, n, 9).unwrap();
    let bits = 2.0 * n as f64 * s.cfg.k_devices as f64;
    for (a, b) in [(hi.multicast_ber, lo.multicast_ber), (hi.unicast_ber, lo.unicast_ber)] {
        let tol = 3.0 * (std_err(a, bits).powi(2) + std_err(b, bits).powi(2)).sqrt();
        assert!(a >= b - tol, "{a} at sigma2, {b} at sigma2/2");
    }
    assert!(hi.multicast_ber > 0.0);
    assert!((0.0..=1.0).contains(&hi.aggregate_ber));
}

#[test]
fn decoding_unicast_first_hurts_multicast() {
    let s = solved(0.0, 4);
    let n = 50_000;
    let sic = ber_monte_carlo_with(&s.eff, &s.dirs, &s.sol, s.cfg.sigma2, n, 5, DecodeOrder::MulticastFirst).unwrap();
    let swapped = ber_monte_carlo_with(&s.eff, &s.dirs, &s.sol, s.cfg.sigma2, n, 5, DecodeOrder::UnicastFirst).unwrap();
    assert!(swapped.multicast_ber > sic.multicast_ber, "{} vs {}", swapped.multicast_ber, sic.multicast_ber);
}

#[test]
fn aggregate_se_matches_direct_recomputation() {
    for t in 0..4 {
        let s = solved(5.0, t);
        let metrics = LinkMetrics::evaluate(&s.eff, &s.dirs, &s.sol, s.cfg.sigma2).unwrap();
        let k = s.cfg.k_devices;
        let mut total = 0.0;
        for i in 0..k {
            let row = s.eff.rows.row(i);
            let hv = |x: &CVector| (row * x)[(0, 0)].norm_sqr();
            let beams: Vec<f64> = (0..k).map(|j| s.sol.p[j] * hv(&s.dirs.directions.column(j).into_owned())).collect();
            let all: f64 = beams.iter().sum();
            total += (1.0 + hv(&s.sol.m) / (all + s.cfg.sigma2)).log2();
            total += (1.0 + beams[i] / (all - beams[i] + s.cfg.sigma2)).log2();
        }
        assert!((metrics.aggregate_se() - total).abs() <= 1e-9 * total);
    }
}

/// Each received layer is bounded by the combiner norm, the largest channel
/// singular value and the radiated power of that layer.
#[test]
fn received_power_respects_cauchy_schwarz() {
    for t in 0..6 {
        let s = solved(10.0, t);
        let k = s.cfg.k_devices;
        let f = &s.analog.f_matrix;
        let fm = (f * &s.sol.m).norm_squared();
        let fv: f64 = (0..k).map(|j| s.sol.p[j] * (f * s.dirs.direction(j)).norm_squared()).sum();
        let radiated = fm + fv;
        assert!(radiated <= s.cfg.p_tx * (1.0 + 1e-6));
        assert!((radiated - s.model.multicast_power(&s.sol.coords) - s.model.unicast_power(&s.sol.p)).abs() <= 1e-9);
        for i in 0..k {
            let received = s.eff.apply(i, &s.sol.m).norm_sqr()
                + (0..k).map(|j| s.sol.p[j] * s.eff.apply(i, &s.dirs.direction(j)).norm_sqr()).sum::<f64>();
            let bound = s.analog.combiners[i].norm_squared() * s.sigma_max[i].powi(2) * radiated;
            assert!(received <= bound * (1.0 + 1e-12), "trial {t} device {i}: {received} > {bound}");
        }
    }
}

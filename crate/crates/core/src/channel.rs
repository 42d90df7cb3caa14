//! Geometric narrowband mmWave channel model.
//!
//! Each device sees `L` planar-wave paths between uniform linear arrays with
//! half-wavelength spacing:
//!
//! ```text
//! H = sqrt(N_tx * N_rx / L) * sum_l gain_l * a_rx(aoa_l) * a_tx(aod_l)^H
//! ```
//!
//! Path gains are i.i.d. `CN(0, 1)` and both azimuths are uniform on
//! `[-pi, pi]`, so `E ||H||_F^2 = N_tx * N_rx`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dominant_singular_triplet, CMatrix, CVector};
use crate::rng::{mix_seed, rng_from_seed};

/// Scenario constants shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas.
    pub n_tx: usize,
    /// Receive antennas per device.
    pub n_rx: usize,
    /// Devices, which is also the number of transmit RF chains.
    pub k_devices: usize,
    /// Transmit phase-shifter levels.
    pub l_tx: usize,
    /// Receive phase-shifter levels.
    pub l_rx: usize,
    /// Propagation paths per channel.
    pub l_paths: usize,
    /// Total transmit power in watts.
    pub p_tx: f64,
    /// Required multicast-to-unicast power ratio.
    pub beta: f64,
    /// Multicast SINR target, linear.
    pub gamma_min: f64,
    /// Receiver noise variance in watts.
    pub sigma2: f64,
    /// Penalty on the fairness deviation.
    pub penalty_c: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_tx: 64,
            n_rx: 4,
            k_devices: 6,
            l_tx: 32,
            l_rx: 4,
            l_paths: 8,
            p_tx: 1.0,
            beta: 3.0,
            gamma_min: db_to_linear(5.0),
            sigma2: 0.1,
            penalty_c: 1e3,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_devices < 1 {
            return Err(Error::config("k_devices", "must be at least 1"));
        }
        if self.n_tx < self.k_devices {
            return Err(Error::config("n_tx", "must be at least k_devices"));
        }
        if self.n_rx < 1 {
            return Err(Error::config("n_rx", "must be at least 1"));
        }
        if self.l_tx < 2 {
            return Err(Error::config("l_tx", "must be at least 2"));
        }
        if self.l_rx < 2 {
            return Err(Error::config("l_rx", "must be at least 2"));
        }
        if self.l_paths < 1 {
            return Err(Error::config("l_paths", "must be at least 1"));
        }
        let positive = [
            ("p_tx", self.p_tx),
            ("gamma_min", self.gamma_min),
            ("sigma2", self.sigma2),
            ("penalty_c", self.penalty_c),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 1.0) {
            return Err(Error::config("beta", format!("must be >= 1, got {}", self.beta)));
        }
        Ok(())
    }

    /// Sets the noise variance from a transmit SNR `P_tx / sigma^2` in dB.
    pub fn with_snr_db(&self, snr_db: f64) -> SystemConfig {
        SystemConfig { sigma2: self.p_tx / db_to_linear(snr_db), ..self.clone() }
    }
}

/// One device's channel together with its path metadata and dominant
/// singular structure.
#[derive(Debug, Clone)]
pub struct GeometricChannel {
    /// `N_rx x N_tx` channel matrix.
    pub matrix: CMatrix,
    pub aod: Vec<f64>,
    pub aoa: Vec<f64>,
    pub gains: Vec<Complex64>,
    pub sigma_max: f64,
    pub left_vec: CVector,
    pub right_vec: CVector,
}

impl GeometricChannel {
    /// Wraps an explicit matrix, computing its dominant singular triplet.
    /// Path metadata is left empty.
    pub fn from_matrix(matrix: CMatrix) -> GeometricChannel {
        let t = dominant_singular_triplet(&matrix);
        GeometricChannel {
            matrix,
            aod: Vec::new(),
            aoa: Vec::new(),
            gains: Vec::new(),
            sigma_max: t.sigma,
            left_vec: t.left,
            right_vec: t.right,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub channels: Vec<GeometricChannel>,
    pub seed: u64,
}

impl ChannelSet {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

/// ULA response `(1/sqrt(n)) exp(i*pi*m*sin(angle))`, `m = 0..n-1`.
pub fn array_response(angle: f64, n: usize) -> CVector {
    let amp = 1.0 / (n as f64).sqrt();
    let s = angle.sin();
    CVector::from_fn(n, |m, _| Complex64::from_polar(amp, PI * m as f64 * s))
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Builds the channel matrix from explicit path parameters.
pub fn channel_from_paths(n_tx: usize, n_rx: usize, aod: &[f64], aoa: &[f64], gains: &[Complex64]) -> CMatrix {
    let l = gains.len();
    let scale = ((n_tx * n_rx) as f64 / l as f64).sqrt();
    let mut h = CMatrix::zeros(n_rx, n_tx);
    for ((&d, &a), &g) in aod.iter().zip(aoa).zip(gains) {
        let at = array_response(d, n_tx);
        let ar = array_response(a, n_rx);
        h += (&ar * at.adjoint()) * (g * scale);
    }
    h
}

/// Draws one channel realization. Per path the stream yields the departure
/// angle, the arrival angle and then the complex gain, in that order.
pub fn generate_channel(cfg: &SystemConfig, seed: u64) -> GeometricChannel {
    let mut rng = rng_from_seed(seed);
    let l = cfg.l_paths;
    let mut aod = Vec::with_capacity(l);
    let mut aoa = Vec::with_capacity(l);
    let mut gains = Vec::with_capacity(l);
    for _ in 0..l {
        aod.push(rng.random_range(-PI..=PI));
        aoa.push(rng.random_range(-PI..=PI));
        gains.push(complex_gaussian(&mut rng));
    }
    let matrix = channel_from_paths(cfg.n_tx, cfg.n_rx, &aod, &aoa, &gains);
    let t = dominant_singular_triplet(&matrix);
    GeometricChannel { matrix, aod, aoa, gains, sigma_max: t.sigma, left_vec: t.left, right_vec: t.right }
}

/// Channels of all devices for one trial; device `k` uses
/// `mix_seed(base_seed, k, trial)`.
pub fn generate_channel_set_for_trial(cfg: &SystemConfig, base_seed: u64, trial: u64) -> ChannelSet {
    let channels = (0..cfg.k_devices).map(|k| generate_channel(cfg, mix_seed(base_seed, k as u64, trial))).collect();
    ChannelSet { channels, seed: base_seed }
}

pub fn generate_channel_set(cfg: &SystemConfig, base_seed: u64) -> ChannelSet {
    generate_channel_set_for_trial(cfg, base_seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn array_response_broadside() {
        let a = array_response(0.0, 4);
        assert!(a.iter().all(|&x| close(x, Complex64::new(0.5, 0.0))));
    }

    #[test]
    fn array_response_endfire() {
        let a = array_response(PI / 2.0, 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(a[0], Complex64::new(r, 0.0)));
        assert!(close(a[1], Complex64::new(-r, 0.0)));
    }

    #[test]
    fn array_response_thirty_degrees() {
        // sin(pi/6) = 1/2, so entry m has phase pi*m/2.
        let a = array_response(PI / 6.0, 3);
        let amp = 1.0 / 3f64.sqrt();
        let expected = [Complex64::new(amp, 0.0), Complex64::new(0.0, amp), Complex64::new(-amp, 0.0)];
        for (x, e) in a.iter().zip(expected) {
            assert!(close(*x, e), "{x} vs {e}");
        }
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_path_closed_form() {
        let (nt, nr) = (8, 4);
        let h = channel_from_paths(nt, nr, &[0.0], &[0.0], &[Complex64::new(1.0, 0.0)]);
        let expected = (array_response(0.0, nr) * array_response(0.0, nt).adjoint())
            * Complex64::new(((nt * nr) as f64).sqrt(), 0.0);
        assert!((&h - &expected).norm() < 1e-12);
        assert!((h.norm() - ((nt * nr) as f64).sqrt()).abs() < 1e-12);
        let ch = GeometricChannel::from_matrix(h);
        assert!((ch.sigma_max - ((nt * nr) as f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SystemConfig::default();
        let a = generate_channel(&cfg, 42);
        let b = generate_channel(&cfg, 42);
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.aod, b.aod);
    }

    #[test]
    fn dominant_triplet_invariant() {
        let cfg = SystemConfig::default();
        for seed in 0..20 {
            let ch = generate_channel(&cfg, seed);
            let resid = (&ch.matrix * &ch.right_vec - &ch.left_vec * Complex64::new(ch.sigma_max, 0.0)).norm();
            assert!(resid <= 1e-8 * ch.sigma_max);
            assert!((ch.left_vec.norm() - 1.0).abs() < 1e-12);
            assert!((ch.right_vec.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_device_set_matches_direct_generation() {
        let cfg = SystemConfig { k_devices: 1, ..SystemConfig::default() };
        let set = generate_channel_set(&cfg, 9);
        assert_eq!(set.len(), 1);
        assert_eq!(set.channels[0].matrix, generate_channel(&cfg, mix_seed(9, 0, 0)).matrix);
    }

    #[test]
    fn sets_are_deterministic_and_seed_sensitive() {
        let cfg = SystemConfig::default();
        let a = generate_channel_set(&cfg, 5);
        let b = generate_channel_set(&cfg, 5);
        assert_eq!(a.len(), 6);
        for (x, y) in a.channels.iter().zip(&b.channels) {
            assert_eq!(x.matrix, y.matrix);
        }
        let cfg2 = SystemConfig { k_devices: 2, ..SystemConfig::default() };
        for s in 0..100u64 {
            let x = generate_channel_set(&cfg2, 2 * s);
            let y = generate_channel_set(&cfg2, 2 * s + 1);
            let differ = x.channels.iter().zip(&y.channels).any(|(p, q)| p.matrix != q.matrix);
            assert!(differ);
        }
    }

    #[test]
    fn validation_rejects_out_of_range_values() {
        let ok = SystemConfig::default();
        assert!(ok.validate().is_ok());
        let bad = SystemConfig { beta: 0.5, ..ok.clone() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "beta"));
        let bad = SystemConfig { n_tx: 4, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = SystemConfig { l_rx: 1, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = SystemConfig { sigma2: 0.0, ..ok };
        assert!(bad.validate().is_err());
    }
}

//! Exact SINRs, spectral efficiency, fairness statistics and Monte-Carlo
//! BER of the two-layer SIC receiver.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digital::{EffectiveChannels, UnicastDirections};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::rng::{mix_seed, rng_from_seed};
use crate::sca::PowerSolution;

/// Exact multicast and unicast SINRs including residual interference.
/// The multicast denominator counts every unicast beam, the device's own
/// included, since multicast is decoded first.
pub fn exact_sinrs(
    eff: &EffectiveChannels,
    dirs: &UnicastDirections,
    p: &[f64],
    m: &CVector,
    sigma2: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = eff.k();
    let mut mc = Vec::with_capacity(k);
    let mut uc = Vec::with_capacity(k);
    for i in 0..k {
        let cross: Vec<f64> = (0..k).map(|j| p[j] * eff.apply(i, &dirs.direction(j)).norm_sqr()).collect();
        let total: f64 = cross.iter().sum();
        mc.push(eff.apply(i, m).norm_sqr() / (total + sigma2));
        uc.push(cross[i] / (total - cross[i] + sigma2));
    }
    (mc, uc)
}

pub fn spectral_efficiency(sinr: f64) -> Result<f64> {
    if sinr < 0.0 || sinr.is_nan() {
        return Err(Error::NegativeSinr(sinr));
    }
    Ok((1.0 + sinr).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub multicast_sinr: Vec<f64>,
    pub unicast_sinr: Vec<f64>,
    pub multicast_se: Vec<f64>,
    pub unicast_se: Vec<f64>,
    pub delta: f64,
}

impl LinkMetrics {
    pub fn evaluate(
        eff: &EffectiveChannels,
        dirs: &UnicastDirections,
        sol: &PowerSolution,
        sigma2: f64,
    ) -> Result<LinkMetrics> {
        let (mc, uc) = exact_sinrs(eff, dirs, &sol.p, &sol.m, sigma2);
        Ok(LinkMetrics {
            multicast_se: mc.iter().map(|&s| spectral_efficiency(s)).collect::<Result<_>>()?,
            unicast_se: uc.iter().map(|&s| spectral_efficiency(s)).collect::<Result<_>>()?,
            multicast_sinr: mc,
            unicast_sinr: uc,
            delta: sol.delta,
        })
    }

    pub fn aggregate_se(&self) -> f64 {
        self.multicast_se.iter().chain(&self.unicast_se).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Sample mean, sample standard deviation and the normal 95% interval.
pub fn sample_stats(samples: &[f64]) -> Result<SampleStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewTrials(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let half = 1.96 * std / (n as f64).sqrt();
    Ok(SampleStats { mean, std, ci_low: mean - half, ci_high: mean + half, n })
}

/// Per-device statistics of `per_trial[t][k]`.
pub fn fairness_stats(per_trial: &[Vec<f64>]) -> Result<Vec<SampleStats>> {
    if per_trial.len() < 2 {
        return Err(Error::TooFewTrials(per_trial.len()));
    }
    let k = per_trial[0].len();
    if let Some(bad) = per_trial.iter().find(|r| r.len() != k) {
        return Err(Error::dims("fairness_stats", k, bad.len()));
    }
    (0..k).map(|d| sample_stats(&per_trial.iter().map(|r| r[d]).collect::<Vec<_>>())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeOrder {
    MulticastFirst,
    UnicastFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub multicast_ber: f64,
    pub unicast_ber: f64,
    pub aggregate_ber: f64,
    /// Bits over both layers and all devices.
    pub bits_simulated: u64,
    pub device_multicast_ber: Vec<f64>,
    pub device_unicast_ber: Vec<f64>,
}

/// Gray-mapped unit-energy 4-QAM: bit 0 sets the real sign, bit 1 the
/// imaginary sign.
pub fn qam4(bits: u8) -> Complex64 {
    let re = if bits & 1 == 0 { 1.0 } else { -1.0 };
    let im = if bits & 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn detect(y: Complex64, gain: Complex64) -> u8 {
    let mut best = 0u8;
    let mut best_d = f64::INFINITY;
    for b in 0..4u8 {
        let d = (y - gain * qam4(b)).norm_sqr();
        if d < best_d {
            best = b;
            best_d = d;
        }
    }
    best
}

const BER_BLOCK: usize = 4096;

pub fn ber_monte_carlo(
    eff: &EffectiveChannels,
    dirs: &UnicastDirections,
    sol: &PowerSolution,
    sigma2: f64,
    n_symbols: usize,
    seed: u64,
) -> Result<BerReport> {
    ber_monte_carlo_with(eff, dirs, sol, sigma2, n_symbols, seed, DecodeOrder::MulticastFirst)
}

pub fn ber_monte_carlo_with(
    eff: &EffectiveChannels,
    dirs: &UnicastDirections,
    sol: &PowerSolution,
    sigma2: f64,
    n_symbols: usize,
    seed: u64,
    order: DecodeOrder,
) -> Result<BerReport> {
    if n_symbols == 0 {
        return Err(Error::config("ber_symbols", "must be at least 1"));
    }
    let k = eff.k();
    if sol.p.len() != k || sol.m.len() != k {
        return Err(Error::dims("ber_monte_carlo", k, sol.p.len()));
    }
    // Composite gains h_k m and h_k b_j.
    let a: Vec<Complex64> = (0..k).map(|i| eff.apply(i, &sol.m)).collect();
    let b: Vec<Vec<Complex64>> =
        (0..k).map(|i| (0..k).map(|j| eff.apply(i, &dirs.direction(j)) * sol.p[j].max(0.0).sqrt()).collect()).collect();
    let noise_std = (sigma2 / 2.0).sqrt();
    let blocks = n_symbols.div_ceil(BER_BLOCK);

    let counts: Vec<(Vec<u64>, Vec<u64>)> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = rng_from_seed(mix_seed(seed, blk as u64, 0));
            let len = BER_BLOCK.min(n_symbols - blk * BER_BLOCK);
            let mut mc_err = vec![0u64; k];
            let mut uc_err = vec![0u64; k];
            let mut s_bits = vec![0u8; k];
            let mut s_sym = vec![Complex64::new(0.0, 0.0); k];
            for _ in 0..len {
                let z_bits: u8 = rng.random_range(0..4);
                let z = qam4(z_bits);
                for j in 0..k {
                    s_bits[j] = rng.random_range(0..4);
                    s_sym[j] = qam4(s_bits[j]);
                }
                for i in 0..k {
                    let nre: f64 = StandardNormal.sample(&mut rng);
                    let nim: f64 = StandardNormal.sample(&mut rng);
                    let mut y = a[i] * z + Complex64::new(nre, nim) * noise_std;
                    for j in 0..k {
                        y += b[i][j] * s_sym[j];
                    }
                    let (z_hat, s_hat) = match order {
                        DecodeOrder::MulticastFirst => {
                            let zh = detect(y, a[i]);
                            (zh, detect(y - a[i] * qam4(zh), b[i][i]))
                        }
                        DecodeOrder::UnicastFirst => {
                            let sh = detect(y, b[i][i]);
                            (detect(y - b[i][i] * qam4(sh), a[i]), sh)
                        }
                    };
                    mc_err[i] += u64::from((z_hat ^ z_bits).count_ones());
                    uc_err[i] += u64::from((s_hat ^ s_bits[i]).count_ones());
                }
            }
            (mc_err, uc_err)
        })
        .collect();

    let mut mc = vec![0u64; k];
    let mut uc = vec![0u64; k];
    for (m, u) in counts {
        for i in 0..k {
            mc[i] += m[i];
            uc[i] += u[i];
        }
    }
    let bits_per_device = 2 * n_symbols as u64;
    let layer_bits = bits_per_device * k as u64;
    let mc_total: u64 = mc.iter().sum();
    let uc_total: u64 = uc.iter().sum();
    Ok(BerReport {
        multicast_ber: mc_total as f64 / layer_bits as f64,
        unicast_ber: uc_total as f64 / layer_bits as f64,
        aggregate_ber: (mc_total + uc_total) as f64 / (2 * layer_bits) as f64,
        bits_simulated: 2 * layer_bits,
        device_multicast_ber: mc.iter().map(|&e| e as f64 / bits_per_device as f64).collect(),
        device_unicast_ber: uc.iter().map(|&e| e as f64 / bits_per_device as f64).collect(),
    })
}

//! Analog precoder and combiner design with finite-resolution phase shifters.
//!
//! Each device's RF-to-RF gain `|w_k^H H_k f_k|^2` is maximized separately:
//! `f_k` and `w_k` are the dominant right and left singular vectors of `H_k`
//! projected entrywise onto the phase-shifter codebooks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// Uniform constant-modulus phase codebook `{scale * exp(2 pi i l / levels)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCodebook {
    pub levels: usize,
    pub scale: f64,
}

impl PhaseCodebook {
    pub fn new(levels: usize, scale: f64) -> PhaseCodebook {
        assert!(levels >= 1, "codebook needs at least one level");
        PhaseCodebook { levels, scale }
    }

    /// Transmit codebook: `L_tx` levels at modulus `1/sqrt(N_tx)`.
    pub fn transmit(cfg: &SystemConfig) -> PhaseCodebook {
        PhaseCodebook::new(cfg.l_tx, 1.0 / (cfg.n_tx as f64).sqrt())
    }

    pub fn receive(cfg: &SystemConfig) -> PhaseCodebook {
        PhaseCodebook::new(cfg.l_rx, 1.0 / (cfg.n_rx as f64).sqrt())
    }

    pub fn phase(&self, index: usize) -> f64 {
        2.0 * PI * index as f64 / self.levels as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.levels).map(|l| self.phase(l)).collect()
    }

    pub fn codeword(&self, index: usize) -> Complex64 {
        Complex64::from_polar(self.scale, self.phase(index))
    }

    /// Index of the codeword maximizing `Re{phi^* v}`; ties go to the
    /// smallest index.
    pub fn nearest_index(&self, v: Complex64) -> usize {
        if v == Complex64::new(0.0, 0.0) || self.levels == 1 {
            return 0;
        }
        let step = 2.0 * PI / self.levels as f64;
        let arg = v.arg().rem_euclid(2.0 * PI);
        let guess = (arg / step).round() as isize;
        let l = self.levels as isize;
        let mut candidates: Vec<usize> =
            [guess - 1, guess, guess + 1].iter().map(|&i| i.rem_euclid(l) as usize).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut best = candidates[0];
        let mut best_score = self.score(best, v);
        // Codeword phases carry rounding error; near-equal scores are ties.
        let eps = 1e-12 * v.norm() * self.scale;
        for &c in &candidates[1..] {
            let s = self.score(c, v);
            if s > best_score + eps {
                best = c;
                best_score = s;
            }
        }
        best
    }

    pub(crate) fn score(&self, index: usize, v: Complex64) -> f64 {
        (self.codeword(index).conj() * v).re
    }

    pub fn contains(&self, x: Complex64, tol: f64) -> bool {
        (x.norm() - self.scale).abs() <= tol && (x - self.codeword(self.nearest_index(x))).norm() <= tol
    }
}

/// Projects every entry of `v` onto the codebook.
pub fn quantize_to_codebook(v: &CVector, cb: &PhaseCodebook) -> CVector {
    v.map(|x| cb.codeword(cb.nearest_index(x)))
}

#[derive(Debug, Clone)]
pub struct AnalogConfiguration {
    /// `N_tx x K` analog precoder, column `k` serves device `k`.
    pub f_matrix: CMatrix,
    pub combiners: Vec<CVector>,
    pub rf_gains: Vec<f64>,
}

/// `|w^H H f|^2`.
pub fn rf_gain(w: &CVector, h: &CMatrix, f: &CVector) -> Result<f64> {
    if h.nrows() != w.len() || h.ncols() != f.len() {
        return Err(Error::dims("rf_gain", format!("{}x{}", w.len(), f.len()), format!("{}x{}", h.nrows(), h.ncols())));
    }
    let hf = h * f;
    let s: Complex64 = w.iter().zip(hf.iter()).map(|(a, b)| a.conj() * b).sum();
    Ok(s.norm_sqr())
}

/// Designs `F` and `{w_k}` device by device.
pub fn design_analog(channels: &ChannelSet, cfg: &SystemConfig) -> Result<AnalogConfiguration> {
    if channels.len() != cfg.k_devices {
        return Err(Error::dims("design_analog", cfg.k_devices, channels.len()));
    }
    let tx = PhaseCodebook::transmit(cfg);
    let rx = PhaseCodebook::receive(cfg);
    let per_device: Vec<(CVector, CVector)> = channels
        .channels
        .par_iter()
        .map(|ch| (quantize_to_codebook(&ch.right_vec, &tx), quantize_to_codebook(&ch.left_vec, &rx)))
        .collect();

    let mut f_matrix = CMatrix::zeros(cfg.n_tx, cfg.k_devices);
    let mut combiners = Vec::with_capacity(cfg.k_devices);
    let mut rf_gains = Vec::with_capacity(cfg.k_devices);
    for (k, ((f, w), ch)) in per_device.into_iter().zip(&channels.channels).enumerate() {
        if ch.matrix.shape() != (cfg.n_rx, cfg.n_tx) {
            return Err(Error::dims(
                "design_analog",
                format!("{}x{}", cfg.n_rx, cfg.n_tx),
                format!("{}x{}", ch.matrix.nrows(), ch.matrix.ncols()),
            ));
        }
        rf_gains.push(rf_gain(&w, &ch.matrix, &f)?);
        f_matrix.set_column(k, &f);
        combiners.push(w);
    }
    Ok(AnalogConfiguration { f_matrix, combiners, rf_gains })
}

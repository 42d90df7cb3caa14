//! Effective baseband channels and zero-forcing unicast directions.

use num_complex::Complex64;

use crate::analog::AnalogConfiguration;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// Default cap on the condition number of the stacked effective channel.
pub const DEFAULT_CONDITION_CAP: f64 = 1e8;

/// Stacked effective channels: row `k` is `h_k^eff = w_k^H H_k F`.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    pub rows: CMatrix,
}

impl EffectiveChannels {
    pub fn k(&self) -> usize {
        self.rows.nrows()
    }

    pub fn row(&self, k: usize) -> CVector {
        self.rows.row(k).transpose()
    }

    /// `h_k^eff x` for a column vector `x`.
    pub fn apply(&self, k: usize, x: &CVector) -> Complex64 {
        self.rows.row(k).iter().zip(x.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Unit-norm ZF directions (columns of `directions`) and their gains
/// `g_k = h_k^eff v_k`, rotated to be real and nonnegative.
#[derive(Debug, Clone)]
pub struct UnicastDirections {
    pub directions: CMatrix,
    pub gains: Vec<Complex64>,
}

impl UnicastDirections {
    pub fn direction(&self, k: usize) -> CVector {
        self.directions.column(k).into_owned()
    }

    pub fn gain_abs(&self, k: usize) -> f64 {
        self.gains[k].norm()
    }
}

pub fn effective_channels(channels: &ChannelSet, analog: &AnalogConfiguration) -> Result<EffectiveChannels> {
    let k = analog.f_matrix.ncols();
    if channels.len() != k || analog.combiners.len() != k {
        return Err(Error::dims("effective_channels", k, channels.len()));
    }
    let mut rows = CMatrix::zeros(k, k);
    for (i, (ch, w)) in channels.channels.iter().zip(&analog.combiners).enumerate() {
        if ch.matrix.nrows() != w.len() || ch.matrix.ncols() != analog.f_matrix.nrows() {
            return Err(Error::dims(
                "effective_channels",
                format!("{}x{}", w.len(), analog.f_matrix.nrows()),
                format!("{}x{}", ch.matrix.nrows(), ch.matrix.ncols()),
            ));
        }
        let row = w.adjoint() * &ch.matrix * &analog.f_matrix;
        rows.set_row(i, &row);
    }
    Ok(EffectiveChannels { rows })
}

pub fn zero_forcing_directions(eff: &EffectiveChannels) -> Result<UnicastDirections> {
    zero_forcing_directions_capped(eff, DEFAULT_CONDITION_CAP)
}

/// ZF via the inverse of the stacked effective channel, columns normalized.
/// Fails with the condition estimate when it exceeds `condition_cap`.
pub fn zero_forcing_directions_capped(eff: &EffectiveChannels, condition_cap: f64) -> Result<UnicastDirections> {
    let k = eff.rows.nrows();
    if eff.rows.ncols() != k {
        return Err(Error::dims("zero_forcing_directions", format!("{k}x{k}"), format!("{k}x{}", eff.rows.ncols())));
    }
    let svd = eff.rows.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > condition_cap || !smax.is_finite() || smax == 0.0 {
        return Err(Error::IllConditioned { condition });
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^H");
    let inv_sigma = CMatrix::from_diagonal(&svd.singular_values.map(|s| Complex64::new(1.0 / s, 0.0)));
    let pinv = v_t.adjoint() * inv_sigma * u.adjoint();

    let mut directions = CMatrix::zeros(k, k);
    let mut gains = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: CVector = pinv.column(j).into_owned();
        let n = v.norm();
        v /= Complex64::new(n, 0.0);
        let g = eff.apply(j, &v);
        let rot = if g.norm() > 0.0 { g.conj() / g.norm() } else { Complex64::new(1.0, 0.0) };
        v *= rot;
        // Real up to rounding after the rotation; keep the modulus.
        gains.push(Complex64::new(eff.apply(j, &v).norm(), 0.0));
        directions.set_column(j, &v);
    }
    Ok(UnicastDirections { directions, gains })
}

/// Aggregate inter-user interference `sum_k sum_{j != k} p_j |h_k v_j|^2`.
pub fn residual_iui(eff: &EffectiveChannels, dirs: &UnicastDirections, p: &[f64]) -> f64 {
    let k = eff.k();
    let mut total = 0.0;
    for i in 0..k {
        for (j, &pj) in p.iter().enumerate().take(k) {
            if i != j {
                total += pj * eff.apply(i, &dirs.direction(j)).norm_sqr();
            }
        }
    }
    total
}

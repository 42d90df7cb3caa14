//! Successive convex approximation of the power/precoder problem.
//!
//! The multicast precoder is written as `m = T y` with a real coordinate
//! vector `y`: for PLDM-1 `y` interleaves the real and imaginary parts of
//! `m`, for PLDM-2 `T = V` (the unicast directions) and `y >= 0` are the
//! multicast weights. Each subproblem has decision vector
//! `[y, p, mu, upsilon, delta]` and is solved by [`crate::conic`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analog::AnalogConfiguration;
use crate::channel::SystemConfig;
use crate::conic::{solve_from, AffineRow, ConicProblem, QuadBudget, SolveStatus, SolverSettings};
use crate::digital::{EffectiveChannels, UnicastDirections};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::rng::rng_from_seed;

/// Relative headroom kept above `gamma_min` on each multicast SINR. A zero band
/// pins every iterate to the curve `sinr = gamma_min`, where tangent inner
/// approximations admit no movement beyond the penalized deviation.
pub const DEFAULT_SINR_BAND: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Multicast precoder free.
    Pldm1,
    /// Multicast precoder a nonnegative combination of unicast directions.
    Pldm2,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Pldm1 => "pldm1",
            Variant::Pldm2 => "pldm2",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pldm1" | "pldm-1" => Ok(Variant::Pldm1),
            "pldm2" | "pldm-2" => Ok(Variant::Pldm2),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaSettings {
    pub max_outer_iterations: usize,
    pub objective_tolerance: f64,
    pub solver_tolerance: f64,
    pub variant: Variant,
}

impl Default for ScaSettings {
    fn default() -> Self {
        ScaSettings {
            max_outer_iterations: 20,
            objective_tolerance: 1e-5,
            solver_tolerance: 1e-7,
            variant: Variant::Pldm2,
        }
    }
}

impl ScaSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations < 1 {
            return Err(Error::config("max_outer_iterations", "must be at least 1"));
        }
        if !(self.objective_tolerance > 0.0) || !(self.solver_tolerance > 0.0) {
            return Err(Error::config("solver_tolerance", "tolerances must be positive"));
        }
        Ok(())
    }
}

/// Per-iterate diagnostics, measured against the original constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub objective: f64,
    pub delta: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// `min_k (sinr_k - mu_k) / max(mu_k, sinr_k)`.
    pub multicast_slack: f64,
    pub split_ratio: f64,
    pub budget_used: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub p: Vec<f64>,
    pub m: CVector,
    /// PLDM-2 weights with `m = sum_k sqrt(p_k) u_k v_k`.
    pub u: Option<Vec<f64>>,
    pub mu: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub delta: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Real multicast coordinates `y` with `m = T y`.
    pub coords: Vec<f64>,
    pub history: Vec<IterateRecord>,
}

impl PowerSolution {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }
}

/// Index layout of the subproblem decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub ny: usize,
    pub k: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.ny + 3 * self.k + 1
    }
    pub fn y(&self, j: usize) -> usize {
        j
    }
    pub fn p(&self, k: usize) -> usize {
        self.ny + k
    }
    pub fn mu(&self, k: usize) -> usize {
        self.ny + self.k + k
    }
    pub fn upsilon(&self, k: usize) -> usize {
        self.ny + 2 * self.k + k
    }
    pub fn delta(&self) -> usize {
        self.ny + 3 * self.k
    }
}

/// Instance constants shared by every SCA iteration.
#[derive(Debug, Clone)]
pub struct ScaModel {
    pub variant: Variant,
    pub layout: Layout,
    /// `K x ny` map from real coordinates to the multicast precoder.
    pub t_map: CMatrix,
    /// Rows `a_k = h_k^eff T`.
    pub a_rows: Vec<CVector>,
    /// `Re(a_k^H a_k)`, so that `|h_k^eff m|^2 = y^T M_k y`.
    pub m_forms: Vec<DMatrix<f64>>,
    /// `Re(T^H F^H F T)`, so that `||F m||^2 = y^T Q y`.
    pub q_form: DMatrix<f64>,
    /// `|g_k|^2`.
    pub g2: Vec<f64>,
    /// `sigma^2 ||w_k||^2`.
    pub noise: Vec<f64>,
    /// `||F v_k||^2`.
    pub c: Vec<f64>,
    pub p_tx: f64,
    pub beta: f64,
    pub gamma_min: f64,
    pub penalty_c: f64,
    pub split_form: SplitForm,
    /// Relative headroom of the SINR upper side: `sinr_k <= gamma (1 + band) + delta`.
    pub sinr_band: f64,
}

/// How the power-split constraint is convexified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitForm {
    /// Linearize the ratio `||Fm||^2 / sum_k p_k ||F v_k||^2 >= beta`.
    Ratio,
    /// Linearize `||Fm||^2` in `||Fm||^2 >= beta sum_k p_k ||F v_k||^2`.
    Product,
}

impl ScaModel {
    pub fn new(
        analog: &AnalogConfiguration,
        eff: &EffectiveChannels,
        dirs: &UnicastDirections,
        cfg: &SystemConfig,
        variant: Variant,
    ) -> Result<ScaModel> {
        let k = eff.k();
        if dirs.directions.shape() != (k, k) || analog.f_matrix.ncols() != k || analog.combiners.len() != k {
            return Err(Error::dims("sca model", k, dirs.directions.ncols()));
        }
        let f = &analog.f_matrix;
        let c: Vec<f64> = (0..k).map(|j| (f * dirs.direction(j)).norm_squared()).collect();
        if c.iter().all(|&v| v <= 0.0) {
            return Err(Error::DegenerateAnalog("every unicast beam has zero radiated power".into()));
        }
        let i = Complex64::new(0.0, 1.0);
        let t_map = match variant {
            Variant::Pldm1 => {
                let mut t = CMatrix::zeros(k, 2 * k);
                for j in 0..k {
                    t[(j, 2 * j)] = Complex64::new(1.0, 0.0);
                    t[(j, 2 * j + 1)] = i;
                }
                t
            }
            Variant::Pldm2 => dirs.directions.clone(),
        };
        let ny = t_map.ncols();
        let a_rows: Vec<CVector> = (0..k).map(|kk| (eff.rows.row(kk) * &t_map).transpose()).collect();
        let m_forms = a_rows.iter().map(|a| DMatrix::from_fn(ny, ny, |r, s| (a[r].conj() * a[s]).re)).collect();
        let ft = f * &t_map;
        let g = ft.adjoint() * &ft;
        let q_form = DMatrix::from_fn(ny, ny, |r, s| 0.5 * (g[(r, s)].re + g[(s, r)].re));
        let g2 = dirs.gains.iter().map(|g| g.norm_sqr()).collect();
        let noise = analog.combiners.iter().map(|w| cfg.sigma2 * w.norm_squared()).collect();
        Ok(ScaModel {
            variant,
            layout: Layout { ny, k },
            t_map,
            a_rows,
            m_forms,
            q_form,
            g2,
            noise,
            c,
            p_tx: cfg.p_tx,
            beta: cfg.beta,
            gamma_min: cfg.gamma_min,
            penalty_c: cfg.penalty_c,
            split_form: SplitForm::Product,
            sinr_band: DEFAULT_SINR_BAND,
        })
    }

    pub fn k(&self) -> usize {
        self.layout.k
    }

    pub fn multicast_power(&self, y: &[f64]) -> f64 {
        quad(&self.q_form, y)
    }

    pub fn unicast_power(&self, p: &[f64]) -> f64 {
        self.c.iter().zip(p).map(|(c, p)| c * p).sum()
    }

    /// `|h_k m|^2 / (p_k |g_k|^2 + sigma^2 ||w_k||^2)`.
    pub fn multicast_sinr(&self, k: usize, y: &[f64], p: &[f64]) -> f64 {
        quad(&self.m_forms[k], y) / (p[k] * self.g2[k] + self.noise[k])
    }

    /// Smallest `delta` with `|h_k m|^2 <= gamma (1 + band) D_k + delta n_k`,
    /// the restricted form of `sinr_k <= gamma + delta` used by the subproblem.
    pub fn sinr_cap_deviation(&self, k: usize, y: &[f64], p: &[f64]) -> f64 {
        let d = p[k] * self.g2[k] + self.noise[k];
        (quad(&self.m_forms[k], y) - self.gamma_min * (1.0 + self.sinr_band) * d) / self.noise[k]
    }

    pub fn unicast_sinr(&self, k: usize, p: &[f64]) -> f64 {
        p[k] * self.g2[k] / self.noise[k]
    }

    pub fn precoder(&self, y: &[f64]) -> CVector {
        let yc = CVector::from_iterator(y.len(), y.iter().map(|&v| Complex64::new(v, 0.0)));
        &self.t_map * yc
    }

    pub fn objective(&self, mu: &[f64], upsilon: &[f64], delta: f64) -> f64 {
        mu.iter().sum::<f64>() + upsilon.iter().sum::<f64>() - self.penalty_c * delta
    }

    pub fn pack(&self, s: &PowerSolution) -> Vec<f64> {
        let l = self.layout;
        let mut x = vec![0.0; l.dim()];
        x[..l.ny].copy_from_slice(&s.coords);
        for k in 0..l.k {
            x[l.p(k)] = s.p[k];
            x[l.mu(k)] = s.mu[k];
            x[l.upsilon(k)] = s.upsilon[k];
        }
        x[l.delta()] = s.delta;
        x
    }

    fn unpack(
        &self,
        x: &[f64],
        objective_trace: Vec<f64>,
        history: Vec<IterateRecord>,
        converged: bool,
    ) -> PowerSolution {
        let l = self.layout;
        let coords = x[..l.ny].to_vec();
        let p: Vec<f64> = (0..l.k).map(|k| x[l.p(k)].max(0.0)).collect();
        let u = match self.variant {
            Variant::Pldm1 => None,
            Variant::Pldm2 => {
                Some((0..l.k).map(|k| if p[k] > 0.0 { coords[k].max(0.0) / p[k].sqrt() } else { 0.0 }).collect())
            }
        };
        PowerSolution {
            m: self.precoder(&coords),
            u,
            mu: (0..l.k).map(|k| x[l.mu(k)]).collect(),
            upsilon: (0..l.k).map(|k| x[l.upsilon(k)].max(0.0)).collect(),
            delta: x[l.delta()].max(0.0),
            p,
            coords,
            objective_trace,
            converged,
            history,
        }
    }

    fn record(&self, iteration: usize, s: &PowerSolution, solver_iterations: usize) -> IterateRecord {
        let mut slack = f64::INFINITY;
        for k in 0..self.k() {
            let sinr = self.multicast_sinr(k, &s.coords, &s.p);
            let scale = sinr.abs().max(s.mu[k].abs()).max(1e-300);
            slack = slack.min((sinr - s.mu[k]) / scale);
        }
        let e = self.multicast_power(&s.coords);
        let su = self.unicast_power(&s.p);
        IterateRecord {
            iteration,
            objective: self.objective(&s.mu, &s.upsilon, s.delta),
            delta: s.delta,
            mu_min: s.mu.iter().copied().fold(f64::INFINITY, f64::min),
            mu_max: s.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            multicast_slack: slack,
            split_ratio: if su > 0.0 { e / su } else { f64::INFINITY },
            budget_used: e + su,
            solver_iterations,
        }
    }

    /// Gradient-form linearization of `mu_k <= |a_k y|^2 / D_k(p)` around
    /// `(y0, p0)`: returns `(d/dy, d/dp_k, constant)` such that the
    /// linear minorant is `grad_y . y + grad_p p_k + constant`.
    pub fn multicast_linearization(&self, k: usize, y0: &[f64], p0: &[f64]) -> (Vec<f64>, f64, f64) {
        let d = p0[k] * self.g2[k] + self.noise[k];
        let my = mat_vec(&self.m_forms[k], y0);
        let z2 = dot(&my, y0);
        let grad_y: Vec<f64> = my.iter().map(|v| 2.0 * v / d).collect();
        let grad_p = -z2 * self.g2[k] / (d * d);
        let constant = -z2 * self.noise[k] / (d * d);
        (grad_y, grad_p, constant)
    }

    /// Tangent plane of `y^T Q y` at `y0`: `(gradient, constant)`.
    pub fn multicast_power_linearization(&self, y0: &[f64]) -> (Vec<f64>, f64) {
        let qy = mat_vec(&self.q_form, y0);
        let e = dot(&qy, y0);
        (qy.iter().map(|v| 2.0 * v).collect(), -e)
    }

    /// Gradient-form linearization of the split ratio `y^T Q y / c^T p`
    /// (homogeneous of degree one, so the constant term vanishes).
    pub fn split_linearization(&self, y0: &[f64], p0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = self.unicast_power(p0);
        let qy = mat_vec(&self.q_form, y0);
        let e = dot(&qy, y0);
        let grad_y = qy.iter().map(|v| 2.0 * v / s).collect();
        let grad_p = self.c.iter().map(|c| -e * c / (s * s)).collect();
        (grad_y, grad_p)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).iter().copied().collect()
}

fn quad(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    dot(&mat_vec(m, v), v)
}

/// Starting point: half the budget on each layer, unicast then scaled down
/// by `beta` so the split holds, random multicast coordinates.
pub fn initialize_feasible(model: &ScaModel, seed: u64) -> Result<PowerSolution> {
    let k = model.k();
    let total_c: f64 = model.c.iter().sum();
    if !(total_c > 0.0) {
        return Err(Error::DegenerateAnalog("sum of unicast beam powers is zero".into()));
    }
    let mut p0 = model.p_tx / (2.0 * total_c);
    if model.beta > 1.0 {
        p0 /= model.beta;
    }
    let p = vec![p0; k];

    let mut rng = rng_from_seed(seed);
    let ny = model.layout.ny;
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut y: Vec<f64> = match model.variant {
        // Complex CN(0,1) entries: real and imaginary parts of variance 1/2.
        Variant::Pldm1 => (0..ny).map(|_| gauss() * std::f64::consts::FRAC_1_SQRT_2).collect(),
        // Weights are the moduli of CN(0,1) draws, since phases are fixed by V.
        Variant::Pldm2 => (0..ny).map(|_| (0.5 * (gauss().powi(2) + gauss().powi(2))).sqrt()).collect(),
    };
    let e = model.multicast_power(&y);
    if !(e > 0.0) {
        return Err(Error::DegenerateAnalog("random multicast precoder radiates no power".into()));
    }
    let scale = (0.5 * model.p_tx / e).sqrt();
    y.iter_mut().for_each(|v| *v *= scale);

    let mu_min = (0..k).map(|kk| model.multicast_sinr(kk, &y, &p)).fold(f64::INFINITY, f64::min);
    let mu = vec![mu_min; k];
    let upsilon: Vec<f64> = (0..k).map(|kk| model.unicast_sinr(kk, &p)).collect();
    // Smallest deviation keeping mu_k and every SINR within delta of the
    // target.
    let excess = (0..k).map(|kk| model.sinr_cap_deviation(kk, &y, &p)).fold(f64::NEG_INFINITY, f64::max);
    let delta = (mu_min - model.gamma_min).abs().max(excess);
    let obj = model.objective(&mu, &upsilon, delta);
    let mut s = model.unpack(&model.pack_raw(&y, &p, &mu, &upsilon, delta), vec![obj], Vec::new(), false);
    s.history.push(model.record(0, &s, 0));
    Ok(s)
}

impl ScaModel {
    fn pack_raw(&self, y: &[f64], p: &[f64], mu: &[f64], upsilon: &[f64], delta: f64) -> Vec<f64> {
        let l = self.layout;
        let mut x = vec![0.0; l.dim()];
        x[..l.ny].copy_from_slice(y);
        for k in 0..l.k {
            x[l.p(k)] = p[k];
            x[l.mu(k)] = mu[k];
            x[l.upsilon(k)] = upsilon[k];
        }
        x[l.delta()] = delta;
        x
    }
}

impl ScaModel {
    /// Pulls `s` strictly inside the subproblem built around it: unicast
    /// powers shrink, the auxiliaries back off, and the deviation widens.
    /// Every linearized row gains positive slack because its `p`
    /// coefficients are nonpositive.
    pub fn interior_point(&self, s: &PowerSolution, prob: &ConicProblem) -> Vec<f64> {
        let eps = 1e-3;
        let l = self.layout;
        let mut x = self.pack(s);
        let mu_scale = s.mu.iter().fold(0.0f64, |a, &m| a.max(m.abs())).max(1e-300);
        let back_off = eps * mu_scale;
        for k in 0..l.k {
            x[l.p(k)] *= 1.0 - eps;
            x[l.upsilon(k)] *= 1.0 - 2.0 * eps;
            x[l.mu(k)] -= back_off;
        }
        let mut widen = 2.0 * back_off + eps * s.delta;
        let base = x[l.delta()];
        // A tight SINR upper side loses slack when p shrinks; widen the
        // deviation until every row is strictly satisfied.
        for _ in 0..60 {
            x[l.delta()] = base + widen;
            if prob.min_slack(&x) > 0.0 {
                break;
            }
            widen = widen * 2.0 + eps * self.gamma_min * 1e-6;
        }
        x
    }
}

/// The fairness chain `mu_k - mu_{k+1 mod K} >= 0` as inequality rows.
/// Its slacks sum to zero identically, so it is only satisfiable with
/// every `mu_k` equal; the subproblem carries the equivalent equalities.
pub fn cyclic_chain_rows(layout: Layout) -> Vec<AffineRow> {
    (0..layout.k)
        .map(|k| {
            let mut a = vec![0.0; layout.dim()];
            a[layout.mu(k)] += 1.0;
            a[layout.mu((k + 1) % layout.k)] -= 1.0;
            AffineRow::new(a, 0.0)
        })
        .collect()
}

/// Convex inner approximation around `current`.
pub fn build_subproblem(current: &PowerSolution, model: &ScaModel) -> Result<ConicProblem> {
    let l = model.layout;
    let n = l.dim();
    let (y0, p0) = (&current.coords, &current.p);
    let mut prob = ConicProblem::new(n);
    for k in 0..l.k {
        prob.objective[l.mu(k)] = 1.0;
        prob.objective[l.upsilon(k)] = 1.0;
    }
    prob.objective[l.delta()] = -model.penalty_c;

    for k in 0..l.k {
        // Multicast SINR minorant minus mu_k.
        let (gy, gp, c0) = model.multicast_linearization(k, y0, p0);
        let mut a = vec![0.0; n];
        a[..l.ny].copy_from_slice(&gy);
        a[l.p(k)] = gp;
        a[l.mu(k)] = -1.0;
        prob.affine_ineqs.push(AffineRow::new(a, c0));

        // Unicast SINR minus upsilon_k.
        let mut a = vec![0.0; n];
        a[l.p(k)] = model.g2[k] / model.noise[k];
        a[l.upsilon(k)] = -1.0;
        prob.affine_ineqs.push(AffineRow::new(a, 0.0));

        // gamma - delta <= mu_k <= gamma + delta.
        let mut a = vec![0.0; n];
        a[l.mu(k)] = -1.0;
        a[l.delta()] = 1.0;
        prob.affine_ineqs.push(AffineRow::new(a, model.gamma_min));
        let mut a = vec![0.0; n];
        a[l.mu(k)] = 1.0;
        a[l.delta()] = 1.0;
        prob.affine_ineqs.push(AffineRow::new(a, -model.gamma_min));
    }

    let mut a = vec![0.0; n];
    let offset = match model.split_form {
        SplitForm::Ratio => {
            let (gy, gp) = model.split_linearization(y0, p0);
            a[..l.ny].copy_from_slice(&gy);
            for k in 0..l.k {
                a[l.p(k)] = gp[k];
            }
            -model.beta
        }
        SplitForm::Product => {
            let (gy, c0) = model.multicast_power_linearization(y0);
            a[..l.ny].copy_from_slice(&gy);
            for k in 0..l.k {
                a[l.p(k)] = -model.beta * model.c[k];
            }
            c0
        }
    };
    prob.affine_ineqs.push(AffineRow::new(a, offset));

    for k in 0..l.k.saturating_sub(1) {
        let mut a = vec![0.0; n];
        a[l.mu(k)] = 1.0;
        a[l.mu(k + 1)] = -1.0;
        prob.affine_eqs.push(AffineRow::new(a, 0.0));
    }

    // SINR upper side |a_k y|^2 <= (gamma + delta)(p_k g_k^2 + n_k),
    // restricted by dropping the nonnegative delta * p_k g_k^2 term.
    for k in 0..l.k {
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (l.ny, l.ny)).copy_from(&model.m_forms[k]);
        let mut linear = vec![0.0; n];
        let cap = model.gamma_min * (1.0 + model.sinr_band);
        linear[l.p(k)] = -cap * model.g2[k];
        linear[l.delta()] = -model.noise[k];
        prob.quad_ineqs.push(QuadBudget { quad: q, linear, bound: cap * model.noise[k] });
    }

    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (l.ny, l.ny)).copy_from(&model.q_form);
    let mut linear = vec![0.0; n];
    for k in 0..l.k {
        linear[l.p(k)] = model.c[k];
    }
    prob.quad_budget = Some(QuadBudget { quad: q, linear, bound: model.p_tx });

    for k in 0..l.k {
        prob.nonneg.push(l.p(k));
        prob.nonneg.push(l.upsilon(k));
    }
    prob.nonneg.push(l.delta());
    match model.variant {
        Variant::Pldm1 => prob.complex_block = Some(0..l.ny),
        Variant::Pldm2 => prob.nonneg.extend(0..l.ny),
    }
    prob.nonneg.sort_unstable();

    let finite = prob.affine_ineqs.iter().all(|r| r.offset.is_finite() && r.coeffs.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFinite("SCA subproblem coefficients"));
    }
    Ok(prob)
}

/// Runs the SCA loop from [`initialize_feasible`].
pub fn sca_optimize(model: &ScaModel, settings: &ScaSettings, seed: u64) -> Result<PowerSolution> {
    settings.validate()?;
    let mut current = initialize_feasible(model, seed)?;
    let solver = SolverSettings::with_tol(settings.solver_tolerance);
    let mut converged = false;
    for it in 0..settings.max_outer_iterations {
        let prob = build_subproblem(&current, model)?;
        let x0 = model.interior_point(&current, &prob);
        let sol = solve_from(&prob, Some(&x0), &solver)?;
        let prev = *current.objective_trace.last().expect("trace starts with the initial point");
        let scale = 1.0 + x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let usable = match sol.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIterations => {
                prob.max_violation(&sol.x) <= 1e-8 * scale && sol.objective_value >= prev - 1e-6 * (1.0 + prev.abs())
            }
            SolveStatus::Infeasible => false,
        };
        if !usable {
            if it == 0 {
                return Err(Error::SubproblemInfeasible { iteration: 0 });
            }
            break;
        }
        let mut trace = std::mem::take(&mut current.objective_trace);
        let history = std::mem::take(&mut current.history);
        let mut next = model.unpack(&sol.x, Vec::new(), history, false);
        let obj = model.objective(&next.mu, &next.upsilon, next.delta);
        trace.push(obj);
        next.objective_trace = trace;
        let rec = model.record(it + 1, &next, sol.iterations);
        next.history.push(rec);
        current = next;
        if (obj - prev).abs() <= settings.objective_tolerance * prev.abs().max(1e-12) {
            converged = true;
            break;
        }
    }
    current.converged = converged;
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::design_analog;
    use crate::channel::{generate_channel_set, ChannelSet, GeometricChannel};
    use crate::digital::{effective_channels, zero_forcing_directions};

    fn pipeline(cfg: &SystemConfig, seed: u64, variant: Variant) -> ScaModel {
        let set = generate_channel_set(cfg, seed);
        let analog = design_analog(&set, cfg).unwrap();
        let eff = effective_channels(&set, &analog).unwrap();
        let dirs = zero_forcing_directions(&eff).unwrap();
        ScaModel::new(&analog, &eff, &dirs, cfg, variant).unwrap()
    }

    fn small_cfg() -> SystemConfig {
        SystemConfig { n_tx: 8, n_rx: 2, k_devices: 2, l_tx: 8, l_rx: 4, l_paths: 3, ..SystemConfig::default() }
    }

    /// Unit-gain scalar toy with `F = 1`, `w = 1`.
    fn scalar_toy(sigma2: f64, variant: Variant) -> ScaModel {
        let cfg = SystemConfig { n_tx: 1, n_rx: 1, k_devices: 1, sigma2, ..SystemConfig::default() };
        let one = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let set = ChannelSet { channels: vec![GeometricChannel::from_matrix(one.clone())], seed: 0 };
        let analog = AnalogConfiguration {
            f_matrix: one.clone(),
            combiners: vec![CVector::from_element(1, Complex64::new(1.0, 0.0))],
            rf_gains: vec![1.0],
        };
        let eff = effective_channels(&set, &analog).unwrap();
        let dirs = zero_forcing_directions(&eff).unwrap();
        ScaModel::new(&analog, &eff, &dirs, &cfg, variant).unwrap()
    }

    #[test]
    fn initialization_recipe() {
        for variant in [Variant::Pldm1, Variant::Pldm2] {
            let model = pipeline(&small_cfg(), 11, variant);
            let s = initialize_feasible(&model, 5).unwrap();
            let total_c: f64 = model.c.iter().sum();
            for &p in &s.p {
                assert!((p - 1.0 / (2.0 * total_c * 3.0)).abs() < 1e-15);
            }
            let e = model.multicast_power(&s.coords);
            assert!((e - 0.5).abs() < 1e-12);
            let ratio = e / model.unicast_power(&s.p);
            assert!(ratio >= 3.0 - 1e-12, "{ratio}");
            assert!(s.mu.iter().all(|&m| m == s.mu[0]));
            let excess = (0..model.k())
                .map(|kk| model.sinr_cap_deviation(kk, &s.coords, &s.p))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.delta, (s.mu[0] - model.gamma_min).abs().max(excess));
        }
    }

    #[test]
    fn linearization_is_exact_at_expansion_point() {
        let model = pipeline(&small_cfg(), 3, Variant::Pldm1);
        let s = initialize_feasible(&model, 9).unwrap();
        for k in 0..model.k() {
            let (gy, gp, c0) = model.multicast_linearization(k, &s.coords, &s.p);
            let lin = dot(&gy, &s.coords) + gp * s.p[k] + c0;
            let exact = model.multicast_sinr(k, &s.coords, &s.p);
            assert!((lin - exact).abs() <= 1e-12 * exact.abs().max(1e-300));
        }
        let (gy, gp) = model.split_linearization(&s.coords, &s.p);
        let lin = dot(&gy, &s.coords) + dot(&gp, &s.p);
        let exact = model.multicast_power(&s.coords) / model.unicast_power(&s.p);
        assert!((lin - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn scalar_toy_gradients_by_hand() {
        // |m|^2 / (p + 1) at m = 0.6, p = 0.2.
        let model = scalar_toy(1.0, Variant::Pldm1);
        let y = [0.6, 0.0];
        let p = [0.2];
        let (gy, gp, _) = model.multicast_linearization(0, &y, &p);
        assert!((gy[0] - 2.0 * 0.6 / 1.2).abs() < 1e-14);
        assert!(gy[1].abs() < 1e-14);
        assert!((gp + 0.36 / 1.44).abs() < 1e-14);
    }

    #[test]
    fn chain_equalities_describe_the_cycle() {
        let model = pipeline(&small_cfg(), 1, Variant::Pldm2);
        let s = initialize_feasible(&model, 1).unwrap();
        let prob = build_subproblem(&s, &model).unwrap();
        let cyc = cyclic_chain_rows(model.layout);
        let mut x = model.pack(&s);
        assert!(cyc.iter().all(|r| r.eval(&x) >= 0.0));
        assert!(prob.affine_eqs.iter().all(|r| r.eval(&x) == 0.0));
        x[model.layout.mu(0)] += 1e-3;
        assert!(cyc.iter().any(|r| r.eval(&x) < 0.0));
        assert!(prob.affine_eqs.iter().any(|r| r.eval(&x) != 0.0));
    }

    #[test]
    fn pldm2_parametrization_identity() {
        let model = pipeline(&small_cfg(), 4, Variant::Pldm2);
        let s = sca_optimize(&model, &ScaSettings::default(), 2).unwrap();
        let u = s.u.as_ref().unwrap();
        let mut m = CVector::zeros(model.k());
        for k in 0..model.k() {
            m += model.t_map.column(k) * Complex64::new(s.p[k].sqrt() * u[k], 0.0);
        }
        assert!((m - &s.m).norm() <= 1e-10 * s.m.norm());
    }

    #[test]
    fn trace_ascends_and_constraints_hold() {
        for (seed, variant) in [(1, Variant::Pldm1), (2, Variant::Pldm2), (3, Variant::Pldm1)] {
            let model = pipeline(&small_cfg().with_snr_db(5.0), seed, variant);
            let s = sca_optimize(&model, &ScaSettings { variant, ..ScaSettings::default() }, seed).unwrap();
            for w in s.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-6 * (1.0 + w[0].abs()), "{:?}", s.objective_trace);
            }
            let e = model.multicast_power(&s.coords);
            let su = model.unicast_power(&s.p);
            assert!(e + su <= model.p_tx + 1e-6);
            assert!(e / su >= model.beta - 1e-6);
            assert!(s.delta >= 0.0 && s.p.iter().all(|&p| p >= 0.0));
            for r in &s.history {
                assert!(r.multicast_slack >= -1e-6);
            }
        }
    }

    #[test]
    fn vanishing_power_drives_delta_to_target() {
        let cfg = SystemConfig { p_tx: 1e-12, ..small_cfg() };
        let model = pipeline(&cfg, 6, Variant::Pldm2);
        let s = sca_optimize(&model, &ScaSettings::default(), 6).unwrap();
        assert!(s.p.iter().all(|&p| p < 1e-10));
        assert!(s.mu.iter().all(|&m| m.abs() < 1e-6 * cfg.gamma_min), "{:?}", s.mu);
        assert!((s.delta - cfg.gamma_min).abs() < 1e-6 * cfg.gamma_min);
    }

    #[test]
    fn degenerate_analog_stage_is_rejected() {
        let mut model = pipeline(&small_cfg(), 1, Variant::Pldm1);
        model.c = vec![0.0; model.k()];
        assert!(matches!(initialize_feasible(&model, 0), Err(Error::DegenerateAnalog(_))));
    }
}

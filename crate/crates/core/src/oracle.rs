//! Brute-force references for tiny instances: a scalar single-device toy
//! of the whole SCA problem and a 4-variable subproblem taken from a real
//! SCA iteration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analog::AnalogConfiguration;
use crate::channel::{ChannelSet, GeometricChannel, SystemConfig};
use crate::conic::{solve, AffineRow, ConicProblem, SolveStatus};
use crate::digital::{effective_channels, zero_forcing_directions};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::sca::{build_subproblem, sca_optimize, ScaModel, ScaSettings, Variant};

pub const TOY_GRID: usize = 400;
pub const TOY_TOLERANCE: f64 = 0.02;
pub const SUBPROBLEM_TOLERANCE: f64 = 1e-4;

/// Single antenna, single device, `F = w = 1` and scalar channel `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarToy {
    pub h: Complex64,
    pub cfg: SystemConfig,
}

impl ScalarToy {
    pub fn new(h: Complex64, sigma2: f64) -> ScalarToy {
        ScalarToy { h, cfg: SystemConfig { n_tx: 1, n_rx: 1, k_devices: 1, sigma2, ..SystemConfig::default() } }
    }

    pub fn model(&self, variant: Variant) -> Result<ScaModel> {
        let one = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let set =
            ChannelSet { channels: vec![GeometricChannel::from_matrix(CMatrix::from_element(1, 1, self.h))], seed: 0 };
        let analog = AnalogConfiguration {
            f_matrix: one,
            combiners: vec![CVector::from_element(1, Complex64::new(1.0, 0.0))],
            rf_gains: vec![self.h.norm_sqr()],
        };
        let eff = effective_channels(&set, &analog)?;
        let dirs = zero_forcing_directions(&eff)?;
        ScaModel::new(&analog, &eff, &dirs, &self.cfg, variant)
    }

    /// SCA objective at `(p, e = |m|^2)` with the auxiliaries at their best:
    /// `upsilon` at the unicast SINR, `delta` at the smallest value the
    /// two-sided multicast constraints allow, `mu` as large as permitted.
    /// `None` outside the budget or split.
    pub fn objective(&self, p: f64, e: f64, band: f64) -> Option<f64> {
        let c = &self.cfg;
        let tol = 1e-12 * c.p_tx;
        if p < 0.0 || e < 0.0 || e + p > c.p_tx + tol || e < c.beta * p - tol {
            return None;
        }
        let g2 = self.h.norm_sqr();
        let d = g2 * p + c.sigma2;
        let sinr = g2 * e / d;
        let cap = c.gamma_min * (1.0 + band);
        let delta = 0f64.max(c.gamma_min - sinr).max((g2 * e - cap * d) / c.sigma2);
        let mu = sinr.min(c.gamma_min + delta);
        Some(mu + g2 * p / c.sigma2 - c.penalty_c * delta)
    }

    /// Maximum of [`ScalarToy::objective`] over a uniform `n x n` grid of
    /// `p in [0, P]`, `e in [0, P]`; returns `(objective, p, e)`.
    pub fn grid_optimum(&self, n: usize, band: f64) -> (f64, f64, f64) {
        let pt = self.cfg.p_tx;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..n {
            let p = pt * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let e = pt * j as f64 / (n - 1) as f64;
                if let Some(v) = self.objective(p, e, band) {
                    if v > best.0 {
                        best = (v, p, e);
                    }
                }
            }
        }
        best
    }
}

/// One reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub reference: f64,
    pub candidate: f64,
    pub relative_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

impl OracleCheck {
    fn new(name: impl Into<String>, reference: f64, candidate: f64, tolerance: f64, note: String) -> OracleCheck {
        let relative_gap = (candidate - reference).abs() / reference.abs().max(1e-12);
        OracleCheck {
            name: name.into(),
            reference,
            candidate,
            relative_gap,
            tolerance,
            passed: relative_gap <= tolerance,
            note,
        }
    }
}

/// SCA on the scalar toy against the 400 x 400 grid. When the grid optimum
/// meets the multicast target exactly, the deviation must also vanish.
pub fn check_toy(toy: &ScalarToy, variant: Variant, seed: u64) -> Result<OracleCheck> {
    let model = toy.model(variant)?;
    let sol = sca_optimize(&model, &ScaSettings { variant, ..ScaSettings::default() }, seed)?;
    let (reference, p, e) = toy.grid_optimum(TOY_GRID, model.sinr_band);
    let candidate = *sol.objective_trace.last().expect("trace is never empty");
    let mut check = OracleCheck::new(
        format!("scalar toy sigma2={} {}", toy.cfg.sigma2, variant.name()),
        reference,
        candidate,
        TOY_TOLERANCE,
        format!("grid argmax p={p:.4} e={e:.4}; sca delta={:.3e}", sol.delta),
    );
    let g2 = toy.h.norm_sqr();
    let target_met = g2 * e / (g2 * p + toy.cfg.sigma2) >= toy.cfg.gamma_min;
    if target_met && sol.delta > 1e-4 * toy.cfg.gamma_min {
        check.passed = false;
        check.note.push_str("; delta did not vanish");
    }
    Ok(check)
}

/// The PLDM-2 subproblem of a scalar toy after one SCA step, with the
/// unicast auxiliary eliminated (it sits at its bound `p g^2 / n` at any
/// optimum). Variables are `[u, p, mu, delta]`.
pub fn exported_subproblem(toy: &ScalarToy, seed: u64) -> Result<ConicProblem> {
    let model = toy.model(Variant::Pldm2)?;
    let settings = ScaSettings { max_outer_iterations: 1, variant: Variant::Pldm2, ..ScaSettings::default() };
    let current = sca_optimize(&model, &settings, seed)?;
    let full = build_subproblem(&current, &model)?;
    let l = model.layout;
    let ups = l.upsilon(0);
    let keep: Vec<usize> = (0..l.dim()).filter(|&j| j != ups).collect();
    let unicast_gain = model.g2[0] / model.noise[0];

    let mut prob = ConicProblem::new(keep.len());
    for (new, &old) in keep.iter().enumerate() {
        prob.objective[new] = full.objective[old];
    }
    prob.objective[1] += full.objective[ups] * unicast_gain;
    for row in &full.affine_ineqs {
        if row.coeffs[ups] != 0.0 {
            continue;
        }
        prob.affine_ineqs.push(AffineRow::new(keep.iter().map(|&j| row.coeffs[j]).collect(), row.offset));
    }
    let shrink = |q: &crate::conic::QuadBudget| crate::conic::QuadBudget {
        quad: q.quad.select_rows(&keep).select_columns(&keep),
        linear: keep.iter().map(|&j| q.linear[j]).collect(),
        bound: q.bound,
    };
    prob.quad_budget = full.quad_budget.as_ref().map(shrink);
    prob.quad_ineqs = full.quad_ineqs.iter().map(shrink).collect();
    prob.nonneg = full
        .nonneg
        .iter()
        .filter(|&&j| j != ups)
        .map(|&j| keep.iter().position(|&k| k == j).expect("kept index"))
        .collect();
    prob.validate()?;
    Ok(prob)
}

/// Best objective over a problem whose first two variables carry all the
/// curvature: a grid over those two (resolution `1/cells` of the box,
/// repeatedly zoomed around the incumbent) with the remaining two solved
/// exactly as a planar LP by vertex enumeration.
pub fn grid_search_planar(
    prob: &ConicProblem,
    box0: (f64, f64),
    box1: (f64, f64),
    cells: usize,
) -> Result<(f64, Vec<f64>)> {
    if prob.dim() != 4 || !prob.affine_eqs.is_empty() {
        return Err(Error::MalformedProblem("planar grid search needs 4 variables and no equalities".into()));
    }
    let curved =
        prob.quadratics().any(|q| (0..4).any(|i| (2..4).any(|j| q.quad[(i, j)] != 0.0 || q.quad[(j, i)] != 0.0)));
    if curved {
        return Err(Error::MalformedProblem("variables 2 and 3 must enter linearly".into()));
    }
    let mut lo = [box0.0, box1.0];
    let mut hi = [box0.1, box1.1];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _level in 0..8 {
        let step = [(hi[0] - lo[0]) / cells as f64, (hi[1] - lo[1]) / cells as f64];
        for i in 0..=cells {
            let a = lo[0] + step[0] * i as f64;
            for j in 0..=cells {
                let b = lo[1] + step[1] * j as f64;
                if let Some((v, rest)) = planar_lp(prob, a, b) {
                    if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                        best = Some((v, vec![a, b, rest[0], rest[1]]));
                    }
                }
            }
        }
        let Some((_, x)) = &best else {
            return Err(Error::MalformedProblem("no feasible grid point".into()));
        };
        for d in 0..2 {
            let (l0, h0) = if d == 0 { box0 } else { box1 };
            lo[d] = (x[d] - 4.0 * step[d]).max(l0);
            hi[d] = (x[d] + 4.0 * step[d]).min(h0);
        }
    }
    Ok(best.expect("set on the first level"))
}

/// Maximizes the objective over variables 2 and 3 with 0 and 1 fixed.
fn planar_lp(prob: &ConicProblem, a: f64, b: f64) -> Option<(f64, [f64; 2])> {
    // Constraints as r0 x + r1 y + r2 >= 0 in the free pair (x, y).
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for r in &prob.affine_ineqs {
        rows.push([r.coeffs[2], r.coeffs[3], r.offset + r.coeffs[0] * a + r.coeffs[1] * b]);
    }
    for q in prob.quadratics() {
        let z = [a, b, 0.0, 0.0];
        let mut curv = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                curv += z[i] * q.quad[(i, j)] * z[j];
            }
        }
        let fixed = curv + q.linear[0] * a + q.linear[1] * b;
        rows.push([-q.linear[2], -q.linear[3], q.bound - fixed]);
    }
    for &j in &prob.nonneg {
        match j {
            0 if a < 0.0 => return None,
            1 if b < 0.0 => return None,
            2 => rows.push([1.0, 0.0, 0.0]),
            3 => rows.push([0.0, 1.0, 0.0]),
            _ => {}
        }
    }
    let c = [prob.objective[2], prob.objective[3]];
    let base = prob.objective[0] * a + prob.objective[1] * b;
    let mut best: Option<(f64, [f64; 2])> = None;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (r, s) = (rows[i], rows[j]);
            let det = r[0] * s[1] - r[1] * s[0];
            if det.abs() < 1e-14 {
                continue;
            }
            let x = (-r[2] * s[1] + r[1] * s[2]) / det;
            let y = (-r[0] * s[2] + r[2] * s[0]) / det;
            let scale = 1.0 + x.abs() + y.abs();
            if rows.iter().all(|t| t[0] * x + t[1] * y + t[2] >= -1e-11 * scale * (1.0 + t[2].abs())) {
                let v = base + c[0] * x + c[1] * y;
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, [x, y]));
                }
            }
        }
    }
    best
}

/// `conic::solve` against [`grid_search_planar`] on an exported subproblem.
pub fn check_subproblem(toy: &ScalarToy, seed: u64) -> Result<OracleCheck> {
    let prob = exported_subproblem(toy, seed)?;
    // The optimum is a degenerate vertex (mu on target, zero deviation) whose
    // barrier slacks run into rounding near 1e-7; 1e-6 is ample for 1e-4.
    let sol = solve(&prob, 1e-6)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::MalformedProblem(format!("solver status {:?} on exported subproblem", sol.status)));
    }
    let budget = prob.quad_budget.as_ref().expect("subproblem has a budget");
    let u_max = (budget.bound / budget.quad[(0, 0)]).sqrt();
    let p_max = budget.bound / budget.linear[1];
    let (reference, x) = grid_search_planar(&prob, (0.0, u_max), (0.0, p_max), 1000)?;
    Ok(OracleCheck::new(
        format!("exported subproblem sigma2={}", toy.cfg.sigma2),
        reference,
        sol.objective_value,
        SUBPROBLEM_TOLERANCE,
        format!("grid argmax {:?}", x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()),
    ))
}

/// The instances behind `oracle --toy`: a well-powered and a
/// power-starved toy, both schemes, and their exported subproblems.
pub fn toy_suite(seed: u64) -> Result<Vec<OracleCheck>> {
    let toys = [
        ScalarToy::new(Complex64::new(1.0, 0.0), 0.1),
        ScalarToy::new(Complex64::new(1.0, 0.0), 1.0),
        ScalarToy::new(Complex64::new(0.6, -0.8), 0.05),
    ];
    let mut out = Vec::new();
    for toy in &toys {
        for variant in [Variant::Pldm1, Variant::Pldm2] {
            out.push(check_toy(toy, variant, seed)?);
        }
        out.push(check_subproblem(toy, seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_objective_closed_form() {
        let toy = ScalarToy::new(Complex64::new(1.0, 0.0), 0.1);
        let g = toy.cfg.gamma_min;
        // e = g (p + 0.1) puts the multicast SINR exactly on target.
        let p = 0.1;
        let v = toy.objective(p, g * (p + 0.1), 0.0).unwrap();
        assert!((v - (g + 1.0)).abs() < 1e-12);
        assert!(toy.objective(0.3, 0.8, 0.0).is_none());
        assert!(toy.objective(0.2, 0.5, 0.0).is_none());
    }

    #[test]
    fn planar_lp_vertex() {
        // max x + y s.t. x <= 1, y <= 2, x, y >= 0.
        let mut prob = ConicProblem::new(4);
        prob.objective = vec![0.0, 0.0, 1.0, 1.0];
        prob.affine_ineqs.push(AffineRow::new(vec![0.0, 0.0, -1.0, 0.0], 1.0));
        prob.affine_ineqs.push(AffineRow::new(vec![0.0, 0.0, 0.0, -1.0], 2.0));
        prob.nonneg = vec![2, 3];
        let (v, x) = planar_lp(&prob, 0.0, 0.0).unwrap();
        assert!((v - 3.0).abs() < 1e-12 && (x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exported_subproblem_has_four_variables() {
        let toy = ScalarToy::new(Complex64::new(1.0, 0.0), 0.1);
        let prob = exported_subproblem(&toy, 3).unwrap();
        assert_eq!(prob.dim(), 4);
        assert_eq!(prob.nonneg, vec![0, 1, 3]);
    }

    #[test]
    fn toy_suite_passes() {
        for check in toy_suite(7).unwrap() {
            println!("{check:?}");
            assert!(check.passed, "{check:?}");
        }
    }
}

//! Small dense convex solver for the per-iteration SCA subproblems.
//!
//! Problem family (all data real; complex unknowns are stored as
//! interleaved real/imaginary pairs, see [`ConicProblem::complex_block`]):
//!
//! ```text
//! maximize    c^T x
//! subject to  a_i^T x + b_i >= 0        (affine inequalities)
//!             e_j^T x + f_j  = 0        (affine equalities)
//!             x^T Q x + q^T x <= bound  (convex quadratic budget, Q PSD)
//!             x^T Q_i x + q_i^T x <= b_i (further convex quadratic rows)
//!             x_k >= 0                  (k in nonneg)
//! ```
//!
//! The method is a primal log-barrier interior point: equalities are
//! eliminated with a null-space basis, a phase-I problem finds a strictly
//! feasible point when the start is not one, and each centering step is a
//! damped Newton iteration with backtracking. The barrier weight `1/t`
//! starts at 1 and shrinks by a factor of 10 per centering until the
//! duality gap bound is below tolerance.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_FEASIBILITY_TOLERANCE: f64 = 1e-8;

/// `coeffs . x + offset`, constrained to be `>= 0` or `== 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineRow {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> AffineRow {
        AffineRow { coeffs, offset }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.offset
    }
}

/// `x^T quad x + linear . x <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadBudget {
    pub quad: DMatrix<f64>,
    pub linear: Vec<f64>,
    pub bound: f64,
}

impl QuadBudget {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (xv.transpose() * &self.quad * &xv)[(0, 0)] + self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `bound - x^T Q x - q . x`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.bound - self.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    /// Coefficients of the maximized linear objective.
    pub objective: Vec<f64>,
    pub affine_ineqs: Vec<AffineRow>,
    pub affine_eqs: Vec<AffineRow>,
    pub quad_budget: Option<QuadBudget>,
    pub quad_ineqs: Vec<QuadBudget>,
    pub nonneg: Vec<usize>,
    /// Real index range holding a complex block as `[re0, im0, re1, im1, ..]`.
    pub complex_block: Option<Range<usize>>,
}

impl ConicProblem {
    pub fn new(n: usize) -> ConicProblem {
        ConicProblem {
            objective: vec![0.0; n],
            affine_ineqs: Vec::new(),
            affine_eqs: Vec::new(),
            quad_budget: None,
            quad_ineqs: Vec::new(),
            nonneg: Vec::new(),
            complex_block: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    /// The budget followed by the further quadratic rows.
    pub fn quadratics(&self) -> impl Iterator<Item = &QuadBudget> {
        self.quad_budget.iter().chain(&self.quad_ineqs)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Checks dimensions, finiteness and positive semidefiniteness of the
    /// budget form (smallest eigenvalue >= -1e-9 ||Q||).
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::MalformedProblem("empty decision vector".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("objective"));
        }
        for (kind, rows) in [("inequality", &self.affine_ineqs), ("equality", &self.affine_eqs)] {
            for (i, r) in rows.iter().enumerate() {
                if r.coeffs.len() != n {
                    return Err(Error::MalformedProblem(format!(
                        "{kind} row {i} has {} coefficients, expected {n}",
                        r.coeffs.len()
                    )));
                }
                if !r.offset.is_finite() || r.coeffs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("affine row"));
                }
            }
        }
        if let Some(&bad) = self.nonneg.iter().find(|&&i| i >= n) {
            return Err(Error::MalformedProblem(format!("nonneg index {bad} out of range")));
        }
        if let Some(r) = &self.complex_block {
            if r.end > n || r.start > r.end || (r.end - r.start) % 2 != 0 {
                return Err(Error::MalformedProblem(format!("bad complex block {r:?}")));
            }
        }
        for qb in self.quadratics() {
            if qb.quad.shape() != (n, n) || qb.linear.len() != n {
                return Err(Error::MalformedProblem("quadratic budget dimensions".into()));
            }
            if !qb.bound.is_finite() || qb.quad.iter().chain(&qb.linear).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("quadratic budget"));
            }
            let sym = (&qb.quad + qb.quad.transpose()) * 0.5;
            let asym = (&qb.quad - &sym).norm();
            let scale = qb.quad.norm();
            if asym > 1e-9 * scale.max(1.0) {
                return Err(Error::MalformedProblem("budget form is not symmetric".into()));
            }
            let min_eig = sym.symmetric_eigenvalues().min();
            if min_eig < -1e-9 * scale {
                return Err(Error::MalformedProblem(format!(
                    "budget form is indefinite (smallest eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for r in &self.affine_ineqs {
            v = v.max(-r.eval(x));
        }
        for r in &self.affine_eqs {
            v = v.max(r.eval(x).abs());
        }
        for &i in &self.nonneg {
            v = v.max(-x[i]);
        }
        for qb in self.quadratics() {
            v = v.max(-qb.slack(x));
        }
        v
    }

    /// Smallest inequality slack at `x` (affine, nonnegativity and
    /// quadratic rows; equalities excluded).
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        let mut v = f64::INFINITY;
        for r in &self.affine_ineqs {
            v = v.min(r.eval(x));
        }
        for &i in &self.nonneg {
            v = v.min(x[i]);
        }
        for qb in self.quadratics() {
            v = v.min(qb.slack(x));
        }
        v
    }

    /// Plain-text dump; see the crate README for the format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = self.dim();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "# dualcast conic problem v1");
        let _ = writeln!(s, "vars {n}");
        if let Some(r) = &self.complex_block {
            let _ = writeln!(s, "complex {} {}", r.start, r.end);
        }
        let _ = writeln!(s, "objective {}", join(&self.objective));
        for r in &self.affine_ineqs {
            let _ = writeln!(s, "ineq {:e} : {}", r.offset, join(&r.coeffs));
        }
        for r in &self.affine_eqs {
            let _ = writeln!(s, "eq {:e} : {}", r.offset, join(&r.coeffs));
        }
        if !self.nonneg.is_empty() {
            let idx: Vec<String> = self.nonneg.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(s, "nonneg {}", idx.join(" "));
        }
        for (i, qb) in self.quadratics().enumerate() {
            let kind = if i == 0 && self.quad_budget.is_some() { "budget" } else { "ineq" };
            let _ = writeln!(s, "quad {kind} {:e}", qb.bound);
            let _ = writeln!(s, "quad_linear {}", join(&qb.linear));
            for i in 0..n {
                let row: Vec<f64> = qb.quad.row(i).iter().copied().collect();
                let _ = writeln!(s, "quad_row {i} : {}", join(&row));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ConicProblem> {
        let err =
            |line: usize, reason: &str| Error::Parse { path: "<conic problem>".into(), line, reason: reason.into() };
        let floats = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| err(line, "bad number"))).collect()
        };
        let mut prob: Option<ConicProblem> = None;
        // (is_budget, bound, linear, rows)
        type QuadDraft = (bool, f64, Option<Vec<f64>>, Vec<(usize, Vec<f64>)>);
        let mut quads: Vec<QuadDraft> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if key == "vars" {
                let n: usize = rest.trim().parse().map_err(|_| err(ln, "bad vars"))?;
                prob = Some(ConicProblem::new(n));
                continue;
            }
            let p = prob.as_mut().ok_or_else(|| err(ln, "`vars` must come first"))?;
            match key {
                "complex" => {
                    let v: Vec<usize> = rest
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| err(ln, "bad index")))
                        .collect::<Result<_>>()?;
                    if v.len() != 2 {
                        return Err(err(ln, "complex needs start and end"));
                    }
                    p.complex_block = Some(v[0]..v[1]);
                }
                "objective" => p.objective = floats(ln, rest)?,
                "ineq" | "eq" => {
                    let (off, coeffs) = rest.split_once(':').ok_or_else(|| err(ln, "missing ':'"))?;
                    let offset = off.trim().parse().map_err(|_| err(ln, "bad offset"))?;
                    let row = AffineRow::new(floats(ln, coeffs)?, offset);
                    if key == "ineq" {
                        p.affine_ineqs.push(row);
                    } else {
                        p.affine_eqs.push(row);
                    }
                }
                "nonneg" => {
                    p.nonneg = rest
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| err(ln, "bad index")))
                        .collect::<Result<_>>()?;
                }
                "quad" => {
                    let (kind, bound) =
                        rest.trim().split_once(' ').ok_or_else(|| err(ln, "quad needs kind and bound"))?;
                    let bound = bound.trim().parse().map_err(|_| err(ln, "bad bound"))?;
                    let is_budget = match kind {
                        "budget" => true,
                        "ineq" => false,
                        _ => return Err(err(ln, "quad kind must be budget or ineq")),
                    };
                    quads.push((is_budget, bound, None, Vec::new()));
                }
                "quad_linear" => {
                    let q = quads.last_mut().ok_or_else(|| err(ln, "quad_linear outside a quad block"))?;
                    q.2 = Some(floats(ln, rest)?);
                }
                "quad_row" => {
                    let q = quads.last_mut().ok_or_else(|| err(ln, "quad_row outside a quad block"))?;
                    let (idx, vals) = rest.split_once(':').ok_or_else(|| err(ln, "missing ':'"))?;
                    let idx = idx.trim().parse().map_err(|_| err(ln, "bad row index"))?;
                    q.3.push((idx, floats(ln, vals)?));
                }
                _ => return Err(err(ln, "unknown record")),
            }
        }
        let mut p = prob.ok_or_else(|| err(0, "missing `vars`"))?;
        let n = p.dim();
        for (is_budget, bound, linear, rows) in quads {
            let mut quad = DMatrix::zeros(n, n);
            for (i, row) in rows {
                if i >= n || row.len() != n {
                    return Err(err(0, "bad quad_row"));
                }
                for (j, v) in row.into_iter().enumerate() {
                    quad[(i, j)] = v;
                }
            }
            let qb = QuadBudget { quad, linear: linear.unwrap_or_else(|| vec![0.0; n]), bound };
            if is_budget {
                if p.quad_budget.is_some() {
                    return Err(err(0, "more than one budget"));
                }
                p.quad_budget = Some(qb);
            } else {
                p.quad_ineqs.push(qb);
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub kkt_residual: f64,
    /// Total Newton iterations over both phases.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol: f64,
    pub feasibility_tol: f64,
    pub barrier_factor: f64,
    pub max_newton_per_centering: usize,
    pub max_centerings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: DEFAULT_TOLERANCE,
            feasibility_tol: DEFAULT_FEASIBILITY_TOLERANCE,
            barrier_factor: 10.0,
            max_newton_per_centering: 200,
            max_centerings: 60,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> SolverSettings {
        SolverSettings { tol, ..SolverSettings::default() }
    }
}

/// Solves from the origin (projected onto the equality set).
pub fn solve(prob: &ConicProblem, tol: f64) -> Result<ConicSolution> {
    solve_from(prob, None, &SolverSettings::with_tol(tol))
}

/// Solves starting from `start` when given. A start that is not strictly
/// feasible is repaired by phase I.
pub fn solve_from(prob: &ConicProblem, start: Option<&[f64]>, settings: &SolverSettings) -> Result<ConicSolution> {
    prob.validate()?;
    let n = prob.dim();
    if let Some(s) = start {
        if s.len() != n {
            return Err(Error::dims("conic start point", n, s.len()));
        }
    }
    let x0: Vec<f64> = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; n]);

    let Some(reduced) = Reduced::build(prob, &x0, settings)? else {
        return Ok(ConicSolution {
            status: SolveStatus::Infeasible,
            objective_value: prob.objective_value(&x0),
            x: x0,
            kkt_residual: f64::INFINITY,
            iterations: 0,
        });
    };
    let mut iterations = 0;

    let d = reduced.dim();
    let mut z = DVector::zeros(d);
    if reduced.min_slack(&z) <= 0.0 {
        match reduced.phase_one(settings, &mut iterations) {
            Some(zf) => z = zf,
            None => {
                let x = reduced.lift(&DVector::zeros(d));
                return Ok(ConicSolution {
                    status: SolveStatus::Infeasible,
                    objective_value: prob.objective_value(&x),
                    x,
                    kkt_residual: f64::INFINITY,
                    iterations,
                });
            }
        }
    }

    let cnorm = reduced.c.norm();
    let c_unit = if cnorm > 0.0 { &reduced.c / cnorm } else { reduced.c.clone() };
    let m = reduced.num_constraints() as f64;
    let mut t = 1.0;
    let mut status = SolveStatus::MaxIterations;
    let mut kkt = f64::INFINITY;
    let mut misses = 0;
    for _ in 0..settings.max_centerings {
        let converged = reduced.center(&mut z, &c_unit, t, settings.max_newton_per_centering, &mut iterations);
        let x = reduced.lift(&z);
        let obj = prob.objective_value(&x);
        let gap = m * cnorm / t;
        let stationarity = reduced.stationarity(&z, &c_unit, t) * cnorm;
        match converged {
            Centering::Converged => misses = 0,
            // Past a centered point, repeated failures mean the barrier is
            // shrinking slacks below what rounding resolves.
            Centering::Stalled if kkt.is_finite() => break,
            _ => {
                misses += 1;
                if misses >= 4 && kkt.is_finite() {
                    break;
                }
                t *= settings.barrier_factor;
                continue;
            }
        }
        kkt = (gap / (1.0 + obj.abs())).max(stationarity / (1.0 + cnorm));
        if kkt <= settings.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if cnorm == 0.0 {
            status = SolveStatus::Optimal;
            kkt = 0.0;
            break;
        }
        t *= settings.barrier_factor;
    }
    let x = reduced.lift(&z);
    if status == SolveStatus::Optimal {
        let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if prob.max_violation(&x) > settings.feasibility_tol.max(settings.tol) * scale {
            status = SolveStatus::MaxIterations;
        }
    }
    Ok(ConicSolution { status, objective_value: prob.objective_value(&x), x, kkt_residual: kkt, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Centering {
    Converged,
    /// Newton made no progress at working precision.
    Stalled,
    /// Newton step budget used up.
    Exhausted,
}

/// Inequality-only problem in null-space coordinates `x = base + N z`.
struct Reduced {
    base: DVector<f64>,
    basis: Option<DMatrix<f64>>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    quads: Vec<(DMatrix<f64>, DVector<f64>, f64)>,
    c: DVector<f64>,
}

impl Reduced {
    /// Returns `None` when the equality or constant rows are inconsistent.
    fn build(prob: &ConicProblem, x0: &[f64], settings: &SolverSettings) -> Result<Option<Reduced>> {
        let n = prob.dim();
        let mut start = DVector::from_column_slice(x0);
        let mut basis = None;

        if !prob.affine_eqs.is_empty() {
            let r = prob.affine_eqs.len();
            let mut emat = DMatrix::zeros(r, n);
            let mut rhs = DVector::zeros(r);
            for (i, row) in prob.affine_eqs.iter().enumerate() {
                let nrm = row.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nrm == 0.0 {
                    if row.offset.abs() > settings.feasibility_tol {
                        return Ok(None);
                    }
                    continue;
                }
                for j in 0..n {
                    emat[(i, j)] = row.coeffs[j] / nrm;
                }
                rhs[i] = -row.offset / nrm;
            }
            // Null space from the eigen-decomposition of E^T E.
            let gram = emat.transpose() * &emat;
            let eig = gram.symmetric_eigen();
            let emax = eig.eigenvalues.max().max(1.0);
            let null: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-12 * emax).collect();
            let mut nb = DMatrix::zeros(n, null.len());
            for (c, &i) in null.iter().enumerate() {
                nb.set_column(c, &eig.eigenvectors.column(i));
            }
            // Project the start onto the affine set.
            let resid = &emat * &start - &rhs;
            let svd = emat.clone().svd(true, true);
            let correction =
                svd.solve(&resid, 1e-12).map_err(|e| Error::MalformedProblem(format!("equality solve: {e}")))?;
            start -= correction;
            if (&emat * &start - &rhs).amax() > 1e-9 {
                return Ok(None);
            }
            basis = Some(nb);
        }

        let lift_dir = |v: &DVector<f64>| -> DVector<f64> {
            match &basis {
                Some(nb) => nb.transpose() * v,
                None => v.clone(),
            }
        };
        let d = basis.as_ref().map_or(n, |nb| nb.ncols());

        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        let mut push_row = |coeffs: DVector<f64>, offset: f64| -> bool {
            let a = lift_dir(&coeffs);
            let b = coeffs.dot(&start) + offset;
            let nrm = a.norm();
            if nrm <= 1e-14 * (1.0 + coeffs.norm()) {
                return b >= -settings.feasibility_tol;
            }
            rows.push((a / nrm, b / nrm));
            true
        };
        for r in &prob.affine_ineqs {
            if !push_row(DVector::from_column_slice(&r.coeffs), r.offset) {
                return Ok(None);
            }
        }
        for &i in &prob.nonneg {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            if !push_row(e, 0.0) {
                return Ok(None);
            }
        }
        let mut a = DMatrix::zeros(rows.len(), d);
        let mut b = DVector::zeros(rows.len());
        for (i, (ai, bi)) in rows.into_iter().enumerate() {
            a.set_row(i, &ai.transpose());
            b[i] = bi;
        }

        let quads = prob
            .quadratics()
            .map(|qb| {
                let q = DVector::from_column_slice(&qb.linear);
                let sym = (&qb.quad + qb.quad.transpose()) * 0.5;
                let qs = &sym * &start;
                let kappa = qb.bound - start.dot(&qs) - q.dot(&start);
                let (qz, lz) = match &basis {
                    Some(nb) => (nb.transpose() * &sym * nb, nb.transpose() * (qs * 2.0 + &q)),
                    None => (sym.clone(), qs * 2.0 + &q),
                };
                let scale = (qz.norm() + lz.norm() + kappa.abs()).max(1e-300);
                (qz / scale, lz / scale, kappa / scale)
            })
            .collect();

        let c = lift_dir(&DVector::from_column_slice(&prob.objective));
        Ok(Some(Reduced { base: start, basis, a, b, quads, c }))
    }

    fn dim(&self) -> usize {
        self.c.len()
    }

    fn num_constraints(&self) -> usize {
        self.a.nrows() + self.quads.len()
    }

    fn lift(&self, z: &DVector<f64>) -> Vec<f64> {
        let x = match &self.basis {
            Some(nb) => &self.base + nb * z,
            None => &self.base + z,
        };
        x.iter().copied().collect()
    }

    fn quad_slacks(&self, z: &DVector<f64>) -> Vec<f64> {
        self.quads.iter().map(|(q, l, k)| k - z.dot(&(q * z)) - l.dot(z)).collect()
    }

    fn slacks(&self, z: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
        (&self.a * z + &self.b, self.quad_slacks(z))
    }

    fn min_slack(&self, z: &DVector<f64>) -> f64 {
        let (s, q) = self.slacks(z);
        let m = if s.is_empty() { f64::INFINITY } else { s.min() };
        q.into_iter().fold(m, f64::min)
    }

    /// Barrier value with an extra shift `w` added to every slack, or
    /// `None` outside the domain.
    fn barrier(&self, z: &DVector<f64>, w: f64) -> Option<f64> {
        let (s, q) = self.slacks(z);
        let mut v = 0.0;
        for &si in s.iter() {
            let si = si + w;
            if si <= 0.0 {
                return None;
            }
            v -= si.ln();
        }
        for q in q {
            let q = q + w;
            if q <= 0.0 {
                return None;
            }
            v -= q.ln();
        }
        Some(v)
    }

    /// Gradient and Hessian of the barrier (slacks shifted by `w`) with
    /// respect to `z`, plus the derivatives with respect to `w`.
    fn barrier_derivatives(&self, z: &DVector<f64>, w: f64) -> (DVector<f64>, DMatrix<f64>, f64, DVector<f64>, f64) {
        let d = self.dim();
        let (s, q) = self.slacks(z);
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let mut gw = 0.0;
        let mut hzw = DVector::zeros(d);
        let mut hww = 0.0;
        let inv: DVector<f64> = s.map(|si| 1.0 / (si + w));
        // A^T diag(1/s^2) A
        let mut scaled = self.a.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= inv[i];
        }
        hess += scaled.transpose() * &scaled;
        grad -= self.a.transpose() * &inv;
        gw -= inv.sum();
        hzw += scaled.transpose() * &inv;
        hww += inv.map(|v| v * v).sum();
        for (qs, (qm, l, _)) in q.into_iter().zip(&self.quads) {
            let sq = qs + w;
            let dq = qm * z * 2.0 + l; // -gradient of the quad slack
            grad += &dq / sq;
            hess += qm * (2.0 / sq) + (&dq * dq.transpose()) / (sq * sq);
            gw -= 1.0 / sq;
            hzw -= &dq / (sq * sq);
            hww += 1.0 / (sq * sq);
        }
        (grad, hess, gw, hzw, hww)
    }

    fn max_step(&self, z: &DVector<f64>, dz: &DVector<f64>, w: f64, dw: f64) -> f64 {
        let s = &self.a * z + &self.b;
        let ds = &self.a * dz;
        let mut alpha: f64 = 1.0;
        for i in 0..s.len() {
            let rate = ds[i] + dw;
            if rate < 0.0 {
                alpha = alpha.min(-0.99 * (s[i] + w) / rate);
            }
        }
        alpha
    }

    /// Stationarity and dual infeasibility of the Newton-corrected
    /// multipliers `lambda_i = (1 - grad s_i . dz / s_i) / (t s_i)`, for the
    /// unit-norm objective.
    fn stationarity(&self, z: &DVector<f64>, c_unit: &DVector<f64>, t: f64) -> f64 {
        let (gb, h, ..) = self.barrier_derivatives(z, 0.0);
        let g = gb - c_unit * t;
        let dz = newton_direction(&h, &g).unwrap_or_else(|| DVector::zeros(self.dim()));
        let (s, q) = self.slacks(z);
        let ads = &self.a * &dz;
        let mut r = c_unit.clone();
        let mut negative: f64 = 0.0;
        for i in 0..s.len() {
            let lam = (1.0 - ads[i] / s[i]) / (t * s[i]);
            r += self.a.row(i).transpose() * lam;
            negative = negative.max(-lam);
        }
        for (sq, (qm, l, _)) in q.into_iter().zip(&self.quads) {
            let dq = qm * z * 2.0 + l;
            let lam = (1.0 + dq.dot(&dz) / sq) / (t * sq);
            r -= &dq * lam;
            negative = negative.max(-lam);
        }
        r.norm().max(negative)
    }

    /// Damped Newton on `-t c^T z + barrier(z)`.
    fn center(
        &self,
        z: &mut DVector<f64>,
        c_unit: &DVector<f64>,
        t: f64,
        max_iter: usize,
        count: &mut usize,
    ) -> Centering {
        let f = |zz: &DVector<f64>| self.barrier(zz, 0.0).map(|b| -t * c_unit.dot(zz) + b);
        for _ in 0..max_iter {
            *count += 1;
            let (gb, h, ..) = self.barrier_derivatives(z, 0.0);
            let g = gb - c_unit * t;
            let Some(dz) = newton_direction(&h, &g) else {
                return Centering::Stalled;
            };
            let lambda2 = -g.dot(&dz);
            if lambda2 / 2.0 <= 1e-10 {
                return Centering::Converged;
            }
            let f0 = f(z).expect("iterate stays interior");
            let mut alpha = self.max_step(z, &dz, 0.0, 0.0);
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &*z + &dz * alpha;
                if let Some(fc) = f(&cand) {
                    if fc <= f0 - 0.25 * alpha * lambda2 {
                        *z = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // No progress possible at working precision.
                return if lambda2 < 1e-6 { Centering::Converged } else { Centering::Stalled };
            }
        }
        Centering::Exhausted
    }

    /// Minimizes a common slack shift `w` (maximum violation) under a box
    /// of radius `R` around the start. Returns a strictly feasible `z`.
    fn phase_one(&self, settings: &SolverSettings, count: &mut usize) -> Option<DVector<f64>> {
        let d = self.dim();
        let radius = 1e3;
        let mut z = DVector::zeros(d);
        let mut w = (-self.min_slack(&z)).max(0.0) + 1.0;
        let m = (self.num_constraints() + 2 * d) as f64;
        let box_barrier = |zz: &DVector<f64>| -> Option<f64> {
            let mut v = 0.0;
            for &zi in zz.iter() {
                let (lo, hi) = (radius + zi, radius - zi);
                if lo <= 0.0 || hi <= 0.0 {
                    return None;
                }
                v -= lo.ln() + hi.ln();
            }
            Some(v)
        };
        let mut t = 1.0;
        for _ in 0..settings.max_centerings {
            for _ in 0..settings.max_newton_per_centering {
                *count += 1;
                let (gz, mut hz, gw, hzw, hww) = self.barrier_derivatives(&z, w);
                let mut gz = gz;
                for i in 0..d {
                    let (lo, hi) = (radius + z[i], radius - z[i]);
                    gz[i] += -1.0 / lo + 1.0 / hi;
                    hz[(i, i)] += 1.0 / (lo * lo) + 1.0 / (hi * hi);
                }
                // Joint system in (z, w); the objective is t * w.
                let mut h = DMatrix::zeros(d + 1, d + 1);
                h.view_mut((0, 0), (d, d)).copy_from(&hz);
                for i in 0..d {
                    h[(i, d)] = hzw[i];
                    h[(d, i)] = hzw[i];
                }
                h[(d, d)] = hww;
                let mut g = DVector::zeros(d + 1);
                g.rows_mut(0, d).copy_from(&gz);
                g[d] = gw + t;
                let dir = newton_direction(&h, &g)?;
                let lambda2 = -g.dot(&dir);
                if lambda2 / 2.0 <= 1e-10 {
                    break;
                }
                let dz = dir.rows(0, d).into_owned();
                let dw = dir[d];
                let phi = |zz: &DVector<f64>, ww: f64| -> Option<f64> {
                    Some(t * ww + self.barrier(zz, ww)? + box_barrier(zz)?)
                };
                let f0 = phi(&z, w)?;
                let mut alpha = self.max_step(&z, &dz, w, dw);
                let mut accepted = false;
                for _ in 0..60 {
                    let zc = &z + &dz * alpha;
                    let wc = w + dw * alpha;
                    if let Some(fc) = phi(&zc, wc) {
                        if fc <= f0 - 0.25 * alpha * lambda2 {
                            z = zc;
                            w = wc;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if w < 0.0 && self.min_slack(&z) > 0.0 {
                return Some(z);
            }
            if m / t < settings.tol && w >= -settings.feasibility_tol {
                return None;
            }
            t *= settings.barrier_factor;
        }
        None
    }
}

/// Solves `H d = -g` by Cholesky on the Jacobi-scaled system, adding
/// diagonal regularization if needed.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let d: DVector<f64> = DVector::from_fn(n, |i, _| {
        let v = h[(i, i)];
        if v > 0.0 && v.is_finite() {
            1.0 / v.sqrt()
        } else {
            1.0
        }
    });
    let hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * d[i] * d[j]);
    let gs = g.component_mul(&d);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = hs.clone();
        for i in 0..n {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            let step = ch.solve(&(-&gs)).component_mul(&d);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    None
}

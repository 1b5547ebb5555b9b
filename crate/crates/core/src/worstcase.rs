//! Worst-case-optimal designs as a linear program.
//!
//! A design is a probability vector over all `2^n` assignments. For a fixed
//! interference model, the exact estimator variance at binary potential
//! outcomes `(a, b)` is linear in the design, so the design minimizing the
//! worst case over all `(a, b)` in `{0,1}^n x {0,1}^n` solves an LP:
//! minimize `v` subject to one variance constraint per outcome pair, one
//! unbiasedness equality per unit, the simplex equality, and box bounds.
//! The solver is a dense two-phase simplex with Bland's rule, certified by
//! an independently recomputed primal/dual pair.

use crate::designs::Assignment;
use crate::estimation::PotentialOutcomes;
use crate::interference::{exact_network_variance, k_tensor, DesignMoments, GraphModel, ModelError};
use crate::numerics::{self, Matrix};
use thiserror::Error;

/// Largest population for which assignments are enumerated at all.
pub const MAX_ENUM_UNITS: usize = 12;
/// Largest population for which the LP (with `4^n` constraints) is built.
pub const MAX_LP_UNITS: usize = 5;
/// Largest population for the brute-force worst case over outcome grids.
pub const MAX_BRUTE_UNITS: usize = 3;
/// Primal feasibility tolerance of the simplex solver.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Dual feasibility / duality-gap tolerance certifying optimality.
pub const OPTIMALITY_TOL: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum WorstCaseError {
    #[error("population {n} exceeds the cap {cap} for this operation")]
    TooLarge { n: usize, cap: usize },
    #[error("interference model is singular: I + A cannot be inverted")]
    SingularModel,
    #[error("model error: {0}")]
    Model(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl From<ModelError> for WorstCaseError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SingularModel => WorstCaseError::SingularModel,
            other => WorstCaseError::Model(other.to_string()),
        }
    }
}

/// All `2^n` sign vectors in lexicographic order (`-1` before `+1`, the
/// leftmost unit most significant).
#[derive(Debug, Clone)]
pub struct AssignmentEnumeration {
    n: usize,
    signs: Matrix,
}

impl AssignmentEnumeration {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        1usize << self.n
    }

    /// Sign of unit `i` in assignment `u`.
    #[inline]
    pub fn sign(&self, u: usize, i: usize) -> f64 {
        self.signs.get(u, i)
    }

    pub fn assignment(&self, u: usize) -> Assignment {
        Assignment::new((0..self.n).map(|i| if self.sign(u, i) > 0.0 { 1 } else { -1 }).collect())
    }

    pub fn all(&self) -> Vec<Assignment> {
        (0..self.count()).map(|u| self.assignment(u)).collect()
    }
}

pub fn enumerate_assignments(n: usize) -> Result<AssignmentEnumeration, WorstCaseError> {
    if n == 0 || n > MAX_ENUM_UNITS {
        return Err(WorstCaseError::TooLarge { n, cap: MAX_ENUM_UNITS });
    }
    let rows = 1usize << n;
    let signs = Matrix::from_fn(rows, n, |u, i| {
        if u >> (n - 1 - i) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    });
    Ok(AssignmentEnumeration { n, signs })
}

/// Which sign product weights the odd-moment part of the variance
/// constraints. [`TripleSign::Ijk`] is the product over all three tensor
/// indices and is the correct weight; [`TripleSign::Ikk`] repeats the
/// third index, which collapses to the sign of `i` alone, and exists only
/// to reproduce LPs built with that variant convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TripleSign {
    #[default]
    Ijk,
    Ikk,
}

/// The assembled LP over variables `x = [v, p_0, ..., p_{2^n - 1}]`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub n: usize,
    /// Objective coefficients (minimization).
    pub objective: Vec<f64>,
    /// Rows `a^T x <= rhs`, one per outcome pair, named.
    pub ineq: Vec<(String, Vec<f64>, f64)>,
    /// Rows `a^T x = rhs`: unbiasedness per unit, then the simplex row.
    pub eq: Vec<(String, Vec<f64>, f64)>,
    /// Per-variable `[lo, hi]`; `hi` may be infinite.
    pub bounds: Vec<(f64, f64)>,
    /// Variable names for export.
    pub var_names: Vec<String>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

/// Builds the worst-case design LP for the model, with the default sign
/// convention for the odd-moment term.
pub fn build_lp(model: &GraphModel) -> Result<LpProblem, WorstCaseError> {
    build_lp_with(model, TripleSign::Ijk)
}

/// Builds the LP under an explicit odd-moment sign convention.
pub fn build_lp_with(model: &GraphModel, convention: TripleSign) -> Result<LpProblem, WorstCaseError> {
    let n = model.n();
    if n > MAX_LP_UNITS {
        return Err(WorstCaseError::TooLarge { n, cap: MAX_LP_UNITS });
    }
    let w = enumerate_assignments(n)?;
    let tensor = k_tensor(model)?;
    let assignments = w.count();
    let num_vars = 1 + assignments;
    let inv_n_sq = 1.0 / (n * n) as f64;

    // Per assignment u and unit j, the even and odd contractions of the
    // covariance tensor against the signs of u.
    let mut even = vec![vec![0.0f64; n]; assignments];
    let mut odd = vec![vec![0.0f64; n]; assignments];
    for u in 0..assignments {
        for j in 0..n {
            let mut pair = 0.0;
            let mut single = 0.0;
            for i in 0..n {
                let wi = w.sign(u, i);
                for k in 0..n {
                    let kv = tensor.get(i, j, k);
                    if kv == 0.0 {
                        continue;
                    }
                    pair += kv * wi * w.sign(u, k);
                    single += kv * wi;
                }
            }
            even[u][j] = pair;
            odd[u][j] = match convention {
                TripleSign::Ijk => w.sign(u, j) * pair,
                TripleSign::Ikk => single,
            };
        }
    }

    let mut ineq = Vec::with_capacity(assignments * assignments);
    for a_idx in 0..assignments {
        let a: Vec<f64> = (0..n).map(|i| (a_idx >> (n - 1 - i) & 1) as f64).collect();
        for b_idx in 0..assignments {
            let b: Vec<f64> = (0..n).map(|i| (b_idx >> (n - 1 - i) & 1) as f64).collect();
            let mut row = vec![0.0; num_vars];
            row[0] = -1.0;
            for u in 0..assignments {
                let mean_part: f64 =
                    (0..n).map(|i| w.sign(u, i) * (a[i] + b[i])).sum::<f64>().powi(2);
                let mut net_part = 0.0;
                for j in 0..n {
                    // Binary outcomes square to themselves.
                    net_part += even[u][j] * (a[j] + b[j]) + odd[u][j] * (a[j] - b[j]);
                }
                row[1 + u] = inv_n_sq * (mean_part + 2.0 * net_part);
            }
            ineq.push((format!("wc_{a_idx}_{b_idx}"), row, 0.0));
        }
    }

    let mut eq = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut row = vec![0.0; num_vars];
        for u in 0..assignments {
            row[1 + u] = w.sign(u, i);
        }
        eq.push((format!("mean_{i}"), row, 0.0));
    }
    let mut total = vec![0.0; num_vars];
    total[1..].fill(1.0);
    eq.push(("total".to_string(), total, 1.0));

    let mut objective = vec![0.0; num_vars];
    objective[0] = 1.0;
    let mut bounds = vec![(0.0, f64::INFINITY)];
    bounds.extend(std::iter::repeat((0.0, 1.0)).take(assignments));
    let mut var_names = vec!["v".to_string()];
    var_names.extend((0..assignments).map(|u| format!("p_{u}")));

    Ok(LpProblem { n, objective, ineq, eq, bounds, var_names })
}

/// A probability distribution over the enumerated assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignDistribution {
    pub probs: Vec<f64>,
}

impl DesignDistribution {
    /// Checks the simplex and unbiasedness invariants against an
    /// enumeration of matching size.
    pub fn validate(&self, w: &AssignmentEnumeration) -> Result<(), WorstCaseError> {
        if self.probs.len() != w.count() {
            return Err(WorstCaseError::NumericalFailure(format!(
                "design has {} atoms, enumeration {}",
                self.probs.len(),
                w.count()
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > FEASIBILITY_TOL {
            return Err(WorstCaseError::NumericalFailure(format!(
                "design mass sums to {sum}, not 1"
            )));
        }
        if let Some(p) = self.probs.iter().find(|&&p| !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&p)) {
            return Err(WorstCaseError::NumericalFailure(format!(
                "design atom {p} outside [0, 1]"
            )));
        }
        for i in 0..w.n() {
            let mean: f64 = (0..w.count()).map(|u| self.probs[u] * w.sign(u, i)).sum();
            if mean.abs() > FEASIBILITY_TOL {
                return Err(WorstCaseError::NumericalFailure(format!(
                    "unit {i} has mean assignment {mean}, not 0"
                )));
            }
        }
        Ok(())
    }
}

/// Optimal value and design of the worst-case LP, with solver diagnostics.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub design: DesignDistribution,
    pub iterations: usize,
    /// `|c^T x - b^T y|` for the independently recomputed dual `y`.
    pub duality_gap: f64,
    pub max_primal_residual: f64,
    pub max_dual_violation: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    value: f64,
    ncols: usize,
}

const ENTER_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const MAX_PIVOTS: usize = 200_000;

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.rows[row][self.ncols]
    }

    fn compute_reduced(&mut self, costs: &[f64]) {
        self.reduced = costs.to_vec();
        self.value = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            let cb = costs[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for j in 0..self.ncols {
                self.reduced[j] -= cb * row[j];
            }
            self.value += cb * row[self.ncols];
        }
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let inv = 1.0 / self.rows[prow][pcol];
        for v in self.rows[prow].iter_mut() {
            *v *= inv;
        }
        for r in 0..self.rows.len() {
            if r == prow {
                continue;
            }
            let factor = self.rows[r][pcol];
            if factor == 0.0 {
                continue;
            }
            for j in 0..=self.ncols {
                let delta = factor * self.rows[prow][j];
                self.rows[r][j] -= delta;
            }
            self.rows[r][pcol] = 0.0;
        }
        let factor = self.reduced[pcol];
        if factor != 0.0 {
            for j in 0..self.ncols {
                self.reduced[j] -= factor * self.rows[prow][j];
            }
            self.value += factor * self.rhs(prow);
            self.reduced[pcol] = 0.0;
        }
        self.basis[prow] = pcol;
    }

    /// Runs Bland-rule pivots until optimal over the allowed columns.
    fn optimize(&mut self, allowed: usize) -> Result<usize, WorstCaseError> {
        let mut iters = 0;
        loop {
            let entering = (0..allowed).find(|&j| self.reduced[j] < -ENTER_TOL);
            let Some(pcol) = entering else {
                return Ok(iters);
            };
            let mut prow: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows.len() {
                let coef = self.rows[r][pcol];
                if coef <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r) / coef;
                match prow {
                    None => {
                        prow = Some(r);
                        best_ratio = ratio;
                    }
                    Some(p) => {
                        if ratio < best_ratio - 1e-12 {
                            prow = Some(r);
                            best_ratio = ratio;
                        } else if (ratio - best_ratio).abs() <= 1e-12 && self.basis[r] < self.basis[p]
                        {
                            prow = Some(r);
                        }
                    }
                }
            }
            let Some(prow) = prow else {
                return Err(WorstCaseError::NumericalFailure("unbounded LP".into()));
            };
            self.pivot(prow, pcol);
            iters += 1;
            if iters > MAX_PIVOTS {
                return Err(WorstCaseError::NumericalFailure("pivot limit exceeded".into()));
            }
        }
    }
}

/// Solves the LP by two-phase simplex and certifies the optimum with a
/// freshly recomputed primal residual and dual solution.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution, WorstCaseError> {
    let ns = lp.num_vars();
    for (j, &(lo, _)) in lp.bounds.iter().enumerate() {
        assert!(lo == 0.0, "variable {j} must have lower bound zero");
    }
    // Standard form: finite upper bounds become extra inequality rows, all
    // inequalities gain slacks, equalities gain phase-1 artificials.
    let mut ineq: Vec<(Vec<f64>, f64)> =
        lp.ineq.iter().map(|(_, row, rhs)| (row.clone(), *rhs)).collect();
    for (j, &(_, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut row = vec![0.0; ns];
            row[j] = 1.0;
            ineq.push((row, hi));
        }
    }
    let m_ineq = ineq.len();
    let m_eq = lp.eq.len();
    let m = m_ineq + m_eq;
    let total_cols = ns + m_ineq + m_eq;
    let art_start = ns + m_ineq;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut b_vec = Vec::with_capacity(m);
    for (r, (row, rhs)) in ineq.iter().enumerate() {
        assert!(*rhs >= 0.0, "inequality rhs must be nonnegative");
        let mut full = vec![0.0; total_cols + 1];
        full[..ns].copy_from_slice(row);
        full[ns + r] = 1.0;
        full[total_cols] = *rhs;
        rows.push(full);
        basis.push(ns + r);
        b_vec.push(*rhs);
    }
    for (r, (_, row, rhs)) in lp.eq.iter().enumerate() {
        assert!(*rhs >= 0.0, "equality rhs must be nonnegative");
        let mut full = vec![0.0; total_cols + 1];
        full[..ns].copy_from_slice(row);
        full[art_start + r] = 1.0;
        full[total_cols] = *rhs;
        rows.push(full);
        basis.push(art_start + r);
        b_vec.push(*rhs);
    }

    let mut tab = Tableau { rows, basis, reduced: vec![], value: 0.0, ncols: total_cols };

    // Phase 1: drive the artificial variables to zero.
    let mut phase1_costs = vec![0.0; total_cols];
    for c in phase1_costs.iter_mut().skip(art_start) {
        *c = 1.0;
    }
    tab.compute_reduced(&phase1_costs);
    let mut iterations = tab.optimize(total_cols)?;
    if tab.value > 1e-7 {
        return Err(WorstCaseError::NumericalFailure(format!(
            "infeasible: phase-1 objective {}",
            tab.value
        )));
    }
    // Pivot leftover artificials out of the basis; drop redundant rows,
    // keeping the original row indices aligned for the certificate.
    let mut surviving: Vec<usize> = (0..m).collect();
    let mut r = 0;
    while r < tab.rows.len() {
        if tab.basis[r] >= art_start {
            if let Some(col) = (0..art_start).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                tab.pivot(r, col);
                iterations += 1;
            } else {
                tab.rows.remove(r);
                tab.basis.remove(r);
                b_vec.remove(r);
                surviving.remove(r);
                continue;
            }
        }
        r += 1;
    }

    // Phase 2 over the real columns only.
    let mut phase2_costs = vec![0.0; total_cols];
    phase2_costs[..ns].copy_from_slice(&lp.objective);
    tab.compute_reduced(&phase2_costs);
    iterations += tab.optimize(art_start)?;

    let mut x = vec![0.0; total_cols];
    for (r, &bv) in tab.basis.iter().enumerate() {
        x[bv] = tab.rhs(r);
    }
    let value = numerics::dot(&x[..ns], &lp.objective);

    // Fresh primal residuals from the original data.
    let mut max_primal_residual: f64 = 0.0;
    for (_, row, rhs) in &lp.ineq {
        max_primal_residual = max_primal_residual.max(numerics::dot(row, &x[..ns]) - rhs);
    }
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        max_primal_residual = max_primal_residual.max(lo - x[j]);
        if hi.is_finite() {
            max_primal_residual = max_primal_residual.max(x[j] - hi);
        }
    }
    for (_, row, rhs) in &lp.eq {
        max_primal_residual = max_primal_residual.max((numerics::dot(row, &x[..ns]) - rhs).abs());
    }
    if max_primal_residual > FEASIBILITY_TOL {
        return Err(WorstCaseError::NumericalFailure(format!(
            "primal residual {max_primal_residual} exceeds {FEASIBILITY_TOL}"
        )));
    }

    // Fresh dual from the final basis: solve B^T y = c_B against the
    // original standard-form columns, then check reduced costs and gap.
    let mb = tab.rows.len();
    if tab.basis.iter().any(|&bv| bv >= art_start) {
        return Err(WorstCaseError::NumericalFailure("artificial variable left basic".into()));
    }
    // Column j of the original standard-form constraint matrix at original
    // row index r (structural columns, then one slack per inequality).
    let original_entry = |r: usize, j: usize| -> f64 {
        if j < ns {
            if r < m_ineq {
                ineq[r].0[j]
            } else {
                lp.eq[r - m_ineq].1[j]
            }
        } else if r == j - ns {
            1.0
        } else {
            0.0
        }
    };
    let mut bt = Matrix::zeros(mb, mb);
    let mut cb = vec![0.0; mb];
    for (col, &bv) in tab.basis.iter().enumerate() {
        cb[col] = phase2_costs[bv];
        for (r_new, &r_old) in surviving.iter().enumerate() {
            bt.set(col, r_new, original_entry(r_old, bv));
        }
    }
    let y = numerics::solve(&bt, &cb)
        .map_err(|e| WorstCaseError::NumericalFailure(format!("dual solve failed: {e}")))?;
    let mut max_dual_violation: f64 = 0.0;
    for j in 0..art_start {
        let mut aj_y = 0.0;
        for (r_new, &r_old) in surviving.iter().enumerate() {
            aj_y += original_entry(r_old, j) * y[r_new];
        }
        max_dual_violation = max_dual_violation.max(-(phase2_costs[j] - aj_y));
    }
    let b_surv: Vec<f64> = surviving
        .iter()
        .map(|&r_old| if r_old < m_ineq { ineq[r_old].1 } else { lp.eq[r_old - m_ineq].2 })
        .collect();
    let duality_gap = (value - numerics::dot(&b_surv, &y)).abs();
    if max_dual_violation > OPTIMALITY_TOL || duality_gap > OPTIMALITY_TOL * value.abs().max(1.0) {
        return Err(WorstCaseError::NumericalFailure(format!(
            "optimality certificate failed: dual violation {max_dual_violation}, gap {duality_gap}"
        )));
    }

    let mut probs: Vec<f64> = x[1..ns].to_vec();
    for p in probs.iter_mut() {
        *p = p.clamp(0.0, 1.0);
    }
    let design = DesignDistribution { probs };
    design.validate(&enumerate_assignments(lp.n)?)?;
    Ok(LpSolution {
        value,
        design,
        iterations,
        duality_gap,
        max_primal_residual,
        max_dual_violation,
    })
}

/// Exact estimator variance at binary outcomes `(a, b)` for a design given
/// by its moments: the no-interference quadratic form plus the network
/// term from the covariance tensor.
fn variance_at(
    model: &GraphModel,
    moments: &DesignMoments,
    a: &[f64],
    b: &[f64],
) -> Result<f64, WorstCaseError> {
    let n = model.n();
    let po = PotentialOutcomes::new(a.to_vec(), b.to_vec())
        .map_err(|e| WorstCaseError::Model(e.to_string()))?;
    let net = exact_network_variance(&po, model, moments)?;
    let mut base = 0.0;
    for i in 0..n {
        for k in 0..n {
            base += (a[i] + b[i]) * moments.second(i, k) * (a[k] + b[k]);
        }
    }
    Ok(base / (n * n) as f64 + net)
}

/// Worst-case exact variance of a design over all binary outcome pairs,
/// by direct evaluation. Capped at [`MAX_BRUTE_UNITS`] units.
pub fn brute_force_worst_case(
    model: &GraphModel,
    design: &DesignDistribution,
) -> Result<f64, WorstCaseError> {
    let n = model.n();
    if n > MAX_BRUTE_UNITS {
        return Err(WorstCaseError::TooLarge { n, cap: MAX_BRUTE_UNITS });
    }
    let w = enumerate_assignments(n)?;
    design.validate(&w)?;
    let moments = DesignMoments::from_distribution(&w.all(), &design.probs);
    let mut worst = f64::NEG_INFINITY;
    let count = w.count();
    for a_idx in 0..count {
        let a: Vec<f64> = (0..n).map(|i| (a_idx >> (n - 1 - i) & 1) as f64).collect();
        for b_idx in 0..count {
            let b: Vec<f64> = (0..n).map(|i| (b_idx >> (n - 1 - i) & 1) as f64).collect();
            worst = worst.max(variance_at(model, &moments, &a, &b)?);
        }
    }
    Ok(worst)
}

fn render(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders the LP as plain CPLEX-LP-style text with 17 significant digits.
pub fn export_lp(lp: &LpProblem) -> String {
    let mut out = String::new();
    out.push_str(&format!("\\ worst-case design LP over {} units\n", lp.n));
    out.push_str("Minimize\n obj:");
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
            out.push_str(&format!(" {sign} {} {}", render(c.abs()), lp.var_names[j]));
            first = false;
        }
    }
    out.push_str("\nSubject To\n");
    let write_row = |name: &str, row: &[f64], op: &str, rhs: f64, out: &mut String| {
        out.push_str(&format!(" {name}:"));
        let mut first = true;
        for (j, &c) in row.iter().enumerate() {
            if c != 0.0 {
                let sign = if c < 0.0 { "-" } else if first { "" } else { "+" };
                out.push_str(&format!(" {sign} {} {}", render(c.abs()), lp.var_names[j]));
                first = false;
            }
        }
        if first {
            out.push_str(" 0 v");
        }
        out.push_str(&format!(" {op} {}\n", render(rhs)));
    };
    for (name, row, rhs) in &lp.ineq {
        write_row(name, row, "<=", *rhs, &mut out);
    }
    for (name, row, rhs) in &lp.eq {
        write_row(name, row, "=", *rhs, &mut out);
    }
    out.push_str("Bounds\n");
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            out.push_str(&format!(" {} <= {} <= {}\n", render(lo), lp.var_names[j], render(hi)));
        } else {
            out.push_str(&format!(" {} >= {}\n", lp.var_names[j], render(lo)));
        }
    }
    out.push_str("End\n");
    out
}

/// Re-parses exported LP text, checking section structure and that the
/// constraint count matches the problem.
pub fn validate_lp_text(text: &str, lp: &LpProblem) -> Result<(), String> {
    let required = ["Minimize", "Subject To", "Bounds", "End"];
    let mut pos = 0;
    for marker in required {
        match text[pos..].find(marker) {
            Some(found) => pos += found + marker.len(),
            None => return Err(format!("missing or misordered section {marker:?}")),
        }
    }
    let subject = text
        .split("Subject To")
        .nth(1)
        .and_then(|rest| rest.split("Bounds").next())
        .ok_or("missing constraint block")?;
    let rows = subject.lines().filter(|l| l.contains(':')).count();
    let expected = lp.ineq.len() + lp.eq.len();
    if rows != expected {
        return Err(format!("expected {expected} constraint rows, found {rows}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn deterministic_zero(n: usize) -> GraphModel {
        GraphModel::deterministic(Matrix::zeros(n, n)).expect("valid model")
    }

    fn small_bernoulli_2() -> GraphModel {
        let p = Matrix::from_rows(&[vec![0.0, 0.5], vec![0.25, 0.0]]);
        GraphModel::bernoulli(p, 0.4).expect("valid model")
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let w = enumerate_assignments(2).expect("small n");
        let rows: Vec<Vec<f64>> = (0..4).map(|u| (0..2).map(|i| w.sign(u, i)).collect()).collect();
        assert_eq!(
            rows,
            vec![
                vec![-1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, -1.0],
                vec![1.0, 1.0],
            ]
        );
    }

    #[test]
    fn enumeration_rejects_large_n() {
        assert_eq!(
            enumerate_assignments(13).unwrap_err(),
            WorstCaseError::TooLarge { n: 13, cap: MAX_ENUM_UNITS }
        );
    }

    #[test]
    fn build_lp_single_unit_coefficients() {
        // Without interference the constraint coefficient at (a, b) is
        // (a + b)^2 for either assignment.
        let lp = build_lp(&deterministic_zero(1)).expect("tiny model");
        assert_eq!(lp.ineq.len(), 4);
        assert_eq!(lp.eq.len(), 2);
        let coef = |name: &str| -> Vec<f64> {
            lp.ineq.iter().find(|(n, _, _)| n == name).expect("row exists").1.clone()
        };
        assert_eq!(coef("wc_0_0")[1..], [0.0, 0.0]);
        assert_eq!(coef("wc_1_0")[1..], [1.0, 1.0]);
        assert_eq!(coef("wc_1_1")[1..], [4.0, 4.0]);
        assert!(lp.ineq.iter().all(|(_, row, _)| row[0] == -1.0));
    }

    #[test]
    fn build_lp_rejects_large_n() {
        assert!(matches!(
            build_lp(&deterministic_zero(6)),
            Err(WorstCaseError::TooLarge { n: 6, cap: 5 })
        ));
    }

    #[test]
    fn lp_coefficients_match_point_mass_variance() {
        // Row coefficients are exact variances under the point-mass design
        // on one assignment, evaluated through the moments route.
        let model = small_bernoulli_2();
        let lp = build_lp(&model).expect("small model");
        let w = enumerate_assignments(2).unwrap();
        for u in 0..4 {
            let mut probs = vec![0.0; 4];
            probs[u] = 1.0;
            let moments = DesignMoments::from_distribution(&w.all(), &probs);
            for a_idx in 0..4usize {
                let a: Vec<f64> = (0..2).map(|i| (a_idx >> (1 - i) & 1) as f64).collect();
                for b_idx in 0..4usize {
                    let b: Vec<f64> = (0..2).map(|i| (b_idx >> (1 - i) & 1) as f64).collect();
                    let direct = variance_at(&model, &moments, &a, &b).unwrap();
                    let row = &lp.ineq[a_idx * 4 + b_idx].1;
                    assert!(
                        (row[1 + u] - direct).abs() <= 1e-12,
                        "coefficient ({a_idx},{b_idx},{u}): {} vs {direct}",
                        row[1 + u]
                    );
                }
            }
        }
    }

    #[test]
    fn solve_single_unit_deterministic_zero() {
        let lp = build_lp(&deterministic_zero(1)).expect("tiny model");
        let sol = solve_lp(&lp).expect("solvable");
        assert!((sol.value - 4.0).abs() <= 1e-9, "value {}", sol.value);
        assert!((sol.design.probs[0] - 0.5).abs() <= 1e-9);
        assert!((sol.design.probs[1] - 0.5).abs() <= 1e-9);
        assert!(sol.duality_gap <= OPTIMALITY_TOL);
    }

    #[test]
    fn solve_two_units_concentrates_on_balanced_assignments() {
        let lp = build_lp(&deterministic_zero(2)).expect("small model");
        let sol = solve_lp(&lp).expect("solvable");
        assert!((sol.value - 1.0).abs() <= 1e-9, "optimal worst case is 1, got {}", sol.value);
        let balanced = sol.design.probs[1] + sol.design.probs[2];
        assert!(balanced >= 0.7, "balanced mass {balanced}");
        // The uniform design is feasible, so the optimum cannot exceed its
        // worst case of 2.
        let uniform = DesignDistribution { probs: vec![0.25; 4] };
        let uniform_worst = brute_force_worst_case(&deterministic_zero(2), &uniform).unwrap();
        assert!((uniform_worst - 2.0).abs() <= 1e-12);
        assert!(sol.value < uniform_worst - 1e-6);
    }

    #[test]
    fn lp_value_never_exceeds_uniform_design_worst_case() {
        let model = small_bernoulli_2();
        let lp = build_lp(&model).expect("small model");
        let sol = solve_lp(&lp).expect("solvable");
        let uniform = DesignDistribution { probs: vec![0.25; 4] };
        let uniform_worst = brute_force_worst_case(&model, &uniform).unwrap();
        assert!(sol.value <= uniform_worst + 1e-9, "{} vs {uniform_worst}", sol.value);
    }

    #[test]
    fn lp_optimum_matches_brute_force_at_the_optimal_design() {
        let model = small_bernoulli_2();
        let sol = solve_lp(&build_lp(&model).expect("small model")).expect("solvable");
        let recomputed = brute_force_worst_case(&model, &sol.design).unwrap();
        assert!(
            (sol.value - recomputed).abs() <= 1e-7,
            "lp value {} vs brute force {recomputed}",
            sol.value
        );
    }

    #[test]
    fn brute_force_rejects_large_n() {
        let uniform = DesignDistribution { probs: vec![1.0 / 16.0; 16] };
        assert_eq!(
            brute_force_worst_case(&deterministic_zero(4), &uniform).unwrap_err(),
            WorstCaseError::TooLarge { n: 4, cap: MAX_BRUTE_UNITS }
        );
    }

    #[test]
    fn sign_conventions_agree_only_on_symmetric_outcomes() {
        let model = small_bernoulli_2();
        let default_lp = build_lp_with(&model, TripleSign::Ijk).expect("small model");
        let variant_lp = build_lp_with(&model, TripleSign::Ikk).expect("small model");
        // Rows with a = b kill the odd-moment term, so both conventions
        // agree there.
        for a_idx in 0..4usize {
            let row = a_idx * 4 + a_idx;
            assert_eq!(default_lp.ineq[row].1, variant_lp.ineq[row].1);
        }
        // Somewhere off the diagonal they must differ.
        let differs = (0..16).any(|r| default_lp.ineq[r].1 != variant_lp.ineq[r].1);
        assert!(differs, "conventions must disagree on some asymmetric outcome pair");
    }

    #[test]
    fn exported_text_validates_and_round_trips_sections() {
        let lp = build_lp(&small_bernoulli_2()).expect("small model");
        let text = export_lp(&lp);
        validate_lp_text(&text, &lp).expect("well-formed export");
        assert!(text.contains("Minimize"));
        assert!(text.contains(" total:"));
        assert!(text.contains("v >= 0") || text.contains("v >="));
        // 17 significant digits means a 16-digit mantissa.
        assert!(text.contains("5.0000000000000000e-1") || text.contains("2.5000000000000000e-1"));
    }

    #[test]
    fn validate_rejects_unbalanced_design() {
        let w = enumerate_assignments(2).unwrap();
        let bad = DesignDistribution { probs: vec![1.0, 0.0, 0.0, 0.0] };
        assert!(bad.validate(&w).is_err(), "point mass on (-1,-1) is biased");
    }
}

//! Network interference models and the variance machinery of the
//! network-adjusted estimator.
//!
//! Observed outcomes are contaminated as `y' = (I + C) y` where `C` is a
//! random nonnegative matrix with zero diagonal, independent entries, and
//! expectation `A`. Three edge laws are supported: a deterministic matrix,
//! Bernoulli activation of a fixed weight, and Bernoulli-gated uniform
//! weights. The module computes the per-column covariance contraction of
//! the adjustment error `E = (I + A)^{-1}(I + C) - I`, the quadratic-form
//! variance bound matrix `M`, exact variances under supplied design
//! moments, tail bounds, and the connected-component decomposition that
//! localizes all of these quantities.

use crate::designs::DesignSampler;
use crate::numerics::{self, Matrix};
use crate::rng::stream;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest `n` for which the cubic-size tensor is built by default.
pub const DEFAULT_SIZE_CAP: usize = 200;
/// Condition-number threshold separating a numerically invertible model
/// from a singular one.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{entry}: {reason}")]
    InvalidEntry { entry: String, reason: String },
    #[error("graph model is singular: I + A cannot be inverted")]
    SingularModel,
    #[error("model size {n} exceeds the cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("enumeration would branch over {edges} random edges (cap {cap})")]
    TooManyEdges { edges: usize, cap: usize },
}

/// Edge law of the contamination matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    /// `C = A` on every draw.
    Deterministic { adjacency: Matrix },
    /// `C_ij = activation` with probability `p_ij`, else `0`.
    Bernoulli { probs: Matrix, activation: f64 },
    /// `C_ij` uniform on `[0, activation_ij]` with probability `p_ij`,
    /// else `0`.
    UniformActivation { probs: Matrix, activation: Matrix },
}

/// A validated interference model on `n` units.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphModel {
    n: usize,
    kind: GraphKind,
}

fn check_square(name: &str, m: &Matrix, n: usize) -> Result<(), ModelError> {
    if m.rows() != n || m.cols() != n {
        return Err(ModelError::InvalidEntry {
            entry: name.to_string(),
            reason: format!("must be {n}x{n}, got {}x{}", m.rows(), m.cols()),
        });
    }
    Ok(())
}

fn check_entries(
    name: &str,
    m: &Matrix,
    upper: Option<f64>,
) -> Result<(), ModelError> {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            let entry = format!("{name}[{i}][{j}]");
            if !v.is_finite() {
                return Err(ModelError::InvalidEntry { entry, reason: "must be finite".into() });
            }
            if i == j && v != 0.0 {
                return Err(ModelError::InvalidEntry {
                    entry,
                    reason: format!("diagonal must be zero, got {v}"),
                });
            }
            if v < 0.0 {
                return Err(ModelError::InvalidEntry {
                    entry,
                    reason: format!("must be nonnegative, got {v}"),
                });
            }
            if let Some(hi) = upper {
                if v > hi {
                    return Err(ModelError::InvalidEntry {
                        entry,
                        reason: format!("must be at most {hi}, got {v}"),
                    });
                }
            }
        }
    }
    Ok(())
}

impl GraphModel {
    pub fn deterministic(adjacency: Matrix) -> Result<Self, ModelError> {
        let n = adjacency.rows();
        check_square("A", &adjacency, n)?;
        check_entries("A", &adjacency, None)?;
        Ok(GraphModel { n, kind: GraphKind::Deterministic { adjacency } })
    }

    pub fn bernoulli(probs: Matrix, activation: f64) -> Result<Self, ModelError> {
        let n = probs.rows();
        check_square("p", &probs, n)?;
        check_entries("p", &probs, Some(1.0))?;
        if !activation.is_finite() || activation < 0.0 {
            return Err(ModelError::InvalidEntry {
                entry: "alpha".into(),
                reason: format!("must be a finite nonnegative number, got {activation}"),
            });
        }
        Ok(GraphModel { n, kind: GraphKind::Bernoulli { probs, activation } })
    }

    pub fn uniform_activation(probs: Matrix, activation: Matrix) -> Result<Self, ModelError> {
        let n = probs.rows();
        check_square("p", &probs, n)?;
        check_entries("p", &probs, Some(1.0))?;
        check_square("alpha", &activation, n)?;
        check_entries("alpha", &activation, None)?;
        Ok(GraphModel { n, kind: GraphKind::UniformActivation { probs, activation } })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    /// Expected contamination matrix `A = E[C]`.
    pub fn expected_adjacency(&self) -> Matrix {
        match &self.kind {
            GraphKind::Deterministic { adjacency } => adjacency.clone(),
            GraphKind::Bernoulli { probs, activation } => probs.scaled(*activation),
            GraphKind::UniformActivation { probs, activation } => Matrix::from_fn(
                self.n,
                self.n,
                |i, j| 0.5 * probs.get(i, j) * activation.get(i, j),
            ),
        }
    }

    /// Entry-wise variances `Var[C_ij]`.
    pub fn edge_variance(&self) -> Matrix {
        match &self.kind {
            GraphKind::Deterministic { .. } => Matrix::zeros(self.n, self.n),
            GraphKind::Bernoulli { probs, activation } => {
                let a2 = activation * activation;
                Matrix::from_fn(self.n, self.n, |i, j| {
                    let p = probs.get(i, j);
                    a2 * p * (1.0 - p)
                })
            }
            GraphKind::UniformActivation { probs, activation } => {
                Matrix::from_fn(self.n, self.n, |i, j| {
                    let p = probs.get(i, j);
                    let a = activation.get(i, j);
                    p * a * a / 3.0 - (0.5 * p * a) * (0.5 * p * a)
                })
            }
        }
    }

    /// One draw of the contamination matrix.
    pub fn sample_c<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        match &self.kind {
            GraphKind::Deterministic { adjacency } => adjacency.clone(),
            GraphKind::Bernoulli { probs, activation } => {
                let mut c = Matrix::zeros(self.n, self.n);
                for i in 0..self.n {
                    for j in 0..self.n {
                        if i == j {
                            continue;
                        }
                        if rng.random::<f64>() < probs.get(i, j) {
                            c.set(i, j, *activation);
                        }
                    }
                }
                c
            }
            GraphKind::UniformActivation { probs, activation } => {
                let mut c = Matrix::zeros(self.n, self.n);
                for i in 0..self.n {
                    for j in 0..self.n {
                        if i == j {
                            continue;
                        }
                        if rng.random::<f64>() < probs.get(i, j) {
                            c.set(i, j, rng.random::<f64>() * activation.get(i, j));
                        }
                    }
                }
                c
            }
        }
    }

    /// Largest number of possible incoming contaminations of one unit,
    /// `max_i #{j != i : edge (i, j) can be nonzero}`.
    pub fn max_support_degree(&self) -> usize {
        let support = self.support();
        (0..self.n)
            .map(|i| (0..self.n).filter(|&j| j != i && support.get(i, j) > 0.0).count())
            .max()
            .unwrap_or(0)
    }

    /// Matrix whose positive entries mark edges that can be nonzero.
    fn support(&self) -> Matrix {
        match &self.kind {
            GraphKind::Deterministic { adjacency } => adjacency.clone(),
            GraphKind::Bernoulli { probs, activation } => {
                if *activation == 0.0 {
                    Matrix::zeros(self.n, self.n)
                } else {
                    probs.clone()
                }
            }
            GraphKind::UniformActivation { probs, activation } => Matrix::from_fn(
                self.n,
                self.n,
                |i, j| probs.get(i, j) * activation.get(i, j),
            ),
        }
    }

    /// `I + A` for this model.
    pub fn system_matrix(&self) -> Matrix {
        let a = self.expected_adjacency();
        let mut m = Matrix::identity(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.add_to(i, j, a.get(i, j));
            }
        }
        m
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::InvalidEntry {
            entry: "graph json".into(),
            reason: e.to_string(),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph model serializes")
    }
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, ModelError> {
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(ModelError::InvalidEntry {
                entry: format!("{name}[{i}]"),
                reason: format!("must have {n} entries, got {}", row.len()),
            });
        }
    }
    Ok(Matrix::from_rows(rows))
}

#[derive(Serialize, Deserialize)]
struct RawGraphModel {
    n: usize,
    kind: String,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<RawAlpha>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawAlpha {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl TryFrom<RawGraphModel> for GraphModel {
    type Error = ModelError;

    fn try_from(raw: RawGraphModel) -> Result<Self, ModelError> {
        let expect_n = |name: &str, rows: &[Vec<f64>]| -> Result<(), ModelError> {
            if rows.len() != raw.n {
                return Err(ModelError::InvalidEntry {
                    entry: name.to_string(),
                    reason: format!("must have n = {} rows, got {}", raw.n, rows.len()),
                });
            }
            Ok(())
        };
        match raw.kind.as_str() {
            "deterministic" => {
                let rows = raw.adjacency.ok_or_else(|| ModelError::InvalidEntry {
                    entry: "A".into(),
                    reason: "required for kind \"deterministic\"".into(),
                })?;
                expect_n("A", &rows)?;
                GraphModel::deterministic(rows_to_matrix("A", &rows)?)
            }
            "bernoulli" => {
                let rows = raw.p.ok_or_else(|| ModelError::InvalidEntry {
                    entry: "p".into(),
                    reason: "required for kind \"bernoulli\"".into(),
                })?;
                expect_n("p", &rows)?;
                let activation = match raw.alpha {
                    Some(RawAlpha::Scalar(a)) => a,
                    Some(RawAlpha::Matrix(_)) => {
                        return Err(ModelError::InvalidEntry {
                            entry: "alpha".into(),
                            reason: "must be a scalar for kind \"bernoulli\"".into(),
                        })
                    }
                    None => {
                        return Err(ModelError::InvalidEntry {
                            entry: "alpha".into(),
                            reason: "required for kind \"bernoulli\"".into(),
                        })
                    }
                };
                GraphModel::bernoulli(rows_to_matrix("p", &rows)?, activation)
            }
            "uniform_activation" => {
                let p_rows = raw.p.ok_or_else(|| ModelError::InvalidEntry {
                    entry: "p".into(),
                    reason: "required for kind \"uniform_activation\"".into(),
                })?;
                expect_n("p", &p_rows)?;
                let a_rows = match raw.alpha {
                    Some(RawAlpha::Matrix(rows)) => rows,
                    Some(RawAlpha::Scalar(_)) => {
                        return Err(ModelError::InvalidEntry {
                            entry: "alpha".into(),
                            reason: "must be a matrix for kind \"uniform_activation\"".into(),
                        })
                    }
                    None => {
                        return Err(ModelError::InvalidEntry {
                            entry: "alpha".into(),
                            reason: "required for kind \"uniform_activation\"".into(),
                        })
                    }
                };
                expect_n("alpha", &a_rows)?;
                GraphModel::uniform_activation(
                    rows_to_matrix("p", &p_rows)?,
                    rows_to_matrix("alpha", &a_rows)?,
                )
            }
            other => Err(ModelError::InvalidEntry {
                entry: "kind".into(),
                reason: format!(
                    "must be \"deterministic\", \"bernoulli\", or \"uniform_activation\", got \"{other}\""
                ),
            }),
        }
    }
}

impl From<&GraphModel> for RawGraphModel {
    fn from(model: &GraphModel) -> Self {
        match &model.kind {
            GraphKind::Deterministic { adjacency } => RawGraphModel {
                n: model.n,
                kind: "deterministic".into(),
                adjacency: Some(matrix_to_rows(adjacency)),
                p: None,
                alpha: None,
            },
            GraphKind::Bernoulli { probs, activation } => RawGraphModel {
                n: model.n,
                kind: "bernoulli".into(),
                adjacency: None,
                p: Some(matrix_to_rows(probs)),
                alpha: Some(RawAlpha::Scalar(*activation)),
            },
            GraphKind::UniformActivation { probs, activation } => RawGraphModel {
                n: model.n,
                kind: "uniform_activation".into(),
                adjacency: None,
                p: Some(matrix_to_rows(probs)),
                alpha: Some(RawAlpha::Matrix(matrix_to_rows(activation))),
            },
        }
    }
}

impl Serialize for GraphModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawGraphModel::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GraphModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawGraphModel::deserialize(deserializer)?;
        GraphModel::try_from(raw).map_err(D::Error::custom)
    }
}

/// Whether the adjusted estimator's system matrix `I + A` is invertible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WellDefined {
    /// A parameter-level dominance condition guarantees invertibility.
    GuaranteedByDominance,
    /// No dominance guarantee, but the condition estimate is acceptable.
    InvertibleNumerically,
    /// The system matrix fails to factor or is hopelessly conditioned.
    Singular,
}

/// Classifies the model by the invertibility of `I + A`.
///
/// Parameter conditions checked first: `activation < 1 / d_max` for
/// Bernoulli models, `max activation < 2 / d_max` for uniform activation,
/// and row sums of `A` strictly below one for deterministic models (all
/// vacuous when `d_max = 0`). Models at or past the boundary fall through
/// to a condition estimate.
pub fn check_well_defined(model: &GraphModel) -> WellDefined {
    let d_max = model.max_support_degree();
    let dominance = if d_max == 0 {
        true
    } else {
        match model.kind() {
            GraphKind::Deterministic { adjacency } => (0..model.n()).all(|i| {
                adjacency.row(i).iter().map(|v| v.abs()).sum::<f64>() < 1.0
            }),
            GraphKind::Bernoulli { activation, .. } => *activation < 1.0 / d_max as f64,
            GraphKind::UniformActivation { activation, .. } => {
                activation.max_abs() < 2.0 / d_max as f64
            }
        }
    };
    if dominance {
        return WellDefined::GuaranteedByDominance;
    }
    match numerics::condition_estimate(&model.system_matrix()) {
        Some(cond) if cond < CONDITION_LIMIT => WellDefined::InvertibleNumerically,
        _ => WellDefined::Singular,
    }
}

/// Contaminated observation `y' = (I + C) y` for one fresh draw of `C`.
pub fn simulate_observed<R: Rng + ?Sized>(
    po: &crate::estimation::PotentialOutcomes,
    z: &crate::designs::Assignment,
    model: &GraphModel,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    if po.len() != model.n() || z.len() != model.n() {
        return Err(ModelError::LengthMismatch(format!(
            "model has {} units, outcomes {}, assignment {}",
            model.n(),
            po.len(),
            z.len()
        )));
    }
    let y = crate::estimation::observe(po, z)
        .map_err(|e| ModelError::LengthMismatch(e.to_string()))?;
    let c = model.sample_c(rng);
    let mut out = y.values().to_vec();
    for i in 0..model.n() {
        out[i] += numerics::dot(c.row(i), y.values());
    }
    Ok(out)
}

/// Per-column covariance contraction of the adjustment error:
/// `K[i][j][k] = Cov(E_ij, E_kj)` for `E = (I + A)^{-1}(I + C) - I`.
#[derive(Debug, Clone)]
pub struct KTensor {
    n: usize,
    data: Vec<f64>,
}

impl KTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n + j) * self.n + k] = v;
    }
}

/// Builds the covariance tensor with the default size cap.
pub fn k_tensor(model: &GraphModel) -> Result<KTensor, ModelError> {
    k_tensor_with_cap(model, DEFAULT_SIZE_CAP)
}

/// Builds the covariance tensor, refusing models larger than `cap`
/// (the tensor takes cubic memory).
pub fn k_tensor_with_cap(model: &GraphModel, cap: usize) -> Result<KTensor, ModelError> {
    let n = model.n();
    if n > cap {
        return Err(ModelError::TooLarge { n, cap });
    }
    let inv = numerics::invert(&model.system_matrix()).map_err(|_| ModelError::SingularModel)?;
    let var = model.edge_variance();
    let mut t = KTensor { n, data: vec![0.0; n * n * n] };
    for j in 0..n {
        for i in 0..n {
            for k in i..n {
                let mut acc = 0.0;
                for u in 0..n {
                    let w = var.get(u, j);
                    if w != 0.0 {
                        acc += inv.get(i, u) * inv.get(k, u) * w;
                    }
                }
                t.set(i, j, k, acc);
                t.set(k, j, i, acc);
            }
        }
    }
    Ok(t)
}

/// Quadratic-form variance bound matrix for outcomes bounded by
/// `sqrt(outcome_bound)`:
/// `M = (4 f / n^2) (11^T + sum_i Cov(column i of E))`.
///
/// `Var(tau_net) <= E[z^T M z]` for any design, with equality at
/// `a = b = sqrt(f) 1`.
pub fn m_matrix(model: &GraphModel, outcome_bound: f64) -> Result<Matrix, ModelError> {
    assert!(
        outcome_bound.is_finite() && outcome_bound > 0.0,
        "outcome bound must be positive"
    );
    let n = model.n();
    let inv = numerics::invert(&model.system_matrix()).map_err(|_| ModelError::SingularModel)?;
    let var = model.edge_variance();
    // (sum_i Cov(e_i))_{jk} = sum_u inv_ju inv_ku (sum_i var_ui); the sum
    // over columns collapses to row sums of the variance matrix.
    let row_sums: Vec<f64> = (0..n).map(|u| var.row(u).iter().sum()).collect();
    let scale = 4.0 * outcome_bound / (n * n) as f64;
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let mut acc = 1.0;
            for u in 0..n {
                if row_sums[u] != 0.0 {
                    acc += inv.get(j, u) * inv.get(k, u) * row_sums[u];
                }
            }
            m.set(j, k, scale * acc);
            m.set(k, j, scale * acc);
        }
    }
    Ok(m)
}

/// Monte-Carlo estimate of `E[z^T M z]` under a design, with its standard
/// error. Replicate `r` draws from stream `(seed, r)`.
pub fn variance_bound(
    model: &GraphModel,
    outcome_bound: f64,
    design: &dyn DesignSampler,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64), ModelError> {
    if design.n() != model.n() {
        return Err(ModelError::LengthMismatch(format!(
            "model has {} units, design {}",
            model.n(),
            design.n()
        )));
    }
    assert!(replicates >= 2, "need at least two replicates");
    let m = m_matrix(model, outcome_bound)?;
    let n = model.n();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for rep in 0..replicates {
        let z = design.sample(&mut stream(seed, rep as u64));
        let zv = z.to_f64();
        let mut q = 0.0;
        for i in 0..n {
            q += zv[i] * numerics::dot(m.row(i), &zv);
        }
        sum += q;
        sum_sq += q * q;
    }
    let r = replicates as f64;
    let mean = sum / r;
    let var = ((sum_sq - sum * sum / r) / (r - 1.0)).max(0.0);
    Ok((mean, (var / r).sqrt()))
}

/// Chebyshev tail bound `P(|tau_net - tau| >= t) <= trace(M) / t^2` under
/// independent coin flips, clamped to one.
pub fn chebyshev_bound(model: &GraphModel, outcome_bound: f64, t: f64) -> Result<f64, ModelError> {
    assert!(t > 0.0, "threshold must be positive");
    let m = m_matrix(model, outcome_bound)?;
    Ok((m.trace() / (t * t)).min(1.0))
}

/// Second and third joint moments of an assignment design.
#[derive(Debug, Clone)]
pub struct DesignMoments {
    n: usize,
    second: Matrix,
    third: Vec<f64>,
}

impl DesignMoments {
    /// Moments of independent fair coin flips: `E[z_i z_k] = 1{i = k}`,
    /// all third moments zero (each `z_i^3 = z_i` has mean zero).
    pub fn iid(n: usize) -> Self {
        DesignMoments { n, second: Matrix::identity(n), third: vec![0.0; n * n * n] }
    }

    /// Monte-Carlo moments of an arbitrary design.
    pub fn estimate(design: &dyn DesignSampler, replicates: usize, seed: u64) -> Self {
        let n = design.n();
        assert!(replicates >= 1, "need at least one replicate");
        let mut second = Matrix::zeros(n, n);
        let mut third = vec![0.0; n * n * n];
        for rep in 0..replicates {
            let z = design.sample(&mut stream(seed, rep as u64));
            for i in 0..n {
                let zi = z.sign(i);
                for k in 0..n {
                    second.add_to(i, k, zi * z.sign(k));
                }
                for j in 0..n {
                    let zij = zi * z.sign(j);
                    for k in 0..n {
                        third[(i * n + j) * n + k] += zij * z.sign(k);
                    }
                }
            }
        }
        let r = replicates as f64;
        let second = second.scaled(1.0 / r);
        let third = third.into_iter().map(|v| v / r).collect();
        DesignMoments { n, second, third }
    }

    /// Exact moments of a finite distribution over assignments.
    pub fn from_distribution(assignments: &[crate::designs::Assignment], probs: &[f64]) -> Self {
        assert_eq!(assignments.len(), probs.len(), "one probability per assignment");
        let n = assignments.first().map_or(0, crate::designs::Assignment::len);
        let mut second = Matrix::zeros(n, n);
        let mut third = vec![0.0; n * n * n];
        for (z, &w) in assignments.iter().zip(probs) {
            for i in 0..n {
                let zi = z.sign(i);
                for k in 0..n {
                    second.add_to(i, k, w * zi * z.sign(k));
                }
                for j in 0..n {
                    let zij = zi * z.sign(j);
                    for k in 0..n {
                        third[(i * n + j) * n + k] += w * zij * z.sign(k);
                    }
                }
            }
        }
        DesignMoments { n, second, third }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn second(&self, i: usize, k: usize) -> f64 {
        self.second.get(i, k)
    }

    #[inline]
    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        self.third[(i * self.n + j) * self.n + k]
    }
}

/// Exact second moment of the network error term,
/// `(4/n^2) E[(z^T E y)^2]`, under the given design moments:
/// `(2/n^2) sum_{ijk} K_ijk (E[z_i z_k](a_j^2 + b_j^2) + E[z_i z_j z_k](a_j^2 - b_j^2))`.
pub fn exact_network_variance(
    po: &crate::estimation::PotentialOutcomes,
    model: &GraphModel,
    moments: &DesignMoments,
) -> Result<f64, ModelError> {
    let n = model.n();
    if po.len() != n || moments.n() != n {
        return Err(ModelError::LengthMismatch(format!(
            "model has {} units, outcomes {}, moments {}",
            n,
            po.len(),
            moments.n()
        )));
    }
    let t = k_tensor(model)?;
    Ok(network_variance_over(po, &t, moments, &(0..n).collect::<Vec<_>>()))
}

fn network_variance_over(
    po: &crate::estimation::PotentialOutcomes,
    t: &KTensor,
    moments: &DesignMoments,
    units: &[usize],
) -> f64 {
    let n = t.n() as f64;
    let a = po.treated();
    let b = po.control();
    let mut acc = 0.0;
    for &j in units {
        let sum_sq = a[j] * a[j] + b[j] * b[j];
        let diff_sq = a[j] * a[j] - b[j] * b[j];
        for &i in units {
            for &k in units {
                let kv = t.get(i, j, k);
                if kv == 0.0 {
                    continue;
                }
                acc += kv * (moments.second(i, k) * sum_sq + moments.third(i, j, k) * diff_sq);
            }
        }
    }
    2.0 / (n * n) * acc
}

/// Connected components of the support graph (an undirected edge joins
/// `i` and `j` whenever `A_ij > 0` or `A_ji > 0`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    labels: Vec<usize>,
    sets: Vec<Vec<usize>>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sets.len()
    }

    pub fn label(&self, unit: usize) -> usize {
        self.labels[unit]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }
}

/// Component decomposition of the model's support graph. Support is tested
/// with exact zero comparisons: the parameters are inputs, not computed
/// quantities.
pub fn components(model: &GraphModel) -> Components {
    let n = model.n();
    let support = model.support();
    let mut labels = vec![usize::MAX; n];
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        let id = sets.len();
        let mut queue = vec![start];
        labels[start] = id;
        let mut members = vec![start];
        while let Some(i) = queue.pop() {
            for j in 0..n {
                if labels[j] != usize::MAX || j == i {
                    continue;
                }
                if support.get(i, j) > 0.0 || support.get(j, i) > 0.0 {
                    labels[j] = id;
                    members.push(j);
                    queue.push(j);
                }
            }
        }
        members.sort_unstable();
        sets.push(members);
    }
    Components { labels, sets }
}

/// Network error variance split by support component; entries sum to
/// [`exact_network_variance`] because the covariance tensor vanishes on
/// triples that straddle components.
pub fn per_component_variance(
    po: &crate::estimation::PotentialOutcomes,
    model: &GraphModel,
    moments: &DesignMoments,
) -> Result<Vec<f64>, ModelError> {
    let n = model.n();
    if po.len() != n || moments.n() != n {
        return Err(ModelError::LengthMismatch(format!(
            "model has {} units, outcomes {}, moments {}",
            n,
            po.len(),
            moments.n()
        )));
    }
    let t = k_tensor(model)?;
    let comps = components(model);
    Ok(comps
        .sets()
        .iter()
        .map(|units| network_variance_over(po, &t, moments, units))
        .collect())
}

/// All realizations `(C, probability)` of a Bernoulli model, enumerated
/// over its randomly activated edges. Edges with `p = 0` or `p = 1` do not
/// branch. Refuses to branch over more than `max_edges` random edges.
pub fn enumerate_bernoulli_realizations(
    model: &GraphModel,
    max_edges: usize,
) -> Result<Vec<(Matrix, f64)>, ModelError> {
    let GraphKind::Bernoulli { probs, activation } = model.kind() else {
        return Err(ModelError::InvalidEntry {
            entry: "kind".into(),
            reason: "realization enumeration needs a bernoulli model".into(),
        });
    };
    let n = model.n();
    let mut base = Matrix::zeros(n, n);
    let mut random_edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = probs.get(i, j);
            if p == 1.0 {
                base.set(i, j, *activation);
            } else if p > 0.0 {
                random_edges.push((i, j, p));
            }
        }
    }
    if random_edges.len() > max_edges {
        return Err(ModelError::TooManyEdges { edges: random_edges.len(), cap: max_edges });
    }
    let mut out = Vec::with_capacity(1 << random_edges.len());
    for mask in 0u64..(1u64 << random_edges.len()) {
        let mut c = base.clone();
        let mut prob = 1.0;
        for (bit, &(i, j, p)) in random_edges.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                c.set(i, j, *activation);
                prob *= p;
            } else {
                prob *= 1.0 - p;
            }
        }
        out.push((c, prob));
    }
    Ok(out)
}

/// Exact moments of the network estimator's error under independent fair
/// coin flips, found by enumerating every assignment and every realization
/// of the contamination matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedErrorMoments {
    /// `E[tau_net - tau]`; zero up to rounding for any mean-zero design.
    pub mean: f64,
    /// `Var(tau_net - tau)` over assignments and realizations jointly.
    pub total_variance: f64,
    /// `E[(network part)^2]`, the term the covariance tensor describes.
    pub network_second_moment: f64,
    /// `E[(no-interference part)^2]`.
    pub base_second_moment: f64,
}

/// Enumerates the error moments of the network estimator under independent
/// coin flips. Works for deterministic models (a single realization) and
/// Bernoulli models (realizations branch per random edge); continuous edge
/// laws cannot be enumerated.
pub fn enumerate_error_moments(
    po: &crate::estimation::PotentialOutcomes,
    model: &GraphModel,
    max_units: usize,
) -> Result<EnumeratedErrorMoments, ModelError> {
    let n = model.n();
    if po.len() != n {
        return Err(ModelError::LengthMismatch(format!(
            "model has {n} units, outcomes {}",
            po.len()
        )));
    }
    if n > max_units {
        return Err(ModelError::TooLarge { n, cap: max_units });
    }
    let realizations = match model.kind() {
        GraphKind::Deterministic { adjacency } => vec![(adjacency.clone(), 1.0)],
        GraphKind::Bernoulli { .. } => enumerate_bernoulli_realizations(model, 20)?,
        GraphKind::UniformActivation { .. } => {
            return Err(ModelError::InvalidEntry {
                entry: "kind".into(),
                reason: "enumeration needs a discrete edge law".into(),
            })
        }
    };
    let a = self::GraphModel::expected_adjacency(model);
    let z_weight = 1.0 / (1u64 << n) as f64;
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut net_second = 0.0;
    let mut base_second = 0.0;
    for mask in 0u64..(1u64 << n) {
        let signs: Vec<i8> = (0..n)
            .map(|i| if mask >> (n - 1 - i) & 1 == 1 { 1 } else { -1 })
            .collect();
        let z = crate::designs::Assignment::new(signs);
        for (c, prob) in &realizations {
            let w = z_weight * prob;
            let terms = crate::estimation::net_error_terms(po, &z, &a, c)
                .map_err(|_| ModelError::SingularModel)?;
            let total = terms.total();
            mean += w * total;
            second += w * total * total;
            net_second += w * terms.network * terms.network;
            base_second += w * terms.base * terms.base;
        }
    }
    Ok(EnumeratedErrorMoments {
        mean,
        total_variance: second - mean * mean,
        network_second_moment: net_second,
        base_second_moment: base_second,
    })
}

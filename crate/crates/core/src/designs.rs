//! Assignment designs for two-arm trials: independent coin flips, balanced
//! random allocation, permuted blocks, and the Gram-Schmidt walk, plus the
//! normal-approximation imbalance probability for the coin-flip design.
//!
//! Every sampler draws from an explicit generator and returns an
//! [`Assignment`] whose entries are exactly `+1` or `-1`.

use crate::numerics::{self, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default snapping tolerance for walk coordinates that reach `{-1, +1}`.
pub const DEFAULT_INTEGRALITY_EPS: f64 = 1e-9;
/// Both step bounds below this threshold mean the step direction cannot move
/// the pivot, so the pivot is snapped to the nearest sign instead.
pub const DEGENERATE_STEP_EPS: f64 = 1e-12;
/// Smallest population for which the normal imbalance approximation is used.
pub const IMBALANCE_MIN_N: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("random allocation needs an even population, got {0}")]
    OddPopulation(usize),
    #[error("block {index} has odd size {size}")]
    OddBlock { index: usize, size: usize },
    #[error("blocks must partition 0..{n}: {reason}")]
    InvalidBlocks { n: usize, reason: String },
    #[error("phi must lie in (0, 1], got {0}")]
    InvalidPhi(f64),
    #[error("imbalance approximation needs n >= {IMBALANCE_MIN_N}, got {0}")]
    TooSmallN(usize),
    #[error("covariate matrix contains a non-finite entry")]
    NonFiniteCovariates,
    #[error("population must not be empty")]
    EmptyPopulation,
}

/// A realized treatment assignment with entries in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    signs: Vec<i8>,
}

impl Assignment {
    /// Wraps a sign vector; panics unless every entry is `+1` or `-1`.
    pub fn new(signs: Vec<i8>) -> Self {
        assert!(
            signs.iter().all(|&s| s == 1 || s == -1),
            "assignment entries must be +1 or -1"
        );
        Assignment { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// The sign of unit `i` as a float.
    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        f64::from(self.signs[i])
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// True when unit `i` is assigned to treatment (`+1`).
    pub fn is_treated(&self, i: usize) -> bool {
        self.signs[i] == 1
    }

    pub fn treated_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s == 1).count()
    }

    /// Inner product with a real vector.
    pub fn dot(&self, v: &[f64]) -> f64 {
        assert_eq!(self.signs.len(), v.len(), "assignment/vector length mismatch");
        self.signs.iter().zip(v).map(|(&s, &x)| f64::from(s) * x).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| f64::from(s)).collect()
    }
}

/// Independent fair coin flips, one per unit.
pub fn iid_design<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Assignment {
    assert!(n >= 1, "population must not be empty");
    Assignment::new((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
}

/// Exactly `n/2` treated units chosen uniformly without replacement.
pub fn random_allocation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Assignment, DesignError> {
    if n == 0 {
        return Err(DesignError::EmptyPopulation);
    }
    if n % 2 != 0 {
        return Err(DesignError::OddPopulation(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let (treated, _) = idx.partial_shuffle(rng, n / 2);
    let mut signs = vec![-1i8; n];
    for &i in treated.iter() {
        signs[i] = 1;
    }
    Ok(Assignment::new(signs))
}

/// An ordered partition of `0..n` into blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSpec {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockSpec {
    /// Validates that `blocks` partition `0..n` (every index exactly once).
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self, DesignError> {
        let mut seen = vec![false; n];
        for (b, block) in blocks.iter().enumerate() {
            for &i in block {
                if i >= n {
                    return Err(DesignError::InvalidBlocks {
                        n,
                        reason: format!("block {b} references unit {i}"),
                    });
                }
                if seen[i] {
                    return Err(DesignError::InvalidBlocks {
                        n,
                        reason: format!("unit {i} appears more than once"),
                    });
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(DesignError::InvalidBlocks {
                n,
                reason: format!("unit {missing} is not covered"),
            });
        }
        Ok(BlockSpec { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    fn check_even(&self) -> Result<(), DesignError> {
        for (index, block) in self.blocks.iter().enumerate() {
            if block.len() % 2 != 0 {
                return Err(DesignError::OddBlock { index, size: block.len() });
            }
        }
        Ok(())
    }
}

/// Independent balanced allocation inside each block.
pub fn permuted_block<R: Rng + ?Sized>(
    spec: &BlockSpec,
    rng: &mut R,
) -> Result<Assignment, DesignError> {
    if spec.n == 0 {
        return Err(DesignError::EmptyPopulation);
    }
    spec.check_even()?;
    let mut signs = vec![0i8; spec.n];
    for block in &spec.blocks {
        let mut members = block.clone();
        let half = members.len() / 2;
        let (treated, rest) = members.partial_shuffle(rng, half);
        for &i in treated.iter() {
            signs[i] = 1;
        }
        for &i in rest.iter() {
            signs[i] = -1;
        }
    }
    Ok(Assignment::new(signs))
}

/// Normal approximation to the probability that a fair-coin design puts more
/// than a fraction `t` of the units in one arm: `2 * Phi(2 (1/2 - t) sqrt(n))`.
///
/// `t` should lie in `(1/2, 1]`; the approximation is only offered for
/// `n >= 30`.
pub fn imbalance_probability(n: usize, t: f64) -> Result<f64, DesignError> {
    if n < IMBALANCE_MIN_N {
        return Err(DesignError::TooSmallN(n));
    }
    let x = 2.0 * (0.5 - t) * (n as f64).sqrt();
    Ok(2.0 * normal_cdf(x))
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Configuration for the Gram-Schmidt walk sampler.
///
/// `phi` trades robustness against covariate balance: `phi = 1` ignores the
/// covariates entirely and reproduces independent coin flips, while small
/// `phi` balances the covariate columns aggressively.
#[derive(Debug, Clone)]
pub struct GswConfig {
    phi: f64,
    covariates: Matrix,
    covariate_scale: f64,
    integrality_eps: f64,
}

impl GswConfig {
    /// Validates `phi` in `(0, 1]` and finite covariates (`n x d`, `d` may
    /// be zero). The covariate scale (maximum row norm) is derived here.
    pub fn new(phi: f64, covariates: Matrix) -> Result<Self, DesignError> {
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(DesignError::InvalidPhi(phi));
        }
        if covariates.rows() == 0 {
            return Err(DesignError::EmptyPopulation);
        }
        let mut scale: f64 = 0.0;
        for i in 0..covariates.rows() {
            let row = covariates.row(i);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DesignError::NonFiniteCovariates);
            }
            scale = scale.max(numerics::norm2(row));
        }
        Ok(GswConfig {
            phi,
            covariates,
            covariate_scale: scale,
            integrality_eps: DEFAULT_INTEGRALITY_EPS,
        })
    }

    pub fn with_integrality_eps(mut self, eps: f64) -> Self {
        assert!(eps > 0.0 && eps < 1e-3, "integrality eps out of range");
        self.integrality_eps = eps;
        self
    }

    pub fn n(&self) -> usize {
        self.covariates.rows()
    }

    pub fn d(&self) -> usize {
        self.covariates.cols()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    /// Maximum covariate row norm; zero only when all covariates are zero.
    pub fn covariate_scale(&self) -> f64 {
        self.covariate_scale
    }

    /// The stacked `(n + d) x n` input matrix whose column `i` is
    /// `sqrt(phi) e_i` over the scaled covariate row `x_i`. An all-zero
    /// covariate matrix contributes an all-zero bottom block.
    pub fn walk_matrix(&self) -> Matrix {
        let n = self.n();
        let d = self.d();
        let mut b = Matrix::zeros(n + d, n);
        let top = self.phi.sqrt();
        let bottom = if self.covariate_scale > 0.0 {
            (1.0 - self.phi).sqrt() / self.covariate_scale
        } else {
            0.0
        };
        for i in 0..n {
            b.set(i, i, top);
            for j in 0..d {
                b.set(n + j, i, bottom * self.covariates.get(i, j));
            }
        }
        b
    }
}

/// One non-degenerate step of the walk.
#[derive(Debug, Clone, Copy)]
pub struct GswStep {
    pub pivot: usize,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub delta: f64,
}

/// Step-level record of one walk run. Degenerate snaps (steps whose bounds
/// both collapse below [`DEGENERATE_STEP_EPS`]) are counted separately
/// because no step size is drawn for them.
#[derive(Debug, Clone, Default)]
pub struct GswTrace {
    pub steps: Vec<GswStep>,
    pub degenerate_snaps: usize,
}

impl GswTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len() + self.degenerate_snaps
    }
}

/// Samples one assignment from the Gram-Schmidt walk design.
pub fn gsw_design<R: Rng + ?Sized>(cfg: &GswConfig, rng: &mut R) -> Assignment {
    run_walk(cfg, rng, None)
}

/// Like [`gsw_design`] but also returns the per-step record.
pub fn gsw_design_traced<R: Rng + ?Sized>(cfg: &GswConfig, rng: &mut R) -> (Assignment, GswTrace) {
    let mut trace = GswTrace::default();
    let z = run_walk(cfg, rng, Some(&mut trace));
    (z, trace)
}

fn pick_alive<R: Rng + ?Sized>(alive: &[bool], alive_count: usize, rng: &mut R) -> usize {
    let k = rng.random_range(0..alive_count);
    alive
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .nth(k)
        .map(|(i, _)| i)
        .expect("alive set is non-empty")
}

fn run_walk<R: Rng + ?Sized>(cfg: &GswConfig, rng: &mut R, mut trace: Option<&mut GswTrace>) -> Assignment {
    let n = cfg.n();
    let eps = cfg.integrality_eps;
    // Weight of the covariate term in the step-direction normal equations.
    let cov_weight = if cfg.covariate_scale > 0.0 {
        (1.0 - cfg.phi) / (cfg.covariate_scale * cfg.covariate_scale)
    } else {
        0.0
    };
    let mut z = vec![0.0f64; n];
    let mut alive = vec![true; n];
    let mut alive_count = n;
    let mut pivot = rng.random_range(0..n);
    // Each iteration freezes at least one coordinate, so n + 1 passes can
    // only be reached through a logic error.
    for _ in 0..=n {
        if alive_count == 0 {
            break;
        }
        if !alive[pivot] {
            pivot = pick_alive(&alive, alive_count, rng);
        }
        let u = step_direction(cfg, &alive, pivot, cov_weight);
        // Largest moves keeping every coordinate inside [-1, 1].
        let mut hi = f64::INFINITY;
        let mut lo = f64::NEG_INFINITY;
        let mut hi_idx = pivot;
        let mut lo_idx = pivot;
        for i in 0..n {
            if !alive[i] || u[i] == 0.0 {
                continue;
            }
            let up = (1.0 - z[i]) / u[i];
            let down = (-1.0 - z[i]) / u[i];
            let (low, high) = if u[i] > 0.0 { (down, up) } else { (up, down) };
            if high < hi {
                hi = high;
                hi_idx = i;
            }
            if low > lo {
                lo = low;
                lo_idx = i;
            }
        }
        let delta_plus = hi;
        let delta_minus = -lo;
        if delta_plus + delta_minus < DEGENERATE_STEP_EPS {
            z[pivot] = if z[pivot] >= 0.0 { 1.0 } else { -1.0 };
            alive[pivot] = false;
            alive_count -= 1;
            if let Some(t) = trace.as_deref_mut() {
                t.degenerate_snaps += 1;
            }
            continue;
        }
        let take_plus = rng.random::<f64>() < delta_minus / (delta_plus + delta_minus);
        let (delta, bind_idx) = if take_plus { (delta_plus, hi_idx) } else { (-delta_minus, lo_idx) };
        for i in 0..n {
            if alive[i] && u[i] != 0.0 {
                z[i] += delta * u[i];
            }
        }
        // The binding coordinate lands exactly on a face of the cube.
        z[bind_idx] = if delta * u[bind_idx] > 0.0 { 1.0 } else { -1.0 };
        for i in 0..n {
            if alive[i] && z[i].abs() >= 1.0 - eps {
                z[i] = if z[i] >= 0.0 { 1.0 } else { -1.0 };
                alive[i] = false;
                alive_count -= 1;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.steps.push(GswStep { pivot, delta_plus, delta_minus, delta });
        }
    }
    assert!(alive_count == 0, "walk failed to freeze every coordinate");
    Assignment::new(z.iter().map(|&v| if v > 0.0 { 1i8 } else { -1i8 }).collect())
}

/// Step direction with `u[pivot] = 1`, dead coordinates zero, and free
/// coordinates minimizing the norm of the walk-matrix image.
///
/// The free block solves `(phi I + w X_f X_f^T) v = -w X_f x_p`, which this
/// routine reduces to a `d x d` system: `v = -w X_f (phi I_d + w G)^{-1} x_p`
/// with `G = X_f^T X_f`. The system matrix is positive definite for
/// `phi > 0`, so the minimizer is unique.
fn step_direction(cfg: &GswConfig, alive: &[bool], pivot: usize, cov_weight: f64) -> Vec<f64> {
    let n = cfg.n();
    let d = cfg.d();
    let mut u = vec![0.0f64; n];
    u[pivot] = 1.0;
    if cov_weight == 0.0 || d == 0 {
        return u;
    }
    let x = cfg.covariates();
    let free: Vec<usize> = (0..n).filter(|&i| alive[i] && i != pivot).collect();
    if free.is_empty() {
        return u;
    }
    let mut m = Matrix::zeros(d, d);
    for &i in &free {
        let row = x.row(i);
        for r in 0..d {
            for c in r..d {
                m.add_to(r, c, cov_weight * row[r] * row[c]);
            }
        }
    }
    for r in 0..d {
        m.add_to(r, r, cfg.phi());
        for c in 0..r {
            m.set(r, c, m.get(c, r));
        }
    }
    let w = numerics::solve(&m, x.row(pivot)).expect("positive definite step system");
    for &i in &free {
        u[i] = -cov_weight * numerics::dot(x.row(i), &w);
    }
    u
}

/// A distribution over assignments that can be sampled repeatedly.
pub trait DesignSampler {
    fn n(&self) -> usize;
    /// Short human-readable label used in reports.
    fn label(&self) -> String;
    fn sample(&self, rng: &mut ChaCha8Rng) -> Assignment;
}

/// Fair independent coin flips.
#[derive(Debug, Clone)]
pub struct IidDesign {
    pub n: usize,
}

impl DesignSampler for IidDesign {
    fn n(&self) -> usize {
        self.n
    }

    fn label(&self) -> String {
        format!("iid(n={})", self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Assignment {
        iid_design(self.n, rng)
    }
}

/// Balanced allocation of exactly half the units to each arm.
#[derive(Debug, Clone)]
pub struct RandomAllocationDesign {
    n: usize,
}

impl RandomAllocationDesign {
    pub fn new(n: usize) -> Result<Self, DesignError> {
        if n == 0 {
            return Err(DesignError::EmptyPopulation);
        }
        if n % 2 != 0 {
            return Err(DesignError::OddPopulation(n));
        }
        Ok(RandomAllocationDesign { n })
    }
}

impl DesignSampler for RandomAllocationDesign {
    fn n(&self) -> usize {
        self.n
    }

    fn label(&self) -> String {
        format!("allocation(n={})", self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Assignment {
        random_allocation(self.n, rng).expect("validated at construction")
    }
}

/// Balanced allocation within each block of a partition.
#[derive(Debug, Clone)]
pub struct PermutedBlockDesign {
    spec: BlockSpec,
}

impl PermutedBlockDesign {
    pub fn new(spec: BlockSpec) -> Result<Self, DesignError> {
        spec.check_even()?;
        if spec.n() == 0 {
            return Err(DesignError::EmptyPopulation);
        }
        Ok(PermutedBlockDesign { spec })
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }
}

impl DesignSampler for PermutedBlockDesign {
    fn n(&self) -> usize {
        self.spec.n()
    }

    fn label(&self) -> String {
        format!("block(n={}, blocks={})", self.spec.n(), self.spec.blocks().len())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Assignment {
        permuted_block(&self.spec, rng).expect("validated at construction")
    }
}

/// The Gram-Schmidt walk design.
#[derive(Debug, Clone)]
pub struct GswDesign {
    cfg: GswConfig,
}

impl GswDesign {
    pub fn new(cfg: GswConfig) -> Self {
        GswDesign { cfg }
    }

    pub fn config(&self) -> &GswConfig {
        &self.cfg
    }
}

impl DesignSampler for GswDesign {
    fn n(&self) -> usize {
        self.cfg.n()
    }

    fn label(&self) -> String {
        format!("gsw(n={}, d={}, phi={})", self.cfg.n(), self.cfg.d(), self.cfg.phi())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Assignment {
        gsw_design(&self.cfg, rng)
    }
}

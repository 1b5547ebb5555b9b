//! Potential outcomes, observation, and treatment-effect estimators.
//!
//! Units carry a treated outcome `a_i` and a control outcome `b_i`; an
//! assignment reveals one of the two per unit. The Horvitz-Thompson
//! estimator `(2/n) <z, y>` handles the no-interference case, and the
//! network-adjusted estimator `(2/n) <z, (I + A)^{-1} y'>` removes the bias
//! that spillover with expected adjacency `A` introduces.

use crate::designs::Assignment;
use crate::numerics::{self, Matrix};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("interference model is singular: I + A cannot be inverted")]
    SingularModel,
    #[error("non-finite outcome entry at unit {0}")]
    NonFinite(usize),
}

/// Treated and control outcomes for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PotentialOutcomes {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, EstimationError> {
        if a.len() != b.len() {
            return Err(EstimationError::LengthMismatch(format!(
                "treated outcomes have {} entries, control outcomes {}",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(EstimationError::LengthMismatch("outcomes must not be empty".into()));
        }
        for i in 0..a.len() {
            if !a[i].is_finite() || !b[i].is_finite() {
                return Err(EstimationError::NonFinite(i));
            }
        }
        Ok(PotentialOutcomes { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn treated(&self) -> &[f64] {
        &self.a
    }

    pub fn control(&self) -> &[f64] {
        &self.b
    }

    /// Per-unit mean `(a_i + b_i) / 2`.
    pub fn mean_vector(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Outcomes revealed by one assignment, with the arm each entry came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedOutcome {
    y: Vec<f64>,
    treated: Vec<bool>,
}

impl ObservedOutcome {
    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// True when entry `i` is the treated outcome `a_i`.
    pub fn from_treated_arm(&self, i: usize) -> bool {
        self.treated[i]
    }
}

/// Reveals `a_i` where `z_i = +1` and `b_i` where `z_i = -1`.
pub fn observe(po: &PotentialOutcomes, z: &Assignment) -> Result<ObservedOutcome, EstimationError> {
    if po.len() != z.len() {
        return Err(EstimationError::LengthMismatch(format!(
            "{} outcome pairs but {} assignment entries",
            po.len(),
            z.len()
        )));
    }
    let y = (0..po.len())
        .map(|i| if z.is_treated(i) { po.a[i] } else { po.b[i] })
        .collect();
    let treated = (0..po.len()).map(|i| z.is_treated(i)).collect();
    Ok(ObservedOutcome { y, treated })
}

/// The average treatment effect `(1/n) sum_i (a_i - b_i)`.
pub fn tau_true(po: &PotentialOutcomes) -> f64 {
    let n = po.len() as f64;
    po.a.iter().zip(&po.b).map(|(a, b)| a - b).sum::<f64>() / n
}

/// Horvitz-Thompson estimator `(2/n) <z, y>`.
pub fn tau_ht(y: &ObservedOutcome, z: &Assignment) -> Result<f64, EstimationError> {
    if y.y.len() != z.len() {
        return Err(EstimationError::LengthMismatch(format!(
            "{} observed outcomes but {} assignment entries",
            y.y.len(),
            z.len()
        )));
    }
    Ok(2.0 / z.len() as f64 * z.dot(&y.y))
}

/// Network-adjusted estimator `(2/n) <z, (I + A)^{-1} y'>` for observed
/// outcomes contaminated by spillover with expected adjacency `A`.
pub fn tau_net(
    y_prime: &[f64],
    z: &Assignment,
    expected_adjacency: &Matrix,
) -> Result<f64, EstimationError> {
    let n = z.len();
    if y_prime.len() != n || expected_adjacency.rows() != n || expected_adjacency.cols() != n {
        return Err(EstimationError::LengthMismatch(format!(
            "assignment has {} entries, outcomes {}, adjacency {}x{}",
            n,
            y_prime.len(),
            expected_adjacency.rows(),
            expected_adjacency.cols()
        )));
    }
    let mut system = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            system.add_to(i, j, expected_adjacency.get(i, j));
        }
    }
    let adjusted = numerics::solve(&system, y_prime).map_err(|_| EstimationError::SingularModel)?;
    Ok(2.0 / n as f64 * z.dot(&adjusted))
}

/// Exact estimation error of the Horvitz-Thompson estimator on this
/// realization: `tau_ht - tau = (2/n) <z, (a + b)/2>`.
pub fn ht_error(po: &PotentialOutcomes, z: &Assignment) -> Result<f64, EstimationError> {
    if po.len() != z.len() {
        return Err(EstimationError::LengthMismatch(format!(
            "{} outcome pairs but {} assignment entries",
            po.len(),
            z.len()
        )));
    }
    Ok(2.0 / z.len() as f64 * z.dot(&po.mean_vector()))
}

/// The two parts of the network estimator's error on one realization of the
/// contamination matrix `C`: the no-interference part `(1/n) <z, a + b>` and
/// the network part `(2/n) <z, E y>` with `E = (I + A)^{-1} (I + C) - I`.
///
/// Their sum equals `tau_net - tau` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetErrorTerms {
    pub base: f64,
    pub network: f64,
}

impl NetErrorTerms {
    pub fn total(&self) -> f64 {
        self.base + self.network
    }
}

/// Splits the network estimator's error into its no-interference and
/// network parts for one realized contamination matrix `C`.
pub fn net_error_terms(
    po: &PotentialOutcomes,
    z: &Assignment,
    expected_adjacency: &Matrix,
    realized: &Matrix,
) -> Result<NetErrorTerms, EstimationError> {
    let n = z.len();
    if po.len() != n
        || expected_adjacency.rows() != n
        || expected_adjacency.cols() != n
        || realized.rows() != n
        || realized.cols() != n
    {
        return Err(EstimationError::LengthMismatch(
            "outcomes, assignment, and matrices must share one dimension".into(),
        ));
    }
    let y = observe(po, z)?;
    let base = z.dot(&vec_add(po.treated(), po.control())) / n as f64;
    // E y = (I + A)^{-1} (I + C) y - y, via a single solve.
    let mut contaminated = y.y.clone();
    for i in 0..n {
        contaminated[i] += numerics::dot(realized.row(i), &y.y);
    }
    let mut system = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            system.add_to(i, j, expected_adjacency.get(i, j));
        }
    }
    let adjusted = numerics::solve(&system, &contaminated).map_err(|_| EstimationError::SingularModel)?;
    let shift: Vec<f64> = adjusted.iter().zip(&y.y).map(|(u, v)| u - v).collect();
    let network = 2.0 / n as f64 * z.dot(&shift);
    Ok(NetErrorTerms { base, network })
}

fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{iid_design, random_allocation};
    use crate::rng::stream;

    fn po(a: &[f64], b: &[f64]) -> PotentialOutcomes {
        PotentialOutcomes::new(a.to_vec(), b.to_vec()).expect("valid outcomes")
    }

    #[test]
    fn observe_reveals_one_arm_per_unit() {
        let outcomes = po(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]);
        let z = Assignment::new(vec![1, -1, 1]);
        let y = observe(&outcomes, &z).expect("matching lengths");
        assert_eq!(y.values(), &[1.0, -2.0, 3.0]);
        assert!(y.from_treated_arm(0));
        assert!(!y.from_treated_arm(1));
    }

    #[test]
    fn observe_rejects_length_mismatch() {
        let outcomes = po(&[1.0, 2.0], &[0.0, 0.0]);
        let z = Assignment::new(vec![1, -1, 1]);
        assert!(matches!(observe(&outcomes, &z), Err(EstimationError::LengthMismatch(_))));
    }

    #[test]
    fn tau_true_averages_unit_effects() {
        let outcomes = po(&[3.0, 1.0], &[1.0, -1.0]);
        assert_eq!(tau_true(&outcomes), 2.0);
    }

    #[test]
    fn tau_ht_is_exact_for_balanced_constant_outcomes() {
        // With a_i = alpha, b_i = beta and a balanced assignment the
        // estimator recovers alpha - beta exactly on every realization.
        let outcomes = po(&[4.0; 6], &[1.0; 6]);
        for rep in 0..200 {
            let z = random_allocation(6, &mut stream(31, rep)).expect("even n");
            let y = observe(&outcomes, &z).expect("matching lengths");
            let est = tau_ht(&y, &z).expect("matching lengths");
            assert!((est - 3.0).abs() <= 1e-12, "est = {est}");
        }
    }

    #[test]
    fn ht_error_matches_estimator_minus_truth() {
        let outcomes = po(&[2.0, -1.0, 0.5, 3.0], &[1.0, 0.0, -0.5, 1.0]);
        for rep in 0..100 {
            let z = iid_design(4, &mut stream(32, rep));
            let y = observe(&outcomes, &z).expect("matching lengths");
            let est = tau_ht(&y, &z).expect("matching lengths");
            let err = ht_error(&outcomes, &z).expect("matching lengths");
            assert!(
                (est - tau_true(&outcomes) - err).abs() <= 1e-12,
                "error identity must hold per realization"
            );
        }
    }

    #[test]
    fn tau_net_equals_tau_ht_without_interference() {
        let outcomes = po(&[2.0, -1.0, 0.5], &[1.0, 0.0, -0.5]);
        let a = Matrix::zeros(3, 3);
        for rep in 0..50 {
            let z = iid_design(3, &mut stream(33, rep));
            let y = observe(&outcomes, &z).expect("matching lengths");
            let ht = tau_ht(&y, &z).expect("matching lengths");
            let net = tau_net(y.values(), &z, &a).expect("invertible model");
            assert!((ht - net).abs() <= 1e-12);
        }
    }

    #[test]
    fn tau_net_rejects_singular_model() {
        // I + A with A = -I is singular.
        let a = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let z = Assignment::new(vec![1, -1]);
        assert_eq!(tau_net(&[1.0, 2.0], &z, &a).unwrap_err(), EstimationError::SingularModel);
    }

    #[test]
    fn net_error_terms_sum_to_estimator_error() {
        let outcomes = po(&[2.0, -1.0, 0.5, 1.5], &[1.0, 0.5, -0.5, 0.0]);
        let n = 4;
        let a = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.05 * (i + j) as f64 });
        // A fixed contamination realization that differs from its mean.
        let c = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.1 * ((i * 2 + j) % 3) as f64 });
        for rep in 0..100 {
            let z = iid_design(n, &mut stream(34, rep));
            let y = observe(&outcomes, &z).expect("matching lengths");
            let mut y_prime = y.values().to_vec();
            for i in 0..n {
                y_prime[i] += numerics::dot(c.row(i), y.values());
            }
            let est = tau_net(&y_prime, &z, &a).expect("invertible model");
            let terms = net_error_terms(&outcomes, &z, &a, &c).expect("invertible model");
            let direct = est - tau_true(&outcomes);
            assert!(
                (terms.total() - direct).abs() <= 1e-10,
                "decomposition {} vs direct {}",
                terms.total(),
                direct
            );
        }
    }

    #[test]
    fn potential_outcomes_reject_non_finite_entries() {
        assert!(matches!(
            PotentialOutcomes::new(vec![1.0, f64::INFINITY], vec![0.0, 0.0]),
            Err(EstimationError::NonFinite(1))
        ));
    }
}

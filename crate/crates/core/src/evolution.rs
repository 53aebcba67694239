//! Deterministic population evolution, daily matrix composition and the periodic fixed point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::TransitionMatrix;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationVector {
    pub t: usize,
    pub p: Vec<f64>,
}

impl PopulationVector {
    pub fn uniform(n: usize, t: usize) -> Self {
        PopulationVector {
            t,
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn l1_distance(&self, other: &PopulationVector) -> f64 {
        self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// `p' = M p`.
pub fn step(p: &PopulationVector, m: &TransitionMatrix) -> Result<PopulationVector> {
    if p.len() != m.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            got: p.len(),
        });
    }
    let next = m.as_matrix() * DVector::from_column_slice(&p.p);
    Ok(PopulationVector {
        t: p.t + 1,
        p: next.iter().copied().collect(),
    })
}

/// Steps `p` through `matrices` in order, returning every intermediate state (including `p`).
pub fn evolve(p: &PopulationVector, matrices: &[TransitionMatrix]) -> Result<Vec<PopulationVector>> {
    let mut states = vec![p.clone()];
    for m in matrices {
        let last = states.last().expect("nonempty");
        states.push(step(last, m)?);
    }
    Ok(states)
}

/// Distribution at absolute step `t` when `p` (at step `p.t`) is stepped through the periodic
/// day `matrices`, indexed by step modulo the period.
pub fn population_at(p: &PopulationVector, matrices: &[TransitionMatrix], t: usize) -> Result<PopulationVector> {
    if t < p.t {
        return Err(Error::StepOrder { expected: p.t, got: t });
    }
    if matrices.is_empty() && t > p.t {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let mut current = p.clone();
    while current.t < t {
        let m = &matrices[current.t % matrices.len()];
        current = step(&current, m)?;
    }
    Ok(current)
}

/// Composition of one full period, `Q = M_T ... M_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DailyMatrix {
    pub q: DMatrix<f64>,
    pub first_step: usize,
    pub last_step: usize,
}

/// Left-multiplies consecutive matrices: the result maps a distribution before the first
/// matrix to the distribution after the last. An empty slice gives `None`.
pub fn compose(matrices: &[TransitionMatrix]) -> Result<Option<DMatrix<f64>>> {
    let Some(first) = matrices.first() else {
        return Ok(None);
    };
    let n = first.n();
    let mut acc = first.as_matrix().clone();
    for (k, m) in matrices.iter().enumerate().skip(1) {
        if m.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.n(),
            });
        }
        if m.t != first.t + k {
            return Err(Error::StepOrder {
                expected: first.t + k,
                got: m.t,
            });
        }
        acc = m.as_matrix() * acc;
    }
    Ok(Some(acc))
}

pub fn compose_day(matrices: &[TransitionMatrix], period: usize) -> Result<DailyMatrix> {
    if matrices.len() != period {
        return Err(Error::DimensionMismatch {
            expected: period,
            got: matrices.len(),
        });
    }
    let q = compose(matrices)?.ok_or(Error::DimensionMismatch {
        expected: period,
        got: 0,
    })?;
    Ok(DailyMatrix {
        q,
        first_step: matrices[0].t,
        last_step: matrices[matrices.len() - 1].t,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub population: PopulationVector,
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration from the uniform vector, renormalized to unit mass each round, stopping once
/// `||Q p - p||_1 <= tol`.
pub fn fixed_point(daily: &DailyMatrix, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    let n = daily.q.nrows();
    let mut p = DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for iteration in 0..=max_iter {
        let mut next = &daily.q * &p;
        let mass = next.sum();
        next /= mass;
        residual = (&next - &p).lp_norm(1);
        p = next;
        if residual <= tol {
            if p.iter().any(|v| *v <= 0.0) {
                return Err(Error::DataIntegrity(
                    "fixed point has non-positive entries; daily matrix is reducible".into(),
                ));
            }
            return Ok(FixedPoint {
                population: PopulationVector {
                    t: daily.first_step,
                    p: p.iter().copied().collect(),
                },
                residual,
                iterations: iteration + 1,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> TransitionMatrix {
        TransitionMatrix::from_columns(0, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn two_node_step() {
        let p = PopulationVector { t: 0, p: vec![1.0, 0.0] };
        assert_eq!(step(&p, &half()).unwrap().p, vec![0.5, 0.5]);
    }

    #[test]
    fn doubly_stochastic_preserves_uniform() {
        let m = TransitionMatrix::from_columns(
            0,
            &[vec![0.6, 0.3, 0.1], vec![0.3, 0.5, 0.2], vec![0.1, 0.2, 0.7]],
        )
        .unwrap();
        let p = PopulationVector::uniform(3, 0);
        let next = step(&p, &m).unwrap();
        for v in next.p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = PopulationVector::uniform(3, 0);
        assert!(matches!(step(&p, &half()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_matrix_day_is_itself() {
        let m = half();
        let q = compose_day(std::slice::from_ref(&m), 1).unwrap();
        assert_eq!(&q.q, m.as_matrix());
    }

    #[test]
    fn two_step_product_by_hand() {
        let m1 = TransitionMatrix::from_columns(0, &[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let m2 = TransitionMatrix::from_columns(1, &[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let q = compose_day(&[m1, m2], 2).unwrap().q;
        // column 0: m2 * (0.9, 0.1) = (0.9*0.7 + 0.1*0.4, 0.9*0.3 + 0.1*0.6)
        // column 1: m2 * (0.2, 0.8) = (0.2*0.7 + 0.8*0.4, 0.2*0.3 + 0.8*0.6)
        let expected = [[0.67, 0.46], [0.33, 0.54]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((q[(i, j)] - expected[i][j]).abs() < 1e-15, "({i}, {j})");
            }
        }
    }

    #[test]
    fn wrong_order_or_count_rejected() {
        let m1 = TransitionMatrix::from_columns(0, &[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let m3 = TransitionMatrix::from_columns(2, &[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert!(matches!(
            compose_day(&[m1.clone(), m3], 2),
            Err(Error::StepOrder { expected: 1, got: 2 })
        ));
        assert!(compose_day(&[m1], 2).is_err());
    }

    #[test]
    fn symmetric_fixed_point() {
        let q = compose_day(&[half()], 1).unwrap();
        let fp = fixed_point(&q, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(fp.population.p, vec![0.5, 0.5]);
    }

    #[test]
    fn three_node_matches_linear_solve() {
        let m = TransitionMatrix::from_columns(
            0,
            &[vec![0.5, 0.3, 0.2], vec![0.1, 0.8, 0.1], vec![0.25, 0.25, 0.5]],
        )
        .unwrap();
        let q = compose_day(std::slice::from_ref(&m), 1).unwrap();
        let fp = fixed_point(&q, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        // (Q - I) p = 0 with the last row replaced by sum(p) = 1
        let mut a = m.as_matrix() - DMatrix::<f64>::identity(3, 3);
        for j in 0..3 {
            a[(2, j)] = 1.0;
        }
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let exact = a.lu().solve(&b).unwrap();
        for i in 0..3 {
            assert!((fp.population.p[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        // slow-mixing chain, tiny iteration budget
        let m = TransitionMatrix::from_columns(0, &[vec![0.999, 0.001], vec![0.0005, 0.9995]]).unwrap();
        let q = compose_day(&[m], 1).unwrap();
        match fixed_point(&q, 1e-14, 3) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}

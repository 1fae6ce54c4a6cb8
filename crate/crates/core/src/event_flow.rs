//! Monotone shot→sentence alignment.
//!
//! Every shot is attached to at most one sentence, a sentence may take any
//! number of shots, and assigned sentence indices never decrease along the
//! shot sequence. Unassigned shots are allowed and contribute nothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{similarity_matrix, FeatureMatrix, Matrix};

/// Largest instance `brute_force_align` accepts.
pub const BRUTE_FORCE_MAX_SHOTS: usize = 8;
pub const BRUTE_FORCE_MAX_SENTENCES: usize = 6;

/// Binary shots x sentences matrix stored as one optional sentence per shot,
/// so the row-sum ≤ 1 constraint holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    sentences: usize,
    shots: Vec<Option<usize>>,
}

impl AssignmentMatrix {
    /// Validates bounds and monotonicity over assigned shots.
    pub fn new(sentences: usize, shots: Vec<Option<usize>>) -> Result<Self> {
        let y = AssignmentMatrix { sentences, shots };
        if let Some(bad) = y.shots.iter().flatten().find(|&&j| j >= sentences) {
            return Err(Error::invalid(format!(
                "sentence index {bad} out of range for {sentences} sentences"
            )));
        }
        if !y.is_monotone() {
            return Err(Error::invalid("assignment violates sentence order"));
        }
        Ok(y)
    }

    pub fn unassigned(shots: usize, sentences: usize) -> Self {
        AssignmentMatrix {
            sentences,
            shots: vec![None; shots],
        }
    }

    /// Reads a dense 0/1 matrix; rejects rows with more than one 1.
    pub fn from_dense(y: &Matrix) -> Result<Self> {
        let mut shots = Vec::with_capacity(y.rows());
        for (i, row) in y.iter_rows().enumerate() {
            let mut chosen = None;
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0.0 => {}
                    1.0 if chosen.is_none() => chosen = Some(j),
                    1.0 => return Err(Error::invalid(format!("row {i} has more than one 1"))),
                    _ => return Err(Error::invalid(format!("entry ({i},{j}) is not binary"))),
                }
            }
            shots.push(chosen);
        }
        AssignmentMatrix::new(y.cols(), shots)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut y = Matrix::zeros(self.shots.len(), self.sentences);
        for (i, j) in self.shots.iter().enumerate() {
            if let Some(j) = j {
                y.set(i, *j, 1.0);
            }
        }
        y
    }

    pub fn num_shots(&self) -> usize {
        self.shots.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences
    }

    pub fn sentence_of(&self, shot: usize) -> Option<usize> {
        self.shots[shot]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.shots
    }

    /// First-nonzero-column is nondecreasing over assigned rows; zero rows
    /// are skipped.
    pub fn is_monotone(&self) -> bool {
        self.shots
            .iter()
            .flatten()
            .zip(self.shots.iter().flatten().skip(1))
            .all(|(a, b)| a <= b)
    }

    /// `Σ y_ij S[i][j]`.
    pub fn score(&self, s: &Matrix) -> f64 {
        self.shots
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| s.get(i, j)))
            .sum()
    }

    /// Inclusive shot ranges `(first, last)` per sentence, `None` where a
    /// sentence received no shot.
    pub fn sentence_ranges(&self) -> Vec<Option<(usize, usize)>> {
        let mut ranges = vec![None; self.sentences];
        for (i, j) in self.shots.iter().enumerate() {
            if let Some(j) = *j {
                let r: &mut Option<(usize, usize)> = &mut ranges[j];
                *r = Some(match *r {
                    None => (i, i),
                    Some((a, _)) => (a, i),
                });
            }
        }
        ranges
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub score: f64,
    pub assignment: AssignmentMatrix,
}

fn validate_scores(s: &Matrix) -> Result<()> {
    if s.is_empty() {
        return Err(Error::invalid("similarity matrix must be non-empty"));
    }
    if !s.is_finite() {
        return Err(Error::invalid("similarity matrix has a non-finite entry"));
    }
    Ok(())
}

/// Optimal monotone alignment in O(N·M).
///
/// `D[i][j]` is the best score using the first `i` shots and first `j`
/// sentences: `max(D[i-1][j], D[i-1][j] + S[i][j], D[i][j-1])`.
pub fn align(s: &Matrix) -> Result<AlignmentResult> {
    validate_scores(s)?;
    let (n, m) = (s.rows(), s.cols());
    let w = m + 1;
    let mut d = vec![0.0f64; (n + 1) * w];
    for i in 1..=n {
        for j in 1..=m {
            let skip = d[(i - 1) * w + j];
            let take = skip + s.get(i - 1, j - 1);
            let left = d[i * w + j - 1];
            d[i * w + j] = take.max(skip).max(left);
        }
    }

    // Traceback. Ties prefer assigning the shot, then a smaller sentence.
    let mut shots = vec![None; n];
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let here = d[i * w + j];
        let skip = d[(i - 1) * w + j];
        if skip + s.get(i - 1, j - 1) == here {
            shots[i - 1] = Some(j - 1);
            i -= 1;
        } else if d[i * w + j - 1] == here {
            j -= 1;
        } else {
            i -= 1;
        }
    }

    Ok(AlignmentResult {
        score: d[n * w + m],
        assignment: AssignmentMatrix {
            sentences: m,
            shots,
        },
    })
}

/// Exhaustive search over every monotone shot map; the reference for
/// [`align`].
pub fn brute_force_align(s: &Matrix) -> Result<AlignmentResult> {
    validate_scores(s)?;
    let (n, m) = (s.rows(), s.cols());
    if n > BRUTE_FORCE_MAX_SHOTS || m > BRUTE_FORCE_MAX_SENTENCES {
        return Err(Error::SizeLimit(format!(
            "{n}x{m} exceeds brute-force bound {BRUTE_FORCE_MAX_SHOTS}x{BRUTE_FORCE_MAX_SENTENCES}"
        )));
    }

    // Odometer over {unassigned, 0..m} per shot.
    let mut digits = vec![0usize; n];
    let mut best_score = f64::NEG_INFINITY;
    let mut best = vec![None; n];
    loop {
        let map: Vec<Option<usize>> = digits.iter().map(|&d| d.checked_sub(1)).collect();
        let monotone = map
            .iter()
            .flatten()
            .zip(map.iter().flatten().skip(1))
            .all(|(a, b)| a <= b);
        if monotone {
            let score: f64 = map
                .iter()
                .enumerate()
                .filter_map(|(i, j)| j.map(|j| s.get(i, j)))
                .sum();
            if score > best_score {
                best_score = score;
                best = map;
            }
        }
        let mut k = 0;
        while k < n {
            digits[k] += 1;
            if digits[k] <= m {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    Ok(AlignmentResult {
        score: best_score,
        assignment: AssignmentMatrix {
            sentences: m,
            shots: best,
        },
    })
}

/// Event-flow score of a paragraph (sentence features `phi`) against a
/// segment (shot features `psi`). With `normalize`, the score is divided by
/// the shot count.
pub fn efm_score(phi: &FeatureMatrix, psi: &FeatureMatrix, normalize: bool) -> Result<f64> {
    let s = similarity_matrix(phi, psi)?;
    let r = align(&s)?;
    Ok(if normalize {
        r.score / psi.rows() as f64
    } else {
        r.score
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::RngSeed;
    use rand::Rng;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn random(rng: &mut impl Rng, n: usize, m: usize) -> Matrix {
        Matrix::from_vec(
            n,
            m,
            (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn diagonal_dominant() {
        let r = align(&mat(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(r.score, 2.0);
        assert_eq!(r.assignment.as_slice(), &[Some(0), Some(1)]);
        assert_eq!(r.assignment.to_dense(), mat(&[&[1.0, 0.0], &[0.0, 1.0]]));
    }

    #[test]
    fn all_negative_leaves_everything_unassigned() {
        let r = align(&mat(&[&[-1.0, -0.5], &[-0.1, -2.0], &[-3.0, -0.2]])).unwrap();
        assert_eq!(r.score, 0.0);
        assert!(r.assignment.as_slice().iter().all(Option::is_none));
    }

    #[test]
    fn crossing_is_rejected() {
        let r = align(&mat(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(r.score, 1.0);
        assert!(r.assignment.is_monotone());
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(align(&Matrix::zeros(0, 3)).is_err());
        assert!(align(&Matrix::zeros(2, 0)).is_err());
        // from_vec refuses NaN, so build a finite matrix and poke it.
        let mut s = Matrix::zeros(1, 1);
        s.as_mut_slice()[0] = f64::NAN;
        assert!(matches!(align(&s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn brute_force_small_cases() {
        let r = brute_force_align(&mat(&[&[0.5]])).unwrap();
        assert_eq!(r.score, 0.5);
        assert_eq!(r.assignment.to_dense(), mat(&[&[1.0]]));
        let r = brute_force_align(&mat(&[&[-0.5]])).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.assignment.to_dense(), mat(&[&[0.0]]));
        assert!(matches!(
            brute_force_align(&Matrix::zeros(9, 2)),
            Err(Error::SizeLimit(_))
        ));
        assert!(brute_force_align(&Matrix::zeros(2, 7)).is_err());
    }

    #[test]
    fn agrees_with_brute_force_on_random() {
        let mut rng = RngSeed(5).rng();
        for (n, m) in [(6, 4), (4, 3), (8, 6), (1, 6), (7, 1)] {
            for _ in 0..20 {
                let s = random(&mut rng, n, m);
                let a = align(&s).unwrap();
                let b = brute_force_align(&s).unwrap();
                assert!((a.score - b.score).abs() < 1e-9, "{n}x{m}");
                assert!((a.score - a.assignment.score(&s)).abs() < 1e-9);
                assert!(a.assignment.is_monotone());
            }
        }
    }

    #[test]
    fn efm_score_examples() {
        let id = mat(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(efm_score(&id, &id, false).unwrap(), 3.0);
        assert_eq!(efm_score(&id, &id, true).unwrap(), 1.0);
        assert_eq!(efm_score(&id, &Matrix::zeros(4, 3), false).unwrap(), 0.0);
        assert!(efm_score(&id, &Matrix::zeros(4, 2), false).is_err());
    }

    #[test]
    fn efm_score_matches_brute_force_pipeline() {
        let mut rng = RngSeed(17).rng();
        let phi = random(&mut rng, 3, 5);
        let psi = random(&mut rng, 6, 5);
        let mut s = Matrix::zeros(6, 3);
        for i in 0..6 {
            for j in 0..3 {
                s.set(i, j, (0..5).map(|k| psi.get(i, k) * phi.get(j, k)).sum());
            }
        }
        let expect = brute_force_align(&s).unwrap().score;
        assert!((efm_score(&phi, &psi, false).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn assignment_validation() {
        assert!(AssignmentMatrix::new(2, vec![Some(1), None, Some(0)]).is_err());
        assert!(AssignmentMatrix::new(2, vec![Some(2)]).is_err());
        let y = AssignmentMatrix::new(3, vec![Some(0), None, Some(0), Some(2)]).unwrap();
        assert_eq!(y.sentence_ranges(), vec![Some((0, 2)), None, Some((3, 3))]);
        assert_eq!(AssignmentMatrix::from_dense(&y.to_dense()).unwrap(), y);
        assert!(AssignmentMatrix::from_dense(&mat(&[&[1.0, 1.0]])).is_err());
        assert!(AssignmentMatrix::from_dense(&mat(&[&[0.5, 0.0]])).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn optimal_and_feasible(n in 1usize..7, m in 1usize..5, seed in any::<u64>()) {
                let mut rng = RngSeed(seed).rng();
                let s = random(&mut rng, n, m);
                let a = align(&s).unwrap();
                let b = brute_force_align(&s).unwrap();
                prop_assert!((a.score - b.score).abs() < 1e-9);
                prop_assert!(a.assignment.is_monotone());
                prop_assert!((a.score - a.assignment.score(&s)).abs() < 1e-9);
            }

            #[test]
            fn adding_positive_mass_never_hurts(
                n in 1usize..7, m in 1usize..5, seed in any::<u64>(),
                bump in 0.001f64..2.0,
            ) {
                let mut rng = RngSeed(seed).rng();
                let s = random(&mut rng, n, m);
                let (i, j) = (rng.random_range(0..n), rng.random_range(0..m));
                let mut t = s.clone();
                t.set(i, j, s.get(i, j) + bump);
                prop_assert!(align(&t).unwrap().score >= align(&s).unwrap().score);
            }
        }
    }
}

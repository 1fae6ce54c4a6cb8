use crate::error::{Error, Result};
use crate::feature::Matrix;

fn check_square(scores: &Matrix) -> Result<usize> {
    if scores.rows() != scores.cols() {
        return Err(Error::invalid(format!(
            "score matrix must be square, got {}x{}",
            scores.rows(),
            scores.cols()
        )));
    }
    Ok(scores.rows())
}

/// Bidirectional hinge ranking loss over in-batch negatives.
///
/// `scores[q][p]` is the score of segment `q` against paragraph `p`; the
/// diagonal holds the true pairs. Both the other segments of each paragraph
/// and the other paragraphs of each segment must trail the true pair by at
/// least `alpha`.
pub fn ranking_loss(scores: &Matrix, alpha: f64) -> Result<f64> {
    Ok(ranking_loss_with_grad(scores, alpha)?.0)
}

/// Loss and `d loss / d scores`. The hinge subgradient at zero is zero.
pub fn ranking_loss_with_grad(scores: &Matrix, alpha: f64) -> Result<(f64, Matrix)> {
    let b = check_square(scores)?;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(b, b);
    for i in 0..b {
        let pos = scores.get(i, i);
        for j in (0..b).filter(|&j| j != i) {
            // other segment j for paragraph i
            let h = scores.get(j, i) - pos + alpha;
            if h > 0.0 {
                loss += h;
                grad.set(j, i, grad.get(j, i) + 1.0);
                grad.set(i, i, grad.get(i, i) - 1.0);
            }
            // other paragraph j for segment i
            let h = scores.get(i, j) - pos + alpha;
            if h > 0.0 {
                loss += h;
                grad.set(i, j, grad.get(i, j) + 1.0);
                grad.set(i, i, grad.get(i, i) - 1.0);
            }
        }
    }
    Ok((loss, grad))
}

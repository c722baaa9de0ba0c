//! Temperature-scaled contrastive loss on projected representations.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::hypothesis::TripletSet;

fn row_cosine(rows: &Array2<f64>, i: usize, j: usize) -> f64 {
    let a = rows.row(i);
    let b = rows.row(j);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(&b) / (na * nb)
}

/// Contrastive loss of a triplet over row vectors:
/// `-sum_p log( exp(cos(A,p)/tau) / sum_n exp(cos(A,n)/tau) )`,
/// with the softmax denominator running over the negatives only.
///
/// Rows with zero norm contribute similarity 0.
pub fn ntxent_loss(rows: &Array2<f64>, triplet: &TripletSet, tau: f64) -> Result<f64> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "temperature {tau} must be positive"
        )));
    }
    if triplet.positives.is_empty() || triplet.negatives.is_empty() {
        return Err(CoreError::InvalidArgument(
            "triplet needs positives and negatives".into(),
        ));
    }
    let t_len = rows.nrows();
    if triplet.anchor >= t_len
        || triplet.positives.iter().any(|&p| p >= t_len)
        || triplet.negatives.iter().any(|n| n.frame >= t_len)
    {
        return Err(CoreError::Shape(format!(
            "triplet frame out of range for {t_len} rows"
        )));
    }

    let mut denom = 0.0f64;
    for n in &triplet.negatives {
        denom += (row_cosine(rows, triplet.anchor, n.frame) / tau).exp();
    }
    let log_denom = denom.ln();

    let mut loss = 0.0f64;
    for &p in &triplet.positives {
        loss -= row_cosine(rows, triplet.anchor, p) / tau - log_denom;
    }
    Ok(loss)
}

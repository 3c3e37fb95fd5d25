use crate::models::softplus;

/// `-[w y log s(z) + (1 - y) log(1 - s(z))]` in overflow-free softplus form.
pub fn weighted_bce(logit: f64, label: bool, pos_weight: f64) -> f64 {
    if label {
        pos_weight * softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Batch mean of [`weighted_bce`].
pub fn weighted_bce_mean(logits: &[f64], labels: &[bool], pos_weight: f64) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| weighted_bce(z, y, pos_weight))
        .sum::<f64>()
        / logits.len() as f64
}

//! One-nearest-neighbour prediction by distance or by similarity.

/// Label of the closest training row by Euclidean distance, ties to the
/// lowest index.
pub fn nn_predict(x_train: &[Vec<f64>], y_train: &[f64], x: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, 0);
    for (i, row) in x_train.iter().enumerate() {
        let d: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    y_train[best.1]
}

/// Label of the most similar training sample. `skip` excludes the training
/// position holding the query itself. Ties go to the lowest index.
pub fn simkern_nn_predict(k_row: &[f64], y_train: &[f64], skip: Option<usize>) -> f64 {
    let mut best: Option<(f64, usize)> = None;
    for (i, &s) in k_row.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, i));
        }
    }
    y_train[best.expect("at least one other training sample").1]
}

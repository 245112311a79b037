//! Test-set performance metrics.

pub fn accuracy(y: &[f64], pred: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// `1 - SS_res / SS_tot`. With constant targets the score is 1 for an exact
/// fit and 0 otherwise.
pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1.0, 2.0, 1.0, 2.0], &[1.0, 2.0, 2.0, 2.0]), 0.75);
    }

    #[test]
    fn r_squared_cases() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&y, &y), 1.0);
        assert_eq!(r_squared(&y, &[2.0; 3]), 0.0);
        assert_eq!(r_squared(&y, &[1.0, 2.0, 2.0]), 0.5);
        assert!(r_squared(&y, &[3.0, 2.0, 1.0]) < 0.0);
    }
}

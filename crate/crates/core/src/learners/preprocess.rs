//! Feature scaling and dummy coding.

/// Per-column `[min, max]` ranges learned from a reference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub ranges: Vec<Option<(f64, f64)>>,
}

impl FeatureScaler {
    /// Columns with `numeric[c] == false` are passed through untouched.
    pub fn fit(x: &[Vec<f64>], numeric: &[bool]) -> Self {
        let p = numeric.len();
        let ranges = (0..p)
            .map(|c| {
                numeric[c].then(|| {
                    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[c]), hi.max(r[c]))
                    })
                })
            })
            .collect();
        Self { ranges }
    }

    /// Maps each numeric column to `(v - min) / (max - min)`; constant
    /// columns map to 0.
    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(&self.ranges)
                    .map(|(&v, r)| match *r {
                        Some((lo, hi)) if hi > lo => (v - lo) / (hi - lo),
                        Some(_) => 0.0,
                        None => v,
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn scale_features(reference: &[Vec<f64>], x: &[Vec<f64>], numeric: &[bool]) -> Vec<Vec<f64>> {
    FeatureScaler::fit(reference, numeric).transform(x)
}

/// Replaces every categorical column by one indicator column per distinct
/// value (in ascending order), keeping column positions.
pub fn one_hot(x: &[Vec<f64>], categorical: &[bool]) -> Vec<Vec<f64>> {
    let p = categorical.len();
    let levels: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            if !categorical[c] {
                return Vec::new();
            }
            let mut v: Vec<f64> = x.iter().map(|r| r[c]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    x.iter()
        .map(|row| {
            let mut out = Vec::with_capacity(row.len());
            for (c, &v) in row.iter().enumerate() {
                if categorical[c] {
                    out.extend(levels[c].iter().map(|&l| if l == v { 1.0 } else { 0.0 }));
                } else {
                    out.push(v);
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_and_constant_columns() {
        let x = vec![vec![2.0, 5.0], vec![4.0, 5.0], vec![6.0, 5.0]];
        let s = scale_features(&x, &x, &[true, true]);
        assert_eq!(s, vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]]);
        assert_eq!(scale_features(&s, &s, &[true, true]), s);
    }

    #[test]
    fn dummy_coding() {
        let x: Vec<Vec<f64>> = (0..19).map(|i| vec![0.5, i as f64]).collect();
        let h = one_hot(&x, &[false, true]);
        assert!(h.iter().all(|r| r.len() == 20 && r[0] == 0.5));
        assert!(h
            .iter()
            .enumerate()
            .all(|(i, r)| r[1 + i] == 1.0 && r[1..].iter().sum::<f64>() == 1.0));
        let b = one_hot(&[vec![0.0], vec![1.0]], &[true]);
        assert_eq!(b, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
}

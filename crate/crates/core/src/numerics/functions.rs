use super::DenseMatrix;

/// Logistic sigmoid, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the sigmoid, `s(x)(1 − s(x))`.
#[inline]
pub fn sigmoid_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Max-shifted softmax of one row into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        softmax_into(logits.row(i), out.row_mut(i));
    }
    out
}

/// `log Σ exp(row)` with max shifting.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 1.0 - 1e-15);
        // 40-digit reference value of 1/(1+e^-0.2)
        assert!((sigmoid(0.2) - 0.549_833_997_312_477_908_559_152_541_839_176).abs() < 1e-15);
        assert!(sigmoid(-700.0) > 0.0 && sigmoid(-700.0).is_finite());
        assert_eq!(sigmoid(700.0), 1.0);
    }

    #[test]
    fn softmax_uniform_and_shift() {
        let z = DenseMatrix::zeros(1, 4);
        for &p in softmax_rows(&z).row(0) {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let b = a.map(|x| x + 123.5);
        let pa = softmax_rows(&a);
        let pb = softmax_rows(&b);
        assert!(pa.max_abs_diff(&pb) < 1e-15);

        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for (k, x) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((pa.get(0, k) - x.exp() / denom).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn softmax_rows_sum_to_one(row in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let m = DenseMatrix::from_rows(&[row]).unwrap();
            let p = softmax_rows(&m);
            let s: f64 = p.row(0).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

//! Vector reductions used for pooling.

/// Element-wise mean of equally long vectors. Accumulates in f64.
/// Returns an empty vector for empty input.
pub fn mean_f32(vectors: &[&[f32]]) -> Vec<f32> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0f64; first.len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += *x as f64;
        }
    }
    let n = vectors.len() as f64;
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

pub fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let n = vectors.len() as f64;
    sum(vectors).into_iter().take(first.len()).map(|s| s / n).collect()
}

pub fn sum(vectors: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vecs(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, dim), 1..8)
    }

    #[test]
    fn mean_of_two() {
        assert_eq!(mean_f32(&[&[1.0, 2.0], &[3.0, 6.0]]), vec![2.0, 4.0]);
        assert!(mean_f32(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn mean_is_sum_over_count(vs in vecs(5)) {
            let m = mean(&vs);
            let s = sum(&vs);
            for (a, b) in m.iter().zip(&s) {
                prop_assert!((a * vs.len() as f64 - b).abs() < 1e-9);
            }
        }

        #[test]
        fn mean_ignores_order(mut vs in vecs(4)) {
            let m = mean(&vs);
            vs.reverse();
            let r = mean(&vs);
            for (a, b) in m.iter().zip(&r) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn mean_is_within_bounds(vs in vecs(3)) {
            let m = mean(&vs);
            for (i, x) in m.iter().enumerate() {
                let lo = vs.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let hi = vs.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*x >= lo - 1e-9 && *x <= hi + 1e-9);
            }
        }

        #[test]
        fn f32_mean_matches_f64_mean(vs in vecs(6)) {
            let as32: Vec<Vec<f32>> = vs.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect();
            let refs: Vec<&[f32]> = as32.iter().map(Vec::as_slice).collect();
            let back: Vec<Vec<f64>> = as32.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
            let m32 = mean_f32(&refs);
            let m64 = mean(&back);
            for (a, b) in m32.iter().zip(&m64) {
                prop_assert!((*a as f64 - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
        }
    }
}

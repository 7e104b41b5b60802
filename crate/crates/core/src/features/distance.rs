use crate::error::{Error, Result};

/// Squared Euclidean distance, accumulated in `f64`.
pub fn sq_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(sq_distance_unchecked(a, b))
}

/// Caller guarantees equal lengths; extra elements of the longer slice are ignored.
#[inline]
pub fn sq_distance_unchecked(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &[f32], b: &[f32]) -> f64 {
        let mut total = 0.0f64;
        for i in 0..a.len() {
            let d = a[i] as f64 - b[i] as f64;
            total += d * d;
        }
        total
    }

    #[test]
    fn hand_values() {
        assert_eq!(sq_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sq_distance(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 8.0);
        assert!(matches!(
            sq_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    proptest! {
        #[test]
        fn matches_naive_loop_and_is_symmetric(
            pair in (1usize..64).prop_flat_map(|n| (
                proptest::collection::vec(-100f32..100.0, n),
                proptest::collection::vec(-100f32..100.0, n),
            ))
        ) {
            let (a, b) = pair;
            let d = sq_distance(&a, &b).unwrap();
            let oracle = naive(&a, &b);
            prop_assert!((d - oracle).abs() <= 1e-6 * oracle.max(1.0));
            prop_assert_eq!(d, sq_distance(&b, &a).unwrap());
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d == 0.0, a == b);
        }
    }
}

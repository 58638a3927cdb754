use super::{Dimension, QuditError};

fn check_probability(x: f64) -> Result<(), QuditError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(QuditError::Domain(x))
    }
}

/// `-x log2(x)` with the continuous extension at 0.
fn xlog2x(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Binary entropy `h(x) = -x log2 x - (1-x) log2(1-x)` in bits.
pub fn binary_entropy(x: f64) -> Result<f64, QuditError> {
    check_probability(x)?;
    Ok(-xlog2x(x) - xlog2x(1.0 - x))
}

/// Symbol entropy of a 4-outcome channel with error rate `x` spread
/// uniformly over the three wrong symbols:
/// `H(x) = -x log2(x/3) - (1-x) log2(1-x)`.
pub fn shannon_entropy_4d(x: f64) -> Result<f64, QuditError> {
    check_probability(x)?;
    let wrong = if x == 0.0 { 0.0 } else { -x * (x / 3.0).log2() };
    Ok(wrong - xlog2x(1.0 - x))
}

/// `h` for `d = 2`, `H` for `d = 4`.
pub fn symbol_entropy(dimension: Dimension, x: f64) -> Result<f64, QuditError> {
    match dimension {
        Dimension::Two => binary_entropy(x),
        Dimension::Four => shannon_entropy_4d(x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn limits_and_maxima() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(shannon_entropy_4d(0.0).unwrap(), 0.0);
        assert!((shannon_entropy_4d(0.75).unwrap() - 2.0).abs() < 1e-12);
        assert!((shannon_entropy_4d(1.0).unwrap() - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(binary_entropy(-0.1), Err(QuditError::Domain(-0.1)));
        assert_eq!(shannon_entropy_4d(1.5), Err(QuditError::Domain(1.5)));
        assert!(binary_entropy(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn binary_entropy_symmetric(x in 0.0f64..=1.0) {
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn binary_entropy_concave(x in 0.0f64..=1.0, y in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let mid = binary_entropy(t * x + (1.0 - t) * y).unwrap();
            let chord = t * binary_entropy(x).unwrap() + (1.0 - t) * binary_entropy(y).unwrap();
            prop_assert!(mid >= chord - 1e-12);
        }

        #[test]
        fn four_dim_entropy_bounded(x in 0.0f64..=1.0) {
            let v = shannon_entropy_4d(x).unwrap();
            prop_assert!(v <= 2.0 + 1e-12);
            if (x - 0.75).abs() > 1e-3 {
                prop_assert!(v < 2.0);
            }
        }

        #[test]
        fn four_dim_dominates_binary(x in 1e-9f64..(1.0 - 1e-9)) {
            prop_assert!(shannon_entropy_4d(x).unwrap() >= binary_entropy(x).unwrap());
        }
    }
}

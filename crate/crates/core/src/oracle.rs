//! Reference DFT and error metrics, independent of any FFT factorisation.

use serde::Serialize;
use thiserror::Error;

/// Complex sample as `(re, im)` in double precision.
pub type Complex = (f64, f64);

/// Naive O(N²) DFT: `X[k] = Σ x[n]·exp(−2πi·nk/N)`.
pub fn dft_reference(input: &[Complex]) -> Vec<Complex> {
    let n = input.len();
    // roots[m] = exp(−2πi·m/N); the exponent nk is reduced mod N, so every term uses an
    // exactly computed root.
    let roots: Vec<Complex> = (0..n)
        .map(|m| {
            let angle = -2.0 * std::f64::consts::PI * m as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            (c, s)
        })
        .collect();
    (0..n)
        .map(|k| {
            let mut acc = (0.0, 0.0);
            let mut m = 0;
            for &(re, im) in input {
                let (c, s) = roots[m];
                acc.0 += re * c - im * s;
                acc.1 += re * s + im * c;
                m += k;
                if m >= n {
                    m -= n;
                }
            }
            acc
        })
        .collect()
}

/// Reverses the base-`radix` digits of `index`.
pub fn digit_reverse(index: usize, radix: usize, digits: usize) -> usize {
    let mut rest = index;
    let mut out = 0;
    for _ in 0..digits {
        out = out * radix + rest % radix;
        rest /= radix;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub max_abs_err: f64,
    /// `max_abs_err` divided by the largest magnitude in the reference vector.
    pub max_rel_err: f64,
    pub rms_err: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("length mismatch: {0} vs {1}")]
pub struct LengthMismatch(pub usize, pub usize);

/// Error of `a` measured against the reference `b`.
pub fn compare(a: &[Complex], b: &[Complex]) -> Result<ErrorStats, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    let mut max_abs = 0.0f64;
    let mut sum_sq = 0.0;
    let mut max_mag = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let e = (x.0 - y.0).hypot(x.1 - y.1);
        max_abs = max_abs.max(e);
        sum_sq += e * e;
        max_mag = max_mag.max(y.0.hypot(y.1));
    }
    let n = a.len().max(1) as f64;
    Ok(ErrorStats {
        max_abs_err: max_abs,
        max_rel_err: if max_mag > 0.0 {
            max_abs / max_mag
        } else {
            max_abs
        },
        rms_err: (sum_sq / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delta_and_constant() {
        let mut x = vec![(0.0, 0.0); 8];
        x[0] = (1.0, 0.0);
        for v in dft_reference(&x) {
            assert!((v.0 - 1.0).abs() < 1e-12 && v.1.abs() < 1e-12);
        }
        let y = dft_reference(&[(1.0, 0.0); 4]);
        assert!((y[0].0 - 4.0).abs() < 1e-12);
        for v in &y[1..] {
            assert!(v.0.abs() < 1e-12 && v.1.abs() < 1e-12);
        }
    }

    #[test]
    fn digit_reverse_examples() {
        assert_eq!(digit_reverse(0, 4, 3), 0);
        assert_eq!(digit_reverse(1, 2, 3), 4);
        assert_eq!(digit_reverse(7, 4, 3), 52);
    }

    #[test]
    fn compare_examples() {
        let a = vec![(1.0, 2.0), (-3.0, 0.5)];
        let s = compare(&a, &a).unwrap();
        assert_eq!((s.max_abs_err, s.max_rel_err, s.rms_err), (0.0, 0.0, 0.0));

        let max = a.iter().map(|v| v.0.hypot(v.1)).fold(0.0, f64::max);
        let mut b = a.clone();
        b[1].0 += 1e-5 * max;
        let s = compare(&b, &a).unwrap();
        assert!((s.max_rel_err - 1e-5).abs() < 1e-12);
        assert_eq!(compare(&a, &a[..1]), Err(LengthMismatch(2, 1)));
    }

    proptest! {
        #[test]
        fn digit_reverse_is_involution(radix in 2usize..17, digits in 0usize..5, seed in any::<u64>()) {
            let n = radix.pow(digits as u32);
            let i = (seed as usize) % n;
            prop_assert_eq!(digit_reverse(digit_reverse(i, radix, digits), radix, digits), i);
        }

        #[test]
        fn parseval(x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..64)) {
            let y = dft_reference(&x);
            let ex: f64 = x.iter().map(|v| v.0 * v.0 + v.1 * v.1).sum();
            let ey: f64 = y.iter().map(|v| v.0 * v.0 + v.1 * v.1).sum();
            let n = x.len() as f64;
            prop_assert!((ey - n * ex).abs() <= 1e-9 * (n * ex).max(1e-300));
        }

        #[test]
        fn f32_rounding_bound(x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..256)) {
            let r: Vec<Complex> = x.iter().map(|v| (v.0 as f32 as f64, v.1 as f32 as f64)).collect();
            let s = compare(&r, &x).unwrap();
            prop_assert!(s.max_rel_err <= 2f64.powi(-20));
        }
    }
}

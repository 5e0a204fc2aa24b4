//! Exponentially scaled modified Bessel functions `e^{-z} I_k(z)`.
//!
//! Orders come in batches because the Green-function integrands need
//! `I_0, ..., I_kmax` at the same argument. Large arguments use the Hankel
//! asymptotic series; everything else uses Miller's backward recurrence
//! normalised by `e^{-z}(I_0 + 2 Σ I_k) = 1`.

const ASYMPTOTIC_MIN_Z: f64 = 30.0;

/// `e^{-z} I_k(z)` for any integer order `k` (with `I_{-k} = I_k`) and `z ≥ 0`.
pub fn bessel_i_scaled(k: i64, z: f64) -> f64 {
    let k = k.unsigned_abs() as usize;
    let mut out = vec![0.0; k + 1];
    bessel_i_scaled_orders(z, &mut out);
    out[k]
}

/// Fills `out[k] = e^{-z} I_k(z)` for `k = 0..out.len()`.
pub fn bessel_i_scaled_orders(z: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    assert!(z >= 0.0 && z.is_finite(), "bessel argument must be finite and nonnegative, got {z}");
    if z == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    let kmax = out.len() - 1;
    if z >= ASYMPTOTIC_MIN_Z && z >= (kmax * kmax) as f64 && asymptotic(z, out) {
        return;
    }
    miller(z, out);
}

fn asymptotic(z: f64, out: &mut [f64]) -> bool {
    let pre = 1.0 / (2.0 * std::f64::consts::PI * z).sqrt();
    for (k, slot) in out.iter_mut().enumerate() {
        let mu = 4.0 * (k * k) as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut converged = false;
        for m in 1..200 {
            let odd = (2 * m - 1) as f64;
            let next = -term * (mu - odd * odd) / (8.0 * m as f64 * z);
            if next == 0.0 {
                converged = true;
                break;
            }
            if next.abs() > term.abs() {
                break;
            }
            sum += next;
            term = next;
            if term.abs() < 1e-17 * sum.abs() {
                converged = true;
                break;
            }
        }
        if !converged {
            return false;
        }
        *slot = pre * sum;
    }
    true
}

fn miller(z: f64, out: &mut [f64]) {
    let kmax = out.len() - 1;
    let start = kmax.max(z.ceil() as usize) + (9.0 * z.sqrt()).ceil() as usize + 30;
    let two_over_z = 2.0 / z;
    let mut above = 0.0_f64;
    let mut cur = 1e-280_f64;
    let mut sum = 0.0_f64;
    out.fill(0.0);
    for n in (1..=start).rev() {
        if n <= kmax {
            out[n] = cur;
        }
        sum += 2.0 * cur;
        let below = n as f64 * two_over_z * cur + above;
        above = cur;
        cur = below;
        if cur > 1e250 {
            let s = 1e-250;
            cur *= s;
            above *= s;
            sum *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // e^{-z} I_k(z) = (1/π) ∫_0^π e^{z(cos θ - 1)} cos(kθ) dθ; the trapezoid rule
    // on this periodic integrand converges geometrically.
    fn trapezoid_oracle(k: i64, z: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let mut s = 0.0;
        for j in 0..=n {
            let th = j as f64 * h;
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            s += w * (z * (th.cos() - 1.0)).exp() * (k as f64 * th).cos();
        }
        s * h / PI
    }

    #[test]
    fn trivial_values() {
        assert_eq!(bessel_i_scaled(0, 0.0), 1.0);
        assert_eq!(bessel_i_scaled(3, 0.0), 0.0);
        assert_eq!(bessel_i_scaled(-2, 1.5), bessel_i_scaled(2, 1.5));
    }

    #[test]
    fn matches_integral_representation() {
        for &(k, z) in &[(0, 0.5), (1, 1.0), (2, 1.5), (3, 4.0), (0, 12.0), (4, 25.0), (1, 29.9), (0, 31.0), (2, 60.0)] {
            let a = bessel_i_scaled(k, z);
            let b = trapezoid_oracle(k, z);
            assert!(((a - b) / b).abs() < 1e-12, "k={k} z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn reference_values() {
        // Values from an independent library implementation (Cephes/AMOS).
        let cases = [
            (0, 1.0, 0.4657596075936404),
            (1, 1.0, 0.20791041534970842),
            (2, 1.5, 0.0753810924929241),
            (5, 0.3, 4.705598546404024e-07),
            (0, 40.0, 0.06327827987523534),
            (3, 40.0, 0.05646681223229075),
            (10, 7.0, 0.00020150772410013423),
            (0, 1e4, 0.0039894726746047314),
            (2, 250.0, 0.025042421940997817),
            (20, 3.0, 7.572443832391644e-17),
            (1, 0.001, 0.0004995003123542212),
        ];
        for (k, z, want) in cases {
            let got = bessel_i_scaled(k, z);
            assert!(((got - want) / want).abs() < 1e-12, "k={k} z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn branches_agree_at_switch() {
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        for &z in &[30.0, 45.0, 80.0, 200.0] {
            assert!(asymptotic(z, &mut a));
            miller(z, &mut b);
            for k in 0..4 {
                assert!(((a[k] - b[k]) / b[k]).abs() < 1e-13, "z={z} k={k}");
            }
        }
    }

    #[test]
    fn neumann_sum_is_one() {
        let mut o = vec![0.0; 200];
        for &z in &[0.01, 0.7, 3.0, 19.0] {
            bessel_i_scaled_orders(z, &mut o);
            let s: f64 = o[0] + 2.0 * o[1..].iter().sum::<f64>();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    proptest::proptest! {
        #[test]
        fn positive_and_decreasing_in_order(z in 1e-3f64..500.0, k in 0i64..12) {
            let a = bessel_i_scaled(k, z);
            let b = bessel_i_scaled(k + 1, z);
            proptest::prop_assert!(a > 0.0);
            proptest::prop_assert!(b < a);
        }
    }
}

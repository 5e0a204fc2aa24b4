//! Adaptive Gauss–Kronrod (7/15) integration on finite intervals and the
//! half-line.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Numerical treatment of a half-line integral `∫_0^∞`.
///
/// `[0, upper_cutoff]` is integrated directly; the remainder `[upper_cutoff, ∞)`
/// is mapped onto `(0, 1]` by `t = T / w²` and integrated the same way, so no
/// truncation error is incurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub upper_cutoff: f64,
    pub abs_tol: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { upper_cutoff: 50.0, abs_tol: 1e-11, max_refinements: 4000 }
    }
}

impl QuadratureSpec {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self { abs_tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.upper_cutoff > 0.0) || self.max_refinements == 0 {
            return Err(Error::pre(format!("invalid quadrature spec {self:?}")));
        }
        Ok(())
    }
}

/// An integral value with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate::new(self.value + o.value, self.error + o.error)
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment { a, b, value: kron * h, error: ((kron - gauss) * h).abs() }
}

/// Globally adaptive integration of `f` over `[a, b]`. `max_refinements`
/// bounds the number of interval bisections.
pub fn integrate<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_refinements: usize,
) -> Result<Estimate> {
    let first = gk15(f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut refinements = 0;
    while error > abs_tol {
        if refinements >= max_refinements {
            return Err(Error::Accuracy { achieved: error, requested: abs_tol });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(f, worst.a, mid);
        let right = gk15(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        refinements += 1;
        if refinements % 64 == 0 {
            // Resum to shed accumulated cancellation in the running totals.
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
    if !value.is_finite() {
        return Err(Error::numeric("integrand produced a non-finite value", f64::NAN));
    }
    Ok(Estimate::new(value, error))
}

/// `∫_0^∞ f(t) dt` following `spec`; half of the tolerance goes to each piece.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: &F, spec: &QuadratureSpec) -> Result<Estimate> {
    spec.validate()?;
    let t = spec.upper_cutoff;
    let tol = 0.5 * spec.abs_tol;
    let head = integrate(f, 0.0, t, tol, spec.max_refinements)?;
    let mapped = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let tt = t / (w * w);
        let v = f(tt);
        if v == 0.0 {
            0.0
        } else {
            v * 2.0 * t / (w * w * w)
        }
    };
    let tail = integrate(&mapped, 0.0, 1.0, tol, spec.max_refinements)?;
    Ok(head + tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(&|x: f64| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-14, 10).unwrap();
        assert!((e.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn half_line_power_tail() {
        // ∫_0^∞ (1+t)^{-5/2} dt = 2/3
        let spec = QuadratureSpec { upper_cutoff: 3.0, abs_tol: 1e-12, max_refinements: 500 };
        let e = integrate_half_line(&|t: f64| (1.0 + t).powf(-2.5), &spec).unwrap();
        assert!((e.value - 2.0 / 3.0).abs() < 1e-12);
        assert!(e.error <= 1e-12);
    }

    #[test]
    fn half_line_exponential() {
        let e = integrate_half_line(&|t: f64| t * (-t).exp(), &QuadratureSpec::default()).unwrap();
        assert!((e.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn refinement_cap_reports_achieved_error() {
        let err = integrate(&|x: f64| x.abs().sqrt().recip(), 0.0, 1.0, 1e-15, 3).unwrap_err();
        assert!(matches!(err, Error::Accuracy { achieved, .. } if achieved > 1e-15));
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = QuadratureSpec { abs_tol: 0.0, ..QuadratureSpec::default() };
        assert!(integrate_half_line(&|t: f64| (-t).exp(), &spec).is_err());
    }
}

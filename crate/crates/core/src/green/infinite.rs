//! Infinite-volume Green functions via the Bessel representation
//! `g(x) = ∫ e^{-t} ∏ I_{x_i}(t/d) dt`, `G(x) = ∫ t e^{-t} ∏ I_{x_i}(t/d) dt`.

use crate::bessel::bessel_i_scaled_orders;
use crate::error::{Error, Result};
use crate::lattice::LatticeVector;
use crate::quadrature::{integrate_half_line, Estimate, QuadratureSpec};

pub const MIN_DIM: usize = 5;

/// `∏_i e^{-z} I_{x_i}(z)` evaluated with one Bessel batch.
pub(crate) fn bessel_product(abs_coords: &[usize], z: f64, buf: &mut Vec<f64>) -> f64 {
    let kmax = abs_coords.iter().copied().max().unwrap_or(0);
    buf.resize(kmax + 1, 0.0);
    bessel_i_scaled_orders(z, buf);
    abs_coords.iter().map(|&k| buf[k]).product()
}

fn abs_coords(x: &LatticeVector) -> Result<Vec<usize>> {
    if x.dim() < MIN_DIM {
        return Err(Error::pre(format!("dimension {} < {MIN_DIM}", x.dim())));
    }
    Ok(x.coords().iter().map(|c| c.unsigned_abs() as usize).collect())
}

fn green_moment(x: &LatticeVector, spec: &QuadratureSpec, power: i32) -> Result<Estimate> {
    let ks = abs_coords(x)?;
    let d = ks.len() as f64;
    let f = |t: f64| {
        let mut buf = Vec::new();
        let p = bessel_product(&ks, t / d, &mut buf);
        if power == 0 { p } else { t.powi(power) * p }
    };
    integrate_half_line(&f, spec)
}

/// Simple-random-walk Green function `g(x)`.
pub fn green_simple(x: &LatticeVector, spec: &QuadratureSpec) -> Result<Estimate> {
    green_moment(x, spec, 0)
}

/// Bilaplacian Green function `G(x) = Σ_z g(z) g(x - z)`.
pub fn green_bilaplacian(x: &LatticeVector, spec: &QuadratureSpec) -> Result<Estimate> {
    green_moment(x, spec, 1)
}

/// `G(0)` in dimension `d`.
pub fn green_bilaplacian_origin(d: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    green_bilaplacian(&LatticeVector::origin(d), spec)
}

/// `g(0)` in dimension `d`.
pub fn green_simple_origin(d: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    green_simple(&LatticeVector::origin(d), spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[i64]) -> LatticeVector {
        LatticeVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn reference_values_d5() {
        // Independent evaluation with an adaptive quadrature of scipy's `ive`.
        let spec = QuadratureSpec::with_tol(1e-12);
        let g0 = green_simple_origin(5, &spec).unwrap().value;
        let big = green_bilaplacian_origin(5, &spec).unwrap().value;
        assert!((g0 - 1.156308124840231).abs() < 1e-10, "{g0}");
        assert!((big - 1.9349414403823513).abs() < 1e-10, "{big}");
    }

    #[test]
    fn symmetric_under_signed_permutations() {
        let spec = QuadratureSpec::default();
        let a = green_bilaplacian(&v(&[1, 1, 0, 0, 0]), &spec).unwrap().value;
        let b = green_bilaplacian(&v(&[0, 1, 1, 0, 0]), &spec).unwrap().value;
        let c = green_bilaplacian(&v(&[0, -1, 0, 0, 1]), &spec).unwrap().value;
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn origin_ordering() {
        let spec = QuadratureSpec::default();
        for d in [5, 7, 12, 40] {
            let g = green_simple_origin(d, &spec).unwrap().value;
            let big = green_bilaplacian_origin(d, &spec).unwrap().value;
            assert!(big > g && g > 1.0);
        }
    }

    #[test]
    fn low_dimension_rejected() {
        assert!(green_simple(&v(&[0, 0, 0, 0]), &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn one_step_identity() {
        // g(0) = 1 + g(e_1) since Δg = -δ and g is symmetric.
        let spec = QuadratureSpec::with_tol(1e-12);
        let g0 = green_simple(&v(&[0; 6]), &spec).unwrap().value;
        let g1 = green_simple(&v(&[1, 0, 0, 0, 0, 0]), &spec).unwrap().value;
        assert!((g0 - 1.0 - g1).abs() < 1e-10);
    }

    #[test]
    fn bilaplacian_is_laplacian_of_simple() {
        // -ΔG = g at the origin: G(0) - G(e_1) = g(0).
        let spec = QuadratureSpec::with_tol(1e-12);
        let big0 = green_bilaplacian(&v(&[0; 5]), &spec).unwrap().value;
        let big1 = green_bilaplacian(&v(&[1, 0, 0, 0, 0]), &spec).unwrap().value;
        let g0 = green_simple(&v(&[0; 5]), &spec).unwrap().value;
        assert!((big0 - big1 - g0).abs() < 1e-10);
    }
}

use std::collections::HashMap;

use faer::{Col, Mat};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{stream_rng, FieldSample, Geometry, Sampler};
use crate::error::{Error, Result};
use crate::green::green_bilaplacian;
use crate::lattice::{LatticeVector, Window};
use crate::quadrature::QuadratureSpec;

/// Largest site count accepted for the dense factorisation.
pub const MAX_EXACT_SITES: usize = 20_000;
const JITTERS: [f64; 4] = [0.0, 1e-12, 1e-11, 1e-10];

/// Samples with covariance exactly `G(x - y)` on a finite site set, through
/// a dense Cholesky factor of the Gram matrix.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    geometry: Geometry,
    sites: Vec<Vec<i64>>,
    factor: Mat<f64>,
    jitter: f64,
    quadrature_error: f64,
}

impl ExactSampler {
    /// The window `B(0, radius)` in row-major order.
    pub fn window(d: usize, radius: usize, spec: &QuadratureSpec) -> Result<Self> {
        let w = Window::ball(d, radius)?;
        let sites = (0..w.len()).map(|i| w.coords(i)).collect();
        Self::build(Geometry::ExactWindow { d, radius }, sites, spec)
    }

    pub fn sites(sites: Vec<Vec<i64>>, spec: &QuadratureSpec) -> Result<Self> {
        Self::build(Geometry::ExactSites { sites: sites.clone() }, sites, spec)
    }

    fn build(geometry: Geometry, sites: Vec<Vec<i64>>, spec: &QuadratureSpec) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return Err(Error::pre("empty site set"));
        }
        if n > MAX_EXACT_SITES {
            return Err(Error::Resource(format!("{n} sites exceed the dense budget of {MAX_EXACT_SITES}")));
        }
        let d = sites[0].len();
        if sites.iter().any(|s| s.len() != d) {
            return Err(Error::pre("sites of mixed dimension"));
        }
        let mut keys: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut slot = vec![0u32; n * n];
        let mut diff = vec![0i64; d];
        for i in 0..n {
            for j in 0..=i {
                for a in 0..d {
                    diff[a] = (sites[i][a] - sites[j][a]).abs();
                }
                diff.sort_unstable_by(|a, b| b.cmp(a));
                let next = keys.len();
                let k = match keys.get(diff.as_slice()) {
                    Some(&k) => k,
                    None => {
                        keys.insert(diff.clone(), next);
                        next
                    }
                };
                slot[i * n + j] = k as u32;
            }
        }
        let mut ordered: Vec<(Vec<i64>, usize)> = keys.into_iter().collect();
        ordered.sort_by_key(|(_, k)| *k);
        let values = ordered
            .par_iter()
            .map(|(c, _)| green_bilaplacian(&LatticeVector::new(c.clone())?, spec))
            .collect::<Result<Vec<_>>>()?;
        let quadrature_error = values.iter().map(|e| e.error).fold(0.0, f64::max);
        for jitter in JITTERS {
            let gram = Mat::<f64>::from_fn(n, n, |i, j| {
                let (a, b) = if i >= j { (i, j) } else { (j, i) };
                values[slot[a * n + b] as usize].value + if i == j { jitter } else { 0.0 }
            });
            if let Ok(llt) = gram.llt(faer::Side::Lower) {
                let factor = llt.L().to_owned();
                return Ok(Self { geometry, sites, factor, jitter, quadrature_error });
            }
        }
        Err(Error::numeric("Gram matrix not positive definite even with jitter 1e-10", f64::NAN))
    }

    pub fn site_list(&self) -> &[Vec<i64>] {
        &self.sites
    }

    /// Diagonal shift that was needed for the factorisation (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn quadrature_error(&self) -> f64 {
        self.quadrature_error
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.sites.iter().position(|s| s.as_slice() == x)
    }
}

impl Sampler for ExactSampler {
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn sample(&self, seed: u64, stream_id: u64) -> Result<FieldSample> {
        let n = self.sites.len();
        let mut rng = stream_rng(seed, stream_id);
        let z = Col::<f64>::from_fn(n, |_| StandardNormal.sample(&mut rng));
        let x = &self.factor * &z;
        let values = (0..n).map(|i| x[i]).collect();
        Ok(FieldSample { geometry: self.geometry.clone(), values, seed, stream_id })
    }
}

/// `U ∪ ∂₂U` for `U = B(centre, radius)`: every site within Euclidean
/// distance 2 of the box, in row-major order of the enclosing box.
pub fn box_with_double_layer(centre: &[i64], radius: usize) -> Vec<Vec<i64>> {
    let d = centre.len();
    let outer = Window::new(centre.iter().map(|c| c - radius as i64 - 2).collect(), vec![2 * radius + 5; d])
        .expect("valid box");
    (0..outer.len())
        .map(|i| outer.coords(i))
        .filter(|x| {
            let excess: i64 = x
                .iter()
                .zip(centre)
                .map(|(a, c)| {
                    let e = (a - c).abs() - radius as i64;
                    if e > 0 { e * e } else { 0 }
                })
                .sum();
            excess <= 4
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_layer_site_count() {
        // |B(0,1) ∪ ∂₂B(0,1)| in d = 5: the box, face layers at distance 1
        // and 2, and sites leaving the box along 2, 3 or 4 axes at once.
        let s = box_with_double_layer(&[0; 5], 1);
        let faces = 2 * 5 * 81 * 2;
        let two = 10 * 4 * 27;
        let three = 10 * 8 * 9;
        let four = 5 * 16 * 3;
        assert_eq!(s.len(), 243 + faces + two + three + four);
    }

    #[test]
    fn single_site_variance_is_g0() {
        let spec = QuadratureSpec::with_tol(1e-12);
        let s = ExactSampler::sites(vec![vec![0; 5]], &spec).unwrap();
        let g0 = crate::green::green_bilaplacian_origin(5, &spec).unwrap().value;
        assert!((s.factor[(0, 0)] * s.factor[(0, 0)] - g0).abs() < 1e-12);
        assert_eq!(s.jitter(), 0.0);
    }
}

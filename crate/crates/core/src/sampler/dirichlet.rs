use rand_distr::{Distribution, StandardNormal};

use super::{stream_rng, FieldSample, Geometry, Sampler};
use crate::error::{Error, Result};
use crate::green::BoxOperator;

/// Relative residual for the per-sample solve.
const SAMPLE_TOL: f64 = 1e-11;

/// Samples `ℙ_N`, the membrane model on `B(0, N)` with zero data on the
/// double-layer boundary.
///
/// The precision is `M = DᵀD` with `D f = Δf` on `B ∪ ∂B`, so
/// `φ = M^{-1} Dᵀ ζ` has covariance `M^{-1} = G_N` for white noise `ζ`.
/// `Dᵀζ` splits into `L ζ_B` plus an independent diagonal term, since every
/// exterior neighbour touches exactly one site of the box.
#[derive(Debug, Clone)]
pub struct DirichletSampler {
    op: BoxOperator,
    geometry: Geometry,
    boundary_scale: Vec<f64>,
}

impl DirichletSampler {
    pub fn new(radius: usize, d: usize) -> Result<Self> {
        let op = BoxOperator::new(radius, d)?;
        let boundary_scale = op.exterior_weights().iter().map(|w| w.sqrt()).collect();
        Ok(Self { op, geometry: Geometry::DirichletBox { d, radius }, boundary_scale })
    }

    pub fn operator(&self) -> &BoxOperator {
        &self.op
    }
}

impl Sampler for DirichletSampler {
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn sample(&self, seed: u64, stream_id: u64) -> Result<FieldSample> {
        let n = self.op.len();
        let mut rng = stream_rng(seed, stream_id);
        let zeta: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut rhs = vec![0.0; n];
        self.op.laplacian(&zeta, &mut rhs);
        for (r, &s) in rhs.iter_mut().zip(&self.boundary_scale) {
            if s > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                *r += s * z;
            }
        }
        let (values, stats) = self.op.solve(&rhs, SAMPLE_TOL, 2000)?;
        if stats.relative_residual > 1e-9 {
            return Err(Error::numeric("Dirichlet sample solve inaccurate", stats.relative_residual));
        }
        Ok(FieldSample { geometry: self.geometry.clone(), values, seed, stream_id })
    }
}

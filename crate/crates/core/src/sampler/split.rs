use std::collections::HashMap;

use super::{FieldSample, Geometry};
use crate::error::{Error, Result};
use crate::green::BoxOperator;

/// The box `U = B(centre, radius)` used for a conditional split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRegion {
    pub centre: Vec<i64>,
    pub radius: usize,
}

impl SplitRegion {
    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(&self.centre).all(|(a, c)| (a - c).unsigned_abs() as usize <= self.radius)
    }
}

/// `φ = ξ + ψ` with `ξ = E[φ | F_{U^c}]`, over the sample's site list.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSplit {
    pub region: SplitRegion,
    pub xi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Max over `U` of `|Δ²ξ|`.
    pub residual: f64,
}

/// `Δ²f(y)` from point values, with `Δf(x) = (1/2d) Σ_{z∼x} f(z) - f(x)`.
pub fn bilaplacian_at(f: &dyn Fn(&[i64]) -> f64, y: &[i64]) -> f64 {
    let d = y.len();
    let c = 1.0 / (2 * d) as f64;
    let mut p = y.to_vec();
    let lap = |p: &mut Vec<i64>| -> f64 {
        let centre = f(p);
        let mut s = 0.0;
        for a in 0..d {
            p[a] += 1;
            s += f(p);
            p[a] -= 2;
            s += f(p);
            p[a] += 1;
        }
        c * s - centre
    };
    let mut s = 0.0;
    for a in 0..d {
        p[a] += 1;
        s += lap(&mut p);
        p[a] -= 2;
        s += lap(&mut p);
        p[a] += 1;
    }
    c * s - lap(&mut p)
}

enum Lookup<'a> {
    Grid { window: crate::lattice::Window, zero_outside: bool, periodic: bool },
    Sites(HashMap<&'a [i64], usize>),
}

impl Lookup<'_> {
    fn index(&self, x: &[i64]) -> Option<usize> {
        match self {
            Lookup::Grid { window, periodic: true, .. } => Some(window.index_periodic(x)),
            Lookup::Grid { window, .. } => window.index(x),
            Lookup::Sites(m) => m.get(x).copied(),
        }
    }

    fn zero_outside(&self) -> bool {
        matches!(self, Lookup::Grid { zero_outside: true, .. })
    }
}

/// Splits `sample` with respect to `U = region`. Requires every site of
/// `U ∪ ∂₂U` to be known: inside the window, or outside a Dirichlet box
/// where the field vanishes, and no wrap-around on a torus.
pub fn conditional_split(sample: &FieldSample, region: &SplitRegion) -> Result<ConditionalSplit> {
    let (lookup, uw, xi_u) = solve_region(sample, region)?;
    let d = uw.dim();
    let mut x = vec![0i64; d];
    let phi = |p: &[i64]| lookup.index(p).map_or(0.0, |i| sample.values[i]);

    let local = |p: &[i64]| -> usize {
        let q: Vec<i64> = p.iter().zip(&region.centre).map(|(a, c)| a - c).collect();
        uw.index(&q).expect("point inside U")
    };
    let xi_at = |p: &[i64]| if region.contains(p) { xi_u[local(p)] } else { phi(p) };
    let mut residual = 0.0f64;
    for i in 0..uw.len() {
        uw.coords_into(i, &mut x);
        for (a, c) in x.iter_mut().zip(&region.centre) {
            *a += c;
        }
        residual = residual.max(bilaplacian_at(&xi_at, &x).abs());
    }

    let n = sample.values.len();
    let mut xi = sample.values.clone();
    for i in 0..uw.len() {
        uw.coords_into(i, &mut x);
        for (a, c) in x.iter_mut().zip(&region.centre) {
            *a += c;
        }
        if let Some(j) = lookup.index(&x) {
            xi[j] = xi_u[i];
        }
    }
    let psi: Vec<f64> = (0..n).map(|i| sample.values[i] - xi[i]).collect();
    Ok(ConditionalSplit { region: region.clone(), xi, psi, residual })
}

/// `ξ` on `U` only, in row-major order of `B(centre, radius)`, without the residual check.
pub fn conditional_xi(sample: &FieldSample, region: &SplitRegion) -> Result<Vec<f64>> {
    Ok(solve_region(sample, region)?.2)
}

fn solve_region<'a>(
    sample: &'a FieldSample,
    region: &SplitRegion,
) -> Result<(Lookup<'a>, crate::lattice::Window, Vec<f64>)> {
    let d = sample.geometry.dim();
    if region.centre.len() != d {
        return Err(Error::pre("region dimension differs from sample"));
    }
    let lookup = match &sample.geometry {
        Geometry::ExactSites { sites } => {
            Lookup::Sites(sites.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect())
        }
        g => Lookup::Grid {
            window: g.window().expect("grid geometry"),
            zero_outside: matches!(g, Geometry::DirichletBox { .. }),
            periodic: g.is_periodic(),
        },
    };
    if let Geometry::Torus { sides } = &sample.geometry {
        if sides.iter().any(|&l| l < 2 * region.radius + 5) {
            return Err(Error::pre("split region wraps around the torus"));
        }
    }
    let op = BoxOperator::new(region.radius, d)?;
    let uw = op.window().clone();
    let mut x = vec![0i64; d];

    // Every site of U ∪ ∂₂U must resolve; Dirichlet boxes additionally need U inside.
    let margin = crate::lattice::Window::new(
        region.centre.iter().map(|c| c - region.radius as i64 - 2).collect(),
        vec![2 * region.radius + 5; d],
    )?;
    for i in 0..margin.len() {
        margin.coords_into(i, &mut x);
        let excess: i64 = x
            .iter()
            .zip(&region.centre)
            .map(|(a, c)| ((a - c).abs() - region.radius as i64).max(0).pow(2))
            .sum();
        if excess > 4 {
            continue;
        }
        let known = lookup.index(&x).is_some() || (lookup.zero_outside() && !region.contains(&x));
        if !known {
            return Err(Error::pre(format!("site {x:?} of U and its double layer lies outside the sample")));
        }
    }

    let phi = |p: &[i64]| lookup.index(p).map_or(0.0, |i| sample.values[i]);
    let outside = |p: &[i64]| if region.contains(p) { 0.0 } else { phi(p) };
    let mut rhs = vec![0.0; uw.len()];
    for (i, r) in rhs.iter_mut().enumerate() {
        uw.coords_into(i, &mut x);
        for (a, c) in x.iter_mut().zip(&region.centre) {
            *a += c;
        }
        // The stencil only reaches U^c from the outer two layers of U.
        let inner = x.iter().zip(&region.centre).all(|(a, c)| (a - c).unsigned_abs() as usize + 2 <= region.radius);
        if !inner {
            *r = -bilaplacian_at(&outside, &x);
        }
    }
    let (xi_u, _) = op.solve(&rhs, 1e-14, 4000)?;
    Ok((lookup, uw, xi_u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{DirichletSampler, Sampler};

    #[test]
    fn bilaplacian_of_quadratic_vanishes() {
        // Δ of a quadratic is constant, so Δ² vanishes.
        let f = |p: &[i64]| p.iter().map(|&v| (v * v) as f64).sum::<f64>() + p[0] as f64;
        assert!(bilaplacian_at(&f, &[1, 2, -3, 0, 5]).abs() < 1e-12);
        let delta = |p: &[i64]| if p.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
        // Δ²δ(0) = 1 + 1/(2d)·... = 1 + 2d/(2d)² = 1 + 1/(2d).
        assert!((bilaplacian_at(&delta, &[0; 5]) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn split_on_dirichlet_sample() {
        let s = DirichletSampler::new(3, 5).unwrap().sample(1, 0).unwrap();
        let region = SplitRegion { centre: vec![0; 5], radius: 1 };
        let split = conditional_split(&s, &region).unwrap();
        assert!(split.residual < 1e-9);
        let w = s.geometry.window().unwrap();
        for i in 0..w.len() {
            assert!((split.xi[i] + split.psi[i] - s.values[i]).abs() < 1e-12);
            if !region.contains(&w.coords(i)) {
                assert_eq!(split.psi[i], 0.0);
            }
        }
    }

    #[test]
    fn full_box_split_of_dirichlet_sample_is_pure_psi() {
        // With U = B(0,N) and zero data outside, ξ = 0 and ψ = φ.
        let s = DirichletSampler::new(2, 5).unwrap().sample(4, 2).unwrap();
        let split = conditional_split(&s, &SplitRegion { centre: vec![0; 5], radius: 2 }).unwrap();
        assert!(split.xi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn margin_violation_rejected() {
        let s = crate::sampler::ExactSampler::window(5, 1, &crate::QuadratureSpec::default())
            .unwrap()
            .sample(0, 0)
            .unwrap();
        let e = conditional_split(&s, &SplitRegion { centre: vec![0; 5], radius: 1 }).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
    }
}

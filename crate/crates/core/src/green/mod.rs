//! Lattice Green functions: infinite volume (`g`, `G`) by Bessel quadrature,
//! a path-sum oracle, and the finite-volume `g_N`, `G_N`, `Ḡ_N`.

mod finite;
mod infinite;
mod pathsum;
mod table;

use rayon::prelude::*;

pub use finite::{BoxOperator, SolveStats, MAX_DENSE_UNKNOWNS, MAX_UNKNOWNS};
pub use infinite::{
    green_bilaplacian, green_bilaplacian_origin, green_simple, green_simple_origin, MIN_DIM,
};
pub use pathsum::{
    green_oracle_pathsum, green_oracle_pathsum_batch, PathSum, PathWeight, MEMORY_CAP_BYTES,
};
pub use table::{cache_path, GreenKind, GreenTable};

use crate::error::{Error, Result};
use crate::lattice::{canonical_offsets, LatticeVector};
use crate::quadrature::QuadratureSpec;

/// Relative residual used for finite-volume solves.
pub const SOLVE_TOL: f64 = 1e-12;

/// Table of `g` or `G` over all canonical offsets with `|x|_∞ ≤ radius`.
pub fn infinite_table(kind: GreenKind, d: usize, radius: usize, spec: &QuadratureSpec) -> Result<GreenTable> {
    let eval = match kind {
        GreenKind::Simple => green_simple,
        GreenKind::Bilaplacian => green_bilaplacian,
        _ => return Err(Error::pre("infinite_table needs a translation-invariant kind")),
    };
    let entries = canonical_offsets(d, radius as i64)
        .into_par_iter()
        .map(|c| {
            let e = eval(&LatticeVector::new(c)?, spec)?;
            Ok((e.value, e.error))
        })
        .collect::<Result<Vec<_>>>()?;
    GreenTable::from_offsets(kind, d, radius, spec.abs_tol, entries)
}

fn probe_indices(op: &BoxOperator, probes: &[LatticeVector]) -> Result<Vec<usize>> {
    probes
        .iter()
        .map(|p| {
            op.window()
                .index(p.coords())
                .ok_or_else(|| Error::pre(format!("probe {:?} outside B(0,{})", p.coords(), op.radius())))
        })
        .collect()
}

fn rounding_bound(col: &[f64]) -> f64 {
    64.0 * f64::EPSILON * col.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (col.len() as f64).sqrt()
}

/// `G_N(x, ·)` for each probe `x`: the double-layer Dirichlet bilaplacian
/// Green function on `B(0, N)`.
pub fn green_dirichlet_gn(n: usize, d: usize, probes: &[LatticeVector]) -> Result<GreenTable> {
    let op = BoxOperator::new(n, d)?;
    let idx = probe_indices(&op, probes)?;
    let cols = idx
        .par_iter()
        .map(|&i| {
            let (col, stats) = op.dirichlet_column(i, SOLVE_TOL)?;
            if stats.relative_residual > 1e-10 {
                return Err(Error::numeric("G_N residual above 1e-10", stats.relative_residual));
            }
            Ok((col, stats.error_bound))
        })
        .collect::<Result<Vec<_>>>()?;
    GreenTable::from_columns(
        GreenKind::DirichletGN(n),
        d,
        SOLVE_TOL,
        probes.iter().map(|p| p.coords().to_vec()).collect(),
        cols,
    )
}

/// `g_N(x, ·)`: Green function of the walk killed on leaving `B(0, N)`.
pub fn killed_green_gn(n: usize, d: usize, probes: &[LatticeVector]) -> Result<GreenTable> {
    let op = BoxOperator::new(n, d)?;
    let idx = probe_indices(&op, probes)?;
    let cols = idx
        .par_iter()
        .map(|&i| {
            let c = op.killed_column(i);
            let e = rounding_bound(&c);
            (c, e)
        })
        .collect();
    GreenTable::from_columns(
        GreenKind::KilledGN(n),
        d,
        f64::EPSILON,
        probes.iter().map(|p| p.coords().to_vec()).collect(),
        cols,
    )
}

/// `Ḡ_N(x, ·) = Σ_{z ∈ B(0,N)} g_N(x, z) g_N(z, ·)`.
pub fn bar_gn(n: usize, d: usize, probes: &[LatticeVector]) -> Result<GreenTable> {
    let op = BoxOperator::new(n, d)?;
    let idx = probe_indices(&op, probes)?;
    let cols = idx
        .par_iter()
        .map(|&i| {
            let g = op.killed_column(i);
            let mut bar = g.clone();
            op.spectral_apply(&mut bar, &mut Vec::new(), |l| -1.0 / l);
            let e = rounding_bound(&bar);
            (bar, e)
        })
        .collect();
    GreenTable::from_columns(
        GreenKind::BarGN(n),
        d,
        f64::EPSILON,
        probes.iter().map(|p| p.coords().to_vec()).collect(),
        cols,
    )
}

/// `Ḡ_N(x, x)` by the explicit sum `Σ_z g_N(x, z)²`.
pub fn bar_gn_diagonal(op: &BoxOperator, x: usize) -> f64 {
    op.killed_column(x).iter().map(|v| v * v).sum()
}

/// Diagonal `G_N(x, x)` and `Ḡ_N(x, x)` for every canonical `x` with
/// `|x|_∞ ≤ r`; the box symmetry makes these representatives sufficient.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkDiagonal {
    pub x: Vec<i64>,
    pub gn: f64,
    pub bar_gn: f64,
    pub error: f64,
}

pub fn bulk_diagonals(n: usize, d: usize, r: usize) -> Result<Vec<BulkDiagonal>> {
    if r > n {
        return Err(Error::pre("bulk radius exceeds box radius"));
    }
    let op = BoxOperator::new(n, d)?;
    canonical_offsets(d, r as i64)
        .into_par_iter()
        .map(|x| {
            let i = op.window().index(&x).expect("canonical offset inside the box");
            let (col, stats) = op.dirichlet_column(i, SOLVE_TOL)?;
            Ok(BulkDiagonal { gn: col[i], bar_gn: bar_gn_diagonal(&op, i), error: stats.error_bound, x })
        })
        .collect()
}

/// `Var[ξ_x^{B(0,N)}] = G(x, x) - G_N(x, x)`.
pub fn variance_xi(n: usize, x: &LatticeVector, spec: &QuadratureSpec) -> Result<f64> {
    let d = x.dim();
    let g0 = green_bilaplacian_origin(d, spec)?.value;
    let t = green_dirichlet_gn(n, d, std::slice::from_ref(x))?;
    let gn = t.pair(x.coords(), x.coords()).expect("probe present");
    Ok(g0 - gn)
}

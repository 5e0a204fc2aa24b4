//! Finite-volume Green functions on `B = B(0, N)`.
//!
//! With `L` the Dirichlet Laplacian on `B` (normalised as `(1/2d) Σ_{y∼x}`),
//! the killed Green function is `g_N = (-L)^{-1}`, the double-layer Dirichlet
//! bilaplacian is `M = L² + E` with `E` diagonal (one term per exterior
//! neighbour, weight `1/(2d)²`), `G_N = M^{-1}` and `Ḡ_N = g_N g_N = L^{-2}`.
//! `L` is diagonalised by the separable sine transform, which gives `g_N`
//! and `Ḡ_N` directly and serves as the preconditioner for `M`.

use crate::error::{Error, Result};
use crate::lattice::Window;

/// Largest box handled by the iterative solver.
pub const MAX_UNKNOWNS: usize = 6_000_000;
/// Largest box handled by the dense Cholesky cross-check.
pub const MAX_DENSE_UNKNOWNS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Rigorous bound on the max-norm error: `‖r‖₂ / λ_min(M)`.
    pub error_bound: f64,
}

/// The Dirichlet box `B(0, N)` in `ℤ^d` together with its spectral data.
#[derive(Debug, Clone)]
pub struct BoxOperator {
    d: usize,
    n: usize,
    window: Window,
    sine: Vec<f64>,
    lambda: Vec<f64>,
    exterior: Vec<f64>,
    lambda_min_sq: f64,
}

impl BoxOperator {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::pre("box radius and dimension must be positive"));
        }
        let window = Window::ball(d, n)?;
        if window.len() > MAX_UNKNOWNS {
            return Err(Error::Resource(format!(
                "box with {} sites exceeds the solver budget of {MAX_UNKNOWNS}",
                window.len()
            )));
        }
        let side = 2 * n + 1;
        let h = std::f64::consts::PI / (side + 1) as f64;
        let norm = (2.0 / (side + 1) as f64).sqrt();
        let sine: Vec<f64> = (0..side * side)
            .map(|i| norm * (h * ((i / side + 1) * (i % side + 1)) as f64).sin())
            .collect();
        let cosk: Vec<f64> = (1..=side).map(|k| (h * k as f64).cos()).collect();
        let inv_d = 1.0 / d as f64;
        let mut pos = vec![0i64; d];
        let mut lambda = Vec::with_capacity(window.len());
        let mut exterior = Vec::with_capacity(window.len());
        let w = 1.0 / (4.0 * (d * d) as f64);
        for idx in 0..window.len() {
            window.coords_into(idx, &mut pos);
            let mut s = 0.0;
            let mut c = 0usize;
            for &p in &pos {
                s += cosk[(p + n as i64) as usize];
                c += usize::from(p.unsigned_abs() as usize == n);
            }
            lambda.push(inv_d * s - 1.0);
            exterior.push(c as f64 * w);
        }
        let lmin = 1.0 - cosk[0];
        Ok(Self { d, n, window, sine, lambda, exterior, lambda_min_sq: lmin * lmin })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn radius(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Number of exterior nearest neighbours of every site, times `1/(2d)²`.
    pub fn exterior_weights(&self) -> &[f64] {
        &self.exterior
    }

    /// `out = L f` with zero data outside the box.
    pub fn laplacian(&self, f: &[f64], out: &mut [f64]) {
        let c = 1.0 / (2 * self.d) as f64;
        let side = 2 * self.n + 1;
        for (o, &v) in out.iter_mut().zip(f) {
            *o = -v;
        }
        // Axis by axis: each block of `side` hyperplanes couples plane p to p ± 1.
        for &st in self.window.strides() {
            let block = st * side;
            for (fc, oc) in f.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
                for p in 0..side - 1 {
                    let (lo, hi) = oc.split_at_mut((p + 1) * st);
                    let lo = &mut lo[p * st..];
                    let hi = &mut hi[..st];
                    let (flo, fhi) = (&fc[p * st..(p + 1) * st], &fc[(p + 1) * st..(p + 2) * st]);
                    for k in 0..st {
                        lo[k] += c * fhi[k];
                        hi[k] += c * flo[k];
                    }
                }
            }
        }
    }

    /// `out = M f = L² f + E f`.
    pub fn bilaplacian(&self, f: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.laplacian(f, scratch);
        self.laplacian(scratch, out);
        for ((o, &e), &v) in out.iter_mut().zip(&self.exterior).zip(f) {
            *o += e * v;
        }
    }

    /// In-place orthonormal separable sine transform (its own inverse).
    pub fn sine_transform(&self, data: &mut [f64], scratch: &mut Vec<f64>) {
        let side = 2 * self.n + 1;
        for &st in self.window.strides() {
            if st == 1 {
                // Contiguous axis: a small mat-vec per row.
                scratch.resize(side, 0.0);
                for chunk in data.chunks_exact_mut(side) {
                    for (k, o) in scratch.iter_mut().enumerate() {
                        let row = &self.sine[k * side..(k + 1) * side];
                        *o = row.iter().zip(chunk.iter()).map(|(w, v)| w * v).sum();
                    }
                    chunk.copy_from_slice(scratch);
                }
                continue;
            }
            let block = st * side;
            scratch.resize(block, 0.0);
            for chunk in data.chunks_exact_mut(block) {
                scratch.fill(0.0);
                for k in 0..side {
                    let row = &self.sine[k * side..(k + 1) * side];
                    let dst = &mut scratch[k * st..(k + 1) * st];
                    for (j, &w) in row.iter().enumerate() {
                        let src = &chunk[j * st..(j + 1) * st];
                        for (o, &v) in dst.iter_mut().zip(src) {
                            *o += w * v;
                        }
                    }
                }
                chunk.copy_from_slice(scratch);
            }
        }
    }

    /// Applies `f(λ)` to a vector in the spectral basis of `L`.
    pub fn spectral_apply(&self, v: &mut [f64], scratch: &mut Vec<f64>, f: impl Fn(f64) -> f64) {
        self.sine_transform(v, scratch);
        for (x, &l) in v.iter_mut().zip(&self.lambda) {
            *x *= f(l);
        }
        self.sine_transform(v, scratch);
    }

    /// `g_N(x, ·)` as a vector over the box.
    pub fn killed_column(&self, x: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[x] = 1.0;
        self.spectral_apply(&mut v, &mut Vec::new(), |l| -1.0 / l);
        v
    }

    /// Preconditioner `L^{-2}`.
    pub fn inverse_laplacian_sq(&self, v: &mut [f64], scratch: &mut Vec<f64>) {
        self.spectral_apply(v, scratch, |l| 1.0 / (l * l));
    }

    /// Solves `M u = b` by preconditioned conjugate gradients.
    pub fn solve(&self, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
        let n = self.len();
        let mut x = b.to_vec();
        let mut scratch = Vec::new();
        self.inverse_laplacian_sq(&mut x, &mut scratch);
        let mut mtmp = vec![0.0; n];
        let mut r = vec![0.0; n];
        self.bilaplacian(&x, &mut r, &mut mtmp);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], SolveStats { iterations: 0, relative_residual: 0.0, error_bound: 0.0 }));
        }
        let mut z = r.clone();
        self.inverse_laplacian_sq(&mut z, &mut scratch);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; n];
        let mut it = 0;
        let mut rel = norm(&r) / bnorm;
        while rel > rel_tol {
            if it >= max_iter {
                return Err(Error::numeric(format!("conjugate gradients stalled after {it} iterations"), rel));
            }
            self.bilaplacian(&p, &mut q, &mut mtmp);
            let alpha = rz / dot(&p, &q);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            rel = norm(&r) / bnorm;
            z.copy_from_slice(&r);
            self.inverse_laplacian_sq(&mut z, &mut scratch);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            it += 1;
        }
        // Recompute the true residual for the reported bound.
        self.bilaplacian(&x, &mut r, &mut mtmp);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rn = norm(&r);
        Ok((
            x,
            SolveStats { iterations: it, relative_residual: rn / bnorm, error_bound: rn / self.lambda_min_sq },
        ))
    }

    /// `G_N(x, ·)` as a vector over the box.
    pub fn dirichlet_column(&self, x: usize, rel_tol: f64) -> Result<(Vec<f64>, SolveStats)> {
        let mut b = vec![0.0; self.len()];
        b[x] = 1.0;
        self.solve(&b, rel_tol, 2000)
    }

    /// Dense matrix of `M`, row-major, for small boxes.
    pub fn dense_bilaplacian(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > MAX_DENSE_UNKNOWNS {
            return Err(Error::Resource(format!("{n} unknowns exceed the dense budget")));
        }
        let mut m = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.bilaplacian(&e, &mut col, &mut tmp);
            e[j] = 0.0;
            for i in 0..n {
                m[i * n + j] = col[i];
            }
        }
        Ok(m)
    }

    /// `G_N(x, ·)` by dense Cholesky factorisation of `M`.
    pub fn dirichlet_column_dense(&self, x: usize) -> Result<Vec<f64>> {
        use faer::linalg::solvers::Solve;
        let n = self.len();
        let m = self.dense_bilaplacian()?;
        let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| m[i * n + j]);
        let llt = mat
            .llt(faer::Side::Lower)
            .map_err(|_| Error::numeric("bilaplacian matrix not positive definite", f64::NAN))?;
        let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| if i == x { 1.0 } else { 0.0 });
        let sol = llt.solve(&rhs);
        Ok((0..n).map(|i| sol[(i, 0)]).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_transform_is_an_involution() {
        let op = BoxOperator::new(2, 3).unwrap();
        let orig: Vec<f64> = (0..op.len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut v = orig.clone();
        let mut s = Vec::new();
        op.sine_transform(&mut v, &mut s);
        op.sine_transform(&mut v, &mut s);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn killed_column_inverts_laplacian() {
        let op = BoxOperator::new(2, 5).unwrap();
        let x = op.window().index(&[1, 0, -2, 0, 1]).unwrap();
        let g = op.killed_column(x);
        let mut lg = vec![0.0; op.len()];
        op.laplacian(&g, &mut lg);
        for (i, v) in lg.iter().enumerate() {
            let want = if i == x { -1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exterior_weights_count_faces() {
        let op = BoxOperator::new(1, 5).unwrap();
        let corner = op.window().index(&[1, 1, -1, 0, 0]).unwrap();
        let centre = op.window().index(&[0; 5]).unwrap();
        assert!((op.exterior_weights()[corner] - 3.0 / 100.0).abs() < 1e-15);
        assert_eq!(op.exterior_weights()[centre], 0.0);
    }

    #[test]
    fn bilaplacian_matches_squared_stencil_with_zero_padding() {
        // Compare with Δ² applied on a padded grid where f vanishes outside B.
        let (n, d) = (1usize, 5usize);
        let op = BoxOperator::new(n, d).unwrap();
        let big = Window::ball(d, n + 2).unwrap();
        let f: Vec<f64> = (0..op.len()).map(|i| ((i * 31) % 7) as f64 - 3.0).collect();
        let mut padded = vec![0.0; big.len()];
        for i in 0..op.len() {
            padded[big.index(&op.window().coords(i)).unwrap()] = f[i];
        }
        let lap = |g: &[f64]| -> Vec<f64> {
            (0..big.len())
                .map(|i| {
                    let mut s = 0.0;
                    for a in 0..d {
                        for fw in [true, false] {
                            if let Some(j) = big.step(i, a, fw, false) {
                                s += g[j];
                            }
                        }
                    }
                    s / (2 * d) as f64 - g[i]
                })
                .collect()
        };
        let want = lap(&lap(&padded));
        let mut got = vec![0.0; op.len()];
        let mut tmp = vec![0.0; op.len()];
        op.bilaplacian(&f, &mut got, &mut tmp);
        for i in 0..op.len() {
            let j = big.index(&op.window().coords(i)).unwrap();
            assert!((got[i] - want[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn iterative_matches_dense_solver() {
        let op = BoxOperator::new(1, 5).unwrap();
        for x in [0, 17, op.len() / 2] {
            let (it, stats) = op.dirichlet_column(x, 1e-14).unwrap();
            let dense = op.dirichlet_column_dense(x).unwrap();
            assert!(stats.relative_residual < 1e-10);
            for (a, b) in it.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

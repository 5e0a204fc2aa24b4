//! Fourier symbols of `g` and `G` restricted to `K = ℤ³ × {0}^{d−3}` and the
//! decomposition `G|_K = γ(d)·Id + Φ`.
//!
//! With `c(θ) = 3 − Σ cos θᵢ`, the symbol of `g` on `K` is
//! `S(c) = d ∫₀^∞ e^{−cz} (e^{−z} I₀(z))^{d−3} dz`, and the symbol of `G` on
//! `K` is `d·F₁(c)` where `F₁(c) = d ∫ z e^{−cz} (e^{−z} I₀(z))^{d−3} dz = −S′(c)`.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::bessel::bessel_i_scaled;
use crate::error::{Error, Result};
use crate::green::{green_simple, green_simple_origin, green_bilaplacian_origin};
use crate::lattice::{LatticeVector, Window};
use crate::percolation::{source_target_threshold, CrossingEstimate};
use crate::quadrature::{integrate_half_line, Estimate, QuadratureSpec};
use crate::sampler::{ExactSampler, Sampler};

pub const MIN_DIM: usize = 8;
pub const MIN_GRID: usize = 32;

fn check_dim(d: usize) -> Result<()> {
    if d < MIN_DIM {
        return Err(Error::pre(format!("dimension {d} < {MIN_DIM}")));
    }
    Ok(())
}

/// `d ∫ z^power e^{−cz} (e^{−z} I₀(z))^{d−3} dz`.
fn radial_moment(d: usize, c: f64, power: i32, spec: &QuadratureSpec) -> Result<Estimate> {
    let e = (d - 3) as i32;
    let df = d as f64;
    let f = |z: f64| {
        let b = bessel_i_scaled(0, z).powi(e);
        let w = if power == 0 { 1.0 } else { z.powi(power) };
        df * w * (-c * z).exp() * b
    };
    integrate_half_line(&f, spec)
}

fn c_of(theta: &[f64; 3]) -> f64 {
    3.0 - theta.iter().map(|t| t.cos()).sum::<f64>()
}

/// Symbol of `g` restricted to `K` at `θ`.
pub fn symbol_g_on_k(theta: [f64; 3], d: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    check_dim(d)?;
    radial_moment(d, c_of(&theta), 0, spec)
}

/// Symbol of `G` restricted to `K` at `θ`.
pub fn symbol_big_g_on_k(theta: [f64; 3], d: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    check_dim(d)?;
    let f1 = radial_moment(d, c_of(&theta), 1, spec)?;
    Ok(Estimate::new(d as f64 * f1.value, d as f64 * f1.error))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolKind {
    GOnK,
    BigGOnK,
    /// `S − σ²`.
    Gprime { sigma2: f64 },
    /// Symbol of `B = G|_K − A²`.
    B,
}

/// A symbol sampled on the uniform grid `θ = 2π m / M`, `m ∈ [0, M)³`,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SublatticeSymbol {
    pub d: usize,
    pub m: usize,
    pub kind: SymbolKind,
    pub values: Vec<f64>,
}

impl SublatticeSymbol {
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.m + j) * self.m + k]
    }
}

/// Folded index `min(m, M − m)`, i.e. the angle reduced to `[0, π]`.
fn fold(m: usize, res: usize) -> usize {
    m.min(res - m)
}

/// Sorted folded triples `f₁ ≤ f₂ ≤ f₃` in `[0, res/2]`.
fn folded_triples(res: usize) -> Vec<[usize; 3]> {
    let h = res / 2;
    let mut out = Vec::new();
    for a in 0..=h {
        for b in a..=h {
            for c in b..=h {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn c_of_indices(t: &[usize; 3], res: usize) -> f64 {
    3.0 - t.iter().map(|&n| (2.0 * PI * n as f64 / res as f64).cos()).sum::<f64>()
}

/// Memoised `S` and `F₁` keyed by the sorted folded angle numerators over a
/// common denominator.
struct RadialCache<'a> {
    d: usize,
    spec: &'a QuadratureSpec,
    den: usize,
    s: HashMap<[usize; 3], Estimate>,
    f1: HashMap<[usize; 3], Estimate>,
}

impl<'a> RadialCache<'a> {
    fn new(d: usize, den: usize, spec: &'a QuadratureSpec) -> Self {
        Self { d, spec, den, s: HashMap::new(), f1: HashMap::new() }
    }

    fn fill(&mut self, keys: &[[usize; 3]], power: i32) -> Result<()> {
        let map = if power == 0 { &self.s } else { &self.f1 };
        let missing: Vec<[usize; 3]> = keys.iter().filter(|k| !map.contains_key(*k)).copied().collect();
        let (d, den, spec) = (self.d, self.den, self.spec);
        let vals = missing
            .par_iter()
            .map(|k| radial_moment(d, c_of_indices(k, den), power, spec))
            .collect::<Result<Vec<_>>>()?;
        let map = if power == 0 { &mut self.s } else { &mut self.f1 };
        map.extend(missing.into_iter().zip(vals));
        Ok(())
    }

    fn key(&self, t: [usize; 3], res: usize) -> [usize; 3] {
        let scale = self.den / res;
        let mut k = t.map(|n| n * scale);
        k.sort_unstable();
        k
    }
}

/// Certified extrema of the `g`-on-`K` symbol from one grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExtrema {
    pub m: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    /// `grid_min − slack_min ≤ inf S ≤ grid_min`.
    pub slack_min: f64,
    /// `grid_max ≤ sup S ≤ grid_max + slack_max`.
    pub slack_max: f64,
}

impl GridExtrema {
    pub fn lower(&self) -> f64 {
        self.grid_min - self.slack_min
    }

    pub fn upper(&self) -> f64 {
        self.grid_max + self.slack_max
    }
}

/// On the cell `|θᵢ − θ_gᵢ| ≤ π/M`, `|S(θ) − S(θ_g)| ≤ F₁(c_lo) (π/M) Σ sup|sin θᵢ|`
/// because `∂ᵢS = −sin θᵢ F₁(c)` and `F₁` decreases in `c`.
fn grid_extrema(cache: &mut RadialCache, m: usize) -> Result<GridExtrema> {
    let den = cache.den;
    let cells = folded_triples(m);
    let keys: Vec<[usize; 3]> = cells.iter().map(|t| cache.key(*t, m)).collect();
    cache.fill(&keys, 0)?;
    let zero = [0usize; 3];
    cache.fill(&[zero], 1)?;
    let f1_max = cache.f1[&zero].value;
    let delta = PI / m as f64;
    let s_vals: Vec<f64> = keys.iter().map(|k| cache.s[k].value).collect();
    let quad_err = keys.iter().map(|k| cache.s[k].error).fold(0.0, f64::max);
    let grid_min = s_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let grid_max = s_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Cell geometry on the half-step grid of resolution 2M.
    let sin_sum = |t: &[usize; 3]| -> f64 {
        t.iter()
            .map(|&f| {
                let (lo, hi) = ((2 * f) as f64 - 1.0, (2 * f) as f64 + 1.0);
                let q = m as f64 / 2.0;
                if lo <= q && q <= hi {
                    1.0
                } else {
                    let s = |n: f64| (PI * n / m as f64).sin().abs();
                    s(lo.max(0.0)).max(s(hi))
                }
            })
            .sum()
    };
    let c_lo_key = |t: &[usize; 3]| -> [usize; 3] {
        let mut k = t.map(|f| (2 * f).saturating_sub(1) * (den / (2 * m)));
        k.sort_unstable();
        k
    };
    let relevant: Vec<usize> = (0..cells.len())
        .filter(|&i| {
            let crude = f1_max * delta * 3.0;
            s_vals[i] - crude < grid_min || s_vals[i] + crude > grid_max
        })
        .collect();
    let f1_keys: Vec<[usize; 3]> = relevant.iter().map(|&i| c_lo_key(&cells[i])).collect();
    cache.fill(&f1_keys, 1)?;
    let mut lower = grid_min;
    let mut upper = grid_max;
    for (&i, k) in relevant.iter().zip(&f1_keys) {
        let f1 = &cache.f1[k];
        let slack = (f1.value + f1.error) * delta * sin_sum(&cells[i]);
        lower = lower.min(s_vals[i] - slack);
        upper = upper.max(s_vals[i] + slack);
    }
    Ok(GridExtrema {
        m,
        grid_min,
        grid_max,
        slack_min: grid_min - lower + quad_err,
        slack_max: upper - grid_max + quad_err,
    })
}

/// Full grid of a symbol kind (values from the folded cache).
pub fn symbol_grid(d: usize, m: usize, kind: SymbolKind, spec: &QuadratureSpec) -> Result<SublatticeSymbol> {
    check_dim(d)?;
    if m < 2 || m % 2 != 0 {
        return Err(Error::pre("grid size must be even"));
    }
    let mut cache = RadialCache::new(d, m, spec);
    let keys: Vec<[usize; 3]> = folded_triples(m).iter().map(|t| cache.key(*t, m)).collect();
    let need_s = !matches!(kind, SymbolKind::BigGOnK);
    let need_f1 = matches!(kind, SymbolKind::BigGOnK | SymbolKind::B);
    if need_s {
        cache.fill(&keys, 0)?;
    }
    if need_f1 {
        cache.fill(&keys, 1)?;
    }
    let df = d as f64;
    let mut values = Vec::with_capacity(m * m * m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let key = cache.key([fold(i, m), fold(j, m), fold(k, m)], m);
                let v = match kind {
                    SymbolKind::GOnK => cache.s[&key].value,
                    SymbolKind::BigGOnK => df * cache.f1[&key].value,
                    SymbolKind::Gprime { sigma2 } => cache.s[&key].value - sigma2,
                    SymbolKind::B => df * cache.f1[&key].value - cache.s[&key].value.powi(2),
                };
                values.push(v);
            }
        }
    }
    Ok(SublatticeSymbol { d, m, kind, values })
}

/// `(σ², ρ_s(G′), G′ symbol)`: `σ²` is a certified lower bound of the symbol's
/// infimum and `ρ_s(G′)` a certified upper bound of `sup S − σ²`.
pub fn sigma2_and_gprime(d: usize, m: usize, spec: &QuadratureSpec) -> Result<(f64, f64, SublatticeSymbol)> {
    check_dim(d)?;
    if m < MIN_GRID || m % 2 != 0 {
        return Err(Error::pre(format!("grid size must be even and at least {MIN_GRID}")));
    }
    let mut cache = RadialCache::new(d, 2 * m, spec);
    let ext = grid_extrema(&mut cache, m)?;
    let sigma2 = ext.lower();
    let rho = ext.upper() - sigma2;
    let symbol = symbol_grid(d, m, SymbolKind::Gprime { sigma2 }, spec)?;
    Ok((sigma2, rho, symbol))
}

/// `(d/(d−3))² (G_{d−3}(0) − g_{d−3}(0)²)`.
pub fn rho_b_bound(d: usize, spec: &QuadratureSpec) -> Result<f64> {
    check_dim(d)?;
    let big = green_bilaplacian_origin(d - 3, spec)?.value;
    let small = green_simple_origin(d - 3, spec)?.value;
    let r = d as f64 / (d - 3) as f64;
    Ok((r * r * (big - small * small)).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub d: usize,
    pub m: usize,
    pub coarse: GridExtrema,
    pub fine: GridExtrema,
    pub sigma2: f64,
    pub gamma: f64,
    pub rho_gprime: f64,
    pub rho_b_bound: f64,
    pub rho_phi_bound: f64,
    /// `|S(0) − (d/(d−3)) g_{d−3}(0)|`.
    pub lazy_walk_residual: f64,
    /// `|G-on-K symbol(0) − (S(0)² + ρ_B)|`.
    pub consistency_residual: f64,
    /// Minimum over the grid of the `Φ` symbol `G-on-K − γ`.
    pub phi_symbol_min: f64,
    pub violations: Vec<String>,
}

impl DecompositionReport {
    pub fn d_times_rho_phi(&self) -> f64 {
        self.d as f64 * self.rho_phi_bound
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub const CSV_HEADER: &'static str = "d,sigma2,gamma,rho_Gprime,rho_B_bound,rho_Phi_bound,d_times_rho_Phi";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.d,
            self.sigma2,
            self.gamma,
            self.rho_gprime,
            self.rho_b_bound,
            self.rho_phi_bound,
            self.d_times_rho_phi()
        )
    }
}

/// Tolerance for the identity checks, relative to the quadrature tolerance.
const IDENTITY_TOL: f64 = 1e-6;

/// Assembles the decomposition from grids of resolution `m` and `2m`.
pub fn decompose(d: usize, m: usize, spec: &QuadratureSpec) -> Result<DecompositionReport> {
    check_dim(d)?;
    if m < MIN_GRID || m % 2 != 0 {
        return Err(Error::pre(format!("grid size must be even and at least {MIN_GRID}")));
    }
    let mut cache = RadialCache::new(d, 4 * m, spec);
    let coarse = grid_extrema(&mut cache, m)?;
    let fine = grid_extrema(&mut cache, 2 * m)?;
    let sigma2 = coarse.lower().max(fine.lower());
    let upper = coarse.upper().min(fine.upper());
    let gamma = sigma2 * sigma2;
    let rho_gprime = upper - sigma2;
    let rho_b = rho_b_bound(d, spec)?;
    let rho_phi = 2.0 * sigma2 * rho_gprime + rho_gprime * rho_gprime + rho_b;

    let zero = [0usize; 3];
    let s0 = cache.s[&zero].value;
    let big_g_k0 = d as f64 * cache.f1[&zero].value;
    let small = green_simple_origin(d - 3, spec)?.value;
    let r = d as f64 / (d - 3) as f64;
    let lazy_walk_residual = (s0 - r * small).abs();
    let consistency_residual = (big_g_k0 - (s0 * s0 + rho_b)).abs();
    // G-on-K is decreasing in c, so its grid minimum sits at c = 6.
    let far = [2 * m, 2 * m, 2 * m];
    cache.fill(&[far], 1)?;
    let phi_symbol_min = d as f64 * cache.f1[&far].value - gamma;

    let mut violations = Vec::new();
    if !(0.25..=1.0).contains(&gamma) {
        violations.push(format!("gamma {gamma} outside [1/4, 1]"));
    }
    if !(0.5..1.0).contains(&sigma2) {
        violations.push(format!("sigma2 {sigma2} outside [1/2, 1)"));
    }
    if coarse.lower() > fine.grid_min || fine.lower() > coarse.grid_min {
        violations.push("grid sandwiches at M and 2M do not overlap".into());
    }
    if fine.slack_min > coarse.slack_min {
        violations.push("slack did not shrink under refinement".into());
    }
    if lazy_walk_residual > IDENTITY_TOL {
        violations.push(format!("lazy-walk identity residual {lazy_walk_residual}"));
    }
    if consistency_residual > IDENTITY_TOL {
        violations.push(format!("G-on-K consistency residual {consistency_residual}"));
    }
    if phi_symbol_min < -IDENTITY_TOL {
        violations.push(format!("Phi symbol negative: {phi_symbol_min}"));
    }
    if !(rho_phi > 0.0 && rho_gprime >= 0.0) {
        violations.push("nonpositive spectral bound".into());
    }
    Ok(DecompositionReport {
        d,
        m,
        coarse,
        fine,
        sigma2,
        gamma,
        rho_gprime,
        rho_b_bound: rho_b,
        rho_phi_bound: rho_phi,
        lazy_walk_residual,
        consistency_residual,
        phi_symbol_min,
        violations,
    })
}

/// Truncated lattice sum `Σ_{|x|∞ ≤ R} g((x, 0)) cos(θ·x)` over `ℤ³`.
pub fn symbol_g_on_k_lattice_sum(theta: [f64; 3], d: usize, radius: i64, spec: &QuadratureSpec) -> Result<f64> {
    let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut total = 0.0;
    for a in -radius..=radius {
        for b in -radius..=radius {
            for c in -radius..=radius {
                let mut key = vec![a.abs(), b.abs(), c.abs()];
                key.sort_unstable_by(|p, q| q.cmp(p));
                let g = match cache.get(&key) {
                    Some(&v) => v,
                    None => {
                        let mut x = key.clone();
                        x.resize(d, 0);
                        let v = green_simple(&LatticeVector::new(x)?, spec)?.value;
                        cache.insert(key, v);
                        v
                    }
                };
                total += g * (theta[0] * a as f64 + theta[1] * b as f64 + theta[2] * c as f64).cos();
            }
        }
    }
    Ok(total)
}

/// Crossing statistics in the slab `[−R, R]² × [0, L₀] × {0}^{d−3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabResult {
    pub d: usize,
    pub l0: usize,
    pub half_width: usize,
    pub estimates: Vec<CrossingEstimate>,
}

/// Exploratory: frequency of a left-right crossing (`x₁ = −R` to `x₁ = R`) of
/// the slab inside `E^{≥h}`, on coupled exact samples of the field restricted
/// to the slab.
pub fn slab_experiment(
    d: usize,
    l0: usize,
    half_width: usize,
    h_grid: &[f64],
    n_samples: u64,
    seed: u64,
    spec: &QuadratureSpec,
) -> Result<SlabResult> {
    if d < 3 || half_width == 0 || n_samples == 0 {
        return Err(Error::pre("slab needs d >= 3, R >= 1 and at least one sample"));
    }
    if h_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::pre("h grid must be sorted"));
    }
    let r = half_width as i64;
    let w = Window::new(vec![-r, -r, 0], vec![2 * half_width + 1, 2 * half_width + 1, l0 + 1])?;
    let sites: Vec<Vec<i64>> = (0..w.len())
        .map(|i| {
            let mut x = w.coords(i);
            x.resize(d, 0);
            x
        })
        .collect();
    let sampler = ExactSampler::sites(sites, spec)?;
    let kind: Vec<u8> = (0..w.len())
        .map(|i| match w.coords(i)[0] {
            x if x == -r => 1,
            x if x == r => 2,
            _ => 0,
        })
        .collect();
    let live: Vec<usize> = (0..w.len()).collect();
    let thresholds = (0..n_samples)
        .into_par_iter()
        .map(|s| Ok(source_target_threshold(&w, &sampler.sample(seed, s)?.values, &kind, &live)))
        .collect::<Result<Vec<f64>>>()?;
    let estimates = h_grid
        .iter()
        .map(|&h| {
            let k = thresholds.iter().filter(|&&t| t >= h).count() as u64;
            CrossingEstimate::new(2 * half_width + 1, h, k, n_samples)
        })
        .collect();
    Ok(SlabResult { d, l0, half_width, estimates })
}

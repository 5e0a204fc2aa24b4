//! Monte Carlo check of the decoupling inequality for box-local crossing events.

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::percolation::{box_crossing_threshold_by, LatticeBox};
use crate::sampler::{conditional_xi, stream_rng, FieldSample, Sampler, SplitRegion, TorusSampler};

/// Salt separating bootstrap streams from sample streams.
const BOOTSTRAP_SALT: u64 = 0x5bd1_e995_0000_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingConfig {
    pub sides: Vec<usize>,
    /// Half-width `N` of `K_i = B(x_i, N)`.
    pub n_box: usize,
    pub r: f64,
    pub eps: f64,
    pub h_grid: Vec<f64>,
    pub n_samples: u64,
    pub bootstrap: u64,
    /// Samples split to measure `ξ` on `K₂`.
    pub xi_samples: u64,
    /// Use the decreasing events `B_i = A_i^c` and the second inequality.
    pub decreasing: bool,
}

impl DecouplingConfig {
    /// Torus with transverse side `l` and the shortest even first axis that
    /// separates the boxes by more than `rN` and keeps `K₁` off `U`.
    pub fn default_sides(d: usize, l: usize, n_box: usize, r: f64) -> Vec<usize> {
        let n = n_box as f64;
        let sep = (((2.0 + r) * n).floor() as usize + 1).max(n_box + split_radius(n_box, r) + 1);
        let mut sides = vec![l; d];
        sides[0] = (2 * sep).max(l);
        sides
    }
}

/// `U = B(x₂, (1 + r/2)N)`, radius rounded down.
pub fn split_radius(n_box: usize, r: f64) -> usize {
    ((1.0 + r / 2.0) * n_box as f64).floor() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingTrial {
    pub d: usize,
    pub n_box: usize,
    pub r: f64,
    pub eps: f64,
    pub h: f64,
    pub n: u64,
    pub lhs: f64,
    pub p1: f64,
    pub p2: f64,
    pub rhs_product: f64,
    pub slack: f64,
    pub slack_ci_lo: f64,
    pub slack_ci_hi: f64,
    pub p_heps_c: f64,
    pub sigma2_max: f64,
    pub lemma33_bound: f64,
}

impl DecouplingTrial {
    pub const CSV_HEADER: &'static str =
        "d,N,r,eps,h,n,lhs,rhs_product,slack,slack_ci_lo,slack_ci_hi,p_Heps_c,lemma33_bound";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.d,
            self.n_box,
            self.r,
            self.eps,
            self.h,
            self.n,
            self.lhs,
            self.rhs_product,
            self.slack,
            self.slack_ci_lo,
            self.slack_ci_hi,
            self.p_heps_c,
            self.lemma33_bound
        )
    }
}

fn circular(a: i64, b: i64, side: usize) -> i64 {
    let t = (a - b).rem_euclid(side as i64);
    t.min(side as i64 - t)
}

struct Layout {
    centre1: Vec<i64>,
    centre2: Vec<i64>,
    region: SplitRegion,
}

fn layout(cfg: &DecouplingConfig) -> Result<Layout> {
    let d = cfg.sides.len();
    let n = cfg.n_box as i64;
    if cfg.n_box == 0 || !(cfg.r > 0.0) || !(cfg.eps >= 0.0) {
        return Err(Error::pre("need N >= 1, r > 0 and eps >= 0"));
    }
    if cfg.n_samples == 0 || cfg.xi_samples == 0 || cfg.xi_samples > cfg.n_samples {
        return Err(Error::pre("need 1 <= xi_samples <= n_samples"));
    }
    let centre2 = vec![0i64; d];
    let mut centre1 = vec![0i64; d];
    centre1[0] = (cfg.sides[0] / 2) as i64;
    let gap = (0..d).map(|a| (circular(centre1[a], centre2[a], cfg.sides[a]) - 2 * n).max(0)).max().unwrap_or(0);
    if gap as f64 <= cfg.r * n as f64 {
        return Err(Error::pre(format!("box distance {gap} does not exceed rN = {}", cfg.r * n as f64)));
    }
    let ru = split_radius(cfg.n_box, cfg.r);
    let apart = (0..d).any(|a| circular(centre1[a], centre2[a], cfg.sides[a]) > n + ru as i64);
    if !apart {
        return Err(Error::pre("K1 meets the split region U"));
    }
    if cfg.sides.iter().any(|&s| s < 2 * cfg.n_box + 4) {
        return Err(Error::pre("torus too small for the crossing boxes"));
    }
    Ok(Layout { centre1, centre2, region: SplitRegion { centre: vec![0; d], radius: ru } })
}

/// Threshold of `A_i`: the centre of `K_i` joined to its faces by a path in `K_i`.
fn event_threshold(w: &Window, value: impl Fn(usize) -> f64, centre: &[i64], n: i64) -> Result<f64> {
    box_crossing_threshold_by(w, true, value, &LatticeBox::ball(centre, 0), &LatticeBox::ball(centre, n - 1))
}

/// Fields of torus transform `pair`, restricted to streams below `n`.
fn pair_samples(sampler: &TorusSampler, seed: u64, pair: u64, n: u64) -> Vec<FieldSample> {
    let (re, im) = sampler.sample_pair(seed, pair);
    [(2 * pair, re), (2 * pair + 1, im)]
        .into_iter()
        .filter(|(s, _)| *s < n)
        .map(|(stream_id, values)| FieldSample { geometry: sampler.geometry().clone(), values, seed, stream_id })
        .collect()
}

fn estimates(t: &[(f64, f64)], idx: impl Iterator<Item = usize> + Clone, h: f64, eps: f64, decreasing: bool) -> (f64, f64, f64) {
    let n = idx.clone().count() as f64;
    let (mut both, mut a1, mut a2) = (0u64, 0u64, 0u64);
    for i in idx {
        let (t1, t2) = t[i];
        if decreasing {
            both += (t1 < h - eps && t2 < h - eps) as u64;
            a1 += (t1 < h) as u64;
            a2 += (t2 < h) as u64;
        } else {
            both += (t1 >= h && t2 >= h) as u64;
            a1 += (t1 >= h - eps) as u64;
            a2 += (t2 >= h - eps) as u64;
        }
    }
    (both as f64 / n, a1 as f64 / n, a2 as f64 / n)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Runs the experiment on streams `0..n_samples` of `seed`; `ξ` is measured
/// on streams `0..xi_samples`.
pub fn run_decoupling(cfg: &DecouplingConfig, seed: u64) -> Result<Vec<DecouplingTrial>> {
    let lay = layout(cfg)?;
    let d = cfg.sides.len();
    let sampler = TorusSampler::new(cfg.sides.clone())?;
    let n = cfg.n_box as i64;
    let w = sampler.window();

    let thresholds: Vec<(f64, f64)> = (0..cfg.n_samples.div_ceil(2))
        .into_par_iter()
        .map(|k| {
            sampler.with_pair(seed, k, |data| {
                let parts: [fn(&Complex64) -> f64; 2] = [|c| c.re, |c| c.im];
                parts
                    .iter()
                    .take((cfg.n_samples - 2 * k).min(2) as usize)
                    .map(|part| {
                        let t1 = event_threshold(w, |j| part(&data[j]), &lay.centre1, n)?;
                        let t2 = event_threshold(w, |j| part(&data[j]), &lay.centre2, n)?;
                        Ok((t1, t2))
                    })
                    .collect::<Result<Vec<_>>>()
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // ξ on K₂ = B(x₂, N), from the split with respect to U = B(x₂, R_U).
    let uw = Window::ball(d, lay.region.radius)?;
    let kw = Window::ball(d, cfg.n_box)?;
    let k2_local: Vec<usize> = (0..kw.len()).map(|i| uw.index(&kw.coords(i)).expect("K2 inside U")).collect();
    let xi_rows: Vec<Vec<f64>> = (0..cfg.xi_samples.div_ceil(2))
        .into_par_iter()
        .map(|k| {
            pair_samples(&sampler, seed, k, cfg.xi_samples)
                .iter()
                .map(|s| conditional_xi(s, &lay.region).map(|xi| k2_local.iter().map(|&i| xi[i]).collect()))
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let m = xi_rows.len() as f64;
    let exceed = xi_rows.iter().filter(|row| row.iter().any(|v| v.abs() > cfg.eps / 2.0)).count();
    let p_heps_c = exceed as f64 / m;
    // ξ is centred, so the second moment is the variance.
    let sigma2_max = (0..k2_local.len())
        .map(|j| xi_rows.iter().map(|row| row[j] * row[j]).sum::<f64>() / m)
        .fold(0.0, f64::max);
    let lemma33_bound = 2.0
        * ((2 * cfg.n_box + 1) as f64).powi(d as i32)
        * (-cfg.eps * cfg.eps / (8.0 * sigma2_max)).exp();

    let n_s = thresholds.len();
    let mut trials = Vec::with_capacity(cfg.h_grid.len());
    for (hi, &h) in cfg.h_grid.iter().enumerate() {
        let (lhs, p1, p2) = estimates(&thresholds, 0..n_s, h, cfg.eps, cfg.decreasing);
        let slack = p1 * p2 - lhs;
        let mut boot: Vec<f64> = (0..cfg.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed ^ BOOTSTRAP_SALT, hi as u64 * cfg.bootstrap + b);
                let idx: Vec<usize> = (0..n_s).map(|_| rng.random_range(0..n_s)).collect();
                let (l, a, c) = estimates(&thresholds, idx.into_iter(), h, cfg.eps, cfg.decreasing);
                a * c - l
            })
            .collect();
        boot.sort_by(f64::total_cmp);
        let (slack_ci_lo, slack_ci_hi) =
            if boot.is_empty() { (f64::NAN, f64::NAN) } else { (quantile(&boot, 0.025), quantile(&boot, 0.975)) };
        trials.push(DecouplingTrial {
            d,
            n_box: cfg.n_box,
            r: cfg.r,
            eps: cfg.eps,
            h,
            n: n_s as u64,
            lhs,
            p1,
            p2,
            rhs_product: p1 * p2,
            slack,
            slack_ci_lo,
            slack_ci_hi,
            p_heps_c,
            sigma2_max,
            lemma33_bound,
        });
    }
    Ok(trials)
}

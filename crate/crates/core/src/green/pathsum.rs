//! Random-walk path-sum oracle: `Σ_n w(n) P_0[X_n = x]` by exact convolution
//! of the nearest-neighbour step law, one coordinate at a time.
//!
//! A `d`-dimensional step first picks an axis uniformly, so
//! `Q_j(n) = Σ_m Bin(n, m; 1/j) p_1(m, x_j) Q_{j-1}(n - m)` where `p_1` is the
//! one-dimensional ±1 walk kernel and `Q_j` is the law of the walk restricted
//! to the first `j` axes.

use crate::error::{Error, Result};
use crate::lattice::LatticeVector;

/// Hard cap on the oracle's working memory.
pub const MEMORY_CAP_BYTES: usize = 2 << 30;

/// Binomial weights below `exp(-CUTOFF)` times the row maximum are skipped.
const LOG_CUTOFF: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathWeight {
    /// `w(n) = 1`, giving `g`.
    Simple,
    /// `w(n) = n + 1`, giving `G`.
    Bilaplacian,
}

impl PathWeight {
    fn at(self, n: usize) -> f64 {
        match self {
            PathWeight::Simple => 1.0,
            PathWeight::Bilaplacian => n as f64 + 1.0,
        }
    }
}

/// Output of the path-sum oracle for one target point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSum {
    pub n_max: usize,
    pub partial_sum: f64,
    /// Upper bound on the discarded tail from `sup_x P_0[X_n = x] ≤ C n^{-d/2}`.
    pub tail_bound: f64,
    /// The constant `C` behind `tail_bound`: the larger of the sup of
    /// `P_0[X_{2m} = 0] (2m)^{d/2}` over computed `m` and its limit `2 (d/2π)^{d/2}`.
    pub tail_constant: f64,
    /// Local-CLT estimate of the discarded tail.
    pub tail_estimate: f64,
    /// Error bound for `tail_estimate` assuming the LCLT remainder stays below
    /// `C_E n^{-d/2-1}` with `C_E` measured on the computed slice `[n_max/2, n_max]`.
    pub tail_estimate_error: f64,
    pub lclt_constant: f64,
    /// `P_0[X_n = x]` for `n = 0..=n_max`.
    pub probabilities: Vec<f64>,
}

impl PathSum {
    pub fn corrected(&self) -> f64 {
        self.partial_sum + self.tail_estimate
    }
}

struct LogFactorials(Vec<f64>);

impl LogFactorials {
    fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        let (mut s, mut c) = (0.0f64, 0.0f64);
        t.push(0.0);
        for k in 1..=n {
            // Kahan summation keeps the table accurate to a few ulps.
            let y = (k as f64).ln() - c;
            let u = s + y;
            c = (u - s) - y;
            s = u;
            t.push(s);
        }
        Self(t)
    }

    fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

fn p1_table(lf: &LogFactorials, n_max: usize, a: usize) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    (0..=n_max)
        .map(|m| {
            if m < a || (m - a) % 2 == 1 {
                0.0
            } else {
                (lf.ln_choose(m, (m + a) / 2) - m as f64 * ln2).exp()
            }
        })
        .collect()
}

/// Path sums for every target in `xs` (all of the same dimension), sharing
/// the binomial weights across targets.
pub fn green_oracle_pathsum_batch(
    xs: &[LatticeVector],
    n_max: usize,
    weight: PathWeight,
) -> Result<Vec<PathSum>> {
    let Some(first) = xs.first() else { return Ok(Vec::new()) };
    let d = first.dim();
    if xs.iter().any(|x| x.dim() != d) {
        return Err(Error::pre("all oracle targets must share one dimension"));
    }
    let bytes = (n_max + 1)
        .checked_mul(8 * (3 * xs.len() + 4 + d))
        .ok_or_else(|| Error::Resource("path-sum window size overflows".into()))?;
    if bytes > MEMORY_CAP_BYTES {
        return Err(Error::Resource(format!(
            "path-sum oracle needs {bytes} bytes, cap is {MEMORY_CAP_BYTES}"
        )));
    }
    let lf = LogFactorials::new(n_max);
    let amax = xs.iter().map(|x| x.linf()).max().unwrap_or(0) as usize;
    let p1: Vec<Vec<f64>> = (0..=amax).map(|a| p1_table(&lf, n_max, a)).collect();

    // Also track x = 0 to measure the sup constant.
    let mut targets: Vec<Vec<usize>> =
        xs.iter().map(|x| x.coords().iter().map(|c| c.unsigned_abs() as usize).collect()).collect();
    targets.push(vec![0; d]);
    let mut q: Vec<Vec<f64>> = targets.iter().map(|t| p1[t[0]].clone()).collect();
    let mut next = vec![0.0; n_max + 1];
    let mut row = Vec::with_capacity(n_max + 1);

    for j in 2..=d {
        let p = 1.0 / j as f64;
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let mode = ((n + 1) as f64 * p).floor().min(n as f64) as usize;
            let lw = |m: usize| lf.ln_choose(n, m) + m as f64 * lp + (n - m) as f64 * lq;
            let top = lw(mode);
            let mut lo = mode;
            while lo > 0 && lw(lo - 1) > top - LOG_CUTOFF {
                lo -= 1;
            }
            let mut hi = mode;
            while hi < n && lw(hi + 1) > top - LOG_CUTOFF {
                hi += 1;
            }
            row.clear();
            row.extend((lo..=hi).map(|m| lw(m).exp()));
            rows.push((lo, row.clone()));
        }
        for (t, qt) in targets.iter().zip(q.iter_mut()) {
            let pj = &p1[t[j - 1]];
            for n in 0..=n_max {
                let (lo, ref w) = rows[n];
                let mut s = 0.0;
                for (i, wm) in w.iter().enumerate() {
                    let m = lo + i;
                    let a = pj[m];
                    if a != 0.0 {
                        s += wm * a * qt[n - m];
                    }
                }
                next[n] = s;
            }
            std::mem::swap(qt, &mut next);
        }
    }

    let origin = q.pop().expect("origin series present");
    let half_d = d as f64 / 2.0;
    let limit = 2.0 * (d as f64 / (2.0 * std::f64::consts::PI)).powf(half_d);
    let empirical = (2..=n_max)
        .step_by(2)
        .map(|m| origin[m] * (m as f64).powf(half_d))
        .fold(0.0, f64::max);
    let tail_constant = empirical.max(limit);

    let out = xs
        .iter()
        .zip(q)
        .map(|(x, probs)| {
            let partial_sum = (0..=n_max).map(|n| weight.at(n) * probs[n]).sum();
            summarize(x, n_max, weight, probs, partial_sum, tail_constant)
        })
        .collect();
    Ok(out)
}

fn lclt(d: usize, r2: f64, n: usize) -> f64 {
    let nf = n as f64;
    let df = d as f64;
    2.0 * (df / (2.0 * std::f64::consts::PI * nf)).powf(df / 2.0) * (-df * r2 / (2.0 * nf)).exp()
}

fn summarize(
    x: &LatticeVector,
    n_max: usize,
    weight: PathWeight,
    probs: Vec<f64>,
    partial_sum: f64,
    tail_constant: f64,
) -> PathSum {
    let d = x.dim();
    let half_d = d as f64 / 2.0;
    let parity = (x.l1() as usize) % 2;
    let r2 = x.l2_sq() as f64;

    let lclt_constant = (n_max / 2..=n_max)
        .filter(|n| *n > 0 && n % 2 == parity)
        .map(|n| (probs[n] - lclt(d, r2, n)).abs() * (n as f64).powf(half_d + 1.0))
        .fold(0.0, f64::max);

    // Σ_{n > n_max, n ≡ parity} of the three series, summed to numerical
    // convergence and closed with an integral bound.
    let mut tail_bound = 0.0;
    let mut tail_estimate = 0.0;
    let mut tail_estimate_error = 0.0;
    let start = if (n_max + 1) % 2 == parity { n_max + 1 } else { n_max + 2 };
    let stop = start + 200 * (n_max + 1).max(100);
    let mut n = start;
    while n < stop {
        let w = weight.at(n);
        let nf = n as f64;
        let even = (2 * (n / 2)).max(2) as f64;
        tail_bound += w * tail_constant * even.powf(-half_d);
        tail_estimate += w * lclt(d, r2, n);
        tail_estimate_error += w * lclt_constant * nf.powf(-half_d - 1.0);
        n += 2;
    }
    // Remainder from `stop` on, for a decreasing summand h over every other n:
    // ½∫_stop^∞ h ≤ Σ ≤ h(stop) + ½∫_stop^∞ h.
    let s = stop as f64;
    let half_integral = |p: f64| -> f64 {
        match weight {
            PathWeight::Simple => s.powf(1.0 - p) / (p - 1.0) / 2.0,
            PathWeight::Bilaplacian => {
                (s.powf(2.0 - p) / (p - 2.0) + s.powf(1.0 - p) / (p - 1.0)) / 2.0
            }
        }
    };
    let first = |p: f64| weight.at(stop) * s.powf(-p);
    let lead = 2.0 * (d as f64 / (2.0 * std::f64::consts::PI)).powf(half_d);
    let c_even = tail_constant * (s / (s - 1.0)).powf(half_d);
    tail_bound += c_even * (half_integral(half_d) + first(half_d));
    tail_estimate += lead * (half_integral(half_d) + 0.5 * first(half_d));
    tail_estimate_error += lead * 0.5 * first(half_d)
        + lclt_constant * (half_integral(half_d + 1.0) + first(half_d + 1.0));

    PathSum {
        n_max,
        partial_sum,
        tail_bound,
        tail_constant,
        tail_estimate,
        tail_estimate_error,
        lclt_constant,
        probabilities: probs,
    }
}

/// Path sum for a single target.
pub fn green_oracle_pathsum(x: &LatticeVector, n_max: usize, weight: PathWeight) -> Result<PathSum> {
    Ok(green_oracle_pathsum_batch(std::slice::from_ref(x), n_max, weight)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[i64]) -> LatticeVector {
        LatticeVector::new(c.to_vec()).unwrap()
    }

    // Brute-force oracle: propagate the full distribution on a box.
    fn brute(x: &[i64], n_max: usize) -> Vec<f64> {
        use std::collections::HashMap;
        let d = x.len();
        let mut dist: HashMap<Vec<i64>, f64> = HashMap::new();
        dist.insert(vec![0; d], 1.0);
        let mut out = Vec::new();
        for _ in 0..=n_max {
            out.push(*dist.get(x).unwrap_or(&0.0));
            let mut nd = HashMap::new();
            for (p, w) in &dist {
                for a in 0..d {
                    for s in [-1, 1] {
                        let mut q = p.clone();
                        q[a] += s;
                        *nd.entry(q).or_insert(0.0) += w / (2 * d) as f64;
                    }
                }
            }
            dist = nd;
        }
        out
    }

    #[test]
    fn first_terms() {
        let r = green_oracle_pathsum(&v(&[0, 0, 0, 0, 0]), 0, PathWeight::Bilaplacian).unwrap();
        assert_eq!(r.partial_sum, 1.0);
        let r = green_oracle_pathsum(&v(&[1, 0, 0, 0, 0]), 1, PathWeight::Bilaplacian).unwrap();
        assert!((r.partial_sum - 0.2).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_propagation() {
        for x in [[0i64, 0, 0, 0, 0], [1, 0, 0, 0, 0], [1, 1, 0, 0, 0], [2, -1, 0, 1, 0]] {
            let want = brute(&x, 8);
            let got = green_oracle_pathsum(&v(&x), 8, PathWeight::Simple).unwrap();
            for n in 0..=8 {
                assert!((got.probabilities[n] - want[n]).abs() < 1e-15, "x={x:?} n={n}");
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_over_the_ball() {
        // Σ_x P[X_4 = x] = 1 over canonical classes weighted by orbit sizes.
        let d = 5;
        let xs: Vec<LatticeVector> = crate::lattice::canonical_offsets(d, 4)
            .into_iter()
            .filter(|c| c.iter().sum::<i64>() <= 4)
            .map(|c| LatticeVector::new(c).unwrap())
            .collect();
        let r = green_oracle_pathsum_batch(&xs, 4, PathWeight::Simple).unwrap();
        let total: f64 = xs
            .iter()
            .zip(&r)
            .map(|(x, p)| p.probabilities[4] * crate::lattice::orbit_size(x.coords()) as f64)
            .sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn memory_cap_is_enforced() {
        let e = green_oracle_pathsum(&v(&[0, 0, 0, 0, 0]), 1 << 34, PathWeight::Simple).unwrap_err();
        assert!(matches!(e, Error::Resource(_)));
    }

    #[test]
    fn partial_sums_nondecreasing() {
        let x = v(&[1, 1, 0, 0, 0]);
        let mut last = 0.0;
        for n in [0, 1, 2, 5, 20, 60] {
            let r = green_oracle_pathsum(&x, n, PathWeight::Bilaplacian).unwrap();
            assert!(r.partial_sum >= last);
            last = r.partial_sum;
        }
    }
}

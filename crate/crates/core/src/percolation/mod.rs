//! Level sets `E^{≥h}`, cluster labelling and the crossing, strong
//! percolation and chemical-distance observables.

mod stats;

use std::collections::{HashSet, VecDeque};

use bitvec::vec::BitVec;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::sampler::{FieldSample, Sampler};

pub use stats::{binomial_upper_bound, clopper_pearson};

/// Confidence level of the reported crossing intervals.
pub const CI_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    NearestNeighbor,
    /// ℓ∞-distance one.
    Star,
}

/// Occupied sites `{x : φ_x ≥ h}` on a grid window.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub window: Window,
    pub periodic: bool,
    pub bits: BitVec,
    pub level: f64,
}

impl OccupancyGrid {
    pub fn from_fn(window: Window, periodic: bool, level: f64, occupied: impl Fn(usize) -> bool) -> Self {
        let bits = (0..window.len()).map(occupied).collect();
        Self { window, periodic, bits, level }
    }

    pub fn occupied(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn occupied_at(&self, x: &[i64]) -> bool {
        let i = if self.periodic { Some(self.window.index_periodic(x)) } else { self.window.index(x) };
        i.is_some_and(|i| self.bits[i])
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    /// The non-periodic grid on `B(0, radius)` (wrapping on a torus).
    pub fn restrict(&self, radius: usize) -> Result<OccupancyGrid> {
        let w = Window::ball(self.window.dim(), radius)?;
        if self.periodic {
            if self.window.sides().iter().any(|&s| s < 2 * radius + 1) {
                return Err(Error::pre("restriction box wraps around the torus"));
            }
        } else if !(0..w.len()).all(|i| self.window.contains(&w.coords(i))) {
            return Err(Error::pre("restriction box leaves the window"));
        }
        let mut x = vec![0i64; w.dim()];
        let bits = (0..w.len())
            .map(|i| {
                w.coords_into(i, &mut x);
                self.occupied_at(&x)
            })
            .collect();
        Ok(OccupancyGrid { window: w, periodic: false, bits, level: self.level })
    }
}

/// `E^{≥h}` of a grid sample; ties `φ_x = h` are occupied.
pub fn threshold(sample: &FieldSample, h: f64) -> Result<OccupancyGrid> {
    let window = sample
        .geometry
        .window()
        .ok_or_else(|| Error::pre("thresholding needs a grid geometry"))?;
    let periodic = sample.geometry.is_periodic();
    Ok(OccupancyGrid::from_fn(window, periodic, h, |i| sample.values[i] >= h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Smallest site index in the cluster.
    pub label: usize,
    pub size: usize,
    pub l1_diameter: i64,
    pub linf_diameter: i64,
}

/// Connected components of an occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    pub grid: OccupancyGrid,
    pub adjacency: Adjacency,
    /// Canonical label per site, `None` for vacant sites.
    pub labels: Vec<Option<usize>>,
    /// Clusters in increasing label order.
    pub clusters: Vec<Cluster>,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = self.parent[x] as usize;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        ra
    }
}

/// Neighbour indices of `i` under `adj`; forward-only when `half` is set.
fn neighbours(w: &Window, i: usize, adj: Adjacency, periodic: bool, half: bool, out: &mut Vec<usize>) {
    out.clear();
    match adj {
        Adjacency::NearestNeighbor => {
            for a in 0..w.dim() {
                if let Some(j) = w.step(i, a, true, periodic) {
                    out.push(j);
                }
                if !half {
                    if let Some(j) = w.step(i, a, false, periodic) {
                        out.push(j);
                    }
                }
            }
        }
        Adjacency::Star => {
            let d = w.dim();
            let total = 3usize.pow(d as u32);
            'offsets: for code in 0..total {
                if code == total / 2 || (half && code < total / 2) {
                    continue;
                }
                let mut j = i;
                let mut c = code;
                for a in (0..d).rev() {
                    let digit = c % 3;
                    c /= 3;
                    let step = match digit {
                        0 => w.step(j, a, false, periodic),
                        2 => w.step(j, a, true, periodic),
                        _ => Some(j),
                    };
                    match step {
                        Some(k) => j = k,
                        None => continue 'offsets,
                    }
                }
                if j != i {
                    out.push(j);
                }
            }
        }
    }
}

/// Union-find labelling with path compression and canonical labels.
pub fn label_clusters(grid: &OccupancyGrid, adjacency: Adjacency) -> ClusterLabeling {
    let w = &grid.window;
    let n = w.len();
    let mut uf = UnionFind::new(n);
    let mut nb = Vec::new();
    for i in grid.bits.iter_ones() {
        neighbours(w, i, adjacency, grid.periodic, true, &mut nb);
        for &j in &nb {
            if grid.bits[j] {
                uf.union(i, j);
            }
        }
    }
    let d = w.dim();
    let signs = 1usize << (d - 1);
    let mut root_to_cluster = vec![u32::MAX; n];
    let mut labels = vec![None; n];
    let mut clusters: Vec<Cluster> = Vec::new();
    // Per cluster: min/max of each coordinate and of each signed sum.
    let mut ext: Vec<(Vec<i64>, Vec<i64>, Vec<i64>, Vec<i64>)> = Vec::new();
    let mut x = vec![0i64; d];
    for i in grid.bits.iter_ones() {
        let r = uf.find(i);
        if root_to_cluster[r] == u32::MAX {
            root_to_cluster[r] = clusters.len() as u32;
            clusters.push(Cluster { label: i, size: 0, l1_diameter: 0, linf_diameter: 0 });
            ext.push((vec![i64::MAX; d], vec![i64::MIN; d], vec![i64::MAX; signs], vec![i64::MIN; signs]));
        }
        let c = root_to_cluster[r] as usize;
        labels[i] = Some(clusters[c].label);
        clusters[c].size += 1;
        w.coords_into(i, &mut x);
        let e = &mut ext[c];
        for a in 0..d {
            e.0[a] = e.0[a].min(x[a]);
            e.1[a] = e.1[a].max(x[a]);
        }
        for s in 0..signs {
            let mut v = x[0];
            for a in 1..d {
                v += if (s >> (a - 1)) & 1 == 1 { -x[a] } else { x[a] };
            }
            e.2[s] = e.2[s].min(v);
            e.3[s] = e.3[s].max(v);
        }
    }
    for (c, e) in clusters.iter_mut().zip(&ext) {
        c.linf_diameter = (0..d).map(|a| e.1[a] - e.0[a]).max().unwrap_or(0);
        c.l1_diameter = (0..signs).map(|s| e.3[s] - e.2[s]).max().unwrap_or(0);
    }
    ClusterLabeling { grid: grid.clone(), adjacency, labels, clusters }
}

impl ClusterLabeling {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, label: usize) -> Option<&Cluster> {
        self.clusters.binary_search_by_key(&label, |c| c.label).ok().map(|k| &self.clusters[k])
    }

    pub fn largest_cluster_size(&self) -> usize {
        self.clusters.iter().map(|c| c.size).max().unwrap_or(0)
    }

    fn index(&self, x: &[i64]) -> Option<usize> {
        let w = &self.grid.window;
        if self.grid.periodic { Some(w.index_periodic(x)) } else { w.index(x) }
    }

    fn require_ball(&self, radius: usize) -> Result<()> {
        let w = &self.grid.window;
        let ok = if self.grid.periodic {
            w.sides().iter().all(|&s| s > 2 * radius + 1)
        } else {
            let lo = -(radius as i64);
            let hi = radius as i64;
            w.contains(&vec![lo; w.dim()]) && w.contains(&vec![hi; w.dim()])
        };
        if ok { Ok(()) } else { Err(Error::pre(format!("window does not contain B(0,{radius})"))) }
    }

    fn labels_in_ball(&self, radius: usize) -> HashSet<usize> {
        let b = Window::ball(self.grid.window.dim(), radius).expect("valid ball");
        let mut x = vec![0i64; b.dim()];
        let mut out = HashSet::new();
        for i in 0..b.len() {
            b.coords_into(i, &mut x);
            if let Some(l) = self.index(&x).and_then(|j| self.labels[j]) {
                out.insert(l);
            }
        }
        out
    }
}

/// Does some cluster meet both `B(0, L)` and the external boundary `∂B(0, 2L)`?
pub fn crossing_indicator(labeling: &ClusterLabeling, l: usize) -> Result<bool> {
    labeling.require_ball(2 * l + 1)?;
    let inner = labeling.labels_in_ball(l);
    if inner.is_empty() {
        return Ok(false);
    }
    let d = labeling.grid.window.dim();
    let outer = 2 * l as i64;
    let face = Window::ball(d - 1, 2 * l)?;
    let mut y = vec![0i64; d - 1];
    let mut x = vec![0i64; d];
    for a in 0..d {
        for sign in [-1i64, 1] {
            for i in 0..face.len() {
                face.coords_into(i, &mut y);
                let mut k = 0;
                for (b, slot) in x.iter_mut().enumerate() {
                    if b == a {
                        *slot = sign * (outer + 1);
                    } else {
                        *slot = y[k];
                        k += 1;
                    }
                }
                if let Some(lab) = labeling.index(&x).and_then(|j| labeling.labels[j]) {
                    if inner.contains(&lab) {
                        return Ok(true);
                    }
                }
            }
        }
    }
    Ok(false)
}

/// `(existence, uniqueness)` of the strong-percolation events at scale `L`.
///
/// Existence: a cluster of ℓ¹-diameter at least `L` meets `B(0, L)`.
/// Uniqueness: the sites in `B(0, L)` of all clusters with ℓ¹-diameter at
/// least `L/10` lie in one component of `E^{≥h} ∩ B(0, 2L)`.
pub fn strong_percolation_events(labeling: &ClusterLabeling, l: usize) -> Result<(bool, bool)> {
    labeling.require_ball(2 * l)?;
    let big = |lab: usize, min: f64| labeling.cluster(lab).is_some_and(|c| c.l1_diameter as f64 >= min);
    let inner = labeling.labels_in_ball(l);
    let existence = inner.iter().any(|&lab| big(lab, l as f64));
    let local = label_clusters(&labeling.grid.restrict(2 * l)?, labeling.adjacency);
    let b = Window::ball(labeling.grid.window.dim(), l)?;
    let mut x = vec![0i64; b.dim()];
    let mut seen: Option<usize> = None;
    let mut uniqueness = true;
    for i in 0..b.len() {
        b.coords_into(i, &mut x);
        let Some(lab) = labeling.index(&x).and_then(|j| labeling.labels[j]) else { continue };
        if !big(lab, l as f64 / 10.0) {
            continue;
        }
        let loc = local.labels[local.grid.window.index(&x).expect("inside B(0,2L)")].expect("occupied");
        match seen {
            None => seen = Some(loc),
            Some(s) if s != loc => {
                uniqueness = false;
                break;
            }
            _ => {}
        }
    }
    Ok((existence, uniqueness))
}

/// Whether `x ↔ y` in the occupied graph, and the graph distance if so.
pub fn connectivity_and_chemical(labeling: &ClusterLabeling, x: &[i64], y: &[i64]) -> Result<(bool, Option<usize>)> {
    let (Some(ix), Some(iy)) = (labeling.index(x), labeling.index(y)) else {
        return Err(Error::pre("point outside the window"));
    };
    match (labeling.labels[ix], labeling.labels[iy]) {
        (Some(a), Some(b)) if a == b => {}
        _ => return Ok((false, None)),
    }
    let n = labeling.labels.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    dist[ix] = 0;
    queue.push_back(ix);
    let mut nb = Vec::new();
    let g = &labeling.grid;
    while let Some(i) = queue.pop_front() {
        if i == iy {
            return Ok((true, Some(dist[i])));
        }
        neighbours(&g.window, i, labeling.adjacency, g.periodic, false, &mut nb);
        for &j in &nb {
            if g.bits[j] && dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    Err(Error::numeric("labels agree but breadth-first search found no path", f64::NAN))
}

/// An axis-parallel box `[lo, hi]` (closed, per axis).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::pre("box corners must be ordered and of equal dimension"));
        }
        Ok(Self { lo, hi })
    }

    /// `B(c, r)` in the ℓ∞ norm.
    pub fn ball(centre: &[i64], r: i64) -> Self {
        Self { lo: centre.iter().map(|c| c - r).collect(), hi: centre.iter().map(|c| c + r).collect() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    /// ℓ∞ distance between the two boxes.
    pub fn distance(&self, other: &LatticeBox) -> i64 {
        (0..self.dim())
            .map(|a| (other.lo[a] - self.hi[a]).max(self.lo[a] - other.hi[a]).max(0))
            .max()
            .unwrap_or(0)
    }
}

/// Largest `h` such that, in `E^{≥h}`, a nearest-neighbour path inside
/// `outer` joins `inner` to the external boundary of `outer`.
///
/// Sites are switched on in decreasing field order (Newman–Ziff) until an
/// inner site and a boundary site share a cluster; the crossing event at
/// level `h` is exactly `threshold ≥ h`. Returns `-∞` if no crossing exists.
pub fn box_crossing_threshold(sample: &FieldSample, inner: &LatticeBox, outer: &LatticeBox) -> Result<f64> {
    let full = sample.geometry.window().ok_or_else(|| Error::pre("needs a grid geometry"))?;
    box_crossing_threshold_by(&full, sample.geometry.is_periodic(), |j| sample.values[j], inner, outer)
}

/// As [`box_crossing_threshold`], reading site `j` of the row-major window
/// `full` through `value`.
pub fn box_crossing_threshold_by(
    full: &Window,
    periodic: bool,
    value: impl Fn(usize) -> f64,
    inner: &LatticeBox,
    outer: &LatticeBox,
) -> Result<f64> {
    let d = full.dim();
    if inner.dim() != d || outer.dim() != d || !outer.contains_box(inner) {
        return Err(Error::pre("inner box must lie in the outer box"));
    }
    let origin: Vec<i64> = outer.lo.iter().map(|v| v - 1).collect();
    let sides: Vec<usize> = outer.lo.iter().zip(&outer.hi).map(|(a, b)| (b - a + 3) as usize).collect();
    if periodic && sides.iter().zip(full.sides()).any(|(s, t)| s >= t) {
        return Err(Error::pre("crossing region wraps around the torus"));
    }
    let w = Window::new(origin, sides)?;
    let mut x = vec![0i64; d];
    let mut vals = vec![f64::NEG_INFINITY; w.len()];
    let mut kind = vec![0u8; w.len()];
    let mut live = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        w.coords_into(i, &mut x);
        let outside = (0..d).filter(|&a| x[a] < outer.lo[a] || x[a] > outer.hi[a]).count();
        if outside > 1 {
            continue;
        }
        let j = if periodic { Some(full.index_periodic(&x)) } else { full.index(&x) };
        let j = j.ok_or_else(|| Error::pre("window does not contain the crossing region"))?;
        vals[i] = value(j);
        kind[i] = if outside == 1 { 2 } else if inner.contains(&x) { 1 } else { 0 };
        live.push(i);
    }
    Ok(source_target_threshold(&w, &vals, &kind, &live))
}

/// Newman–Ziff sweep over the sites `live` of `w`, switched on in decreasing
/// order of `vals`; returns the value at which a cluster first contains a
/// site of kind 1 (source) and one of kind 2 (target), or `-∞`.
pub fn source_target_threshold(w: &Window, vals: &[f64], kind: &[u8], live: &[usize]) -> f64 {
    let mut live = live.to_vec();
    live.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut flags = kind.to_vec();
    let mut uf = UnionFind::new(w.len());
    let mut on = vec![false; w.len()];
    let mut nb = Vec::new();
    for &i in &live {
        on[i] = true;
        let mut f = flags[i];
        neighbours(w, i, Adjacency::NearestNeighbor, false, false, &mut nb);
        for &j in &nb {
            if on[j] {
                let rj = uf.find(j);
                f |= flags[rj];
                uf.union(i, j);
            }
        }
        let r = uf.find(i);
        flags[r] |= f;
        if flags[r] & 3 == 3 {
            return vals[i];
        }
    }
    f64::NEG_INFINITY
}

/// Largest `h` with `B(0, L) ↔ ∂B(0, 2L)` in `E^{≥h}`.
pub fn crossing_threshold(sample: &FieldSample, l: usize) -> Result<f64> {
    let d = sample.geometry.dim();
    let o = vec![0i64; d];
    box_crossing_threshold(sample, &LatticeBox::ball(&o, l as i64), &LatticeBox::ball(&o, 2 * l as i64))
}

/// A coupled crossing-probability estimate at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEstimate {
    pub l: usize,
    pub h: f64,
    pub n_samples: u64,
    pub n_success: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl CrossingEstimate {
    pub fn new(l: usize, h: f64, n_success: u64, n_samples: u64) -> Self {
        let (ci_lo, ci_hi) = clopper_pearson(n_success, n_samples, CI_LEVEL);
        Self { l, h, n_samples, n_success, p_hat: n_success as f64 / n_samples as f64, ci_lo, ci_hi }
    }
}

/// Crossing indicators of one sample along a sorted level grid; the
/// per-sample monotonicity is checked, not assumed.
pub fn crossing_profile(sample: &FieldSample, l: usize, h_grid: &[f64]) -> Result<Vec<bool>> {
    let full = threshold(sample, f64::NEG_INFINITY)?;
    let mut out = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let mut g = full.restrict(2 * l + 1)?;
        let w = g.window.clone();
        let mut x = vec![0i64; w.dim()];
        for i in 0..w.len() {
            w.coords_into(i, &mut x);
            let j = if full.periodic { full.window.index_periodic(&x) } else { full.window.index(&x).expect("restricted") };
            g.bits.set(i, sample.values[j] >= h);
        }
        g.level = h;
        out.push(crossing_indicator(&label_clusters(&g, Adjacency::NearestNeighbor), l)?);
    }
    if out.windows(2).any(|p| p[1] && !p[0]) {
        return Err(Error::numeric(format!("crossing not monotone in h for stream {}", sample.stream_id), f64::NAN));
    }
    Ok(out)
}

/// Coupled sweep: every level uses the same samples (streams
/// `first..first + n_samples`), merged in stream order.
pub fn sweep_crossing(
    sampler: &dyn Sampler,
    l: usize,
    h_grid: &[f64],
    seed: u64,
    first: u64,
    n_samples: u64,
) -> Result<Vec<CrossingEstimate>> {
    if h_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::pre("h grid must be sorted"));
    }
    if n_samples == 0 {
        return Err(Error::pre("need at least one sample"));
    }
    let profiles = (first..first + n_samples)
        .into_par_iter()
        .map(|s| crossing_profile(&sampler.sample(seed, s)?, l, h_grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(h_grid
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let hits = profiles.iter().filter(|p| p[k]).count() as u64;
            CrossingEstimate::new(l, h, hits, n_samples)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize, side: usize, f: impl Fn(&[i64]) -> bool) -> OccupancyGrid {
        let w = Window::ball(d, side).unwrap();
        let ww = w.clone();
        OccupancyGrid::from_fn(w, false, 0.0, move |i| f(&ww.coords(i)))
    }

    #[test]
    fn full_box_is_one_cluster() {
        let g = grid(3, 2, |_| true);
        let l = label_clusters(&g, Adjacency::NearestNeighbor);
        assert_eq!(l.cluster_count(), 1);
        assert_eq!(l.clusters[0].l1_diameter, 12);
        assert_eq!(l.clusters[0].linf_diameter, 4);
        assert_eq!(l.clusters[0].label, 0);
    }

    #[test]
    fn checkerboard_is_all_singletons_under_nn_but_not_star() {
        let g = grid(3, 2, |x| x.iter().sum::<i64>().rem_euclid(2) == 0);
        let l = label_clusters(&g, Adjacency::NearestNeighbor);
        assert_eq!(l.cluster_count(), g.count());
        let s = label_clusters(&g, Adjacency::Star);
        assert_eq!(s.cluster_count(), 1);
    }

    #[test]
    fn periodic_wrap_joins_clusters() {
        let w = Window::cube(2, 4).unwrap();
        let ww = w.clone();
        let g = OccupancyGrid::from_fn(w, true, 0.0, move |i| ww.coords(i)[1] != 1 && ww.coords(i)[0] == 0);
        assert_eq!(label_clusters(&g, Adjacency::NearestNeighbor).cluster_count(), 1);
        let mut open = g.clone();
        open.periodic = false;
        assert_eq!(label_clusters(&open, Adjacency::NearestNeighbor).cluster_count(), 2);
    }

    #[test]
    fn crossing_trivial_cases() {
        let full = label_clusters(&grid(5, 3, |_| true), Adjacency::NearestNeighbor);
        assert!(crossing_indicator(&full, 1).unwrap());
        let ring = label_clusters(
            &grid(5, 3, |x| x.iter().map(|c| c.abs()).max().unwrap() <= 1),
            Adjacency::NearestNeighbor,
        );
        assert!(!crossing_indicator(&ring, 1).unwrap());
        assert!(crossing_indicator(&full, 2).is_err());
    }

    #[test]
    fn strong_events_trivial_cases() {
        let full = label_clusters(&grid(5, 4, |_| true), Adjacency::NearestNeighbor);
        assert_eq!(strong_percolation_events(&full, 2).unwrap(), (true, true));
        let empty = label_clusters(&grid(5, 4, |_| false), Adjacency::NearestNeighbor);
        assert_eq!(strong_percolation_events(&empty, 2).unwrap(), (false, true));
        // Two parallel lines through B(0, L), disjoint inside B(0, 2L).
        let lines = label_clusters(
            &grid(5, 4, |x| x[2..].iter().all(|&c| c == 0) && (x[1] == 0 || x[1] == 2)),
            Adjacency::NearestNeighbor,
        );
        assert_eq!(strong_percolation_events(&lines, 2).unwrap(), (true, false));
    }

    #[test]
    fn chemical_distance_basics() {
        let g = grid(3, 2, |x| x[1] == 0 && x[2] == 0 || x[0] == 2 && x[2] == 0);
        let l = label_clusters(&g, Adjacency::NearestNeighbor);
        assert_eq!(connectivity_and_chemical(&l, &[0, 0, 0], &[0, 0, 0]).unwrap(), (true, Some(0)));
        assert_eq!(connectivity_and_chemical(&l, &[0, 0, 0], &[1, 0, 0]).unwrap(), (true, Some(1)));
        assert_eq!(connectivity_and_chemical(&l, &[-2, 0, 0], &[2, 2, 0]).unwrap(), (true, Some(6)));
        assert_eq!(connectivity_and_chemical(&l, &[0, 0, 0], &[0, 1, 1]).unwrap(), (false, None));
    }

    #[test]
    fn cluster_sizes_account_for_all_sites() {
        let g = grid(4, 2, |x| (x[0] * 7 + x[1] * 3 + x[2] * 5 + x[3]).rem_euclid(3) != 0);
        let l = label_clusters(&g, Adjacency::NearestNeighbor);
        assert_eq!(l.clusters.iter().map(|c| c.size).sum::<usize>(), g.count());
    }

    /// Component id per site by breadth-first search over explicit
    /// coordinate neighbours (`None` for vacant sites).
    fn bfs_components(w: &Window, occ: &[bool], periodic: bool, star: bool) -> Vec<Option<usize>> {
        let d = w.dim();
        let mut comp = vec![None; w.len()];
        let mut offsets = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let v: Vec<i64> = (0..d).map(|_| { let r = (c % 3) as i64 - 1; c /= 3; r }).collect();
            let nz = v.iter().filter(|&&e| e != 0).count();
            if nz == 1 || (star && nz > 0) {
                offsets.push(v);
            }
        }
        for s in 0..w.len() {
            if !occ[s] || comp[s].is_some() {
                continue;
            }
            comp[s] = Some(s);
            let mut q = VecDeque::from([s]);
            while let Some(i) = q.pop_front() {
                let x = w.coords(i);
                for o in &offsets {
                    let y: Vec<i64> = x.iter().zip(o).map(|(a, b)| a + b).collect();
                    let j = if periodic { Some(w.index_periodic(&y)) } else { w.index(&y) };
                    if let Some(j) = j {
                        if occ[j] && comp[j].is_none() {
                            comp[j] = Some(s);
                            q.push_back(j);
                        }
                    }
                }
            }
        }
        comp
    }

    fn agrees_with_bfs(w: Window, occ: Vec<bool>, periodic: bool, adj: Adjacency) -> bool {
        let o2 = occ.clone();
        let g = OccupancyGrid::from_fn(w.clone(), periodic, 0.0, move |i| o2[i]);
        let lab = label_clusters(&g, adj);
        lab.labels == bfs_components(&w, &occ, periodic, adj == Adjacency::Star)
    }

    #[test]
    fn all_slab_occupancies_match_bfs() {
        let w = Window::new(vec![-1, -1, 0, 0, 0], vec![3, 3, 1, 1, 1]).unwrap();
        for mask in 0u32..512 {
            let occ: Vec<bool> = (0..9).map(|b| mask >> b & 1 == 1).collect();
            for adj in [Adjacency::NearestNeighbor, Adjacency::Star] {
                assert!(agrees_with_bfs(w.clone(), occ.clone(), false, adj), "mask {mask}");
            }
        }
    }

    #[test]
    fn ties_are_occupied() {
        use crate::sampler::Geometry;
        let s = FieldSample { geometry: Geometry::Torus { sides: vec![1] }, values: vec![0.25], seed: 0, stream_id: 0 };
        assert!(threshold(&s, 0.25).unwrap().occupied(0));
        assert!(!threshold(&s, 0.2500001).unwrap().occupied(0));
    }

    fn torus_sample(side: usize, d: usize, values: Vec<f64>) -> FieldSample {
        use crate::sampler::Geometry;
        FieldSample { geometry: Geometry::Torus { sides: vec![side; d] }, values, seed: 0, stream_id: 0 }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn random_cubes_match_bfs(bits in proptest::collection::vec(proptest::bool::weighted(0.45), 512), periodic: bool, star: bool) {
            let w = Window::cube(3, 8).unwrap();
            let adj = if star { Adjacency::Star } else { Adjacency::NearestNeighbor };
            proptest::prop_assert!(agrees_with_bfs(w, bits, periodic, adj));
        }

        #[test]
        fn crossing_threshold_matches_indicator(vals in proptest::collection::vec(-1.0f64..1.0, 4096), h in -1.0f64..1.0) {
            let s = torus_sample(8, 4, vals);
            let t = crossing_threshold(&s, 1).unwrap();
            let ind = crossing_profile(&s, 1, &[h]).unwrap()[0];
            proptest::prop_assert_eq!(t >= h, ind);
        }

        #[test]
        fn torus_shift_preserves_cluster_sizes(vals in proptest::collection::vec(-1.0f64..1.0, 216), shift in 0usize..216) {
            let w = Window::cube(3, 6).unwrap();
            let shifted: Vec<f64> = (0..w.len()).map(|i| {
                let x = w.coords(i);
                let y: Vec<i64> = x.iter().enumerate().map(|(a, c)| c + (shift / 6usize.pow(a as u32) % 6) as i64).collect();
                vals[w.index_periodic(&y)]
            }).collect();
            let sizes = |v: Vec<f64>| {
                let g = threshold(&torus_sample(6, 3, v), 0.0).unwrap();
                let mut s: Vec<usize> = label_clusters(&g, Adjacency::NearestNeighbor).clusters.iter().map(|c| c.size).collect();
                s.sort_unstable();
                s
            };
            proptest::prop_assert_eq!(sizes(vals.clone()), sizes(shifted));
        }

        #[test]
        fn chemical_distance_at_least_l1(bits in proptest::collection::vec(proptest::bool::weighted(0.7), 125), a in 0usize..125, b in 0usize..125) {
            let w = Window::cube(3, 5).unwrap();
            let ww = w.clone();
            let g = OccupancyGrid::from_fn(w, false, 0.0, move |i| bits[i]);
            let lab = label_clusters(&g, Adjacency::NearestNeighbor);
            let (x, y) = (ww.coords(a), ww.coords(b));
            let (conn, dist) = connectivity_and_chemical(&lab, &x, &y).unwrap();
            proptest::prop_assert_eq!(conn, dist.is_some());
            if let Some(dist) = dist {
                let l1: i64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
                proptest::prop_assert!(dist as i64 >= l1);
            }
        }
    }
}

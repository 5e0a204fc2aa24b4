//! Lattice points and rectangular windows of ℤ^d.

use crate::error::{Error, Result};

/// A point of ℤ^d.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeVector {
    coords: Vec<i64>,
}

impl LatticeVector {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::pre("lattice vector needs at least one coordinate"));
        }
        Ok(Self { coords })
    }

    pub fn origin(d: usize) -> Self {
        Self { coords: vec![0; d.max(1)] }
    }

    pub fn unit(d: usize, axis: usize) -> Self {
        let mut coords = vec![0; d.max(1)];
        coords[axis] = 1;
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn l1(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn l2_sq(&self) -> i64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    /// Representative of the signed-permutation orbit: absolute values sorted
    /// in decreasing order.
    pub fn canonical(&self) -> Self {
        Self { coords: canonical_offset(&self.coords) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        }
    }
}

pub fn canonical_offset(x: &[i64]) -> Vec<i64> {
    let mut c: Vec<i64> = x.iter().map(|v| v.abs()).collect();
    c.sort_unstable_by(|a, b| b.cmp(a));
    c
}

/// Every canonical offset with sup-norm at most `radius` in dimension `d`,
/// in a fixed order (lexicographic on the decreasing coordinate tuples).
pub fn canonical_offsets(d: usize, radius: i64) -> Vec<Vec<i64>> {
    fn rec(d: usize, cap: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for v in 0..=cap {
            prefix.push(v);
            rec(d, v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, radius.max(0), &mut Vec::with_capacity(d), &mut out);
    out
}

/// Number of lattice points in the signed-permutation orbit of `x`.
pub fn orbit_size(x: &[i64]) -> u64 {
    let c = canonical_offset(x);
    let mut n: u64 = (1..=c.len() as u64).product();
    let mut i = 0;
    while i < c.len() {
        let mut j = i;
        while j < c.len() && c[j] == c[i] {
            j += 1;
        }
        n /= (1..=(j - i) as u64).product::<u64>();
        i = j;
    }
    let nonzero = c.iter().filter(|&&v| v != 0).count() as u32;
    n * 2u64.pow(nonzero)
}

/// A rectangular window `origin + [0, sides)` of ℤ^d stored in row-major
/// order (last axis fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    origin: Vec<i64>,
    sides: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Window {
    pub fn new(origin: Vec<i64>, sides: Vec<usize>) -> Result<Self> {
        if origin.len() != sides.len() || sides.is_empty() {
            return Err(Error::pre("window origin and sides must have equal nonzero length"));
        }
        if sides.contains(&0) {
            return Err(Error::pre("window sides must be positive"));
        }
        let mut strides = vec![1usize; sides.len()];
        for a in (0..sides.len() - 1).rev() {
            strides[a] = strides[a + 1]
                .checked_mul(sides[a + 1])
                .ok_or_else(|| Error::Resource("window too large".into()))?;
        }
        let len = strides[0]
            .checked_mul(sides[0])
            .ok_or_else(|| Error::Resource("window too large".into()))?;
        Ok(Self { origin, sides, strides, len })
    }

    /// The box `{x : |x|_∞ ≤ radius}`.
    pub fn ball(d: usize, radius: usize) -> Result<Self> {
        Self::new(vec![-(radius as i64); d], vec![2 * radius + 1; d])
    }

    /// The torus-style window `[0, side)^d`.
    pub fn cube(d: usize, side: usize) -> Result<Self> {
        Self::new(vec![0; d], vec![side; d])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.origin).zip(&self.sides).all(|((&c, &o), &s)| {
                c >= o && c < o + s as i64
            })
    }

    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(
            x.iter()
                .zip(&self.origin)
                .zip(&self.strides)
                .map(|((&c, &o), &st)| (c - o) as usize * st)
                .sum(),
        )
    }

    /// Index of `x` with every coordinate reduced modulo the side length.
    pub fn index_periodic(&self, x: &[i64]) -> usize {
        x.iter()
            .zip(&self.origin)
            .zip(self.sides.iter().zip(&self.strides))
            .map(|((&c, &o), (&s, &st))| (c - o).rem_euclid(s as i64) as usize * st)
            .sum()
    }

    pub fn coords_into(&self, mut idx: usize, out: &mut [i64]) {
        for a in 0..self.dim() {
            let q = idx / self.strides[a];
            idx -= q * self.strides[a];
            out[a] = self.origin[a] + q as i64;
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        self.coords_into(idx, &mut out);
        out
    }

    /// Position of `idx` along `axis`, counted from the window origin.
    #[inline]
    pub fn axis_pos(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.sides[axis]
    }

    /// Neighbor of `idx` one step along `axis` (`forward` selects the sign).
    #[inline]
    pub fn step(&self, idx: usize, axis: usize, forward: bool, periodic: bool) -> Option<usize> {
        let p = self.axis_pos(idx, axis);
        let s = self.sides[axis];
        let st = self.strides[axis];
        if forward {
            if p + 1 < s {
                Some(idx + st)
            } else if periodic {
                Some(idx + st - s * st)
            } else {
                None
            }
        } else if p > 0 {
            Some(idx - st)
        } else if periodic {
            Some(idx + (s - 1) * st)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let w = Window::new(vec![-1, 2, 0], vec![3, 4, 5]).unwrap();
        for i in 0..w.len() {
            assert_eq!(w.index(&w.coords(i)), Some(i));
        }
        assert_eq!(w.index(&[2, 2, 0]), None);
    }

    #[test]
    fn last_axis_fastest() {
        let w = Window::cube(3, 4).unwrap();
        assert_eq!(w.coords(1), vec![0, 0, 1]);
        assert_eq!(w.coords(4), vec![0, 1, 0]);
    }

    #[test]
    fn periodic_steps_wrap() {
        let w = Window::cube(2, 3).unwrap();
        let i = w.index(&[0, 2]).unwrap();
        assert_eq!(w.step(i, 1, true, false), None);
        assert_eq!(w.step(i, 1, true, true), w.index(&[0, 0]));
        assert_eq!(w.step(i, 0, false, true), w.index(&[2, 2]));
    }

    #[test]
    fn orbit_sizes_partition_the_ball() {
        for d in 1..=5 {
            let total: u64 = canonical_offsets(d, 2).iter().map(|c| orbit_size(c)).sum();
            assert_eq!(total, 5u64.pow(d as u32));
        }
    }
}

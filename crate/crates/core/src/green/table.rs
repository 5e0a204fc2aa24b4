//! `GreenTable`: Green-function values on a window with per-entry error
//! bounds, plus its binary cache format.
//!
//! Layout (little endian): `b"MPGT"`, `u16` version, `u8` kind code, `u32`
//! kind parameter `N`, `u32 d`, `u32` radius, `f64` tolerance, `u64` probe
//! count followed by the probe coordinates as `i64`, `u64` entry count, then
//! `(f64 value, f64 error)` pairs. Translation-invariant kinds list one entry
//! per canonical offset; column kinds list full columns over `B(0, N)`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lattice::{canonical_offset, canonical_offsets, Window};

pub const MAGIC: &[u8; 4] = b"MPGT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GreenKind {
    Simple,
    Bilaplacian,
    DirichletGN(usize),
    KilledGN(usize),
    BarGN(usize),
}

impl GreenKind {
    fn code(self) -> (u8, u32) {
        match self {
            GreenKind::Simple => (0, 0),
            GreenKind::Bilaplacian => (1, 0),
            GreenKind::DirichletGN(n) => (2, n as u32),
            GreenKind::KilledGN(n) => (3, n as u32),
            GreenKind::BarGN(n) => (4, n as u32),
        }
    }

    fn from_code(code: u8, n: u32) -> Result<Self> {
        let n = n as usize;
        Ok(match code {
            0 => GreenKind::Simple,
            1 => GreenKind::Bilaplacian,
            2 => GreenKind::DirichletGN(n),
            3 => GreenKind::KilledGN(n),
            4 => GreenKind::BarGN(n),
            c => return Err(Error::Format(format!("unknown table kind {c}"))),
        })
    }

    pub fn is_translation_invariant(self) -> bool {
        matches!(self, GreenKind::Simple | GreenKind::Bilaplacian)
    }

    pub fn label(self) -> String {
        match self {
            GreenKind::Simple => "g".into(),
            GreenKind::Bilaplacian => "G".into(),
            GreenKind::DirichletGN(n) => format!("GN{n}"),
            GreenKind::KilledGN(n) => format!("gN{n}"),
            GreenKind::BarGN(n) => format!("barGN{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Data {
    Offsets { keys: Vec<Vec<i64>>, values: Vec<f64>, errors: Vec<f64>, index: HashMap<Vec<i64>, usize> },
    Columns { window: Window, probes: Vec<Vec<i64>>, values: Vec<Vec<f64>>, errors: Vec<f64> },
}

/// Immutable table of Green-function values.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenTable {
    kind: GreenKind,
    d: usize,
    radius: usize,
    tol: f64,
    data: Data,
}

impl GreenTable {
    /// Table over canonical offsets `|x|_∞ ≤ radius`; `entries` follows
    /// `canonical_offsets(d, radius)`.
    pub fn from_offsets(kind: GreenKind, d: usize, radius: usize, tol: f64, entries: Vec<(f64, f64)>) -> Result<Self> {
        if !kind.is_translation_invariant() {
            return Err(Error::pre("offset tables hold translation-invariant kinds only"));
        }
        let keys = canonical_offsets(d, radius as i64);
        if keys.len() != entries.len() {
            return Err(Error::pre(format!("expected {} entries, got {}", keys.len(), entries.len())));
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let (values, errors) = entries.into_iter().unzip();
        Ok(Self { kind, d, radius, tol, data: Data::Offsets { keys, values, errors, index } })
    }

    /// Table of full columns over `B(0, N)` for the listed probe points.
    pub fn from_columns(kind: GreenKind, d: usize, tol: f64, probes: Vec<Vec<i64>>, columns: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let n = match kind {
            GreenKind::DirichletGN(n) | GreenKind::KilledGN(n) | GreenKind::BarGN(n) => n,
            _ => return Err(Error::pre("column tables hold finite-volume kinds only")),
        };
        let window = Window::ball(d, n)?;
        if probes.len() != columns.len() || columns.iter().any(|(c, _)| c.len() != window.len()) {
            return Err(Error::pre("column count or length mismatch"));
        }
        if probes.iter().any(|p| !window.contains(p)) {
            return Err(Error::pre("probe outside the box"));
        }
        let (values, errors) = columns.into_iter().unzip();
        Ok(Self { kind, d, radius: n, tol, data: Data::Columns { window, probes, values, errors } })
    }

    pub fn kind(&self) -> GreenKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Value at offset `x` (translation-invariant kinds).
    pub fn at(&self, x: &[i64]) -> Option<f64> {
        self.at_with_error(x).map(|(v, _)| v)
    }

    pub fn at_with_error(&self, x: &[i64]) -> Option<(f64, f64)> {
        match &self.data {
            Data::Offsets { values, errors, index, .. } => {
                let i = *index.get(&canonical_offset(x))?;
                Some((values[i], errors[i]))
            }
            Data::Columns { .. } => None,
        }
    }

    /// Value at the pair `(x, y)`: the difference for translation-invariant
    /// kinds, a column lookup (using symmetry if needed) for finite kinds.
    pub fn pair(&self, x: &[i64], y: &[i64]) -> Option<f64> {
        match &self.data {
            Data::Offsets { .. } => {
                let diff: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                self.at(&diff)
            }
            Data::Columns { window, probes, values, .. } => {
                if let Some(j) = probes.iter().position(|p| p.as_slice() == x) {
                    return window.index(y).map(|i| values[j][i]);
                }
                let j = probes.iter().position(|p| p.as_slice() == y)?;
                window.index(x).map(|i| values[j][i])
            }
        }
    }

    pub fn column(&self, probe: &[i64]) -> Option<&[f64]> {
        match &self.data {
            Data::Columns { probes, values, .. } => {
                probes.iter().position(|p| p.as_slice() == probe).map(|j| values[j].as_slice())
            }
            Data::Offsets { .. } => None,
        }
    }

    pub fn probes(&self) -> Vec<Vec<i64>> {
        match &self.data {
            Data::Columns { probes, .. } => probes.clone(),
            Data::Offsets { keys, .. } => keys.clone(),
        }
    }

    pub fn window(&self) -> Option<&Window> {
        match &self.data {
            Data::Columns { window, .. } => Some(window),
            Data::Offsets { .. } => None,
        }
    }

    /// Largest per-entry error bound.
    pub fn max_error(&self) -> f64 {
        let e = match &self.data {
            Data::Offsets { errors, .. } | Data::Columns { errors, .. } => errors,
        };
        e.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let (code, n) = self.kind.code();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[code])?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.radius as u32).to_le_bytes())?;
        w.write_all(&self.tol.to_le_bytes())?;
        match &self.data {
            Data::Offsets { values, errors, .. } => {
                w.write_all(&0u64.to_le_bytes())?;
                w.write_all(&(values.len() as u64).to_le_bytes())?;
                for (v, e) in values.iter().zip(errors) {
                    w.write_all(&v.to_le_bytes())?;
                    w.write_all(&e.to_le_bytes())?;
                }
            }
            Data::Columns { probes, values, errors, .. } => {
                w.write_all(&(probes.len() as u64).to_le_bytes())?;
                for p in probes {
                    for c in p {
                        w.write_all(&c.to_le_bytes())?;
                    }
                }
                let count: usize = values.iter().map(Vec::len).sum();
                w.write_all(&(count as u64).to_le_bytes())?;
                for (col, e) in values.iter().zip(errors) {
                    for v in col {
                        w.write_all(&v.to_le_bytes())?;
                        w.write_all(&e.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_n(r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let [code] = read_n::<1>(r)?;
        let n = u32::from_le_bytes(read_n(r)?);
        let kind = GreenKind::from_code(code, n)?;
        let d = u32::from_le_bytes(read_n(r)?) as usize;
        let radius = u32::from_le_bytes(read_n(r)?) as usize;
        let tol = f64::from_le_bytes(read_n(r)?);
        let nprobes = u64::from_le_bytes(read_n(r)?) as usize;
        let mut probes = Vec::with_capacity(nprobes);
        for _ in 0..nprobes {
            let mut p = Vec::with_capacity(d);
            for _ in 0..d {
                p.push(i64::from_le_bytes(read_n(r)?));
            }
            probes.push(p);
        }
        let count = u64::from_le_bytes(read_n(r)?) as usize;
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let v = f64::from_le_bytes(read_n(r)?);
            let e = f64::from_le_bytes(read_n(r)?);
            pairs.push((v, e));
        }
        if kind.is_translation_invariant() {
            return Self::from_offsets(kind, d, radius, tol, pairs);
        }
        let len = Window::ball(d, radius)?.len();
        if nprobes * len != count {
            return Err(Error::Format("entry count does not match probes".into()));
        }
        let columns = pairs
            .chunks(len.max(1))
            .map(|c| (c.iter().map(|p| p.0).collect(), c.first().map_or(0.0, |p| p.1)))
            .collect();
        Self::from_columns(kind, d, tol, probes, columns)
    }

    /// Loads the table from `dir` if a cache entry for `(kind, d, radius, tol)`
    /// exists; otherwise builds it and stores it.
    pub fn cached(
        dir: &Path,
        kind: GreenKind,
        d: usize,
        radius: usize,
        tol: f64,
        build: impl FnOnce() -> Result<GreenTable>,
    ) -> Result<GreenTable> {
        let path = cache_path(dir, kind, d, radius, tol);
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(t) = Self::read_from(&mut bytes.as_slice()) {
                return Ok(t);
            }
        }
        let table = build()?;
        fs::create_dir_all(dir)?;
        let mut buf = Vec::new();
        table.write_to(&mut buf)?;
        fs::write(&path, buf)?;
        Ok(table)
    }
}

pub fn cache_path(dir: &Path, kind: GreenKind, d: usize, radius: usize, tol: f64) -> PathBuf {
    dir.join(format!("{}_d{d}_r{radius}_tol{tol:e}.mpgt", kind.label()))
}

fn read_n<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_offsets() -> GreenTable {
        let n = canonical_offsets(5, 1).len();
        let entries = (0..n).map(|i| (1.0 / (i + 1) as f64, 1e-12)).collect();
        GreenTable::from_offsets(GreenKind::Bilaplacian, 5, 1, 1e-12, entries).unwrap()
    }

    #[test]
    fn offsets_use_canonical_lookup() {
        let t = sample_offsets();
        assert_eq!(t.at(&[0, -1, 0, 1, 0]), t.at(&[1, 1, 0, 0, 0]));
        assert_eq!(t.pair(&[2, 0, 0, 0, 0], &[1, 0, 0, 0, 0]), t.at(&[1, 0, 0, 0, 0]));
        assert_eq!(t.at(&[2, 0, 0, 0, 0]), None);
    }

    #[test]
    fn binary_roundtrip() {
        let t = sample_offsets();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        assert_eq!(GreenTable::read_from(&mut buf.as_slice()).unwrap(), t);

        let w = Window::ball(2, 1).unwrap();
        let cols = vec![((0..w.len()).map(|i| i as f64).collect(), 1e-9)];
        let c = GreenTable::from_columns(GreenKind::KilledGN(1), 2, 1e-9, vec![vec![0, 0]], cols).unwrap();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(GreenTable::read_from(&mut buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn corrupt_header_rejected() {
        let mut buf = Vec::new();
        sample_offsets().write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(GreenTable::read_from(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn cache_builds_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut calls = 0;
        for _ in 0..2 {
            let t = GreenTable::cached(dir.path(), GreenKind::Bilaplacian, 5, 1, 1e-12, || {
                calls += 1;
                Ok(sample_offsets())
            })
            .unwrap();
            assert_eq!(t, sample_offsets());
        }
        assert_eq!(calls, 1);
    }
}

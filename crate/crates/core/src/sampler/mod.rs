//! Exact samplers for the membrane model: Dirichlet box, spectral torus and
//! exact infinite-volume windows, plus the conditional split `φ = ξ + ψ`.

mod dirichlet;
mod exact;
mod split;
mod torus;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::Window;

pub use dirichlet::DirichletSampler;
pub use exact::{box_with_double_layer, ExactSampler, MAX_EXACT_SITES};
pub use split::{bilaplacian_at, conditional_split, conditional_xi, ConditionalSplit, SplitRegion};
pub use torus::{torus_covariance, TorusSampler};

/// Where a sample lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// `B(0, radius)` with zero data outside.
    DirichletBox { d: usize, radius: usize },
    /// `∏ ℤ/L_iℤ`, values indexed over `[0, L_i)`.
    Torus { sides: Vec<usize> },
    /// `B(0, radius)` under the infinite-volume law.
    ExactWindow { d: usize, radius: usize },
    /// An arbitrary finite site list under the infinite-volume law.
    ExactSites { sites: Vec<Vec<i64>> },
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match self {
            Geometry::DirichletBox { d, .. } | Geometry::ExactWindow { d, .. } => *d,
            Geometry::Torus { sides } => sides.len(),
            Geometry::ExactSites { sites } => sites.first().map_or(0, Vec::len),
        }
    }

    /// Row-major window for grid geometries.
    pub fn window(&self) -> Option<Window> {
        match self {
            Geometry::DirichletBox { d, radius } | Geometry::ExactWindow { d, radius } => {
                Window::ball(*d, *radius).ok()
            }
            Geometry::Torus { sides } => Window::new(vec![0; sides.len()], sides.clone()).ok(),
            Geometry::ExactSites { .. } => None,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Geometry::ExactSites { sites } => sites.len(),
            g => g.window().map_or(0, |w| w.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Geometry::Torus { .. })
    }
}

/// One realisation of the field with its seed provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub geometry: Geometry,
    pub values: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

/// Deterministic generator for `(seed, stream_id)`.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// A sampler producing independent samples per stream id.
pub trait Sampler: Sync {
    fn geometry(&self) -> &Geometry;
    fn sample(&self, seed: u64, stream_id: u64) -> Result<FieldSample>;

    /// Streams `first..first + count` in order.
    fn samples(&self, seed: u64, first: u64, count: u64) -> Result<Vec<FieldSample>> {
        (first..first + count).map(|s| self.sample(seed, s)).collect()
    }
}

const DUMP_MAGIC: &[u8; 4] = b"MPFS";
const DUMP_VERSION: u16 = 1;

/// Writes a raw sample dump: `MPFS`, version, geometry descriptor, seed,
/// stream id, value count and the values in row-major order.
pub fn write_dump(sample: &FieldSample, w: &mut impl Write) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    let put = |w: &mut dyn Write, v: u64| w.write_all(&v.to_le_bytes());
    match &sample.geometry {
        Geometry::DirichletBox { d, radius } => {
            w.write_all(&[0])?;
            put(w, *d as u64)?;
            put(w, *radius as u64)?;
        }
        Geometry::Torus { sides } => {
            w.write_all(&[1])?;
            put(w, sides.len() as u64)?;
            for s in sides {
                put(w, *s as u64)?;
            }
        }
        Geometry::ExactWindow { d, radius } => {
            w.write_all(&[2])?;
            put(w, *d as u64)?;
            put(w, *radius as u64)?;
        }
        Geometry::ExactSites { sites } => {
            w.write_all(&[3])?;
            put(w, sample.geometry.dim() as u64)?;
            put(w, sites.len() as u64)?;
            for s in sites {
                for c in s {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
        }
    }
    put(w, sample.seed)?;
    put(w, sample.stream_id)?;
    put(w, sample.values.len() as u64)?;
    for v in &sample.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dump(r: &mut impl Read) -> Result<FieldSample> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Format("bad sample dump magic".into()));
    }
    let mut v2 = [0u8; 2];
    r.read_exact(&mut v2)?;
    if u16::from_le_bytes(v2) != DUMP_VERSION {
        return Err(Error::Format("unsupported sample dump version".into()));
    }
    let mut k = [0u8; 1];
    r.read_exact(&mut k)?;
    let mut get = || -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let geometry = match k[0] {
        0 => Geometry::DirichletBox { d: get()? as usize, radius: get()? as usize },
        1 => {
            let n = get()? as usize;
            Geometry::Torus { sides: (0..n).map(|_| get().map(|v| v as usize)).collect::<Result<_>>()? }
        }
        2 => Geometry::ExactWindow { d: get()? as usize, radius: get()? as usize },
        3 => {
            let d = get()? as usize;
            let n = get()? as usize;
            let mut sites = Vec::with_capacity(n);
            for _ in 0..n {
                sites.push((0..d).map(|_| get().map(|v| v as i64)).collect::<Result<Vec<_>>>()?);
            }
            Geometry::ExactSites { sites }
        }
        other => return Err(Error::Format(format!("unknown geometry code {other}"))),
    };
    let seed = get()?;
    let stream_id = get()?;
    let n = get()? as usize;
    let values = (0..n).map(|_| get().map(f64::from_bits)).collect::<Result<_>>()?;
    Ok(FieldSample { geometry, values, seed, stream_id })
}

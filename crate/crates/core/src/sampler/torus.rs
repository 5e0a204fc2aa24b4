use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{stream_rng, FieldSample, Geometry, Sampler};
use crate::error::{Error, Result};
use crate::lattice::Window;

/// Spectral sampler on the torus `∏ ℤ/L_iℤ` with density `λ̂(θ)^{-2}`,
/// `λ̂(θ) = (1/d) Σ (1 - cos θ_i)`, and the zero mode removed.
///
/// One inverse transform of circular complex noise yields two independent
/// real fields (real and imaginary parts), because the density is even in
/// `θ`. Stream `2k` is the real part and `2k + 1` the imaginary part of the
/// transform keyed by `k`.
pub struct TorusSampler {
    geometry: Geometry,
    window: Window,
    amplitude: Vec<f64>,
    ffts: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for TorusSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusSampler").field("geometry", &self.geometry).finish()
    }
}

/// `λ̂(θ)^{-2}` at the frequency with integer coordinates `k`.
fn spectral_density(k: &[i64], sides: &[usize]) -> f64 {
    let d = sides.len() as f64;
    let lam: f64 = k
        .iter()
        .zip(sides)
        .map(|(&ki, &l)| 1.0 - (2.0 * std::f64::consts::PI * ki as f64 / l as f64).cos())
        .sum::<f64>()
        / d;
    1.0 / (lam * lam)
}

/// Exact torus covariance `V^{-1} Σ_{θ≠0} λ̂(θ)^{-2} cos(θ·x)` by direct summation.
pub fn torus_covariance(sides: &[usize], x: &[i64]) -> Result<f64> {
    let w = Window::new(vec![0; sides.len()], sides.to_vec())?;
    let mut k = vec![0i64; sides.len()];
    let mut s = 0.0;
    for i in 1..w.len() {
        w.coords_into(i, &mut k);
        let phase: f64 = k
            .iter()
            .zip(x)
            .zip(sides)
            .map(|((&ki, &xi), &l)| 2.0 * std::f64::consts::PI * (ki * xi) as f64 / l as f64)
            .sum();
        s += spectral_density(&k, sides) * phase.cos();
    }
    Ok(s / w.len() as f64)
}

impl TorusSampler {
    pub fn new(sides: Vec<usize>) -> Result<Self> {
        if sides.len() < 5 {
            return Err(Error::pre("torus sampler needs d >= 5"));
        }
        if sides.iter().any(|&l| l < 4) {
            return Err(Error::pre("torus sides must be at least 4"));
        }
        let window = Window::new(vec![0; sides.len()], sides.clone())?;
        let vol = window.len() as f64;
        let mut k = vec![0i64; sides.len()];
        let mut amplitude = Vec::with_capacity(window.len());
        for i in 0..window.len() {
            window.coords_into(i, &mut k);
            amplitude.push(if i == 0 { 0.0 } else { (spectral_density(&k, &sides) / vol).sqrt() });
        }
        let mut planner = FftPlanner::new();
        let ffts = sides.iter().map(|&l| planner.plan_fft_inverse(l)).collect();
        Ok(Self { geometry: Geometry::Torus { sides }, window, amplitude, ffts })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// The two real fields generated from transform `pair`.
    pub fn sample_pair(&self, seed: u64, pair: u64) -> (Vec<f64>, Vec<f64>) {
        self.with_pair(seed, pair, |data| (data.iter().map(|c| c.re).collect(), data.iter().map(|c| c.im).collect()))
    }

    /// Calls `f` on transform `pair` (real and imaginary parts are the two
    /// fields) held in a reused per-thread buffer.
    pub fn with_pair<R>(&self, seed: u64, pair: u64, f: impl FnOnce(&[Complex64]) -> R) -> R {
        thread_local! {
            static BUF: std::cell::RefCell<Vec<Complex64>> = const { std::cell::RefCell::new(Vec::new()) };
        }
        BUF.with(|b| {
            let mut data = b.borrow_mut();
            data.clear();
            let mut rng = stream_rng(seed, pair);
            data.extend(self.amplitude.iter().map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * re, a * im)
            }));
            self.transform(&mut data);
            f(&data)
        })
    }

    fn transform(&self, data: &mut [Complex64]) {
        let sides = self.window.sides();
        let strides = self.window.strides();
        let n = data.len();
        for (axis, fft) in self.ffts.iter().enumerate() {
            let l = sides[axis];
            let st = strides[axis];
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            if st == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            // Gather up to COLS neighbouring lines into contiguous rows and transform them together.
            const COLS: usize = 64;
            let block = st * l;
            let mut lines = vec![Complex64::default(); l * COLS.min(st)];
            for b in (0..n).step_by(block) {
                for s0 in (0..st).step_by(COLS) {
                    let w = COLS.min(st - s0);
                    let buf = &mut lines[..l * w];
                    for i in 0..l {
                        let row = &data[b + i * st + s0..b + i * st + s0 + w];
                        for (c, v) in row.iter().enumerate() {
                            buf[c * l + i] = *v;
                        }
                    }
                    fft.process_with_scratch(buf, &mut scratch);
                    for i in 0..l {
                        let row = &mut data[b + i * st + s0..b + i * st + s0 + w];
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = buf[c * l + i];
                        }
                    }
                }
            }
        }
    }
}

impl Sampler for TorusSampler {
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn sample(&self, seed: u64, stream_id: u64) -> Result<FieldSample> {
        let (re, im) = self.sample_pair(seed, stream_id / 2);
        let values = if stream_id % 2 == 0 { re } else { im };
        Ok(FieldSample { geometry: self.geometry.clone(), values, seed, stream_id })
    }

    fn samples(&self, seed: u64, first: u64, count: u64) -> Result<Vec<FieldSample>> {
        let mut out = Vec::with_capacity(count as usize);
        let mut s = first;
        while s < first + count {
            let (re, im) = self.sample_pair(seed, s / 2);
            for (id, values) in [(s / 2 * 2, re), (s / 2 * 2 + 1, im)] {
                if id >= s && id < first + count {
                    out.push(FieldSample { geometry: self.geometry.clone(), values, seed, stream_id: id });
                }
            }
            s = s / 2 * 2 + 2;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_exactly() {
        let t = TorusSampler::new(vec![4; 5]).unwrap();
        for s in t.samples(3, 0, 4).unwrap() {
            let m: f64 = s.values.iter().sum::<f64>() / s.values.len() as f64;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn batch_matches_single_streams() {
        let t = TorusSampler::new(vec![4; 5]).unwrap();
        let batch = t.samples(11, 1, 4).unwrap();
        for s in &batch {
            assert_eq!(s, &t.sample(11, s.stream_id).unwrap());
        }
        assert_eq!(batch.iter().map(|s| s.stream_id).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn variance_equals_sum_of_amplitudes() {
        // Var φ_0 = Σ_θ amplitude² must match the direct covariance sum.
        let sides = vec![4, 4, 4, 5, 6];
        let t = TorusSampler::new(sides.clone()).unwrap();
        let a: f64 = t.amplitude.iter().map(|a| a * a).sum();
        let b = torus_covariance(&sides, &[0; 5]).unwrap();
        assert!((a - b).abs() < 1e-12 * b);
    }
}

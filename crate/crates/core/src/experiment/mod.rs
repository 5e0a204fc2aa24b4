//! Configured experiment runs producing deterministic CSV output.
//!
//! Work is sharded by stream id and merged in stream order, so the worker
//! count only affects wall time.

mod config;
mod decoupling;

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

pub use config::Config;
pub use decoupling::{run_decoupling, split_radius, DecouplingConfig, DecouplingTrial};

use crate::error::{Error, Result};
use crate::green::{
    green_bilaplacian, green_dirichlet_gn, green_oracle_pathsum_batch, infinite_table, PathWeight,
};
use crate::highdim::{decompose, slab_experiment, DecompositionReport};
use crate::lattice::{canonical_offsets, Window};
use crate::percolation::{sweep_crossing, CrossingEstimate};
use crate::renorm::{
    build_schedule, mc_estimate_p1, p1_bound_borell_tis, run_induction, CertificateReport, ErrorModel,
    P1Provenance, RenormInputs,
};
use crate::sampler::{torus_covariance, DirichletSampler, ExactSampler, Sampler, TorusSampler};
use crate::{GreenKind, LatticeVector, QuadratureSpec};

/// Version of the CSV column sets, recorded in the metadata sidecar.
pub const CSV_VERSION: u32 = 1;

/// Samples per shard for streaming covariance estimates.
const SHARD: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    GreenValidate,
    SampleValidate,
    Sweep,
    Decoupling,
    Certify,
    Decompose,
    Slab,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::GreenValidate => "green_validate",
            ExperimentKind::SampleValidate => "sample_validate",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Decoupling => "decoupling",
            ExperimentKind::Certify => "certify",
            ExperimentKind::Decompose => "decompose",
            ExperimentKind::Slab => "slab",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "green_validate" | "green" => ExperimentKind::GreenValidate,
            "sample_validate" | "sample" => ExperimentKind::SampleValidate,
            "sweep" => ExperimentKind::Sweep,
            "decoupling" => ExperimentKind::Decoupling,
            "certify" => ExperimentKind::Certify,
            "decompose" => ExperimentKind::Decompose,
            "slab" => ExperimentKind::Slab,
            _ => return Err(Error::Config(format!("unknown experiment {s:?}"))),
        })
    }
}

/// A finished run: CSV text, provenance metadata and a human summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub meta: String,
    pub summary: String,
}

/// Resolved run settings shared by every experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub workers: usize,
    pub config: Config,
}

impl ExperimentConfig {
    /// Command-line values override `seed` and `workers` from the file.
    pub fn new(kind: ExperimentKind, mut config: Config, seed: Option<u64>, workers: Option<usize>) -> Result<Self> {
        if let Some(s) = seed {
            config.set("seed", s);
        }
        let seed = config.get_or("seed", 0u64)?;
        let workers = match workers {
            Some(w) => w,
            None => config.get_or("workers", 1usize)?,
        };
        if workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(Self { kind, seed, workers, config })
    }

    /// Hash of the configuration without the worker count, which never affects output.
    pub fn config_hash(&self) -> u64 {
        let mut c = self.config.clone();
        c.remove("workers");
        c.hash()
    }

    fn meta(&self, streams: &str) -> String {
        format!(
            "experiment={}\ncsv_version={CSV_VERSION}\nseed={}\nconfig_hash={:016x}\nstreams={streams}\n",
            self.kind.label(),
            self.seed,
            self.config_hash()
        )
    }
}

/// Runs the configured experiment on a pool of `workers` threads.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cfg.kind {
        ExperimentKind::GreenValidate => run_green_validate(cfg),
        ExperimentKind::SampleValidate => run_sample_validate(cfg),
        ExperimentKind::Sweep => run_sweep(cfg),
        ExperimentKind::Decoupling => run_decoupling_csv(cfg),
        ExperimentKind::Certify => run_certify(cfg),
        ExperimentKind::Decompose => run_decompose(cfg),
        ExperimentKind::Slab => run_slab(cfg),
    })
}

fn quadrature(c: &Config, key: &str, default: f64) -> Result<QuadratureSpec> {
    let spec = QuadratureSpec::with_tol(c.get_or(key, default)?);
    spec.validate()?;
    Ok(spec)
}

/// Level grid from `<p>.h` or `<p>.h_min`, `<p>.h_max`, `<p>.h_steps`.
fn h_grid(c: &Config, p: &str, default: &[f64]) -> Result<Vec<f64>> {
    let mut grid = if let Some(list) = c.get_list::<f64>(&format!("{p}.h"))? {
        list
    } else if c.contains(&format!("{p}.h_min")) {
        let lo: f64 = c.require(&format!("{p}.h_min"))?;
        let hi: f64 = c.require(&format!("{p}.h_max"))?;
        let steps: usize = c.require(&format!("{p}.h_steps"))?;
        if steps < 2 || !(hi > lo) {
            return Err(Error::Config(format!("{p}: need h_max > h_min and h_steps >= 2")));
        }
        (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
    } else {
        default.to_vec()
    };
    if grid.is_empty() || grid.iter().any(|h| !h.is_finite()) {
        return Err(Error::Config(format!("{p}: level grid must be finite and nonempty")));
    }
    grid.sort_by(f64::total_cmp);
    Ok(grid)
}

fn crossing_rows(out: &mut String, prefix: &str, estimates: &[CrossingEstimate], seed: u64) {
    for e in estimates {
        let _ = writeln!(
            out,
            "{prefix},{},{},{},{},{},{},{},{seed}",
            e.l, e.h, e.n_samples, e.n_success, e.p_hat, e.ci_lo, e.ci_hi
        );
    }
}

pub const SWEEP_HEADER: &str = "d,L_box,L,h,n_samples,n_success,p_hat,ci_lo,ci_hi,seed";

fn run_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.config;
    let d: usize = c.get_or("sweep.d", 5)?;
    let l_box: usize = c.get_or("sweep.L_box", 16)?;
    let l: usize = c.get_or("sweep.L", 3)?;
    let n: u64 = c.get_or("sweep.n_samples", 200)?;
    let grid = h_grid(c, "sweep", &[-1.0, 0.0, 1.0, 2.0])?;
    if 4 * l + 3 >= l_box {
        return Err(Error::Config(format!("sweep: L = {l} needs L_box > {}", 4 * l + 3)));
    }
    let sampler = TorusSampler::new(vec![l_box; d])?;
    let est = sweep_crossing(&sampler, l, &grid, cfg.seed, 0, n)?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    crossing_rows(&mut csv, &format!("{d},{l_box}"), &est, cfg.seed);
    let summary = est.iter().map(|e| format!("h={} p_hat={}\n", e.h, e.p_hat)).collect();
    Ok(RunOutput { csv, meta: cfg.meta(&format!("0..{n}")), summary })
}

pub const SLAB_HEADER: &str = "d,L0,R,h,n_samples,n_success,p_hat,ci_lo,ci_hi,seed";

fn run_slab(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.config;
    let d: usize = c.get_or("slab.d", 9)?;
    let l0: usize = c.get_or("slab.L0", 1)?;
    let r: usize = c.get_or("slab.R", 5)?;
    let n: u64 = c.get_or("slab.n_samples", 200)?;
    let grid = h_grid(c, "slab", &[-0.5, 0.0, 0.5])?;
    let spec = quadrature(c, "slab.tol", 1e-9)?;
    let res = slab_experiment(d, l0, r, &grid, n, cfg.seed, &spec)?;
    let mut csv = format!("{SLAB_HEADER}\n");
    for e in &res.estimates {
        let _ = writeln!(csv, "{d},{l0},{r},{},{},{},{},{},{},{}", e.h, e.n_samples, e.n_success, e.p_hat, e.ci_lo, e.ci_hi, cfg.seed);
    }
    let summary = res.estimates.iter().map(|e| format!("h={} p_hat={}\n", e.h, e.p_hat)).collect();
    Ok(RunOutput { csv, meta: cfg.meta(&format!("0..{n}")), summary })
}

pub const GREEN_HEADER: &str = "d,x,G_quadrature,quad_error,G_pathsum,pathsum_tail_error,abs_diff";

fn run_green_validate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.config;
    let d: usize = c.get_or("green.d", 5)?;
    let radius: i64 = c.get_or("green.radius", 2)?;
    let n_max: usize = c.get_or("green.n_max", 10_000)?;
    let spec = quadrature(c, "green.tol", 1e-6)?;
    let xs: Vec<LatticeVector> =
        canonical_offsets(d, radius).into_iter().map(LatticeVector::new).collect::<Result<_>>()?;
    let oracle = green_oracle_pathsum_batch(&xs, n_max, PathWeight::Bilaplacian)?;
    let quad = xs.par_iter().map(|x| green_bilaplacian(x, &spec)).collect::<Result<Vec<_>>>()?;
    let mut csv = format!("{GREEN_HEADER}\n");
    let mut worst = 0.0f64;
    for ((x, q), o) in xs.iter().zip(&quad).zip(&oracle) {
        let diff = (q.value - o.corrected()).abs();
        worst = worst.max(diff);
        let label: Vec<String> = x.coords().iter().map(i64::to_string).collect();
        let _ = writeln!(
            csv,
            "{d},{},{},{},{},{},{diff}",
            label.join(" "),
            q.value,
            q.error,
            o.corrected(),
            o.tail_estimate_error
        );
    }
    let summary = format!("{} offsets, max |quadrature - path sum| = {worst:e}\n", xs.len());
    Ok(RunOutput { csv, meta: cfg.meta("none"), summary })
}

/// Probe pairs `(0, x)`, `(x, x)` and `(x, y)` with `x, y ∈ B(0, 1)`.
pub fn probe_pairs(d: usize) -> Vec<(Vec<i64>, Vec<i64>)> {
    let w = Window::ball(d, 1).expect("unit ball");
    let pts: Vec<Vec<i64>> = (0..w.len()).step_by(23).map(|i| w.coords(i)).take(10).collect();
    let o = vec![0i64; d];
    let mut pairs: Vec<(Vec<i64>, Vec<i64>)> = pts.iter().map(|x| (o.clone(), x.clone())).collect();
    pairs.extend(pts.iter().map(|x| (x.clone(), x.clone())));
    pairs.extend(pts.windows(2).take(5).map(|p| (p[0].clone(), p[1].clone())));
    pairs
}

/// Sums of `φ_a φ_b` and its square over streams `0..n`, accumulated per
/// shard and merged in shard order.
pub fn covariance_sums(
    sampler: &dyn Sampler,
    idx: &[(usize, usize)],
    seed: u64,
    n: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let shards = (0..n.div_ceil(SHARD))
        .into_par_iter()
        .map(|k| {
            let first = k * SHARD;
            let samples = sampler.samples(seed, first, SHARD.min(n - first))?;
            let mut sum = vec![0.0; idx.len()];
            let mut sq = vec![0.0; idx.len()];
            for s in &samples {
                for (j, &(a, b)) in idx.iter().enumerate() {
                    let p = s.values[a] * s.values[b];
                    sum[j] += p;
                    sq[j] += p * p;
                }
            }
            Ok((sum, sq))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum = vec![0.0; idx.len()];
    let mut sq = vec![0.0; idx.len()];
    for (s, q) in shards {
        for j in 0..idx.len() {
            sum[j] += s[j];
            sq[j] += q[j];
        }
    }
    Ok((sum, sq))
}

pub const SAMPLE_HEADER: &str = "geometry,x,y,empirical,exact,std_error,z";

fn run_sample_validate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.config;
    let d: usize = c.get_or("sample.d", 5)?;
    let n: u64 = c.get_or("sample.n_samples", 10_000)?;
    if n < 2 {
        return Err(Error::Config("sample.n_samples must be at least 2".into()));
    }
    let geometry = c.raw("sample.geometry").unwrap_or("dirichlet").to_string();
    let spec = quadrature(c, "sample.tol", 1e-12)?;
    let pairs = probe_pairs(d);
    let (sampler, idx, exact): (Box<dyn Sampler>, Vec<(usize, usize)>, Vec<f64>) = match geometry.as_str() {
        "dirichlet" => {
            let radius: usize = c.get_or("sample.N", 3)?;
            let s = DirichletSampler::new(radius, d)?;
            let w = s.operator().window().clone();
            let mut probes: Vec<Vec<i64>> = pairs.iter().map(|p| p.0.clone()).collect();
            probes.sort();
            probes.dedup();
            let probes = probes.into_iter().map(LatticeVector::new).collect::<Result<Vec<_>>>()?;
            let gn = green_dirichlet_gn(radius, d, &probes)?;
            let idx = pairs.iter().map(|(a, b)| (w.index(a).unwrap(), w.index(b).unwrap())).collect();
            let exact = pairs.iter().map(|(a, b)| gn.pair(a, b).expect("probe column")).collect();
            (Box::new(s), idx, exact)
        }
        "torus" => {
            let side: usize = c.get_or("sample.L", 12)?;
            let sides = vec![side; d];
            let s = TorusSampler::new(sides.clone())?;
            let w = s.window().clone();
            let idx = pairs.iter().map(|(a, b)| (w.index_periodic(a), w.index_periodic(b))).collect();
            let exact = pairs
                .iter()
                .map(|(a, b)| {
                    let diff: Vec<i64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
                    torus_covariance(&sides, &diff)
                })
                .collect::<Result<_>>()?;
            (Box::new(s), idx, exact)
        }
        "exact" => {
            let radius: usize = c.get_or("sample.radius", 1)?;
            let s = ExactSampler::window(d, radius, &spec)?;
            let w = Window::ball(d, radius)?;
            let table = infinite_table(GreenKind::Bilaplacian, d, 2 * radius, &spec)?;
            let idx = pairs.iter().map(|(a, b)| (w.index(a).unwrap(), w.index(b).unwrap())).collect();
            let exact = pairs.iter().map(|(a, b)| table.pair(a, b).expect("offset in table")).collect();
            (Box::new(s), idx, exact)
        }
        g => return Err(Error::Config(format!("sample.geometry: unknown geometry {g:?}"))),
    };
    let (sum, sq) = covariance_sums(sampler.as_ref(), &idx, cfg.seed, n)?;
    let nf = n as f64;
    let mut csv = format!("{SAMPLE_HEADER}\n");
    let mut worst = 0.0f64;
    let fmt = |x: &[i64]| x.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
    for (j, (a, b)) in pairs.iter().enumerate() {
        let mean = sum[j] / nf;
        let se = ((sq[j] - nf * mean * mean) / (nf - 1.0) / nf).sqrt();
        let z = (mean - exact[j]) / se;
        worst = worst.max(z.abs());
        let _ = writeln!(csv, "{geometry},{},{},{mean},{},{se},{z}", fmt(a), fmt(b), exact[j]);
    }
    let summary = format!("{geometry}: {} probes, max |z| = {worst:.3}\n", pairs.len());
    Ok(RunOutput { csv, meta: cfg.meta(&format!("0..{n}")), summary })
}

fn run_decoupling_csv(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.config;
    let d: usize = c.get_or("decoupling.d", 5)?;
    let n_box: usize = c.get_or("decoupling.N", 3)?;
    let r: f64 = c.get_or("decoupling.r", 4.0)?;
    let sides = match c.get_list::<usize>("decoupling.sides")? {
        Some(s) => s,
        None => DecouplingConfig::default_sides(d, c.get_or("decoupling.L", 24)?, n_box, r),
    };
    if sides.len() != d {
        return Err(Error::Config("decoupling.sides must have d entries".into()));
    }
    let variant = c.raw("decoupling.variant").unwrap_or("increasing");
    let dc = DecouplingConfig {
        sides,
        n_box,
        r,
        eps: c.get_or("decoupling.eps", 0.5)?,
        h_grid: h_grid(c, "decoupling", &[0.0])?,
        n_samples: c.get_or("decoupling.n_samples", 2000)?,
        bootstrap: c.get_or("decoupling.bootstrap", 1000)?,
        xi_samples: c.get_or("decoupling.xi_samples", 8)?,
        decreasing: match variant {
            "increasing" => false,
            "decreasing" => true,
            v => return Err(Error::Config(format!("decoupling.variant: unknown variant {v:?}"))),
        },
    };
    let trials = run_decoupling(&dc, cfg.seed)?;
    let mut csv = format!("{}\n", DecouplingTrial::CSV_HEADER);
    let mut summary = String::new();
    for t in &trials {
        csv.push_str(&t.csv_row());
        csv.push('\n');
        let _ = writeln!(
            summary,
            "h={} lhs={} rhs={} slack={} CI=[{}, {}] P[H^c]={} bound={} sigma2_max={}",
            t.h, t.lhs, t.rhs_product, t.slack, t.slack_ci_lo, t.slack_ci_hi, t.p_heps_c, t.lemma33_bound, t.sigma2_max
        );
    }
    let sides: Vec<String> = dc.sides.iter().map(usize::to_string).collect();
    let meta = format!(
        "{}variant={variant}\ntorus={}\nxi_streams=0..{}\nbootstrap={}\n",
        cfg.meta(&format!("0..{}", dc.n_samples)),
        sides.join("x"),
        dc.xi_samples,
        dc.bootstrap
    );
    Ok(RunOutput { csv, meta, summary })
}

pub const CERTIFY_HEADER: &str = "mode,d,ell0,L1,eps,h_hat,A,B,p1_bound,certified,h_inf";

/// Builds the certifier inputs from `certify.*` keys.
pub fn certify_inputs(c: &Config, seed: u64) -> Result<RenormInputs> {
    let d: u32 = c.get_or("certify.d", 5)?;
    let l1: u64 = c.get_or("certify.L1", 100)?;
    let h_hat: f64 = c.get_or("certify.h_hat", 20.0)?;
    let schedule = build_schedule(c.get_or("certify.ell0", 2.5)?, l1, c.get_or("certify.eps", 0.1)?, h_hat)?;
    let model = match c.raw("certify.mode").unwrap_or("conditional") {
        "conditional" => ErrorModel::Conditional { c6: c.get_or("certify.c6", 1.0)?, c7: c.get_or("certify.c7", 1000.0)? },
        "empirical" => ErrorModel::Empirical { delta: c.require("certify.delta")? },
        m => return Err(Error::Config(format!("certify.mode: unknown mode {m:?}"))),
    };
    let (p1_bound, provenance) = match c.raw("certify.p1").unwrap_or("borell_tis") {
        "borell_tis" => {
            let spec = quadrature(c, "certify.tol", 1e-10)?;
            (p1_bound_borell_tis(h_hat, l1 as f64, d as usize, &spec)?, P1Provenance::BorellTis)
        }
        "monte_carlo" => {
            let confidence: f64 = c.get_or("certify.confidence", 0.99)?;
            let mc_l1: usize = c.get_or("certify.mc_L1", 2)?;
            let side: usize = c.get_or("certify.mc_side", 12)?;
            let n: u64 = c.get_or("certify.mc_samples", 200)?;
            let sampler = TorusSampler::new(vec![side; d as usize])?;
            let est = mc_estimate_p1(&sampler, &[h_hat], mc_l1, seed, n, confidence)?;
            (est[0].upper, P1Provenance::MonteCarlo { confidence })
        }
        v => (
            v.parse::<f64>().map_err(|_| Error::Config(format!("certify.p1: cannot parse {v:?}")))?,
            P1Provenance::Supplied,
        ),
    };
    Ok(RenormInputs {
        schedule,
        d,
        a: c.get_or("certify.A", 16.0)?,
        b: c.get_or("certify.B", 0.5)?,
        p1_bound,
        provenance,
        model,
        k_max: c.get_or("certify.k_max", crate::renorm::DEFAULT_K_MAX)?,
    })
}

pub fn certify_row(r: &CertificateReport) -> String {
    let i = &r.inputs;
    let s = &i.schedule;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.mode(),
        i.d,
        s.ell0,
        s.l1,
        s.eps,
        s.h_hat,
        i.a,
        i.b,
        i.p1_bound,
        r.certified,
        r.h_inf
    )
}

fn run_certify(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let inputs = certify_inputs(&cfg.config, cfg.seed)?;
    let streams = match inputs.provenance {
        P1Provenance::MonteCarlo { .. } => format!("0..{}", cfg.config.get_or("certify.mc_samples", 200u64)?),
        _ => "none".into(),
    };
    let report = run_induction(inputs)?;
    let csv = format!("{CERTIFY_HEADER}\n{}\n", certify_row(&report));
    Ok(RunOutput { csv, meta: cfg.meta(&streams), summary: report.to_key_value() })
}

fn run_decompose(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let c = &cfg.config;
    let dims = c.get_list::<usize>("decompose.d")?.unwrap_or_else(|| vec![8, 12, 16, 24, 32]);
    let m: usize = c.get_or("decompose.M", 32)?;
    let spec = quadrature(c, "decompose.tol", 1e-10)?;
    let reports = dims.par_iter().map(|&d| decompose(d, m, &spec)).collect::<Result<Vec<_>>>()?;
    let mut csv = format!("{}\n", DecompositionReport::CSV_HEADER);
    let mut summary = String::new();
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        let _ = writeln!(
            summary,
            "d={} lazy_walk_residual={:e} consistency_residual={:e} violations={}",
            r.d,
            r.lazy_walk_residual,
            r.consistency_residual,
            if r.violations.is_empty() { "none".into() } else { r.violations.join("; ") }
        );
    }
    Ok(RunOutput { csv, meta: cfg.meta("none"), summary })
}

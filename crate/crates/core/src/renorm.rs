//! Multi-scale renormalisation arithmetic: schedules, the smallness
//! condition, base-case bounds and the induction `p_{k+1} ≤ γ_d p_k² + err_k`.

use std::fmt::Write as _;

use std::cell::RefCell;

use astro_float::{BigFloat, Consts, RoundingMode};
use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::green::green_bilaplacian_origin;
use crate::percolation::{binomial_upper_bound, box_crossing_threshold, LatticeBox};
use crate::quadrature::QuadratureSpec;
use crate::sampler::Sampler;

/// Number of factors multiplied explicitly in `𝒫`.
pub const PRODUCT_TERMS: u64 = 1_000_000;
pub const DEFAULT_K_MAX: u32 = 60;
/// Absolute slack on log-probability comparisons, absorbing rounding of `ln p₁`.
const LOG_SLACK: f64 = 1e-12;
/// Mantissa bits of the high-precision arithmetic.
const PREC: usize = 128;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

/// Thin high-precision helpers over `BigFloat`.
mod hp {
    use super::*;

    pub type F = BigFloat;

    pub fn of(x: f64) -> F {
        BigFloat::from_f64(x, PREC)
    }

    pub fn int(n: u64) -> F {
        BigFloat::from_u64(n, PREC)
    }

    pub fn add(a: &F, b: &F) -> F {
        a.add(b, PREC, RM)
    }

    pub fn sub(a: &F, b: &F) -> F {
        a.sub(b, PREC, RM)
    }

    pub fn mul(a: &F, b: &F) -> F {
        a.mul(b, PREC, RM)
    }

    pub fn ln(a: &F) -> F {
        CONSTS.with(|c| a.ln(PREC, RM, &mut c.borrow_mut()))
    }

    pub fn exp(a: &F) -> F {
        CONSTS.with(|c| a.exp(PREC, RM, &mut c.borrow_mut()))
    }

    /// `2^n`.
    pub fn pow2(n: u32) -> F {
        int(2).powi(n as usize, PREC, RM)
    }

    pub fn to_f64(a: &F) -> f64 {
        if a.is_nan() {
            return f64::NAN;
        }
        if a.is_inf() {
            return if a.is_negative() { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        format!("{a}").parse().unwrap_or(f64::NAN)
    }
}

use hp::F;

/// `γ_d = 2d·21^d/7`, exactly.
pub fn gamma_d(d: u32) -> BigUint {
    let num = BigUint::from(2 * d) * BigUint::from(21u32).pow(d);
    let seven = BigUint::from(7u32);
    assert!(&num % &seven == BigUint::ZERO, "2d·21^d not divisible by 7");
    num / seven
}

fn ln_gamma_d(d: u32) -> F {
    let twenty_one = hp::mul(&hp::ln(&hp::int(21)), &hp::int(d as u64));
    hp::sub(&hp::add(&hp::ln(&hp::int(2 * d as u64)), &twenty_one), &hp::ln(&hp::int(7)))
}

/// `−∫_a^∞ ln(1 − ε/x²) dx`.
fn log_tail_integral(eps: f64, a: f64) -> f64 {
    let s = eps.sqrt();
    a * (-eps / (a * a)).ln_1p() + 2.0 * s * (s / a).atanh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormSchedule {
    pub ell0: f64,
    pub l1: u64,
    pub eps: f64,
    pub h_hat: f64,
    /// `𝒫 = ∏_{j≥1}(1 − ε/j²)`.
    pub p_value: f64,
    /// Certified bound on `|p_value − 𝒫|`.
    pub p_error: f64,
    pub h_inf: f64,
    pub rho: f64,
}

/// Builds the schedule; `eps = 0` is accepted as the degenerate case.
pub fn build_schedule(ell0: f64, l1: u64, eps: f64, h_hat: f64) -> Result<RenormSchedule> {
    if !(ell0 > 2.0 && ell0 <= 3.0) {
        return Err(Error::pre(format!("ell0 = {ell0} outside (2, 3]")));
    }
    if l1 < 100 {
        return Err(Error::pre(format!("L1 = {l1} below 100")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::pre(format!("eps = {eps} outside [0, 1)")));
    }
    if !(h_hat > 1.0 && h_hat.is_finite()) {
        return Err(Error::pre(format!("h_hat = {h_hat} must exceed 1")));
    }
    // Neumaier-compensated sum of ln(1 − ε/j²).
    let (mut sum, mut comp, mut abs_sum) = (0.0f64, 0.0f64, 0.0f64);
    for j in 1..=PRODUCT_TERMS {
        let t = (-eps / (j as f64 * j as f64)).ln_1p();
        let u = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - u) + t } else { (t - u) + sum };
        sum = u;
        abs_sum -= t;
    }
    // The remainder Σ_{j>J} lies between the integrals from J + 1 and from J.
    let (mid, half) = if eps == 0.0 {
        (0.0, 0.0)
    } else {
        let j = PRODUCT_TERMS as f64;
        let (lo, hi) = (log_tail_integral(eps, j + 1.0), log_tail_integral(eps, j));
        (-(lo + hi) / 2.0, (hi - lo) / 2.0 + 8.0 * f64::EPSILON * hi)
    };
    let p_value = ((sum + comp) + mid).exp();
    let p_error = p_value * (half + 2.0 * f64::EPSILON * (abs_sum + 1.0));
    Ok(RenormSchedule {
        ell0,
        l1,
        eps,
        h_hat,
        p_value,
        p_error,
        h_inf: h_hat / p_value,
        rho: 2f64.ln() / ell0.ln(),
    })
}

impl RenormSchedule {
    /// `L_k = ℓ₀^{k−1} L₁`.
    pub fn scale(&self, k: u32) -> f64 {
        self.ell0.powi(k as i32 - 1) * self.l1 as f64
    }

    /// `h_k = ĥ / ∏_{j<k}(1 − ε/j²)`.
    pub fn level(&self, k: u32) -> f64 {
        let log: f64 = (1..k).map(|j| (-self.eps / (j as f64 * j as f64)).ln_1p()).sum();
        self.h_hat / log.exp()
    }
}

/// Natural logarithm with an explicit `−∞`.
#[derive(Debug, Clone, PartialEq)]
enum LogVal {
    NegInf,
    Finite(F),
}

impl LogVal {
    fn of(x: f64) -> Self {
        if x > 0.0 { LogVal::Finite(hp::ln(&hp::of(x))) } else { LogVal::NegInf }
    }

    fn add(&self, c: &F) -> Self {
        match self {
            LogVal::NegInf => LogVal::NegInf,
            LogVal::Finite(v) => LogVal::Finite(hp::add(v, c)),
        }
    }

    /// `ln(e^a + e^b)`.
    fn lse(&self, other: &Self) -> Self {
        match (self, other) {
            (LogVal::NegInf, o) | (o, LogVal::NegInf) => o.clone(),
            (LogVal::Finite(a), LogVal::Finite(b)) => {
                let (m, n) = if a >= b { (a, b) } else { (b, a) };
                let diff = hp::sub(n, m);
                if hp::to_f64(&diff) < -400.0 {
                    // e^{-400} is far below the working precision.
                    LogVal::Finite(m.clone())
                } else {
                    let one = hp::int(1);
                    LogVal::Finite(hp::add(m, &hp::ln(&hp::add(&one, &hp::exp(&diff)))))
                }
            }
        }
    }

    fn lt(&self, c: &F) -> bool {
        match self {
            LogVal::NegInf => true,
            LogVal::Finite(v) => v < c,
        }
    }

    fn to_f64(&self) -> f64 {
        match self {
            LogVal::NegInf => f64::NEG_INFINITY,
            LogVal::Finite(v) => hp::to_f64(v),
        }
    }
}

/// Error term in the one-step recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// `c₆ ℓ₀^{kd} L₁^d exp(−(c₇/k⁴)(L₁ℓ₀^k)^{d−4})` with user-supplied constants.
    Conditional { c6: f64, c7: f64 },
    /// A constant per-step error bound measured by Monte Carlo.
    Empirical { delta: f64 },
}

impl ErrorModel {
    fn label(&self) -> &'static str {
        match self {
            ErrorModel::Conditional { .. } => "conditional",
            ErrorModel::Empirical { .. } => "empirical",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ErrorModel::Conditional { c6, c7 } if c6 > 0.0 && c7 >= 0.0 && c6.is_finite() && c7.is_finite() => Ok(()),
            ErrorModel::Empirical { delta } if (0.0..=1.0).contains(&delta) => Ok(()),
            _ => Err(Error::pre(format!("invalid error model {self:?}"))),
        }
    }

    /// `ln err_k`.
    fn log_error(&self, s: &RenormSchedule, d: u32, k: u32) -> LogVal {
        match *self {
            ErrorModel::Empirical { delta } => LogVal::of(delta),
            ErrorModel::Conditional { c6, c7 } => {
                let t = Terms::new(s, d, c6, c7, k);
                if c7 == 0.0 {
                    return LogVal::Finite(hp::add(&t.c, &t.linear));
                }
                // Capping ln N at 700 keeps the log an upper bound.
                let ln_n = if hp::to_f64(&t.ln_n) > 700.0 { hp::of(700.0) } else { t.ln_n };
                LogVal::Finite(hp::sub(&hp::add(&t.c, &t.linear), &hp::exp(&ln_n)))
            }
        }
    }
}

/// Pieces of `ln err_k = C + k d ln ℓ₀ − N(k)` with `C = ln c₆ + d ln L₁` and
/// `ln N(k) = (d−4)(ln L₁ + k ln ℓ₀) + ln c₇ − 4 ln k`.
struct Terms {
    c: F,
    linear: F,
    ln_n: F,
}

impl Terms {
    fn new(s: &RenormSchedule, d: u32, c6: f64, c7: f64, k: u32) -> Self {
        let ln_l1 = hp::ln(&hp::int(s.l1));
        let ln_ell = hp::ln(&hp::of(s.ell0));
        let dd = hp::int(d as u64);
        let kk = hp::int(k as u64);
        let c = hp::add(&hp::ln(&hp::of(c6)), &hp::mul(&ln_l1, &dd));
        let linear = hp::mul(&ln_ell, &hp::mul(&kk, &dd));
        let ln_n = if c7 > 0.0 && d > 4 {
            let base = hp::mul(&hp::add(&ln_l1, &hp::mul(&ln_ell, &kk)), &hp::int(d as u64 - 4));
            hp::sub(&hp::add(&base, &hp::ln(&hp::of(c7))), &hp::mul(&hp::ln(&kk), &hp::int(4)))
        } else {
            hp::of(f64::NEG_INFINITY)
        };
        Self { c, linear, ln_n }
    }
}

/// Smallness condition `err_k · e^{𝒜 + 2^{k+1}} < 1 − γ_d e^{−𝒜}` for
/// `k = 1..=k_max`, plus a check that it persists for every larger `k`.
///
/// Returns `(ok_upto, asymptotic_ok)` where `ok_upto` is the largest `k`
/// such that the condition holds for all of `1..=k`.
pub fn smallness_check(s: &RenormSchedule, d: u32, a: f64, model: &ErrorModel, k_max: u32) -> Result<(u32, bool)> {
    model.validate()?;
    let ln_gamma = ln_gamma_d(d);
    let rhs_arg = hp::exp(&hp::sub(&ln_gamma, &hp::of(a)));
    if !(a > 0.0) || hp::to_f64(&rhs_arg) >= 1.0 {
        return Err(Error::pre(format!("need 0 < e^(-A) < 1/gamma_d, got A = {a}")));
    }
    let rhs = hp::ln(&hp::sub(&hp::int(1), &rhs_arg));
    let holds = |k: u32| -> bool {
        model.log_error(s, d, k).add(&hp::add(&hp::of(a), &hp::pow2(k + 1))).lt(&rhs)
    };
    let mut ok_upto = 0;
    for k in 1..=k_max {
        if !holds(k) {
            break;
        }
        ok_upto = k;
    }
    let asymptotic_ok = ok_upto == k_max && k_max > 0 && persists_beyond(s, d, a, model, k_max, &rhs);
    Ok((ok_upto, asymptotic_ok))
}

/// Writing the log of the left side as `C + P(k) − N(k)` with
/// `P(k) = 2^{k+1} + k d ln ℓ₀` and `N(k) = (c₇/k⁴)(L₁ℓ₀^k)^{d−4}`:
/// `P(k+1) ≤ 2P(k)` for `k ≥ 1`, so once `N(K) − P(K) > C − rhs ≥ 0` and
/// `N(k+1)/N(k) ≥ 2` for all `k ≥ K`, the margin `N − P` never decreases.
fn persists_beyond(s: &RenormSchedule, d: u32, a: f64, model: &ErrorModel, k: u32, rhs: &F) -> bool {
    let ErrorModel::Conditional { c6, c7 } = *model else {
        // A constant error cannot absorb the growth of e^{2^{k+1}}.
        return matches!(model, ErrorModel::Empirical { delta } if *delta == 0.0);
    };
    if c7 == 0.0 || d <= 4 {
        return false;
    }
    let kf = k as f64;
    // N(k+1)/N(k) = ℓ₀^{d−4} (k/(k+1))⁴ increases with k.
    let ratio = s.ell0.powi(d as i32 - 4) * (kf / (kf + 1.0)).powi(4);
    if ratio < 2.0 {
        return false;
    }
    let t = Terms::new(s, d, c6, c7, k);
    let need = hp::sub(&hp::add(&t.c, &hp::of(a)), rhs);
    let p = hp::add(&hp::pow2(k + 1), &t.linear);
    let margin = hp::sub(&hp::exp(&t.ln_n), &p);
    hp::to_f64(&need) >= 0.0 && margin > need
}

/// `exp(−(ĥ − √(2G(0) ln|D₀¹|))² / (2G(0)))` with `|D₀¹| = (3⌈L₁⌉)^d`.
pub fn p1_bound_borell_tis(h_hat: f64, l1: f64, d: usize, spec: &QuadratureSpec) -> Result<f64> {
    let g0 = green_bilaplacian_origin(d, spec)?;
    // The bound increases with G(0); use the upper end of the quadrature interval.
    let g = g0.value + g0.error;
    let log_card = d as f64 * (3.0 * l1.ceil()).ln();
    let m = (2.0 * g * log_card).sqrt();
    if !(h_hat > m) {
        return Err(Error::pre(format!("h_hat = {h_hat} below the expected-maximum bound {m}")));
    }
    Ok((-(h_hat - m).powi(2) / (2.0 * g)).exp())
}

/// Monte Carlo estimate of `p₁` on coupled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Estimate {
    pub h: f64,
    pub n_samples: u64,
    pub n_success: u64,
    pub upper: f64,
    pub confidence: f64,
}

/// Upper confidence bounds for `ℙ[C₀¹ ↔ ℤ^d∖D₀¹]` at each level, with
/// `C₀¹ = [0, L₁)^d` and `D₀¹ = [−L₁, 2L₁)^d`; all levels share samples.
pub fn mc_estimate_p1(
    sampler: &dyn Sampler,
    levels: &[f64],
    l1: usize,
    seed: u64,
    n_samples: u64,
    confidence: f64,
) -> Result<Vec<P1Estimate>> {
    use rayon::prelude::*;
    if l1 == 0 || n_samples == 0 {
        return Err(Error::pre("need L1 >= 1 and at least one sample"));
    }
    let d = sampler.geometry().dim();
    let l = l1 as i64;
    let inner = LatticeBox::new(vec![0; d], vec![l - 1; d])?;
    let outer = LatticeBox::new(vec![-l; d], vec![2 * l - 1; d])?;
    let thresholds = (0..n_samples)
        .into_par_iter()
        .map(|s| box_crossing_threshold(&sampler.sample(seed, s)?, &inner, &outer))
        .collect::<Result<Vec<f64>>>()?;
    Ok(levels
        .iter()
        .map(|&h| {
            let k = thresholds.iter().filter(|&&t| t >= h).count() as u64;
            P1Estimate { h, n_samples, n_success: k, upper: binomial_upper_bound(k, n_samples, confidence), confidence }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum P1Provenance {
    MonteCarlo { confidence: f64 },
    BorellTis,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    BaseCase,
    Smallness { k: u32 },
    Asymptotic,
    Induction { k: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormInputs {
    pub schedule: RenormSchedule,
    pub d: u32,
    pub a: f64,
    pub b: f64,
    pub p1_bound: f64,
    pub provenance: P1Provenance,
    pub model: ErrorModel,
    pub k_max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub inputs: RenormInputs,
    pub gamma_d: BigUint,
    pub smallness_ok_upto: u32,
    pub asymptotic_ok: bool,
    /// Largest `k` with the propagated bound `p_k ≤ e^{−𝒜−ℬ2^k}` verified.
    pub induction_ok_upto: u32,
    /// `ln p_k` bounds from the recursion, `k = 1..=k_max + 1`.
    pub log_p: Vec<f64>,
    pub certified: bool,
    pub failing_stage: Option<Stage>,
    pub h_inf: f64,
    pub rho: f64,
}

/// Runs the base case, the smallness condition and the induction.
pub fn run_induction(inputs: RenormInputs) -> Result<CertificateReport> {
    let RenormInputs { ref schedule, d, a, b, p1_bound, ref model, k_max, .. } = inputs;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::pre(format!("B = {b} outside (0, 1)")));
    }
    if !(0.0..=1.0).contains(&p1_bound) {
        return Err(Error::pre(format!("p1 bound {p1_bound} is not a probability")));
    }
    let (ok_upto, asymptotic_ok) = smallness_check(schedule, d, a, model, k_max)?;
    let ln_gamma = ln_gamma_d(d);
    let ta = hp::of(a);
    let tb = hp::of(b);
    let slack = hp::of(LOG_SLACK);
    let target = |k: u32| hp::sub(&hp::mul(&tb, &hp::pow2(k)).neg(), &ta);

    let base_ok = LogVal::of(p1_bound).lt(&hp::add(&target(1), &slack));
    let mut log_p = vec![LogVal::of(p1_bound)];
    let mut induction_ok_upto = if base_ok { 1 } else { 0 };
    let mut ratio_ok = true;
    for k in 1..=k_max {
        let err = model.log_error(schedule, d, k);
        // Ratio bound at the boundary case p_k = e^{−𝒜−ℬ2^k}.
        let growth = hp::add(&ta, &hp::mul(&tb, &hp::pow2(k + 1)));
        let ratio = LogVal::Finite(hp::sub(&ln_gamma, &ta)).lse(&err.add(&growth));
        if k <= ok_upto && !ratio.lt(&hp::of(0.0)) {
            ratio_ok = false;
        }
        let next = match &log_p[k as usize - 1] {
            LogVal::NegInf => LogVal::NegInf,
            LogVal::Finite(v) => LogVal::Finite(hp::add(&hp::mul(v, &hp::int(2)), &ln_gamma)),
        }
        .lse(&err);
        let ok = next.lt(&hp::add(&target(k + 1), &slack));
        log_p.push(next);
        if induction_ok_upto == k && ok {
            induction_ok_upto = k + 1;
        }
    }
    let failing_stage = if !base_ok {
        Some(Stage::BaseCase)
    } else if ok_upto < k_max {
        Some(Stage::Smallness { k: ok_upto + 1 })
    } else if !ratio_ok || induction_ok_upto < k_max + 1 {
        Some(Stage::Induction { k: induction_ok_upto })
    } else if !asymptotic_ok {
        Some(Stage::Asymptotic)
    } else {
        None
    };
    Ok(CertificateReport {
        gamma_d: gamma_d(d),
        smallness_ok_upto: ok_upto,
        asymptotic_ok,
        induction_ok_upto,
        log_p: log_p.iter().map(LogVal::to_f64).collect(),
        certified: failing_stage.is_none(),
        failing_stage,
        h_inf: schedule.h_inf,
        rho: schedule.rho,
        inputs,
    })
}

impl CertificateReport {
    pub fn mode(&self) -> &'static str {
        self.inputs.model.label()
    }

    /// Flat `key=value` lines with stable key names.
    pub fn to_key_value(&self) -> String {
        let i = &self.inputs;
        let s = &i.schedule;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("mode", self.mode().into());
        kv("d", i.d.to_string());
        kv("ell0", s.ell0.to_string());
        kv("L1", s.l1.to_string());
        kv("eps", s.eps.to_string());
        kv("h_hat", s.h_hat.to_string());
        kv("P", s.p_value.to_string());
        kv("P_error", s.p_error.to_string());
        kv("gamma_d", self.gamma_d.to_string());
        kv("rho", self.rho.to_string());
        kv("A", i.a.to_string());
        kv("B", i.b.to_string());
        kv("p1_bound", i.p1_bound.to_string());
        kv(
            "p1_provenance",
            match &i.provenance {
                P1Provenance::MonteCarlo { confidence } => format!("monte_carlo({confidence})"),
                P1Provenance::BorellTis => "borell_tis".into(),
                P1Provenance::Supplied => "supplied".into(),
            },
        );
        match i.model {
            ErrorModel::Conditional { c6, c7 } => {
                kv("c6", c6.to_string());
                kv("c7", c7.to_string());
            }
            ErrorModel::Empirical { delta } => kv("delta", delta.to_string()),
        }
        kv("k_max", i.k_max.to_string());
        kv("smallness_ok_upto", self.smallness_ok_upto.to_string());
        kv("asymptotic_ok", self.asymptotic_ok.to_string());
        kv("induction_ok_upto", self.induction_ok_upto.to_string());
        kv(
            "failing_stage",
            match self.failing_stage {
                None => "none".into(),
                Some(Stage::BaseCase) => "base_case".into(),
                Some(Stage::Smallness { k }) => format!("smallness@{k}"),
                Some(Stage::Asymptotic) => "asymptotic".into(),
                Some(Stage::Induction { k }) => format!("induction@{k}"),
            },
        );
        kv("certified", self.certified.to_string());
        kv("h_inf", s.h_inf.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conditional(c6: f64, c7: f64) -> ErrorModel {
        ErrorModel::Conditional { c6, c7 }
    }

    #[test]
    fn gamma_five() {
        assert_eq!(gamma_d(5), BigUint::from(5_834_430u32));
        for d in 1..40 {
            let _ = gamma_d(d);
        }
        // ln γ_12 to 40 digits: 37.76641293397370827254876462224234089065.
        let diff = hp::sub(&ln_gamma_d(12), &BigFloat::parse("37.76641293397370827254876462224234089065", astro_float::Radix::Dec, PREC, RM, &mut Consts::new().unwrap()));
        assert!(hp::to_f64(&diff).abs() < 1e-30);
    }

    #[test]
    fn zero_eps_is_degenerate() {
        let s = build_schedule(2.5, 100, 0.0, 3.7).unwrap();
        assert_eq!(s.p_value, 1.0);
        assert_eq!(s.h_inf.to_bits(), 3.7f64.to_bits());
        assert_eq!(s.level(10), 3.7);
    }

    #[test]
    fn product_matches_sine_formula() {
        // ∏(1 − x²/j²) = sin(πx)/(πx).
        for eps in [1e-3, 0.1, 0.5, 0.9] {
            let s = build_schedule(2.5, 100, eps, 2.0).unwrap();
            let x = std::f64::consts::PI * f64::sqrt(eps);
            let exact = x.sin() / x;
            assert!((s.p_value - exact).abs() < 1e-12, "eps {eps}: {} vs {exact}", s.p_value);
            assert!(s.p_error < 1e-11);
            assert!((s.h_inf - 2.0 / exact).abs() < 1e-11);
            assert!(s.p_value <= 1.0 - eps);
            assert!(s.p_value >= 1.0 - eps * std::f64::consts::PI.powi(2) / 6.0 - s.p_error);
        }
    }

    #[test]
    fn schedule_domain_errors() {
        assert!(build_schedule(2.0, 100, 0.1, 2.0).is_err());
        assert!(build_schedule(2.5, 99, 0.1, 2.0).is_err());
        assert!(build_schedule(2.5, 100, 1.0, 2.0).is_err());
        assert!(build_schedule(2.5, 100, 0.1, 1.0).is_err());
    }

    #[test]
    fn levels_nondecreasing() {
        let s = build_schedule(2.5, 100, 0.3, 2.0).unwrap();
        assert_eq!(s.level(1), 2.0);
        for k in 1..30 {
            assert!(s.level(k + 1) >= s.level(k));
            assert!(s.level(k) <= s.h_inf * (1.0 + 1e-12));
        }
        assert_eq!(s.scale(1), 100.0);
        assert!((s.scale(3) - 625.0).abs() < 1e-9);
    }

    #[test]
    fn smallness_extremes() {
        let s = build_schedule(2.5, 100, 0.1, 2.0).unwrap();
        let a = 20.0;
        assert_eq!(smallness_check(&s, 5, a, &conditional(1.0, 1e6), 60).unwrap(), (60, true));
        assert_eq!(smallness_check(&s, 5, a, &conditional(1e300, 1e-12), 60).unwrap(), (0, false));
        assert!(smallness_check(&s, 5, 10.0, &conditional(1.0, 1e6), 60).is_err());
    }

    #[test]
    fn doubling_l1_preserves_smallness() {
        let a = 18.0;
        for c7 in [1e-2, 1e-1, 1.0, 10.0, 1e3] {
            let mut prev = false;
            for l1 in [100u64, 200, 400, 800, 1600, 3200] {
                let s = build_schedule(2.5, l1, 0.1, 2.0).unwrap();
                let (_, all) = smallness_check(&s, 5, a, &conditional(1.0, c7), 60).unwrap();
                assert!(!prev || all, "c7 {c7} L1 {l1}");
                prev = all;
            }
        }
    }

    #[test]
    fn empirical_mode_needs_zero_error() {
        let s = build_schedule(2.5, 100, 0.1, 2.0).unwrap();
        let (k, all) = smallness_check(&s, 5, 20.0, &ErrorModel::Empirical { delta: 1e-30 }, 60).unwrap();
        assert!(k < 60 && !all);
        assert_eq!(smallness_check(&s, 5, 20.0, &ErrorModel::Empirical { delta: 0.0 }, 60).unwrap(), (60, true));
    }

    fn synthetic(p1: f64, a: f64, b: f64) -> RenormInputs {
        RenormInputs {
            schedule: build_schedule(2.5, 100, 0.2, 3.0).unwrap(),
            d: 5,
            a,
            b,
            p1_bound: p1,
            provenance: P1Provenance::Supplied,
            model: conditional(1.0, 1e6),
            k_max: 60,
        }
    }

    #[test]
    fn boundary_base_case_certifies() {
        let (a, b) = (20.0f64, 0.5f64);
        let r = run_induction(synthetic((-a - 2.0 * b).exp(), a, b)).unwrap();
        assert!(r.certified, "{:?}", r.failing_stage);
        assert!(r.log_p[1] <= -a - 4.0 * b);
        for (k, lp) in r.log_p.iter().enumerate() {
            assert!(*lp <= -a - b * 2f64.powi(k as i32 + 1) + 1e-9);
        }
        let x = std::f64::consts::PI * 0.2f64.sqrt();
        assert!((r.h_inf - 3.0 * x / x.sin()).abs() < 1e-11);
    }

    #[test]
    fn base_case_failure_is_reported() {
        let (a, b) = (20.0f64, 0.5f64);
        let r = run_induction(synthetic((-a - 2.0 * b).exp() * 1.001, a, b)).unwrap();
        assert!(!r.certified);
        assert_eq!(r.failing_stage, Some(Stage::BaseCase));
    }

    #[test]
    fn report_is_deterministic() {
        let r1 = run_induction(synthetic(1e-10, 20.0, 0.5)).unwrap().to_key_value();
        let r2 = run_induction(synthetic(1e-10, 20.0, 0.5)).unwrap().to_key_value();
        assert_eq!(r1, r2);
        assert!(r1.contains("gamma_d=5834430\n"));
        assert!(r1.contains("certified=true\n"));
    }

    #[test]
    fn borell_tis_behaviour() {
        let spec = QuadratureSpec::default();
        let g0 = 1.9349414403823513;
        let m = (2.0 * g0 * 5.0 * 300f64.ln()).sqrt();
        assert!(p1_bound_borell_tis(m * 0.9, 100.0, 5, &spec).is_err());
        let b1 = p1_bound_borell_tis(2.0 * m, 100.0, 5, &spec).unwrap();
        let b2 = p1_bound_borell_tis(2.0 * m + 1.0, 100.0, 5, &spec).unwrap();
        assert!(b1 < 1.0 && b2 < b1);
        let direct = (-(m * m) / (2.0 * g0)).exp();
        assert!((b1 - direct).abs() < 1e-9 * direct);
        assert!(p1_bound_borell_tis(1e3, 100.0, 5, &spec).unwrap() < 1e-300);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn h_inf_monotone(eps1 in 0.0f64..0.9, deps in 0.001f64..0.09, h in 1.01f64..10.0, dh in 0.01f64..1.0) {
            let s1 = build_schedule(2.5, 100, eps1, h).unwrap();
            let s2 = build_schedule(2.5, 100, eps1 + deps, h).unwrap();
            proptest::prop_assert!(s2.p_value < s1.p_value && s2.h_inf > s1.h_inf);
            let s3 = build_schedule(2.5, 100, eps1, h + dh).unwrap();
            proptest::prop_assert!(s3.h_inf > s1.h_inf);
        }
    }
}

//! Impact functions of time lag and of traded volume, and the propagator
//! price path they generate.
//!
//! The lag kernel is the decaying power law `G(τ) = Γ₀ / (1 + τ/τ₀)^β`. Its
//! first and second antiderivatives have closed forms, which is what makes the
//! cost integrals cheap: every cost term reduces to a signed combination of
//! second primitives evaluated at the corners of a causal domain.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Below this `τ/τ₀` the primitives are summed as a binomial series, where the
/// closed forms would lose digits to cancellation.
const SERIES_CUTOFF: f64 = 0.1;

/// The domain `{(t, t′) : t_lo ≤ t ≤ t_hi, s_lo ≤ t′ ≤ min(t, s_hi)}`.
///
/// This is simultaneously the causal part of the rectangle
/// `[t_lo, t_hi] × [s_lo, s_hi]` and the lower triangle whose inner upper
/// limit is `t` capped at `s_hi`. `s_hi` may be `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalDomain {
    pub t_lo: f64,
    pub t_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
}

impl CausalDomain {
    pub fn new(t_lo: f64, t_hi: f64, s_lo: f64, s_hi: f64) -> Result<Self> {
        if !(t_lo.is_finite() && t_hi.is_finite() && s_lo.is_finite()) || s_hi.is_nan() {
            return Err(Error::Domain(format!(
                "non-finite domain limits [{t_lo}, {t_hi}] x [{s_lo}, {s_hi}]"
            )));
        }
        if t_lo > t_hi || s_lo > s_hi {
            return Err(Error::Domain(format!(
                "reversed domain limits [{t_lo}, {t_hi}] x [{s_lo}, {s_hi}]"
            )));
        }
        Ok(Self { t_lo, t_hi, s_lo, s_hi })
    }

    /// Causal part of `[a, b] × [c, d]`.
    pub fn rectangle(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(a, b, c, d)
    }

    /// `{a ≤ t ≤ b, c ≤ t′ ≤ min(t, d)}`; pass `d = f64::INFINITY` for an
    /// inner limit of plain `t`.
    pub fn lower_triangle(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(a, b, c, d)
    }

    pub fn is_empty(&self) -> bool {
        self.t_hi <= self.t_lo.max(self.s_lo)
    }
}

/// A kernel of time lag, evaluated on `τ ≥ 0`.
pub trait LagKernel: Sync {
    fn value(&self, tau: f64) -> f64;

    /// ∬ G(t − t′) over a causal domain. The default uses Gauss–Legendre
    /// quadrature with the default order.
    fn causal_double_integral(&self, domain: &CausalDomain) -> f64 {
        default_rule().causal_double(domain, |tau| self.value(tau))
    }
}

pub(crate) fn default_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(GaussLegendre::default)
}

/// `G(τ) = Γ₀ / (1 + τ/τ₀)^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawKernel {
    pub gamma0: f64,
    pub tau0: f64,
    pub beta: f64,
}

impl PowerLawKernel {
    pub fn new(gamma0: f64, tau0: f64, beta: f64) -> Result<Self> {
        let k = Self { gamma0, tau0, beta };
        k.validate()?;
        Ok(k)
    }

    /// The identically zero kernel.
    pub fn zero() -> Self {
        Self {
            gamma0: 0.0,
            tau0: 1.0,
            beta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma0.is_finite() {
            return Err(Error::Parameter(format!("gamma0 must be finite, got {}", self.gamma0)));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::Parameter(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Same shape, amplitude multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            gamma0: self.gamma0 * c,
            ..*self
        }
    }

    /// `G(τ)`; negative lags are a domain error.
    pub fn eval(&self, tau: f64) -> Result<f64> {
        if tau < 0.0 || tau.is_nan() {
            return Err(Error::Domain(format!(
                "kernel evaluated at negative lag {tau}; clip to the causal region first"
            )));
        }
        Ok(self.value(tau))
    }

    /// `∫₀^τ G`, zero for `τ ≤ 0`.
    pub fn first_primitive(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let x = tau / self.tau0;
        let unit = if x < SERIES_CUTOFF {
            binomial_series(self.beta, x, 1)
        } else {
            let l = x.ln_1p();
            let a = 1.0 - self.beta;
            if a == 0.0 {
                l
            } else {
                (a * l).exp_m1() / a
            }
        };
        self.gamma0 * self.tau0 * unit
    }

    /// `∫₀^τ ∫₀^u G(w) dw du`, zero for `τ ≤ 0`.
    ///
    /// Uses dedicated logarithmic forms at `β = 1` and `β = 2` and, around
    /// them, arrangements of the general form that keep the removable
    /// singularity analytic.
    pub fn second_primitive(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let x = tau / self.tau0;
        let unit = if x < SERIES_CUTOFF {
            binomial_series(self.beta, x, 2)
        } else {
            let l = x.ln_1p();
            let beta = self.beta;
            let a = 1.0 - beta;
            let b = 2.0 - beta;
            if beta == 1.0 {
                (1.0 + x) * l - x
            } else if beta == 2.0 {
                x - l
            } else if beta < 1.5 {
                ((1.0 + x) * (a * l).exp_m1() / a - x) / b
            } else {
                ((b * l).exp_m1() / b - x) / a
            }
        };
        self.gamma0 * self.tau0 * self.tau0 * unit
    }

    /// Closed-form ∬ G(t − t′) over the causal domain, falling back to
    /// quadrature if the closed form is not finite.
    pub fn double_primitive(&self, domain: &CausalDomain) -> f64 {
        if domain.is_empty() || self.gamma0 == 0.0 {
            return 0.0;
        }
        let CausalDomain {
            t_lo: a,
            t_hi: b,
            s_lo: c,
            s_hi: d,
        } = *domain;
        let mut v = self.second_primitive(b - c) - self.second_primitive(a - c);
        if d.is_finite() {
            v += self.second_primitive(a - d) - self.second_primitive(b - d);
        }
        if v.is_finite() {
            v
        } else {
            default_rule().causal_double(domain, |tau| self.value(tau))
        }
    }
}

impl LagKernel for PowerLawKernel {
    fn value(&self, tau: f64) -> f64 {
        if self.beta == 0.0 {
            return self.gamma0;
        }
        self.gamma0 * (-self.beta * (tau / self.tau0).ln_1p()).exp()
    }

    fn causal_double_integral(&self, domain: &CausalDomain) -> f64 {
        self.double_primitive(domain)
    }
}

/// `Σₙ C(−β, n) xⁿ⁺ᵏ / ((n+1)…(n+k))`, the k-fold primitive of `(1+x)^−β`.
fn binomial_series(beta: f64, x: f64, k: u32) -> f64 {
    let mut coeff = 1.0; // C(-beta, n)
    let mut xp = x.powi(k as i32);
    let mut sum = 0.0;
    for n in 0..400u32 {
        let nf = n as f64;
        let denom = match k {
            1 => nf + 1.0,
            _ => (nf + 1.0) * (nf + 2.0),
        };
        let term = coeff * xp / denom;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coeff *= (-beta - nf) / (nf + 1.0);
        xp *= x;
    }
    sum
}

/// Tabulated kernel values at integer lags `τ = 1..=L` (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernel {
    values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("tabulated kernel needs at least one lag".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "tabulated kernel value at lag {} is not finite",
                pos + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at integer lag `tau` (1-based).
    pub fn at(&self, tau: usize) -> Option<f64> {
        tau.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Samples `kernel` at lags `1..=len`.
    pub fn sample(kernel: &PowerLawKernel, len: usize) -> Self {
        Self {
            values: (1..=len).map(|t| kernel.value(t as f64)).collect(),
        }
    }
}

/// Power-law impact of traded volume, `g(v) = v^δ`, with odd signed extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeImpact {
    pub delta: f64,
}

impl VolumeImpact {
    pub fn new(delta: f64) -> Result<Self> {
        let vi = Self { delta };
        vi.validate()?;
        Ok(vi)
    }

    /// `δ = 1`: impact linear in volume.
    pub fn linear() -> Self {
        Self { delta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Parameter(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// `v^δ` for an unsigned volume.
    pub fn unsigned(&self, volume: f64) -> f64 {
        if self.delta == 1.0 {
            volume
        } else {
            volume.powf(self.delta)
        }
    }

    /// `sign(rate) · |rate|^δ`.
    pub fn signed(&self, rate: f64) -> f64 {
        let magnitude = self.unsigned(rate.abs());
        if rate < 0.0 {
            -magnitude
        } else if rate > 0.0 {
            magnitude
        } else {
            0.0
        }
    }
}

/// Kernel and volume-impact exponent for one ordered stock pair, as stored in
/// parameter files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    pub gamma0: f64,
    pub tau0: f64,
    pub beta: f64,
    pub delta: f64,
}

impl ImpactParams {
    pub fn kernel(&self) -> Result<PowerLawKernel> {
        PowerLawKernel::new(self.gamma0, self.tau0, self.beta)
    }

    pub fn volume_impact(&self) -> Result<VolumeImpact> {
        VolumeImpact::new(self.delta)
    }

    pub fn from_parts(kernel: &PowerLawKernel, vi: &VolumeImpact) -> Self {
        Self {
            gamma0: kernel.gamma0,
            tau0: kernel.tau0,
            beta: kernel.beta,
            delta: vi.delta,
        }
    }
}

/// Parameter file contents: cross-impact of `j` on `i` (`ij`), of `i` on `j`
/// (`ji`), and optionally the self-impacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairParams {
    pub ij: ImpactParams,
    pub ji: ImpactParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ii: Option<ImpactParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jj: Option<ImpactParams>,
}

impl PairParams {
    /// Fitted AAPL (i) / MSFT (j) parameters from the 2008 NASDAQ TAQ study.
    pub fn aapl_msft_2008() -> Self {
        Self {
            ij: ImpactParams {
                gamma0: 1.13e-4,
                tau0: 7.34,
                beta: 0.14,
                delta: 0.61,
            },
            ji: ImpactParams {
                gamma0: 0.79e-4,
                tau0: 4.75,
                beta: 0.03,
                delta: 0.50,
            },
            ii: None,
            jj: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [Some(&self.ij), Some(&self.ji), self.ii.as_ref(), self.jj.as_ref()]
            .into_iter()
            .flatten()
        {
            p.kernel()?;
            p.volume_impact()?;
        }
        Ok(())
    }

    /// Relabels the pair so that `i` becomes `j` and vice versa.
    pub fn swapped(&self) -> Self {
        Self {
            ij: self.ji,
            ji: self.ij,
            ii: self.jj,
            jj: self.ii,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// A piecewise-constant signed trading rate: `rate` on `[start, end)`, zero
/// outside every segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepRate {
    segments: Vec<(f64, f64, f64)>,
}

impl StepRate {
    /// Segments as `(start, end, rate)`; they must be ordered and disjoint.
    pub fn new(segments: Vec<(f64, f64, f64)>) -> Result<Self> {
        let mut last_end = f64::NEG_INFINITY;
        for &(s, e, r) in &segments {
            if !(s <= e) || s < last_end || !r.is_finite() {
                return Err(Error::Parameter(format!(
                    "step segments must be ordered, disjoint and finite; got [{s}, {e}) at rate {r}"
                )));
            }
            last_end = e;
        }
        Ok(Self { segments })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|(s, e, _)| t >= *s && t < *e)
            .map_or(0.0, |&(_, _, r)| r)
    }

    pub fn segments(&self) -> &[(f64, f64, f64)] {
        &self.segments
    }

    /// Pointwise sum, on the union of breakpoints.
    pub fn add(&self, other: &StepRate) -> StepRate {
        let mut knots: Vec<f64> = self
            .segments
            .iter()
            .chain(&other.segments)
            .flat_map(|&(s, e, _)| [s, e])
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let segments = knots
            .windows(2)
            .filter_map(|w| {
                let r = self.value(w[0]) + other.value(w[0]);
                (w[1] > w[0]).then_some((w[0], w[1], r))
            })
            .collect();
        StepRate { segments }
    }
}

/// Kernels and volume impacts driving one stock's price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceModel {
    pub self_kernel: PowerLawKernel,
    pub cross_kernel: PowerLawKernel,
    pub self_impact: VolumeImpact,
    pub cross_impact: VolumeImpact,
}

/// `log m(t_k) − log m(0)` on the grid `t_k = k·step`, `k = 0..=⌊horizon/step⌋`,
/// for piecewise-constant own and other-stock rates, noise off.
///
/// The convolution is left-closed: a rate at `t′` affects the price only at
/// grid times strictly after `t′`.
pub fn price_path(model: &PriceModel, own: &StepRate, other: &StepRate, step: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!("time step must be positive, got {step}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon must be non-negative, got {horizon}")));
    }
    let n = (horizon / step * (1.0 + 1e-12)).floor() as usize;
    let own_impact: Vec<f64> = (0..n)
        .map(|m| model.self_impact.signed(own.value(m as f64 * step)))
        .collect();
    let other_impact: Vec<f64> = (0..n)
        .map(|m| model.cross_impact.signed(other.value(m as f64 * step)))
        .collect();
    let self_lag: Vec<f64> = (0..=n).map(|l| model.self_kernel.value(l as f64 * step)).collect();
    let cross_lag: Vec<f64> = (0..=n).map(|l| model.cross_kernel.value(l as f64 * step)).collect();

    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    for k in 1..=n {
        let acc: f64 = (0..k)
            .map(|m| self_lag[k - m] * own_impact[m] + cross_lag[k - m] * other_impact[m])
            .sum();
        path.push(acc * step);
    }
    Ok(path)
}

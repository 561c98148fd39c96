use serde::{Deserialize, Serialize};

use super::region::{classify_region, classify_schedule, BoundaryFlags, Region, RegionClass};
use super::schedule::{resolve_schedule, Leg, Presets, ResolvedSchedule, StrategyParams};
use crate::error::{Error, Result};
use crate::kernels::{CausalDomain, LagKernel, PairParams, PowerLawKernel, VolumeImpact};
use crate::quadrature::GaussLegendre;

/// Multiplier used when reporting costs on the scale of the reference cost maps.
pub const COST_DISPLAY_SCALE: f64 = 1e6;

/// One product term of a cost functional:
/// `outer_rate · g̃(inner_rate) · ∬_domain G(t − t′) dt′ dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerm {
    pub outer_rate: f64,
    pub inner_rate: f64,
    pub domain: CausalDomain,
}

/// Phase of a leg: `(start, end, signed rate)`; an unwind phase feeding the
/// inner integral runs to `t` (end `∞`).
type Phase = (f64, f64, f64);

fn first(leg: &Leg) -> Phase {
    (0.0, leg.switch_time(), leg.first_rate())
}

fn second(leg: &Leg) -> Phase {
    (leg.switch_time(), leg.period, leg.second_rate())
}

/// Inner phase with its upper limit replaced by the running time `t`.
fn open(p: Phase) -> Phase {
    (p.0, f64::INFINITY, p.2)
}

fn term(outer: Phase, inner: Phase) -> Result<CostTerm> {
    Ok(CostTerm {
        outer_rate: outer.2,
        inner_rate: inner.2,
        domain: CausalDomain::new(outer.0, outer.1, inner.0, inner.1)?,
    })
}

/// Terms of the cost on stock `i` from stock `j`'s trading, for `region`.
pub fn terms_ij(sched: &ResolvedSchedule, region: Region) -> Result<Vec<CostTerm>> {
    let (i, j) = (&sched.i, &sched.j);
    match region {
        Region::I | Region::II => vec![
            term(first(i), first(j)),
            term(first(i), open(second(j))),
            term(second(i), first(j)),
            term(second(i), open(second(j))),
        ],
        Region::III => vec![
            term(first(i), open(first(j))),
            term(second(i), first(j)),
            term(second(i), open(second(j))),
        ],
        Region::IV => vec![term(first(i), open(first(j))), term(second(i), open(first(j)))],
    }
    .into_iter()
    .collect()
}

/// Terms of the cost on stock `j` from stock `i`'s trading, for `region`.
pub fn terms_ji(sched: &ResolvedSchedule, region: Region) -> Result<Vec<CostTerm>> {
    let (i, j) = (&sched.i, &sched.j);
    match region {
        Region::I => vec![
            term(first(j), open(first(i))),
            term(second(j), first(i)),
            term(second(j), open(second(i))),
        ],
        Region::II => vec![term(first(j), open(first(i))), term(second(j), open(first(i)))],
        Region::III | Region::IV => vec![
            term(first(j), first(i)),
            term(first(j), open(second(i))),
            term(second(j), first(i)),
            term(second(j), open(second(i))),
        ],
    }
    .into_iter()
    .collect()
}

/// Terms of a single stock's self-impact cost over its own round trip.
pub fn terms_self(leg: &Leg) -> Result<Vec<CostTerm>> {
    vec![
        term(first(leg), open(first(leg))),
        term(second(leg), first(leg)),
        term(second(leg), open(second(leg))),
    ]
    .into_iter()
    .collect()
}

/// How the double integrals are evaluated.
#[derive(Debug, Clone, Default)]
pub enum Integrator {
    /// The kernel's own causal double integral (closed form for the power law).
    #[default]
    ClosedForm,
    /// Gauss–Legendre on both axes, for any kernel.
    Quadrature(GaussLegendre),
}

impl Integrator {
    pub fn quadrature(order: usize) -> Self {
        Integrator::Quadrature(GaussLegendre::new(order))
    }

    pub fn integrate<K: LagKernel + ?Sized>(&self, kernel: &K, domain: &CausalDomain) -> f64 {
        match self {
            Integrator::ClosedForm => kernel.causal_double_integral(domain),
            Integrator::Quadrature(rule) => rule.causal_double(domain, |tau| kernel.value(tau)),
        }
    }

    pub fn sum_terms<K: LagKernel + ?Sized>(&self, terms: &[CostTerm], kernel: &K, impact: &VolumeImpact) -> f64 {
        terms
            .iter()
            .map(|t| {
                let amp = t.outer_rate * impact.signed(t.inner_rate);
                if amp == 0.0 {
                    0.0
                } else {
                    amp * self.integrate(kernel, &t.domain)
                }
            })
            .sum()
    }

    /// Cost on stock `i` induced by stock `j`'s trades.
    pub fn cross_cost_ij<K: LagKernel + ?Sized>(
        &self,
        sched: &ResolvedSchedule,
        region: Region,
        kernel_ij: &K,
        g_i: &VolumeImpact,
    ) -> Result<f64> {
        check_region(sched, region)?;
        Ok(self.sum_terms(&terms_ij(sched, region)?, kernel_ij, g_i))
    }

    /// Cost on stock `j` induced by stock `i`'s trades.
    pub fn cross_cost_ji<K: LagKernel + ?Sized>(
        &self,
        sched: &ResolvedSchedule,
        region: Region,
        kernel_ji: &K,
        g_j: &VolumeImpact,
    ) -> Result<f64> {
        check_region(sched, region)?;
        Ok(self.sum_terms(&terms_ji(sched, region)?, kernel_ji, g_j))
    }

    /// Self-impact cost of one round trip.
    pub fn self_cost<K: LagKernel + ?Sized>(&self, leg: &Leg, kernel: &K, f: &VolumeImpact) -> Result<f64> {
        leg.validate()?;
        Ok(self.sum_terms(&terms_self(leg)?, kernel, f))
    }

    /// Both cross costs of an already resolved schedule, region read from its
    /// phase times.
    pub fn schedule_cost(&self, sched: &ResolvedSchedule, model: &CrossImpact) -> Result<CostBreakdown> {
        let region = classify_schedule(sched);
        let omega_ij = self.cross_cost_ij(sched, region, &model.kernel_ij, &model.g_i)?;
        let omega_ji = self.cross_cost_ji(sched, region, &model.kernel_ji, &model.g_j)?;
        Ok(CostBreakdown::new(
            omega_ij,
            omega_ji,
            RegionClass {
                region,
                boundary: BoundaryFlags::default(),
            },
        ))
    }

    /// `Ω_c = Ω_ij + Ω_ji` for a strategy, with the region classified from
    /// the strategy parameters.
    pub fn cross_cost_total(
        &self,
        presets: &Presets,
        params: &StrategyParams,
        model: &CrossImpact,
    ) -> Result<CostBreakdown> {
        let sched = resolve_schedule(presets, params)?;
        let class = classify_region(params);
        let omega_ij = self.cross_cost_ij(&sched, class.region, &model.kernel_ij, &model.g_i)?;
        let omega_ji = self.cross_cost_ji(&sched, class.region, &model.kernel_ji, &model.g_j)?;
        Ok(CostBreakdown::new(omega_ij, omega_ji, class))
    }
}

fn check_region(sched: &ResolvedSchedule, region: Region) -> Result<()> {
    sched.i.validate()?;
    sched.j.validate()?;
    if region.admits_schedule(sched) {
        Ok(())
    } else {
        Err(Error::Consistency(format!(
            "schedule with switch times {:.6}/{:.6} and periods {:.6}/{:.6} is not in region {region}",
            sched.i.switch_time(),
            sched.j.switch_time(),
            sched.i.period,
            sched.j.period
        )))
    }
}

/// Cross-impact kernels and volume impacts of a stock pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossImpact {
    /// Lag kernel of `j`'s trades on `i`'s price.
    pub kernel_ij: PowerLawKernel,
    /// Lag kernel of `i`'s trades on `j`'s price.
    pub kernel_ji: PowerLawKernel,
    /// Impact on `i` of `j`'s volume.
    pub g_i: VolumeImpact,
    /// Impact on `j` of `i`'s volume.
    pub g_j: VolumeImpact,
}

impl CrossImpact {
    pub fn from_params(p: &PairParams) -> Result<Self> {
        Ok(Self {
            kernel_ij: p.ij.kernel()?,
            kernel_ji: p.ji.kernel()?,
            g_i: p.ij.volume_impact()?,
            g_j: p.ji.volume_impact()?,
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            kernel_ij: self.kernel_ji,
            kernel_ji: self.kernel_ij,
            g_i: self.g_j,
            g_j: self.g_i,
        }
    }

    /// Both kernel amplitudes multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            kernel_ij: self.kernel_ij.scaled(c),
            kernel_ji: self.kernel_ji.scaled(c),
            ..*self
        }
    }
}

/// Result of a strategy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub omega_ij: f64,
    pub omega_ji: f64,
    pub omega_c: f64,
    pub omega_c_x1e6: f64,
    pub region: Region,
    pub boundary: BoundaryFlags,
}

impl CostBreakdown {
    fn new(omega_ij: f64, omega_ji: f64, class: RegionClass) -> Self {
        let omega_c = omega_ij + omega_ji;
        Self {
            omega_ij,
            omega_ji,
            omega_c,
            omega_c_x1e6: omega_c * COST_DISPLAY_SCALE,
            region: class.region,
            boundary: class.boundary,
        }
    }
}

/// Cost on `i` from `j`, closed-form integrals.
pub fn cross_cost_ij(
    sched: &ResolvedSchedule,
    region: Region,
    kernel_ij: &PowerLawKernel,
    g_i: &VolumeImpact,
) -> Result<f64> {
    Integrator::ClosedForm.cross_cost_ij(sched, region, kernel_ij, g_i)
}

/// Cost on `j` from `i`, closed-form integrals.
pub fn cross_cost_ji(
    sched: &ResolvedSchedule,
    region: Region,
    kernel_ji: &PowerLawKernel,
    g_j: &VolumeImpact,
) -> Result<f64> {
    Integrator::ClosedForm.cross_cost_ji(sched, region, kernel_ji, g_j)
}

/// `Ω_c` of a strategy, closed-form integrals.
pub fn cross_cost_total(presets: &Presets, params: &StrategyParams, model: &CrossImpact) -> Result<CostBreakdown> {
    Integrator::ClosedForm.cross_cost_total(presets, params, model)
}

/// Self-impact cost of a single round trip, closed-form integrals.
pub fn self_cost(leg: &Leg, kernel: &PowerLawKernel, f: &VolumeImpact) -> Result<f64> {
    Integrator::ClosedForm.self_cost(leg, kernel, f)
}

/// A strategy-evaluation request as read from JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyRequest {
    pub presets: Presets,
    pub params: StrategyParams,
    pub kernels: PairParams,
}

impl StrategyRequest {
    pub fn evaluate(&self) -> Result<CostBreakdown> {
        let model = CrossImpact::from_params(&self.kernels)?;
        cross_cost_total(&self.presets, &self.params, &model)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::StepRate;

/// The free strategy triple: buy-rate fractions of both stocks and the
/// trading-period ratio `ζ_T = T_i / T_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub kappa_i: f64,
    pub kappa_j: f64,
    pub zeta_t: f64,
}

impl StrategyParams {
    pub fn new(kappa_i: f64, kappa_j: f64, zeta_t: f64) -> Result<Self> {
        let p = Self {
            kappa_i,
            kappa_j,
            zeta_t,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("kappa_i", self.kappa_i), ("kappa_j", self.kappa_j)] {
            if !(k > 0.0 && k < 1.0) {
                return Err(Error::Parameter(format!(
                    "{name} must lie strictly inside (0, 1), got {k}"
                )));
            }
        }
        if !(self.zeta_t > 0.0 && self.zeta_t.is_finite()) {
            return Err(Error::Parameter(format!(
                "zeta_T must be positive, got {}",
                self.zeta_t
            )));
        }
        Ok(())
    }

    /// Buy-phase fraction of stock i's period, `1 − κ_i`.
    pub fn theta_i(&self) -> f64 {
        1.0 - self.kappa_i
    }

    pub fn theta_j(&self) -> f64 {
        1.0 - self.kappa_j
    }

    /// Parameters of the same strategy with the stocks relabelled.
    pub fn swapped(&self) -> Self {
        Self {
            kappa_i: self.kappa_j,
            kappa_j: self.kappa_i,
            zeta_t: 1.0 / self.zeta_t,
        }
    }
}

/// Quantities fixed by the trader before choosing a strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presets {
    /// Ratio of total bought-in volumes, `v_i / v_j`.
    pub zeta_v: f64,
    /// Trading period of stock i.
    pub period_i: f64,
    /// Buy-phase rate of stock i, in normalized volume per unit time.
    pub rate_in_i: f64,
}

impl Presets {
    pub fn new(zeta_v: f64, period_i: f64, rate_in_i: f64) -> Result<Self> {
        let p = Self {
            zeta_v,
            period_i,
            rate_in_i,
        };
        p.validate()?;
        Ok(p)
    }

    /// Equal volumes, unit period, buying 0.1 of the average volume rate.
    pub fn reference() -> Self {
        Self {
            zeta_v: 1.0,
            period_i: 1.0,
            rate_in_i: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zeta_v", self.zeta_v),
            ("period_i", self.period_i),
            ("rate_in_i", self.rate_in_i),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which phase of the round trip comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    BuyFirst,
    SellFirst,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::BuyFirst => 1.0,
            Direction::SellFirst => -1.0,
        }
    }
}

/// One stock's round trip: a first phase of length `θ·T` at `rate_in`, then
/// the unwind at `rate_out` until `T`. Rates are positive magnitudes; the
/// direction fixes their signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub period: f64,
    pub theta: f64,
    pub rate_in: f64,
    pub rate_out: f64,
    #[serde(default)]
    pub direction: Direction,
}

impl Leg {
    /// Time at which the first phase ends, `θ·T`.
    pub fn switch_time(&self) -> f64 {
        self.theta * self.period
    }

    /// Signed rate of the first phase.
    pub fn first_rate(&self) -> f64 {
        self.direction.sign() * self.rate_in
    }

    /// Signed rate of the second phase.
    pub fn second_rate(&self) -> f64 {
        -self.direction.sign() * self.rate_out
    }

    /// Volume traded in the first phase.
    pub fn entry_volume(&self) -> f64 {
        self.rate_in * self.switch_time()
    }

    /// Net signed volume over the period; zero for a round trip.
    pub fn net_volume(&self) -> f64 {
        self.first_rate() * self.switch_time() + self.second_rate() * (1.0 - self.theta) * self.period
    }

    /// The rate as a function of time. With `extend_unwind`, the second phase
    /// continues past the period end, which is how the cross-cost integrals
    /// treat the other stock's unwind.
    pub fn rate_profile(&self, extend_unwind: bool) -> StepRate {
        let end = if extend_unwind { f64::INFINITY } else { self.period };
        StepRate::new(vec![
            (0.0, self.switch_time(), self.first_rate()),
            (self.switch_time(), end, self.second_rate()),
        ])
        .expect("leg phases are ordered")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Parameter(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Parameter(format!(
                "theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        if !(self.rate_in > 0.0 && self.rate_out > 0.0 && self.rate_in.is_finite() && self.rate_out.is_finite()) {
            return Err(Error::Parameter("leg rates must be positive and finite".into()));
        }
        Ok(())
    }

    /// A single-stock round trip with buy-rate fraction `kappa`.
    pub fn round_trip(period: f64, kappa: f64, rate_in: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::Parameter(format!(
                "kappa must lie strictly inside (0, 1), got {kappa}"
            )));
        }
        let total = rate_in / kappa;
        let leg = Self {
            period,
            theta: 1.0 - kappa,
            rate_in,
            rate_out: (1.0 - kappa) * total,
            direction: Direction::BuyFirst,
        };
        leg.validate()?;
        Ok(leg)
    }

    fn reversed(&self) -> Self {
        Self {
            direction: match self.direction {
                Direction::BuyFirst => Direction::SellFirst,
                Direction::SellFirst => Direction::BuyFirst,
            },
            ..*self
        }
    }
}

/// Both legs of a paired strategy, fully resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSchedule {
    pub i: Leg,
    pub j: Leg,
}

impl ResolvedSchedule {
    /// Both legs traded in the opposite direction (all rates negated).
    pub fn reversed(&self) -> Self {
        Self {
            i: self.i.reversed(),
            j: self.j.reversed(),
        }
    }

    /// The same schedule with the stocks relabelled.
    pub fn swapped(&self) -> Self {
        Self { i: self.j, j: self.i }
    }

    /// `(v_i^in θ_i T_i) / (v_j^in θ_j T_j)`.
    pub fn volume_ratio(&self) -> f64 {
        self.i.entry_volume() / self.j.entry_volume()
    }
}

/// Works out rates, periods and phase times from the presets and the free
/// triple `{κ_i, κ_j, ζ_T}`.
pub fn resolve_schedule(presets: &Presets, params: &StrategyParams) -> Result<ResolvedSchedule> {
    presets.validate()?;
    params.validate()?;
    let StrategyParams {
        kappa_i,
        kappa_j,
        zeta_t,
    } = *params;

    let total_i = presets.rate_in_i / kappa_i;
    // v_i / v_j = (ζ_v / ζ_T) · (1 − κ_j) κ_j / ((1 − κ_i) κ_i)
    let ratio = presets.zeta_v / zeta_t * ((1.0 - kappa_j) * kappa_j) / ((1.0 - kappa_i) * kappa_i);
    let total_j = total_i / ratio;

    let i = Leg {
        period: presets.period_i,
        theta: 1.0 - kappa_i,
        rate_in: presets.rate_in_i,
        rate_out: (1.0 - kappa_i) * total_i,
        direction: Direction::BuyFirst,
    };
    let j = Leg {
        period: presets.period_i / zeta_t,
        theta: 1.0 - kappa_j,
        rate_in: kappa_j * total_j,
        rate_out: (1.0 - kappa_j) * total_j,
        direction: Direction::BuyFirst,
    };
    Ok(ResolvedSchedule { i, j })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_case() {
        let s = resolve_schedule(&Presets::reference(), &StrategyParams::new(0.5, 0.5, 1.0).unwrap()).unwrap();
        assert_eq!(s.j.period, 1.0);
        assert_eq!(s.i.theta, 0.5);
        assert_eq!(s.j.theta, 0.5);
        assert!((s.j.rate_in - 0.1).abs() < 1e-15);
        assert!((s.i.rate_out - 0.1).abs() < 1e-15);
        assert!((s.j.rate_out - 0.1).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_case() {
        let s = resolve_schedule(&Presets::reference(), &StrategyParams::new(0.5, 0.8, 2.0).unwrap()).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(s.j.period, 0.5));
        assert!(close(s.i.theta, 0.5));
        assert!(close(s.j.theta, 0.2));
        assert!(close(s.i.rate_in + s.i.rate_out, 0.2));
        assert!(close(s.j.rate_in + s.j.rate_out, 0.625));
        assert!(close(s.j.rate_in, 0.5));
        assert!(close(s.j.rate_out, 0.125));
        assert!(close(s.i.entry_volume(), 0.05));
        assert!(close(s.j.entry_volume(), 0.05));
        assert!(s.i.net_volume().abs() < 1e-12 && s.j.net_volume().abs() < 1e-12);
    }

    #[test]
    fn kappa_bounds_are_strict() {
        for (ki, kj) in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (-0.1, 0.5)] {
            assert!(matches!(StrategyParams::new(ki, kj, 1.0), Err(Error::Parameter(_))));
        }
        assert!(StrategyParams::new(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn presets_must_be_positive() {
        assert!(Presets::new(0.0, 1.0, 0.1).is_err());
        assert!(Presets::new(1.0, -1.0, 0.1).is_err());
        assert!(Presets::new(1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn reversed_profile_negates() {
        let s = resolve_schedule(&Presets::reference(), &StrategyParams::new(0.3, 0.6, 1.5).unwrap()).unwrap();
        let r = s.reversed();
        for t in [0.1, 0.5, 0.9] {
            assert_eq!(r.i.rate_profile(false).value(t), -s.i.rate_profile(false).value(t));
        }
        assert!(r.i.net_volume().abs() < 1e-15);
    }

    #[test]
    fn single_leg_round_trip() {
        let leg = Leg::round_trip(1.0, 0.5, 0.1).unwrap();
        assert_eq!(leg.theta, 0.5);
        assert!((leg.rate_out - 0.1).abs() < 1e-15);
        assert!(Leg::round_trip(1.0, 1.0, 0.1).is_err());
    }
}

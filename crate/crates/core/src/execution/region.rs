use std::fmt;

use serde::{Deserialize, Serialize};

use super::schedule::{ResolvedSchedule, StrategyParams};

/// Relative slack when deciding whether a point sits on a region boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Ordering of the two stocks' phase-switch and end times.
///
/// With `A = θ_i T_i` and `B = θ_j T_j`:
/// I: `B ≤ A ≤ T_j`; II: `B ≤ T_j ≤ A`; III: `A ≤ B ≤ T_i`; IV: `A ≤ T_i ≤ B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    I,
    II,
    III,
    IV,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::I, Region::II, Region::III, Region::IV];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::I => "I",
            Region::II => "II",
            Region::III => "III",
            Region::IV => "IV",
        }
    }

    /// Whether this region's inequality chain holds for `params`, boundaries
    /// included.
    pub fn admits(self, params: &StrategyParams) -> bool {
        let (lo, hi) = self.zeta_bounds(params);
        le(lo, params.zeta_t) && le(params.zeta_t, hi)
    }

    /// The closed `ζ_T` interval of this region at fixed `(κ_i, κ_j)`;
    /// the upper end of II is `+∞` and the lower end of IV is `0`.
    pub fn zeta_bounds(self, params: &StrategyParams) -> (f64, f64) {
        let ti = params.theta_i();
        let tj = params.theta_j();
        match self {
            Region::I => (tj / ti, 1.0 / ti),
            Region::II => (1.0 / ti, f64::INFINITY),
            Region::III => (tj, tj / ti),
            Region::IV => (0.0, tj),
        }
    }

    /// Whether the schedule's phase times are ordered as this region requires.
    pub fn admits_schedule(self, sched: &ResolvedSchedule) -> bool {
        let a = sched.i.switch_time();
        let b = sched.j.switch_time();
        let (ti, tj) = (sched.i.period, sched.j.period);
        match self {
            Region::I => le(b, a) && le(a, tj),
            Region::II => le(tj, a),
            Region::III => le(a, b) && le(b, ti),
            Region::IV => le(ti, b),
        }
    }

    /// The region after relabelling `i ↔ j`.
    pub fn swapped(self) -> Self {
        match self {
            Region::I => Region::III,
            Region::II => Region::IV,
            Region::III => Region::I,
            Region::IV => Region::II,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Region {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "I" | "1" => Ok(Region::I),
            "II" | "2" => Ok(Region::II),
            "III" | "3" => Ok(Region::III),
            "IV" | "4" => Ok(Region::IV),
            other => Err(crate::Error::Parameter(format!("unknown region {other:?}"))),
        }
    }
}

/// Region boundaries a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundaryFlags {
    /// `ζ_T = 1/(1−κ_i)`
    pub i_ii: bool,
    /// `ζ_T = (1−κ_j)/(1−κ_i)`
    pub i_iii: bool,
    /// `ζ_T = 1−κ_j`
    pub iii_iv: bool,
}

impl BoundaryFlags {
    pub fn any(&self) -> bool {
        self.i_ii || self.i_iii || self.iii_iv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionClass {
    pub region: Region,
    pub boundary: BoundaryFlags,
}

/// Assigns the region; on a shared boundary the lower-numbered region wins and
/// the boundary is flagged.
pub fn classify_region(params: &StrategyParams) -> RegionClass {
    let ti = params.theta_i();
    let tj = params.theta_j();
    let z = params.zeta_t;
    let boundary = BoundaryFlags {
        i_ii: near(z, 1.0 / ti),
        i_iii: near(z, tj / ti),
        iii_iv: near(z, tj),
    };
    let region = Region::ALL
        .into_iter()
        .find(|r| r.admits(params))
        // the four closed intervals cover (0, ∞); unreachable for valid params
        .unwrap_or(if z > 1.0 / ti { Region::II } else { Region::IV });
    RegionClass { region, boundary }
}

/// Region of a schedule, read from its phase times.
pub fn classify_schedule(sched: &ResolvedSchedule) -> Region {
    Region::ALL
        .into_iter()
        .find(|r| r.admits_schedule(sched))
        .unwrap_or(Region::II)
}

fn le(x: f64, y: f64) -> bool {
    x <= y || near(x, y)
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= BOUNDARY_TOLERANCE * x.abs().max(y.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(ki: f64, kj: f64, z: f64) -> RegionClass {
        classify_region(&StrategyParams::new(ki, kj, z).unwrap())
    }

    #[test]
    fn examples() {
        assert_eq!(class(0.5, 0.5, 1.0).region, Region::I);
        assert_eq!(class(0.6, 0.2, 3.0).region, Region::II);
        assert_eq!(class(0.2, 0.6, 0.3).region, Region::IV);
        assert_eq!(class(0.2, 0.6, 0.45).region, Region::III);
    }

    #[test]
    fn symmetric_point_sits_on_i_iii_boundary() {
        let c = class(0.5, 0.5, 1.0);
        assert!(c.boundary.i_iii);
        assert!(!c.boundary.i_ii && !c.boundary.iii_iv);
    }

    #[test]
    fn ties_go_to_lower_region() {
        // ζ_T = 1/(1-κ_i) = 2.5
        let c = class(0.6, 0.2, 2.5);
        assert_eq!(c.region, Region::I);
        assert!(c.boundary.i_ii);
        // ζ_T = 1-κ_j = 0.4
        let c = class(0.2, 0.6, 0.4);
        assert_eq!(c.region, Region::III);
        assert!(c.boundary.iii_iv);
    }

    #[test]
    fn swap_maps_regions() {
        let p = StrategyParams::new(0.3, 0.7, 0.8).unwrap();
        let r = classify_region(&p).region;
        assert_eq!(classify_region(&p.swapped()).region, r.swapped());
    }
}

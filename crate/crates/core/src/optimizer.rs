//! Cost surfaces over `(κ_i, κ_j)` at fixed `ζ_T`, and minimal-cost strategy
//! search.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::execution::{
    classify_region, cross_cost_total, resolve_schedule, CrossImpact, Presets, Region, StrategyParams,
    COST_DISPLAY_SCALE,
};

pub const SURFACE_CSV_HEADER: &str = "zeta_T,kappa_i,kappa_j,region,feasible,omega_c,omega_c_x1e6";

/// Nelder–Mead evaluation budget.
pub const MAX_REFINE_EVALUATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kappa_steps: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub zeta_t_values: Vec<f64>,
    /// Optional cap on every phase rate magnitude; cells exceeding it are
    /// marked infeasible. Off by default.
    #[serde(default)]
    pub rate_cap: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            kappa_steps: 50,
            kappa_min: 0.02,
            kappa_max: 0.98,
            zeta_t_values: vec![0.5, 1.0, 2.0],
            rate_cap: None,
        }
    }
}

impl GridSpec {
    pub fn new(kappa_steps: usize, zeta_t_values: Vec<f64>) -> Result<Self> {
        let g = Self {
            kappa_steps,
            zeta_t_values,
            ..Self::default()
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa_steps < 2 {
            return Err(Error::Parameter(format!(
                "kappa_steps must be at least 2, got {}",
                self.kappa_steps
            )));
        }
        if !(self.kappa_min > 0.0 && self.kappa_min < self.kappa_max && self.kappa_max < 1.0) {
            return Err(Error::Parameter(format!(
                "kappa bounds must satisfy 0 < min < max < 1, got [{}, {}]",
                self.kappa_min, self.kappa_max
            )));
        }
        if let Some(z) = self.zeta_t_values.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
            return Err(Error::Parameter(format!("zeta_T values must be positive, got {z}")));
        }
        if let Some(cap) = self.rate_cap {
            if !(cap > 0.0) {
                return Err(Error::Parameter(format!("rate cap must be positive, got {cap}")));
            }
        }
        Ok(())
    }

    /// Grid nodes on one κ axis, endpoints included.
    pub fn kappas(&self) -> Vec<f64> {
        let n = self.kappa_steps;
        let span = self.kappa_max - self.kappa_min;
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    self.kappa_max
                } else {
                    self.kappa_min + span * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kappa_i: f64,
    pub kappa_j: f64,
    pub region: Option<Region>,
    pub feasible: bool,
    pub omega_c: Option<f64>,
    pub omega_c_x1e6: Option<f64>,
}

/// Costs over the `(κ_i, κ_j)` grid at one `ζ_T`, row-major with `κ_i` outer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSurface {
    pub zeta_t: f64,
    pub kappa_steps: usize,
    pub cells: Vec<Cell>,
}

impl CostSurface {
    pub fn cell(&self, ki: usize, kj: usize) -> &Cell {
        &self.cells[ki * self.kappa_steps + kj]
    }

    pub fn feasible_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.feasible)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SURFACE_CSV_HEADER.split(','))?;
        for c in &self.cells {
            w.write_record([
                fmt_f64(self.zeta_t),
                fmt_f64(c.kappa_i),
                fmt_f64(c.kappa_j),
                c.region.map(|r| r.to_string()).unwrap_or_default(),
                c.feasible.to_string(),
                c.omega_c.map(fmt_f64).unwrap_or_default(),
                c.omega_c_x1e6.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<surface csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

/// Shortest decimal that round-trips.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A cell is feasible when some region's chain holds at its coordinates and,
/// if a cap is set, no phase rate exceeds it.
fn evaluate_cell(presets: &Presets, model: &CrossImpact, p: StrategyParams, rate_cap: Option<f64>) -> Result<Cell> {
    let empty = Cell {
        kappa_i: p.kappa_i,
        kappa_j: p.kappa_j,
        region: None,
        feasible: false,
        omega_c: None,
        omega_c_x1e6: None,
    };
    if !Region::ALL.iter().any(|r| r.admits(&p)) {
        return Ok(empty);
    }
    if let Some(cap) = rate_cap {
        let s = resolve_schedule(presets, &p)?;
        let max_rate = [s.i.rate_in, s.i.rate_out, s.j.rate_in, s.j.rate_out]
            .into_iter()
            .fold(0.0, f64::max);
        if max_rate > cap {
            return Ok(Cell {
                region: Some(classify_region(&p).region),
                ..empty
            });
        }
    }
    let c = cross_cost_total(presets, &p, model)?;
    Ok(Cell {
        region: Some(c.region),
        feasible: true,
        omega_c: Some(c.omega_c),
        omega_c_x1e6: Some(c.omega_c_x1e6),
        ..empty
    })
}

/// Evaluates `Ω_c` at every grid node for one `ζ_T`. Cells are computed in
/// parallel and assembled in grid order.
pub fn build_surface(presets: &Presets, model: &CrossImpact, zeta_t: f64, grid: &GridSpec) -> Result<CostSurface> {
    grid.validate()?;
    presets.validate()?;
    if !(zeta_t > 0.0 && zeta_t.is_finite()) {
        return Err(Error::Parameter(format!("zeta_T must be positive, got {zeta_t}")));
    }
    let ks = grid.kappas();
    let n = ks.len();
    let cells = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let p = StrategyParams {
                kappa_i: ks[idx / n],
                kappa_j: ks[idx % n],
                zeta_t,
            };
            evaluate_cell(presets, model, p, grid.rate_cap)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostSurface {
        zeta_t,
        kappa_steps: n,
        cells,
    })
}

/// One surface per `ζ_T` in the grid spec.
pub fn build_surfaces(presets: &Presets, model: &CrossImpact, grid: &GridSpec) -> Result<Vec<CostSurface>> {
    grid.zeta_t_values
        .iter()
        .map(|&z| build_surface(presets, model, z, grid))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalStrategy {
    pub params: StrategyParams,
    pub omega_c: f64,
    pub omega_c_x1e6: f64,
    pub region: Region,
}

/// Filter applied to candidate cells in [`find_min_where`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MinFilter {
    pub region: Option<Region>,
    /// Only cells with strictly positive cost.
    pub positive_only: bool,
}

/// Global minimizer over every feasible cell of every surface. Ties go to the
/// smaller `ζ_T`, then the smaller `κ_i`, then the smaller `κ_j`.
pub fn find_min(surfaces: &[CostSurface]) -> Result<OptimalStrategy> {
    find_min_where(surfaces, MinFilter::default())
}

pub fn find_min_where(surfaces: &[CostSurface], filter: MinFilter) -> Result<OptimalStrategy> {
    let mut cands: Vec<(f64, &Cell)> = surfaces
        .iter()
        .flat_map(|s| s.cells.iter().map(move |c| (s.zeta_t, c)))
        .filter(|(_, c)| c.feasible)
        .filter(|(_, c)| filter.region.is_none() || c.region == filter.region)
        .filter(|(_, c)| !filter.positive_only || c.omega_c.is_some_and(|v| v > 0.0))
        .collect();
    cands.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.kappa_i.total_cmp(&b.1.kappa_i))
            .then(a.1.kappa_j.total_cmp(&b.1.kappa_j))
    });
    let mut best: Option<(f64, &Cell)> = None;
    for (z, c) in cands {
        let v = c.omega_c.expect("feasible cells carry a cost");
        if best.is_none_or(|(_, b)| v < b.omega_c.unwrap()) {
            best = Some((z, c));
        }
    }
    let (zeta_t, c) = best.ok_or(Error::EmptyDomain)?;
    let omega_c = c.omega_c.unwrap();
    Ok(OptimalStrategy {
        params: StrategyParams {
            kappa_i: c.kappa_i,
            kappa_j: c.kappa_j,
            zeta_t,
        },
        omega_c,
        omega_c_x1e6: omega_c * COST_DISPLAY_SCALE,
        region: c.region.expect("feasible cells carry a region"),
    })
}

/// Nelder–Mead descent over `(κ_i, κ_j, ζ_T)` starting from `seed`. Points
/// outside `0 < κ < 1`, `ζ_T > 0` (or outside `region`, when given) are
/// rejected. Stops when the simplex cost spread drops below `tol` or after
/// [`MAX_REFINE_EVALUATIONS`] evaluations; never returns a worse point than
/// the seed.
pub fn refine_min(
    presets: &Presets,
    model: &CrossImpact,
    seed: &OptimalStrategy,
    tol: f64,
    region: Option<Region>,
) -> Result<OptimalStrategy> {
    seed.params.validate()?;
    let evals = std::cell::Cell::new(0usize);
    let cost = |x: &[f64; 3]| -> f64 {
        evals.set(evals.get() + 1);
        let Ok(p) = StrategyParams::new(x[0], x[1], x[2]) else {
            return f64::INFINITY;
        };
        if region.is_some_and(|r| classify_region(&p).region != r) {
            return f64::INFINITY;
        }
        cross_cost_total(presets, &p, model).map_or(f64::INFINITY, |c| c.omega_c)
    };

    let x0 = [seed.params.kappa_i, seed.params.kappa_j, seed.params.zeta_t];
    let steps = [
        0.05_f64.min(0.5 * x0[0].min(1.0 - x0[0])),
        0.05_f64.min(0.5 * x0[1].min(1.0 - x0[1])),
        0.05 * x0[2],
    ];
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let f0 = cost(&x0);
    simplex.push((x0, f0));
    for d in 0..3 {
        // try the step on either side, keep the better
        let mut best: Option<([f64; 3], f64)> = None;
        for s in [steps[d], -steps[d]] {
            let mut x = x0;
            x[d] += s;
            let f = cost(&x);
            if best.is_none_or(|(_, b)| f < b) {
                best = Some((x, f));
            }
        }
        simplex.push(best.unwrap());
    }

    let by_cost = |a: &([f64; 3], f64), b: &([f64; 3], f64)| a.1.total_cmp(&b.1);
    while evals.get() < MAX_REFINE_EVALUATIONS {
        simplex.sort_by(by_cost);
        let spread = simplex[3].1 - simplex[0].1;
        if spread.is_finite() && spread < tol {
            break;
        }
        let centroid: [f64; 3] = std::array::from_fn(|d| simplex[..3].iter().map(|p| p.0[d]).sum::<f64>() / 3.0);
        let worst = simplex[3];
        let along = |t: f64| -> [f64; 3] { std::array::from_fn(|d| centroid[d] + t * (worst.0[d] - centroid[d])) };

        let xr = along(-1.0);
        let fr = cost(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = cost(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                (x, cost(&x))
            } else {
                let x = along(0.5);
                (x, cost(&x))
            };
            if fc < worst.1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    let x: [f64; 3] = std::array::from_fn(|d| best[d] + 0.5 * (p.0[d] - best[d]));
                    *p = (x, cost(&x));
                }
            }
        }
    }
    simplex.sort_by(by_cost);
    let (x, f) = simplex[0];
    if !(f < seed.omega_c) {
        return Ok(*seed);
    }
    let params = StrategyParams::new(x[0], x[1], x[2])?;
    Ok(OptimalStrategy {
        params,
        omega_c: f,
        omega_c_x1e6: f * COST_DISPLAY_SCALE,
        region: classify_region(&params).region,
    })
}

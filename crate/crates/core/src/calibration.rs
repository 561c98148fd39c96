//! Estimation of volume-impact exponents, mean volume impacts and lag kernels
//! from per-second bars.
//!
//! Direction `ij` is the impact of stock `j`'s trades on stock `i`'s price:
//! it uses `i`'s mids with `j`'s signs and volumes.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::ingest::StockBars;
use crate::kernels::{ImpactParams, LagKernel, PairParams, PowerLawKernel, TabulatedKernel, VolumeImpact};
use crate::microstructure::{
    conditional_response, default_volume_bins, response_curve, sign_self_correlator, ConditionalResponse,
    ResponseCurve, SignCorrelator,
};

/// Condition number above which the plain solve is replaced by a ridge solve.
pub const MAX_CONDITION: f64 = 1e12;
/// Ridge strength relative to `trace(A) / L`.
pub const RIDGE_SCALE: f64 = 1e-8;
pub const FIT_MAX_ITERATIONS: usize = 200;
pub const FIT_STEP_TOLERANCE: f64 = 1e-10;

/// Result of the log-log volume-impact regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeFit {
    pub delta: f64,
    /// Intercept of `log(curve / R(1))` against `log v`.
    pub intercept: f64,
    pub bins_used: usize,
}

/// OLS slope of `log(curve / R(1))` against `log v` over bins whose
/// volume lies in `(window.0, window.1]`, with at least `min_count` samples
/// and a positive ratio.
pub fn fit_volume_impact(
    curve: &ConditionalResponse,
    r1: f64,
    window: (f64, f64),
    min_count: u64,
) -> Result<VolumeFit> {
    if !(r1 != 0.0 && r1.is_finite()) {
        return Err(Error::Fit(format!("R(1) must be finite and nonzero, got {r1}")));
    }
    let pts: Vec<(f64, f64)> = curve
        .defined(min_count)
        .filter(|b| b.v > window.0 && b.v <= window.1)
        .filter_map(|b| {
            let ratio = b.value / r1;
            (ratio > 0.0 && ratio.is_finite()).then(|| (b.v.ln(), ratio.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "volume-impact fit needs at least 3 usable bins, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all usable bins share one volume".into()));
    }
    let delta = sxy / sxx;
    Ok(VolumeFit {
        delta,
        intercept: my - delta * mx,
        bins_used: pts.len(),
    })
}

/// `⟨v^δ⟩` over the given (trading-second) volumes.
pub fn mean_volume_impact(volumes: &[f64], delta: f64) -> Result<f64> {
    if volumes.is_empty() {
        return Err(Error::Consistency("no volumes to average".into()));
    }
    let g = VolumeImpact { delta };
    Ok(volumes.iter().map(|&v| g.unsigned(v)).sum::<f64>() / volumes.len() as f64)
}

/// `A(τ, τ′) = Θ(τ − τ′) − Θ(τ′)` for `τ, τ′ ∈ 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignCorrelatorMatrix {
    pub matrix: DMatrix<f64>,
}

impl SignCorrelatorMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_sign_matrix(theta: &SignCorrelator, l: usize) -> Result<SignCorrelatorMatrix> {
    if l == 0 {
        return Err(Error::Parameter("matrix size must be positive".into()));
    }
    if theta.tau_max() < l {
        return Err(Error::Parameter(format!(
            "correlator known up to lag {}, matrix needs {l}",
            theta.tau_max()
        )));
    }
    if let Some(k) = theta.values[..=l].iter().position(|v| !v.is_finite()) {
        return Err(Error::Consistency(format!("sign correlator undefined at lag {k}")));
    }
    let th = &theta.values;
    let matrix = DMatrix::from_fn(l, l, |r, c| {
        let (tau, tau_p) = (r + 1, c + 1);
        th[tau.abs_diff(tau_p)] - th[tau_p]
    });
    Ok(SignCorrelatorMatrix { matrix })
}

/// Output of [`extract_kernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub tabulated: TabulatedKernel,
    /// Estimated 1-norm condition number of `A` (infinite if singular).
    pub condition: f64,
    /// The ridge solve replaced the plain inverse.
    pub ridge: bool,
    /// `‖A G − b‖ / ‖b‖` of the full-length solution.
    pub relative_residual: f64,
}

/// Solves `A G = (w / ⟨g⟩) R` on lags `1..=L` and keeps the first
/// `report_len` entries. Falls back to `(AᵀA + λI) G = Aᵀ b` with
/// `λ = 1e-8 · trace(A) / L` if `A` is singular or its condition estimate
/// exceeds `1e12`.
pub fn extract_kernel(
    r: &ResponseCurve,
    a: &SignCorrelatorMatrix,
    mean_g: f64,
    w: f64,
    report_len: usize,
) -> Result<Extraction> {
    let l = a.len();
    if l == 0 || report_len == 0 || report_len > l {
        return Err(Error::Parameter(format!(
            "report length {report_len} must lie in 1..={l}"
        )));
    }
    if r.tau_max() < l {
        return Err(Error::Parameter(format!(
            "response known up to lag {}, need {l}",
            r.tau_max()
        )));
    }
    if let Some(k) = (1..=l).find(|&k| r.at(k).is_none()) {
        return Err(Error::Consistency(format!("response undefined at lag {k}")));
    }
    if !(mean_g > 0.0 && mean_g.is_finite() && w.is_finite()) {
        return Err(Error::Parameter(format!(
            "mean volume impact must be positive, got {mean_g}"
        )));
    }
    let scale = w / mean_g;
    let b = DVector::from_iterator(l, r.values[..l].iter().map(|v| v * scale));

    let lu = a.matrix.clone().lu();
    let plain = lu.solve(&b).filter(|x| x.iter().all(|v| v.is_finite()));
    let condition = match &plain {
        Some(_) => condition_1norm(&a.matrix, &lu),
        None => f64::INFINITY,
    };
    let (g, ridge) = match plain {
        Some(x) if condition <= MAX_CONDITION => (x, false),
        _ => {
            let mut lambda = RIDGE_SCALE * a.matrix.trace() / l as f64;
            if !(lambda > 0.0) {
                // trace gives no scale; fall back to unit scale
                lambda = RIDGE_SCALE;
            }
            let at = a.matrix.transpose();
            let mut normal = &at * &a.matrix;
            for k in 0..l {
                normal[(k, k)] += lambda;
            }
            let rhs = &at * &b;
            let x = normal
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .or_else(|| normal.lu().solve(&rhs))
                .ok_or_else(|| Error::Fit("ridge system is singular".into()))?;
            (x, true)
        }
    };
    let bn = b.norm();
    let relative_residual = if bn > 0.0 {
        (&a.matrix * &g - &b).norm() / bn
    } else {
        (&a.matrix * &g).norm()
    };
    Ok(Extraction {
        tabulated: TabulatedKernel::new(g.as_slice()[..report_len].to_vec())?,
        condition,
        ridge,
        relative_residual,
    })
}

/// Hager's estimate of `‖A‖₁ ‖A⁻¹‖₁` from an LU factorization.
fn condition_1norm(a: &DMatrix<f64>, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = a.nrows();
    let norm_a = (0..n)
        .map(|c| a.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let (l, u) = (lu.l(), lu.u());
    // Aᵀ x = y with P A = L U: Uᵀ Lᵀ P x = y
    let solve_t = |y: &DVector<f64>| -> Option<DVector<f64>> {
        let z = u.tr_solve_upper_triangular(y)?;
        let mut x = l.tr_solve_lower_triangular(&z)?;
        lu.p().inv_permute_rows(&mut x);
        Some(x)
    };
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = solve_t(&xi) else { return f64::INFINITY };
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (k, v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[j] = 1.0;
    }
    norm_a * est
}

/// Outcome of [`fit_kernel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub kernel: PowerLawKernel,
    pub converged: bool,
    pub iterations: usize,
    /// RMS of the residuals over the RMS of the data, on the fit window.
    pub residual_norm: f64,
    pub window: (usize, usize),
    /// `τ₀` ran past [`EXPONENTIAL_LIMIT`] times the window end. On the window
    /// the kernel is then `Γ₀ exp(−β τ/τ₀)`: only `β/τ₀` is determined.
    pub exponential_limit: bool,
}

pub const EXPONENTIAL_LIMIT: f64 = 1e3;

/// Default fit window: lags 10 through 300.
pub const DEFAULT_FIT_WINDOW: (usize, usize) = (10, 300);

/// Damped Gauss–Newton fit of `Γ₀ / (1 + τ/τ₀)^β` to the tabulated kernel on
/// lags `window.0..=window.1`, with `τ₀ > 0` and `β ≥ 0` enforced by
/// clamping. Starts from `Γ₀ = tab(window.0)`, `τ₀` at the window midpoint,
/// `β = 0.1`.
pub fn fit_kernel(tab: &TabulatedKernel, window: (usize, usize)) -> Result<KernelFit> {
    let (lo, hi) = window;
    if lo < 1 || hi > tab.len() || hi < lo || hi - lo + 1 < 5 {
        return Err(Error::Parameter(format!(
            "fit window {lo}..={hi} must hold at least 5 lags within 1..={}",
            tab.len()
        )));
    }
    let taus: Vec<f64> = (lo..=hi).map(|t| t as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|t| tab.at(t).unwrap()).collect();
    let m = ys.len();
    let y_rms = (ys.iter().map(|y| y * y).sum::<f64>() / m as f64).sqrt();
    let mid = 0.5 * (lo + hi) as f64;
    if y_rms == 0.0 {
        return Ok(KernelFit {
            kernel: PowerLawKernel::new(0.0, mid, 0.0)?,
            converged: true,
            iterations: 0,
            residual_norm: 0.0,
            window,
            exponential_limit: false,
        });
    }

    let residuals = |p: &Vector3<f64>| -> Vec<f64> {
        let k = PowerLawKernel {
            gamma0: p[0],
            tau0: p[1],
            beta: p[2],
        };
        taus.iter().zip(&ys).map(|(&t, &y)| (k.value(t) - y) / y_rms).collect()
    };
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut p = Vector3::new(ys[0], mid, 0.1);
    let mut r = residuals(&p);
    let mut cost = sq(&r);
    let mut lambda: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < FIT_MAX_ITERATIONS {
        iterations += 1;
        // Jacobian of the scaled residuals
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&t, &rv) in taus.iter().zip(&r) {
            let x = t / p[1];
            let g = p[0] * (-p[2] * x.ln_1p()).exp() / y_rms;
            let row = Vector3::new(
                if p[0] != 0.0 {
                    g / p[0]
                } else {
                    (-p[2] * x.ln_1p()).exp() / y_rms
                },
                g * p[2] * x / (p[1] * (1.0 + x)),
                -g * x.ln_1p(),
            );
            jtj += row * row.transpose();
            jtr += row * rv;
        }
        // column scaling
        let d = Vector3::from_fn(|k, _| {
            let s = jtj[(k, k)].sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        });
        let js = Matrix3::from_fn(|a, b| jtj[(a, b)] / (d[a] * d[b]));
        let gs = Vector3::from_fn(|k, _| jtr[k] / d[k]);
        let lam = *lambda.get_or_insert(1e-3);

        let mut accepted = false;
        let mut tiny_step = false;
        let mut mu = lam;
        for _ in 0..40 {
            let mut sys = js;
            for k in 0..3 {
                sys[(k, k)] += mu;
            }
            let svd = sys.svd(true, true);
            let Ok(step_s) = svd.solve(&(-gs), 1e-14 * svd.singular_values.max()) else {
                break;
            };
            let step = Vector3::from_fn(|k, _| step_s[k] / d[k]);
            let mut cand = p + step;
            if !(cand[1] > 0.0) {
                cand[1] = p[1] / 10.0;
            }
            if cand[2] < 0.0 {
                cand[2] = 0.0;
            }
            let rel = (0..3)
                .map(|k| {
                    let den = cand[k].abs().max(p[k].abs());
                    if den > 0.0 {
                        (cand[k] - p[k]).abs() / den
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            let rc = residuals(&cand);
            let cc = sq(&rc);
            if cc.is_finite() && cc <= cost {
                tiny_step = rel < FIT_STEP_TOLERANCE;
                p = cand;
                r = rc;
                cost = cc;
                accepted = true;
                mu = (mu / 10.0).max(1e-15);
                break;
            }
            if rel < FIT_STEP_TOLERANCE {
                tiny_step = true;
                break;
            }
            mu *= 10.0;
        }
        lambda = Some(mu);
        if tiny_step || !accepted || cost == 0.0 {
            converged = tiny_step || cost == 0.0;
            break;
        }
    }
    let kernel = PowerLawKernel::new(p[0], p[1], p[2])?;
    Ok(KernelFit {
        kernel,
        converged,
        iterations,
        residual_norm: (cost / m as f64).sqrt(),
        window,
        exponential_limit: kernel.tau0 > EXPONENTIAL_LIMIT * hi as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Matrix size `L`.
    pub cutoff: usize,
    pub report_len: usize,
    pub fit_window: (usize, usize),
    /// Number of log-spaced volume bins.
    pub volume_bins: usize,
    pub min_bin_samples: u64,
    /// Volumes in `(0, volume_fit_max]` enter the exponent fit.
    pub volume_fit_max: f64,
    pub weight: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            cutoff: 3000,
            report_len: 300,
            fit_window: DEFAULT_FIT_WINDOW,
            volume_bins: 20,
            min_bin_samples: crate::microstructure::MIN_BIN_SAMPLES,
            volume_fit_max: 1.0,
            weight: 1.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cutoff == 0 || self.report_len == 0 || self.report_len > self.cutoff {
            return Err(Error::Parameter(format!(
                "need 0 < report_len ({}) <= cutoff ({})",
                self.report_len, self.cutoff
            )));
        }
        let (lo, hi) = self.fit_window;
        if lo < 1 || hi > self.report_len || hi < lo + 4 {
            return Err(Error::Parameter(format!(
                "fit window {lo}..={hi} must hold at least 5 lags within 1..={}",
                self.report_len
            )));
        }
        if self.volume_bins < 3 {
            return Err(Error::Parameter("need at least 3 volume bins".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionDiagnostics {
    pub response_samples: u64,
    pub volume_bins_used: usize,
    pub condition_estimate: f64,
    pub ridge: bool,
    pub solve_relative_residual: f64,
    pub fit_window: (usize, usize),
    pub fit_residual_norm: f64,
    pub fit_converged: bool,
    pub fit_iterations: usize,
    /// See [`KernelFit::exponential_limit`].
    #[serde(default)]
    pub fit_exponential_limit: bool,
    /// Fewer than 1000 conditioning samples; estimates are unreliable.
    pub low_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub delta: f64,
    pub mean_g: f64,
    pub kernel: PowerLawKernel,
    pub tabulated: TabulatedKernel,
    pub diagnostics: DirectionDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub ij: DirectionResult,
    pub ji: DirectionResult,
}

impl CalibrationResult {
    /// Kernel parameters in the form consumed by the cost engine.
    pub fn params(&self) -> PairParams {
        let to = |d: &DirectionResult| ImpactParams {
            gamma0: d.kernel.gamma0,
            tau0: d.kernel.tau0,
            beta: d.kernel.beta,
            delta: d.delta,
        };
        PairParams {
            ij: to(&self.ij),
            ji: to(&self.ji),
            ii: None,
            jj: None,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

/// Full chain for the impact of `signer`'s trades on `priced`'s mids.
pub fn calibrate_direction(
    priced: &StockBars,
    signer: &StockBars,
    cfg: &CalibrationConfig,
    direction: &str,
) -> Result<DirectionResult> {
    cfg.validate()?;
    let l = cfg.cutoff;
    let r = response_curve(priced, signer, l).map_err(|e| e.at_stage(Stage::Response, direction))?;
    if let Some(k) = (1..=l).find(|&k| r.at(k).is_none()) {
        return Err(Error::Consistency(format!("no samples at lag {k}")).at_stage(Stage::Response, direction));
    }
    let r1 = r.at(1).unwrap();

    let cond = default_volume_bins(signer, cfg.volume_bins)
        .and_then(|bins| conditional_response(priced, signer, &bins, 1))
        .map_err(|e| e.at_stage(Stage::ConditionalResponse, direction))?;
    let vfit = fit_volume_impact(&cond, r1, (0.0, cfg.volume_fit_max), cfg.min_bin_samples)
        .map_err(|e| e.at_stage(Stage::VolumeImpact, direction))?;
    let delta = vfit.delta;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(
            Error::Fit(format!("volume exponent {delta} outside (0, 1]")).at_stage(Stage::VolumeImpact, direction)
        );
    }
    let mean_g =
        mean_volume_impact(&signer.trading_volumes(), delta).map_err(|e| e.at_stage(Stage::VolumeImpact, direction))?;

    let theta = sign_self_correlator(signer, l);
    let a = build_sign_matrix(&theta, l).map_err(|e| e.at_stage(Stage::Correlator, direction))?;
    let ex =
        extract_kernel(&r, &a, mean_g, cfg.weight, cfg.report_len).map_err(|e| e.at_stage(Stage::Solve, direction))?;
    drop(a);
    let fit = fit_kernel(&ex.tabulated, cfg.fit_window).map_err(|e| e.at_stage(Stage::KernelFit, direction))?;
    if !fit.converged {
        log::warn!(
            "{direction}: kernel fit stopped after {} iterations without converging",
            fit.iterations
        );
    }
    if fit.exponential_limit {
        log::warn!(
            "{direction}: kernel fit reached the exponential limit (tau0 {:.3e}, beta {:.3e}); only beta/tau0 = {:.3e} is determined",
            fit.kernel.tau0,
            fit.kernel.beta,
            fit.kernel.beta / fit.kernel.tau0
        );
    }
    if ex.ridge {
        log::warn!(
            "{direction}: sign matrix ill-conditioned ({:.3e}), ridge solve used",
            ex.condition
        );
    }
    let samples = r.counts[0];
    Ok(DirectionResult {
        delta,
        mean_g,
        kernel: fit.kernel,
        tabulated: ex.tabulated,
        diagnostics: DirectionDiagnostics {
            response_samples: samples,
            volume_bins_used: vfit.bins_used,
            condition_estimate: ex.condition,
            ridge: ex.ridge,
            solve_relative_residual: ex.relative_residual,
            fit_window: fit.window,
            fit_residual_norm: fit.residual_norm,
            fit_converged: fit.converged,
            fit_iterations: fit.iterations,
            fit_exponential_limit: fit.exponential_limit,
            low_sample: samples < 1000,
        },
    })
}

/// Calibrates both directions; they run concurrently.
pub fn calibrate_pair(bars_i: &StockBars, bars_j: &StockBars, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let (ij, ji) = rayon::join(
        || calibrate_direction(bars_i, bars_j, cfg, "ij"),
        || calibrate_direction(bars_j, bars_i, cfg, "ji"),
    );
    Ok(CalibrationResult { ij: ij?, ji: ji? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::BinStat;

    fn curve(points: &[(f64, f64)]) -> ConditionalResponse {
        ConditionalResponse {
            tau: 1,
            bins: points
                .iter()
                .map(|&(v, value)| BinStat {
                    lo: v * 0.9,
                    hi: v * 1.1,
                    v,
                    value,
                    count: 100,
                    stderr: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn volume_fit_exact() {
        let pts: Vec<_> = [0.05, 0.1, 0.2, 0.4, 0.8, 1.0]
            .iter()
            .map(|&v| (v, 3e-5 * f64::powf(v, 0.61)))
            .collect();
        let f = fit_volume_impact(&curve(&pts), 2e-5, (0.0, 1.0), 50).unwrap();
        assert!((f.delta - 0.61).abs() < 1e-9);
        let flat: Vec<_> = [0.1, 0.2, 0.5].iter().map(|&v| (v, 1.0)).collect();
        assert!(
            fit_volume_impact(&curve(&flat), 1.0, (0.0, 1.0), 50)
                .unwrap()
                .delta
                .abs()
                < 1e-15
        );
        assert!(fit_volume_impact(&curve(&flat[..2]), 1.0, (0.0, 1.0), 50).is_err());
    }

    #[test]
    fn mean_impact_examples() {
        assert_eq!(mean_volume_impact(&[1.0, 1.0, 1.0], 0.3).unwrap(), 1.0);
        assert_eq!(mean_volume_impact(&[0.25, 0.25], 0.5).unwrap(), 0.5);
        assert!(mean_volume_impact(&[], 0.5).is_err());
    }

    fn theta(values: Vec<f64>) -> SignCorrelator {
        let n = values.len();
        SignCorrelator {
            values,
            counts: vec![1; n],
        }
    }

    #[test]
    fn sign_matrix_examples() {
        let iid = build_sign_matrix(&theta(vec![1.0, 0.0, 0.0, 0.0, 0.0]), 4).unwrap();
        assert_eq!(iid.matrix, DMatrix::identity(4, 4));
        let ones = build_sign_matrix(&theta(vec![1.0; 5]), 4).unwrap();
        assert!(ones.matrix.iter().all(|&v| v == 0.0));
        let rho: f64 = 0.4;
        let a = build_sign_matrix(&theta((0..=3).map(|k| rho.powi(k)).collect()), 3).unwrap();
        // row τ=2: [Θ(1)−Θ(1), Θ(0)−Θ(2), Θ(1)−Θ(3)]
        assert_eq!(a.matrix[(1, 0)], 0.0);
        assert!((a.matrix[(1, 1)] - (1.0 - rho * rho)).abs() < 1e-15);
        assert!((a.matrix[(1, 2)] - (rho - rho.powi(3))).abs() < 1e-15);
        assert!((a.matrix[(0, 0)] - (1.0 - rho)).abs() < 1e-15);
        assert!((a.matrix[(2, 0)] - (rho * rho - rho)).abs() < 1e-15);
        assert!(build_sign_matrix(&theta(vec![1.0, 0.0]), 4).is_err());
    }

    fn response(values: Vec<f64>) -> ResponseCurve {
        let n = values.len();
        ResponseCurve {
            values,
            counts: vec![10; n],
        }
    }

    #[test]
    fn identity_and_zero_extraction() {
        let a = SignCorrelatorMatrix {
            matrix: DMatrix::identity(6, 6),
        };
        let r = response(vec![0.3, -0.1, 0.7, 1e-5, 2.0, 0.0]);
        let ex = extract_kernel(&r, &a, 1.0, 1.0, 4).unwrap();
        assert_eq!(ex.tabulated.values(), &r.values[..4]);
        assert!(!ex.ridge);
        assert!((ex.condition - 1.0).abs() < 1e-12);
        let z = extract_kernel(&response(vec![0.0; 6]), &a, 0.5, 1.0, 6).unwrap();
        assert!(z.tabulated.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_matrix_uses_ridge() {
        let a = SignCorrelatorMatrix {
            matrix: DMatrix::zeros(3, 3),
        };
        let ex = extract_kernel(&response(vec![1.0, 2.0, 3.0]), &a, 1.0, 1.0, 3).unwrap();
        assert!(ex.ridge);
        assert!(ex.condition.is_infinite());
        let a = SignCorrelatorMatrix {
            matrix: DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        };
        let ex = extract_kernel(&response(vec![2.0, 2.0, 3.0]), &a, 1.0, 1.0, 3).unwrap();
        assert!(ex.ridge);
        let g = ex.tabulated.values();
        assert!((g[0] + g[1] - 2.0).abs() < 1e-6 && (g[2] - 3.0).abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn condition_estimate_matches_exact_small_case() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 2.0, 5.0, 1.0, 0.0, 3.0, 6.0]);
        let inv = m.clone().try_inverse().unwrap();
        let n1 = |x: &DMatrix<f64>| {
            (0..3)
                .map(|c| x.column(c).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let exact = n1(&m) * n1(&inv);
        let est = condition_1norm(&m, &m.clone().lu());
        assert!(est <= exact * (1.0 + 1e-12) && est >= exact / 3.0, "{est} vs {exact}");
    }

    #[test]
    fn exact_kernel_recovery() {
        for k in [
            PowerLawKernel::new(1.13e-4, 7.34, 0.14).unwrap(),
            PowerLawKernel::new(0.79e-4, 4.75, 0.03).unwrap(),
        ] {
            let tab = TabulatedKernel::sample(&k, 300);
            let f = fit_kernel(&tab, DEFAULT_FIT_WINDOW).unwrap();
            assert!(f.converged);
            for (got, want) in [
                (f.kernel.gamma0, k.gamma0),
                (f.kernel.tau0, k.tau0),
                (f.kernel.beta, k.beta),
            ] {
                assert!((got / want - 1.0).abs() < 1e-6, "{:?} vs {:?}", f.kernel, k);
            }
            assert!(f.residual_norm < 1e-10);
            assert!(!f.exponential_limit);
        }
    }

    #[test]
    fn exponential_tab_flags_the_limit() {
        let rate = 2e-3;
        let tab = TabulatedKernel::new((1..=300).map(|t| 5e-5 * (-rate * t as f64).exp()).collect()).unwrap();
        let f = fit_kernel(&tab, DEFAULT_FIT_WINDOW).unwrap();
        assert!(f.exponential_limit, "{:?}", f.kernel);
        assert!(
            (f.kernel.beta / f.kernel.tau0 / rate - 1.0).abs() < 1e-3,
            "{:?}",
            f.kernel
        );
        assert!(f.residual_norm < 1e-4);
    }

    #[test]
    fn constant_tab_fit() {
        let tab = TabulatedKernel::new(vec![2.5e-5; 300]).unwrap();
        let f = fit_kernel(&tab, DEFAULT_FIT_WINDOW).unwrap();
        assert_eq!(f.kernel.beta, 0.0);
        assert!((f.kernel.gamma0 / 2.5e-5 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_window() {
        let tab = TabulatedKernel::new(vec![1.0; 20]).unwrap();
        assert!(fit_kernel(&tab, (10, 30)).is_err());
        assert!(fit_kernel(&tab, (10, 12)).is_err());
    }
}

//! Trade signs, response functions, conditional responses and sign
//! self-correlators over per-second bars.
//!
//! All estimators work day by day: no `(t, t + τ)` pair ever spans two days.
//! Lag sums are computed with FFT correlations per day and merged in day order.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DayBars, StockBars};

/// Default largest lag for curves.
pub const DEFAULT_TAU_MAX: usize = 300;
/// Minimum samples for a conditional-response bin to be kept.
pub const MIN_BIN_SAMPLES: u64 = 50;

/// Running state of the tick rule: the last trade price and sign.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignState {
    pub price: Option<f64>,
    pub sign: i8,
}

/// Tick rule over the trades of one second, in ordinal order: the sign of
/// the price change, or the previous trade's sign when the price repeats.
/// Returns the per-trade signs and the state after the last trade.
pub fn classify_signs_intrasecond(prices: &[f64], prev: SignState) -> (Vec<i8>, SignState) {
    let mut state = prev;
    let signs = prices
        .iter()
        .map(|&p| {
            if let Some(last) = state.price {
                if p > last {
                    state.sign = 1;
                } else if p < last {
                    state.sign = -1;
                }
            }
            state.price = Some(p);
            state.sign
        })
        .collect();
    (signs, state)
}

/// `sgn(Σ signs)`; zero for an empty second or a balanced one.
pub fn aggregate_second_sign(signs: &[i8]) -> i8 {
    signs.iter().map(|&s| s as i64).sum::<i64>().signum() as i8
}

/// `R(τ)` for `τ = 1..=τ_max`; `values[τ-1]` is `NaN` where no sample exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub values: Vec<f64>,
    pub counts: Vec<u64>,
}

impl ResponseCurve {
    pub fn tau_max(&self) -> usize {
        self.values.len()
    }

    /// `R(τ)` for `τ ≥ 1`, if defined.
    pub fn at(&self, tau: usize) -> Option<f64> {
        (tau >= 1 && tau <= self.values.len() && self.counts[tau - 1] > 0).then(|| self.values[tau - 1])
    }

    /// True when no lag has any sample.
    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_lag_csv(out, 1, &self.values, &self.counts)
    }
}

/// `Θ(τ)` for `τ = 0..=τ_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCorrelator {
    pub values: Vec<f64>,
    /// Number of `(t, t + τ)` pairs inside days at each lag.
    pub counts: Vec<u64>,
}

impl SignCorrelator {
    pub fn tau_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `Θ(|τ|)`, using the symmetric extension for negative lags.
    pub fn at(&self, tau: isize) -> Option<f64> {
        let v = *self.values.get(tau.unsigned_abs())?;
        v.is_finite().then_some(v)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_lag_csv(out, 0, &self.values, &self.counts)
    }
}

fn write_lag_csv<W: Write>(out: W, first_lag: usize, values: &[f64], counts: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "value", "count"])?;
    for (k, (v, c)) in values.iter().zip(counts).enumerate() {
        let v = if v.is_finite() { format!("{v:?}") } else { String::new() };
        w.write_record([(k + first_lag).to_string(), v, c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_csv(
    path: impl AsRef<Path>,
    write: impl FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>,
) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write(std::io::BufWriter::new(f))
}

/// FFT cross-correlation helper, `c[τ] = Σ_t a(t + τ) b(t)` for `τ ≤ τ_max`.
struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(len: usize) -> Self {
        let n = (2 * len).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    fn correlate(&self, a: &[Complex<f64>], b: &[Complex<f64>], tau_max: usize) -> Vec<f64> {
        let mut prod: Vec<Complex<f64>> = a.iter().zip(b).map(|(x, y)| x * y.conj()).collect();
        self.inv.process(&mut prod);
        let scale = 1.0 / self.n as f64;
        prod.iter().take(tau_max + 1).map(|c| c.re * scale).collect()
    }
}

fn check_aligned(i: &DayBars, j: &DayBars) -> Result<()> {
    if i.date != j.date || i.bars.len() != j.bars.len() {
        return Err(Error::Consistency(format!(
            "bars not aligned: day {} ({} s) vs {} ({} s)",
            i.date,
            i.bars.len(),
            j.date,
            j.bars.len()
        )));
    }
    Ok(())
}

/// Per-day partial sums of the response estimator.
fn day_response(ci: &DayBars, cj: &DayBars, tau_max: usize) -> (Vec<f64>, Vec<u64>) {
    let n = ci.bars.len();
    let mut sums = vec![0.0; tau_max];
    let mut counts = vec![0u64; tau_max];
    if n < 2 {
        return (sums, counts);
    }
    // shift by the day's first mid so the sums stay small
    let base = ci.bars[0].log_mid;
    let m: Vec<f64> = ci.bars.iter().map(|b| b.log_mid - base).collect();
    let eps: Vec<f64> = cj.bars.iter().map(|b| b.sign as f64).collect();
    let me: Vec<f64> = m.iter().zip(&eps).map(|(a, b)| a * b).collect();
    // prefix sums over t of m(t)ε(t) and of [ε(t) ≠ 0]
    let mut pref_me = vec![0.0; n + 1];
    let mut pref_nz = vec![0u64; n + 1];
    for t in 0..n {
        pref_me[t + 1] = pref_me[t] + me[t];
        pref_nz[t + 1] = pref_nz[t] + u64::from(eps[t] != 0.0);
    }
    let lag_cap = tau_max.min(n - 1);
    let corr = Correlator::new(n);
    let cross = corr.correlate(&corr.spectrum(&m), &corr.spectrum(&eps), lag_cap);
    for tau in 1..=lag_cap {
        let last = n - tau; // t ranges over 0..last
        sums[tau - 1] = cross[tau] - pref_me[last];
        counts[tau - 1] = pref_nz[last];
    }
    (sums, counts)
}

/// `R_ij(τ) = ⟨(m_i(t + τ) − m_i(t)) ε_j(t)⟩` over seconds with `ε_j(t) ≠ 0`.
pub fn response_curve(bars_i: &StockBars, bars_j: &StockBars, tau_max: usize) -> Result<ResponseCurve> {
    if tau_max < 1 {
        return Err(Error::Parameter("tau_max must be at least 1".into()));
    }
    if bars_i.days.len() != bars_j.days.len() {
        return Err(Error::Consistency("bar series cover different numbers of days".into()));
    }
    for (a, b) in bars_i.days.iter().zip(&bars_j.days) {
        check_aligned(a, b)?;
    }
    let parts: Vec<_> = bars_i
        .days
        .par_iter()
        .zip(&bars_j.days)
        .map(|(a, b)| day_response(a, b, tau_max))
        .collect();
    let mut sums = vec![0.0; tau_max];
    let mut counts = vec![0u64; tau_max];
    for (s, c) in parts {
        for k in 0..tau_max {
            sums[k] += s[k];
            counts[k] += c[k];
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(ResponseCurve { values, counts })
}

/// Per-day integer sums for the correlator: `Σ ε(t+τ)ε(t)`, pair counts and
/// the nonzero counts among first and second members of the pairs.
fn day_correlator(signs: &[i8], tau_max: usize) -> (Vec<i64>, Vec<u64>, Vec<u64>, Vec<u64>) {
    let n = signs.len();
    let lag_cap = tau_max.min(n.saturating_sub(1));
    let mut prod = vec![0i64; tau_max + 1];
    let mut pairs = vec![0u64; tau_max + 1];
    let mut nz_first = vec![0u64; tau_max + 1];
    let mut nz_second = vec![0u64; tau_max + 1];
    if n == 0 {
        return (prod, pairs, nz_first, nz_second);
    }
    let eps: Vec<f64> = signs.iter().map(|&s| s as f64).collect();
    let mut pref = vec![0u64; n + 1];
    for t in 0..n {
        pref[t + 1] = pref[t] + u64::from(signs[t] != 0);
    }
    let corr = Correlator::new(n);
    let spec = corr.spectrum(&eps);
    let c = corr.correlate(&spec, &spec, lag_cap);
    for tau in 0..=lag_cap {
        // the sums are integers; round away FFT noise
        prod[tau] = c[tau].round() as i64;
        pairs[tau] = (n - tau) as u64;
        nz_first[tau] = pref[n - tau];
        nz_second[tau] = pref[n] - pref[tau];
    }
    (prod, pairs, nz_first, nz_second)
}

/// `Θ(τ) = Σ ε(t+τ)ε(t) / √(N₁ N₂)`, where `N₁` and `N₂` count the nonzero
/// first and second members of the within-day pairs at lag `τ`.
///
/// This is the mean of `ε(t+τ)ε(t)` over trading seconds; the geometric-mean
/// normalization makes `Θ(0) = 1`, bounds `|Θ| ≤ 1` and keeps the estimator
/// invariant under time reversal. `NaN` where a count is zero.
pub fn sign_self_correlator(bars: &StockBars, tau_max: usize) -> SignCorrelator {
    let parts: Vec<_> = bars
        .days
        .par_iter()
        .map(|d| {
            let s: Vec<i8> = d.bars.iter().map(|b| b.sign).collect();
            day_correlator(&s, tau_max)
        })
        .collect();
    merge_correlator(parts, tau_max)
}

/// [`sign_self_correlator`] on plain per-day sign vectors.
pub fn sign_self_correlator_days(days: &[Vec<i8>], tau_max: usize) -> SignCorrelator {
    let parts: Vec<_> = days.par_iter().map(|d| day_correlator(d, tau_max)).collect();
    merge_correlator(parts, tau_max)
}

type CorrParts = (Vec<i64>, Vec<u64>, Vec<u64>, Vec<u64>);

fn merge_correlator(parts: Vec<CorrParts>, tau_max: usize) -> SignCorrelator {
    let mut prod = vec![0i64; tau_max + 1];
    let mut pairs = vec![0u64; tau_max + 1];
    let mut n1 = vec![0u64; tau_max + 1];
    let mut n2 = vec![0u64; tau_max + 1];
    for (p, c, a, b) in parts {
        for k in 0..=tau_max {
            prod[k] += p[k];
            pairs[k] += c[k];
            n1[k] += a[k];
            n2[k] += b[k];
        }
    }
    let values = (0..=tau_max)
        .map(|k| {
            if n1[k] == 0 || n2[k] == 0 {
                f64::NAN
            } else {
                let v = prod[k] as f64 / ((n1[k] as f64) * (n2[k] as f64)).sqrt();
                v.clamp(-1.0, 1.0)
            }
        })
        .collect();
    SignCorrelator { values, counts: pairs }
}

/// Bin edges for conditioning on normalized volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeBins {
    pub edges: Vec<f64>,
}

impl VolumeBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || !(edges[0] >= 0.0) {
            return Err(Error::Parameter(
                "bin edges must be increasing, non-negative, at least two".into(),
            ));
        }
        Ok(Self { edges })
    }

    /// `n` logarithmically spaced bins over `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && n >= 1) {
            return Err(Error::Parameter(format!("bad log-bin range [{lo}, {hi}] x {n}")));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut edges: Vec<f64> = (0..=n).map(|k| (a + (b - a) * k as f64 / n as f64).exp()).collect();
        edges[0] = lo;
        edges[n] = hi;
        Self::new(edges)
    }

    /// Bin of `v`: `(lo, hi]` intervals, the first one closed below.
    pub fn index(&self, v: f64) -> Option<usize> {
        let e = &self.edges;
        if v < e[0] || v > e[e.len() - 1] {
            return None;
        }
        let k = e.partition_point(|&x| x < v);
        Some(k.saturating_sub(1))
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    /// Geometric mean of the volumes in the bin.
    pub v: f64,
    pub value: f64,
    pub count: u64,
    /// Standard error of the bin mean.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalResponse {
    pub tau: usize,
    pub bins: Vec<BinStat>,
}

impl ConditionalResponse {
    /// Bins with at least `min_count` samples.
    pub fn defined(&self, min_count: u64) -> impl Iterator<Item = &BinStat> {
        self.bins.iter().filter(move |b| b.count >= min_count.max(1))
    }

    pub fn write_csv<W: Write>(&self, out: W, min_count: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["v_bin", "value", "count"])?;
        for b in &self.bins {
            let ok = b.count >= min_count.max(1);
            w.write_record([
                if b.count > 0 {
                    format!("{:?}", b.v)
                } else {
                    String::new()
                },
                if ok { format!("{:?}", b.value) } else { String::new() },
                b.count.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Mean of `(m_i(t + τ) − m_i(t)) ε_j(t)` per bin of `v_j(t)`, over seconds
/// with `ε_j(t) ≠ 0`.
pub fn conditional_response(
    bars_i: &StockBars,
    bars_j: &StockBars,
    bins: &VolumeBins,
    tau: usize,
) -> Result<ConditionalResponse> {
    if tau < 1 {
        return Err(Error::Parameter("tau must be at least 1".into()));
    }
    if bars_i.days.len() != bars_j.days.len() {
        return Err(Error::Consistency("bar series cover different numbers of days".into()));
    }
    let nb = bins.len();
    let mut sum = vec![0.0; nb];
    let mut sum2 = vec![0.0; nb];
    let mut logv = vec![0.0; nb];
    let mut count = vec![0u64; nb];
    for (di, dj) in bars_i.days.iter().zip(&bars_j.days) {
        check_aligned(di, dj)?;
        let n = di.bars.len();
        for t in 0..n.saturating_sub(tau) {
            let bj = &dj.bars[t];
            if bj.sign == 0 {
                continue;
            }
            let Some(k) = bins.index(bj.norm_volume) else { continue };
            let x = (di.bars[t + tau].log_mid - di.bars[t].log_mid) * bj.sign as f64;
            sum[k] += x;
            sum2[k] += x * x;
            logv[k] += bj.norm_volume.ln();
            count[k] += 1;
        }
    }
    let stats = (0..nb)
        .map(|k| {
            let c = count[k] as f64;
            let (value, v, stderr) = if count[k] == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let mean = sum[k] / c;
                let var = (sum2[k] / c - mean * mean).max(0.0);
                (mean, (logv[k] / c).exp(), (var / c).sqrt())
            };
            BinStat {
                lo: bins.edges[k],
                hi: bins.edges[k + 1],
                v,
                value,
                count: count[k],
                stderr,
            }
        })
        .collect();
    Ok(ConditionalResponse { tau, bins: stats })
}

/// Default bins: `n` log-spaced bins from the smallest positive normalized
/// volume among trading seconds up to 1.
pub fn default_volume_bins(bars_j: &StockBars, n: usize) -> Result<VolumeBins> {
    let lo = bars_j
        .days
        .iter()
        .flat_map(|d| &d.bars)
        .filter(|b| b.sign != 0 && b.norm_volume > 0.0)
        .map(|b| b.norm_volume)
        .fold(f64::INFINITY, f64::min);
    if !(lo < 1.0) {
        return Err(Error::Parameter(
            "no trading seconds with normalized volume below 1".into(),
        ));
    }
    VolumeBins::log_spaced(lo, 1.0, n)
}

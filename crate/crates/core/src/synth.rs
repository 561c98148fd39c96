//! Synthetic two-stock order flow and prices with known impact parameters.
//!
//! Signs follow a per-stock Markov chain over trades; each trading second has
//! a log-normal volume. Log-mids are the discrete propagator sum
//! `log m_i(t) = base + Σ_{t′<t} G_ij(t − t′) g_i(v_j(t′)) ε_j(t′)` (plus the
//! self-impact term when configured), restarted every day.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize_volumes, save_bars, DayBars, DayTicks, QuoteRecord, SecondBar, StockBars, TradeRecord};
use crate::kernels::{ImpactParams, LagKernel, PairParams};

fn default_tickers() -> [String; 2] {
    ["I".to_string(), "J".to_string()]
}

fn default_first_second() -> u32 {
    600
}

fn default_base_price() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub days: usize,
    pub seconds_per_day: usize,
    /// Sign persistence of stocks `i` and `j`.
    pub rho: [f64; 2],
    /// Probability of a trade in any second, per stock.
    pub trade_prob: [f64; 2],
    /// Log-normal parameters of the per-second raw volume.
    pub volume_mu: f64,
    pub volume_sigma: f64,
    pub truth: PairParams,
    /// Standard deviation of an optional Gaussian per-second log-return noise.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_tickers")]
    pub tickers: [String; 2],
    /// Session second of the first bar of each day.
    #[serde(default = "default_first_second")]
    pub first_second: u32,
    #[serde(default = "default_base_price")]
    pub base_price: f64,
}

impl SynthConfig {
    /// The reference corpus shape: 250 days of 22,800 seconds, a trade every
    /// second, `ρ = 0.5`, unit-median log-normal volumes, cross kernels from
    /// the 2008 AAPL/MSFT fit.
    pub fn reference(seed: u64) -> Self {
        Self {
            seed,
            days: 250,
            seconds_per_day: 22_800,
            rho: [0.5, 0.5],
            trade_prob: [1.0, 1.0],
            volume_mu: 0.0,
            volume_sigma: 0.5,
            truth: PairParams::aapl_msft_2008(),
            noise_sigma: 0.0,
            tickers: default_tickers(),
            first_second: default_first_second(),
            base_price: default_base_price(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 || self.seconds_per_day < 2 {
            return Err(Error::Parameter("need at least one day of two seconds".into()));
        }
        for r in self.rho {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Parameter(format!("rho must lie in [0, 1), got {r}")));
            }
        }
        for p in self.trade_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter(format!(
                    "trade probability must lie in [0, 1], got {p}"
                )));
            }
        }
        if !(self.volume_sigma >= 0.0 && self.volume_mu.is_finite()) {
            return Err(Error::Parameter(
                "volume_sigma must be non-negative, volume_mu finite".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Parameter("noise_sigma must be non-negative".into()));
        }
        if !(self.base_price > 0.0) {
            return Err(Error::Parameter("base_price must be positive".into()));
        }
        if self.tickers[0] == self.tickers[1] {
            return Err(Error::Parameter("tickers must differ".into()));
        }
        self.truth.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Self = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    /// Independent stream for `(day, stock, purpose)`.
    fn rng(&self, day: usize, stock: usize, purpose: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(((day as u64) << 8) | ((stock as u64) << 4) | purpose);
        r
    }

    fn date(day: usize) -> String {
        format!("day{:04}", day + 1)
    }
}

/// One stock's flow on one day: signs and raw volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct DayFlow {
    pub signs: Vec<i8>,
    pub volumes: Vec<f64>,
}

fn day_flow(cfg: &SynthConfig, day: usize, stock: usize) -> Result<DayFlow> {
    let mut rng = cfg.rng(day, stock, 0);
    let vol = LogNormal::new(cfg.volume_mu, cfg.volume_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let p = cfg.trade_prob[stock];
    let repeat = 0.5 * (1.0 + cfg.rho[stock]);
    let n = cfg.seconds_per_day;
    let mut prev: i8 = if rng.random::<bool>() { 1 } else { -1 };
    let mut signs = Vec::with_capacity(n);
    let mut volumes = Vec::with_capacity(n);
    for _ in 0..n {
        if p > 0.0 && rng.random::<f64>() < p {
            if rng.random::<f64>() >= repeat {
                prev = -prev;
            }
            signs.push(prev);
            volumes.push(vol.sample(&mut rng));
        } else {
            signs.push(0);
            volumes.push(0.0);
        }
    }
    Ok(DayFlow { signs, volumes })
}

/// Per-day sign sequences of one stock.
pub type SignDays = Vec<Vec<i8>>;

/// Per-day sign series of both stocks.
pub fn generate_signs(cfg: &SynthConfig) -> Result<(SignDays, SignDays)> {
    cfg.validate()?;
    let flows: Vec<(DayFlow, DayFlow)> = (0..cfg.days)
        .into_par_iter()
        .map(|d| Ok((day_flow(cfg, d, 0)?, day_flow(cfg, d, 1)?)))
        .collect::<Result<_>>()?;
    Ok(flows.into_iter().map(|(a, b)| (a.signs, b.signs)).unzip())
}

/// Causal convolution `y(t) = Σ_{k ≥ 1} G(k) x(t − k)` by FFT.
struct Propagator {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Propagator {
    fn new(len: usize) -> Self {
        let n = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            n,
        }
    }

    fn kernel_spectrum(&self, p: &ImpactParams, len: usize) -> Result<Vec<Complex<f64>>> {
        let k = p.kernel()?;
        let mut buf = vec![Complex::new(0.0, 0.0); self.n];
        for (lag, b) in buf.iter_mut().enumerate().take(len).skip(1) {
            b.re = k.value(lag as f64);
        }
        self.fft.process(&mut buf);
        Ok(buf)
    }

    fn apply(&self, spectrum: &[Complex<f64>], x: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fft.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf[..x.len()].iter().map(|c| c.re * scale).collect()
    }
}

/// Bars of both stocks plus the parameters they were generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub bars_i: StockBars,
    pub bars_j: StockBars,
    pub truth: PairParams,
}

impl SynthCorpus {
    /// Writes `<ticker>.bars.csv` for both stocks and `truth.json`.
    pub fn save(&self, cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_bars(&self.bars_i, dir.join(format!("{}.bars.csv", cfg.tickers[0])))?;
        save_bars(&self.bars_j, dir.join(format!("{}.bars.csv", cfg.tickers[1])))?;
        let p = dir.join("truth.json");
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &self.truth)?;
        Ok(())
    }
}

fn impact_series(p: Option<&ImpactParams>, flow: &DayFlow, mean: f64) -> Result<Option<Vec<f64>>> {
    let Some(p) = p else { return Ok(None) };
    let g = p.volume_impact()?;
    Ok(Some(
        flow.signs
            .iter()
            .zip(&flow.volumes)
            .map(|(&s, &v)| if s == 0 { 0.0 } else { s as f64 * g.unsigned(v / mean) })
            .collect(),
    ))
}

/// Generates the corpus: flows day by day, corpus-wide volume normalization,
/// then the propagator prices.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let n = cfg.seconds_per_day;
    let flows: Vec<[DayFlow; 2]> = (0..cfg.days)
        .into_par_iter()
        .map(|d| Ok([day_flow(cfg, d, 0)?, day_flow(cfg, d, 1)?]))
        .collect::<Result<_>>()?;

    // mean raw volume per second over the whole corpus
    let total = (cfg.days * n) as f64;
    let means: [f64; 2] = std::array::from_fn(|s| {
        let m = flows.iter().map(|f| f[s].volumes.iter().sum::<f64>()).sum::<f64>() / total;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    });

    let prop = Propagator::new(n);
    let spec = |p: Option<&ImpactParams>| -> Result<Option<Vec<Complex<f64>>>> {
        p.filter(|p| p.gamma0 != 0.0)
            .map(|p| prop.kernel_spectrum(p, n))
            .transpose()
    };
    let t = &cfg.truth;
    // kernels acting on stock s's price: [cross from the other stock, self]
    let spectra = [
        [spec(Some(&t.ij))?, spec(t.ii.as_ref())?],
        [spec(Some(&t.ji))?, spec(t.jj.as_ref())?],
    ];
    let params = [[Some(&t.ij), t.ii.as_ref()], [Some(&t.ji), t.jj.as_ref()]];
    let base = cfg.base_price.ln();

    let days: Vec<[DayBars; 2]> = flows
        .par_iter()
        .enumerate()
        .map(|(d, f)| {
            let bars: Vec<DayBars> = (0..2)
                .map(|s| {
                    let other = 1 - s;
                    let mut logm = vec![base; n];
                    for (k, (flow, sp)) in [(&f[other], &spectra[s][0]), (&f[s], &spectra[s][1])]
                        .into_iter()
                        .enumerate()
                    {
                        let Some(sp) = sp else { continue };
                        let mean = means[if k == 0 { other } else { s }];
                        let x = impact_series(params[s][k], flow, mean)?.expect("spectrum implies params");
                        for (m, y) in logm.iter_mut().zip(prop.apply(sp, &x)) {
                            *m += y;
                        }
                    }
                    if cfg.noise_sigma > 0.0 {
                        let mut rng = cfg.rng(d, s, 1);
                        let nd = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
                        let mut acc = 0.0;
                        for m in logm.iter_mut().skip(1) {
                            acc += nd.sample(&mut rng);
                            *m += acc;
                        }
                    }
                    Ok(DayBars {
                        date: SynthConfig::date(d),
                        bars: (0..n)
                            .map(|k| SecondBar {
                                second: cfg.first_second + k as u32,
                                sign: f[s].signs[k],
                                norm_volume: f[s].volumes[k],
                                log_mid: logm[k],
                                carried_quote: false,
                            })
                            .collect(),
                    })
                })
                .collect::<Result<_>>()?;
            let [a, b]: [DayBars; 2] = bars.try_into().expect("two stocks");
            Ok([a, b])
        })
        .collect::<Result<_>>()?;

    let (di, dj): (Vec<_>, Vec<_>) = days.into_iter().map(|[a, b]| (a, b)).unzip();
    let mut bars_i = StockBars { days: di };
    let mut bars_j = StockBars { days: dj };
    for b in [&mut bars_i, &mut bars_j] {
        if b.iter().any(|x| x.norm_volume > 0.0) {
            normalize_volumes(b)?;
        }
    }
    Ok(SynthCorpus {
        bars_i,
        bars_j,
        truth: cfg.truth,
    })
}

/// Trades and quotes that reproduce a day of bars: one trade per trading
/// second whose price steps by one cent in the direction of the sign, and one
/// quote per second carrying the next second's mid. Volumes are
/// `norm_volume · lot`.
pub fn ticks_from_bars(day: &DayBars, lot: f64) -> DayTicks {
    let mut trades = Vec::new();
    let mut quotes = Vec::new();
    let mut price = 100.0;
    for (k, b) in day.bars.iter().enumerate() {
        if b.sign != 0 {
            price += 0.01 * b.sign as f64;
            trades.push(TradeRecord {
                second: b.second,
                ordinal: 0,
                price,
                volume: b.norm_volume * lot,
            });
        }
        if let Some(next) = day.bars.get(k + 1) {
            let mid = next.log_mid.exp();
            quotes.push(QuoteRecord {
                second: b.second,
                ordinal: 0,
                bid: mid - 0.005,
                ask: mid + 0.005,
            });
        }
    }
    DayTicks { trades, quotes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ImpactParams;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            days: 3,
            seconds_per_day: 500,
            ..SynthConfig::reference(seed)
        }
    }

    #[test]
    fn reproducible() {
        let a = generate_corpus(&small(7)).unwrap();
        let b = generate_corpus(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&small(8)).unwrap();
        assert_ne!(a.bars_i, c.bars_i);
    }

    #[test]
    fn no_trades_all_zero() {
        let cfg = SynthConfig {
            trade_prob: [0.0, 0.0],
            ..small(1)
        };
        let (i, j) = generate_signs(&cfg).unwrap();
        assert!(i.iter().chain(&j).flatten().all(|&s| s == 0));
    }

    #[test]
    fn zero_kernels_constant_prices() {
        let z = ImpactParams {
            gamma0: 0.0,
            ..PairParams::aapl_msft_2008().ij
        };
        let cfg = SynthConfig {
            truth: PairParams {
                ij: z,
                ji: z,
                ii: None,
                jj: None,
            },
            ..small(2)
        };
        let c = generate_corpus(&cfg).unwrap();
        let base = 100f64.ln();
        assert!(c.bars_i.iter().chain(c.bars_j.iter()).all(|b| b.log_mid == base));
    }

    #[test]
    fn only_j_trades_moves_only_i() {
        let mut truth = PairParams::aapl_msft_2008();
        truth.ji.gamma0 = 0.0;
        let cfg = SynthConfig {
            trade_prob: [0.0, 0.7],
            truth,
            ..small(3)
        };
        let c = generate_corpus(&cfg).unwrap();
        let j0 = c.bars_j.days[0].bars[0].log_mid;
        assert!(c.bars_j.iter().all(|b| b.log_mid == j0));
        let i = &c.bars_i.days[0].bars;
        assert!(i.iter().any(|b| b.log_mid != i[0].log_mid));
    }

    #[test]
    fn price_matches_direct_sum() {
        let cfg = small(4);
        let c = generate_corpus(&cfg).unwrap();
        let k = cfg.truth.ij.kernel().unwrap();
        let g = cfg.truth.ij.volume_impact().unwrap();
        let d = &c.bars_j.days[1].bars;
        let m = &c.bars_i.days[1].bars;
        for t in [0usize, 1, 2, 57, 499] {
            let direct: f64 = (0..t)
                .map(|s| k.value((t - s) as f64) * g.signed(d[s].sign as f64 * d[s].norm_volume))
                .sum();
            let got = m[t].log_mid - 100f64.ln();
            assert!(
                (got - direct).abs() < 1e-15 + 1e-10 * direct.abs(),
                "t={t}: {got} vs {direct}"
            );
        }
    }

    #[test]
    fn normalized_mean_is_one() {
        let c = generate_corpus(&SynthConfig {
            trade_prob: [0.4, 0.9],
            ..small(5)
        })
        .unwrap();
        for b in [&c.bars_i, &c.bars_j] {
            let mean = b.iter().map(|x| x.norm_volume).sum::<f64>() / b.seconds() as f64;
            assert!((mean - 1.0).abs() < 1e-9);
        }
    }
}

//! Trade and quote files, session filtering and per-second bars.
//!
//! Layout: `<root>/<ticker>/<date>.trades.csv` with header
//! `second,ordinal,price,volume` and `<root>/<ticker>/<date>.quotes.csv` with
//! header `second,ordinal,bid,ask`. Seconds count from the session open.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BadLine, Error, Result};
use crate::microstructure::{aggregate_second_sign, classify_signs_intrasecond, SignState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub second: u32,
    pub ordinal: u32,
    pub price: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub second: u32,
    pub ordinal: u32,
    pub bid: f64,
    pub ask: f64,
}

impl QuoteRecord {
    pub fn log_mid(&self) -> f64 {
        (0.5 * (self.bid + self.ask)).ln()
    }
}

trait Stamped {
    fn stamp(&self) -> (u32, u32);
    fn check(&self) -> std::result::Result<(), String>;
}

impl Stamped for TradeRecord {
    fn stamp(&self) -> (u32, u32) {
        (self.second, self.ordinal)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.price > 0.0 && self.price.is_finite()) {
            return Err(format!("price must be positive, got {}", self.price));
        }
        if !(self.volume > 0.0 && self.volume.is_finite()) {
            return Err(format!("volume must be positive, got {}", self.volume));
        }
        Ok(())
    }
}

impl Stamped for QuoteRecord {
    fn stamp(&self) -> (u32, u32) {
        (self.second, self.ordinal)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.bid > 0.0 && self.bid.is_finite() && self.ask.is_finite()) {
            return Err(format!("bid must be positive, got {}", self.bid));
        }
        if self.ask < self.bid {
            return Err(format!("crossed quote: bid {} > ask {}", self.bid, self.ask));
        }
        Ok(())
    }
}

fn load_records<T, R>(path: &Path, reader: R, header: &[&str]) -> Result<Vec<T>>
where
    T: Stamped + serde::de::DeserializeOwned,
    R: std::io::Read,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut bad = Vec::new();
    let mut out: Vec<T> = Vec::new();
    match rdr.headers() {
        Ok(h) => {
            if !h.is_empty() && h.iter().collect::<Vec<_>>() != header {
                bad.push(BadLine {
                    line: 1,
                    message: format!(
                        "expected header {}, got {}",
                        header.join(","),
                        h.iter().collect::<Vec<_>>().join(",")
                    ),
                });
            }
        }
        Err(e) => bad.push(BadLine {
            line: 1,
            message: e.to_string(),
        }),
    }
    if bad.is_empty() {
        let headers = rdr.headers()?.clone();
        for rec in rdr.records() {
            let row = rec.and_then(|sr| {
                let line = sr.position().map_or(0, |p| p.line());
                sr.deserialize::<T>(Some(&headers)).map(|r| (line, r))
            });
            match row {
                Ok((line, r)) => {
                    if let Err(m) = r.check() {
                        bad.push(BadLine { line, message: m });
                    } else if out.last().is_some_and(|p| p.stamp() > r.stamp()) {
                        bad.push(BadLine {
                            line,
                            message: format!("timestamp {:?} earlier than the previous row", r.stamp()),
                        });
                    } else {
                        out.push(r);
                    }
                }
                Err(e) => bad.push(BadLine {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                }),
            }
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::Ingest {
            path: path.to_path_buf(),
            lines: bad,
        })
    }
}

pub const TRADES_HEADER: [&str; 4] = ["second", "ordinal", "price", "volume"];
pub const QUOTES_HEADER: [&str; 4] = ["second", "ordinal", "bid", "ask"];

pub fn load_trades(path: impl AsRef<Path>) -> Result<Vec<TradeRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_records(path, f, &TRADES_HEADER)
}

pub fn load_quotes(path: impl AsRef<Path>) -> Result<Vec<QuoteRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_records(path, f, &QUOTES_HEADER)
}

/// Parses trades from an in-memory CSV; `name` labels errors.
pub fn parse_trades(name: &str, text: &str) -> Result<Vec<TradeRecord>> {
    load_records(Path::new(name), text.as_bytes(), &TRADES_HEADER)
}

pub fn parse_quotes(name: &str, text: &str) -> Result<Vec<QuoteRecord>> {
    load_records(Path::new(name), text.as_bytes(), &QUOTES_HEADER)
}

/// Raw records of one stock on one day.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DayTicks {
    pub trades: Vec<TradeRecord>,
    pub quotes: Vec<QuoteRecord>,
}

/// Days of one stock, keyed by date string (sorted).
pub type StockTicks = BTreeMap<String, DayTicks>;

/// Session length and the trimmed margins, in seconds from the open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub length: u32,
    pub trim: u32,
}

impl Default for SessionSpec {
    /// 6.5-hour session with ten minutes trimmed at each end.
    fn default() -> Self {
        Self {
            length: 23_400,
            trim: 600,
        }
    }
}

impl SessionSpec {
    pub fn start(&self) -> u32 {
        self.trim
    }

    pub fn end(&self) -> u32 {
        self.length.saturating_sub(self.trim)
    }

    pub fn contains(&self, second: u32) -> bool {
        second >= self.start() && second < self.end()
    }

    pub fn validate(&self) -> Result<()> {
        if self.start() >= self.end() {
            return Err(Error::Parameter(format!(
                "session of {} s leaves nothing after trimming {} s at each end",
                self.length, self.trim
            )));
        }
        Ok(())
    }
}

/// Reads every `<date>.trades.csv` / `<date>.quotes.csv` under
/// `trades_dir/<ticker>` and `quotes_dir/<ticker>`. Days missing either file
/// get an empty record list.
pub fn load_stock(trades_dir: &Path, quotes_dir: &Path, ticker: &str) -> Result<StockTicks> {
    let mut files: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for (dir, suffix, slot) in [(trades_dir, ".trades.csv", 0), (quotes_dir, ".quotes.csv", 1)] {
        let d = dir.join(ticker);
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            let Some(name) = p.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if let Some(date) = name.strip_suffix(suffix) {
                let e = files.entry(date.to_string()).or_default();
                if slot == 0 {
                    e.0 = Some(p);
                } else {
                    e.1 = Some(p);
                }
            }
        }
    }
    let days: Vec<(String, Result<DayTicks>)> = files
        .into_par_iter()
        .map(|(date, (t, q))| {
            let day = (|| {
                Ok(DayTicks {
                    trades: t.map(load_trades).transpose()?.unwrap_or_default(),
                    quotes: q.map(load_quotes).transpose()?.unwrap_or_default(),
                })
            })();
            (date, day)
        })
        .collect();
    days.into_iter().map(|(d, r)| r.map(|x| (d, x))).collect()
}

fn trim_day(day: &DayTicks, spec: &SessionSpec) -> DayTicks {
    DayTicks {
        trades: day.trades.iter().filter(|r| spec.contains(r.second)).copied().collect(),
        quotes: day.quotes.iter().filter(|r| spec.contains(r.second)).copied().collect(),
    }
}

/// Drops records outside `[open + trim, close − trim)` and keeps only the
/// days on which both stocks still have trades.
pub fn sessionize(i: &StockTicks, j: &StockTicks, spec: &SessionSpec) -> (StockTicks, StockTicks) {
    let ti: StockTicks = i.iter().map(|(d, x)| (d.clone(), trim_day(x, spec))).collect();
    let tj: StockTicks = j.iter().map(|(d, x)| (d.clone(), trim_day(x, spec))).collect();
    let keep =
        |d: &String| ti.get(d).is_some_and(|x| !x.trades.is_empty()) && tj.get(d).is_some_and(|x| !x.trades.is_empty());
    let ki = ti
        .iter()
        .filter(|(d, _)| keep(d))
        .map(|(d, x)| (d.clone(), x.clone()))
        .collect();
    let kj = tj
        .iter()
        .filter(|(d, _)| keep(d))
        .map(|(d, x)| (d.clone(), x.clone()))
        .collect();
    (ki, kj)
}

/// Aggregated state of one stock in one second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondBar {
    pub second: u32,
    pub sign: i8,
    pub norm_volume: f64,
    pub log_mid: f64,
    /// The mid came from the day's first quote because none preceded `second`.
    #[serde(skip)]
    pub carried_quote: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayBars {
    pub date: String,
    pub bars: Vec<SecondBar>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StockBars {
    pub days: Vec<DayBars>,
}

impl StockBars {
    pub fn seconds(&self) -> usize {
        self.days.iter().map(|d| d.bars.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SecondBar> {
        self.days.iter().flat_map(|d| &d.bars)
    }

    /// Normalized volumes of seconds with trades.
    pub fn trading_volumes(&self) -> Vec<f64> {
        self.iter()
            .filter(|b| b.norm_volume > 0.0)
            .map(|b| b.norm_volume)
            .collect()
    }
}

/// Per-second signs, raw volumes and mids for one day. Raw volume sits in
/// `norm_volume` until the corpus-wide pass.
fn day_bars(date: &str, day: &DayTicks, spec: &SessionSpec) -> Option<DayBars> {
    let Some(first_quote) = day.quotes.first() else {
        log::warn!("day {date}: no quotes, skipped");
        return None;
    };
    let mut bars = Vec::with_capacity((spec.end() - spec.start()) as usize);
    let mut state = SignState::default();
    let mut ti = 0;
    let mut qi = 0; // quotes[..qi] have second < t
    let mut prices = Vec::new();
    for t in spec.start()..spec.end() {
        while qi < day.quotes.len() && day.quotes[qi].second < t {
            qi += 1;
        }
        prices.clear();
        let mut volume = 0.0;
        while ti < day.trades.len() && day.trades[ti].second <= t {
            if day.trades[ti].second == t {
                prices.push(day.trades[ti].price);
                volume += day.trades[ti].volume;
            }
            ti += 1;
        }
        let (signs, next) = classify_signs_intrasecond(&prices, state);
        state = next;
        let (quote, carried) = if qi > 0 {
            (&day.quotes[qi - 1], false)
        } else {
            (first_quote, true)
        };
        bars.push(SecondBar {
            second: t,
            sign: aggregate_second_sign(&signs),
            norm_volume: volume,
            log_mid: quote.log_mid(),
            carried_quote: carried,
        });
    }
    Some(DayBars {
        date: date.to_string(),
        bars,
    })
}

/// Divides every volume by the corpus-wide mean per-second volume, the mean
/// taken over all session seconds including those without trades.
pub fn normalize_volumes(bars: &mut StockBars) -> Result<f64> {
    let n = bars.seconds();
    let total: f64 = bars.iter().map(|b| b.norm_volume).sum();
    if n == 0 || !(total > 0.0) {
        return Err(Error::Consistency("no traded volume to normalize by".into()));
    }
    let mean = total / n as f64;
    for d in &mut bars.days {
        for b in &mut d.bars {
            b.norm_volume /= mean;
        }
    }
    Ok(mean)
}

/// Builds per-second bars for one stock from sessionized ticks. Signs use the
/// tick rule with a zero seed at each day start; the mid at second `t` comes
/// from the last quote stamped before `t`.
pub fn build_second_bars(days: &StockTicks, spec: &SessionSpec) -> Result<StockBars> {
    spec.validate()?;
    let built: Vec<Option<DayBars>> = days.par_iter().map(|(d, x)| day_bars(d, x, spec)).collect();
    let mut bars = StockBars {
        days: built.into_iter().flatten().collect(),
    };
    normalize_volumes(&mut bars)?;
    Ok(bars)
}

/// Keeps the days present in both series; each shared day must cover the
/// same seconds.
pub fn align_pair(i: &StockBars, j: &StockBars) -> Result<(StockBars, StockBars)> {
    let jd: BTreeMap<&str, &DayBars> = j.days.iter().map(|d| (d.date.as_str(), d)).collect();
    let mut oi = StockBars::default();
    let mut oj = StockBars::default();
    for d in &i.days {
        if let Some(e) = jd.get(d.date.as_str()) {
            let same = d.bars.len() == e.bars.len() && d.bars.iter().zip(&e.bars).all(|(a, b)| a.second == b.second);
            if !same {
                return Err(Error::Consistency(format!(
                    "day {} covers different seconds in the two series",
                    d.date
                )));
            }
            oi.days.push(d.clone());
            oj.days.push((*e).clone());
        }
    }
    Ok((oi, oj))
}

pub const BARS_HEADER: [&str; 5] = ["date", "second", "sign", "norm_volume", "log_mid"];

#[derive(Serialize, Deserialize)]
struct BarRow {
    date: String,
    second: u32,
    sign: i8,
    norm_volume: f64,
    log_mid: f64,
}

pub fn write_bars<W: std::io::Write>(bars: &StockBars, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BARS_HEADER)?;
    for d in &bars.days {
        for b in &d.bars {
            w.write_record([
                d.date.clone(),
                b.second.to_string(),
                b.sign.to_string(),
                format!("{:?}", b.norm_volume),
                format!("{:?}", b.log_mid),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<bars>", e))?;
    Ok(())
}

pub fn save_bars(bars: &StockBars, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_bars(bars, std::io::BufWriter::new(f))
}

/// Reads a bars CSV; rows of a day must be contiguous with increasing seconds.
pub fn load_bars(path: impl AsRef<Path>) -> Result<StockBars> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(f));
    let mut bad = Vec::new();
    let mut out = StockBars::default();
    for (k, rec) in rdr.deserialize::<BarRow>().enumerate() {
        let line = k as u64 + 2;
        let r = match rec {
            Ok(r) => r,
            Err(e) => {
                bad.push(BadLine {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if !(-1..=1).contains(&r.sign) || !(r.norm_volume >= 0.0) || !r.log_mid.is_finite() {
            bad.push(BadLine {
                line,
                message: "sign must be -1/0/1, norm_volume non-negative, log_mid finite".into(),
            });
            continue;
        }
        let bar = SecondBar {
            second: r.second,
            sign: r.sign,
            norm_volume: r.norm_volume,
            log_mid: r.log_mid,
            carried_quote: false,
        };
        match out.days.last_mut() {
            Some(d) if d.date == r.date => {
                if d.bars.last().is_some_and(|p| p.second >= r.second) {
                    bad.push(BadLine {
                        line,
                        message: "seconds must increase within a day".into(),
                    });
                    continue;
                }
                d.bars.push(bar);
            }
            _ => {
                if out.days.iter().any(|d| d.date == r.date) {
                    bad.push(BadLine {
                        line,
                        message: format!("rows of day {} are not contiguous", r.date),
                    });
                    continue;
                }
                out.days.push(DayBars {
                    date: r.date,
                    bars: vec![bar],
                });
            }
        }
        if bad.len() > 100 {
            break;
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(Error::Ingest {
            path: path.to_path_buf(),
            lines: bad,
        })
    }
}

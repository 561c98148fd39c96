// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crossimpact::calibration::{calibrate_pair, CalibrationConfig};
use crossimpact::execution::{cross_cost_total, CrossImpact, Presets, Region, StrategyParams};
use crossimpact::ingest::{align_pair, build_second_bars, load_bars, load_stock, save_bars, sessionize, SessionSpec};
use crossimpact::kernels::PairParams;
use crossimpact::microstructure::{
    conditional_response, default_volume_bins, response_curve, save_csv, sign_self_correlator,
};
use crossimpact::optimizer::{build_surfaces, find_min_where, refine_min, GridSpec, MinFilter};
use crossimpact::synth::{generate_corpus, SynthConfig};
use crossimpact::Error;

#[derive(Parser, Debug)]
#[command(
    name = "crossimpact",
    version,
    about = "Cross-impact cost of paired round-trip trades"
)]
struct Cli {
    /// Echo numeric results as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Leave the timestamp out of manifest.json.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// RNG seed; overrides the seed of a synth config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build per-second bars from tick files.
    Ingest(IngestArgs),
    /// Response functions, sign correlators and the volume-conditioned response.
    Stats(StatsArgs),
    /// Fit impact kernels from a pair of bar files.
    Calibrate(CalibrateArgs),
    /// Cross-impact cost of one strategy.
    Cost(CostArgs),
    /// Minimal cross-impact cost over a strategy grid.
    Optimize(OptimizeArgs),
    /// Cost surfaces over the strategy grid, one file per zeta_T.
    Heatmap(HeatmapArgs),
    /// Generate a synthetic pair with known kernels.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Directory of `<ticker>.trades.csv` files.
    #[arg(long)]
    trades_dir: PathBuf,
    /// Directory of `<ticker>.quotes.csv` files.
    #[arg(long)]
    quotes_dir: PathBuf,
    /// Two tickers, `i,j`.
    #[arg(long, value_delimiter = ',', required = true)]
    tickers: Vec<String>,
    /// Output directory for `<ticker>.bars.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Session length in seconds.
    #[arg(long, default_value_t = 23_400)]
    session_length: u32,
    /// Seconds dropped at both ends of the session.
    #[arg(long, default_value_t = 600)]
    trim: u32,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Bars of stock i.
    #[arg(long)]
    bars_i: PathBuf,
    /// Bars of stock j.
    #[arg(long)]
    bars_j: PathBuf,
    /// Largest lag of the response and sign correlators.
    #[arg(long, default_value_t = 300)]
    tau_max: usize,
    /// Lag of the volume-conditioned response.
    #[arg(long, default_value_t = 1)]
    tau: usize,
    /// Number of log-spaced volume bins.
    #[arg(long, default_value_t = 20)]
    volume_bins: usize,
    /// Bins with fewer samples are dropped.
    #[arg(long, default_value_t = 50)]
    min_bin_samples: u64,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Bars of stock i.
    #[arg(long)]
    bars_i: PathBuf,
    /// Bars of stock j.
    #[arg(long)]
    bars_j: PathBuf,
    /// Size of the sign-correlator system (lags solved for).
    #[arg(long, default_value_t = 3000)]
    cutoff: usize,
    /// Lags of the tabulated kernel kept in the diagnostics.
    #[arg(long, default_value_t = 300)]
    report_len: usize,
    /// Lag window of the power-law fit, `lo,hi`.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 300])]
    fit_window: Vec<usize>,
    /// Number of log-spaced volume bins.
    #[arg(long, default_value_t = 20)]
    volume_bins: usize,
    /// Kernel parameters JSON.
    #[arg(long)]
    out: PathBuf,
    /// Diagnostics JSON (default: `calibration.json` next to `--out`).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct PresetArgs {
    /// Ratio of bought-in volumes v_i / v_j.
    #[arg(long, default_value_t = 1.0)]
    zeta_v: f64,
    /// Trading period of stock i.
    #[arg(long, default_value_t = 1.0)]
    period_i: f64,
    /// Buy-phase rate of stock i.
    #[arg(long, default_value_t = 0.1)]
    rate_in: f64,
}

impl PresetArgs {
    fn presets(&self) -> crossimpact::Result<Presets> {
        Presets::new(self.zeta_v, self.period_i, self.rate_in)
    }
}

#[derive(Args, Debug)]
struct CostArgs {
    /// Kernel parameters JSON.
    #[arg(long)]
    params: PathBuf,
    /// Buy rate of stock i over its summed buy and sell rates, in (0, 1); the buy phase lasts (1 - kappa_i) T_i.
    #[arg(long)]
    kappa_i: f64,
    /// Same for stock j.
    #[arg(long)]
    kappa_j: f64,
    /// Ratio of trading periods T_i / T_j.
    #[arg(long)]
    zeta_t: f64,
    #[command(flatten)]
    presets: PresetArgs,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Kernel parameters JSON.
    #[arg(long)]
    params: PathBuf,
    /// Period ratios T_i / T_j, one surface each.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    zeta_t: Vec<f64>,
    /// Grid steps per kappa axis.
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// Mark cells whose phase rates exceed this cap as infeasible.
    #[arg(long)]
    rate_cap: Option<f64>,
    #[command(flatten)]
    presets: PresetArgs,
}

impl GridArgs {
    fn spec(&self) -> crossimpact::Result<GridSpec> {
        let mut g = GridSpec::new(self.grid, self.zeta_t.clone())?;
        g.rate_cap = self.rate_cap;
        g.validate()?;
        Ok(g)
    }
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Restrict to one region (I, II, III, IV).
    #[arg(long)]
    region: Option<Region>,
    /// Only strictly positive costs.
    #[arg(long)]
    positive_only: bool,
    /// Polish the grid minimum with a simplex search to this tolerance.
    #[arg(long)]
    refine: Option<f64>,
    /// Write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Synthetic corpus config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Computation(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Computation(_) => 2,
        }
    }
}

fn validation(msg: String) -> Failure {
    Failure::Validation(anyhow::anyhow!(msg))
}

fn is_validation(e: &Error) -> bool {
    matches!(
        e,
        Error::Domain(_)
            | Error::Parameter(_)
            | Error::Consistency(_)
            | Error::Ingest { .. }
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
    )
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_validation(&e) {
            Failure::Validation(e.into())
        } else {
            Failure::Computation(e.into())
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(inner) if !is_validation(inner) => Failure::Computation(e),
            _ => Failure::Validation(e),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn require_file(p: &Path) -> Outcome {
    if p.is_file() {
        Ok(())
    } else {
        Err(validation(format!("{}: no such file", p.display())))
    }
}

fn require_dir(p: &Path) -> Outcome {
    if p.is_dir() {
        Ok(())
    } else {
        Err(validation(format!("{}: no such directory", p.display())))
    }
}

fn create_dir(p: &Path) -> Outcome {
    std::fs::create_dir_all(p)
        .with_context(|| format!("cannot create {}", p.display()))
        .map_err(Failure::Validation)
}

fn write_json(path: &Path, v: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Computation(e.into()))?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Validation)
}

struct Ctx {
    json: bool,
    timestamp: bool,
    argv: Vec<String>,
}

impl Ctx {
    fn emit(&self, human: &str, v: &impl Serialize) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(v).expect("serializable result"));
        } else {
            println!("{human}");
        }
    }

    fn manifest(&self, dir: &Path, outputs: &[PathBuf]) -> Outcome {
        let mut m = json!({
            "tool": "crossimpact",
            "version": env!("CARGO_PKG_VERSION"),
            "argv": self.argv,
            "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        if self.timestamp {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            m["timestamp_unix"] = Value::from(secs);
        }
        write_json(&dir.join("manifest.json"), &m)
    }
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Outcome {
    require_dir(&a.trades_dir)?;
    require_dir(&a.quotes_dir)?;
    let [ti, tj] =
        <[String; 2]>::try_from(a.tickers.clone()).map_err(|_| validation("need exactly two tickers".into()))?;
    if ti == tj {
        return Err(validation("tickers must differ".into()));
    }
    let spec = SessionSpec {
        length: a.session_length,
        trim: a.trim,
    };
    spec.validate()?;
    create_dir(&a.out)?;

    let i = load_stock(&a.trades_dir, &a.quotes_dir, &ti)?;
    let j = load_stock(&a.trades_dir, &a.quotes_dir, &tj)?;
    let (i, j) = sessionize(&i, &j, &spec);
    let (bi, bj) = rayon::join(|| build_second_bars(&i, &spec), || build_second_bars(&j, &spec));
    let (bi, bj) = align_pair(&bi?, &bj?)?;
    let pi = a.out.join(format!("{ti}.bars.csv"));
    let pj = a.out.join(format!("{tj}.bars.csv"));
    save_bars(&bi, &pi)?;
    save_bars(&bj, &pj)?;
    ctx.manifest(&a.out, &[pi.clone(), pj.clone()])?;
    let out = json!({"days": bi.days.len(), "seconds": bi.seconds(), "bars": [pi, pj]});
    ctx.emit(
        &format!("{} days, {} seconds per stock", bi.days.len(), bi.seconds()),
        &out,
    );
    Ok(())
}

fn load_pair(
    pi: &Path,
    pj: &Path,
) -> std::result::Result<(crossimpact::ingest::StockBars, crossimpact::ingest::StockBars), Failure> {
    require_file(pi)?;
    require_file(pj)?;
    let (i, j) = rayon::join(|| load_bars(pi), || load_bars(pj));
    Ok(align_pair(&i?, &j?)?)
}

fn stats(ctx: &Ctx, a: &StatsArgs) -> Outcome {
    let (bi, bj) = load_pair(&a.bars_i, &a.bars_j)?;
    if a.tau_max == 0 || a.tau == 0 {
        return Err(validation("tau and tau-max must be positive".into()));
    }
    create_dir(&a.out_dir)?;
    let r_ij = response_curve(&bi, &bj, a.tau_max)?;
    let r_ji = response_curve(&bj, &bi, a.tau_max)?;
    let th_ii = sign_self_correlator(&bi, a.tau_max);
    let th_jj = sign_self_correlator(&bj, a.tau_max);
    let c_ij = conditional_response(&bi, &bj, &default_volume_bins(&bj, a.volume_bins)?, a.tau)?;
    let c_ji = conditional_response(&bj, &bi, &default_volume_bins(&bi, a.volume_bins)?, a.tau)?;

    let mut outs = Vec::new();
    let mut put = |name: &str, w: &dyn Fn(std::io::BufWriter<std::fs::File>) -> crossimpact::Result<()>| -> Outcome {
        let p = a.out_dir.join(name);
        save_csv(&p, w)?;
        outs.push(p);
        Ok(())
    };
    put("response_ij.csv", &|w| r_ij.write_csv(w))?;
    put("response_ji.csv", &|w| r_ji.write_csv(w))?;
    put("theta_ii.csv", &|w| th_ii.write_csv(w))?;
    put("theta_jj.csv", &|w| th_jj.write_csv(w))?;
    put("conditional_ij.csv", &|w| c_ij.write_csv(w, a.min_bin_samples))?;
    put("conditional_ji.csv", &|w| c_ji.write_csv(w, a.min_bin_samples))?;
    ctx.manifest(&a.out_dir, &outs)?;
    let out = json!({
        "response_ij_1": r_ij.at(1),
        "response_ji_1": r_ji.at(1),
        "theta_ii_1": th_ii.at(1),
        "theta_jj_1": th_jj.at(1),
        "outputs": outs,
    });
    ctx.emit(&format!("wrote {} files to {}", outs.len(), a.out_dir.display()), &out);
    Ok(())
}

fn calibrate(ctx: &Ctx, a: &CalibrateArgs) -> Outcome {
    let &[lo, hi] = a.fit_window.as_slice() else {
        return Err(validation("--fit-window takes two lags, lo,hi".into()));
    };
    let cfg = CalibrationConfig {
        cutoff: a.cutoff,
        report_len: a.report_len,
        fit_window: (lo, hi),
        volume_bins: a.volume_bins,
        ..CalibrationConfig::default()
    };
    cfg.validate()?;
    let (bi, bj) = load_pair(&a.bars_i, &a.bars_j)?;
    let dir = a
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    create_dir(dir)?;
    let diag = a.diagnostics.clone().unwrap_or_else(|| dir.join("calibration.json"));

    let res = calibrate_pair(&bi, &bj, &cfg)?;
    let params = res.params();
    write_json(&a.out, &params)?;
    res.save(&diag)?;
    ctx.manifest(dir, &[a.out.clone(), diag])?;
    let k = |p: &crossimpact::kernels::ImpactParams| {
        format!(
            "gamma0={:.4e} tau0={:.4} beta={:.4} delta={:.4}",
            p.gamma0, p.tau0, p.beta, p.delta
        )
    };
    ctx.emit(&format!("ij: {}\nji: {}", k(&params.ij), k(&params.ji)), &params);
    Ok(())
}

fn load_model(path: &Path) -> std::result::Result<CrossImpact, Failure> {
    require_file(path)?;
    let p = PairParams::load(path)?;
    Ok(CrossImpact::from_params(&p)?)
}

fn cost(ctx: &Ctx, a: &CostArgs) -> Outcome {
    let presets = a.presets.presets()?;
    let params = StrategyParams::new(a.kappa_i, a.kappa_j, a.zeta_t)?;
    let model = load_model(&a.params)?;
    let c = cross_cost_total(&presets, &params, &model)?;
    ctx.emit(
        &format!(
            "region {}  omega_c = {:.6e}  (x1e6: {:.6})",
            c.region, c.omega_c, c.omega_c_x1e6
        ),
        &c,
    );
    Ok(())
}

fn optimize(ctx: &Ctx, a: &OptimizeArgs) -> Outcome {
    let presets = a.grid.presets.presets()?;
    let grid = a.grid.spec()?;
    if let Some(t) = a.refine {
        if !(t > 0.0) {
            return Err(validation("refine tolerance must be positive".into()));
        }
    }
    let model = load_model(&a.grid.params)?;
    let surfaces = build_surfaces(&presets, &model, &grid)?;
    let filter = MinFilter {
        region: a.region,
        positive_only: a.positive_only,
    };
    let mut best = find_min_where(&surfaces, filter)?;
    if let Some(tol) = a.refine {
        best = refine_min(&presets, &model, &best, tol, a.region)?;
    }
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        write_json(out, &best)?;
    }
    ctx.emit(
        &format!(
            "kappa_i={:.4} kappa_j={:.4} zeta_T={} region {}  omega_c = {:.6e}",
            best.params.kappa_i, best.params.kappa_j, best.params.zeta_t, best.region, best.omega_c
        ),
        &best,
    );
    Ok(())
}

fn heatmap(ctx: &Ctx, a: &HeatmapArgs) -> Outcome {
    let presets = a.grid.presets.presets()?;
    let grid = a.grid.spec()?;
    let model = load_model(&a.grid.params)?;
    create_dir(&a.out_dir)?;
    let surfaces = build_surfaces(&presets, &model, &grid)?;
    let mut outs = Vec::new();
    for s in &surfaces {
        let csv = a.out_dir.join(format!("surface_zeta_{}.csv", s.zeta_t));
        let js = a.out_dir.join(format!("surface_zeta_{}.json", s.zeta_t));
        s.save_csv(&csv)?;
        s.save_json(&js)?;
        outs.push(csv);
        outs.push(js);
    }
    ctx.manifest(&a.out_dir, &outs)?;
    let summary: Vec<Value> = surfaces
        .iter()
        .map(|s| {
            let best = find_min_where(std::slice::from_ref(s), MinFilter::default()).ok();
            json!({"zeta_T": s.zeta_t, "feasible": s.feasible_cells().count(), "min": best})
        })
        .collect();
    ctx.emit(
        &format!("wrote {} surfaces to {}", surfaces.len(), a.out_dir.display()),
        &summary,
    );
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs, seed: Option<u64>) -> Outcome {
    require_file(&a.config)?;
    let mut cfg = SynthConfig::load(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    create_dir(&a.out_dir)?;
    let corpus = generate_corpus(&cfg)?;
    corpus.save(&cfg, &a.out_dir)?;
    let outs: Vec<PathBuf> = cfg
        .tickers
        .iter()
        .map(|t| a.out_dir.join(format!("{t}.bars.csv")))
        .chain([a.out_dir.join("truth.json")])
        .collect();
    ctx.manifest(&a.out_dir, &outs)?;
    let out = json!({"seed": cfg.seed, "days": cfg.days, "seconds": corpus.bars_i.seconds(), "outputs": outs});
    ctx.emit(&format!("{} days written to {}", cfg.days, a.out_dir.display()), &out);
    Ok(())
}

fn run(cli: Cli, argv: Vec<String>) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Computation(e.into()))?;
    }
    let ctx = Ctx {
        json: cli.json,
        timestamp: !cli.no_timestamp,
        argv,
    };
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Cost(a) => cost(&ctx, a),
        Command::Optimize(a) => optimize(&ctx, a),
        Command::Heatmap(a) => heatmap(&ctx, a),
        Command::Synth(a) => synth(&ctx, a, cli.seed),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli, argv.into_iter().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Validation(e) | Failure::Computation(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

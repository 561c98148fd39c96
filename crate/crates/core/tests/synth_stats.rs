mod common;

use common::power_law;
use crossimpact::calibration::{calibrate_pair, CalibrationConfig};
use crossimpact::ingest::{align_pair, build_second_bars, sessionize, SessionSpec, StockBars, StockTicks};
use crossimpact::kernels::PairParams;
use crossimpact::microstructure::{response_curve, sign_self_correlator};
use crossimpact::synth::{generate_corpus, generate_signs, ticks_from_bars, SynthConfig};

fn config(seed: u64, days: usize, seconds: usize) -> SynthConfig {
    SynthConfig {
        days,
        seconds_per_day: seconds,
        ..SynthConfig::reference(seed)
    }
}

/// Expected `R_ij(τ)` on a day of `n` seconds that starts from a flat price:
/// `⟨g⟩ · mean_t [Σ_{t′<t+τ} G(t+τ−t′) ρ^|t′−t| − Σ_{t′<t} G(t−t′) ρ^(t−t′)]`.
fn expected_response(p: &PairParams, rho: f64, mean_g: f64, n: usize, tau: usize) -> f64 {
    let cut = (40.0 / -rho.ln()).ceil() as usize;
    let mut total = 0.0;
    for t in 0..n - tau {
        let lo = t.saturating_sub(cut);
        let mut v = 0.0;
        for s in lo..(t + tau).min(t + cut + 1) {
            v += power_law(&p.ij, (t + tau - s) as f64) * rho.powi(s.abs_diff(t) as i32);
        }
        for s in lo..t {
            v -= power_law(&p.ij, (t - s) as f64) * rho.powi((t - s) as i32);
        }
        total += v;
    }
    mean_g * total / (n - tau) as f64
}

#[test]
fn measured_response_matches_the_forward_model() {
    let cfg = config(21, 40, 5000);
    let c = generate_corpus(&cfg).unwrap();
    let delta = cfg.truth.ij.delta;
    let mean_g = {
        let v: Vec<f64> = c
            .bars_j
            .iter()
            .filter(|b| b.sign != 0)
            .map(|b| b.norm_volume.powf(delta))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let tau_max = 100;
    // per-day curves: days are independent, so their spread gives the error bar
    let per_day: Vec<Vec<f64>> = c
        .bars_i
        .days
        .iter()
        .zip(&c.bars_j.days)
        .map(|(di, dj)| {
            let bi = StockBars { days: vec![di.clone()] };
            let bj = StockBars { days: vec![dj.clone()] };
            response_curve(&bi, &bj, tau_max).unwrap().values
        })
        .collect();
    let d = per_day.len() as f64;
    for tau in 1..=tau_max {
        let xs: Vec<f64> = per_day.iter().map(|v| v[tau - 1]).collect();
        let mean = xs.iter().sum::<f64>() / d;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d - 1.0);
        let sigma = (var / d).sqrt();
        let expected = expected_response(&cfg.truth, cfg.rho[1], mean_g, cfg.seconds_per_day, tau);
        assert!(
            (mean - expected).abs() <= 3.0 * sigma,
            "tau {tau}: measured {mean:e} ± {sigma:e}, expected {expected:e}"
        );
    }
}

#[test]
fn chain_correlator_decays_geometrically() {
    let cfg = config(5, 20, 5000);
    let (si, _) = generate_signs(&cfg).unwrap();
    let c = generate_corpus(&cfg).unwrap();
    let th = sign_self_correlator(&c.bars_i, 10);
    let direct = crossimpact::microstructure::sign_self_correlator_days(&si, 10);
    assert_eq!(th, direct);
    let n = (cfg.days * cfg.seconds_per_day) as f64;
    // variance of the lag-k product mean of a ρ-chain: (1 + ρ²)/(1 − ρ²) / n
    let rho = cfg.rho[0];
    let sigma = ((1.0 + rho * rho) / (1.0 - rho * rho) / n).sqrt();
    for k in 0..=10 {
        let want = rho.powi(k as i32);
        assert!(
            (th.values[k] - want).abs() <= 4.0 * sigma,
            "lag {k}: {} vs {want}",
            th.values[k]
        );
    }
}

fn ticks_of(bars: &StockBars) -> StockTicks {
    bars.days
        .iter()
        .map(|d| (d.date.clone(), ticks_from_bars(d, 100.0)))
        .collect()
}

#[test]
fn ingest_recovers_synthetic_bars_from_ticks() {
    let cfg = SynthConfig {
        trade_prob: [0.6, 0.9],
        ..config(8, 3, 2000)
    };
    let c = generate_corpus(&cfg).unwrap();
    let spec = SessionSpec::default();
    let (ti, tj) = sessionize(&ticks_of(&c.bars_i), &ticks_of(&c.bars_j), &spec);
    let bi = build_second_bars(&ti, &spec).unwrap();
    let bj = build_second_bars(&tj, &spec).unwrap();
    let (bi, bj) = align_pair(&bi, &bj).unwrap();

    for (orig, got) in [(&c.bars_i, &bi), (&c.bars_j, &bj)] {
        assert_eq!(orig.days.len(), got.days.len());
        for (od, gd) in orig.days.iter().zip(&got.days) {
            assert_eq!(od.date, gd.date);
            let by_second: std::collections::HashMap<u32, _> = gd.bars.iter().map(|b| (b.second, b)).collect();
            let first_trade = od.bars.iter().position(|b| b.sign != 0).unwrap();
            for (k, o) in od.bars.iter().enumerate().skip(1) {
                let g = by_second[&o.second];
                // the tick rule has no reference price before the first trade
                if k > first_trade {
                    assert_eq!(g.sign, o.sign, "{} second {}", od.date, o.second);
                }
                assert!((g.log_mid - o.log_mid).abs() < 1e-12, "{} second {}", od.date, o.second);
                assert_eq!(g.norm_volume > 0.0, o.norm_volume > 0.0);
            }
        }
    }
    // volumes agree up to the common normalization
    let mut ratio = Vec::new();
    for (od, gd) in c.bars_i.days.iter().zip(&bi.days) {
        let by_second: std::collections::HashMap<u32, f64> =
            gd.bars.iter().map(|b| (b.second, b.norm_volume)).collect();
        ratio.extend(
            od.bars
                .iter()
                .filter(|o| o.norm_volume > 0.0)
                .map(|o| by_second[&o.second] / o.norm_volume),
        );
    }
    assert!(ratio.iter().all(|r| (r - ratio[0]).abs() < 1e-9 * ratio[0]));
}

#[test]
fn small_corpus_calibrates_to_the_right_order() {
    let cfg = config(3, 30, 5000);
    let c = generate_corpus(&cfg).unwrap();
    let calib = CalibrationConfig {
        cutoff: 600,
        report_len: 300,
        ..CalibrationConfig::default()
    };
    let r = calibrate_pair(&c.bars_i, &c.bars_j, &calib).unwrap();
    let p = r.params();
    for (got, want) in [(p.ij, cfg.truth.ij), (p.ji, cfg.truth.ji)] {
        assert!((got.delta - want.delta).abs() < 0.1, "{got:?}");
        assert!(
            got.gamma0 > 0.3 * want.gamma0 && got.gamma0 < 3.0 * want.gamma0,
            "{got:?}"
        );
    }
    assert!(!r.ij.diagnostics.low_sample && !r.ji.diagnostics.low_sample);
}

#![allow(dead_code)]

use crossimpact::execution::{CrossImpact, Leg, Presets, StrategyParams};
use crossimpact::kernels::{ImpactParams, PairParams};
use proptest::prelude::*;

/// `Γ₀ (1 + τ/τ₀)^(−β)`, written out independently of the library.
pub fn power_law(p: &ImpactParams, tau: f64) -> f64 {
    p.gamma0 * (1.0 + tau / p.tau0).powf(-p.beta)
}

fn signed_power(x: f64, delta: f64) -> f64 {
    x.signum() * x.abs().powf(delta)
}

/// Mean over `[lo, hi]` of a two-phase profile: `first` on `[0, switch)`,
/// `second` on `[switch, end)`, zero elsewhere.
fn cell_mean(lo: f64, hi: f64, switch: f64, end: f64, first: f64, second: f64) -> f64 {
    let overlap = |a: f64, b: f64| (hi.min(b) - lo.max(a)).max(0.0);
    (first * overlap(0.0, switch) + second * overlap(switch, end)) / (hi - lo)
}

/// Riemann-sum cost on the `outer` stock from the `inner` stock's trades:
/// `∫₀^{T_out} r_out(t) ∫₀^t G(t − s) g(r_in(s)) ds dt`, where the inner
/// stock's unwind continues past its own period end.
///
/// The time axis is cut into cells of width `h`; rates enter as exact cell
/// means, the inner integral uses the cell midpoints (lags are multiples of
/// `h`) plus a half-cell at the diagonal.
pub fn riemann_cross_cost(outer: &Leg, inner: &Leg, p: &ImpactParams, h: f64) -> f64 {
    let n = (outer.period / h).ceil() as usize;
    let out_first = outer.rate_in;
    let out_second = -outer.rate_out;
    let in_first = signed_power(inner.rate_in, p.delta);
    let in_second = signed_power(-inner.rate_out, p.delta);
    let b = inner.theta * inner.period;

    // prefix[k] = Σ_{l=1..k} G(l h)
    let mut prefix = vec![0.0; n + 1];
    for l in 1..=n {
        prefix[l] = prefix[l - 1] + power_law(p, l as f64 * h);
    }
    // fraction of inner cell m lying before the switch time
    let frac = |m: usize| ((b - m as f64 * h) / h).clamp(0.0, 1.0);
    let mb = (b / h).floor() as usize;

    let a = outer.theta * outer.period;
    let half = 0.5 * h * power_law(p, 0.25 * h);
    let mut total = 0.0;
    for k in 0..n {
        let (lo, hi) = (k as f64 * h, (k + 1) as f64 * h);
        let r_out = cell_mean(lo, hi, a, outer.period, out_first, out_second);
        if r_out == 0.0 {
            continue;
        }
        // Σ_{m<k} G((k−m)h) ρ_m with ρ_m = in_second + (in_first − in_second)·frac(m)
        let mut s = in_second * prefix[k];
        let full = mb.min(k);
        s += (in_first - in_second) * (prefix[k] - prefix[k - full]);
        if mb < k {
            s += (in_first - in_second) * frac(mb) * power_law(p, (k - mb) as f64 * h);
        }
        let rho_k = in_second + (in_first - in_second) * frac(k);
        let inner_integral = s * h + rho_k * half;
        total += r_out * inner_integral * h;
    }
    total
}

/// `(Ω_ij, Ω_ji)` from the Riemann oracle with step `h`.
pub fn riemann_costs(i: &Leg, j: &Leg, pair: &PairParams, h: f64) -> (f64, f64) {
    (
        riemann_cross_cost(i, j, &pair.ij, h),
        riemann_cross_cost(j, i, &pair.ji, h),
    )
}

pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= abs.max(rel * a.abs().max(b.abs()))
}

pub fn impact_params() -> impl Strategy<Value = ImpactParams> {
    (1e-5f64..1e-3, 0.01f64..20.0, 0.0f64..1.5, 0.2f64..1.0).prop_map(|(gamma0, tau0, beta, delta)| ImpactParams {
        gamma0,
        tau0,
        beta,
        delta,
    })
}

pub fn pair_params() -> impl Strategy<Value = PairParams> {
    (impact_params(), impact_params()).prop_map(|(ij, ji)| PairParams {
        ij,
        ji,
        ii: None,
        jj: None,
    })
}

pub fn presets() -> impl Strategy<Value = Presets> {
    (0.25f64..4.0, 0.5f64..2.0, 0.02f64..0.5).prop_map(|(zeta_v, period_i, rate_in_i)| Presets {
        zeta_v,
        period_i,
        rate_in_i,
    })
}

pub fn strategy() -> impl Strategy<Value = StrategyParams> {
    (0.02f64..0.98, 0.02f64..0.98, 0.25f64..4.0).prop_map(|(kappa_i, kappa_j, zeta_t)| StrategyParams {
        kappa_i,
        kappa_j,
        zeta_t,
    })
}

pub fn model(p: &PairParams) -> CrossImpact {
    CrossImpact::from_params(p).expect("valid parameters")
}

pub fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

pub mod props {
    use super::*;
    use crossimpact::execution::{cross_cost_total, resolve_schedule, Integrator};
    use crossimpact::ingest::{normalize_volumes, DayBars, SecondBar, StockBars};
    use crossimpact::kernels::VolumeImpact;
    use crossimpact::microstructure::sign_self_correlator_days;
    use proptest::test_runner::TestCaseError;

    pub type Outcome = Result<(), TestCaseError>;

    pub fn odd_symmetry(delta: f64, x: f64) -> Outcome {
        let g = VolumeImpact::new(delta).unwrap();
        prop_assert_eq!(g.signed(-x), -g.signed(x));
        Ok(())
    }

    pub fn round_trip_closure(presets: &Presets, params: &StrategyParams) -> Outcome {
        let s = resolve_schedule(presets, params).unwrap();
        for leg in [&s.i, &s.j] {
            let scale = leg.entry_volume().max(1.0);
            prop_assert!(
                leg.net_volume().abs() <= 1e-12 * scale,
                "net volume {}",
                leg.net_volume()
            );
        }
        prop_assert!(close(s.volume_ratio(), presets.zeta_v, 1e-12, 0.0));
        Ok(())
    }

    pub fn sign_days() -> impl Strategy<Value = Vec<Vec<i8>>> {
        prop::collection::vec(prop::collection::vec(-1i8..=1, 0..120), 1..5)
    }

    pub fn theta_bounds_and_reversal(days: &[Vec<i8>], tau_max: usize) -> Outcome {
        let th = sign_self_correlator_days(days, tau_max);
        for (k, v) in th.values.iter().enumerate() {
            if v.is_finite() {
                prop_assert!(v.abs() <= 1.0, "theta({k}) = {v}");
                prop_assert_eq!(th.at(k as isize), th.at(-(k as isize)));
            }
        }
        if th.values[0].is_finite() {
            prop_assert!(th.values[0] <= 1.0);
        }
        let rev: Vec<Vec<i8>> = days.iter().map(|d| d.iter().rev().copied().collect()).collect();
        let tr = sign_self_correlator_days(&rev, tau_max);
        for (a, b) in th.values.iter().zip(&tr.values) {
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{a} vs {b}");
        }
        Ok(())
    }

    pub fn volume_days() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 1.0f64..1e5], 1..80), 1..5)
            .prop_filter("some volume", |d| d.iter().flatten().any(|&v| v > 0.0))
    }

    pub fn normalization_mean_one(days: &[Vec<f64>]) -> Outcome {
        let mut bars = StockBars {
            days: days
                .iter()
                .enumerate()
                .map(|(k, d)| DayBars {
                    date: format!("d{k}"),
                    bars: d
                        .iter()
                        .enumerate()
                        .map(|(s, &v)| SecondBar {
                            second: s as u32,
                            sign: if v > 0.0 { 1 } else { 0 },
                            norm_volume: v,
                            log_mid: 0.0,
                            carried_quote: false,
                        })
                        .collect(),
                })
                .collect(),
        };
        normalize_volumes(&mut bars).unwrap();
        let mean = bars.iter().map(|b| b.norm_volume).sum::<f64>() / bars.seconds() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-9, "mean {mean}");
        Ok(())
    }

    /// Relabelling the stocks (swapped presets, parameters and kernels) leaves
    /// `Ω_c` unchanged and exchanges `Ω_ij` and `Ω_ji`.
    pub fn relabel_symmetry(presets: &Presets, params: &StrategyParams, pair: &PairParams) -> Outcome {
        let m = model(pair);
        let s = resolve_schedule(presets, params).unwrap();
        let swapped_presets = Presets {
            zeta_v: 1.0 / presets.zeta_v,
            period_i: s.j.period,
            rate_in_i: s.j.rate_in,
        };
        let a = cross_cost_total(presets, params, &m).unwrap();
        let b = cross_cost_total(&swapped_presets, &params.swapped(), &m.swapped()).unwrap();
        let scale = a.omega_ij.abs().max(a.omega_ji.abs());
        prop_assert!(close(a.omega_ij, b.omega_ji, 1e-9, 1e-9 * scale), "{a:?} vs {b:?}");
        prop_assert!(close(a.omega_ji, b.omega_ij, 1e-9, 1e-9 * scale), "{a:?} vs {b:?}");
        prop_assert!(close(a.omega_c, b.omega_c, 1e-9, 1e-9 * scale), "{a:?} vs {b:?}");
        Ok(())
    }

    pub fn amplitude_linearity(presets: &Presets, params: &StrategyParams, pair: &PairParams, c: f64) -> Outcome {
        let m = model(pair);
        let a = cross_cost_total(presets, params, &m).unwrap();
        let b = cross_cost_total(presets, params, &m.scaled(c)).unwrap();
        let scale = c * a.omega_ij.abs().max(a.omega_ji.abs());
        prop_assert!(
            close(b.omega_c, c * a.omega_c, 1e-12, 1e-12 * scale),
            "{} vs {}",
            b.omega_c,
            c * a.omega_c
        );
        Ok(())
    }

    pub fn sign_flip(presets: &Presets, params: &StrategyParams, pair: &PairParams) -> Outcome {
        let m = model(pair);
        let s = resolve_schedule(presets, params).unwrap();
        let a = Integrator::ClosedForm.schedule_cost(&s, &m).unwrap();
        let b = Integrator::ClosedForm.schedule_cost(&s.reversed(), &m).unwrap();
        prop_assert_eq!(a.omega_c, b.omega_c);
        Ok(())
    }
}

use std::path::Path;
use std::process::{Command, Output};

const TABLE1: &str = r#"{"ij":{"gamma0":1.13e-4,"tau0":7.34,"beta":0.14,"delta":0.61},"ji":{"gamma0":0.79e-4,"tau0":4.75,"beta":0.03,"delta":0.5}}"#;
const ZERO: &str = r#"{"ij":{"gamma0":0.0,"tau0":7.34,"beta":0.14,"delta":0.61},"ji":{"gamma0":0.0,"tau0":4.75,"beta":0.03,"delta":0.5}}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossimpact"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth_config(dir: &Path, seed: u64) {
    let cfg = format!(
        r#"{{"seed":{seed},"days":3,"seconds_per_day":1500,"rho":[0.5,0.5],"trade_prob":[1.0,0.8],
           "volume_mu":0.0,"volume_sigma":0.5,"truth":{TABLE1}}}"#
    );
    std::fs::write(dir.join("synth.json"), cfg).unwrap();
}

#[test]
fn heatmap_writes_one_surface_per_zeta() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("table1.json"), TABLE1).unwrap();
    let o = run(
        d.path(),
        &[
            "heatmap",
            "--params",
            "table1.json",
            "--zeta-t",
            "0.5,1,2",
            "--grid",
            "50",
            "--out-dir",
            "hm",
            "--no-timestamp",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for z in ["0.5", "1", "2"] {
        let csv = std::fs::read_to_string(d.path().join(format!("hm/surface_zeta_{z}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "zeta_T,kappa_i,kappa_j,region,feasible,omega_c,omega_c_x1e6"
        );
        assert_eq!(lines.count(), 2500);
        assert!(d.path().join(format!("hm/surface_zeta_{z}.json")).is_file());
    }
}

#[test]
fn cost_of_zero_kernels_is_zero() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("zero.json"), ZERO).unwrap();
    let o = run(
        d.path(),
        &[
            "--json",
            "cost",
            "--params",
            "zero.json",
            "--kappa-i",
            "0.3",
            "--kappa-j",
            "0.6",
            "--zeta-t",
            "1",
        ],
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["omega_c"].as_f64(), Some(0.0));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("table1.json"), TABLE1).unwrap();
    assert_eq!(code(&run(d.path(), &["cost", "--bogus"])), 1);
    assert_eq!(code(&run(d.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
    assert_eq!(code(&run(d.path(), &["heatmap", "--help"])), 0);
    let missing = run(
        d.path(),
        &[
            "cost",
            "--params",
            "nope.json",
            "--kappa-i",
            "0.5",
            "--kappa-j",
            "0.5",
            "--zeta-t",
            "1",
        ],
    );
    assert_eq!(code(&missing), 1);
    let bad_kappa = run(
        d.path(),
        &[
            "cost",
            "--params",
            "table1.json",
            "--kappa-i",
            "1.5",
            "--kappa-j",
            "0.5",
            "--zeta-t",
            "1",
        ],
    );
    assert_eq!(code(&bad_kappa), 1);
    // the region filter can leave nothing to minimize over: a computation failure
    let empty = run(
        d.path(),
        &[
            "optimize",
            "--params",
            "table1.json",
            "--zeta-t",
            "1",
            "--grid",
            "5",
            "--region",
            "IV",
        ],
    );
    assert_eq!(code(&empty), 2, "{}", String::from_utf8_lossy(&empty.stderr));
}

#[test]
fn optimize_reports_a_grid_cell() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("table1.json"), TABLE1).unwrap();
    let o = run(
        d.path(),
        &[
            "--json",
            "optimize",
            "--params",
            "table1.json",
            "--grid",
            "10",
            "--out",
            "best.json",
        ],
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let f: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("best.json")).unwrap()).unwrap();
    assert_eq!(v, f);
    assert!(v["omega_c"].as_f64().unwrap().is_finite());
}

#[test]
fn chained_run_is_deterministic() {
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let d = tempfile::tempdir().unwrap();
        synth_config(d.path(), 11);
        let p = d.path();
        assert_eq!(
            code(&run(
                p,
                &["--no-timestamp", "synth", "--config", "synth.json", "--out-dir", "syn"]
            )),
            0
        );
        let o = run(
            p,
            &[
                "--no-timestamp",
                "calibrate",
                "--bars-i",
                "syn/I.bars.csv",
                "--bars-j",
                "syn/J.bars.csv",
                "--cutoff",
                "400",
                "--report-len",
                "200",
                "--fit-window",
                "5,200",
                "--out",
                "cal/params.json",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(
            p,
            &[
                "--no-timestamp",
                "heatmap",
                "--params",
                "cal/params.json",
                "--grid",
                "8",
                "--out-dir",
                "hm",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(
            p,
            &[
                "--no-timestamp",
                "stats",
                "--bars-i",
                "syn/I.bars.csv",
                "--bars-j",
                "syn/J.bars.csv",
                "--tau-max",
                "50",
                "--out-dir",
                "st",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

        let mut files = Vec::new();
        for sub in ["syn", "cal", "hm", "st"] {
            let mut names: Vec<_> = std::fs::read_dir(p.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            names.sort();
            for n in names {
                files.push((n.strip_prefix(p).unwrap().to_path_buf(), std::fs::read(&n).unwrap()));
            }
        }
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
    assert!(snapshots[0].iter().any(|(n, _)| n.ends_with("truth.json")));
}

#[test]
fn manifest_timestamp_toggle() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("table1.json"), TABLE1).unwrap();
    run(
        d.path(),
        &["heatmap", "--params", "table1.json", "--grid", "3", "--out-dir", "a"],
    );
    run(
        d.path(),
        &[
            "--no-timestamp",
            "heatmap",
            "--params",
            "table1.json",
            "--grid",
            "3",
            "--out-dir",
            "b",
        ],
    );
    let a = std::fs::read_to_string(d.path().join("a/manifest.json")).unwrap();
    let b = std::fs::read_to_string(d.path().join("b/manifest.json")).unwrap();
    assert!(a.contains("timestamp_unix"));
    assert!(!b.contains("timestamp_unix"));
}

#[test]
fn ingest_builds_bars_from_ticks() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for t in ["AAA", "BBB"] {
        std::fs::create_dir_all(p.join("trades").join(t)).unwrap();
        std::fs::create_dir_all(p.join("quotes").join(t)).unwrap();
        let mut trades = String::from("second,ordinal,price,volume\n");
        let mut quotes = String::from("second,ordinal,bid,ask\n");
        for s in (600..22_800u32).step_by(7) {
            let px = 50.0 + ((s / 7) % 3) as f64 * 0.01;
            trades.push_str(&format!("{s},0,{px},100\n"));
            quotes.push_str(&format!("{},0,{},{}\n", s - 1, px - 0.01, px + 0.01));
        }
        std::fs::write(p.join(format!("trades/{t}/2008-01-02.trades.csv")), trades).unwrap();
        std::fs::write(p.join(format!("quotes/{t}/2008-01-02.quotes.csv")), quotes).unwrap();
    }
    let o = run(
        p,
        &[
            "--no-timestamp",
            "ingest",
            "--trades-dir",
            "trades",
            "--quotes-dir",
            "quotes",
            "--tickers",
            "AAA,BBB",
            "--out",
            "bars",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(p.join("bars/AAA.bars.csv")).unwrap();
    assert!(csv.starts_with("date,second,sign,norm_volume,log_mid\n"));
    assert!(p.join("bars/BBB.bars.csv").is_file());

    // a malformed row is a validation failure
    std::fs::write(
        p.join("trades/AAA/2008-01-02.trades.csv"),
        "second,ordinal,price,volume\n700,0,-1,100\n",
    )
    .unwrap();
    let o = run(
        p,
        &[
            "ingest",
            "--trades-dir",
            "trades",
            "--quotes-dir",
            "quotes",
            "--tickers",
            "AAA,BBB",
            "--out",
            "bars2",
        ],
    );
    assert_eq!(code(&o), 1);
}

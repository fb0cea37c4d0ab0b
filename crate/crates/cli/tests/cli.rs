use std::process::Command as Proc;

use hheston_cli::config::{NamedStrike, PayoffConfig, ScenarioConfig, Strike};
use hheston_cli::report::{parse_csv, Cell, Report};
use hheston_cli::{emit, run, CommonArgs, Command};
use hilbert_heston::pricing::atm_strike;
use hilbert_heston::scenario::{CurveSpec, Spectrum};

const BIN: &str = env!("CARGO_BIN_EXE_hheston");

fn write_config(dir: &std::path::Path, cfg: &ScenarioConfig) -> std::path::PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, cfg.canonical_toml().unwrap()).unwrap();
    p
}

fn small(n_paths: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.run.n_paths = n_paths;
    cfg.run.verify_paths = n_paths;
    cfg.run.dump_paths = 1;
    cfg
}

fn reports(cmd: Command, cfg: &ScenarioConfig) -> Vec<Report> {
    let dir = tempfile::tempdir().unwrap();
    let args = CommonArgs {
        config: Some(write_config(dir.path(), cfg)),
        ..CommonArgs::default()
    };
    run(&cmd, &args).unwrap().reports
}

fn num(c: &Cell) -> f64 {
    match c {
        Cell::Num(v) => *v,
        Cell::Int(v) => *v as f64,
        other => panic!("not a number: {other:?}"),
    }
}

fn quiet(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.model.eta = Vec::new();
    cfg.model.q_b = Spectrum { scale: 0.0, exponent: 1.0 };
    cfg
}

#[test]
fn config_round_trip_is_canonical() {
    let text = r#"
        [model]
        alpha = 1.0
        dx = 0.015625
        [model.x0]
        kind = "hump"
        level = 1.0
        amplitude = 0.2
        center = 1.0
        width = 0.5
        [option.payoff]
        kind = "call"
        strike = 1.05
        [greeks]
        parameter = "eta"
        [[greeks.directions]]
        id = "a"
        terms = [{ sigma = 1.0, left = { kind = "onb", index = 0, scale = 1.0 }, right = { kind = "constant", value = 1.0 } }]
    "#;
    let cfg = ScenarioConfig::from_toml(text).unwrap();
    let canon = cfg.canonical_toml().unwrap();
    let again = ScenarioConfig::from_toml(&canon).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.canonical_toml().unwrap(), canon);
    let a = cfg.resolve().unwrap();
    let b = again.resolve().unwrap();
    assert_eq!(a.spec.x0, b.spec.x0);
    assert_eq!(a.spec.y0, b.spec.y0);
    assert_eq!(a.option, b.option);
    assert_eq!(a.directions().unwrap().len(), 1);
}

#[test]
fn default_config_round_trips() {
    let cfg = ScenarioConfig::default();
    let canon = cfg.canonical_toml().unwrap();
    assert_eq!(ScenarioConfig::from_toml(&canon).unwrap(), cfg);
    assert_eq!(ScenarioConfig::from_toml("").unwrap(), cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ScenarioConfig::from_toml("[run]\nnpaths = 5\n").is_err());
    assert!(ScenarioConfig::from_toml("[model.x0]\nkind = \"constant\"\nvalue = 1.0\nslope = 2.0\n").is_err());
    assert!(ScenarioConfig::from_toml("[option.payoff]\nkind = \"call\"\nstrike = \"itm\"\n").is_err());
}

#[test]
fn atm_strike_resolves_to_the_forward() {
    let cfg = ScenarioConfig::default();
    assert!(matches!(
        cfg.option.payoff,
        PayoffConfig::SmoothedCall { strike: Strike::Named(NamedStrike::Atm), .. }
    ));
    let sc = cfg.resolve().unwrap();
    let k = atm_strike(&sc.spec, 0.5, 0.25, 0.25).unwrap();
    assert_eq!(sc.option.payoff.strike(), Some(k));
    let flowed = sc.spec.semigroup_x.apply(0.5, &sc.spec.x0).unwrap();
    assert!((k - flowed.integ_jxd(0.25, 0.25).unwrap()).abs() < 1e-15);
}

#[test]
fn zero_noise_paths_follow_the_flow() {
    let cfg = quiet(small(200));
    let sc = cfg.clone().resolve().unwrap();
    let paths = &reports(Command::Simulate, &cfg)[1];
    let dt = sc.spec.dt();
    for row in &paths.rows {
        let (step, x) = (num(&row[1]) as usize, num(&row[2]));
        let t = step as f64 * dt;
        let y = sc.spec.semigroup_y.apply(t, &sc.spec.y0).unwrap().eval(x).unwrap();
        let xf = sc.spec.semigroup_x.apply(t, &sc.spec.x0).unwrap().eval(x).unwrap();
        assert!((num(&row[3]) - y).abs() < 1e-12);
        assert!((num(&row[4]) - xf).abs() < 1e-12);
    }
}

#[test]
fn doubling_paths_shrinks_stderr_by_root_two() {
    let se = |n| {
        let rep = &reports(Command::Simulate, &small(n))[0];
        let col = rep.column("mc_stderr").unwrap();
        num(col[0])
    };
    let ratio = se(10_000) / se(20_000);
    let target = 2f64.sqrt();
    assert!((ratio / target - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn zero_volatility_price_is_deterministic() {
    let cfg = quiet(small(500));
    let rep = &reports(Command::Price, &cfg)[0];
    let stderr = num(rep.column("stderr").unwrap()[0]);
    assert_eq!(stderr, 0.0);
    let sc = cfg.resolve().unwrap();
    let k = sc.option.payoff.strike().unwrap();
    let expect = sc.option.psi(k);
    assert!((num(rep.column("price").unwrap()[0]) - expect).abs() < 1e-14);
}

#[test]
fn linear_payoff_matches_its_reference() {
    let mut cfg = small(20_000);
    cfg.option.payoff = PayoffConfig::Linear;
    let rep = &reports(Command::Price, &cfg)[0];
    assert!(num(rep.column("z_score").unwrap()[0]).abs() <= 3.0);
}

#[test]
fn discounting_scales_exactly() {
    let mut cfg = small(2000);
    let p1 = num(reports(Command::Price, &cfg)[0].column("price").unwrap()[0]);
    cfg.option.r *= 2.0;
    let p2 = num(reports(Command::Price, &cfg)[0].column("price").unwrap()[0]);
    let factor = (-0.02f64 * 0.5).exp();
    assert!((p2 / p1 - factor).abs() < 1e-14);
}

#[test]
fn greeks_for_a_zero_direction_are_zero() {
    let mut cfg = small(500);
    cfg.greeks.directions = vec![hheston_cli::config::DirectionConfig {
        id: "zero".into(),
        curve: Some(CurveSpec::Zero),
        terms: None,
        normalize: true,
    }];
    let rep = &reports(Command::Greeks, &cfg)[0];
    for row in &rep.rows {
        assert_eq!(num(&row[3]), 0.0);
        assert_eq!(num(&row[4]), 0.0);
    }
}

#[test]
fn default_greeks_are_concordant() {
    let rep = &reports(Command::Greeks, &small(20_000))[1];
    for z in rep.column("z_score").unwrap() {
        assert!(num(z).abs() <= 3.0);
    }
}

#[test]
fn verify_passes_and_detects_a_corrupted_kernel() {
    let cfg = small(5000);
    let dir = tempfile::tempdir().unwrap();
    let args = CommonArgs {
        config: Some(write_config(dir.path(), &cfg)),
        ..CommonArgs::default()
    };
    let ok = run(&Command::Verify { inject_fault: false }, &args).unwrap();
    assert!(ok.failure.is_none());
    let rep = &ok.reports[0];
    assert_eq!(rep.columns, &["name", "measured", "bound", "status"]);
    assert!(rep.rows.len() >= 10);
    let bad = run(&Command::Verify { inject_fault: true }, &args).unwrap();
    assert!(bad.failure.is_some());
    let row = bad.reports[0].rows.iter().find(|r| r[0] == Cell::from("reproducing_kernel")).unwrap();
    assert_eq!(row[3], Cell::from("fail"));
}

#[test]
fn csv_output_has_versioned_header_and_parses() {
    let cfg = small(300);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let args = CommonArgs {
        config: Some(write_config(dir.path(), &cfg)),
        out: Some(out.clone()),
        json: true,
        ..CommonArgs::default()
    };
    let o = run(&Command::Price, &args).unwrap();
    emit(&o, &args, &mut Vec::new()).unwrap();
    let text = std::fs::read_to_string(out.join("price.csv")).unwrap();
    assert!(text.starts_with("# hheston "));
    assert!(text.lines().next().unwrap().contains("schema=price version=1"));
    let (header, rows) = parse_csv(&text).unwrap();
    assert_eq!(header[0], "payoff");
    assert_eq!(rows.len(), 1);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("price.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "price");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Proc::new(BIN).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["nonsense"]), 2);
    assert_eq!(status(&["price", "--config", "/nonexistent.toml"]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[run]\nn_paths = 0\n").unwrap();
    assert_eq!(status(&["price", "--config", bad.to_str().unwrap()]), 2);

    let mut cfg = small(200);
    cfg.option.payoff = PayoffConfig::Call {
        strike: Strike::Named(NamedStrike::Atm),
    };
    cfg.greeks.estimators = vec![hilbert_heston::Estimator::Skorohod];
    let p = write_config(dir.path(), &cfg);
    assert_eq!(status(&["greeks", "--config", p.to_str().unwrap()]), 2);
    assert_eq!(status(&["price", "--config", p.to_str().unwrap()]), 0);

    let v = write_config(dir.path(), &small(2000));
    assert_eq!(status(&["verify", "--config", v.to_str().unwrap()]), 0);
    assert_eq!(status(&["verify", "--inject-fault", "--config", v.to_str().unwrap()]), 1);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &small(500));
    let go = |seed: &str| {
        Proc::new(BIN)
            .args(["simulate", "--config", p.to_str().unwrap(), "--seed", seed])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(go("5"), go("5"));
    assert_ne!(go("5"), go("6"));
}

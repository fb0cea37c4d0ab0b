mod common;

use common::{default_spec, unit};
use hilbert_heston::operators::FiniteRankOp;
use hilbert_heston::parallel::map_paths;
use hilbert_heston::rng::{stream, StreamTag};
use hilbert_heston::scenario::{CurveSpec, ModelParams, Spectrum, ZPolicyKind};
use hilbert_heston::simulate::{gen_increments, simulate_path, PathEvaluator, Simulator, SystemState};
use hilbert_heston::stats::{skew_kurtosis, MeanEstimate};
use hilbert_heston::{Direction, Error, McConfig, ModelSpec, Probe, ZPolicy};
use proptest::prelude::*;

const TAU: f64 = 0.5;

fn probes() -> Vec<Probe> {
    vec![Probe::Point(0.0), Probe::Point(0.3), Probe::Delivery(0.25, 0.25), Probe::Delivery(1.0, 0.5)]
}

fn directions(spec: &ModelSpec) -> Vec<Direction> {
    let sp = &spec.space;
    let h = unit(sp.from_values(|y| 1.0 - (-y).exp()));
    let zeta = FiniteRankOp::new(
        sp,
        vec![
            (1.0, spec.q_w.eigvecs()[0].clone(), sp.constant(1.0)),
            (0.5, spec.q_w.eigvecs()[1].clone(), sp.kernel_hx(0.5).unwrap()),
        ],
    )
    .unwrap();
    let zn = zeta.hs_norm().unwrap();
    vec![
        Direction::X0(h.clone()),
        Direction::Y0(h),
        Direction::Eta(zeta.scaled(1.0 / zn)),
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn zero_noise_is_the_deterministic_flow() {
    let params = ModelParams {
        eta: Vec::new(),
        q_b: Spectrum { scale: 0.0, exponent: 1.0 },
        ..ModelParams::default()
    };
    let spec = params.build().unwrap();
    let b = simulate_path(&spec, TAU, 3, 0, &[]).unwrap();
    let flowed = spec.semigroup_x.apply(TAU, &spec.x0).unwrap();
    let last = b.x.last().unwrap();
    for x in [0.0, 0.5, 2.0] {
        assert!(close(last.eval(x).unwrap(), flowed.eval(x).unwrap(), 1e-13));
    }
    let yflow = spec.semigroup_y.apply(TAU, &spec.y0).unwrap();
    assert!(close(b.y.last().unwrap().eval(0.7).unwrap(), yflow.eval(0.7).unwrap(), 1e-12));
}

#[test]
fn streaming_matches_materialized_paths() {
    for params in [
        ModelParams::default(),
        ModelParams {
            z_policy: ZPolicyKind::NormalizedY,
            ..ModelParams::default()
        },
    ] {
        let spec = params.build().unwrap();
        let dirs = directions(&spec);
        let tprobe = Probe::Delivery(0.25, 0.25);
        let ev = PathEvaluator::new(&spec, TAU, &probes(), Some(&tprobe), &dirs).unwrap();
        for path in 0..4 {
            let b = simulate_path(&spec, TAU, 17, path, &dirs).unwrap();
            let streamed = ev.run(17, path).unwrap();
            let x = b.x.last().unwrap();
            for (p, v) in probes().iter().zip(&streamed.probes) {
                assert!(close(p.apply(x).unwrap(), *v, 1e-11), "{p:?}");
            }
            for (t, v) in b.tangents.iter().zip(&streamed.tangents) {
                assert!(close(tprobe.apply(t).unwrap(), *v, 1e-10));
            }
        }
    }
}

#[test]
fn simulator_step_matches_recorded_path() {
    let spec = default_spec();
    let sim = Simulator::new(&spec, TAU).unwrap();
    let b = simulate_path(&spec, TAU, 5, 2, &[]).unwrap();
    let mut state = SystemState {
        y: spec.y0.clone(),
        x: spec.x0.clone(),
    };
    for k in 0..sim.n_steps() {
        state = sim.step(&state, &b.dw[k], &b.db[k]).unwrap();
    }
    assert_eq!(state.x, *b.x.last().unwrap());
    let mut dw = stream(5, 2, StreamTag::W);
    assert_eq!(gen_increments(&spec.q_w, spec.dt(), sim.n_steps(), &mut dw), b.dw);
}

#[test]
fn offset_runs_equal_perturbed_models() {
    let spec = default_spec();
    let dirs = directions(&spec);
    for dir in &dirs {
        let ev = PathEvaluator::new(&spec, TAU, &probes(), None, &[])
            .unwrap()
            .with_offset_direction(dir)
            .unwrap();
        for c in [-0.3, 0.05, 0.4] {
            let moved = spec.perturbed(dir, c).unwrap();
            let direct = PathEvaluator::new(&moved, TAU, &probes(), None, &[]).unwrap();
            for path in 0..3 {
                let a = ev.run_offset(9, path, c).unwrap();
                let b = direct.run(9, path).unwrap();
                for (u, v) in a.probes.iter().zip(&b.probes) {
                    assert!(close(*u, *v, 1e-11), "{:?} c={c}: {u} vs {v}", dir.parameter());
                }
            }
        }
    }
}

#[test]
fn tangents_match_central_differences() {
    // per path, the tangent functional is the derivative of the probe along the direction
    for params in [
        ModelParams::default(),
        ModelParams {
            z_policy: ZPolicyKind::NormalizedY,
            ..ModelParams::default()
        },
    ] {
        let spec = params.build().unwrap();
        let dirs = directions(&spec);
        let tprobe = Probe::Delivery(0.25, 0.25);
        let ev = PathEvaluator::new(&spec, TAU, &[tprobe.clone()], Some(&tprobe), &dirs).unwrap();
        let eps = 1e-4;
        for (i, dir) in dirs.iter().enumerate() {
            let up = spec.perturbed(dir, eps).unwrap();
            let dn = spec.perturbed(dir, -eps).unwrap();
            let eu = PathEvaluator::new(&up, TAU, &[tprobe.clone()], None, &[]).unwrap();
            let ed = PathEvaluator::new(&dn, TAU, &[tprobe.clone()], None, &[]).unwrap();
            for path in 0..3 {
                let fd = (eu.run(4, path).unwrap().probes[0] - ed.run(4, path).unwrap().probes[0]) / (2.0 * eps);
                let t = ev.run(4, path).unwrap().tangents[i];
                assert!((fd - t).abs() < 1e-6, "{:?}: {fd} vs {t}", dir.parameter());
            }
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let spec = default_spec();
    let ev = PathEvaluator::new(&spec, TAU, &probes(), None, &[]).unwrap();
    let run = |t| McConfig::new(500, 77).with_threads(Some(t)).map(|s, p| ev.run(s, p)).unwrap();
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(8));
    assert_eq!(one, McConfig::new(500, 77).map(|s, p| ev.run(s, p)).unwrap());
    assert_ne!(one, McConfig::new(500, 78).map(|s, p| ev.run(s, p)).unwrap());
}

#[test]
fn increments_have_the_kl_covariance() {
    let spec = default_spec();
    let dt = spec.dt();
    let n = 20_000;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|p| gen_increments(&spec.q_b, dt, 1, &mut stream(1, p, StreamTag::B)).remove(0))
        .collect();
    for (j, lam) in spec.q_b.eigvals().iter().enumerate() {
        let sq: Vec<f64> = draws.iter().map(|d| d[j] * d[j]).collect();
        let m = MeanEstimate::from_samples(&sq);
        assert!(((m.mean - lam * dt) / m.stderr).abs() < 4.0, "mode {j}");
    }
    let cross: Vec<f64> = draws.iter().map(|d| d[0] * d[1]).collect();
    let m = MeanEstimate::from_samples(&cross);
    assert!((m.mean / m.stderr).abs() < 4.0);
}

#[test]
fn conditional_gaussianity() {
    // fix the factor noise, vary only the forward noise
    let spec = default_spec();
    let sim = Simulator::new(&spec, TAU).unwrap();
    let n = sim.n_steps();
    let dw = gen_increments(&spec.q_w, spec.dt(), n, &mut stream(2024, 0, StreamTag::W));
    let probe = Probe::Delivery(0.25, 0.25);
    let vals = map_paths(100_000, None, |p| {
        let db = gen_increments(&spec.q_b, spec.dt(), n, &mut stream(2024, p, StreamTag::B));
        let mut st = SystemState {
            y: spec.y0.clone(),
            x: spec.x0.clone(),
        };
        for k in 0..n {
            st = sim.step(&st, &dw[k], &db[k])?;
        }
        probe.apply(&st.x)
    })
    .unwrap();
    let (skew, kurt) = skew_kurtosis(&vals);
    assert!(skew.abs() < 0.1, "skew {skew}");
    assert!(kurt.abs() < 0.2, "excess kurtosis {kurt}");
}

#[test]
fn configuration_errors() {
    let bad = ModelParams {
        horizon: 0.51,
        ..ModelParams::default()
    };
    assert!(matches!(bad.build(), Err(Error::Config(_))));
    let short = ModelParams {
        extension: 4,
        ..ModelParams::default()
    };
    assert!(matches!(short.build(), Err(Error::Config(_))));
    let spec = default_spec();
    assert!(Simulator::new(&spec, 0.3).is_err());
    let zero = ModelParams {
        z_policy: ZPolicyKind::Constant { gamma: CurveSpec::Zero },
        ..ModelParams::default()
    };
    assert!(matches!(zero.build(), Err(Error::Config(_))));
    assert!(PathEvaluator::new(&spec, TAU, &[Probe::Point(40.0)], None, &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normalized_z_has_unit_or_zero_norm(c in prop::array::uniform4(-2.0f64..2.0), zero in any::<bool>()) {
        let spec = default_spec();
        let sp = &spec.space;
        let y = if zero {
            sp.zero()
        } else {
            sp.from_values(|t| c[0] + c[1] * (-t).exp() + c[2] * (-2.0 * t).exp() + c[3] * t.min(1.0))
        };
        let z = ZPolicy::NormalizedY.z(&y).unwrap();
        let n = z.norm().unwrap();
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        prop_assert_eq!(n == 0.0, y.norm().unwrap() == 0.0);
    }

    #[test]
    fn paths_are_reproducible(seed in any::<u64>(), path in 0u64..1000) {
        let spec = default_spec();
        let ev = PathEvaluator::new(&spec, TAU, &probes(), None, &[]).unwrap();
        prop_assert_eq!(ev.run(seed, path).unwrap(), ev.run(seed, path).unwrap());
    }
}

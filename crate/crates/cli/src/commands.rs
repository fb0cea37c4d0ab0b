//! The `simulate`, `price` and `greeks` commands.

use hilbert_heston::analytics::{
    char_functional_probe, cov_forward, cov_forward_const_gamma, empirical_char_functional_probe, simulate_probes,
};
use hilbert_heston::greeks::{greek_fd, greek_pathwise, greek_skorohod, greeks_all, skorohod_lambda_grid};
use hilbert_heston::pricing::{atm_strike, price_option, Payoff};
use hilbert_heston::scenario::ModelParams;
use hilbert_heston::simulate::simulate_path;
use hilbert_heston::stats::{covariance, z_score, MeanEstimate};
use hilbert_heston::{Estimator, GreekEstimate, McConfig, Probe};

use crate::config::Scenario;
use crate::report::{Cell, Report};
use crate::CliError;

pub const ANALYTICS_COLUMNS: &[&str] = &[
    "quantity",
    "tau",
    "x",
    "y",
    "modes",
    "closed_form",
    "mc_estimate",
    "mc_stderr",
    "z_score",
];

pub const PATH_COLUMNS: &[&str] = &["path", "step", "probe_x", "Y_value", "X_value"];

pub const PRICE_COLUMNS: &[&str] = &[
    "payoff",
    "K",
    "kappa",
    "tau",
    "x",
    "d",
    "r",
    "n_paths",
    "price",
    "stderr",
    "seed",
    "reference",
    "z_score",
    "psi_lipschitz",
];

pub const GREEK_COLUMNS: &[&str] = &[
    "parameter",
    "estimator",
    "direction_id",
    "value",
    "stderr",
    "n_paths",
    "eps_or_evalpoint",
    "control_mean",
    "control_stderr",
    "seed",
];

pub const CONCORDANCE_COLUMNS: &[&str] = &["parameter", "direction_id", "estimator_a", "estimator_b", "z_score"];

fn mc_config(sc: &Scenario, n_paths: usize) -> McConfig {
    McConfig::new(n_paths, sc.config.run.seed).with_threads(sc.config.run.threads)
}

/// Summary statistics of `X_τ` at the probes against their closed forms,
/// plus the first `dump_paths` paths.
pub fn simulate(sc: &Scenario) -> Result<Vec<Report>, CliError> {
    let run = &sc.config.run;
    let spec = &sc.spec;
    let tau = sc.option.tau;
    let mc = mc_config(sc, run.n_paths);
    let mut rep = Report::new("analytics", ANALYTICS_COLUMNS);
    let xs = &run.probes;
    let probes: Vec<Probe> = xs.iter().map(|x| Probe::Point(*x)).collect();
    let vals = simulate_probes(spec, tau, &probes, &mc)?;
    let flowed = spec.semigroup_x.apply(tau, &spec.x0)?;
    for (x, v) in xs.iter().zip(&vals) {
        let m = MeanEstimate::from_samples(v);
        let cf = flowed.eval(*x)?;
        rep.push(row("mean_forward", tau, *x, None, None, cf, m, z_score(m.mean - cf, m.stderr)));
    }
    let constant = spec.z_policy.is_constant();
    for i in 0..xs.len() {
        for j in i..xs.len() {
            let c = covariance(&vals[i], &vals[j]);
            if constant {
                let cf = cov_forward_const_gamma(spec, tau, xs[i], xs[j])?;
                rep.push(row("cov_forward", tau, xs[i], Some(xs[j]), None, cf, c, z_score(c.mean - cf, c.stderr)));
            } else {
                let fa = cov_forward(spec, tau, xs[i], xs[j], &mc)?;
                let z = z_score(c.mean - fa.mean, c.stderr.hypot(fa.stderr));
                rep.push(row("cov_forward_factor_average", tau, xs[i], Some(xs[j]), None, fa.mean, c, z));
            }
        }
    }
    for (x, probe) in xs.iter().zip(&probes) {
        // ⟨X, h_x⟩ = X(x)
        let formula = char_functional_probe(spec, probe, tau, &mc)?;
        let sample = empirical_char_functional_probe(spec, probe, tau, &mc)?;
        for (name, f, s) in [("char_re", formula.re, sample.re), ("char_im", formula.im, sample.im)] {
            let z = z_score(s.mean - f.mean, s.stderr.hypot(f.stderr));
            rep.push(row(name, tau, *x, None, None, f.mean, s, z));
        }
    }
    if constant {
        for m in &run.kl_report {
            let params = ModelParams {
                kl_modes: *m,
                ..sc.config.model.clone()
            };
            let truncated = params.build()?;
            for x in xs {
                let cf = cov_forward_const_gamma(&truncated, tau, *x, *x)?;
                rep.push(vec![
                    "variance_kl".into(),
                    tau.into(),
                    (*x).into(),
                    Cell::Empty,
                    (*m).into(),
                    cf.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                ]);
            }
        }
    }

    let mut paths = Report::new("paths", PATH_COLUMNS);
    for p in 0..run.dump_paths as u64 {
        let b = simulate_path(spec, tau, run.seed, p, &[])?;
        for (k, (y, x)) in b.y.iter().zip(&b.x).enumerate() {
            for px in xs {
                paths.push(vec![p.into(), k.into(), (*px).into(), y.eval(*px)?.into(), x.eval(*px)?.into()]);
            }
        }
    }
    Ok(vec![rep, paths])
}

#[allow(clippy::too_many_arguments)]
fn row(q: &str, tau: f64, x: f64, y: Option<f64>, modes: Option<usize>, cf: f64, m: MeanEstimate, z: f64) -> Vec<Cell> {
    vec![
        q.into(),
        tau.into(),
        x.into(),
        y.into(),
        modes.into(),
        cf.into(),
        m.mean.into(),
        m.stderr.into(),
        z.into(),
    ]
}

pub fn price(sc: &Scenario) -> Result<Vec<Report>, CliError> {
    let run = &sc.config.run;
    let opt = &sc.option;
    let est = price_option(&sc.spec, opt, &mc_config(sc, run.n_paths))?;
    let p = est.price;
    let reference = match opt.payoff {
        Payoff::Linear => Some(opt.discount() * atm_strike(&sc.spec, opt.tau, opt.x, opt.d)?),
        _ => None,
    };
    let z = reference.map(|r| z_score(p.mean - r, p.stderr));
    let mut rep = Report::new("price", PRICE_COLUMNS);
    rep.push(vec![
        opt.payoff.name().into(),
        opt.payoff.strike().into(),
        opt.payoff.smoothing().into(),
        opt.tau.into(),
        opt.x.into(),
        opt.d.into(),
        opt.r.into(),
        p.n.into(),
        p.mean.into(),
        p.stderr.into(),
        run.seed.into(),
        reference.into(),
        z.into(),
        est.psi_lipschitz.into(),
    ]);
    Ok(vec![rep])
}

pub fn greeks(sc: &Scenario) -> Result<Vec<Report>, CliError> {
    let g = &sc.config.greeks;
    let run = &sc.config.run;
    let spec = &sc.spec;
    let opt = &sc.option;
    if g.estimators.is_empty() {
        return Err(CliError::Config("no estimators requested".into()));
    }
    if !opt.payoff.is_smooth() {
        if let Some(e) = g.estimators.iter().find(|e| **e != Estimator::Fd) {
            return Err(CliError::Engine(hilbert_heston::Error::Eligibility(format!(
                "{} estimator needs a smooth payoff, got {}",
                e.name(),
                opt.payoff.name()
            ))));
        }
    }
    let mc = mc_config(sc, run.n_paths);
    let wants = |e: Estimator| g.estimators.contains(&e);
    let shared = wants(Estimator::Pathwise) && (wants(Estimator::Fd) || wants(Estimator::Skorohod));
    let mut rep = Report::new("greeks", GREEK_COLUMNS);
    let mut conc = Report::new("concordance", CONCORDANCE_COLUMNS);
    for (id, dir) in sc.directions()? {
        let mut found: Vec<GreekEstimate> = Vec::new();
        if shared {
            let all = greeks_all(spec, opt, &dir, g.fd_epsilon, g.eval_point, &mc)?;
            found.extend(all.into_iter().filter(|e| wants(e.estimator)));
        } else {
            if wants(Estimator::Fd) {
                found.push(greek_fd(spec, opt, &dir, g.fd_epsilon, &mc)?);
            }
            if wants(Estimator::Pathwise) {
                found.push(greek_pathwise(spec, opt, &dir, &mc)?);
            }
            if wants(Estimator::Skorohod) {
                found.push(greek_skorohod(spec, opt, &dir, g.eval_point, &mc)?);
            }
        }
        if wants(Estimator::LambdaGrid) {
            found.push(skorohod_lambda_grid(spec, opt, &dir, g.eval_point, None, g.lambda_slope_paths, &mc)?);
        }
        for e in &found {
            let c = &e.components;
            rep.push(vec![
                e.parameter.name().into(),
                e.estimator.name().into(),
                id.clone().into(),
                e.value.into(),
                e.stderr.into(),
                e.n_paths.into(),
                c.epsilon.or(c.eval_point).into(),
                c.control_mean.into(),
                c.control_stderr.into(),
                run.seed.into(),
            ]);
        }
        for i in 0..found.len() {
            for j in i + 1..found.len() {
                conc.push(vec![
                    found[i].parameter.name().into(),
                    id.clone().into(),
                    found[i].estimator.name().into(),
                    found[j].estimator.name().into(),
                    found[i].z_against(&found[j]).into(),
                ]);
            }
        }
    }
    Ok(vec![rep, conc])
}

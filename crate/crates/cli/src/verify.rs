//! The `verify` command: curve-space property checks, the analytics
//! consistency triangle and moment checks, each reported as
//! `(name, measured, bound)`.

use std::sync::Arc;

use hilbert_heston::analytics::{
    char_functional_probe, cov_forward, cov_operator_apply, cov_operator_apply_const_gamma, covariance_forms,
    covariance_forms_const_gamma, empirical_char_functional_probe, simulate_probes,
};
use hilbert_heston::stats::{covariance, z_score, MeanEstimate};
use hilbert_heston::{HwElement, McConfig, Probe, Space};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Scenario;
use crate::report::Report;
use crate::CliError;

pub const VERIFY_COLUMNS: &[&str] = &["name", "measured", "bound", "status"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured.is_finite() && self.measured <= self.bound
    }
}

/// Runs every check; `inject_fault` corrupts the point-evaluation kernel.
pub fn run_checks(sc: &Scenario, inject_fault: bool) -> Result<Vec<Check>, CliError> {
    let mut checks = curve_checks(sc, inject_fault)?;
    checks.extend(model_checks(sc)?);
    Ok(checks)
}

pub fn verify(sc: &Scenario, inject_fault: bool) -> Result<(Vec<Report>, bool), CliError> {
    let checks = run_checks(sc, inject_fault)?;
    let mut rep = Report::new("verify", VERIFY_COLUMNS);
    for c in &checks {
        let status = if c.passed() { "pass" } else { "fail" };
        rep.push(vec![c.name.into(), c.measured.into(), c.bound.into(), status.into()]);
    }
    Ok((vec![rep], checks.iter().all(Check::passed)))
}

struct CurveGen {
    rng: ChaCha8Rng,
    space: Arc<Space>,
    reach: f64,
}

impl CurveGen {
    fn node(&mut self) -> f64 {
        let dx = self.space.dx();
        let n = (self.reach / dx) as usize;
        self.rng.random_range(0..=n) as f64 * dx
    }

    /// `c0 + Σ_k c_k (1 − e^{−k y}) + a·h_z` with random coefficients.
    fn curve(&mut self) -> Result<HwElement, CliError> {
        let c: Vec<f64> = (0..8).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        let mut f = self.space.from_values(|y| {
            c[0] + (1..8).map(|k| c[k] * -(-(k as f64) * y).exp_m1()).sum::<f64>()
        });
        let a = self.rng.random_range(-1.0..1.0);
        let z = self.node();
        f.axpy(a, &self.space.kernel_hx(z)?)?;
        Ok(f)
    }
}

fn kernel(space: &Arc<Space>, x: f64, fault: bool) -> Result<HwElement, CliError> {
    let k = space.kernel_hx(x)?;
    if !fault {
        return Ok(k);
    }
    let mut d = k.deriv().to_vec();
    d[0] *= 1.05;
    Ok(HwElement::from_parts(space, k.f0(), d))
}

fn curve_checks(sc: &Scenario, fault: bool) -> Result<Vec<Check>, CliError> {
    let space = Arc::clone(&sc.spec.space);
    let dx = space.dx();
    let headroom = (space.storage_len() - space.n_nodes()) as f64 * dx;
    let mut gen = CurveGen {
        rng: ChaCha8Rng::seed_from_u64(sc.config.run.seed),
        space: Arc::clone(&space),
        reach: 5.0f64.min(space.n_nodes() as f64 * dx / 2.0),
    };
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let f = gen.curve()?;
        for _ in 0..20 {
            let x = gen.node();
            let err = (f.inner_product(&kernel(&space, x, fault)?)? - f.eval(x)?).abs();
            worst = worst.max(err);
        }
    }
    out.push(Check {
        name: "reproducing_kernel",
        measured: worst,
        bound: 1e-8,
    });

    let shifts: Vec<f64> = [0.25, 1.0]
        .iter()
        .map(|s| (s / dx).round() * dx)
        .filter(|s| *s <= headroom)
        .collect();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let f = gen.curve()?;
        let g = gen.curve()?;
        for s in &shifts {
            let lhs = f.shift(*s)?.inner_product(&g)?;
            let rhs = f.inner_product(&g.shift_adjoint(*s)?)?;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    out.push(Check {
        name: "shift_adjoint_identity",
        measured: worst,
        bound: 1e-8,
    });

    let d = sc.option.d;
    let hdi = space.kernel_hdi(d)?;
    let mut worst = 0.0f64;
    for x in [0.0, 0.25, 1.0] {
        let x = (x / dx).round() * dx;
        if x > headroom {
            continue;
        }
        let direct = space.kernel_hxd(x, d)?;
        let adj = hdi.shift_adjoint(x)?;
        worst = worst.max((direct.f0() - adj.f0()).abs());
        for (a, b) in direct.deriv().iter().zip(adj.deriv()) {
            worst = worst.max((a - b).abs());
        }
    }
    out.push(Check {
        name: "delivery_kernel_adjoint",
        measured: worst,
        bound: 1e-12,
    });

    let mut worst = 0.0f64;
    for i in (0..space.n_nodes()).step_by(7) {
        let x = i as f64 * dx;
        let lemma = space.eval_norm_sq(x)?;
        worst = worst.max((lemma - space.kernel_hx(x)?.norm_sq()?).abs());
    }
    out.push(Check {
        name: "norm_lemma",
        measured: worst,
        bound: 1e-8,
    });

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = gen.curve()?;
        let n = f.norm()?;
        if n == 0.0 {
            continue;
        }
        for s in &shifts {
            worst = worst.max(f.shift(*s)?.norm()? / n);
        }
    }
    out.push(Check {
        name: "shift_norm_bound",
        measured: worst,
        bound: space.shift_norm_bound() + 1e-9,
    });

    let mut sym = 0.0f64;
    let mut cov_sym = 0.0f64;
    let mut eta_adj = 0.0f64;
    let mut psd = 0.0f64;
    let spec = &sc.spec;
    for _ in 0..50 {
        let f = gen.curve()?;
        let g = gen.curve()?;
        sym = sym.max((f.inner_product(&g)? - g.inner_product(&f)?).abs());
        for q in [&spec.q_w, &spec.q_b] {
            let a = q.apply(&f)?.inner_product(&g)?;
            let b = f.inner_product(&q.apply(&g)?)?;
            cov_sym = cov_sym.max((a - b).abs());
            psd = psd.max(-q.apply(&f)?.inner_product(&f)?);
        }
        let a = spec.eta.apply(&f)?.inner_product(&g)?;
        let b = f.inner_product(&spec.eta.adjoint().apply(&g)?)?;
        eta_adj = eta_adj.max((a - b).abs());
    }
    out.push(Check {
        name: "inner_product_symmetry",
        measured: sym,
        bound: 1e-12,
    });
    out.push(Check {
        name: "covariance_symmetry",
        measured: cov_sym,
        bound: 1e-10,
    });
    out.push(Check {
        name: "covariance_psd",
        measured: psd,
        bound: 1e-12,
    });
    out.push(Check {
        name: "eta_adjoint",
        measured: eta_adj,
        bound: 1e-10,
    });
    Ok(out)
}

fn max_abs(zs: impl IntoIterator<Item = f64>) -> f64 {
    zs.into_iter().fold(0.0, |a, z| a.max(z.abs()))
}

fn model_checks(sc: &Scenario) -> Result<Vec<Check>, CliError> {
    let spec = &sc.spec;
    let tau = sc.option.tau;
    let run = &sc.config.run;
    let mc = McConfig::new(run.verify_paths, run.seed).with_threads(run.threads);
    let xs = &run.probes;
    let probes: Vec<Probe> = xs.iter().map(|x| Probe::Point(*x)).collect();
    let pairs: Vec<(usize, usize)> = (0..xs.len()).flat_map(|i| (i..xs.len()).map(move |j| (i, j))).collect();
    let mut out = Vec::new();

    let vals = simulate_probes(spec, tau, &probes, &mc)?;
    let flowed = spec.semigroup_x.apply(tau, &spec.x0)?;
    let mut zs = Vec::new();
    for (x, v) in xs.iter().zip(&vals) {
        let m = MeanEstimate::from_samples(v);
        zs.push(z_score(m.mean - flowed.eval(*x)?, m.stderr));
    }
    out.push(Check {
        name: "mean_forward_z",
        measured: max_abs(zs),
        bound: 3.0,
    });

    let factor_avg = covariance_forms(spec, tau, &probes, &pairs, &mc)?;
    let sample: Vec<MeanEstimate> = pairs.iter().map(|(i, j)| covariance(&vals[*i], &vals[*j])).collect();
    let reference: Vec<f64> = if spec.z_policy.is_constant() {
        let cf = covariance_forms_const_gamma(spec, tau, &probes, &pairs)?;
        out.push(Check {
            name: "cov_factor_average_vs_closed_form_z",
            measured: max_abs(factor_avg.iter().zip(&cf).map(|(m, c)| z_score(m.mean - c, m.stderr))),
            bound: 3.0,
        });
        out.push(Check {
            name: "cov_sample_vs_closed_form_z",
            measured: max_abs(sample.iter().zip(&cf).map(|(m, c)| z_score(m.mean - c, m.stderr))),
            bound: 3.0,
        });
        let mut worst = 0.0f64;
        for (p, (i, j)) in pairs.iter().enumerate() {
            let qh = cov_operator_apply_const_gamma(spec, tau, &spec.space.kernel_hx(xs[*i])?)?;
            worst = worst.max((qh.eval(xs[*j])? - cf[p]).abs());
        }
        out.push(Check {
            name: "cov_operator_vs_cov_forward",
            measured: worst,
            bound: 1e-10,
        });
        cf
    } else {
        out.push(Check {
            name: "cov_sample_vs_factor_average_z",
            measured: max_abs(
                sample
                    .iter()
                    .zip(&factor_avg)
                    .map(|(s, f)| z_score(s.mean - f.mean, s.stderr.hypot(f.stderr))),
            ),
            bound: 3.0,
        });
        let small = McConfig::new(run.verify_paths.min(256), run.seed).with_threads(run.threads);
        let mut worst = 0.0f64;
        for (i, j) in pairs.iter().take(xs.len()) {
            let qh = cov_operator_apply(spec, tau, &spec.space.kernel_hx(xs[*i])?, &small)?;
            let form = cov_forward(spec, tau, xs[*i], xs[*j], &small)?;
            worst = worst.max((qh.eval(xs[*j])? - form.mean).abs() / (1.0 + form.mean.abs()));
        }
        out.push(Check {
            name: "cov_operator_vs_cov_forward",
            measured: worst,
            bound: 1e-10,
        });
        factor_avg.iter().map(|m| m.mean).collect()
    };

    let n = xs.len();
    let mut m = DMatrix::zeros(n, n);
    for ((i, j), v) in pairs.iter().zip(&reference) {
        m[(*i, *j)] = *v;
        m[(*j, *i)] = *v;
    }
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    out.push(Check {
        name: "probe_covariance_psd",
        measured: (-m.symmetric_eigenvalues().min() / scale).max(0.0),
        bound: 1e-12,
    });

    let mut zs = Vec::new();
    let mut modulus = 0.0f64;
    for probe in &probes {
        let f = char_functional_probe(spec, probe, tau, &mc)?;
        let s = empirical_char_functional_probe(spec, probe, tau, &mc)?;
        zs.push(z_score(s.re.mean - f.re.mean, s.re.stderr.hypot(f.re.stderr)));
        zs.push(z_score(s.im.mean - f.im.mean, s.im.stderr.hypot(f.im.stderr)));
        modulus = modulus.max(f.modulus()).max(s.modulus());
    }
    out.push(Check {
        name: "char_functional_z",
        measured: max_abs(zs),
        bound: 3.0,
    });
    out.push(Check {
        name: "char_functional_modulus",
        measured: modulus,
        bound: 1.0 + 1e-12,
    });
    Ok(out)
}

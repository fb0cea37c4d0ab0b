//! Directional sensitivities of the option price in `x0`, `y0` and `η`.
//!
//! Three estimators cross-check each other:
//!
//! * central finite differences with common random numbers,
//! * the pathwise estimator `E[e^{−rτ} Φ'(g) J_{x,d}(DX_τ(dir))]`,
//! * the randomized Skorohod estimator. After substituting `λ = 1/ξ` the
//!   Skorohod integral of `Ψ(X_τ) h_x` reduces to `Ψ(X_τ) G_x − P`, where
//!   `G_x ~ N(0, h_x(x))` is independent of the noise and `P` is the pathwise
//!   term, so the per-path value is `P − Ψ(X_τ) G_x`.
//!
//! [`skorohod_lambda_grid`] implements the last estimator a second way: it
//! re-simulates the randomized parameter `θ − dir + λξ·dir` on a λ grid and
//! interpolates the integrand at `λ = 1/ξ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::McConfig;
use crate::pricing::OptionSpec;
use crate::rng::{normal, stream, StreamTag};
use crate::simulate::{Direction, ModelSpec, Parameter, PathEvaluator};
use crate::stats::MeanEstimate;

/// Fraction of paths allowed outside the λ grid.
pub const MAX_OUT_OF_HULL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Fd,
    Pathwise,
    Skorohod,
    LambdaGrid,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fd => "fd",
            Self::Pathwise => "pathwise",
            Self::Skorohod => "skorohod",
            Self::LambdaGrid => "lambda_grid",
        }
    }
}

/// Diagnostics attached to an estimate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Components {
    /// Mean pathwise term `P`.
    pub pathwise_mean: Option<f64>,
    /// Mean control term `Ψ(X_τ) G_x`, zero in expectation.
    pub control_mean: Option<f64>,
    pub control_stderr: Option<f64>,
    pub epsilon: Option<f64>,
    pub eval_point: Option<f64>,
    /// Largest `|ΔI/Δλ|` of the integrand over the grid, on the slope sample.
    pub max_lambda_slope: Option<f64>,
    pub out_of_hull: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreekEstimate {
    pub parameter: Parameter,
    pub estimator: Estimator,
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub components: Components,
}

impl GreekEstimate {
    fn from_samples(parameter: Parameter, estimator: Estimator, samples: &[f64]) -> Self {
        let m = MeanEstimate::from_samples(samples);
        Self {
            parameter,
            estimator,
            value: m.mean,
            stderr: m.stderr,
            n_paths: m.n,
            components: Components::default(),
        }
    }

    pub fn estimate(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.value,
            stderr: self.stderr,
            n: self.n_paths,
        }
    }

    /// `|a − b| / √(se_a² + se_b²)`.
    pub fn z_against(&self, other: &GreekEstimate) -> f64 {
        self.estimate().z_against(&other.estimate())
    }
}

fn require_smooth(opt: &OptionSpec) -> Result<()> {
    if opt.payoff.is_smooth() {
        Ok(())
    } else {
        Err(Error::Eligibility(format!(
            "{} payoff is not differentiable; use a smoothed call",
            opt.payoff.name()
        )))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("finite-difference step must be positive, got {eps}")))
    }
}

/// Central difference `(Π₀(θ + εu) − Π₀(θ − εu)) / 2ε · ‖dir‖`, `u = dir/‖dir‖`,
/// with both legs on identical noise.
pub fn greek_fd(spec: &ModelSpec, opt: &OptionSpec, dir: &Direction, eps: f64, mc: &McConfig) -> Result<GreekEstimate> {
    opt.validate()?;
    check_eps(eps)?;
    let param = dir.parameter();
    let norm = dir.norm()?;
    if norm == 0.0 {
        let mut g = GreekEstimate::from_samples(param, Estimator::Fd, &[0.0]);
        g.n_paths = mc.n_paths;
        g.components.epsilon = Some(eps);
        return Ok(g);
    }
    let unit = dir.scaled(1.0 / norm);
    let up = spec.perturbed(&unit, eps)?;
    let down = spec.perturbed(&unit, -eps)?;
    let probe = [opt.probe()];
    let ev_up = PathEvaluator::new(&up, opt.tau, &probe, None, &[])?;
    let ev_down = PathEvaluator::new(&down, opt.tau, &probe, None, &[])?;
    let samples = mc.map(|seed, path| {
        let a = opt.psi(ev_up.run(seed, path)?.probes[0]);
        let b = opt.psi(ev_down.run(seed, path)?.probes[0]);
        Ok((a - b) / (2.0 * eps) * norm)
    })?;
    let mut g = GreekEstimate::from_samples(param, Estimator::Fd, &samples);
    g.components.epsilon = Some(eps);
    Ok(g)
}

/// Per-path `(Ψ(g), P)` with `P = e^{−rτ} Φ'(g) J_{x,d}(DX_τ(dir))`.
fn psi_and_pathwise(opt: &OptionSpec, g: f64, tangent: f64) -> (f64, f64) {
    let dphi = opt.payoff.derivative(g).expect("smooth payoff checked");
    (opt.psi(g), opt.discount() * dphi * tangent)
}

/// `E[e^{−rτ} Φ'(J_{x,d}(X_τ)) J_{x,d}(DX_τ(dir))]`.
pub fn greek_pathwise(spec: &ModelSpec, opt: &OptionSpec, dir: &Direction, mc: &McConfig) -> Result<GreekEstimate> {
    opt.validate()?;
    require_smooth(opt)?;
    let probe = opt.probe();
    let dirs = std::slice::from_ref(dir);
    let ev = PathEvaluator::new(spec, opt.tau, &[probe.clone()], Some(&probe), dirs)?;
    let samples = mc.map(|seed, path| {
        let r = ev.run(seed, path)?;
        Ok(psi_and_pathwise(opt, r.probes[0], r.tangents[0]).1)
    })?;
    Ok(GreekEstimate::from_samples(dir.parameter(), Estimator::Pathwise, &samples))
}

/// `(G_x, ξ)` from the randomizer stream, `G_x ~ N(0, h_x(x))`, `log ξ ~ N(0, τ)`.
fn randomizer(seed: u64, path: u64, kernel_sd: f64, tau: f64) -> (f64, f64) {
    let mut r = stream(seed, path, StreamTag::Randomizer);
    let gx = kernel_sd * normal(&mut r);
    let xi = (tau.sqrt() * normal(&mut r)).exp();
    (gx, xi)
}

fn kernel_sd(spec: &ModelSpec, eval_point: f64) -> Result<f64> {
    Ok(spec.space.eval_norm_sq(eval_point)?.sqrt())
}

fn skorohod_from_parts(param: Parameter, estimator: Estimator, pathwise: &[f64], control: &[f64], eval_point: f64) -> GreekEstimate {
    let per_path: Vec<f64> = pathwise.iter().zip(control).map(|(p, c)| p - c).collect();
    let p = MeanEstimate::from_samples(pathwise);
    let c = MeanEstimate::from_samples(control);
    let mut g = GreekEstimate::from_samples(param, estimator, &per_path);
    g.value = p.mean - c.mean;
    g.components = Components {
        pathwise_mean: Some(p.mean),
        control_mean: Some(c.mean),
        control_stderr: Some(c.stderr),
        eval_point: Some(eval_point),
        ..Components::default()
    };
    g
}

/// The exact zero Greek along a zero direction, where the randomized
/// parameter does not move and no control term is drawn.
fn zero_direction(param: Parameter, estimator: Estimator, n_paths: usize, eval_point: f64) -> GreekEstimate {
    GreekEstimate {
        parameter: param,
        estimator,
        value: 0.0,
        stderr: 0.0,
        n_paths,
        components: Components {
            pathwise_mean: Some(0.0),
            control_mean: Some(0.0),
            control_stderr: Some(0.0),
            eval_point: Some(eval_point),
            ..Components::default()
        },
    }
}

/// Randomized Skorohod estimator with per-path value `P − Ψ(X_τ) G_x`.
pub fn greek_skorohod(
    spec: &ModelSpec,
    opt: &OptionSpec,
    dir: &Direction,
    eval_point: f64,
    mc: &McConfig,
) -> Result<GreekEstimate> {
    opt.validate()?;
    require_smooth(opt)?;
    let sd = kernel_sd(spec, eval_point)?;
    if dir.norm()? == 0.0 {
        mc.map(|_, _| Ok(()))?;
        return Ok(zero_direction(dir.parameter(), Estimator::Skorohod, mc.n_paths, eval_point));
    }
    let probe = opt.probe();
    let dirs = std::slice::from_ref(dir);
    let ev = PathEvaluator::new(spec, opt.tau, &[probe.clone()], Some(&probe), dirs)?;
    let rows = mc.map(|seed, path| {
        let r = ev.run(seed, path)?;
        let (psi, p) = psi_and_pathwise(opt, r.probes[0], r.tangents[0]);
        let (gx, _) = randomizer(seed, path, sd, opt.tau);
        Ok((p, psi * gx))
    })?;
    let (pw, ctl): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(skorohod_from_parts(dir.parameter(), Estimator::Skorohod, &pw, &ctl, eval_point))
}

/// Finite differences, pathwise and Skorohod estimates computed on one set of paths.
pub fn greeks_all(
    spec: &ModelSpec,
    opt: &OptionSpec,
    dir: &Direction,
    eps: f64,
    eval_point: f64,
    mc: &McConfig,
) -> Result<[GreekEstimate; 3]> {
    opt.validate()?;
    require_smooth(opt)?;
    check_eps(eps)?;
    let param = dir.parameter();
    let sd = kernel_sd(spec, eval_point)?;
    let norm = dir.norm()?;
    let probe = opt.probe();
    let dirs = std::slice::from_ref(dir);
    let ev = PathEvaluator::new(spec, opt.tau, &[probe.clone()], Some(&probe), dirs)?;
    let legs = if norm > 0.0 {
        let unit = dir.scaled(1.0 / norm);
        Some((spec.perturbed(&unit, eps)?, spec.perturbed(&unit, -eps)?))
    } else {
        None
    };
    let leg_evs = legs
        .as_ref()
        .map(|(up, down)| {
            Ok::<_, Error>((
                PathEvaluator::new(up, opt.tau, &[probe.clone()], None, &[])?,
                PathEvaluator::new(down, opt.tau, &[probe.clone()], None, &[])?,
            ))
        })
        .transpose()?;
    let rows = mc.map(|seed, path| {
        let r = ev.run(seed, path)?;
        let (psi, p) = psi_and_pathwise(opt, r.probes[0], r.tangents[0]);
        let (gx, _) = randomizer(seed, path, sd, opt.tau);
        let fd = match &leg_evs {
            Some((u, d)) => {
                let a = opt.psi(u.run(seed, path)?.probes[0]);
                let b = opt.psi(d.run(seed, path)?.probes[0]);
                (a - b) / (2.0 * eps) * norm
            }
            None => 0.0,
        };
        Ok([fd, p, psi * gx])
    })?;
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let mut fd = GreekEstimate::from_samples(param, Estimator::Fd, &col(0));
    fd.components.epsilon = Some(eps);
    let pathwise = GreekEstimate::from_samples(param, Estimator::Pathwise, &col(1));
    let sk = if norm > 0.0 {
        skorohod_from_parts(param, Estimator::Skorohod, &col(1), &col(2), eval_point)
    } else {
        zero_direction(param, Estimator::Skorohod, rows.len(), eval_point)
    };
    Ok([fd, pathwise, sk])
}

/// Log-spaced grid over `[e^{−w}, e^{w}]`, `w = 4√τ` (at least 0.5), covering `1/ξ`.
pub fn default_lambda_grid(tau: f64) -> Vec<f64> {
    let w = (4.0 * tau.sqrt()).max(0.5);
    let n = 65;
    (0..n)
        .map(|i| (-w + 2.0 * w * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Cubic Lagrange interpolation through four points.
fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if j != i {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        s += w * ys[i];
    }
    s
}

/// Skorohod estimator through the randomized parameter `θ − dir + λξ·dir`.
///
/// For each path the integrand
/// `I(λ) = Ψ(X_τ(θ_λ)) G_x − λξ·e^{−rτ}Φ'(g(θ_λ)) J_{x,d}(DX_τ(θ_λ)(dir))`
/// is re-simulated at the four grid points around `1/ξ` and interpolated
/// there; the estimate averages `−I(1/ξ)`. The first `slope_paths` paths
/// also evaluate `I` on the whole grid to report its largest slope.
pub fn skorohod_lambda_grid(
    spec: &ModelSpec,
    opt: &OptionSpec,
    dir: &Direction,
    eval_point: f64,
    grid: Option<&[f64]>,
    slope_paths: usize,
    mc: &McConfig,
) -> Result<GreekEstimate> {
    opt.validate()?;
    require_smooth(opt)?;
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_lambda_grid(opt.tau);
            &owned
        }
    };
    if grid.len() < 4 || grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(Error::Argument("λ grid needs at least four increasing positive points".into()));
    }
    let sd = kernel_sd(spec, eval_point)?;
    if dir.norm()? == 0.0 {
        mc.map(|_, _| Ok(()))?;
        return Ok(zero_direction(dir.parameter(), Estimator::LambdaGrid, mc.n_paths, eval_point));
    }
    let lo = grid[0];
    let hi = grid[grid.len() - 1];

    let lambdas = mc.map(|seed, path| Ok(1.0 / randomizer(seed, path, sd, opt.tau).1))?;
    let outside = lambdas.iter().filter(|l| **l < lo || **l > hi).count();
    if outside as f64 > MAX_OUT_OF_HULL * mc.n_paths as f64 {
        return Err(Error::Coverage(format!(
            "{outside} of {} paths have 1/ξ outside [{lo}, {hi}]",
            mc.n_paths
        )));
    }

    let probe = opt.probe();
    let dirs = std::slice::from_ref(dir);
    let ev = PathEvaluator::new(spec, opt.tau, &[probe.clone()], Some(&probe), dirs)?.with_offset_direction(dir)?;
    let disc = opt.discount();
    let rows = mc.map(|seed, path| {
        let (gx, xi) = randomizer(seed, path, sd, opt.tau);
        let target = 1.0 / xi;
        let integrand = |lam: f64| -> Result<(f64, f64)> {
            let r = ev.run_offset(seed, path, lam * xi - 1.0)?;
            let g = r.probes[0];
            let dphi = opt.payoff.derivative(g).expect("smooth payoff checked");
            let control = opt.psi(g) * gx;
            Ok((control - lam * xi * disc * dphi * r.tangents[0], control))
        };
        let i = grid.partition_point(|l| *l <= target);
        let start = i.saturating_sub(2).min(grid.len() - 4);
        let xs = &grid[start..start + 4];
        let mut ys = [0.0; 4];
        let mut cs = [0.0; 4];
        for (k, lam) in xs.iter().enumerate() {
            (ys[k], cs[k]) = integrand(*lam)?;
        }
        let value = -lagrange4(xs, &ys, target);
        let control = lagrange4(xs, &cs, target);
        let slope = if (path as usize) < slope_paths {
            let vals = grid.iter().map(|l| Ok(integrand(*l)?.0)).collect::<Result<Vec<f64>>>()?;
            vals.windows(2)
                .zip(grid.windows(2))
                .map(|(v, l)| ((v[1] - v[0]) / (l[1] - l[0])).abs())
                .fold(0.0, f64::max)
        } else {
            f64::NAN
        };
        Ok((value, control, slope))
    })?;
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let controls: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut g = GreekEstimate::from_samples(dir.parameter(), Estimator::LambdaGrid, &values);
    let c = MeanEstimate::from_samples(&controls);
    let max_slope = rows.iter().map(|r| r.2).filter(|s| !s.is_nan()).fold(f64::NAN, f64::max);
    g.components = Components {
        control_mean: Some(c.mean),
        control_stderr: Some(c.stderr),
        eval_point: Some(eval_point),
        max_lambda_slope: (slope_paths > 0).then_some(max_slope),
        out_of_hull: Some(outside),
        ..Components::default()
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lagrange_reproduces_cubics() {
        let xs = [0.5, 0.9, 1.4, 2.0];
        let f = |x: f64| 2.0 * x * x * x - x + 0.3;
        let ys: Vec<f64> = xs.iter().map(|x| f(*x)).collect();
        assert_abs_diff_eq!(lagrange4(&xs, &ys, 1.1), f(1.1), epsilon = 1e-12);
    }

    #[test]
    fn default_grid_spans_four_sd() {
        let g = default_lambda_grid(0.5);
        assert_eq!(g.len(), 65);
        assert_abs_diff_eq!(g[0] * g[64], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[64].ln(), 4.0 * 0.5f64.sqrt(), epsilon = 1e-12);
    }
}

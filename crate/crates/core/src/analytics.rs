//! Oracles for the simulated system.
//!
//! Given the factor path, `X_t` is Gaussian with covariance
//! `Σ_k Δt ‖Q_B^{1/2} Z_k‖² (S_{t−t_k} Y_k)^{⊗2}` under the left-point rule
//! the simulator uses. The functions here average that conditional law over
//! factor paths only (or evaluate it in closed form when `Z ≡ γ`), so their
//! agreement with full simulation carries no discretization bias.

use crate::error::{Error, Result};
use crate::filipovic::HwElement;
use crate::parallel::McConfig;
use crate::simulate::{local_keep, ModelSpec, PathEvaluator, PreparedProbe, Probe, RunOffset, Simulator, ZPolicy};
use crate::stats::MeanEstimate;

/// Real and imaginary parts of a complex Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub re: MeanEstimate,
    pub im: MeanEstimate,
}

impl ComplexEstimate {
    pub fn modulus(&self) -> f64 {
        self.re.mean.hypot(self.im.mean)
    }
}

/// `φ_{X_t}(h) = e^{i⟨S_t x0, h⟩} E[exp(−½ Σ_k Δt ‖Q_B^{1/2}Z_k‖² ⟨S_{t−t_k}Y_k, h⟩²)]`,
/// the expectation over factor paths.
pub fn char_functional(spec: &ModelSpec, h: &HwElement, t: f64, mc: &McConfig) -> Result<ComplexEstimate> {
    char_functional_probe(spec, &Probe::Inner(h.clone()), t, mc)
}

/// [`char_functional`] for any linear functional `ℓ`: the law of `ℓ(X_t)`
/// is that of `⟨X_t, h⟩` with `h` the representer of `ℓ`.
pub fn char_functional_probe(spec: &ModelSpec, probe: &Probe, t: f64, mc: &McConfig) -> Result<ComplexEstimate> {
    let theta = probe.apply(&spec.semigroup_x.apply(t, &spec.x0)?)?;
    let sim = Simulator::new(spec, t)?;
    let prepared = PreparedProbe::new(&sim, probe)?;
    let keep = local_keep(spec, t, std::iter::once(probe));
    let dt = spec.dt();
    let samples = mc.map(|seed, path| {
        let mut v = 0.0;
        sim.run_y_with(seed, path, keep, &RunOffset::default(), |info| {
            let a = prepared.after(info.k, info.y);
            v += dt * info.q * a * a;
            Ok(())
        })?;
        Ok((-0.5 * v).exp())
    })?;
    let m = MeanEstimate::from_samples(&samples);
    Ok(ComplexEstimate {
        re: m.scaled(theta.cos()),
        im: m.scaled(theta.sin()),
    })
}

/// `E[e^{i⟨X_t, h⟩}]` from full simulation.
pub fn empirical_char_functional(spec: &ModelSpec, h: &HwElement, t: f64, mc: &McConfig) -> Result<ComplexEstimate> {
    empirical_char_functional_probe(spec, &Probe::Inner(h.clone()), t, mc)
}

/// `E[e^{iℓ(X_t)}]` from full simulation.
pub fn empirical_char_functional_probe(spec: &ModelSpec, probe: &Probe, t: f64, mc: &McConfig) -> Result<ComplexEstimate> {
    let vals = simulate_probes(spec, t, std::slice::from_ref(probe), mc)?;
    let cos: Vec<f64> = vals[0].iter().map(|v| v.cos()).collect();
    let sin: Vec<f64> = vals[0].iter().map(|v| v.sin()).collect();
    Ok(ComplexEstimate {
        re: MeanEstimate::from_samples(&cos),
        im: MeanEstimate::from_samples(&sin),
    })
}

/// Probe values of `X_t` on every path, one vector per probe.
pub fn simulate_probes(spec: &ModelSpec, t: f64, probes: &[Probe], mc: &McConfig) -> Result<Vec<Vec<f64>>> {
    let ev = PathEvaluator::new(spec, t, probes, None, &[])?;
    let rows = mc.map(|seed, path| Ok(ev.run(seed, path)?.probes))?;
    Ok((0..probes.len())
        .map(|i| rows.iter().map(|r| r[i]).collect())
        .collect())
}

/// `E Σ_k Δt ‖Q_B^{1/2}Z_k‖² ℓ_a(S_{t−t_k}Y_k) ℓ_b(S_{t−t_k}Y_k)` for each
/// index pair `(a, b)` into `probes`: the covariance of `ℓ_a(X_t)` and `ℓ_b(X_t)`.
pub fn covariance_forms(
    spec: &ModelSpec,
    t: f64,
    probes: &[Probe],
    pairs: &[(usize, usize)],
    mc: &McConfig,
) -> Result<Vec<MeanEstimate>> {
    check_pairs(probes, pairs)?;
    let sim = Simulator::new(spec, t)?;
    let prepared = probes
        .iter()
        .map(|p| PreparedProbe::new(&sim, p))
        .collect::<Result<Vec<_>>>()?;
    let keep = local_keep(spec, t, probes);
    let dt = spec.dt();
    let rows = mc.map(|seed, path| {
        let mut acc = vec![0.0; pairs.len()];
        let mut vals = vec![0.0; prepared.len()];
        sim.run_y_with(seed, path, keep, &RunOffset::default(), |info| {
            for (v, p) in vals.iter_mut().zip(&prepared) {
                *v = p.after(info.k, info.y);
            }
            for (a, (i, j)) in acc.iter_mut().zip(pairs) {
                *a += dt * info.q * vals[*i] * vals[*j];
            }
            Ok(())
        })?;
        Ok(acc)
    })?;
    Ok((0..pairs.len())
        .map(|p| MeanEstimate::from_samples(&rows.iter().map(|r| r[p]).collect::<Vec<_>>()))
        .collect())
}

fn check_pairs(probes: &[Probe], pairs: &[(usize, usize)]) -> Result<()> {
    if pairs.iter().any(|(a, b)| *a >= probes.len() || *b >= probes.len()) {
        return Err(Error::Argument("probe pair index out of range".into()));
    }
    Ok(())
}

/// `Cov(f(t,x), f(t,y))` by averaging the conditional covariance over factor paths.
pub fn cov_forward(spec: &ModelSpec, t: f64, x: f64, y: f64, mc: &McConfig) -> Result<MeanEstimate> {
    Ok(covariance_forms(spec, t, &[Probe::Point(x), Probe::Point(y)], &[(0, 1)], mc)?[0])
}

/// `Cov(g(t,x,d1), g(t,y,d2))` by averaging over factor paths.
pub fn cov_delivery(
    spec: &ModelSpec,
    t: f64,
    x: f64,
    d1: f64,
    y: f64,
    d2: f64,
    mc: &McConfig,
) -> Result<MeanEstimate> {
    let probes = [Probe::Delivery(x, d1), Probe::Delivery(y, d2)];
    Ok(covariance_forms(spec, t, &probes, &[(0, 1)], mc)?[0])
}

/// Deterministic ingredients of the factor law when `Z ≡ γ`: the mean path
/// `U_{kΔt} y0` and the responses `U_{mΔt} η v^W_n` to each noise mode.
struct FactorLaw {
    q_gamma: f64,
    means: Vec<HwElement>,
    /// `responses[m − 1][n] = U_{mΔt} η v_n`.
    responses: Vec<Vec<HwElement>>,
    lam_w: Vec<f64>,
}

impl FactorLaw {
    fn new(spec: &ModelSpec, n: usize) -> Result<Self> {
        let ZPolicy::Constant(gamma) = &spec.z_policy else {
            return Err(Error::Config("closed form requires a constant Z policy".into()));
        };
        let q_gamma = spec.q_b.sqrt_norm_sq(gamma)?;
        let u = spec.semigroup_y;
        let mut means = Vec::with_capacity(n);
        let mut m = spec.y0.clone();
        for k in 0..n {
            if k > 0 {
                u.apply_steps(1, &mut m)?;
            }
            means.push(m.clone());
        }
        let mut current = spec
            .q_w
            .eigvecs()
            .iter()
            .map(|v| spec.eta.apply(v))
            .collect::<Result<Vec<_>>>()?;
        let mut responses = Vec::with_capacity(n);
        for _ in 0..n {
            for g in &mut current {
                u.apply_steps(1, g)?;
            }
            responses.push(current.clone());
        }
        Ok(Self {
            q_gamma,
            means,
            responses,
            lam_w: spec.q_w.eigvals().to_vec(),
        })
    }

    /// Calls `f(weight, curve, k)` for every rank-one piece of
    /// `‖Q_B^{1/2}γ‖² Δt E[Y_k^{⊗2}]`.
    fn for_each_piece(&self, dt: f64, mut f: impl FnMut(f64, &HwElement, usize) -> Result<()>) -> Result<()> {
        for (k, mean) in self.means.iter().enumerate() {
            f(self.q_gamma * dt, mean, k)?;
            for j in 0..k {
                for (lam, g) in self.lam_w.iter().zip(&self.responses[k - j - 1]) {
                    f(self.q_gamma * dt * lam * dt, g, k)?;
                }
            }
        }
        Ok(())
    }
}

/// Closed-form covariance forms for `Z ≡ γ`.
pub fn covariance_forms_const_gamma(
    spec: &ModelSpec,
    t: f64,
    probes: &[Probe],
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    check_pairs(probes, pairs)?;
    let sim = Simulator::new(spec, t)?;
    let law = FactorLaw::new(spec, sim.n_steps())?;
    let prepared = probes
        .iter()
        .map(|p| PreparedProbe::new(&sim, p))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0; pairs.len()];
    let mut vals = vec![0.0; prepared.len()];
    law.for_each_piece(spec.dt(), |w, g, k| {
        for (v, p) in vals.iter_mut().zip(&prepared) {
            *v = p.after(k, g);
        }
        for (a, (i, j)) in acc.iter_mut().zip(pairs) {
            *a += w * vals[*i] * vals[*j];
        }
        Ok(())
    })?;
    Ok(acc)
}

/// `Cov(f(t,x), f(t,y))` in closed form when `Z ≡ γ`.
pub fn cov_forward_const_gamma(spec: &ModelSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(covariance_forms_const_gamma(spec, t, &[Probe::Point(x), Probe::Point(y)], &[(0, 1)])?[0])
}

/// `Q_{X_t} h`, averaging over factor paths.
pub fn cov_operator_apply(spec: &ModelSpec, t: f64, h: &HwElement, mc: &McConfig) -> Result<HwElement> {
    let sim = Simulator::new(spec, t)?;
    let n = sim.n_steps();
    let dt = spec.dt();
    let sx = spec.semigroup_x;
    let rows = mc.map(|seed, path| {
        let mut acc = spec.space.zero();
        sim.run_y_with(seed, path, None, &RunOffset::default(), |info| {
            let flowed = sx.apply((n - info.k) as f64 * dt, info.y)?;
            let c = dt * info.q * flowed.inner_product(h)?;
            acc.axpy(c, &flowed)
        })?;
        Ok(acc)
    })?;
    let mut total = spec.space.zero();
    for r in &rows {
        total.axpy(1.0, r)?;
    }
    total.scale(1.0 / rows.len() as f64);
    Ok(total)
}

/// `Q_{X_t} h` in closed form when `Z ≡ γ`.
pub fn cov_operator_apply_const_gamma(spec: &ModelSpec, t: f64, h: &HwElement) -> Result<HwElement> {
    let sim = Simulator::new(spec, t)?;
    let n = sim.n_steps();
    let law = FactorLaw::new(spec, n)?;
    let dt = spec.dt();
    let sx = spec.semigroup_x;
    let mut total = spec.space.zero();
    law.for_each_piece(dt, |w, g, k| {
        let flowed = sx.apply((n - k) as f64 * dt, g)?;
        let c = w * flowed.inner_product(h)?;
        total.axpy(c, &flowed)
    })?;
    Ok(total)
}

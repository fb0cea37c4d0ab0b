#![allow(dead_code)]

use std::sync::Arc;

use hilbert_heston::pricing::{atm_strike, OptionSpec, Payoff};
use hilbert_heston::scenario::ModelParams;
use hilbert_heston::{HwElement, ModelSpec, Space};

/// Coefficients of `c0 + Σ_k c_k (1 − e^{−k y})`, `k = 1..=7`.
pub type Combo = [f64; 8];

pub fn combo_value(c: &Combo, y: f64) -> f64 {
    c[0] + (1..8).map(|k| c[k] * (1.0 - (-(k as f64) * y).exp())).sum::<f64>()
}

pub fn combo_deriv(c: &Combo, y: f64) -> f64 {
    (1..8).map(|k| c[k] * k as f64 * (-(k as f64) * y).exp()).sum()
}

/// Nodal interpolant of a seed combination plus kernel terms `Σ a_j h_{z_j}`.
pub fn curve(space: &Arc<Space>, c: &Combo, kernels: &[(f64, f64)]) -> HwElement {
    let mut f = space.from_values(|y| combo_value(c, y));
    for (a, z) in kernels {
        f.axpy(*a, &space.kernel_hx(*z).unwrap()).unwrap();
    }
    f
}

/// Tiny deterministic generator so plain tests do not need an RNG crate.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn sym(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }

    pub fn combo(&mut self) -> Combo {
        let mut c = [0.0; 8];
        for v in &mut c {
            *v = self.sym();
        }
        c
    }

    /// A grid-aligned kernel point on `dx`.
    pub fn node(&mut self, dx: f64, max: f64) -> f64 {
        ((self.uniform() * max / dx).floor()) * dx
    }
}

pub fn space(dx: f64, extension: usize) -> Arc<Space> {
    Space::exponential(1.0, dx, 30.0, extension).unwrap()
}

pub fn default_spec() -> ModelSpec {
    ModelParams::default().build().unwrap()
}

pub fn default_option(spec: &ModelSpec) -> OptionSpec {
    let strike = atm_strike(spec, 0.5, 0.25, 0.25).unwrap();
    OptionSpec {
        tau: 0.5,
        x: 0.25,
        d: 0.25,
        r: 0.02,
        payoff: Payoff::SmoothedCall { strike, kappa: 0.1 },
    }
}

pub fn unit(h: HwElement) -> HwElement {
    let n = h.norm().unwrap();
    h.scaled(1.0 / n)
}

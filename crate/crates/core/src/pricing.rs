//! Forward prices, payoffs and Monte Carlo option prices on delivery-period forwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filipovic::HwElement;
use crate::parallel::McConfig;
use crate::simulate::{ModelSpec, PathEvaluator, Probe};
use crate::stats::MeanEstimate;

/// `Φ` applied to the delivery-period forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    Linear,
    Call { strike: f64 },
    /// `κ·ln(1 + e^{(s−K)/κ})`.
    SmoothedCall { strike: f64, kappa: f64 },
}

impl Payoff {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Linear => Ok(()),
            Self::Call { strike } if strike.is_finite() => Ok(()),
            Self::SmoothedCall { strike, kappa } if strike.is_finite() && kappa > 0.0 && kappa.is_finite() => Ok(()),
            _ => Err(Error::Config(format!("invalid payoff {self:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Call { .. } => "call",
            Self::SmoothedCall { .. } => "smoothed_call",
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match *self {
            Self::Linear => None,
            Self::Call { strike } | Self::SmoothedCall { strike, .. } => Some(strike),
        }
    }

    pub fn smoothing(&self) -> Option<f64> {
        match *self {
            Self::SmoothedCall { kappa, .. } => Some(kappa),
            _ => None,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Self::Linear => s,
            Self::Call { strike } => (s - strike).max(0.0),
            Self::SmoothedCall { strike, kappa } => {
                let u = (s - strike) / kappa;
                // stable softplus
                kappa * (u.max(0.0) + (-u.abs()).exp().ln_1p())
            }
        }
    }

    /// `Φ'(s)`, or `None` where the payoff is not differentiable everywhere.
    pub fn derivative(&self, s: f64) -> Option<f64> {
        match *self {
            Self::Linear => Some(1.0),
            Self::Call { .. } => None,
            Self::SmoothedCall { strike, kappa } => {
                let u = (s - strike) / kappa;
                Some(if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                })
            }
        }
    }

    /// Fréchet-differentiable with a Lipschitz derivative.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Call { .. })
    }

    /// Lipschitz constant `L_Φ`.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// Lipschitz constant of `Φ'`, if it exists.
    pub fn derivative_lipschitz(&self) -> Option<f64> {
        match *self {
            Self::Linear => Some(0.0),
            Self::Call { .. } => None,
            Self::SmoothedCall { kappa, .. } => Some(0.25 / kappa),
        }
    }
}

/// An option on the average forward over `[τ + x, τ + x + d]`, exercised at `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    /// Exercise time (time).
    pub tau: f64,
    /// Time from exercise to delivery start (time).
    pub x: f64,
    /// Delivery length (time).
    pub d: f64,
    /// Interest rate (1/time).
    pub r: f64,
    pub payoff: Payoff,
}

impl OptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.x >= 0.0 && self.d > 0.0 && self.r.is_finite()) {
            return Err(Error::Config("option needs τ ≥ 0, x ≥ 0, d > 0 and finite r".into()));
        }
        self.payoff.validate()
    }

    pub fn discount(&self) -> f64 {
        (-self.r * self.tau).exp()
    }

    pub fn probe(&self) -> Probe {
        Probe::Delivery(self.x, self.d)
    }

    /// `Ψ(g) = e^{−rτ} Φ(g)`.
    pub fn psi(&self, g: f64) -> f64 {
        self.discount() * self.payoff.value(g)
    }
}

/// `f(t, x) = δ_x(X_t)`.
pub fn forward_f(curve: &HwElement, x: f64) -> Result<f64> {
    curve.eval(x)
}

/// `g(t, x, d) = J_{x,d}(X_t)`.
pub fn forward_g(curve: &HwElement, x: f64, d: f64) -> Result<f64> {
    curve.integ_jxd(x, d)
}

/// `J_{x,d}(S_τ x0)`, the at-the-money strike.
pub fn atm_strike(spec: &ModelSpec, tau: f64, x: f64, d: f64) -> Result<f64> {
    spec.semigroup_x.jxd_after(tau, &spec.x0, x, d)
}

/// `L_Ψ = e^{−rτ} ‖h_{x,d}‖_w L_Φ`.
pub fn psi_lipschitz(spec: &ModelSpec, opt: &OptionSpec) -> Result<f64> {
    let h = spec.space.kernel_hxd(opt.x, opt.d)?;
    Ok(opt.discount() * h.norm()? * opt.payoff.lipschitz())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub price: MeanEstimate,
    /// `L_Ψ`, reported as a diagnostic.
    pub psi_lipschitz: f64,
}

/// `Π₀ = e^{−rτ} E[Φ(J_{x,d}(X_τ))]` under the simulation measure.
pub fn price_option(spec: &ModelSpec, opt: &OptionSpec, mc: &McConfig) -> Result<PriceEstimate> {
    opt.validate()?;
    if mc.n_paths == 0 {
        return Err(Error::Argument("path count must be positive".into()));
    }
    let ev = PathEvaluator::new(spec, opt.tau, &[opt.probe()], None, &[])?;
    let samples = mc.map(|seed, path| Ok(opt.psi(ev.run(seed, path)?.probes[0])))?;
    Ok(PriceEstimate {
        price: MeanEstimate::from_samples(&samples),
        psi_lipschitz: psi_lipschitz(spec, opt)?,
    })
}

//! Declarative model descriptions and the default desk scenario.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filipovic::{HwElement, Space};
use crate::operators::{build_onb, seed_family, CovOp, FiniteRankOp, SemigroupSpec};
use crate::simulate::{ModelSpec, ZPolicy};

/// A named closed-form curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Zero,
    Constant { value: f64 },
    /// `level + scale·(1 − e^{−rate·y})`.
    Saturating { level: f64, scale: f64, rate: f64 },
    /// `level + amplitude·exp(−((y − center)/width)²)`.
    Hump {
        level: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `scale·h_x`, the point-evaluation representer.
    Kernel { x: f64, scale: f64 },
    /// `scale·e_index` from the orthonormalized seed family (index from 0).
    Onb { index: usize, scale: f64 },
    /// Node values with spacing `spacing`, linear in between, flat afterwards.
    Tabulated { spacing: f64, values: Vec<f64> },
}

impl CurveSpec {
    pub fn build(&self, space: &Arc<Space>) -> Result<HwElement> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("curve parameter {what} must be finite")))
            }
        };
        Ok(match *self {
            Self::Zero => space.zero(),
            Self::Constant { value } => space.constant(finite(value, "value")?),
            Self::Saturating { level, scale, rate } => {
                finite(level + scale + rate, "level/scale/rate")?;
                space.from_values(move |y| level + scale * (-(-rate * y).exp_m1()))
            }
            Self::Hump {
                level,
                amplitude,
                center,
                width,
            } => {
                finite(level + amplitude + center, "level/amplitude/center")?;
                if !(width > 0.0 && width.is_finite()) {
                    return Err(Error::Config("hump width must be positive".into()));
                }
                space.from_values(move |y| {
                    let u = (y - center) / width;
                    level + amplitude * (-u * u).exp()
                })
            }
            Self::Kernel { x, scale } => space.kernel_hx(x)?.scaled(finite(scale, "scale")?),
            Self::Onb { index, scale } => {
                let onb = build_onb(&seed_family(space, index + 1))?;
                onb[index].scaled(finite(scale, "scale")?)
            }
            Self::Tabulated {
                spacing,
                ref values,
            } => {
                if !(spacing > 0.0 && spacing.is_finite()) || values.is_empty() {
                    return Err(Error::Config("tabulated curve needs spacing > 0 and values".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data("non-finite tabulated curve value".into()));
                }
                let values = values.clone();
                space.from_values(move |y| {
                    let pos = y / spacing;
                    let k = pos.floor() as usize;
                    if k + 1 >= values.len() {
                        values[values.len() - 1]
                    } else {
                        let t = pos - k as f64;
                        (1.0 - t) * values[k] + t * values[k + 1]
                    }
                })
            }
        })
    }
}

/// `λ_n = scale·n^{−exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectrum {
    pub scale: f64,
    pub exponent: f64,
}

/// One term `σ·(left ⊗ right)` of a finite-rank operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorTerm {
    pub sigma: f64,
    pub left: CurveSpec,
    pub right: CurveSpec,
}

pub fn build_operator(space: &Arc<Space>, terms: &[OperatorTerm]) -> Result<FiniteRankOp> {
    let built = terms
        .iter()
        .map(|t| Ok((t.sigma, t.left.build(space)?, t.right.build(space)?)))
        .collect::<Result<Vec<_>>>()?;
    FiniteRankOp::new(space, built)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SemigroupKind {
    LeftShift,
    DampedLeftShift { kappa: f64 },
    ScalarDecay { kappa: f64 },
}

impl From<SemigroupKind> for SemigroupSpec {
    fn from(k: SemigroupKind) -> Self {
        match k {
            SemigroupKind::LeftShift => SemigroupSpec::LeftShift,
            SemigroupKind::DampedLeftShift { kappa } => SemigroupSpec::DampedLeftShift { kappa },
            SemigroupKind::ScalarDecay { kappa } => SemigroupSpec::ScalarDecay { kappa },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZPolicyKind {
    Constant { gamma: CurveSpec },
    NormalizedY,
}

/// Everything needed to build a [`ModelSpec`]. Missing keys take the
/// default desk scenario's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Weight rate `α` (1/time).
    pub alpha: f64,
    /// Grid spacing and time step (time).
    pub dx: f64,
    /// Quadrature window length `L` (time).
    pub window: f64,
    /// Extra cells past the window; at least `horizon/dx`.
    pub extension: usize,
    /// Longest simulated time (time).
    pub horizon: f64,
    /// Karhunen–Loève modes per noise.
    pub kl_modes: usize,
    pub x0: CurveSpec,
    pub y0: CurveSpec,
    pub eta: Vec<OperatorTerm>,
    pub q_w: Spectrum,
    pub q_b: Spectrum,
    pub semigroup_x: SemigroupKind,
    pub semigroup_y: SemigroupKind,
    pub z_policy: ZPolicyKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        let dx = 1.0 / 64.0;
        let horizon = 0.5;
        Self {
            alpha: 1.0,
            dx,
            window: 30.0,
            extension: (horizon / dx) as usize + 128,
            horizon,
            kl_modes: 8,
            x0: CurveSpec::Saturating {
                level: 1.0,
                scale: 0.2,
                rate: 1.0,
            },
            y0: CurveSpec::Saturating {
                level: 0.3,
                scale: -0.1,
                rate: 2.0,
            },
            eta: vec![
                OperatorTerm {
                    sigma: 0.3,
                    left: CurveSpec::Onb { index: 0, scale: 1.0 },
                    right: CurveSpec::Constant { value: 1.0 },
                },
                OperatorTerm {
                    sigma: 0.2,
                    left: CurveSpec::Onb { index: 1, scale: 1.0 },
                    right: CurveSpec::Saturating {
                        level: 0.0,
                        scale: 1.0,
                        rate: 1.0,
                    },
                },
                OperatorTerm {
                    sigma: 0.1,
                    left: CurveSpec::Onb { index: 2, scale: 1.0 },
                    right: CurveSpec::Kernel { x: 0.5, scale: 1.0 },
                },
            ],
            q_w: Spectrum {
                scale: 1.0,
                exponent: 3.0,
            },
            q_b: Spectrum {
                scale: 1.0,
                exponent: 3.0,
            },
            semigroup_x: SemigroupKind::LeftShift,
            semigroup_y: SemigroupKind::DampedLeftShift { kappa: 1.0 },
            z_policy: ZPolicyKind::Constant {
                gamma: CurveSpec::Constant { value: 1.0 },
            },
        }
    }
}

impl ModelParams {
    pub fn space(&self) -> Result<Arc<Space>> {
        Space::exponential(self.alpha, self.dx, self.window, self.extension)
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let space = self.space()?;
        self.build_on(&space)
    }

    pub fn build_on(&self, space: &Arc<Space>) -> Result<ModelSpec> {
        if self.kl_modes == 0 {
            return Err(Error::Config("at least one noise mode is required".into()));
        }
        let cov = |s: &Spectrum| {
            if !(s.scale >= 0.0 && s.scale.is_finite() && s.exponent.is_finite()) {
                return Err(Error::Config("spectrum needs finite scale ≥ 0".into()));
            }
            CovOp::power_law(space, s.scale, s.exponent, self.kl_modes)
        };
        let z_policy = match &self.z_policy {
            ZPolicyKind::Constant { gamma } => ZPolicy::constant(gamma.build(space)?)?,
            ZPolicyKind::NormalizedY => ZPolicy::NormalizedY,
        };
        let spec = ModelSpec {
            space: Arc::clone(space),
            x0: self.x0.build(space)?,
            y0: self.y0.build(space)?,
            eta: build_operator(space, &self.eta)?,
            q_w: cov(&self.q_w)?,
            q_b: cov(&self.q_b)?,
            semigroup_x: self.semigroup_x.into(),
            semigroup_y: self.semigroup_y.into(),
            z_policy,
            horizon: self.horizon,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_model_builds() {
        let spec = ModelParams::default().build().unwrap();
        assert_eq!(spec.space.n_nodes(), 1920);
        assert_eq!(spec.n_steps(0.5).unwrap(), 32);
        assert_eq!(spec.q_w.len(), 8);
        assert_abs_diff_eq!(spec.q_b.eigvals()[0], 1.0);
        assert_abs_diff_eq!(spec.x0.eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn curve_kinds() {
        let sp = Space::exponential(1.0, 1.0 / 64.0, 30.0, 8).unwrap();
        let hump = CurveSpec::Hump {
            level: 1.0,
            amplitude: 0.5,
            center: 1.0,
            width: 0.5,
        }
        .build(&sp)
        .unwrap();
        assert_abs_diff_eq!(hump.eval(1.0).unwrap(), 1.5, epsilon = 1e-12);
        let tab = CurveSpec::Tabulated {
            spacing: 0.5,
            values: vec![1.0, 2.0, 4.0],
        }
        .build(&sp)
        .unwrap();
        assert_abs_diff_eq!(tab.eval(0.25).unwrap(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(tab.eval(5.0).unwrap(), 4.0, epsilon = 1e-12);
        let e1 = CurveSpec::Onb { index: 1, scale: 2.0 }.build(&sp).unwrap();
        assert_abs_diff_eq!(e1.norm().unwrap(), 2.0, epsilon = 1e-12);
        assert!(CurveSpec::Hump {
            level: 0.0,
            amplitude: 1.0,
            center: 0.0,
            width: 0.0
        }
        .build(&sp)
        .is_err());
    }
}

//! TOML scenario files.
//!
//! Every block is optional and falls back to the default desk scenario.
//! Unknown keys are rejected. Units: times in years, rates per year,
//! curve levels in price units.

use std::path::Path;

use hilbert_heston::operators::FiniteRankOp;
use hilbert_heston::pricing::{atm_strike, OptionSpec, Payoff};
use hilbert_heston::scenario::{build_operator, CurveSpec, ModelParams, OperatorTerm};
use hilbert_heston::{Direction, Estimator, ModelSpec, Parameter};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub model: ModelParams,
    pub option: OptionConfig,
    pub run: RunConfig,
    pub greeks: GreeksConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            option: OptionConfig::default(),
            run: RunConfig::default(),
            greeks: GreeksConfig::default(),
        }
    }
}

/// A strike given as a number or as `"atm"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Strike {
    Value(f64),
    Named(NamedStrike),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedStrike {
    /// `J_{x,d}(S_τ x0)`.
    Atm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    Linear,
    Call { strike: Strike },
    SmoothedCall { strike: Strike, kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionConfig {
    /// Exercise time (years).
    pub tau: f64,
    /// Exercise to delivery start (years).
    pub x: f64,
    /// Delivery length (years).
    pub d: f64,
    /// Interest rate (per year).
    pub r: f64,
    pub payoff: PayoffConfig,
}

impl Default for OptionConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            x: 0.25,
            d: 0.25,
            r: 0.02,
            payoff: PayoffConfig::SmoothedCall {
                strike: Strike::Named(NamedStrike::Atm),
                kappa: 0.1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Worker threads; never changes results.
    pub threads: Option<usize>,
    /// Probe times to maturity for `simulate` (years).
    pub probes: Vec<f64>,
    /// Paths written to the path dump.
    pub dump_paths: usize,
    /// Noise truncations for the convergence-in-modes rows of `simulate`.
    pub kl_report: Vec<usize>,
    /// Paths for the Monte Carlo checks of `verify`.
    pub verify_paths: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            seed: 20_240_611,
            threads: None,
            probes: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            dump_paths: 4,
            kl_report: vec![2, 4, 8],
            verify_paths: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterName {
    X0,
    Y0,
    Eta,
}

impl From<ParameterName> for Parameter {
    fn from(p: ParameterName) -> Self {
        match p {
            ParameterName::X0 => Parameter::X0,
            ParameterName::Y0 => Parameter::Y0,
            ParameterName::Eta => Parameter::Eta,
        }
    }
}

/// A perturbation direction: `curve` for `x0`/`y0`, `terms` for `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<OperatorTerm>>,
    /// Rescale to unit norm before use.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreeksConfig {
    pub parameter: ParameterName,
    /// Empty means one default unit direction.
    pub directions: Vec<DirectionConfig>,
    pub estimators: Vec<Estimator>,
    /// Central-difference step in the direction's norm.
    pub fd_epsilon: f64,
    /// Kernel point `x` of the Skorohod control (years).
    pub eval_point: f64,
    /// Paths that report the λ-grid integrand slope.
    pub lambda_slope_paths: usize,
}

impl Default for GreeksConfig {
    fn default() -> Self {
        Self {
            parameter: ParameterName::X0,
            directions: Vec::new(),
            estimators: vec![Estimator::Fd, Estimator::Pathwise, Estimator::Skorohod],
            fd_epsilon: 1e-3,
            eval_point: 0.25,
            lambda_slope_paths: 100,
        }
    }
}

/// A parsed and validated scenario.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub spec: ModelSpec,
    pub option: OptionSpec,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The fully explicit form of this configuration.
    pub fn canonical_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve(self) -> Result<Scenario, CliError> {
        if self.run.n_paths == 0 || self.run.verify_paths == 0 {
            return Err(CliError::Config("path counts must be positive".into()));
        }
        if self.run.threads == Some(0) {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        let spec = self.model.build()?;
        let o = self.option;
        let resolve = |k: Strike| -> Result<f64, CliError> {
            Ok(match k {
                Strike::Value(v) => v,
                Strike::Named(NamedStrike::Atm) => atm_strike(&spec, o.tau, o.x, o.d)?,
            })
        };
        let payoff = match o.payoff {
            PayoffConfig::Linear => Payoff::Linear,
            PayoffConfig::Call { strike } => Payoff::Call {
                strike: resolve(strike)?,
            },
            PayoffConfig::SmoothedCall { strike, kappa } => Payoff::SmoothedCall {
                strike: resolve(strike)?,
                kappa,
            },
        };
        let option = OptionSpec {
            tau: o.tau,
            x: o.x,
            d: o.d,
            r: o.r,
            payoff,
        };
        option.validate()?;
        spec.n_steps(option.tau)?;
        if option.tau > spec.horizon + 1e-12 {
            return Err(CliError::Config(format!(
                "exercise time {} beyond model horizon {}",
                option.tau, spec.horizon
            )));
        }
        Ok(Scenario {
            config: self,
            spec,
            option,
        })
    }
}

impl Scenario {
    /// The requested Greek directions with their ids.
    pub fn directions(&self) -> Result<Vec<(String, Direction)>, CliError> {
        let g = &self.config.greeks;
        let param: Parameter = g.parameter.into();
        if g.directions.is_empty() {
            return Ok(vec![("unit".into(), self.default_direction(param)?)]);
        }
        let sp = &self.spec.space;
        g.directions
            .iter()
            .map(|dc| {
                let dir = match (param, &dc.curve, &dc.terms) {
                    (Parameter::X0, Some(c), None) => Direction::X0(c.build(sp)?),
                    (Parameter::Y0, Some(c), None) => Direction::Y0(c.build(sp)?),
                    (Parameter::Eta, None, Some(t)) => Direction::Eta(build_operator(sp, t)?),
                    _ => {
                        return Err(CliError::Config(format!(
                            "direction {}: give `curve` for x0/y0 or `terms` for eta",
                            dc.id
                        )))
                    }
                };
                let n = dir.norm()?;
                let dir = if dc.normalize && n > 0.0 { dir.scaled(1.0 / n) } else { dir };
                Ok((dc.id.clone(), dir))
            })
            .collect()
    }

    fn default_direction(&self, param: Parameter) -> Result<Direction, CliError> {
        let sp = &self.spec.space;
        let curve = sp.from_values(|y| 1.0 - (-y).exp());
        let dir = match param {
            Parameter::X0 => Direction::X0(curve),
            Parameter::Y0 => Direction::Y0(curve),
            Parameter::Eta => Direction::Eta(FiniteRankOp::new(
                sp,
                vec![(1.0, self.spec.q_w.eigvecs()[0].clone(), sp.constant(1.0))],
            )?),
        };
        let n = dir.norm()?;
        Ok(dir.scaled(1.0 / n))
    }
}

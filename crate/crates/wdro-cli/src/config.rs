//! Run configuration: a structured TOML file carrying the weighting
//! distribution, the market, and one block per subcommand. Everything a run
//! needs lives in the file so a result can be reproduced from the config
//! alone; the command line only selects the subcommand and output location.

use serde::Deserialize;
use wdro_core::analysis::log_grid;
use wdro_core::discounting::WeightingDistribution;
use wdro_core::equilibrium::{build_model, EquilibriumModel, MarketParams};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub discount: DiscountSpec,
    pub market: MarketSpec,
    pub trigger: Option<TriggerSpec>,
    pub value: Option<ValueSpec>,
    pub check: Option<CheckSpec>,
    pub figures: Option<FiguresSpec>,
    pub simulate: Option<SimulateSpec>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// Builds the model shared by every subcommand. Parameter rejections
    /// from the core are wrapped with the config section they came from.
    pub fn build_model(&self) -> Result<EquilibriumModel, CliError> {
        let weighting = self.discount.build()?;
        let market = self.market.build()?;
        build_model(weighting, market)
            .map_err(|e| CliError::Config(format!("[discount]/[market]: {e}")))
    }
}

/// Weighting distribution selected by `kind`.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountSpec {
    Degenerate { r0: f64 },
    TwoPoint { r: f64, lambda: f64, delta: f64 },
    GammaShifted { phi: f64, alpha: f64, beta: f64 },
    Mixture { atoms: Vec<(f64, f64)> },
}

impl DiscountSpec {
    pub fn build(&self) -> Result<WeightingDistribution, CliError> {
        let built = match *self {
            DiscountSpec::Degenerate { r0 } => WeightingDistribution::degenerate(r0),
            DiscountSpec::TwoPoint { r, lambda, delta } => {
                WeightingDistribution::two_point(r, lambda, delta)
            }
            DiscountSpec::GammaShifted { phi, alpha, beta } => {
                WeightingDistribution::gamma_shifted(phi, alpha, beta)
            }
            DiscountSpec::Mixture { ref atoms } => {
                WeightingDistribution::mixture(atoms.clone())
            }
        };
        built.map_err(|e| CliError::Config(format!("[discount]: {e}")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub sigma: f64,
    pub gamma: f64,
    pub k: f64,
}

impl MarketSpec {
    pub fn build(&self) -> Result<MarketParams, CliError> {
        MarketParams::new(self.sigma, self.gamma, self.k)
            .map_err(|e| CliError::Config(format!("[market]: {e}")))
    }
}

/// A grid given either as an explicit list or as a spaced range.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

impl GridSpec {
    /// Expands to concrete values; `key` names the config entry in errors.
    pub fn expand(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let bad = |why: String| Err(CliError::Config(format!("{key}: {why}")));
        match self {
            GridSpec::List(values) => {
                if values.is_empty() {
                    return bad("grid list is empty".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("grid list contains a non-finite value".into());
                }
                Ok(values.clone())
            }
            GridSpec::Range { min, max, count, spacing } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return bad(format!("range needs finite min < max, got [{min}, {max}]"));
                }
                if *count < 2 {
                    return bad(format!("range needs count >= 2, got {count}"));
                }
                match spacing {
                    Spacing::Linear => {
                        let step = (max - min) / (*count as f64 - 1.0);
                        Ok((0..*count)
                            .map(|i| {
                                if i == count - 1 { *max } else { min + step * i as f64 }
                            })
                            .collect())
                    }
                    Spacing::Log => log_grid(*min, *max, *count)
                        .map_err(|e| CliError::Config(format!("{key}: {e}"))),
                }
            }
        }
    }
}

fn default_unit_q() -> GridSpec {
    GridSpec::List(vec![1.0])
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    #[serde(default = "default_unit_q")]
    pub q: GridSpec,
}

impl Default for TriggerSpec {
    fn default() -> Self {
        TriggerSpec { q: default_unit_q() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueSpec {
    pub x: GridSpec,
    #[serde(default = "default_unit_q")]
    pub q: GridSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    /// Also replay the policy by simulation and compare against the closed
    /// form; off by default because it costs seconds rather than millis.
    #[serde(default)]
    pub monte_carlo: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub x0: f64,
    pub q0: f64,
    pub dt: f64,
    /// Simulate to this time; omit to let the truncation-tail rule pick the
    /// shortest horizon whose discarded mass fits the error budget.
    pub horizon: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub antithetic: bool,
}

fn default_true() -> bool {
    true
}

/// Parameters for the three data sets behind the survey figures. Defaults
/// reproduce the canonical parameterizations; any field can be overridden.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresSpec {
    #[serde(default)]
    pub fig1: Fig1Spec,
    #[serde(default)]
    pub fig2: Fig2Spec,
    #[serde(default)]
    pub fig3: Fig3Spec,
}

/// Marginal value of capacity against the shock level, for a two-point
/// weighting at several rate gaps. The larger default gap fails smooth
/// pasting, which is exactly the curve worth plotting: its marginal value
/// overshoots the marginal cost below the trigger.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Spec {
    pub r: f64,
    pub delta: f64,
    pub lambda: Vec<f64>,
    pub q: f64,
    pub x: GridSpec,
}

impl Default for Fig1Spec {
    fn default() -> Self {
        Fig1Spec {
            r: 0.05,
            delta: 0.5,
            lambda: vec![0.1, 1.0],
            q: 1.0,
            x: GridSpec::Range { min: 0.05, max: 1.2, count: 120, spacing: Spacing::Linear },
        }
    }
}

/// Equilibrium trigger against the impatience parameter of the shifted
/// Gamma family, holding the mean rate fixed.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Spec {
    pub beta: f64,
    pub phi: f64,
    pub q: f64,
    pub alpha: GridSpec,
}

impl Default for Fig2Spec {
    fn default() -> Self {
        Fig2Spec {
            beta: 0.05,
            phi: 0.05,
            q: 1.0,
            alpha: GridSpec::Range { min: 1e-3, max: 10.0, count: 50, spacing: Spacing::Log },
        }
    }
}

/// Smooth-pasting margin against the impatience parameter, one series per
/// long-run rate φ.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig3Spec {
    pub beta: f64,
    pub phi: Vec<f64>,
    pub alpha: GridSpec,
}

impl Default for Fig3Spec {
    fn default() -> Self {
        Fig3Spec {
            beta: 0.25,
            phi: vec![0.02, 0.05, 0.1],
            alpha: GridSpec::Range { min: 1e-3, max: 10.0, count: 50, spacing: Spacing::Log },
        }
    }
}

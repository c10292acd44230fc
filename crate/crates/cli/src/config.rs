//! JSON run configuration. Field order in the structs is the canonical
//! serialization order.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use ltbarrier::oracle::McConfig;
use ltbarrier::{Barrier, BarrierContract, Diffusion, Payoff};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub contract: ContractSpec,
    #[serde(default)]
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Gbm {
        sigma: f64,
        #[serde(default)]
        rate: f64,
        #[serde(default)]
        dividend: f64,
    },
    Cev {
        sigma0: f64,
        rho: f64,
        #[serde(default)]
        rate: f64,
        #[serde(default)]
        dividend: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<BarrierSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<BarrierSpec>,
    pub payoff: PayoffSpec,
    pub maturity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BarrierSpec {
    Constant { level: f64 },
    Exponential { level: f64, growth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Call { strike: f64 },
    Put { strike: f64 },
    DoubleNoTouch,
    SmoothBump { left: f64, right: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Volterra,
    Laplace,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub spots: Vec<f64>,
    #[serde(default)]
    pub method: Method,
    /// Grid sizes for `convergence`, ascending; the last one is the reference.
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub oracles: OracleSpec,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            n: default_n(),
            spots: Vec::new(),
            method: Method::default(),
            n_list: default_n_list(),
            oracles: OracleSpec::default(),
        }
    }
}

fn default_n() -> usize {
    256
}

fn default_n_list() -> Vec<usize> {
    vec![32, 64, 128, 256, 512]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSpec>,
    #[serde(default = "yes")]
    pub closed_form: bool,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            mc: None,
            closed_form: true,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "yes")]
    pub bridge_correction: bool,
}

impl Default for McSpec {
    fn default() -> Self {
        let d = McConfig::default();
        Self {
            paths: d.paths,
            steps: d.steps,
            seed: d.seed,
            bridge_correction: d.bridge_correction,
        }
    }
}

impl McSpec {
    pub fn to_core(self) -> McConfig {
        McConfig {
            paths: self.paths,
            steps: self.steps,
            seed: self.seed,
            bridge_correction: self.bridge_correction,
        }
    }
}

impl BarrierSpec {
    fn to_core(self) -> Barrier {
        match self {
            BarrierSpec::Constant { level } => Barrier::constant(level),
            BarrierSpec::Exponential { level, growth } => Barrier::exponential(level, growth),
        }
    }
}

impl PayoffSpec {
    fn to_core(self) -> Payoff {
        match self {
            PayoffSpec::Call { strike } => Payoff::Call { strike },
            PayoffSpec::Put { strike } => Payoff::Put { strike },
            PayoffSpec::DoubleNoTouch => Payoff::DoubleNoTouch,
            PayoffSpec::SmoothBump {
                left,
                right,
                height,
            } => Payoff::SmoothBump {
                left,
                right,
                height,
            },
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ));
        }
        Ok(cfg)
    }

    /// Canonical pretty-printed form, newline terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn rates(&self) -> (f64, f64) {
        match self.model {
            ModelSpec::Gbm { rate, dividend, .. } | ModelSpec::Cev { rate, dividend, .. } => {
                (rate, dividend)
            }
        }
    }

    pub fn diffusion(&self) -> ltbarrier::Result<Diffusion> {
        let (rate, dividend) = self.rates();
        match self.model {
            ModelSpec::Gbm { sigma, .. } => Diffusion::gbm(rate - dividend, sigma),
            ModelSpec::Cev { sigma0, rho, .. } => Diffusion::cev(rate - dividend, sigma0, rho),
        }
    }

    pub fn contract(&self) -> BarrierContract {
        let (rate, dividend) = self.rates();
        let c = &self.contract;
        BarrierContract::new(
            c.lower.map(BarrierSpec::to_core),
            c.upper.map(BarrierSpec::to_core),
            c.payoff.to_core(),
            c.maturity,
            rate,
            dividend,
        )
    }
}

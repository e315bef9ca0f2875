//! Experiment configuration: schema-versioned TOML describing the corpus,
//! the scale ladder, and the parameter grids.

use anyhow::{bail, Context, Result};
use fraclab_core::exact::{parse_exp, parse_rational, Exp};
use fraclab_core::gen::{ArcMeasure, DigitSystem};
use num::rational::BigRational;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub ladder: LadderCfg,
    #[serde(default)]
    pub planar: Vec<PlanarCfg>,
    #[serde(default)]
    pub arcs: Vec<ArcCfg>,
    #[serde(default)]
    pub params: ParamsCfg,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct LadderCfg {
    /// base scale exponent: `Delta = 2^-m`
    pub m: u32,
    pub n_min: u32,
    pub n_max: u32,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct PlanarCfg {
    pub name: String,
    /// digit-system grammar, e.g. `b=4;D=(0,0),(3,3);n=3`
    pub system: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ArcCfg {
    pub name: String,
    /// `uniform`, `cantor`, or `single`
    pub kind: String,
    pub level: u32,
    #[serde(default)]
    pub base_log2: u32,
    #[serde(default)]
    pub digits: Vec<u32>,
    #[serde(default)]
    pub index: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ParamsCfg {
    /// multiplicity exponents for the integrand probe (rationals)
    #[serde(default = "default_sigma")]
    pub sigma: Vec<String>,
    /// mass-threshold exponents for the worst-case projection probe
    #[serde(default = "default_kappa")]
    pub kappa: Vec<String>,
    /// target projection exponents
    #[serde(default = "default_s_lower")]
    pub s_lower: Vec<String>,
    #[serde(default = "default_lambda")]
    pub lambda: String,
    #[serde(default = "default_sigma0")]
    pub sigma0: String,
    #[serde(default = "default_eps")]
    pub eps: String,
    /// regularity constant used by regime conditions
    #[serde(default = "default_big_c")]
    pub big_c: String,
}

impl Default for ParamsCfg {
    fn default() -> Self {
        ParamsCfg {
            sigma: default_sigma(),
            kappa: default_kappa(),
            s_lower: default_s_lower(),
            lambda: default_lambda(),
            sigma0: default_sigma0(),
            eps: default_eps(),
            big_c: default_big_c(),
        }
    }
}

fn default_sigma() -> Vec<String> {
    vec!["1/4".into(), "1/2".into(), "1".into()]
}
fn default_kappa() -> Vec<String> {
    vec!["1/4".into(), "1/2".into()]
}
fn default_s_lower() -> Vec<String> {
    vec!["1/4".into(), "1/2".into()]
}
fn default_lambda() -> String {
    "1/4".into()
}
fn default_sigma0() -> String {
    "1".into()
}
fn default_eps() -> String {
    "1/25".into()
}
fn default_big_c() -> String {
    "4".into()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("config parse error")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The built-in corpus spanning the `sigma <= s <= 2` regimes.
    pub fn default_corpus(m: u32, n_min: u32, n_max: u32) -> Self {
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            seed: 7,
            ladder: LadderCfg { m, n_min, n_max },
            planar: vec![
                PlanarCfg {
                    name: "four-corner".into(),
                    system: "b=4;D=(0,0),(0,3),(3,0),(3,3);n=3".into(),
                },
                PlanarCfg {
                    name: "cantor-line".into(),
                    system: "b=4;D=(0,0),(3,0);n=3".into(),
                },
                PlanarCfg {
                    name: "segment".into(),
                    system: "b=4;D=(0,0),(1,0),(2,0),(3,0);n=3".into(),
                },
                PlanarCfg {
                    name: "square".into(),
                    system: "b=2;D=(0,0),(0,1),(1,0),(1,1);n=4".into(),
                },
            ],
            arcs: vec![
                ArcCfg {
                    name: "uniform".into(),
                    kind: "uniform".into(),
                    level: 4,
                    base_log2: 0,
                    digits: vec![],
                    index: 0,
                },
                ArcCfg {
                    name: "cantor-angles".into(),
                    kind: "cantor".into(),
                    level: 4,
                    base_log2: 2,
                    digits: vec![0, 3],
                    index: 0,
                },
            ],
            params: ParamsCfg::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            bail!(
                "unsupported config schema {} (expected {})",
                self.schema,
                SCHEMA_VERSION
            );
        }
        if self.ladder.m == 0 || self.ladder.n_min == 0 || self.ladder.n_max < self.ladder.n_min {
            bail!("ladder requires m >= 1 and 1 <= n_min <= n_max");
        }
        if self.ladder.m * self.ladder.n_max > 15 {
            bail!("ladder too deep for a desk-scale run (m * n_max <= 15)");
        }
        for p in &self.planar {
            DigitSystem::parse_spec(&p.system)
                .map_err(|e| anyhow::anyhow!("instance `{}`: {e}", p.name))?;
        }
        for a in &self.arcs {
            self.build_arc(a)?;
        }
        for s in self
            .params
            .sigma
            .iter()
            .chain(&self.params.kappa)
            .chain(&self.params.s_lower)
        {
            parse_exp(s).map_err(|e| anyhow::anyhow!(e))?;
        }
        parse_rational(&self.params.lambda).map_err(|e| anyhow::anyhow!(e))?;
        parse_exp(&self.params.sigma0).map_err(|e| anyhow::anyhow!(e))?;
        parse_exp(&self.params.eps).map_err(|e| anyhow::anyhow!(e))?;
        parse_rational(&self.params.big_c).map_err(|e| anyhow::anyhow!(e))?;
        Ok(())
    }

    pub fn build_arc(&self, cfg: &ArcCfg) -> Result<ArcMeasure> {
        match cfg.kind.as_str() {
            "uniform" => Ok(ArcMeasure::uniform(cfg.level)),
            "single" => Ok(ArcMeasure::single_arc(cfg.level, cfg.index)),
            "cantor" => ArcMeasure::cantor(cfg.level, cfg.base_log2, &cfg.digits)
                .map_err(|e| anyhow::anyhow!("arc `{}`: {e}", cfg.name)),
            k => bail!("unknown arc kind `{k}`"),
        }
    }

    pub fn sigma_grid(&self) -> Vec<Exp> {
        self.params
            .sigma
            .iter()
            .map(|s| parse_exp(s).unwrap())
            .collect()
    }

    pub fn kappa_grid(&self) -> Vec<Exp> {
        self.params
            .kappa
            .iter()
            .map(|s| parse_exp(s).unwrap())
            .collect()
    }

    pub fn s_lower_grid(&self) -> Vec<Exp> {
        self.params
            .s_lower
            .iter()
            .map(|s| parse_exp(s).unwrap())
            .collect()
    }

    pub fn lambda(&self) -> BigRational {
        parse_rational(&self.params.lambda).unwrap()
    }

    pub fn sigma0(&self) -> Exp {
        parse_exp(&self.params.sigma0).unwrap()
    }

    pub fn eps(&self) -> Exp {
        parse_exp(&self.params.eps).unwrap()
    }

    pub fn big_c(&self) -> BigRational {
        parse_rational(&self.params.big_c).unwrap()
    }

    /// Cell count of a planar entry at ladder depth `n`.
    pub fn planar_cell_count(&self, cfg: &PlanarCfg, n: u32) -> Result<u128> {
        let template = DigitSystem::parse_spec(&cfg.system)
            .map_err(|e| anyhow::anyhow!("instance `{}`: {e}", cfg.name))?;
        let target_level = self.ladder.m * n;
        let m_sys = template.m();
        if !target_level.is_multiple_of(m_sys) {
            bail!(
                "instance `{}`: level {target_level} not divisible by {m_sys}",
                cfg.name
            );
        }
        Ok((template.digits.len() as u128).pow(target_level / m_sys))
    }

    /// The largest ladder depth `n <= n_limit` keeping the instance within
    /// `cap` cells, if any.
    pub fn capped_depth(&self, cfg: &PlanarCfg, n_limit: u32, cap: u128) -> Option<u32> {
        (self.ladder.n_min..=n_limit)
            .rev()
            .find(|&n| matches!(self.planar_cell_count(cfg, n), Ok(c) if c <= cap))
    }

    /// Instantiates a planar corpus entry at the depth matching ladder
    /// step `n` (so the instance resolution equals `Delta^n`).
    pub fn instantiate_planar(&self, cfg: &PlanarCfg, n: u32) -> Result<DigitSystem> {
        let template = DigitSystem::parse_spec(&cfg.system)
            .map_err(|e| anyhow::anyhow!("instance `{}`: {e}", cfg.name))?;
        let target_level = self.ladder.m * n;
        let m_sys = template.m();
        if !target_level.is_multiple_of(m_sys) {
            bail!(
                "instance `{}`: ladder level {target_level} is not divisible by the system base exponent {m_sys}",
                cfg.name
            );
        }
        DigitSystem::planar(template.base, template.digits.clone(), target_level / m_sys)
            .map_err(|e| anyhow::anyhow!("instance `{}`: {e}", cfg.name))
    }
}

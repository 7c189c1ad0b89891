//! Run configuration files.
//!
//! A run file is TOML with the sections `[model]`, `[baths]`, `[env]`,
//! `[sac]` and `[train]`. A top-level `preset = "<name>"` key loads one of
//! the shipped presets and overlays the file on top of it. Unknown keys are
//! rejected.
//!
//! | section | keys |
//! |---|---|
//! | `[model]` | `kind` (`two_level`, `fridge`, `oscillator`), `e0`, `delta`, `omega0`, `mass`, `cutoff`, `reference_u` |
//! | `[baths]` | `beta_hot`, `beta_cold`; flat rates `gamma_hot`, `gamma_cold`; or resonators `g`, `quality`, `omega_hot`, `omega_cold` |
//! | `[env]` | `dt`, `u_min`, `u_max`, `initial_u`, `max_substep`, `dynamics` (`fast`, `dense`) |
//! | `[sac]` | `hidden`, `gamma`, `learning_rate`, `batch_size`, `polyak`, `eps0`, `eps_decay`, `shared_noise`, `reward_scale` |
//! | `[train]` | `initial_random_steps`, `first_update_step`, `n_updates`, `buffer_size`, `total_steps`, `seed`, `cycle_warmup`, `cycle_horizon` |

use serde::{Deserialize, Serialize};

use crate::env::{ActionSpace, Dynamics, EnvConfig};
use crate::error::{Error, Result};
use crate::quantum::{BathCoupling, BathSpec, Baths, Model, OscillatorModel, DEFAULT_MAX_SUBSTEP};
use crate::sac::{EntropySchedule, SacConfig};
use crate::trainer::TrainConfig;

pub const PRESETS: [(&str, &str); 4] = [
    ("two_level", include_str!("../presets/two_level.toml")),
    ("fridge", include_str!("../presets/fridge.toml")),
    ("oscillator_narrow", include_str!("../presets/oscillator_narrow.toml")),
    ("oscillator_wide", include_str!("../presets/oscillator_wide.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            Error::Config(format!("unknown preset '{name}' (available: {})", names.join(", ")))
        })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: Option<String>,
    pub e0: Option<f64>,
    pub delta: Option<f64>,
    pub omega0: Option<f64>,
    pub mass: Option<f64>,
    pub cutoff: Option<usize>,
    pub reference_u: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathsSection {
    pub beta_hot: Option<f64>,
    pub beta_cold: Option<f64>,
    pub gamma_hot: Option<f64>,
    pub gamma_cold: Option<f64>,
    pub g: Option<f64>,
    pub quality: Option<f64>,
    pub omega_hot: Option<f64>,
    pub omega_cold: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub dt: Option<f64>,
    pub u_min: Option<f64>,
    pub u_max: Option<f64>,
    pub initial_u: Option<f64>,
    pub max_substep: Option<f64>,
    pub dynamics: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacSection {
    pub hidden: Option<Vec<usize>>,
    pub gamma: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub polyak: Option<f64>,
    pub eps0: Option<f64>,
    pub eps_decay: Option<f64>,
    pub shared_noise: Option<bool>,
    pub reward_scale: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub initial_random_steps: Option<u64>,
    pub first_update_step: Option<u64>,
    pub n_updates: Option<u64>,
    pub buffer_size: Option<usize>,
    pub total_steps: Option<u64>,
    pub seed: Option<u64>,
    pub cycle_warmup: Option<usize>,
    pub cycle_horizon: Option<usize>,
}

/// A run file as written, before preset resolution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub preset: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub baths: BathsSection,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub sac: SacSection,
    #[serde(default)]
    pub train: TrainSection,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_error(origin: &str, e: toml::de::Error) -> Error {
    Error::Config(format!("{origin}: {}", e.to_string().trim_end()))
}

impl RunConfigFile {
    /// Parses a run file and applies its preset, if any. `origin` names the
    /// source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        // Typed parse of the file alone so that errors point at its lines.
        let own: RunConfigFile = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
        let Some(preset) = own.preset.as_deref() else {
            return Ok(own);
        };
        let mut table: toml::Table = toml::from_str(preset_text(preset)?).map_err(|e| parse_error(preset, e))?;
        let over: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
        merge(&mut table, over);
        table
            .try_into()
            .map_err(|e: toml::de::Error| parse_error(origin, e))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name)?;
        let mut c = Self::parse(text, name)?;
        c.preset = Some(name.to_string());
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serialized form used for provenance headers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads the configuration back from the `#` provenance lines of an
    /// output file. Lines of the form `# config: ...` are ignored.
    pub fn from_provenance(text: &str) -> Result<Self> {
        let body: String = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.strip_prefix("# ").or_else(|| l.strip_prefix('#')).unwrap_or(""))
            .filter(|l| !l.starts_with("qtm "))
            .collect::<Vec<_>>()
            .join("\n");
        Self::parse(&body, "provenance header")
    }

    pub fn resolve(&self) -> Result<TrainConfig> {
        let env = self.env_config()?;
        let s = &self.sac;
        let sac = SacConfig {
            hidden: req(s.hidden.clone(), "sac", "hidden")?,
            gamma: req(s.gamma, "sac", "gamma")?,
            learning_rate: req(s.learning_rate, "sac", "learning_rate")?,
            batch_size: req(s.batch_size, "sac", "batch_size")?,
            polyak: req(s.polyak, "sac", "polyak")?,
            entropy: EntropySchedule {
                eps0: req(s.eps0, "sac", "eps0")?,
                decay: req(s.eps_decay, "sac", "eps_decay")?,
            },
            shared_noise: s.shared_noise.unwrap_or(false),
            reward_scale: s.reward_scale.unwrap_or(1.0),
        };
        let t = &self.train;
        let mut c = TrainConfig::new(env, sac);
        c.initial_random_steps = req(t.initial_random_steps, "train", "initial_random_steps")?;
        c.first_update_step = req(t.first_update_step, "train", "first_update_step")?;
        c.n_updates = req(t.n_updates, "train", "n_updates")?;
        c.buffer_size = req(t.buffer_size, "train", "buffer_size")?;
        c.total_steps = req(t.total_steps, "train", "total_steps")?;
        c.seed = t.seed.unwrap_or(0);
        c.cycle_warmup = t.cycle_warmup.unwrap_or(c.cycle_warmup);
        c.cycle_horizon = t.cycle_horizon.unwrap_or(c.cycle_horizon);
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let m = &self.model;
        let kind = req(m.kind.clone(), "model", "kind")?;
        let u_min = req(self.env.u_min, "env", "u_min")?;
        let u_max = req(self.env.u_max, "env", "u_max")?;
        let (model, actions) = match kind.as_str() {
            "two_level" => (
                Model::TwoLevel {
                    e0: req(m.e0, "model", "e0")?,
                },
                ActionSpace::engine(u_min, u_max),
            ),
            "fridge" => (
                Model::Fridge {
                    e0: req(m.e0, "model", "e0")?,
                    delta: req(m.delta, "model", "delta")?,
                },
                ActionSpace::refrigerator(u_min, u_max),
            ),
            "oscillator" => (
                Model::Oscillator(OscillatorModel {
                    omega0: req(m.omega0, "model", "omega0")?,
                    mass: m.mass.unwrap_or(1.0),
                    cutoff: req(m.cutoff, "model", "cutoff")?,
                    reference_u: m.reference_u.unwrap_or(0.5 * (u_min + u_max)),
                }),
                ActionSpace::engine(u_min, u_max),
            ),
            other => {
                return Err(Error::Config(format!(
                    "[model] kind: unknown model '{other}' (expected two_level, fridge or oscillator)"
                )))
            }
        };
        let actions = actions.map_err(|e| Error::Config(format!("[env]: {e}")))?;
        let b = &self.baths;
        let coupling = |side: &str, gamma: Option<f64>, omega: Option<f64>| -> Result<BathCoupling> {
            match (gamma, b.g, b.quality, omega) {
                (Some(rate), None, None, None) => Ok(BathCoupling::Rate(rate)),
                (None, Some(g), Some(quality), Some(omega)) => Ok(BathCoupling::Resonator { g, quality, omega }),
                _ => Err(Error::Config(format!(
                    "[baths]: {side} bath needs either gamma_{side} or all of g, quality, omega_{side}"
                ))),
            }
        };
        let baths = Baths {
            hot: BathSpec {
                beta: req(b.beta_hot, "baths", "beta_hot")?,
                coupling: coupling("hot", b.gamma_hot, b.omega_hot)?,
            },
            cold: BathSpec {
                beta: req(b.beta_cold, "baths", "beta_cold")?,
                coupling: coupling("cold", b.gamma_cold, b.omega_cold)?,
            },
        };
        let mut env = EnvConfig::new(model, baths, req(self.env.dt, "env", "dt")?, actions);
        env.initial_u = self.env.initial_u;
        env.max_substep = self.env.max_substep.unwrap_or(DEFAULT_MAX_SUBSTEP);
        env.dynamics = match self.env.dynamics.as_deref() {
            None | Some("fast") => Dynamics::Fast,
            Some("dense") => Dynamics::Dense,
            Some(other) => {
                return Err(Error::Config(format!(
                    "[env] dynamics: unknown value '{other}' (expected fast or dense)"
                )))
            }
        };
        env.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(env)
    }
}

fn req<T>(v: Option<T>, section: &str, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("[{section}] {key}: missing required key")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for (name, _) in PRESETS {
            let c = RunConfigFile::preset(name).unwrap().resolve().unwrap();
            assert_eq!(c.total_steps, 500_000);
        }
        let c = RunConfigFile::preset("oscillator_wide").unwrap().resolve().unwrap();
        assert_eq!(c.sac.learning_rate, 5e-4);
        assert_eq!(c.initial_random_steps, 10_000);
        assert_eq!(c.sac.entropy.eps0, 300.0);
    }

    #[test]
    fn overlay_on_preset() {
        let c = RunConfigFile::parse("preset = \"two_level\"\n[train]\ntotal_steps = 100\nseed = 7\n", "x")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(c.total_steps, 100);
        assert_eq!(c.seed, 7);
        assert_eq!(c.env.dt, 0.5);
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = RunConfigFile::parse("preset = \"fridge\"\n\n[env]\ndtt = 1.0\n", "run.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("dtt"), "{err}");
        let err = RunConfigFile::parse("[sac]\ngamma = \"high\"\n", "run.toml").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn missing_and_inconsistent_keys() {
        let err = RunConfigFile::parse("[model]\nkind = \"two_level\"\n", "x")
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("missing"), "{err}");
        let err = RunConfigFile::parse("preset = \"two_level\"\n[baths]\ng = 1.0\n", "x")
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("[baths]"), "{err}");
        assert!(RunConfigFile::parse("preset = \"nope\"\n", "x").is_err());
    }

    #[test]
    fn provenance_round_trip() {
        let c = RunConfigFile::preset("fridge").unwrap();
        let header: String = c.to_toml().lines().map(|l| format!("# {l}\n")).collect();
        let text = format!("# qtm 0.1.0 train\n{header}step,u,d,reward\n");
        let back = RunConfigFile::from_provenance(&text).unwrap();
        assert_eq!(back.resolve().unwrap(), c.resolve().unwrap());
    }
}

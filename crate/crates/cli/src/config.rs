//! Run configuration files.
//!
//! A config is TOML with a few top-level keys and one table for the chosen
//! study. Physics parameters live in an optional `model` sub-table whose
//! keys mirror the library configuration structs; anything omitted takes
//! its default, and the fully resolved config is written next to the
//! outputs.
//!
//! ```toml
//! study = "hst"
//! seed = 7
//!
//! [hst]
//! scheme = "SFN_CDD"
//! cdd_us = 1.0
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use ntsim_core::hst_link::{HstConfig, Scheme};
use ntsim_core::positioning::PositioningConfig;
use ntsim_core::qos::{default_predictors, Predictor, QosConfig, DEFAULT_HORIZONS_S};
use ntsim_core::scheduler::SweepConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Positioning,
    Hst,
    Scheduler,
    Qos,
}

impl Study {
    pub fn as_str(&self) -> &'static str {
        match self {
            Study::Positioning => "positioning",
            Study::Hst => "hst",
            Study::Scheduler => "scheduler",
            Study::Qos => "qos",
        }
    }
}

/// A scalar or a list in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositioningSection {
    pub snr_db: OneOrMany<f64>,
    pub nb_fused_bs: OneOrMany<usize>,
    pub model: PositioningConfig,
}

impl Default for PositioningSection {
    fn default() -> Self {
        Self {
            snr_db: OneOrMany::Many(vec![5.0, 15.0]),
            nb_fused_bs: OneOrMany::Many(vec![1, 2]),
            model: PositioningConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HstSection {
    pub scheme: OneOrMany<Scheme>,
    /// Overrides `model.cdd_delay_s`.
    pub cdd_us: Option<f64>,
    /// Overrides `model.anchor.snr_db`.
    pub anchor_snr_db: Option<f64>,
    pub model: HstConfig,
}

impl Default for HstSection {
    fn default() -> Self {
        Self {
            scheme: OneOrMany::Many(Scheme::ALL.to_vec()),
            cdd_us: None,
            anchor_snr_db: None,
            model: HstConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub densities_mbps_km2: Vec<f64>,
    pub drop_fractions: Vec<f64>,
    pub model: SweepConfig,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            densities_mbps_km2: vec![10.0, 250.0, 450.0, 700.0, 1000.0, 2000.0, 3000.0],
            drop_fractions: vec![0.0, 0.25, 0.5],
            model: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QosSection {
    pub horizons_s: Vec<f64>,
    pub predictors: Vec<Predictor>,
    /// CSV with columns `epoch_s, delivered_bits`; the rail trace is simulated when absent.
    pub trace_file: Option<PathBuf>,
    pub model: QosConfig,
}

impl Default for QosSection {
    fn default() -> Self {
        Self {
            horizons_s: DEFAULT_HORIZONS_S.to_vec(),
            predictors: default_predictors(),
            trace_file: None,
            model: QosConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    study: Study,
    seed: u64,
    output_dir: Option<PathBuf>,
    replications: Option<usize>,
    positioning: Option<PositioningSection>,
    hst: Option<HstSection>,
    scheduler: Option<SchedulerSection>,
    qos: Option<QosSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyParams {
    Positioning(PositioningSection),
    Hst(HstSection),
    Scheduler(SchedulerSection),
    Qos(QosSection),
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub study: Study,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub replications: usize,
    pub params: StudyParams,
}

#[derive(Serialize)]
struct Resolved<'a> {
    study: Study,
    seed: u64,
    replications: usize,
    #[serde(flatten)]
    params: &'a StudyParams,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Key named in a serde message such as "unknown field `snrr_db`, expected ...".
fn key_in(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn config_error(text: &str, err: toml::de::Error) -> CliError {
    let message = err.message().trim().to_string();
    let line = err.span().map(|s| line_of(text, s.start));
    let key = key_in(&message).map(str::to_string);
    CliError::Config { line, key, message }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Config {
        line: None,
        key: None,
        message: message.into(),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_error(text, e))?;
    let sections = [
        (Study::Positioning, raw.positioning.is_some()),
        (Study::Hst, raw.hst.is_some()),
        (Study::Scheduler, raw.scheduler.is_some()),
        (Study::Qos, raw.qos.is_some()),
    ];
    if let Some((other, _)) = sections.iter().find(|(s, present)| *present && *s != raw.study) {
        return Err(CliError::Config {
            line: None,
            key: Some(other.as_str().into()),
            message: format!("table [{}] given for study {}", other.as_str(), raw.study.as_str()),
        });
    }
    let replications = raw
        .replications
        .unwrap_or(if raw.study == Study::Scheduler { 5 } else { 1 });
    if replications == 0 {
        return Err(invalid("replications must be at least 1"));
    }
    if replications != 1 && raw.study != Study::Scheduler {
        return Err(CliError::Config {
            line: None,
            key: Some("replications".into()),
            message: format!("{} runs a single replication", raw.study.as_str()),
        });
    }
    let params = match raw.study {
        Study::Positioning => StudyParams::Positioning(raw.positioning.unwrap_or_default()),
        Study::Hst => {
            let mut s = raw.hst.unwrap_or_default();
            if let Some(us) = s.cdd_us {
                s.model.cdd_delay_s = us * 1e-6;
            }
            if let Some(db) = s.anchor_snr_db {
                s.model.anchor.snr_db = db;
            }
            StudyParams::Hst(s)
        }
        Study::Scheduler => StudyParams::Scheduler(raw.scheduler.unwrap_or_default()),
        Study::Qos => StudyParams::Qos(raw.qos.unwrap_or_default()),
    };
    let cfg = RunConfig {
        study: raw.study,
        seed: raw.seed,
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| PathBuf::from("out").join(raw.study.as_str())),
        replications,
        params,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match &self.params {
            StudyParams::Positioning(p) => {
                if p.snr_db.to_vec().is_empty() || p.nb_fused_bs.to_vec().is_empty() {
                    return Err(invalid("positioning needs at least one snr_db and nb_fused_bs"));
                }
                if p.nb_fused_bs.to_vec().contains(&0) {
                    return Err(invalid("nb_fused_bs must be at least 1"));
                }
                p.model.deployment()?;
                p.model.trajectory()?;
            }
            StudyParams::Hst(h) => {
                if h.scheme.to_vec().is_empty() {
                    return Err(invalid("hst needs at least one scheme"));
                }
                h.model.validate()?;
            }
            StudyParams::Scheduler(s) => {
                if s.densities_mbps_km2.is_empty() || s.drop_fractions.is_empty() {
                    return Err(invalid("scheduler needs densities and drop fractions"));
                }
                if s.densities_mbps_km2.iter().any(|d| !(*d >= 0.0)) {
                    return Err(invalid("densities must be non-negative"));
                }
                for &rho in &s.drop_fractions {
                    ntsim_core::scheduler::DropPolicy::quantile(rho)?;
                }
                s.model.validate()?;
            }
            StudyParams::Qos(q) => {
                if q.horizons_s.is_empty() || q.horizons_s.iter().any(|h| !(*h > 0.0)) {
                    return Err(invalid("qos horizons must be positive and non-empty"));
                }
                if q.predictors.is_empty() {
                    return Err(invalid("qos needs at least one predictor"));
                }
                q.predictors.iter().try_for_each(Predictor::validate)?;
                q.model.validate()?;
            }
        }
        Ok(())
    }

    /// Canonical TOML of the resolved config; its hash identifies a run.
    /// The output directory is left out so relocating a run keeps the hash.
    pub fn to_toml(&self) -> Result<String, CliError> {
        let resolved = Resolved {
            study: self.study,
            seed: self.seed,
            replications: self.replications,
            params: &self.params,
        };
        toml::to_string(&resolved).map_err(|e| invalid(format!("cannot serialize config: {e}")))
    }
}

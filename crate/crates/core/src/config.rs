//! Experiment configuration: a TOML file, scale presets and command-line
//! overrides, validated with line-anchored messages.
//!
//! ```toml
//! domain = "nav1"                 # inventory | nav1 | nav2
//! algorithms = ["pg", "cpg", "rcpg-value", "rcpg-constraint", "rcpg-lagrangian", "adv-rcpg"]
//! preset = "desk"                 # desk | paper
//! seeds = [0, 1, 2, 3, 4]         # default: 0..N for the preset
//! delta = 0.1
//! out = "runs/nav1"
//! jobs = 4
//!
//! [estimation]
//! episodes = 100                  # default per domain
//! seed = 0
//!
//! [training]
//! episodes = 1000                 # default per preset
//!
//! [test]
//! runs = 20                       # greedy rollouts per setting and seed
//!
//! [grid]
//! cells = "cells.csv"             # optional x,y,kind override of the cell tables
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use log::warn;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::envs::Domain;
use crate::error::Error;
use crate::trainers::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }

    pub fn seeds(self) -> Vec<u64> {
        match self {
            Preset::Desk => (0..5).collect(),
            Preset::Paper => (0..20).collect(),
        }
    }

    pub fn training_episodes(self) -> usize {
        match self {
            Preset::Desk => 1000,
            Preset::Paper => 5000,
        }
    }

    pub fn test_runs(self) -> usize {
        match self {
            Preset::Desk => 20,
            Preset::Paper => 50,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::InvalidArgument(format!("unknown preset {s:?}"))),
        }
    }
}

/// A single validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl From<Vec<ConfigIssue>> for Error {
    fn from(issues: Vec<ConfigIssue>) -> Self {
        Error::Config(issues.iter().map(ToString::to_string).collect())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimation {
    episodes: Option<Spanned<i64>>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    episodes: Option<Spanned<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTest {
    runs: Option<Spanned<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    cells: Option<PathBuf>,
}

/// The file as written, before presets and overrides.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    domain: Option<Spanned<String>>,
    algorithms: Option<Vec<Spanned<String>>>,
    preset: Option<Spanned<String>>,
    seeds: Option<Vec<u64>>,
    delta: Option<Spanned<f64>>,
    out: Option<PathBuf>,
    jobs: Option<Spanned<i64>>,
    #[serde(default)]
    estimation: RawEstimation,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    test: RawTest,
    #[serde(default)]
    grid: RawGrid,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seeds: Option<Vec<u64>>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub algorithms: Vec<Algorithm>,
    pub preset: Preset,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub estimation_episodes: usize,
    pub estimation_seed: u64,
    pub training_episodes: usize,
    pub test_runs: usize,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub cells: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for a domain at the given scale.
    pub fn preset(domain: Domain, preset: Preset) -> Self {
        Self {
            domain,
            algorithms: Algorithm::ALL.to_vec(),
            preset,
            seeds: preset.seeds(),
            delta: 0.1,
            estimation_episodes: domain.estimation_episodes(),
            estimation_seed: 0,
            training_episodes: preset.training_episodes(),
            test_runs: preset.test_runs(),
            out: None,
            jobs: None,
            cells: None,
        }
    }

    /// Hash of everything that determines the estimated uncertainty set.
    pub fn estimation_hash(&self, cells_text: Option<&str>) -> String {
        let key = format!(
            "domain={};delta={:?};episodes={};seed={};cells={}",
            self.domain,
            self.delta,
            self.estimation_episodes,
            self.estimation_seed,
            cells_text.unwrap_or("")
        );
        hex::encode(Sha256::digest(key.as_bytes()))
    }

    /// Hash of everything that determines trained policies and test results
    /// (seeds and algorithm lists excluded so runs can be extended).
    pub fn run_hash(&self, cells_text: Option<&str>) -> String {
        let key = format!(
            "{};training={};runs={}",
            self.estimation_hash(cells_text),
            self.training_episodes,
            self.test_runs
        );
        hex::encode(Sha256::digest(key.as_bytes()))
    }
}

/// Outcome of validation: the config plus any warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses the file structure (syntax, unknown keys and types).
pub fn parse_raw(text: &str) -> Result<RawConfig, Vec<ConfigIssue>> {
    toml::from_str(text).map_err(|e| {
        vec![ConfigIssue {
            line: e.span().map(|s| line_of(text, s.start)),
            field: "config".into(),
            message: e.message().to_string(),
        }]
    })
}

/// Applies presets and overrides to a parsed file and checks every range,
/// collecting all problems before failing.
pub fn resolve(text: &str, raw: RawConfig, overrides: &Overrides) -> Result<Validated, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let at = |s: std::ops::Range<usize>| Some(line_of(text, s.start));
    let mut issue = |line: Option<usize>, field: &str, message: String| {
        issues.push(ConfigIssue {
            line,
            field: field.into(),
            message,
        })
    };

    let domain = match &raw.domain {
        None => {
            issue(None, "domain", "missing (inventory, nav1 or nav2)".into());
            None
        }
        Some(d) => match d.get_ref().parse::<Domain>() {
            Ok(v) => Some(v),
            Err(_) => {
                issue(at(d.span()), "domain", format!("unknown domain {:?}", d.get_ref()));
                None
            }
        },
    };

    let preset = match (&overrides.preset, &raw.preset) {
        (Some(p), _) => *p,
        (None, Some(p)) => match p.get_ref().parse::<Preset>() {
            Ok(v) => v,
            Err(_) => {
                issue(at(p.span()), "preset", format!("unknown preset {:?} (desk or paper)", p.get_ref()));
                Preset::Desk
            }
        },
        (None, None) => Preset::Desk,
    };

    let algorithms = match (&overrides.algorithms, &raw.algorithms) {
        (Some(list), _) => list.clone(),
        (None, Some(list)) => {
            let mut out = Vec::new();
            for tag in list {
                match tag.get_ref().parse::<Algorithm>() {
                    Ok(a) if !out.contains(&a) => out.push(a),
                    Ok(_) => {}
                    Err(_) => issue(at(tag.span()), "algorithms", format!("unknown algorithm {:?}", tag.get_ref())),
                }
            }
            out
        }
        (None, None) => Algorithm::ALL.to_vec(),
    };
    if algorithms.is_empty() && raw.algorithms.is_some() && overrides.algorithms.is_none() {
        issue(None, "algorithms", "no algorithms selected".into());
    }

    let seeds = match (&overrides.seeds, &raw.seeds) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s.clone(),
        (None, None) => {
            let seeds = preset.seeds();
            let msg = format!("seeds not given; using {} preset seeds {:?}", preset.as_str(), seeds);
            warn!("{msg}");
            warnings.push(msg);
            seeds
        }
    };
    if seeds.is_empty() {
        issue(None, "seeds", "at least one seed is required".into());
    }

    let delta = match &raw.delta {
        Some(d) => {
            let v = *d.get_ref();
            if !(v > 0.0 && v < 1.0) {
                issue(at(d.span()), "delta", format!("must lie in (0, 1), got {v}"));
            }
            v
        }
        None => 0.1,
    };

    let mut positive = |field: &str, value: &Option<Spanned<i64>>, default: usize| -> usize {
        match value {
            Some(v) if *v.get_ref() > 0 => *v.get_ref() as usize,
            Some(v) => {
                issue(at(v.span()), field, format!("must be positive, got {}", v.get_ref()));
                default
            }
            None => default,
        }
    };
    let estimation_episodes = positive(
        "estimation.episodes",
        &raw.estimation.episodes,
        domain.map_or(100, Domain::estimation_episodes),
    );
    let training_episodes = positive("training.episodes", &raw.training.episodes, preset.training_episodes());
    let test_runs = positive("test.runs", &raw.test.runs, preset.test_runs());
    let file_jobs = raw.jobs.as_ref().map(|_| positive("jobs", &raw.jobs, 1));
    let jobs = overrides.jobs.or(file_jobs);
    if overrides.jobs == Some(0) {
        issue(None, "jobs", "must be positive".into());
    }

    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(Validated {
        config: ExperimentConfig {
            domain: domain.expect("checked above"),
            algorithms,
            preset,
            seeds,
            delta,
            estimation_episodes,
            estimation_seed: raw.estimation.seed.unwrap_or(0),
            training_episodes,
            test_runs,
            out: overrides.out.clone().or(raw.out),
            jobs,
            cells: raw.grid.cells,
        },
        warnings,
    })
}

/// Parses and validates a config file without overrides.
pub fn validate_config(text: &str) -> Result<Validated, Vec<ConfigIssue>> {
    validate_with(text, &Overrides::default())
}

pub fn validate_with(text: &str, overrides: &Overrides) -> Result<Validated, Vec<ConfigIssue>> {
    resolve(text, parse_raw(text)?, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_out_of_range_names_the_field() {
        let text = "domain = \"nav1\"\nseeds = [0]\ndelta = 1.5\n";
        let issues = validate_config(text).unwrap_err();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "delta");
        assert_eq!(issues[0].line, Some(3));
        assert!(issues[0].to_string().starts_with("line 3: delta"));
    }

    #[test]
    fn errors_are_aggregated() {
        let text = "domain = \"maze\"\nalgorithms = [\"pg\", \"ppo\"]\ndelta = 0.0\n[training]\nepisodes = 0\n";
        let issues = validate_config(text).unwrap_err();
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, ["domain", "algorithms", "delta", "training.episodes"]);
        assert_eq!(issues[1].line, Some(2));
        assert_eq!(issues[3].line, Some(5));
    }

    #[test]
    fn missing_seeds_default_with_warning() {
        let v = validate_config("domain = \"nav2\"\n").unwrap();
        assert_eq!(v.config.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(v.warnings.len(), 1);
        assert_eq!(v.config.estimation_episodes, 10_000);
        assert_eq!(v.config.algorithms.len(), 6);
    }

    #[test]
    fn paper_preset_for_inventory() {
        let v = validate_config("domain = \"inventory\"\npreset = \"paper\"\n").unwrap();
        let c = v.config;
        assert_eq!((c.estimation_episodes, c.training_episodes, c.test_runs), (100, 5000, 50));
        assert_eq!(c.seeds.len(), 20);
        assert_eq!(crate::eval::TestGrid::standard(c.domain, c.test_runs).settings.len(), 9);
    }

    #[test]
    fn syntax_and_unknown_keys_are_line_anchored() {
        let issues = validate_config("domain = \"nav1\"\nepisodes = 3\n").unwrap_err();
        assert_eq!(issues[0].line, Some(2));
        assert!(validate_config("domain = = 1").is_err());
    }

    #[test]
    fn overrides_win() {
        let text = "domain = \"nav1\"\nseeds = [1, 2]\npreset = \"paper\"\n";
        let o = Overrides {
            preset: Some(Preset::Desk),
            seeds: Some(vec![9]),
            algorithms: Some(vec![Algorithm::Cpg]),
            out: Some("x".into()),
            jobs: Some(2),
        };
        let c = validate_with(text, &o).unwrap().config;
        assert_eq!(c.preset, Preset::Desk);
        assert_eq!(c.seeds, vec![9]);
        assert_eq!(c.algorithms, vec![Algorithm::Cpg]);
        assert_eq!(c.training_episodes, 1000);
        assert_eq!(c.jobs, Some(2));
    }

    #[test]
    fn hashes_track_relevant_fields() {
        let a = ExperimentConfig::preset(Domain::Nav1, Preset::Desk);
        let mut b = a.clone();
        b.seeds = vec![42];
        assert_eq!(a.run_hash(None), b.run_hash(None));
        b.delta = 0.2;
        assert_ne!(a.estimation_hash(None), b.estimation_hash(None));
        assert_ne!(a.estimation_hash(None), a.estimation_hash(Some("1,1,grey")));
    }
}

//! Three-phase experiment runner: model estimation, training, testing.
//!
//! Output directory layout:
//!
//! ```text
//! <out>/manifest.toml              run bookkeeping (hashes, seeds, completed runs)
//! <out>/uncertainty.bin, alpha.csv estimated nominal model and budgets
//! <out>/checkpoints/<algo>-seed<k>.policy[.adversary]
//! <out>/training/<algo>-seed<k>.csv
//! <out>/results.csv, summary.csv, charts/
//! ```

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::diffnet::DiffNet;
use crate::envs::{CellTables, Domain, Task};
use crate::error::{Error, Result};
use crate::eval::{
    eval_budget, read_results_csv, run_test_suite, summarize, write_charts, write_results_csv,
    write_summary_csv, PolicyEntry, SummaryRow, TestGrid,
};
use crate::mdp::Rcmdp;
use crate::robustness::UncertaintySet;
use crate::trainers::{run_training, stream_rng, write_metrics_csv, Algorithm, TrainerConfig};

pub const MANIFEST_VERSION: u32 = 1;
const ESTIMATION_STREAM: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedRun {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub checkpoint: String,
    pub metrics: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub crate_version: String,
    pub domain: String,
    pub preset: String,
    pub estimation_hash: String,
    pub run_hash: String,
    pub training_episodes: usize,
    pub test_runs: usize,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub completed: Vec<CompletedRun>,
    pub tested: bool,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {}", path.display(), e.message())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        let tmp = path.with_extension("toml.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn is_done(&self, algorithm: Algorithm, seed: u64) -> bool {
        self.completed.iter().any(|c| c.algorithm == algorithm && c.seed == seed)
    }
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// The task of a config, with the cell override applied. Also returns the
/// override text so it can enter the cache key.
pub fn build_task(cfg: &ExperimentConfig) -> Result<(Task, Option<String>)> {
    let mut task = cfg.domain.task();
    let Some(path) = &cfg.cells else {
        return Ok((task, None));
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match &mut task {
        Task::Grid(spec) => spec.cells = CellTables::from_csv(path)?,
        Task::Inventory(_) => {
            return Err(Error::Config(vec![format!(
                "grid.cells: cell tables do not apply to {}",
                cfg.domain
            )]))
        }
    }
    Ok((task, Some(text)))
}

/// Phase 1 without caching: random-policy data on the data dynamics, then
/// the nominal model and Hoeffding budgets.
pub fn estimate_uncertainty(task: &Task, episodes: usize, delta: f64, seed: u64) -> Result<UncertaintySet> {
    let mut rng = stream_rng(seed, ESTIMATION_STREAM);
    let data = task.collect_random(&task.data_dynamics(), episodes, &mut rng);
    UncertaintySet::from_trajectories(
        &data,
        task.n_states(),
        task.n_actions(),
        &task.supports(),
        task.hoeffding_outcomes(),
        delta,
    )
}

fn run_stem(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}-seed{seed}")
}

/// An opened, locked output directory for one experiment.
#[derive(Debug)]
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub task: Task,
    cells_text: Option<String>,
    manifest: Manifest,
    _lock: RunLock,
}

impl Pipeline {
    /// Creates or reopens `cfg.out`. An existing manifest must carry the
    /// same format version and run hash.
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        let out = cfg
            .out
            .clone()
            .ok_or_else(|| Error::Config(vec!["out: no output directory given".into()]))?;
        let (task, cells_text) = build_task(&cfg)?;
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let lock = RunLock::acquire(&out)?;
        let path = out.join("manifest.toml");
        let run_hash = cfg.run_hash(cells_text.as_deref());
        let manifest = if path.exists() {
            let mut m = Manifest::load(&path)?;
            if m.version != MANIFEST_VERSION {
                return Err(Error::CacheMismatch {
                    path,
                    reason: format!("manifest version {} (expected {MANIFEST_VERSION})", m.version),
                });
            }
            if m.run_hash != run_hash {
                return Err(Error::CacheMismatch {
                    path,
                    reason: "configuration changed since this directory was created".into(),
                });
            }
            for s in &cfg.seeds {
                if !m.seeds.contains(s) {
                    m.seeds.push(*s);
                }
            }
            for a in &cfg.algorithms {
                if !m.algorithms.contains(a) {
                    m.algorithms.push(*a);
                }
            }
            m
        } else {
            Manifest {
                version: MANIFEST_VERSION,
                crate_version: env!("CARGO_PKG_VERSION").into(),
                domain: cfg.domain.to_string(),
                preset: cfg.preset.as_str().into(),
                estimation_hash: cfg.estimation_hash(cells_text.as_deref()),
                run_hash,
                training_episodes: cfg.training_episodes,
                test_runs: cfg.test_runs,
                seeds: cfg.seeds.clone(),
                algorithms: cfg.algorithms.clone(),
                completed: Vec::new(),
                tested: false,
            }
        };
        manifest.save(&path)?;
        Ok(Self {
            cfg,
            out,
            task,
            cells_text,
            manifest,
            _lock: lock,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.toml")
    }

    /// Phase 1. Returns the set and whether it came from the cache.
    pub fn estimate(&self) -> Result<(UncertaintySet, bool)> {
        let path = self.out.join("uncertainty.bin");
        let key = self.cfg.estimation_hash(self.cells_text.as_deref());
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let (label, set) = UncertaintySet::from_bytes(&bytes).map_err(|e| Error::CacheMismatch {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            if label != key {
                return Err(Error::CacheMismatch {
                    path,
                    reason: "cached model was estimated with different settings".into(),
                });
            }
            info!("phase 1: cache hit {}", path.display());
            return Ok((set, true));
        }
        info!(
            "phase 1: {} random episodes on {}",
            self.cfg.estimation_episodes, self.cfg.domain
        );
        let set = estimate_uncertainty(
            &self.task,
            self.cfg.estimation_episodes,
            self.cfg.delta,
            self.cfg.estimation_seed,
        )?;
        fs::write(&path, set.to_bytes(&key)).map_err(|e| Error::io(&path, e))?;
        set.write_csv(&self.out.join("alpha.csv"))?;
        Ok((set, false))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.cfg.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    /// Phase 2. Trains every (algorithm, seed) not yet recorded in the
    /// manifest and returns the pairs trained now.
    pub fn train(&mut self, uset: &UncertaintySet) -> Result<Vec<(Algorithm, u64)>> {
        let ckpt = self.out.join("checkpoints");
        let logs = self.out.join("training");
        for d in [&ckpt, &logs] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let todo: Vec<(Algorithm, u64)> = self
            .cfg
            .algorithms
            .iter()
            .flat_map(|&a| self.cfg.seeds.iter().map(move |&s| (a, s)))
            .filter(|&(a, s)| {
                !(self.manifest.is_done(a, s) && ckpt.join(format!("{}.policy", run_stem(a, s))).exists())
            })
            .collect();
        info!("phase 2: {} training runs", todo.len());
        let manifest = Mutex::new(self.manifest.clone());
        let manifest_path = self.manifest_path();
        let (task, cfg) = (&self.task, &self.cfg);
        let results: Vec<Result<()>> = self.pool()?.install(|| {
            todo.par_iter()
                .map(|&(algorithm, seed)| {
                    let tc = TrainerConfig::new(algorithm, cfg.training_episodes, seed, cfg.domain.initial_multiplier());
                    let outcome = run_training(&tc, task, &uset.nominal, Some(uset))?;
                    let stem = run_stem(algorithm, seed);
                    let policy_path = ckpt.join(format!("{stem}.policy"));
                    if let Some(adv) = &outcome.adversary {
                        adv.save(&ckpt.join(format!("{stem}.policy.adversary")))?;
                    }
                    let metrics_path = logs.join(format!("{stem}.csv"));
                    write_metrics_csv(&metrics_path, &outcome.metrics)?;
                    outcome.policy.save(&policy_path)?;
                    let mut m = manifest.lock().expect("manifest lock poisoned");
                    m.completed.retain(|c| !(c.algorithm == algorithm && c.seed == seed));
                    m.completed.push(CompletedRun {
                        algorithm,
                        seed,
                        checkpoint: format!("checkpoints/{stem}.policy"),
                        metrics: format!("training/{stem}.csv"),
                    });
                    m.completed.sort_by_key(|c| (c.algorithm, c.seed));
                    m.save(&manifest_path)?;
                    info!("trained {stem}");
                    Ok(())
                })
                .collect()
        });
        self.manifest = manifest.into_inner().expect("manifest lock poisoned");
        results.into_iter().collect::<Result<Vec<()>>>()?;
        Ok(todo)
    }

    /// Loads the policy checkpoints of every configured (algorithm, seed).
    pub fn load_policies(&self) -> Result<Vec<PolicyEntry>> {
        let mut out = Vec::new();
        for &algorithm in &self.cfg.algorithms {
            for &seed in &self.cfg.seeds {
                let path = self
                    .out
                    .join("checkpoints")
                    .join(format!("{}.policy", run_stem(algorithm, seed)));
                if !path.exists() {
                    return Err(Error::Missing(format!("checkpoint {}", path.display())));
                }
                out.push(PolicyEntry {
                    algorithm,
                    seed,
                    policy: DiffNet::load(&path)?,
                });
            }
        }
        Ok(out)
    }

    /// Phase 3. Writes `results.csv`, `summary.csv` and the charts.
    pub fn test(&mut self) -> Result<Vec<SummaryRow>> {
        let policies = self.load_policies()?;
        let grid = TestGrid::standard(self.cfg.domain, self.cfg.test_runs);
        info!("phase 3: {} policies x {} settings", policies.len(), grid.settings.len());
        let rows = self.pool()?.install(|| run_test_suite(&self.task, &grid, &policies))?;
        write_results_csv(&self.out.join("results.csv"), &rows)?;
        let summary = write_reports(&self.out, &rows, eval_budget(&self.task))?;
        self.manifest.tested = true;
        self.manifest.save(&self.manifest_path())?;
        Ok(summary)
    }

    /// All three phases.
    pub fn run(&mut self) -> Result<Vec<SummaryRow>> {
        let (uset, _) = self.estimate()?;
        self.train(&uset)?;
        self.test()
    }
}

fn write_reports(out: &Path, rows: &[crate::eval::ResultRow], d_eval: f64) -> Result<Vec<SummaryRow>> {
    let summary = summarize(rows, d_eval);
    write_summary_csv(&out.join("summary.csv"), &summary)?;
    write_charts(&out.join("charts"), &summary)?;
    Ok(summary)
}

/// Recomputes `summary.csv` and the charts from an existing `results.csv`.
pub fn report(out: &Path) -> Result<Vec<SummaryRow>> {
    let _lock = RunLock::acquire(out)?;
    let manifest = Manifest::load(&out.join("manifest.toml"))?;
    let domain: Domain = manifest.domain.parse()?;
    let rows = read_results_csv(&out.join("results.csv"))?;
    write_reports(out, &rows, eval_budget(&domain.task()))
}

//! Policy test phase: greedy rollouts of trained policies on perturbed
//! dynamics, penalised return, aggregation and chart output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffnet::DiffNet;
use crate::envs::{Demand, Domain, Dynamics, FailureModel, Task};
use crate::error::{Error, Result};
use crate::mdp::{undiscounted_budget, Rcmdp};
use crate::trainers::Algorithm;

/// Evaluation weight on the budget excess.
pub const PENALTY_WEIGHT: f64 = 500.0;

/// Success probability used by the random-offset and arrow tests.
pub const TEST_B_SUCCESS: f64 = 0.8;

/// How the test dynamics differ from the data dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Demand(Demand),
    /// Action succeeds with the given probability, otherwise stand still.
    SuccessProb(f64),
    /// `count` random `(s, a)` pairs fail to a random neighbour.
    RandomOffsets(usize),
    /// `count` random states fail along the drawn worst-case arrows.
    WorstCaseArrows(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSetting {
    pub test_id: String,
    pub param_name: String,
    pub param_value: String,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestGrid {
    pub domain: Domain,
    pub settings: Vec<TestSetting>,
    /// Greedy rollouts per (setting, training seed).
    pub runs: usize,
}

fn fmt_value(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl TestGrid {
    /// The standard test axes of a domain.
    pub fn standard(domain: Domain, runs: usize) -> Self {
        let p_axis = [0.6, 0.7, 0.8, 0.9, 1.0];
        let success = |id: &str| {
            p_axis.map(|p| TestSetting {
                test_id: id.to_string(),
                param_name: "p_success".into(),
                param_value: fmt_value(p),
                perturbation: Perturbation::SuccessProb(p),
            })
        };
        let counted = |id: &str, axis: [usize; 5], make: fn(usize) -> Perturbation| {
            axis.map(|n| TestSetting {
                test_id: id.to_string(),
                param_name: "n_eps".into(),
                param_value: n.to_string(),
                perturbation: make(n),
            })
        };
        let settings = match domain {
            Domain::Inventory => {
                let s = match domain.task() {
                    Task::Inventory(spec) => spec.n_states as f64,
                    Task::Grid(_) => unreachable!(),
                };
                let mut out = Vec::new();
                for mean in [s / 6.0, s / 4.0, s / 3.0] {
                    for std in [s / 8.0, s / 6.0, s / 4.0] {
                        out.push(TestSetting {
                            test_id: "im".into(),
                            param_name: "mu/sigma".into(),
                            param_value: format!("{}/{}", fmt_value(mean), fmt_value(std)),
                            perturbation: Perturbation::Demand(Demand { mean, std }),
                        });
                    }
                }
                out
            }
            Domain::Nav1 => {
                let mut out = success("1A").to_vec();
                out.extend(counted("1B", [5, 10, 20, 50, 100], Perturbation::RandomOffsets));
                out
            }
            Domain::Nav2 => {
                let mut out = success("2A").to_vec();
                out.extend(counted("2B", [5, 10, 15, 20, 25], Perturbation::WorstCaseArrows));
                out
            }
        };
        Self {
            domain,
            settings,
            runs,
        }
    }
}

/// Draws the concrete test dynamics of one run.
pub fn realise<R: Rng + ?Sized>(task: &Task, perturbation: Perturbation, rng: &mut R) -> Result<Dynamics> {
    match (task, perturbation) {
        (Task::Inventory(_), Perturbation::Demand(d)) => Ok(Dynamics::Demand(d)),
        (Task::Grid(_), Perturbation::SuccessProb(p)) => Ok(Dynamics::Grid {
            p_success: p,
            failure: FailureModel::StandStill,
        }),
        (Task::Grid(spec), Perturbation::RandomOffsets(count)) => {
            let n_pairs = task.n_states() * task.n_actions();
            let mut picked: Vec<usize> = index::sample(rng, n_pairs, count.min(n_pairs)).into_vec();
            picked.sort_unstable();
            let table = picked
                .into_iter()
                .map(|i| {
                    let (s, a) = (i / task.n_actions(), i % task.n_actions());
                    let around = spec.neighbourhood(spec.cell(s));
                    ((s, a), around[rng.random_range(0..around.len())])
                })
                .collect();
            Ok(Dynamics::Grid {
                p_success: TEST_B_SUCCESS,
                failure: FailureModel::RandomOffset(table),
            })
        }
        (Task::Grid(_), Perturbation::WorstCaseArrows(count)) => {
            let n = task.n_states();
            let states = index::sample(rng, n, count.min(n)).into_iter().collect();
            Ok(Dynamics::Grid {
                p_success: TEST_B_SUCCESS,
                failure: FailureModel::WorstCaseArrow(states),
            })
        }
        _ => Err(Error::InvalidArgument(format!(
            "perturbation {perturbation:?} does not apply to this task"
        ))),
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs the policy greedily from the initial state for up to `T` steps and
/// returns the undiscounted `(Σ r, Σ c)`.
pub fn greedy_rollout(
    policy: &DiffNet,
    task: &Task,
    dynamics: &Dynamics,
    rng: &mut dyn rand::RngCore,
) -> Result<(f64, f64)> {
    let (mut v, mut c) = (0.0, 0.0);
    let mut s = task.initial_state();
    for _ in 0..task.horizon() {
        if task.is_terminal(s) {
            break;
        }
        let a = argmax(&policy.forward(&task.policy_input(s))?);
        let (next, r, cost) = task.step(dynamics, s, a, rng);
        v += r;
        c += cost;
        s = next;
    }
    Ok((v, c))
}

/// `V − λ̄ max(0, C − d)`.
pub fn penalised_return(value: f64, cost: f64, d_eval: f64, weight: f64) -> f64 {
    value - weight * (cost - d_eval).max(0.0)
}

pub fn overshoot(cost: f64, d_eval: f64) -> f64 {
    cost - d_eval
}

/// Budget on the undiscounted scale used at test time.
pub fn eval_budget(task: &Task) -> f64 {
    undiscounted_budget(task.budget(), task.discount(), task.horizon())
}

/// One greedy test episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub domain: String,
    pub test_id: String,
    pub param_name: String,
    pub param_value: String,
    pub seed: u64,
    pub repeat: usize,
    pub value: f64,
    pub constraint_cost: f64,
    pub overshoot: f64,
}

/// A trained policy to be tested.
#[derive(Debug, Clone)]
pub struct PolicyEntry {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub policy: DiffNet,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG seed of one test run. Independent of the algorithm so that every
/// policy meets the same perturbations.
pub fn run_seed(domain: Domain, setting: usize, seed: u64, repeat: usize) -> u64 {
    [domain as u64, setting as u64, seed, repeat as u64]
        .into_iter()
        .fold(0x5EED, |acc, x| splitmix(acc ^ splitmix(x)))
}

/// Rolls every policy out `grid.runs` times on every setting, in parallel.
/// Rows come back sorted by (algorithm, setting, seed, repeat).
pub fn run_test_suite(task: &Task, grid: &TestGrid, policies: &[PolicyEntry]) -> Result<Vec<ResultRow>> {
    if policies.is_empty() {
        return Err(Error::Missing("no trained policies to test".into()));
    }
    let d_eval = eval_budget(task);
    let mut order: Vec<&PolicyEntry> = policies.iter().collect();
    order.sort_by_key(|p| (p.algorithm, p.seed));
    let jobs: Vec<(&PolicyEntry, usize, usize)> = order
        .iter()
        .flat_map(|p| {
            (0..grid.settings.len()).flat_map(move |i| (0..grid.runs).map(move |r| (*p, i, r)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(entry, i, repeat)| {
            let setting = &grid.settings[i];
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(grid.domain, i, entry.seed, repeat));
            let dynamics = realise(task, setting.perturbation, &mut rng)?;
            let (value, cost) = greedy_rollout(&entry.policy, task, &dynamics, &mut rng)?;
            Ok(ResultRow {
                algorithm: entry.algorithm,
                domain: grid.domain.to_string(),
                test_id: setting.test_id.clone(),
                param_name: setting.param_name.clone(),
                param_value: setting.param_value.clone(),
                seed: entry.seed,
                repeat,
                value,
                constraint_cost: cost,
                overshoot: overshoot(cost, d_eval),
            })
        })
        .collect()
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Mean and standard error of the mean (zero for fewer than two samples).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregate over training seeds for one setting, or pooled over all the
/// settings of a test when `param_value` is `"all"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub domain: String,
    pub test_id: String,
    pub param_name: String,
    pub param_value: String,
    pub seeds: usize,
    pub value_mean: f64,
    pub value_stderr: f64,
    pub cost_mean: f64,
    pub cost_stderr: f64,
    pub overshoot_mean: f64,
    pub overshoot_stderr: f64,
    pub penalised_mean: f64,
    pub penalised_stderr: f64,
}

/// Header line recorded at the top of `summary.csv`.
pub const POOLING_NOTE: &str =
    "# pooled rows (param_value=all): R_pen per (seed, setting) from run means, averaged uniformly over settings, stderr over seeds";

type SettingKey = (Algorithm, String, String, String, String);

/// Per-setting and per-test aggregates. Standard errors are taken over the
/// per-seed means; the result does not depend on row order.
pub fn summarize(rows: &[ResultRow], d_eval: f64) -> Vec<SummaryRow> {
    // (algorithm, domain, test, param_name, param_value) -> seed -> (Σv, Σc, n)
    let mut cells: BTreeMap<SettingKey, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.algorithm, &a.domain, &a.test_id, &a.param_value, a.seed, a.repeat)
            .cmp(&(b.algorithm, &b.domain, &b.test_id, &b.param_value, b.seed, b.repeat))
    });
    for r in sorted {
        let key = (
            r.algorithm,
            r.domain.clone(),
            r.test_id.clone(),
            r.param_name.clone(),
            r.param_value.clone(),
        );
        let e = cells.entry(key).or_default().entry(r.seed).or_insert((0.0, 0.0, 0));
        e.0 += r.value;
        e.1 += r.constraint_cost;
        e.2 += 1;
    }

    let build = |key: (Algorithm, &str, &str, &str, &str), per_seed: &BTreeMap<u64, (f64, f64, f64)>| {
        let v: Vec<f64> = per_seed.values().map(|x| x.0).collect();
        let c: Vec<f64> = per_seed.values().map(|x| x.1).collect();
        let p: Vec<f64> = per_seed.values().map(|x| x.2).collect();
        let o: Vec<f64> = c.iter().map(|&c| overshoot(c, d_eval)).collect();
        let (value_mean, value_stderr) = mean_stderr(&v);
        let (cost_mean, cost_stderr) = mean_stderr(&c);
        let (overshoot_mean, overshoot_stderr) = mean_stderr(&o);
        let (penalised_mean, penalised_stderr) = mean_stderr(&p);
        SummaryRow {
            algorithm: key.0,
            domain: key.1.to_string(),
            test_id: key.2.to_string(),
            param_name: key.3.to_string(),
            param_value: key.4.to_string(),
            seeds: per_seed.len(),
            value_mean,
            value_stderr,
            cost_mean,
            cost_stderr,
            overshoot_mean,
            overshoot_stderr,
            penalised_mean,
            penalised_stderr,
        }
    };

    let mut out = Vec::new();
    // (algorithm, domain, test) -> seed -> [(v, c, rpen)] over settings
    let mut pooled: BTreeMap<(Algorithm, String, String, String), BTreeMap<u64, Vec<(f64, f64, f64)>>> =
        BTreeMap::new();
    for ((algo, domain, test, name, value), seeds) in &cells {
        let per_seed: BTreeMap<u64, (f64, f64, f64)> = seeds
            .iter()
            .map(|(&s, &(sv, sc, n))| {
                let (v, c) = (sv / n as f64, sc / n as f64);
                (s, (v, c, penalised_return(v, c, d_eval, PENALTY_WEIGHT)))
            })
            .collect();
        out.push(build((*algo, domain, test, name, value), &per_seed));
        let slot = pooled
            .entry((*algo, domain.clone(), test.clone(), name.clone()))
            .or_default();
        for (&s, &x) in &per_seed {
            slot.entry(s).or_default().push(x);
        }
    }
    for ((algo, domain, test, name), seeds) in &pooled {
        let per_seed: BTreeMap<u64, (f64, f64, f64)> = seeds
            .iter()
            .map(|(&s, xs)| {
                let n = xs.len() as f64;
                let sum = xs.iter().fold((0.0, 0.0, 0.0), |a, x| (a.0 + x.0, a.1 + x.1, a.2 + x.2));
                (s, (sum.0 / n, sum.1 / n, sum.2 / n))
            })
            .collect();
        out.push(build((*algo, domain, test, name, "all"), &per_seed));
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut text = format!("{POOLING_NOTE}\n");
    text.push_str(&String::from_utf8_lossy(&buf));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Which metric a chart panel shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Panel {
    Value,
    Overshoot,
}

impl Panel {
    fn name(self) -> &'static str {
        match self {
            Panel::Value => "value",
            Panel::Overshoot => "overshoot",
        }
    }
}

/// Writes `<test>_<panel>.csv` and `.svg` for every test in the summary;
/// returns the files written.
pub fn write_charts(dir: &Path, rows: &[SummaryRow]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tests: BTreeMap<(String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.param_value != "all") {
        tests.entry((r.domain.clone(), r.test_id.clone())).or_default().push(r);
    }
    let mut written = Vec::new();
    for ((domain, test), rows) in tests {
        for panel in [Panel::Value, Panel::Overshoot] {
            let stem = format!("{domain}_{test}_{}", panel.name());
            let csv_path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&csv_path)?;
            w.write_record(["algorithm", rows[0].param_name.as_str(), "mean", "stderr"])?;
            for r in &rows {
                let (m, s) = pick(r, panel);
                w.write_record([r.algorithm.as_str(), &r.param_value, &m.to_string(), &s.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&csv_path, e))?;
            let svg_path = dir.join(format!("{stem}.svg"));
            let title = format!("{domain} test {test}: {}", panel.name());
            fs::write(&svg_path, render_svg(&title, &rows, panel)).map_err(|e| Error::io(&svg_path, e))?;
            written.push(csv_path);
            written.push(svg_path);
        }
    }
    Ok(written)
}

fn pick(r: &SummaryRow, panel: Panel) -> (f64, f64) {
    match panel {
        Panel::Value => (r.value_mean, r.value_stderr),
        Panel::Overshoot => (r.overshoot_mean, r.overshoot_stderr),
    }
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Line chart of mean ± stderr per algorithm over the setting axis.
fn render_svg(title: &str, rows: &[&SummaryRow], panel: Panel) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 150.0, 40.0, 60.0);
    let mut axis: Vec<&str> = Vec::new();
    for r in rows {
        if !axis.contains(&r.param_value.as_str()) {
            axis.push(&r.param_value);
        }
    }
    let mut series: BTreeMap<Algorithm, Vec<(usize, f64, f64)>> = BTreeMap::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        let (m, s) = pick(r, panel);
        let x = axis.iter().position(|a| *a == r.param_value).unwrap_or(0);
        series.entry(r.algorithm).or_default().push((x, m, s));
        lo = lo.min(m - s);
        hi = hi.max(m + s);
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |i: usize| left + pw * (i as f64 + 0.5) / axis.len().max(1) as f64;
    let py = |v: f64| top + ph * (hi - v) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    for (i, label) in axis.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{label}</text>"#,
            px(i),
            top + ph + 18.0
        );
    }
    if let Some(name) = rows.first().map(|r| r.param_name.as_str()) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#,
            left + pw / 2.0,
            h - 16.0
        );
    }
    for (k, (algo, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = points.iter().map(|&(x, m, _)| format!("{:.1},{:.1}", px(x), py(m))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, m, e) in points {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{color}"/><circle cx="{0:.1}" cy="{3:.1}" r="3" fill="{color}"/>"#,
                px(x),
                py(m - e),
                py(m + e),
                py(m)
            );
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{algo}</text>"#,
            w - right + 12.0,
            ly - 10.0,
            w - right + 30.0,
            ly
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Head;
    use crate::envs::GridSpec;
    use std::collections::VecDeque;

    /// Policy that ignores its input and always prefers `action`.
    fn constant_policy(n_in: usize, n_actions: usize, action: usize) -> DiffNet {
        let mut net = DiffNet::zeros(n_in, 1, n_actions, Head::Softmax);
        let n = net.params().len();
        net.params_mut()[n - n_actions + action] = 1.0;
        net
    }

    fn bfs_distance(spec: &GridSpec) -> usize {
        let mut dist = vec![usize::MAX; 25];
        let start = spec.index(spec.start);
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            for m in crate::envs::grid::ACTIONS {
                let t = spec.index(spec.shift(spec.cell(s), m));
                if dist[t] == usize::MAX {
                    dist[t] = dist[s] + 1;
                    queue.push_back(t);
                }
            }
        }
        dist[spec.index(spec.goal)]
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25; 4]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn nav1_shortest_path_value() {
        let task = Domain::Nav1.task();
        let spec = task.as_grid().unwrap().clone();
        // Greedy table policy: right along the bottom row, then up.
        let mut s = spec.index(spec.start);
        let mut v = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dynamics = Dynamics::Grid {
            p_success: 1.0,
            failure: FailureModel::StandStill,
        };
        while !task.is_terminal(s) {
            let (x, _) = spec.cell(s);
            let a = if x < 4 { 1 } else { 2 };
            let (next, r, _) = task.step(&dynamics, s, a, &mut rng);
            v += r;
            s = next;
        }
        assert_eq!(v, -(bfs_distance(&spec) as f64));
        assert_eq!(v, -8.0);
    }

    #[test]
    fn greedy_rollout_is_repeatable() {
        let task = Domain::Nav1.task();
        let policy = constant_policy(2, 4, 1);
        let dynamics = Dynamics::Grid {
            p_success: 1.0,
            failure: FailureModel::StandStill,
        };
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        let ra = greedy_rollout(&policy, &task, &dynamics, &mut a).unwrap();
        assert_eq!(ra, greedy_rollout(&policy, &task, &dynamics, &mut b).unwrap());
        // Always right: stuck against the east wall for the whole horizon.
        assert_eq!(ra.0, -200.0);
        assert_eq!(ra.1, 1.0);
    }

    #[test]
    fn penalised_return_examples() {
        assert_eq!(penalised_return(-100.0, 5.0, 3.0, PENALTY_WEIGHT), -1100.0);
        assert_eq!(penalised_return(-10.0, 2.0, 3.0, PENALTY_WEIGHT), -10.0);
        let (v, c, d) = (-37.5, 4.25, 3.0);
        assert_eq!(
            penalised_return(2.0 * v, 2.0 * c, 2.0 * d, PENALTY_WEIGHT),
            2.0 * penalised_return(v, c, d, PENALTY_WEIGHT)
        );
        assert_eq!(overshoot(3.0, 3.0), 0.0);
        assert_eq!(overshoot(0.0, 3.0), -3.0);
    }

    #[test]
    fn standard_axes() {
        let inv = TestGrid::standard(Domain::Inventory, 50);
        assert_eq!(inv.settings.len(), 9);
        assert_eq!(inv.settings[4].param_value, "5/3.3333");
        let nav1 = TestGrid::standard(Domain::Nav1, 50);
        let b: Vec<&str> = nav1.settings[5..].iter().map(|s| s.param_value.as_str()).collect();
        assert_eq!(b, ["5", "10", "20", "50", "100"]);
        let nav2 = TestGrid::standard(Domain::Nav2, 50);
        assert_eq!(nav2.settings[9].perturbation, Perturbation::WorstCaseArrows(25));
    }

    #[test]
    fn offsets_are_sampled_without_replacement() {
        let task = Domain::Nav1.task();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match realise(&task, Perturbation::RandomOffsets(100), &mut rng).unwrap() {
            Dynamics::Grid {
                failure: FailureModel::RandomOffset(table),
                p_success,
            } => {
                assert_eq!(p_success, TEST_B_SUCCESS);
                let mut pairs: Vec<_> = table.iter().map(|(p, _)| *p).collect();
                pairs.dedup();
                assert_eq!(pairs.len(), 100);
                let spec = task.as_grid().unwrap();
                assert!(table
                    .iter()
                    .all(|((s, _), t)| spec.neighbourhood(spec.cell(*s)).contains(t)));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(realise(&task, Perturbation::Demand(Demand { mean: 1.0, std: 1.0 }), &mut rng).is_err());
    }

    fn suite_fixture() -> (Task, TestGrid, Vec<PolicyEntry>) {
        let task = Domain::Nav1.task();
        let mut grid = TestGrid::standard(Domain::Nav1, 3);
        grid.settings.truncate(7);
        let policies = vec![
            PolicyEntry {
                algorithm: Algorithm::Pg,
                seed: 1,
                policy: constant_policy(2, 4, 2),
            },
            PolicyEntry {
                algorithm: Algorithm::Cpg,
                seed: 0,
                policy: constant_policy(2, 4, 1),
            },
        ];
        (task, grid, policies)
    }

    #[test]
    fn suite_is_reproducible_and_sorted() {
        let (task, grid, policies) = suite_fixture();
        let a = run_test_suite(&task, &grid, &policies).unwrap();
        let mut reversed = policies.clone();
        reversed.reverse();
        let b = run_test_suite(&task, &grid, &reversed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 7 * 3);
        assert_eq!(a[0].algorithm, Algorithm::Pg);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_results_csv(&p1, &a).unwrap();
        write_results_csv(&p2, &b).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(read_results_csv(&p1).unwrap(), a);
        assert!(run_test_suite(&task, &grid, &[]).is_err());
    }

    #[test]
    fn summary_uses_seed_means() {
        let row = |seed: u64, repeat: usize, value: f64, cost: f64| ResultRow {
            algorithm: Algorithm::Cpg,
            domain: "nav1".into(),
            test_id: "1A".into(),
            param_name: "p_success".into(),
            param_value: "0.8".into(),
            seed,
            repeat,
            value,
            constraint_cost: cost,
            overshoot: cost - 3.0,
        };
        let rows = vec![
            row(0, 0, -10.0, 2.0),
            row(0, 1, -10.0, 6.0),
            row(1, 0, -20.0, 3.0),
            row(1, 1, -20.0, 3.0),
        ];
        let summary = summarize(&rows, 3.0);
        assert_eq!(summary.len(), 2);
        let s = &summary[0];
        assert_eq!(s.seeds, 2);
        assert_eq!(s.value_mean, -15.0);
        assert_eq!(s.value_stderr, 5.0);
        // Seed 0: mean C = 4 → R_pen = -10 - 500; seed 1: C = 3 → -20.
        assert_eq!(s.penalised_mean, (-510.0 + -20.0) / 2.0);
        assert_eq!(summary[1].param_value, "all");
        assert_eq!(summary[1].penalised_mean, s.penalised_mean);
        let mut shuffled = rows.clone();
        shuffled.reverse();
        assert_eq!(summarize(&shuffled, 3.0), summary);

        let identical: Vec<ResultRow> = (0..50).map(|r| row(0, r, -8.0, 0.0)).collect();
        let one = summarize(&identical, 3.0);
        assert_eq!(one[0].value_stderr, 0.0);
    }

    #[test]
    fn summary_and_charts_on_disk() {
        let (task, grid, policies) = suite_fixture();
        let rows = run_test_suite(&task, &grid, &policies).unwrap();
        let summary = summarize(&rows, eval_budget(&task));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary_csv(&path, &summary).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("# pooled"));
        assert_eq!(read_summary_csv(&path).unwrap(), summary);
        let files = write_charts(&dir.path().join("charts"), &summary).unwrap();
        assert_eq!(files.len(), 8);
        let svg = fs::read_to_string(dir.path().join("charts/nav1_1A_value.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}

//! Nominal-model estimation, Hoeffding L1 budgets and the worst-case inner
//! problem over `(s, a)`-rectangular L1 balls.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{check_distribution, ModelRow, TabularModel, Trajectory};

/// Largest possible L1 distance between two distributions.
pub const L1_DIAMETER: f64 = 2.0;
const PSEUDO_COUNT: f64 = 1.0;
const MAGIC: &[u8; 4] = b"RCUS";
const FORMAT_VERSION: u32 = 1;

/// Successor counts per `(s, a)`, aligned with the declared supports.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationCounts {
    n_states: usize,
    n_actions: usize,
    successors: Vec<Vec<u64>>,
}

impl VisitationCounts {
    pub fn new(supports: &[Vec<usize>], n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            successors: supports.iter().map(|s| vec![0; s.len()]).collect(),
        }
    }

    /// Observed transitions out of `(s, a)`.
    pub fn observed(&self, state: usize, action: usize) -> u64 {
        self.successors[state * self.n_actions + action].iter().sum()
    }

    /// Observed transitions plus the unit pseudo-count.
    pub fn effective(&self, state: usize, action: usize) -> f64 {
        self.observed(state, action) as f64 + PSEUDO_COUNT
    }

    pub fn successor_counts(&self, state: usize, action: usize) -> &[u64] {
        &self.successors[state * self.n_actions + action]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Counts transitions and smooths them with a unit pseudo-count spread
/// uniformly over each support.
pub fn estimate_nominal(
    trajs: &[Trajectory],
    n_states: usize,
    n_actions: usize,
    supports: &[Vec<usize>],
) -> Result<(TabularModel, VisitationCounts)> {
    if supports.len() != n_states * n_actions {
        return Err(Error::Dimension {
            expected: n_states * n_actions,
            got: supports.len(),
        });
    }
    if supports.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("empty successor support".into()));
    }
    let mut counts = VisitationCounts::new(supports, n_states, n_actions);
    for step in trajs.iter().flat_map(|t| &t.steps) {
        let idx = step.state * n_actions + step.action;
        let k = supports[idx]
            .iter()
            .position(|&s| s == step.next_state)
            .ok_or(Error::OutsideSupport {
                state: step.state,
                action: step.action,
                next: step.next_state,
            })?;
        counts.successors[idx][k] += 1;
    }
    let rows = supports
        .iter()
        .zip(&counts.successors)
        .map(|(support, n)| {
            let total = n.iter().sum::<u64>() as f64 + PSEUDO_COUNT;
            let prior = PSEUDO_COUNT / support.len() as f64;
            let probs = n.iter().map(|&c| (c as f64 + prior) / total).collect();
            ModelRow::new(support.clone(), probs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((TabularModel::new(n_states, n_actions, rows)?, counts))
}

/// Hoeffding radius `sqrt(2/n ln(2^outcomes S A / δ))`, clipped to the L1
/// diameter. `n` includes the pseudo-count.
pub fn hoeffding_radius(n: f64, outcomes: usize, n_states: usize, n_actions: usize, delta: f64) -> f64 {
    let log_term = outcomes as f64 * std::f64::consts::LN_2
        + ((n_states * n_actions) as f64 / delta).ln();
    (2.0 / n * log_term).sqrt().min(L1_DIAMETER)
}

/// Per-pair budgets `α(s, a)`, indexed `s * A + a`.
pub fn hoeffding_budget(
    counts: &VisitationCounts,
    outcomes: usize,
    n_states: usize,
    n_actions: usize,
    delta: f64,
) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ = {delta} outside (0, 1)")));
    }
    Ok((0..n_states)
        .flat_map(|s| (0..n_actions).map(move |a| (s, a)))
        .map(|(s, a)| hoeffding_radius(counts.effective(s, a), outcomes, n_states, n_actions, delta))
        .collect())
}

/// Nominal model together with per-pair L1 budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    pub nominal: TabularModel,
    pub budgets: Vec<f64>,
    pub delta: f64,
    pub outcomes: usize,
    pub counts: VisitationCounts,
}

impl UncertaintySet {
    /// Estimates the nominal model and Hoeffding budgets from trajectories.
    pub fn from_trajectories(
        trajs: &[Trajectory],
        n_states: usize,
        n_actions: usize,
        supports: &[Vec<usize>],
        outcomes: usize,
        delta: f64,
    ) -> Result<Self> {
        let (nominal, counts) = estimate_nominal(trajs, n_states, n_actions, supports)?;
        let budgets = hoeffding_budget(&counts, outcomes, n_states, n_actions, delta)?;
        Ok(Self {
            nominal,
            budgets,
            delta,
            outcomes,
            counts,
        })
    }

    pub fn budget(&self, state: usize, action: usize) -> f64 {
        self.budgets[state * self.nominal.n_actions() + action]
    }

    /// The same nominal model with every budget replaced by `alpha`.
    pub fn with_uniform_budget(&self, alpha: f64) -> Self {
        Self {
            budgets: vec![alpha; self.budgets.len()],
            ..self.clone()
        }
    }

    /// Range of budgets over the pairs that have at least one observation.
    pub fn observed_budget_range(&self) -> Option<(f64, f64)> {
        let n_actions = self.nominal.n_actions();
        self.budgets
            .iter()
            .enumerate()
            .filter(|(i, _)| self.counts.observed(i / n_actions, i % n_actions) > 0)
            .map(|(_, &b)| b)
            .fold(None, |acc, b| match acc {
                None => Some((b, b)),
                Some((lo, hi)) => Some((lo.min(b), hi.max(b))),
            })
    }

    /// Little-endian binary snapshot; `label` is stored verbatim and is
    /// used by callers as a cache key.
    pub fn to_bytes(&self, label: &str) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(label.len() as u32).to_le_bytes());
        out.extend_from_slice(label.as_bytes());
        out.extend_from_slice(&(self.nominal.n_states() as u32).to_le_bytes());
        out.extend_from_slice(&(self.nominal.n_actions() as u32).to_le_bytes());
        out.extend_from_slice(&(self.outcomes as u32).to_le_bytes());
        out.extend_from_slice(&self.delta.to_le_bytes());
        for (i, row) in self.nominal.rows().iter().enumerate() {
            out.extend_from_slice(&(row.support.len() as u32).to_le_bytes());
            for &s in &row.support {
                out.extend_from_slice(&(s as u32).to_le_bytes());
            }
            for &p in &row.probs {
                out.extend_from_slice(&p.to_le_bytes());
            }
            for &c in &self.counts.successors[i] {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&self.budgets[i].to_le_bytes());
        }
        out
    }

    /// Parses a snapshot written by [`to_bytes`](Self::to_bytes), returning
    /// the stored label alongside the set.
    pub fn from_bytes(bytes: &[u8]) -> Result<(String, Self)> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("uncertainty set: bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "uncertainty set: unsupported version {version}"
            )));
        }
        let label_len = r.u32()? as usize;
        let label = String::from_utf8(r.take(label_len)?.to_vec())
            .map_err(|_| Error::Format("uncertainty set: label is not UTF-8".into()))?;
        let n_states = r.u32()? as usize;
        let n_actions = r.u32()? as usize;
        let outcomes = r.u32()? as usize;
        let delta = r.f64()?;
        let mut rows = Vec::with_capacity(n_states * n_actions);
        let mut successors = Vec::with_capacity(n_states * n_actions);
        let mut budgets = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states * n_actions {
            let len = r.u32()? as usize;
            let support = (0..len).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let probs = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let counts = (0..len).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            rows.push(ModelRow::checked(support, probs)?);
            successors.push(counts);
            budgets.push(r.f64()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("uncertainty set: trailing bytes".into()));
        }
        let nominal = TabularModel::new(n_states, n_actions, rows)?;
        let counts = VisitationCounts {
            n_states,
            n_actions,
            successors,
        };
        Ok((
            label,
            Self {
                nominal,
                budgets,
                delta,
                outcomes,
                counts,
            },
        ))
    }

    /// Human-readable companion table: one line per `(s, a)` with visit
    /// count, budget and the nominal row (`;`-separated).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let n_actions = self.nominal.n_actions();
        let join = |v: Vec<String>| v.join(";");
        (|| -> std::io::Result<()> {
            writeln!(w, "state,action,visits,alpha,support,nominal")?;
            for (i, row) in self.nominal.rows().iter().enumerate() {
                let (s, a) = (i / n_actions, i % n_actions);
                writeln!(
                    w,
                    "{s},{a},{},{},{},{}",
                    self.counts.observed(s, a),
                    self.budgets[i],
                    join(row.support.iter().map(|v| v.to_string()).collect()),
                    join(row.probs.iter().map(|v| v.to_string()).collect()),
                )?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("uncertainty set: truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Minimises `pᵀv` over `{p ∈ Δ : ‖p − p̂‖₁ ≤ α}`.
///
/// Moves `min(α/2, 1 − p̂[i*])` mass onto the lowest-value entry `i*` and
/// takes it from the highest-value entries first. Ties go to the lower
/// index in both orders.
pub fn worst_case_l1(nominal: &[f64], values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if nominal.len() != values.len() {
        return Err(Error::Dimension {
            expected: nominal.len(),
            got: values.len(),
        });
    }
    if !(0.0..=L1_DIAMETER).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("budget α = {alpha} outside [0, 2]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite objective".into()));
    }
    check_distribution(nominal)?;
    let mut p = nominal.to_vec();
    if nominal.is_empty() {
        return Ok(p);
    }
    let best = (0..values.len())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)))
        .unwrap();
    let epsilon = (alpha / 2.0).min(1.0 - p[best]);
    if epsilon <= 0.0 {
        return Ok(p);
    }
    p[best] += epsilon;
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| i != best).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let mut remaining = epsilon;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let take = p[i].min(remaining);
        p[i] -= take;
        remaining -= take;
    }
    // Floating-point leftovers come off the top entry again.
    if remaining > 0.0 {
        p[best] -= remaining;
    }
    Ok(p)
}

/// Which quantity the worst-case model adversarially targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorstCaseMode {
    /// Minimise the expected value.
    Value,
    /// Maximise the expected constraint-cost.
    Constraint,
    /// Minimise `V̂ − λĈ`.
    Lagrangian,
}

/// Assembles `P⁺` row by row from per-state critic evaluations.
pub fn select_worst_model(
    uset: &UncertaintySet,
    value_critic: &[f64],
    cost_critic: &[f64],
    lambda: f64,
    mode: WorstCaseMode,
) -> Result<TabularModel> {
    let n_states = uset.nominal.n_states();
    for table in [value_critic, cost_critic] {
        if table.len() != n_states {
            return Err(Error::Dimension {
                expected: n_states,
                got: table.len(),
            });
        }
    }
    let objective = |s: usize| match mode {
        WorstCaseMode::Value => value_critic[s],
        WorstCaseMode::Constraint => -cost_critic[s],
        WorstCaseMode::Lagrangian => value_critic[s] - lambda * cost_critic[s],
    };
    let rows = uset
        .nominal
        .rows()
        .iter()
        .zip(&uset.budgets)
        .map(|(row, &alpha)| {
            let v: Vec<f64> = row.support.iter().map(|&s| objective(s)).collect();
            let probs = worst_case_l1(&row.probs, &v, alpha)?;
            Ok(ModelRow {
                support: row.support.clone(),
                probs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TabularModel::new(n_states, uset.nominal.n_actions(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Step;
    use proptest::prelude::*;

    fn dot(p: &[f64], v: &[f64]) -> f64 {
        p.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    fn l1(p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
    }

    #[test]
    fn degenerate_balls() {
        let p = [0.5, 0.3, 0.2];
        let v = [2.0, 1.0, 3.0];
        assert_eq!(worst_case_l1(&p, &v, 0.0).unwrap(), p.to_vec());
        let full = worst_case_l1(&p, &v, 2.0).unwrap();
        assert!((full[1] - 1.0).abs() < 1e-15);
        assert!((dot(&full, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_worked_instance() {
        let out = worst_case_l1(&[0.5, 0.3, 0.2], &[1.0, 2.0, 3.0], 0.4).unwrap();
        let expected = [0.7, 0.3, 0.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((dot(&out, &[1.0, 2.0, 3.0]) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(worst_case_l1(&[0.5, 0.5], &[1.0, 2.0], 2.5).is_err());
        assert!(worst_case_l1(&[0.5, 0.4], &[1.0, 2.0], 0.1).is_err());
        assert!(worst_case_l1(&[0.5, 0.5], &[1.0, f64::NAN], 0.1).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        let raw = (2.0 * 32000f64.ln()).sqrt();
        assert!((raw - 4.5549).abs() < 1e-4);
        assert_eq!(hoeffding_radius(1.0, 5, 25, 4, 0.1), 2.0);
        let mut prev = f64::INFINITY;
        for n in [10.0, 100.0, 1e3, 1e4, 1e6] {
            let a = hoeffding_radius(n, 5, 25, 4, 0.1);
            assert!(a < prev);
            prev = a;
        }
        assert!(prev < 0.01);
        assert!(hoeffding_radius(500.0, 6, 25, 4, 0.1) > hoeffding_radius(500.0, 5, 25, 4, 0.1));
    }

    fn toy_supports() -> Vec<Vec<usize>> {
        vec![vec![0, 1, 2, 3, 4]; 5]
    }

    #[test]
    fn estimation_smoothing() {
        let steps = (0..99).map(|_| Step::new(0, 0, 3, 0.0, 0.0)).collect();
        let trajs = vec![Trajectory { steps }];
        let (model, counts) = estimate_nominal(&trajs, 5, 1, &toy_supports()).unwrap();
        assert!((model.row(0, 0).prob_of(3) - 0.992).abs() < 1e-12);
        assert_eq!(counts.observed(0, 0), 99);
        assert_eq!(counts.effective(0, 0), 100.0);
        // Unvisited rows fall back to the uniform prior.
        assert_eq!(model.row(1, 0).probs, vec![0.2; 5]);
        for row in model.rows() {
            assert!((row.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn estimation_rejects_unsupported_successor() {
        let supports = vec![vec![0, 1]; 2];
        let trajs = vec![Trajectory {
            steps: vec![Step::new(0, 0, 1, 0.0, 0.0)],
        }];
        assert!(estimate_nominal(&trajs, 2, 1, &supports).is_ok());
        let bad = vec![vec![0], vec![0, 1]];
        assert!(matches!(
            estimate_nominal(&trajs, 2, 1, &bad),
            Err(Error::OutsideSupport { .. })
        ));
    }

    fn chain_set(alpha: f64) -> UncertaintySet {
        let supports = vec![vec![0, 1, 2]; 3];
        let trajs = vec![Trajectory {
            steps: vec![
                Step::new(0, 0, 1, 0.0, 0.0),
                Step::new(1, 0, 2, 0.0, 0.0),
                Step::new(2, 0, 2, 0.0, 0.0),
            ],
        }];
        UncertaintySet::from_trajectories(&trajs, 3, 1, &supports, 3, 0.1)
            .unwrap()
            .with_uniform_budget(alpha)
    }

    #[test]
    fn lagrangian_at_zero_multiplier_is_value_mode() {
        let u = chain_set(0.6);
        let v = [1.0, -2.0, 0.5];
        let c = [3.0, 0.0, 1.0];
        let a = select_worst_model(&u, &v, &c, 0.0, WorstCaseMode::Lagrangian).unwrap();
        let b = select_worst_model(&u, &v, &c, 0.0, WorstCaseMode::Value).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_critic_keeps_rows_feasible() {
        let u = chain_set(0.6);
        let m = select_worst_model(&u, &[4.0; 3], &[0.0; 3], 1.0, WorstCaseMode::Value).unwrap();
        for (row, nom) in m.rows().iter().zip(u.nominal.rows()) {
            assert!(l1(&row.probs, &nom.probs) <= 0.6 + 1e-9);
            assert!((dot(&row.probs, &[4.0; 3]) - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constraint_mode_maximises_cost() {
        let u = chain_set(0.4);
        let c = [0.0, 5.0, 1.0];
        let m = select_worst_model(&u, &[0.0; 3], &c, 1.0, WorstCaseMode::Constraint).unwrap();
        for (row, nom) in m.rows().iter().zip(u.nominal.rows()) {
            assert!(dot(&row.probs, &c) >= dot(&nom.probs, &c));
            assert!(row.probs[1] > nom.probs[1]);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let u = chain_set(0.3);
        let bytes = u.to_bytes("key-1");
        let (label, back) = UncertaintySet::from_bytes(&bytes).unwrap();
        assert_eq!(label, "key-1");
        assert_eq!(back, u);
        assert!(UncertaintySet::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_map(|w| {
            let total: f64 = w.iter().sum::<f64>() + 1e-3;
            let mut p: Vec<f64> = w.iter().map(|x| (x + 1e-3 / w.len() as f64) / total).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            p
        })
    }

    proptest! {
        #[test]
        fn output_is_feasible_and_monotone(
            (p, v) in (2usize..7).prop_flat_map(|n| (distribution(n), prop::collection::vec(-10.0f64..10.0, n))),
            a1 in 0.0f64..2.0,
            a2 in 0.0f64..2.0,
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let q_lo = worst_case_l1(&p, &v, lo).unwrap();
            let q_hi = worst_case_l1(&p, &v, hi).unwrap();
            for q in [&q_lo, &q_hi] {
                prop_assert!(q.iter().all(|x| *x >= -1e-12));
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!(l1(&q_lo, &p) <= lo + 1e-9);
            prop_assert!(l1(&q_hi, &p) <= hi + 1e-9);
            prop_assert!(dot(&q_hi, &v) <= dot(&q_lo, &v) + 1e-12);
            prop_assert!(dot(&q_lo, &v) <= dot(&p, &v) + 1e-12);
        }
    }
}

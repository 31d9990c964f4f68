//! Benchmark tasks and their ground-truth / perturbed simulators.

pub mod grid;
pub mod inventory;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

pub use grid::{cell_tables, grid_step, CellTables, FailureModel, GridSpec, Move, NavTask};
pub use inventory::{inventory_step, Demand, InventorySpec};

use crate::error::{Error, Result};
use crate::mdp::{Rcmdp, Step, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Inventory,
    Nav1,
    Nav2,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Inventory, Domain::Nav1, Domain::Nav2];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Inventory => "inventory",
            Domain::Nav1 => "nav1",
            Domain::Nav2 => "nav2",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Domain::Inventory => Task::Inventory(InventorySpec::default()),
            Domain::Nav1 => Task::Grid(GridSpec::new(NavTask::Nav1)),
            Domain::Nav2 => Task::Grid(GridSpec::new(NavTask::Nav2)),
        }
    }

    /// Episodes of random-policy data used to estimate the nominal model.
    pub fn estimation_episodes(self) -> usize {
        match self {
            Domain::Inventory | Domain::Nav1 => 100,
            Domain::Nav2 => 10_000,
        }
    }

    /// Initial value of both Lagrange multipliers.
    pub fn initial_multiplier(self) -> f64 {
        match self {
            Domain::Inventory => 50.0,
            Domain::Nav1 | Domain::Nav2 => 1.0,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown domain {s:?}")))
    }
}

/// True or perturbed transition law of a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Demand(Demand),
    Grid {
        p_success: f64,
        failure: FailureModel,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Inventory(InventorySpec),
    Grid(GridSpec),
}

impl Task {
    /// Dynamics the nominal model is estimated from.
    pub fn data_dynamics(&self) -> Dynamics {
        match self {
            Task::Inventory(spec) => Dynamics::Demand(spec.demand),
            Task::Grid(spec) => Dynamics::Grid {
                p_success: spec.p_success,
                failure: FailureModel::StandStill,
            },
        }
    }

    /// Samples one real transition: `(s', r, c)`.
    pub fn step(
        &self,
        dynamics: &Dynamics,
        state: usize,
        action: usize,
        rng: &mut dyn RngCore,
    ) -> (usize, f64, f64) {
        match (self, dynamics) {
            (Task::Inventory(spec), Dynamics::Demand(d)) => {
                inventory_step(spec, state, action, rng, *d)
            }
            (Task::Grid(spec), Dynamics::Grid { p_success, failure }) => {
                let (next, r, c) = grid_step(spec.cell(state), action, rng, spec, *p_success, failure);
                (spec.index(next), r, c)
            }
            _ => panic!("dynamics do not belong to this task"),
        }
    }

    /// Episodes of a uniformly random policy from the initial state.
    pub fn collect_random(
        &self,
        dynamics: &Dynamics,
        episodes: usize,
        rng: &mut dyn RngCore,
    ) -> Vec<Trajectory> {
        (0..episodes)
            .map(|_| {
                let mut steps = Vec::with_capacity(self.horizon());
                let mut s = self.initial_state();
                for _ in 0..self.horizon() {
                    if self.is_terminal(s) {
                        break;
                    }
                    let a = rng.random_range(0..self.n_actions());
                    let (next, r, c) = self.step(dynamics, s, a, rng);
                    steps.push(Step::new(s, a, next, r, c));
                    s = next;
                }
                Trajectory { steps }
            })
            .collect()
    }

    pub fn supports(&self) -> Vec<Vec<usize>> {
        (0..self.n_states())
            .flat_map(|s| (0..self.n_actions()).map(move |a| (s, a)))
            .map(|(s, a)| self.support(s, a))
            .collect()
    }

    pub fn as_grid(&self) -> Option<&GridSpec> {
        match self {
            Task::Grid(g) => Some(g),
            Task::Inventory(_) => None,
        }
    }

    pub fn as_inventory(&self) -> Option<&InventorySpec> {
        match self {
            Task::Inventory(i) => Some(i),
            Task::Grid(_) => None,
        }
    }
}

macro_rules! delegate {
    ($self:ident, $inner:ident => $e:expr) => {
        match $self {
            Task::Inventory($inner) => $e,
            Task::Grid($inner) => $e,
        }
    };
}

impl Rcmdp for Task {
    fn n_states(&self) -> usize {
        delegate!(self, t => t.n_states())
    }
    fn n_actions(&self) -> usize {
        delegate!(self, t => t.n_actions())
    }
    fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        delegate!(self, t => t.reward(s, a, next))
    }
    fn constraint_cost(&self, s: usize, a: usize, next: usize) -> f64 {
        delegate!(self, t => t.constraint_cost(s, a, next))
    }
    fn budget(&self) -> f64 {
        delegate!(self, t => t.budget())
    }
    fn discount(&self) -> f64 {
        delegate!(self, t => t.discount())
    }
    fn horizon(&self) -> usize {
        delegate!(self, t => t.horizon())
    }
    fn is_terminal(&self, s: usize) -> bool {
        delegate!(self, t => t.is_terminal(s))
    }
    fn initial_state(&self) -> usize {
        delegate!(self, t => t.initial_state())
    }
    fn support(&self, s: usize, a: usize) -> Vec<usize> {
        delegate!(self, t => t.support(s, a))
    }
    fn hoeffding_outcomes(&self) -> usize {
        delegate!(self, t => t.hoeffding_outcomes())
    }
    fn policy_input(&self, s: usize) -> Vec<f64> {
        delegate!(self, t => t.policy_input(s))
    }
    fn critic_input(&self, s: usize) -> Vec<f64> {
        delegate!(self, t => t.critic_input(s))
    }
    fn adversary_input(&self, s: usize, a: usize) -> Vec<f64> {
        delegate!(self, t => t.adversary_input(s, a))
    }
    fn adversary_width(&self) -> usize {
        delegate!(self, t => t.adversary_width())
    }
}

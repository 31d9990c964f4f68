//! Single-product inventory control with Gaussian demand and a purchasing
//! limit expressed as a constraint-cost.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::mdp::{one_hot, Rcmdp};

/// Demand law: a Gaussian draw rounded to the nearest integer and clipped
/// to `[0, S-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    pub mean: f64,
    pub std: f64,
}

impl Demand {
    pub fn sample<R: Rng + ?Sized>(&self, n_states: usize, rng: &mut R) -> usize {
        let draw = if self.std > 0.0 {
            Normal::new(self.mean, self.std)
                .expect("finite demand parameters")
                .sample(rng)
        } else {
            self.mean
        };
        draw.round().clamp(0.0, (n_states - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventorySpec {
    pub n_states: usize,
    pub purchase_cost: f64,
    pub sale_price: f64,
    pub holding_cost: f64,
    /// Demand used for data collection; also fixes the purchasing limit.
    pub demand: Demand,
    pub horizon: usize,
    pub discount: f64,
    pub budget: f64,
}

impl Default for InventorySpec {
    fn default() -> Self {
        Self::with_states(20)
    }
}

impl InventorySpec {
    /// Standard parameters with demand `N(S/4, S/6)`.
    pub fn with_states(n_states: usize) -> Self {
        let s = n_states as f64;
        Self {
            n_states,
            purchase_cost: 2.49,
            sale_price: 3.99,
            holding_cost: 0.03,
            demand: Demand {
                mean: s / 4.0,
                std: s / 6.0,
            },
            horizon: 100,
            discount: 0.99,
            budget: 6.0,
        }
    }

    /// Purchasing limit `L(s)`: `μ + σ` for `s ≤ 2`, `μ` above.
    pub fn limit(&self, state: usize) -> f64 {
        if state <= 2 {
            self.demand.mean + self.demand.std
        } else {
            self.demand.mean
        }
    }

    /// Order quantity that fits in the remaining capacity.
    pub fn effective_order(&self, state: usize, action: usize) -> usize {
        action.min(self.n_states - 1 - state)
    }

    fn reward_for(&self, state: usize, order: usize, next: usize) -> f64 {
        let sold = (state + order).saturating_sub(next);
        self.sale_price * sold as f64
            - self.purchase_cost * order as f64
            - self.holding_cost * next as f64
    }

    fn cost_for(&self, state: usize, action: usize) -> f64 {
        (action as f64 - self.limit(state)).max(0.0)
    }
}

/// One transition under `demand`: returns `(s', r, c)`.
pub fn inventory_step<R: Rng + ?Sized>(
    spec: &InventorySpec,
    state: usize,
    action: usize,
    rng: &mut R,
    demand: Demand,
) -> (usize, f64, f64) {
    let order = spec.effective_order(state, action);
    let d = demand.sample(spec.n_states, rng);
    let stock = state + order;
    let next = stock - stock.min(d);
    (
        next,
        spec.reward_for(state, order, next),
        spec.cost_for(state, action),
    )
}

impl Rcmdp for InventorySpec {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_states
    }

    /// Realised revenue minus ordering and holding costs, with the units
    /// sold recovered from the successor level.
    fn reward(&self, state: usize, action: usize, next: usize) -> f64 {
        self.reward_for(state, self.effective_order(state, action), next)
    }

    /// Penalises the raw order beyond the purchasing limit.
    fn constraint_cost(&self, state: usize, action: usize, _next: usize) -> f64 {
        self.cost_for(state, action)
    }

    fn budget(&self) -> f64 {
        self.budget
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn is_terminal(&self, _state: usize) -> bool {
        false
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn support(&self, _state: usize, _action: usize) -> Vec<usize> {
        (0..self.n_states).collect()
    }

    fn hoeffding_outcomes(&self) -> usize {
        self.n_states
    }

    fn policy_input(&self, state: usize) -> Vec<f64> {
        one_hot(state, self.n_states)
    }

    fn adversary_width(&self) -> usize {
        self.n_states
    }
}

//! 5x5 safe-navigation grid worlds.
//!
//! Cells are addressed `(x, y)` with `(0, 0)` the bottom-left start and
//! `(4, 4)` the goal; state index is `y * width + x`. Actions are
//! `0 = left, 1 = right, 2 = up (+y), 3 = down (-y)`.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::Rcmdp;

pub const ACTIONS: [Move; 4] = [Move::Left, Move::Right, Move::Up, Move::Down];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl Move {
    fn delta(self) -> (i64, i64) {
        match self {
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
            Move::Up => (0, 1),
            Move::Down => (0, -1),
            Move::Stay => (0, 0),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "left" => Move::Left,
            "right" => Move::Right,
            "up" => Move::Up,
            "down" => Move::Down,
            "stay" => Move::Stay,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NavTask {
    Nav1,
    Nav2,
}

impl std::str::FromStr for NavTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nav1" => Ok(NavTask::Nav1),
            "nav2" => Ok(NavTask::Nav2),
            other => Err(Error::InvalidArgument(format!("unknown navigation task {other:?}"))),
        }
    }
}

/// Cost-bearing cells and the worst-case failure arrows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTables {
    pub grey: BTreeSet<(usize, usize)>,
    pub red: BTreeSet<(usize, usize)>,
    /// Failure move per cell for the worst-case perturbation test.
    pub arrows: Vec<((usize, usize), Move)>,
}

impl CellTables {
    pub fn arrow_at(&self, cell: (usize, usize)) -> Option<Move> {
        self.arrows.iter().find(|(c, _)| *c == cell).map(|(_, m)| *m)
    }

    /// Parses an override table: CSV with header `x,y,kind`, where kind is
    /// `grey`, `red`, or an arrow `left|right|up|down|stay`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut tables = CellTables {
            grey: BTreeSet::new(),
            red: BTreeSet::new(),
            arrows: Vec::new(),
        };
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::Format(format!("{}: line {}: bad coordinate {s:?}", path.display(), line + 2))
                })
            };
            let cell = (parse(field(0))?, parse(field(1))?);
            match field(2) {
                "grey" => {
                    tables.grey.insert(cell);
                }
                "red" => {
                    tables.red.insert(cell);
                }
                kind => match Move::parse(kind) {
                    Some(m) => tables.arrows.push((cell, m)),
                    None => {
                        return Err(Error::Format(format!(
                            "{}: line {}: unknown cell kind {kind:?}",
                            path.display(),
                            line + 2
                        )))
                    }
                },
            }
        }
        Ok(tables)
    }
}

/// Grey / red cells and worst-case arrows of the two navigation tasks.
pub fn cell_tables(task: NavTask) -> CellTables {
    let grey_nav1 = [(1, 0), (1, 1), (1, 2), (3, 2), (3, 3), (3, 4)];
    match task {
        NavTask::Nav1 => CellTables {
            grey: grey_nav1.into_iter().collect(),
            red: BTreeSet::new(),
            arrows: Vec::new(),
        },
        NavTask::Nav2 => {
            use Move::*;
            let rows: [&[Move]; 5] = [
                &[Right, Right, Right, Stay, Stay],
                &[Down; 5],
                &[Left; 5],
                &[Up, Up, Left, Left, Left],
                &[Stay, Stay, Left, Left],
            ];
            let arrows = rows
                .iter()
                .enumerate()
                .flat_map(|(y, row)| row.iter().enumerate().map(move |(x, &m)| ((x, y), m)))
                .collect();
            CellTables {
                grey: grey_nav1.into_iter().chain([(2, 2)]).collect(),
                red: [(0, 4), (1, 4), (3, 0), (4, 0)].into_iter().collect(),
                arrows,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub task: NavTask,
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub cells: CellTables,
    pub grey_cost: f64,
    pub red_cost: f64,
    pub horizon: usize,
    pub budget: f64,
    pub discount: f64,
    /// Success probability of the data-collection dynamics.
    pub p_success: f64,
}

impl GridSpec {
    pub fn new(task: NavTask) -> Self {
        let base = |grey_cost, horizon, budget, p_success| Self {
            task,
            width: 5,
            height: 5,
            start: (0, 0),
            goal: (4, 4),
            cells: cell_tables(task),
            grey_cost,
            red_cost: 1.0,
            horizon,
            budget,
            discount: 0.99,
            p_success,
        };
        match task {
            NavTask::Nav1 => base(1.0, 200, 3.0, 0.8),
            NavTask::Nav2 => base(0.1, 100, 0.4, 1.0),
        }
    }

    pub fn index(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.width + cell.0
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    /// Moves one cell, staying in place at the border.
    pub fn shift(&self, cell: (usize, usize), m: Move) -> (usize, usize) {
        let (dx, dy) = m.delta();
        let x = (cell.0 as i64 + dx).clamp(0, self.width as i64 - 1) as usize;
        let y = (cell.1 as i64 + dy).clamp(0, self.height as i64 - 1) as usize;
        (x, y)
    }

    pub fn cell_cost(&self, cell: (usize, usize)) -> f64 {
        if self.cells.red.contains(&cell) {
            self.red_cost
        } else if self.cells.grey.contains(&cell) {
            self.grey_cost
        } else {
            0.0
        }
    }

    /// Von Neumann neighbourhood (including the cell itself), sorted by
    /// state index.
    pub fn neighbourhood(&self, cell: (usize, usize)) -> Vec<usize> {
        let mut out: Vec<usize> = [Move::Stay, Move::Left, Move::Right, Move::Up, Move::Down]
            .into_iter()
            .map(|m| self.index(self.shift(cell, m)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// What happens when an action fails.
#[derive(Debug, Clone, PartialEq)]
pub enum FailureModel {
    StandStill,
    /// Perturbed `(state, action)` pairs are sent to a fixed neighbour; all
    /// other pairs stand still.
    RandomOffset(Vec<((usize, usize), usize)>),
    /// Perturbed states follow their worst-case arrow; all other states
    /// stand still.
    WorstCaseArrow(BTreeSet<usize>),
}

/// One transition: returns `(cell', r, c)`.
///
/// The reward is `-1` per step and the constraint-cost is that of the cell
/// the agent occupies when acting, so time spent standing in a costly cell
/// keeps accruing cost.
pub fn grid_step<R: Rng + ?Sized>(
    pos: (usize, usize),
    action: usize,
    rng: &mut R,
    spec: &GridSpec,
    p_success: f64,
    failure: &FailureModel,
) -> ((usize, usize), f64, f64) {
    let state = spec.index(pos);
    let next = if rng.random::<f64>() < p_success {
        spec.shift(pos, ACTIONS[action])
    } else {
        match failure {
            FailureModel::StandStill => pos,
            FailureModel::RandomOffset(table) => table
                .iter()
                .find(|(pair, _)| *pair == (state, action))
                .map_or(pos, |(_, target)| spec.cell(*target)),
            FailureModel::WorstCaseArrow(states) => {
                match spec.cells.arrow_at(pos).filter(|_| states.contains(&state)) {
                    Some(m) => spec.shift(pos, m),
                    None => pos,
                }
            }
        }
    };
    (next, -1.0, spec.cell_cost(pos))
}

impl Rcmdp for GridSpec {
    fn n_states(&self) -> usize {
        self.width * self.height
    }

    fn n_actions(&self) -> usize {
        ACTIONS.len()
    }

    fn reward(&self, _state: usize, _action: usize, _next: usize) -> f64 {
        -1.0
    }

    fn constraint_cost(&self, state: usize, _action: usize, _next: usize) -> f64 {
        self.cell_cost(self.cell(state))
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

    fn is_terminal(&self, state: usize) -> bool {
        self.cell(state) == self.goal
    }

    fn initial_state(&self) -> usize {
        self.index(self.start)
    }

    fn support(&self, state: usize, _action: usize) -> Vec<usize> {
        self.neighbourhood(self.cell(state))
    }

    fn hoeffding_outcomes(&self) -> usize {
        5
    }

    /// Normalised `(x, y)` coordinates.
    fn policy_input(&self, state: usize) -> Vec<f64> {
        let (x, y) = self.cell(state);
        vec![
            x as f64 / (self.width - 1) as f64,
            y as f64 / (self.height - 1) as f64,
        ]
    }

    fn adversary_width(&self) -> usize {
        5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_sizes() {
        let nav1 = cell_tables(NavTask::Nav1);
        let nav2 = cell_tables(NavTask::Nav2);
        assert_eq!(nav1.grey.len(), 6);
        assert_eq!(nav2.grey.len(), 7);
        assert_eq!(nav2.red.len(), 4);
        assert_eq!(nav2.arrows.len(), 24);
        assert_eq!(nav2.arrow_at((4, 4)), None);
        assert_eq!(nav2.arrow_at((0, 3)), Some(Move::Up));
        assert_eq!(nav2.arrow_at((2, 3)), Some(Move::Left));
        assert_eq!(nav2.arrow_at((3, 0)), Some(Move::Stay));
    }

    #[test]
    fn deterministic_moves_and_borders() {
        let spec = GridSpec::new(NavTask::Nav1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fail = FailureModel::StandStill;
        assert_eq!(grid_step((0, 0), 1, &mut rng, &spec, 1.0, &fail).0, (1, 0));
        assert_eq!(grid_step((0, 0), 0, &mut rng, &spec, 1.0, &fail).0, (0, 0));
        assert_eq!(grid_step((0, 0), 3, &mut rng, &spec, 1.0, &fail).0, (0, 0));
        assert_eq!(grid_step((2, 2), 2, &mut rng, &spec, 1.0, &fail).0, (2, 3));
        assert_eq!(grid_step((2, 2), 1, &mut rng, &spec, 0.0, &fail).0, (2, 2));
    }

    #[test]
    fn drawn_unconstrained_path_cost() {
        // Right, up, up, right, right, up, up, right.
        let spec = GridSpec::new(NavTask::Nav1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pos = spec.start;
        let (mut total_r, mut total_c) = (0.0, 0.0);
        for a in [1, 2, 2, 1, 1, 2, 2, 1] {
            let (next, r, c) = grid_step(pos, a, &mut rng, &spec, 1.0, &FailureModel::StandStill);
            total_r += r;
            total_c += c;
            pos = next;
        }
        assert_eq!(pos, spec.goal);
        assert_eq!(total_r, -8.0);
        // The path enters (1,0), (1,1), (1,2), (3,2), (3,3) and (3,4).
        assert_eq!(total_c, 6.0);
    }

    #[test]
    fn failure_models() {
        let spec = GridSpec::new(NavTask::Nav2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = spec.index((0, 3));
        let arrows = FailureModel::WorstCaseArrow([s].into_iter().collect());
        assert_eq!(grid_step((0, 3), 1, &mut rng, &spec, 0.0, &arrows).0, (0, 4));
        assert_eq!(grid_step((1, 3), 1, &mut rng, &spec, 0.0, &arrows).0, (1, 3));
        let offset = FailureModel::RandomOffset(vec![((s, 1), spec.index((0, 2)))]);
        assert_eq!(grid_step((0, 3), 1, &mut rng, &spec, 0.0, &offset).0, (0, 2));
        assert_eq!(grid_step((0, 3), 0, &mut rng, &spec, 0.0, &offset).0, (0, 3));
    }

    #[test]
    fn costs_per_step() {
        let spec = GridSpec::new(NavTask::Nav2);
        for s in 0..25 {
            let c = spec.constraint_cost(s, 0, 0);
            assert!(c == 0.0 || c == 0.1 || c == 1.0);
        }
        assert_eq!(spec.cell_cost((0, 4)), 1.0);
        assert_eq!(spec.cell_cost((2, 2)), 0.1);
    }

    #[test]
    fn neighbourhoods() {
        let spec = GridSpec::new(NavTask::Nav1);
        assert_eq!(spec.neighbourhood((0, 0)), vec![0, 1, 5]);
        assert_eq!(spec.neighbourhood((2, 2)).len(), 5);
        assert_eq!(spec.neighbourhood((4, 2)).len(), 4);
        assert!(spec.is_terminal(24));
        assert_eq!(spec.policy_input(spec.index((4, 2))), vec![1.0, 0.5]);
    }

    #[test]
    fn override_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.csv");
        std::fs::write(&path, "x,y,kind\n0,1,grey\n2,2,red\n1,1,left\n").unwrap();
        let t = CellTables::from_csv(&path).unwrap();
        assert!(t.grey.contains(&(0, 1)));
        assert!(t.red.contains(&(2, 2)));
        assert_eq!(t.arrow_at((1, 1)), Some(Move::Left));
        std::fs::write(&path, "x,y,kind\n0,1,lava\n").unwrap();
        assert!(CellTables::from_csv(&path).is_err());
    }
}

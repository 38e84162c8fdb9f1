//! Closed-form solve-time predictions and the breadth-first path oracle.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Cell, CouplingMap};
use crate::pathsolver::{Outcome, PathSolution};

/// Adjacency of a coupling map: an edge exists iff its conductance is
/// positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObstacleGraph {
    rows: usize,
    cols: usize,
    horizontal: Vec<bool>,
    vertical: Vec<bool>,
}

impl ObstacleGraph {
    pub fn from_coupling(map: &CouplingMap) -> Self {
        Self {
            rows: map.rows(),
            cols: map.cols(),
            horizontal: map.horizontal().iter().map(|&g| g > 0.0).collect(),
            vertical: map.vertical().iter().map(|&g| g > 0.0).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// True when `a` and `b` are 4-neighbours joined by an edge.
    pub fn linked(&self, a: Cell, b: Cell) -> bool {
        if !self.contains(a) || !self.contains(b) || a.manhattan(b) != 1 {
            return false;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if lo.row == hi.row {
            self.horizontal[lo.row * (self.cols - 1) + lo.col]
        } else {
            self.vertical[lo.row * self.cols + lo.col]
        }
    }

    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        cell.neighbors(self.rows, self.cols).filter(move |&n| self.linked(cell, n))
    }

    fn check(&self, cell: Cell) -> Result<()> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(Error::OutOfRange { cell, rows: self.rows, cols: self.cols })
        }
    }

    /// Breadth-first step distance from `from` to every cell.
    pub fn distances_from(&self, from: Cell) -> Result<Vec<Option<usize>>> {
        self.check(from)?;
        let mut dist = vec![None; self.rows * self.cols];
        let mut queue = VecDeque::new();
        dist[from.row * self.cols + from.col] = Some(0);
        queue.push_back(from);
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.row * self.cols + cell.col].expect("queued cells have a distance");
            for n in self.neighbors(cell) {
                let slot = &mut dist[n.row * self.cols + n.col];
                if slot.is_none() {
                    *slot = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        Ok(dist)
    }
}

/// Shortest 4-neighbour step count from `from` to `to`, `None` when
/// unreachable.
pub fn bfs_shortest(graph: &ObstacleGraph, from: Cell, to: Cell) -> Result<Option<usize>> {
    graph.check(to)?;
    Ok(graph.distances_from(from)?[to.row * graph.cols + to.col])
}

/// Predicted total solve time (ns) for a `p`-step path: iteration k waits
/// for the front to cover k - 1 cells, summed over k = 1..=p.
pub fn predict_solution_time(p: usize, t_p: f64) -> f64 {
    (p * p.saturating_sub(1)) as f64 * t_p / 2.0
}

/// Worst-case solve time (ns) on an `n` x `m` grid, taking the longest
/// possible path as half the cells.
pub fn worst_case_time(n: usize, m: usize, t_p: f64) -> f64 {
    let nm = n * m;
    (nm * (nm / 2).saturating_sub(1)) as f64 * t_p / 4.0
}

/// Solver result checked against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub outcome: Outcome,
    /// Steps taken, when the solver reached the target.
    pub solver_steps: Option<usize>,
    /// BFS distance, `None` when unreachable.
    pub oracle_steps: Option<usize>,
    /// Reached with the BFS length, or no-path where BFS finds none.
    pub equal: bool,
    /// Every move follows a coupled edge.
    pub legal: bool,
    /// Every move lowers the BFS distance to the target by exactly one.
    pub progress: bool,
}

/// Compares a solution with the BFS oracle on the same (static) map.
pub fn compare_path(solution: &PathSolution, graph: &ObstacleGraph) -> Result<PathReport> {
    let to_target = graph.distances_from(solution.target)?;
    let dist = |c: Cell| {
        if graph.contains(c) {
            to_target[c.row * graph.cols + c.col]
        } else {
            None
        }
    };
    let oracle_steps = dist(solution.start);
    let solver_steps = (solution.outcome == Outcome::Reached).then(|| solution.steps());
    let equal = match solution.outcome {
        Outcome::Reached => solver_steps == oracle_steps,
        Outcome::NoPath => oracle_steps.is_none(),
        Outcome::BudgetExceeded => false,
    };
    let mut legal = true;
    let mut progress = true;
    let mut prev = solution.start;
    for &cell in &solution.path {
        legal &= graph.linked(prev, cell);
        progress &= matches!((dist(prev), dist(cell)), (Some(a), Some(b)) if b + 1 == a);
        prev = cell;
    }
    if solution.outcome == Outcome::Reached {
        legal &= prev == solution.target;
    }
    Ok(PathReport { outcome: solution.outcome, solver_steps, oracle_steps, equal, legal, progress })
}

/// A labelled batch of [`PathReport`]s.
#[derive(Debug, Clone, Default)]
pub struct ComparisonTable {
    pub rows: Vec<(String, PathReport)>,
}

impl ComparisonTable {
    pub fn push(&mut self, label: impl Into<String>, report: PathReport) {
        self.rows.push((label.into(), report));
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|(_, r)| r.equal && r.legal && r.progress)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["case", "outcome", "solver_steps", "oracle_steps", "equal", "legal", "progress"])?;
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for (label, r) in &self.rows {
            let outcome = match r.outcome {
                Outcome::Reached => "reached",
                Outcome::NoPath => "no-path",
                Outcome::BudgetExceeded => "budget-exceeded",
            };
            w.write_record([
                label.as_str(),
                outcome,
                &opt(r.solver_steps),
                &opt(r.oracle_steps),
                &r.equal.to_string(),
                &r.legal.to_string(),
                &r.progress.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.rows.len();
        let count = |pred: fn(&PathReport) -> bool| self.rows.iter().filter(|(_, r)| pred(r)).count();
        write!(
            f,
            "{n} cases: {} match the oracle, {} legal, {} monotone",
            count(|r| r.equal),
            count(|r| r.legal),
            count(|r| r.progress)
        )?;
        for (label, r) in self.rows.iter().filter(|(_, r)| !(r.equal && r.legal && r.progress)) {
            write!(
                f,
                "\n  {label}: {:?} solver {:?} oracle {:?} legal {} progress {}",
                r.outcome, r.solver_steps, r.oracle_steps, r.legal, r.progress
            )?;
        }
        Ok(())
    }
}

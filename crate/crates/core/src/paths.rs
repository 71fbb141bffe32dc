//! Discrete-time control paths and the operations on them.
//!
//! Three kinds of control live on a shared [`TimeGrid`]:
//!
//! - [`StrictControlPath`]: piecewise-constant, left-point convention, one
//!   value in the control set per interval.
//! - [`SingularControlPath`]: a nondecreasing bounded-variation path stored as
//!   nonnegative per-interval increments plus a dedicated jump slot at 0⁺.
//! - [`RelaxedControlPath`]: one probability vector over the discretized
//!   control set per interval, i.e. the measure q(t, da) restricted to the
//!   grid.
//!
//! The module also provides the perturbation constructors used by the
//! verification layers (spike variation of the strict part, convex
//! perturbation of the singular part), the embedding of strict controls as
//! one-hot relaxed controls, the chattering approximation of a relaxed
//! control by a rapidly switching strict one, and the metrics
//! d₁ (disagreement measure, normalized by the horizon), d₂ (sup distance of
//! singular paths) used for near-optimality bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Partition 0 = t₀ < t₁ < … < t_L = T of the time horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    knots: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `steps` intervals on [0, horizon].
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParam(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParam("grid needs at least one step".into()));
        }
        let knots = (0..=steps)
            .map(|j| horizon * j as f64 / steps as f64)
            .collect();
        Ok(Self { horizon, knots })
    }

    /// Grid from explicit knots; must start at 0, end at the horizon, and be
    /// strictly increasing.
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParam("grid needs at least two knots".into()));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidParam("grid must start at t = 0".into()));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParam(
                    "grid knots must be strictly increasing".into(),
                ));
            }
        }
        let horizon = *knots.last().unwrap();
        Ok(Self { horizon, knots })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals L.
    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot(&self, j: usize) -> f64 {
        self.knots[j]
    }

    /// Length of interval j.
    pub fn dt(&self, j: usize) -> f64 {
        self.knots[j + 1] - self.knots[j]
    }

    pub fn min_dt(&self) -> f64 {
        (0..self.steps())
            .map(|j| self.dt(j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Split every interval into `n` equal micro-intervals. Original knots are
    /// preserved bit-for-bit.
    pub fn refine(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("refinement factor must be >= 1".into()));
        }
        let mut knots = Vec::with_capacity(self.steps() * n + 1);
        for j in 0..self.steps() {
            let (a, b) = (self.knots[j], self.knots[j + 1]);
            for k in 0..n {
                knots.push(a + (b - a) * k as f64 / n as f64);
            }
        }
        knots.push(self.horizon);
        Ok(Self {
            horizon: self.horizon,
            knots,
        })
    }

    /// Index of the interval whose left endpoint is the largest knot <= t
    /// (last interval for t >= T).
    pub fn interval_of(&self, t: f64) -> usize {
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&t).expect("finite knots"))
        {
            Ok(j) => j.min(self.steps() - 1),
            Err(j) => j.saturating_sub(1).min(self.steps() - 1),
        }
    }

    /// Two grids are compatible when they have identical step counts and
    /// knots agree to within a relative wiggle of 1e-12.
    pub fn compatible(&self, other: &Self) -> bool {
        if self.knots.len() != other.knots.len() {
            return false;
        }
        let tol = 1e-12 * self.horizon.max(1.0);
        self.knots
            .iter()
            .zip(&other.knots)
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    fn require_compatible(&self, other: &Self, what: &str) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(what.to_string()))
        }
    }
}

/// Piecewise-constant control path u(·); `values[j]` applies on [t_j, t_{j+1}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictControlPath {
    pub grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl StrictControlPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("control dimension must be >= 1".into()));
        }
        if values.len() != grid.steps() * dim {
            return Err(Error::DimensionMismatch(format!(
                "strict path expects {} values, got {}",
                grid.steps() * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(
                "strict control values must be finite".into(),
            ));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Result<Self> {
        let steps = grid.steps();
        let mut values = Vec::with_capacity(steps * value.len());
        for _ in 0..steps {
            values.extend_from_slice(value);
        }
        Self::new(grid, value.len(), values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_value(&mut self, j: usize, value: &[f64]) {
        self.values[j * self.dim..(j + 1) * self.dim].copy_from_slice(value);
    }

    /// Check every interval value is (exactly) a member of `control_set`.
    pub fn validate_in(&self, control_set: &[Vec<f64>]) -> Result<()> {
        for j in 0..self.grid.steps() {
            if !control_set.iter().any(|a| a.as_slice() == self.value(j)) {
                return Err(Error::ControlNotInSet { interval: j });
            }
        }
        Ok(())
    }

    /// Copy onto a grid refined by `n`; each original interval value repeats
    /// on its micro-intervals.
    pub fn refine(&self, n: usize) -> Result<Self> {
        let grid = self.grid.refine(n)?;
        let mut values = Vec::with_capacity(self.values.len() * n);
        for j in 0..self.grid.steps() {
            for _ in 0..n {
                values.extend_from_slice(self.value(j));
            }
        }
        Self::new(grid, self.dim, values)
    }

    /// One row per interval: t_left, t_right, value components.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_left,t_right");
        for c in 0..self.dim {
            out.push_str(&format!(",u{c}"));
        }
        out.push('\n');
        for j in 0..self.grid.steps() {
            out.push_str(&format!("{},{}", self.grid.knot(j), self.grid.knot(j + 1)));
            for v in self.value(j) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (rows, dim) = parse_csv_rows(text, 2)?;
        let mut knots: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        knots.push(rows.last().map(|r| r[1]).unwrap_or(0.0));
        let grid = TimeGrid::from_knots(knots)?;
        let values = rows.iter().flat_map(|r| r[2..].to_vec()).collect();
        Self::new(grid, dim, values)
    }
}

/// Nondecreasing singular control path η(·), stored as the jump at 0⁺ plus
/// one nonnegative increment per interval (Δη_j = η(t_{j+1}) − η(t_j)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularControlPath {
    pub grid: TimeGrid,
    dim: usize,
    initial_jump: Vec<f64>,
    increments: Vec<f64>,
}

impl SingularControlPath {
    pub fn new(
        grid: TimeGrid,
        dim: usize,
        initial_jump: Vec<f64>,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam(
                "singular dimension must be >= 1".into(),
            ));
        }
        if initial_jump.len() != dim || increments.len() != grid.steps() * dim {
            return Err(Error::DimensionMismatch(format!(
                "singular path expects jump of length {dim} and {} increments",
                grid.steps() * dim
            )));
        }
        for (c, v) in initial_jump.iter().enumerate() {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeIncrement {
                    interval: 0,
                    component: c,
                    value: *v,
                });
            }
        }
        for (idx, v) in increments.iter().enumerate() {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeIncrement {
                    interval: idx / dim,
                    component: idx % dim,
                    value: *v,
                });
            }
        }
        Ok(Self {
            grid,
            dim,
            initial_jump,
            increments,
        })
    }

    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        let steps = grid.steps();
        Self {
            grid,
            dim,
            initial_jump: vec![0.0; dim],
            increments: vec![0.0; steps * dim],
        }
    }

    /// Pure jump at 0⁺, flat afterwards.
    pub fn jump_at_zero(grid: TimeGrid, jump: Vec<f64>) -> Result<Self> {
        let dim = jump.len();
        let steps = grid.steps();
        Self::new(grid, dim, jump, vec![0.0; steps * dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial_jump(&self) -> &[f64] {
        &self.initial_jump
    }

    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn set_initial_jump(&mut self, jump: &[f64]) -> Result<()> {
        if jump.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParam("jump must be nonnegative".into()));
        }
        self.initial_jump.copy_from_slice(jump);
        Ok(())
    }

    pub fn set_increment(&mut self, j: usize, inc: &[f64]) -> Result<()> {
        if inc.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParam("increment must be nonnegative".into()));
        }
        self.increments[j * self.dim..(j + 1) * self.dim].copy_from_slice(inc);
        Ok(())
    }

    /// η evaluated just after knot j: the 0⁺ jump plus every increment of the
    /// intervals before j.
    pub fn knot_value(&self, j: usize) -> Vec<f64> {
        let mut v = self.initial_jump.clone();
        for i in 0..j {
            for c in 0..self.dim {
                v[c] += self.increments[i * self.dim + c];
            }
        }
        v
    }

    /// Total mass η(T).
    pub fn total(&self) -> Vec<f64> {
        self.knot_value(self.grid.steps())
    }

    /// Same path on a grid refined by `n`; each original increment stays
    /// attached to the first micro-interval so it still acts at the original
    /// interval start.
    pub fn refine(&self, n: usize) -> Result<Self> {
        let grid = self.grid.refine(n)?;
        let mut increments = vec![0.0; grid.steps() * self.dim];
        for j in 0..self.grid.steps() {
            let dst = j * n * self.dim;
            increments[dst..dst + self.dim].copy_from_slice(self.increment(j));
        }
        Self::new(grid, self.dim, self.initial_jump.clone(), increments)
    }

    /// First row carries the 0⁺ jump (t_left = t_right = 0), then one row of
    /// increments per interval.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_left,t_right");
        for c in 0..self.dim {
            out.push_str(&format!(",d_eta{c}"));
        }
        out.push('\n');
        out.push_str("0,0");
        for v in &self.initial_jump {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
        for j in 0..self.grid.steps() {
            out.push_str(&format!("{},{}", self.grid.knot(j), self.grid.knot(j + 1)));
            for v in self.increment(j) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (rows, dim) = parse_csv_rows(text, 2)?;
        if rows.len() < 2 {
            return Err(Error::InvalidParam(
                "singular path csv needs a jump row and at least one interval".into(),
            ));
        }
        let jump = rows[0][2..].to_vec();
        let mut knots: Vec<f64> = rows[1..].iter().map(|r| r[0]).collect();
        knots.push(rows.last().map(|r| r[1]).unwrap_or(0.0));
        let grid = TimeGrid::from_knots(knots)?;
        let increments = rows[1..].iter().flat_map(|r| r[2..].to_vec()).collect();
        Self::new(grid, dim, jump, increments)
    }
}

/// Measure-valued control path: one probability vector over the control set
/// per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedControlPath {
    pub grid: TimeGrid,
    control_set: Vec<Vec<f64>>,
    /// Flat [L × |control_set|], row j = weights on interval j.
    weights: Vec<f64>,
}

impl RelaxedControlPath {
    pub fn new(grid: TimeGrid, control_set: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let atoms = control_set.len();
        if atoms == 0 {
            return Err(Error::InvalidParam("control set must be nonempty".into()));
        }
        if weights.len() != grid.steps() * atoms {
            return Err(Error::DimensionMismatch(format!(
                "relaxed path expects {} weights, got {}",
                grid.steps() * atoms,
                weights.len()
            )));
        }
        for j in 0..grid.steps() {
            let row = &weights[j * atoms..(j + 1) * atoms];
            if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "weights on interval {j} must be nonnegative"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!(
                    "weights on interval {j} sum to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            grid,
            control_set,
            weights,
        })
    }

    /// Same weight vector on every interval.
    pub fn constant(grid: TimeGrid, control_set: Vec<Vec<f64>>, row: &[f64]) -> Result<Self> {
        let steps = grid.steps();
        let mut weights = Vec::with_capacity(steps * row.len());
        for _ in 0..steps {
            weights.extend_from_slice(row);
        }
        Self::new(grid, control_set, weights)
    }

    /// Uniform mixture over the whole control set on every interval.
    pub fn uniform(grid: TimeGrid, control_set: Vec<Vec<f64>>) -> Result<Self> {
        let atoms = control_set.len();
        let row = vec![1.0 / atoms as f64; atoms];
        Self::constant(grid, control_set, &row)
    }

    pub fn control_set(&self) -> &[Vec<f64>] {
        &self.control_set
    }

    pub fn atoms(&self) -> usize {
        self.control_set.len()
    }

    pub fn weights_at(&self, j: usize) -> &[f64] {
        &self.weights[j * self.atoms()..(j + 1) * self.atoms()]
    }

    /// If every interval is a one-hot vector, recover the strict path.
    pub fn extract_strict(&self) -> Option<StrictControlPath> {
        let dim = self.control_set[0].len();
        let mut values = Vec::with_capacity(self.grid.steps() * dim);
        for j in 0..self.grid.steps() {
            let row = self.weights_at(j);
            let mut hot = None;
            for (a, w) in row.iter().enumerate() {
                if *w == 1.0 {
                    hot = Some(a);
                } else if *w != 0.0 {
                    return None;
                }
            }
            values.extend_from_slice(&self.control_set[hot?]);
        }
        StrictControlPath::new(self.grid.clone(), dim, values).ok()
    }

    /// Copy onto a grid refined by `n`, repeating each interval's weights.
    pub fn refine(&self, n: usize) -> Result<Self> {
        let grid = self.grid.refine(n)?;
        let atoms = self.atoms();
        let mut weights = Vec::with_capacity(self.weights.len() * n);
        for j in 0..self.grid.steps() {
            for _ in 0..n {
                weights.extend_from_slice(self.weights_at(j));
            }
        }
        Self::new(grid, self.control_set.clone(), weights)
    }

    /// Header row names the control-set atoms (coordinates joined by `;`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_left,t_right");
        for point in &self.control_set {
            let label: Vec<String> = point.iter().map(|x| x.to_string()).collect();
            out.push_str(&format!(",{}", label.join(";")));
        }
        out.push('\n');
        for j in 0..self.grid.steps() {
            out.push_str(&format!("{},{}", self.grid.knot(j), self.grid.knot(j + 1)));
            for w in self.weights_at(j) {
                out.push_str(&format!(",{w}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParam("empty csv".into()))?;
        let cells: Vec<&str> = header.split(',').collect();
        if cells.len() < 3 {
            return Err(Error::InvalidParam("relaxed csv needs atom columns".into()));
        }
        let control_set: Vec<Vec<f64>> = cells[2..]
            .iter()
            .map(|c| {
                c.split(';')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidParam(format!("bad atom `{x}`: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut knots = Vec::new();
        let mut weights = Vec::new();
        let mut last_right = 0.0;
        for line in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidParam(format!("bad csv value `{x}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != 2 + control_set.len() {
                return Err(Error::InvalidParam("ragged relaxed csv row".into()));
            }
            knots.push(row[0]);
            last_right = row[1];
            weights.extend_from_slice(&row[2..]);
        }
        knots.push(last_right);
        let grid = TimeGrid::from_knots(knots)?;
        Self::new(grid, control_set, weights)
    }
}

fn parse_csv_rows(text: &str, lead: usize) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut rows = Vec::new();
    let mut dim = 0;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() <= lead {
            return Err(Error::InvalidParam("csv row too short".into()));
        }
        // Skip the header row.
        if cells[0].parse::<f64>().is_err() {
            continue;
        }
        let row: Vec<f64> = cells
            .iter()
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParam(format!("bad csv value `{c}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if dim == 0 {
            dim = row.len() - lead;
        } else if row.len() - lead != dim {
            return Err(Error::InvalidParam("ragged csv".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidParam("csv has no data rows".into()));
    }
    Ok((rows, dim))
}

/// Parameters of a spike (needle) variation and of the convex weight used for
/// singular perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub tau: f64,
    pub epsilon: f64,
    pub v: Vec<f64>,
    pub alpha: f64,
}

impl PerturbationParams {
    pub fn spike(tau: f64, epsilon: f64, v: Vec<f64>) -> Self {
        Self {
            tau,
            epsilon,
            v,
            alpha: 0.0,
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParam("spike width must be positive".into()));
        }
        if self.tau < 0.0 || self.tau + self.epsilon > horizon + 1e-12 * horizon.max(1.0) {
            return Err(Error::InvalidParam(format!(
                "spike window [{}, {}] leaves [0, {horizon}]",
                self.tau,
                self.tau + self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam("alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Replace u by `p.v` on every interval whose left endpoint falls in
/// [τ, τ+ε); u elsewhere.
pub fn spike_variation(u: &StrictControlPath, p: &PerturbationParams) -> Result<StrictControlPath> {
    p.validate(u.grid.horizon())?;
    if p.v.len() != u.dim() {
        return Err(Error::DimensionMismatch(
            "spike value dimension differs from the control dimension".into(),
        ));
    }
    let min_step = u.grid.min_dt();
    if p.epsilon < min_step {
        return Err(Error::SpikeUnresolvable {
            width: p.epsilon,
            min_step,
        });
    }
    let mut out = u.clone();
    for j in 0..u.grid.steps() {
        let t = u.grid.knot(j);
        if t >= p.tau && t < p.tau + p.epsilon {
            out.set_value(j, &p.v);
        }
    }
    Ok(out)
}

/// η + α(ξ − η) applied slot-by-slot: the 0⁺ jump and every interval
/// increment are blended with weights (1−α, α).
pub fn convex_perturbation(
    eta: &SingularControlPath,
    xi: &SingularControlPath,
    alpha: f64,
) -> Result<SingularControlPath> {
    eta.grid
        .require_compatible(&xi.grid, "convex perturbation needs a common grid")?;
    if eta.dim() != xi.dim() {
        return Err(Error::DimensionMismatch(
            "singular paths have different dimensions".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam("alpha must lie in [0, 1]".into()));
    }
    let blend = |a: f64, b: f64| (1.0 - alpha) * a + alpha * b;
    let jump: Vec<f64> = eta
        .initial_jump()
        .iter()
        .zip(xi.initial_jump())
        .map(|(a, b)| blend(*a, *b))
        .collect();
    let increments: Vec<f64> = eta
        .increments()
        .iter()
        .zip(xi.increments())
        .map(|(a, b)| blend(*a, *b))
        .collect();
    SingularControlPath::new(eta.grid.clone(), eta.dim(), jump, increments)
}

/// Embed a strict control as the relaxed control carrying weight one on the
/// matching control-set atom on every interval.
pub fn embed_strict(
    u: &StrictControlPath,
    control_set: &[Vec<f64>],
) -> Result<RelaxedControlPath> {
    let atoms = control_set.len();
    let mut weights = vec![0.0; u.grid.steps() * atoms];
    for j in 0..u.grid.steps() {
        let idx = control_set
            .iter()
            .position(|a| a.as_slice() == u.value(j))
            .ok_or(Error::ControlNotInSet { interval: j })?;
        weights[j * atoms + idx] = 1.0;
    }
    RelaxedControlPath::new(u.grid.clone(), control_set.to_vec(), weights)
}

/// Chattering approximation: refine every interval into `n` micro-intervals
/// and assign control atoms so the occupation fractions match the interval's
/// weight vector.
///
/// Counts come from largest-remainder apportionment; the emission order is
/// round-robin over atoms ranked by weight. Exact ties (equal remainders or
/// equal weights) are broken by a seeded hash so the result is deterministic.
pub fn chattering(q: &RelaxedControlPath, n: usize, seed: u64) -> Result<StrictControlPath> {
    if n == 0 {
        return Err(Error::InvalidParam("chattering needs n >= 1".into()));
    }
    let atoms = q.atoms();
    let dim = q.control_set()[0].len();
    let grid = q.grid.refine(n)?;
    let mut values = Vec::with_capacity(grid.steps() * dim);
    for j in 0..q.grid.steps() {
        let w = q.weights_at(j);
        // Largest-remainder apportionment of n slots.
        let mut counts: Vec<usize> = Vec::with_capacity(atoms);
        let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(atoms);
        let mut assigned = 0usize;
        for (a, wa) in w.iter().enumerate() {
            let quota = wa * n as f64;
            let base = quota.floor().min(n as f64) as usize;
            counts.push(base);
            assigned += base;
            remainders.push((a, quota - base as f64));
        }
        remainders.sort_by(|x, y| {
            y.1.partial_cmp(&x.1)
                .unwrap()
                .then_with(|| rng::tie_break(seed, j as u64, x.0 as u64, 0)
                    .cmp(&rng::tie_break(seed, j as u64, y.0 as u64, 0)))
        });
        let mut leftover = n.saturating_sub(assigned);
        for (a, _) in &remainders {
            if leftover == 0 {
                break;
            }
            counts[*a] += 1;
            leftover -= 1;
        }
        // Round-robin emission over atoms ranked by weight (descending).
        let mut rank: Vec<usize> = (0..atoms).collect();
        rank.sort_by(|&x, &y| {
            w[y].partial_cmp(&w[x])
                .unwrap()
                .then_with(|| rng::tie_break(seed, j as u64, x as u64, 1)
                    .cmp(&rng::tie_break(seed, j as u64, y as u64, 1)))
        });
        let mut remaining = counts.clone();
        let mut emitted = 0;
        while emitted < n {
            for &a in &rank {
                if remaining[a] > 0 {
                    values.extend_from_slice(&q.control_set()[a]);
                    remaining[a] -= 1;
                    emitted += 1;
                }
            }
        }
    }
    StrictControlPath::new(grid, dim, values)
}

/// Discretized weak-distance diagnostic: split [0, T] into `windows` equal
/// windows, average each path's weight vectors over every window
/// (length-weighted), and return the largest total-variation distance between
/// the window averages.
pub fn weak_distance(
    q1: &RelaxedControlPath,
    q2: &RelaxedControlPath,
    windows: usize,
) -> Result<f64> {
    if windows == 0 {
        return Err(Error::InvalidParam("need at least one window".into()));
    }
    if q1.control_set() != q2.control_set() {
        return Err(Error::InvalidParam(
            "weak distance needs identical control sets".into(),
        ));
    }
    let horizon = q1.grid.horizon();
    if (horizon - q2.grid.horizon()).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::GridMismatch(
            "weak distance needs a common horizon".into(),
        ));
    }
    let atoms = q1.atoms();
    let mut worst: f64 = 0.0;
    for win in 0..windows {
        let lo = horizon * win as f64 / windows as f64;
        let hi = horizon * (win + 1) as f64 / windows as f64;
        let avg = |q: &RelaxedControlPath| -> Vec<f64> {
            let mut acc = vec![0.0; atoms];
            for j in 0..q.grid.steps() {
                let a = q.grid.knot(j).max(lo);
                let b = q.grid.knot(j + 1).min(hi);
                if b > a {
                    let len = b - a;
                    for (s, w) in acc.iter_mut().zip(q.weights_at(j)) {
                        *s += len * w;
                    }
                }
            }
            let total = hi - lo;
            acc.iter_mut().for_each(|s| *s /= total);
            acc
        };
        let a1 = avg(q1);
        let a2 = avg(q2);
        let tv = 0.5
            * a1
                .iter()
                .zip(&a2)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        worst = worst.max(tv);
    }
    Ok(worst)
}

/// Disagreement measure of two strict paths: total length of intervals whose
/// values differ, normalized by the horizon.
pub fn metric_d1(u: &StrictControlPath, v: &StrictControlPath) -> Result<f64> {
    u.grid
        .require_compatible(&v.grid, "d1 needs a common grid")?;
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch(
            "strict paths have different dimensions".into(),
        ));
    }
    let mut measure = 0.0;
    for j in 0..u.grid.steps() {
        if u.value(j) != v.value(j) {
            measure += u.grid.dt(j);
        }
    }
    Ok(measure / u.grid.horizon())
}

/// Sup distance of two singular paths over the grid knots.
pub fn metric_d2(eta: &SingularControlPath, xi: &SingularControlPath) -> Result<f64> {
    eta.grid
        .require_compatible(&xi.grid, "d2 needs a common grid")?;
    if eta.dim() != xi.dim() {
        return Err(Error::DimensionMismatch(
            "singular paths have different dimensions".into(),
        ));
    }
    let mut sup: f64 = 0.0;
    for j in 0..=eta.grid.steps() {
        let a = eta.knot_value(j);
        let b = xi.knot_value(j);
        let dist = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        sup = sup.max(dist);
    }
    Ok(sup)
}

/// Combined metric d = d₁ + d₂ on pairs (u, η).
pub fn metric_d(
    a: (&StrictControlPath, &SingularControlPath),
    b: (&StrictControlPath, &SingularControlPath),
) -> Result<f64> {
    Ok(metric_d1(a.0, b.0)? + metric_d2(a.1, b.1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> TimeGrid {
        TimeGrid::uniform(1.0, 10).unwrap()
    }

    #[test]
    fn spike_replaces_window() {
        let u = StrictControlPath::constant(grid10(), &[0.0]).unwrap();
        let p = PerturbationParams::spike(0.3, 0.2, vec![1.0]);
        let spiked = spike_variation(&u, &p).unwrap();
        for j in 0..10 {
            let expect = if j == 3 || j == 4 { 1.0 } else { 0.0 };
            assert_eq!(spiked.value(j), &[expect], "interval {j}");
        }
    }

    #[test]
    fn spike_covering_everything_is_constant() {
        let u = StrictControlPath::constant(grid10(), &[0.0]).unwrap();
        let p = PerturbationParams::spike(0.0, 1.0, vec![2.0]);
        let spiked = spike_variation(&u, &p).unwrap();
        assert!((0..10).all(|j| spiked.value(j) == [2.0]));
    }

    #[test]
    fn spike_with_matching_value_is_noop() {
        let u = StrictControlPath::constant(grid10(), &[1.5]).unwrap();
        let p = PerturbationParams::spike(0.2, 0.3, vec![1.5]);
        assert_eq!(spike_variation(&u, &p).unwrap(), u);
    }

    #[test]
    fn spike_idempotent() {
        let u = StrictControlPath::constant(grid10(), &[0.0]).unwrap();
        let p = PerturbationParams::spike(0.4, 0.3, vec![-1.0]);
        let once = spike_variation(&u, &p).unwrap();
        let twice = spike_variation(&once, &p).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn spike_below_grid_step_is_rejected() {
        let u = StrictControlPath::constant(grid10(), &[0.0]).unwrap();
        let p = PerturbationParams::spike(0.3, 0.05, vec![1.0]);
        assert!(matches!(
            spike_variation(&u, &p),
            Err(Error::SpikeUnresolvable { .. })
        ));
    }

    #[test]
    fn convex_perturbation_endpoints() {
        let eta = SingularControlPath::zero(grid10(), 1);
        let xi = SingularControlPath::jump_at_zero(grid10(), vec![2.0]).unwrap();
        assert_eq!(convex_perturbation(&eta, &xi, 0.0).unwrap(), eta);
        assert_eq!(convex_perturbation(&eta, &xi, 1.0).unwrap(), xi);
        let half = convex_perturbation(&eta, &xi, 0.5).unwrap();
        assert_eq!(half.initial_jump(), &[1.0]);
        assert!(half.increments().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn negative_increment_rejected() {
        let err = SingularControlPath::new(grid10(), 1, vec![0.0], {
            let mut v = vec![0.0; 10];
            v[4] = -0.1;
            v
        });
        assert!(matches!(err, Err(Error::NegativeIncrement { .. })));
    }

    #[test]
    fn embed_one_hot() {
        let set = vec![vec![-1.0], vec![1.0]];
        let u = StrictControlPath::constant(grid10(), &[-1.0]).unwrap();
        let q = embed_strict(&u, &set).unwrap();
        for j in 0..10 {
            assert_eq!(q.weights_at(j), &[1.0, 0.0]);
        }
        assert_eq!(q.extract_strict().unwrap(), u);
    }

    #[test]
    fn embed_rejects_foreign_values() {
        let set = vec![vec![-1.0], vec![1.0]];
        let u = StrictControlPath::constant(grid10(), &[0.5]).unwrap();
        assert!(matches!(
            embed_strict(&u, &set),
            Err(Error::ControlNotInSet { .. })
        ));
    }

    #[test]
    fn chattering_one_hot_matches_embedding() {
        let set = vec![vec![-1.0], vec![1.0]];
        let mut values = Vec::new();
        for j in 0..10 {
            values.push(if j % 3 == 0 { -1.0 } else { 1.0 });
        }
        let u = StrictControlPath::new(grid10(), 1, values).unwrap();
        let q = embed_strict(&u, &set).unwrap();
        let ch = chattering(&q, 4, 9).unwrap();
        assert_eq!(ch, u.refine(4).unwrap());
    }

    #[test]
    fn chattering_half_half_alternates() {
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let set = vec![vec![-1.0], vec![1.0]];
        let q = RelaxedControlPath::constant(grid, set, &[0.5, 0.5]).unwrap();
        let ch = chattering(&q, 10, 1).unwrap();
        let vals: Vec<f64> = (0..10).map(|j| ch.value(j)[0]).collect();
        let plus = vals.iter().filter(|v| **v == 1.0).count();
        assert_eq!(plus, 5);
        for w in vals.windows(2) {
            assert!(w[0] != w[1], "path should alternate, got {vals:?}");
        }
    }

    #[test]
    fn chattering_occupation_error_below_one_over_n() {
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let set = vec![vec![0.0], vec![1.0], vec![2.0]];
        let q = RelaxedControlPath::constant(grid, set.clone(), &[0.2, 0.5, 0.3]).unwrap();
        for n in [1usize, 2, 4, 8, 16] {
            let ch = chattering(&q, n, 3).unwrap();
            for j in 0..3 {
                for (a, atom) in set.iter().enumerate() {
                    let count = (0..n)
                        .filter(|k| ch.value(j * n + k) == atom.as_slice())
                        .count();
                    let frac = count as f64 / n as f64;
                    let target = q.weights_at(j)[a];
                    assert!(
                        (frac - target).abs() <= 1.0 / n as f64 + 1e-12,
                        "n={n} interval {j} atom {a}: {frac} vs {target}"
                    );
                }
            }
        }
    }

    #[test]
    fn weak_distance_basics() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let set = vec![vec![-1.0], vec![1.0]];
        let q1 = RelaxedControlPath::constant(grid.clone(), set.clone(), &[1.0, 0.0]).unwrap();
        let q2 = RelaxedControlPath::constant(grid.clone(), set.clone(), &[0.0, 1.0]).unwrap();
        assert_eq!(weak_distance(&q1, &q1, 5).unwrap(), 0.0);
        assert_eq!(weak_distance(&q1, &q2, 5).unwrap(), 1.0);

        // Window-average of an alternating chattered path equals the mixture.
        let q = RelaxedControlPath::constant(grid, set.clone(), &[0.5, 0.5]).unwrap();
        let ch = chattering(&q, 2, 7).unwrap();
        let ch_embedded = embed_strict(&ch, &set).unwrap();
        let d = weak_distance(&ch_embedded, &q.refine(2).unwrap(), 1).unwrap();
        assert!(d < 1e-12, "got {d}");
    }

    #[test]
    fn d1_measures_disagreement() {
        let u = StrictControlPath::constant(grid10(), &[0.0]).unwrap();
        let mut v = u.clone();
        v.set_value(3, &[1.0]);
        v.set_value(4, &[1.0]);
        assert_eq!(metric_d1(&u, &u).unwrap(), 0.0);
        assert!((metric_d1(&u, &v).unwrap() - 0.2).abs() < 1e-15);

        let p = PerturbationParams::spike(0.5, 0.1, vec![2.0]);
        let spiked = spike_variation(&u, &p).unwrap();
        assert!((metric_d1(&u, &spiked).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn d2_is_sup_distance() {
        let eta = SingularControlPath::zero(grid10(), 1);
        let xi = SingularControlPath::jump_at_zero(grid10(), vec![2.0]).unwrap();
        assert_eq!(metric_d2(&eta, &eta).unwrap(), 0.0);
        assert_eq!(metric_d2(&eta, &xi).unwrap(), 2.0);
        for alpha in [0.25, 0.5, 0.75] {
            let blended = convex_perturbation(&eta, &xi, alpha).unwrap();
            let lhs = metric_d2(&blended, &eta).unwrap();
            let rhs = alpha * metric_d2(&xi, &eta).unwrap();
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_refinement_keeps_knots() {
        let g = TimeGrid::uniform(2.0, 7).unwrap();
        let r = g.refine(3).unwrap();
        assert_eq!(r.steps(), 21);
        for j in 0..=7 {
            assert_eq!(r.knot(3 * j), g.knot(j));
        }
    }

    #[test]
    fn csv_round_trips() {
        let u = StrictControlPath::constant(grid10(), &[0.25, -1.5]).unwrap();
        let back = StrictControlPath::from_csv(&u.to_csv()).unwrap();
        assert_eq!(u, back);

        let mut eta = SingularControlPath::zero(grid10(), 1);
        eta.set_initial_jump(&[0.5]).unwrap();
        eta.set_increment(4, &[0.125]).unwrap();
        let back = SingularControlPath::from_csv(&eta.to_csv()).unwrap();
        assert_eq!(eta, back);

        let set = vec![vec![-1.0], vec![1.0]];
        let q = RelaxedControlPath::constant(grid10(), set, &[0.25, 0.75]).unwrap();
        let back = RelaxedControlPath::from_csv(&q.to_csv()).unwrap();
        assert_eq!(q, back);
    }
}

//! Forward simulation of the controlled mean-field dynamics by an
//! interacting-particle Euler scheme, plus cost evaluation.
//!
//! The mean-field term E[X(t)] is replaced by the synchronous empirical mean
//! of one coupled N-particle system: at every step the mean is computed
//! first, then all particles advance seeing that same mean,
//!
//! ```text
//! Xⁱ_{j+1} = Xⁱ_j + b(t_j, Xⁱ_j, X̄_j, u_j) Δt_j
//!          + σ(t_j, Xⁱ_j, X̄_j) ΔWⁱ_j + G(t_j) Δη_j.
//! ```
//!
//! Noise is counter-based: ΔWⁱ_j is a pure function of
//! (seed, particle, step, component), so ensembles are bit-reproducible and
//! independent of iteration order and thread count. All integrals use the
//! left-point convention; dη acts at interval starts with a dedicated 0⁺ jump
//! slot, so `states[·][0] = x₀ + G(0)·Δη(0⁺)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{RelaxedControlPath, SingularControlPath, StrictControlPath, TimeGrid};
use crate::problem::ProblemSpec;
use crate::rng;

/// Ensemble size, noise seed, and the antithetic-pairing flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub particles: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            antithetic: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidParam(
                "need at least 2 particles for variance diagnostics".into(),
            ));
        }
        Ok(())
    }
}

/// Addressable Brownian increments shared by the forward, variational, and
/// adjoint solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseField {
    pub seed: u64,
    pub antithetic: bool,
}

impl NoiseField {
    /// Standard normal driving particle `i` at step `j`, component `c`.
    /// Antithetic pairing mirrors odd particles onto their even partner.
    pub fn normal(&self, i: usize, j: usize, c: usize) -> f64 {
        if self.antithetic && i % 2 == 1 {
            -rng::normal(self.seed, (i - 1) as u64, j as u64, c as u64)
        } else {
            rng::normal(self.seed, i as u64, j as u64, c as u64)
        }
    }

    /// Brownian increment over an interval of length `dt`.
    pub fn delta_w(&self, i: usize, j: usize, c: usize, dt: f64) -> f64 {
        dt.sqrt() * self.normal(i, j, c)
    }
}

/// Either kind of absolutely-continuous control, borrowed.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    Strict(&'a StrictControlPath),
    Relaxed(&'a RelaxedControlPath),
}

impl<'a> Control<'a> {
    pub fn grid(&self) -> &TimeGrid {
        match self {
            Control::Strict(u) => &u.grid,
            Control::Relaxed(q) => &q.grid,
        }
    }

    /// Drift under this control: b(t, x, y, u_j) for a strict control, the
    /// weight-averaged drift for a relaxed one. Atoms with weight exactly
    /// zero are skipped, so a one-hot relaxed control reproduces the strict
    /// arithmetic bit-for-bit.
    pub fn drift(&self, spec: &ProblemSpec, j: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Control::Strict(u) => spec.drift(t, x, y, u.value(j), out),
            Control::Relaxed(q) => {
                out.fill(0.0);
                let mut tmp = vec![0.0; out.len()];
                for (a, w) in q.weights_at(j).iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    spec.drift(t, x, y, &q.control_set()[a], &mut tmp);
                    if *w == 1.0 {
                        out.copy_from_slice(&tmp);
                    } else {
                        for (o, v) in out.iter_mut().zip(&tmp) {
                            *o += w * v;
                        }
                    }
                }
            }
        }
    }

    /// Running cost under this control (weight-averaged when relaxed).
    pub fn running_cost(&self, spec: &ProblemSpec, j: usize, t: f64, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Control::Strict(u) => spec.running_cost(t, x, y, u.value(j)),
            Control::Relaxed(q) => {
                let mut acc = 0.0;
                for (a, w) in q.weights_at(j).iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let v = spec.running_cost(t, x, y, &q.control_set()[a]);
                    acc += if *w == 1.0 { v } else { w * v };
                }
                acc
            }
        }
    }

    /// Weight-averaged coefficient gradient helper used by the adjoint
    /// driver: writes Σ_a w_a · g(a) into `out`.
    pub fn average_grad<F>(&self, j: usize, out: &mut [f64], mut eval: F)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        match self {
            Control::Strict(u) => eval(u.value(j), out),
            Control::Relaxed(q) => {
                out.fill(0.0);
                let mut tmp = vec![0.0; out.len()];
                for (a, w) in q.weights_at(j).iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    eval(&q.control_set()[a], &mut tmp);
                    if *w == 1.0 {
                        out.copy_from_slice(&tmp);
                    } else {
                        for (o, v) in out.iter_mut().zip(&tmp) {
                            *o += w * v;
                        }
                    }
                }
            }
        }
    }
}

/// N particle trajectories of the controlled system with the empirical mean
/// standing in for E[X(·)].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePath {
    pub grid: TimeGrid,
    particles: usize,
    state_dim: usize,
    /// Flat [N × (L+1) × n], particle-major.
    states: Vec<f64>,
    /// Flat [(L+1) × n].
    empirical_mean: Vec<f64>,
    pub noise: NoiseField,
}

impl EnsemblePath {
    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state(&self, i: usize, j: usize) -> &[f64] {
        let n = self.state_dim;
        let stride = (self.grid.steps() + 1) * n;
        &self.states[i * stride + j * n..i * stride + (j + 1) * n]
    }

    pub fn mean_at(&self, j: usize) -> &[f64] {
        &self.empirical_mean[j * self.state_dim..(j + 1) * self.state_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Largest pointwise distance to another ensemble over all particles and
    /// knots (both must share the shape).
    pub fn sup_distance(&self, other: &EnsemblePath) -> Result<f64> {
        if self.states.len() != other.states.len() {
            return Err(Error::DimensionMismatch(
                "ensembles have different shapes".into(),
            ));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Per-knot summary: t, mean components, cross-particle std components.
    pub fn summary_csv(&self) -> String {
        let n = self.state_dim;
        let mut out = String::from("t");
        for c in 0..n {
            out.push_str(&format!(",mean{c}"));
        }
        for c in 0..n {
            out.push_str(&format!(",std{c}"));
        }
        out.push('\n');
        for j in 0..=self.grid.steps() {
            out.push_str(&format!("{}", self.grid.knot(j)));
            let mean = self.mean_at(j);
            for m in mean {
                out.push_str(&format!(",{m}"));
            }
            for c in 0..n {
                let var = (0..self.particles)
                    .map(|i| {
                        let v = self.state(i, j)[c] - mean[c];
                        v * v
                    })
                    .sum::<f64>()
                    / (self.particles - 1).max(1) as f64;
                out.push_str(&format!(",{}", var.sqrt()));
            }
            out.push('\n');
        }
        out
    }

    /// Full trajectories as little-endian f64, row-major [particle, knot,
    /// component], preceded by a header of three little-endian u64: N, L, n.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + self.states.len() * 8);
        buf.extend_from_slice(&(self.particles as u64).to_le_bytes());
        buf.extend_from_slice(&(self.grid.steps() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.state_dim as u64).to_le_bytes());
        for v in &self.states {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }
}

/// Simulate under a strict control.
pub fn simulate(
    spec: &ProblemSpec,
    u: &StrictControlPath,
    eta: &SingularControlPath,
    cfg: &SimConfig,
) -> Result<EnsemblePath> {
    simulate_control(spec, Control::Strict(u), eta, cfg)
}

/// Simulate under a relaxed control: the drift is weight-averaged over the
/// control measure, the diffusion is control-free and unchanged.
pub fn simulate_relaxed(
    spec: &ProblemSpec,
    q: &RelaxedControlPath,
    eta: &SingularControlPath,
    cfg: &SimConfig,
) -> Result<EnsemblePath> {
    simulate_control(spec, Control::Relaxed(q), eta, cfg)
}

pub fn simulate_control(
    spec: &ProblemSpec,
    control: Control<'_>,
    eta: &SingularControlPath,
    cfg: &SimConfig,
) -> Result<EnsemblePath> {
    cfg.validate()?;
    spec.validate_dims()?;
    let grid = control.grid();
    if !grid.compatible(&eta.grid) {
        return Err(Error::GridMismatch(
            "control and singular paths must share the grid".into(),
        ));
    }
    if let Control::Relaxed(q) = control {
        if q.control_set() != spec.control_set.as_slice() {
            return Err(Error::InvalidParam(
                "relaxed control is defined over a different control set".into(),
            ));
        }
    }
    let (n, d, m) = (spec.state_dim, spec.noise_dim, spec.singular_dim);
    let steps = grid.steps();
    let big_n = cfg.particles;
    let stride = (steps + 1) * n;
    let noise = NoiseField {
        seed: cfg.seed,
        antithetic: cfg.antithetic,
    };

    let mut states = vec![0.0; big_n * stride];
    let mut empirical_mean = vec![0.0; (steps + 1) * n];
    let mut gain = vec![0.0; n * m];

    // Initial state: x0 plus the 0⁺ singular jump.
    spec.gain(0.0, &mut gain);
    let mut x_init = spec.x0.clone();
    for r in 0..n {
        for c in 0..m {
            x_init[r] += gain[r * m + c] * eta.initial_jump()[c];
        }
    }
    for i in 0..big_n {
        states[i * stride..i * stride + n].copy_from_slice(&x_init);
    }

    for j in 0..steps {
        // Empirical mean across particles, computed in fixed index order
        // before stepping so every particle sees the same value.
        let mean_j: Vec<f64> = (0..n)
            .map(|c| {
                (0..big_n).map(|i| states[i * stride + j * n + c]).sum::<f64>() / big_n as f64
            })
            .collect();
        empirical_mean[j * n..(j + 1) * n].copy_from_slice(&mean_j);

        let t = grid.knot(j);
        let dt = grid.dt(j);
        spec.gain(t, &mut gain);
        let deta = eta.increment(j);
        let mut gain_push = vec![0.0; n];
        for r in 0..n {
            for c in 0..m {
                gain_push[r] += gain[r * m + c] * deta[c];
            }
        }

        let bad = states
            .par_chunks_mut(stride)
            .enumerate()
            .map_init(
                || (vec![0.0; n], vec![0.0; n * d]),
                |(b, sig), (i, chunk)| {
                    let (x, rest) = chunk[j * n..].split_at_mut(n);
                    let x_next = &mut rest[..n];
                    control.drift(spec, j, t, x, &mean_j, b);
                    spec.diffusion(t, x, &mean_j, sig);
                    for r in 0..n {
                        let mut v = x[r] + b[r] * dt + gain_push[r];
                        for c in 0..d {
                            v += sig[r * d + c] * noise.delta_w(i, j, c, dt);
                        }
                        x_next[r] = v;
                    }
                    if x_next.iter().any(|v| !v.is_finite()) {
                        Some(i)
                    } else {
                        None
                    }
                },
            )
            .reduce(|| None, |a, b| a.or(b));
        if let Some(i) = bad {
            return Err(Error::NonFinite {
                context: "forward state".into(),
                particle: i,
                step: j,
            });
        }
    }

    // Mean at the final knot.
    for c in 0..n {
        empirical_mean[steps * n + c] = (0..big_n)
            .map(|i| states[i * stride + steps * n + c])
            .sum::<f64>()
            / big_n as f64;
    }

    Ok(EnsemblePath {
        grid: grid.clone(),
        particles: big_n,
        state_dim: n,
        states,
        empirical_mean,
        noise,
    })
}

/// Cost decomposition J = running + terminal + singular with the Monte-Carlo
/// standard error of the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    pub running: f64,
    pub terminal: f64,
    pub singular: f64,
    pub std_error: f64,
}

/// Evaluate the cost functional along a simulated ensemble.
pub fn cost(
    spec: &ProblemSpec,
    ens: &EnsemblePath,
    control: Control<'_>,
    eta: &SingularControlPath,
) -> Result<CostReport> {
    if !ens.grid.compatible(control.grid()) || !ens.grid.compatible(&eta.grid) {
        return Err(Error::GridMismatch(
            "cost needs ensemble, control, and singular path on one grid".into(),
        ));
    }
    let steps = ens.grid.steps();
    let m = spec.singular_dim;

    // Singular part is deterministic: the 0⁺ jump plus left-point sums.
    let mut phi = vec![0.0; m];
    spec.singular_cost(0.0, &mut phi);
    let mut singular: f64 = phi
        .iter()
        .zip(eta.initial_jump())
        .map(|(p, dj)| p * dj)
        .sum();
    for j in 0..steps {
        spec.singular_cost(ens.grid.knot(j), &mut phi);
        singular += phi
            .iter()
            .zip(eta.increment(j))
            .map(|(p, dj)| p * dj)
            .sum::<f64>();
    }

    let per_particle: Vec<(f64, f64)> = (0..ens.particles())
        .into_par_iter()
        .map(|i| {
            let mut running = 0.0;
            for j in 0..steps {
                let t = ens.grid.knot(j);
                running += control.running_cost(spec, j, t, ens.state(i, j), ens.mean_at(j))
                    * ens.grid.dt(j);
            }
            let terminal = spec.terminal_cost(ens.state(i, steps), ens.mean_at(steps));
            (running, terminal)
        })
        .collect();

    let nf = ens.particles() as f64;
    let running = per_particle.iter().map(|p| p.0).sum::<f64>() / nf;
    let terminal = per_particle.iter().map(|p| p.1).sum::<f64>() / nf;
    let total = running + terminal + singular;
    let var = per_particle
        .iter()
        .map(|p| {
            let tot_i = p.0 + p.1 + singular;
            (tot_i - total) * (tot_i - total)
        })
        .sum::<f64>()
        / (nf - 1.0);
    Ok(CostReport {
        total,
        running,
        terminal,
        singular,
        std_error: (var / nf).sqrt(),
    })
}

/// One row of the particle-rate study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub particles: usize,
    pub deviation: f64,
}

/// Across-replication deviation of the empirical mean at T for increasing
/// ensemble sizes, with the fitted log-log slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub reps: usize,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

pub fn meanfield_convergence(
    spec: &ProblemSpec,
    u: &StrictControlPath,
    eta: &SingularControlPath,
    particle_counts: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ConvergenceStudy> {
    if reps < 2 {
        return Err(Error::InvalidParam("need at least 2 repetitions".into()));
    }
    if particle_counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam(
            "particle counts must be increasing".into(),
        ));
    }
    let n = spec.state_dim;
    let mut rows = Vec::new();
    for &count in particle_counts {
        let mut finals: Vec<Vec<f64>> = Vec::with_capacity(reps);
        for rep in 0..reps {
            let cfg = SimConfig::new(count, rng::tie_break(seed, count as u64, rep as u64, 0xC0));
            let ens = simulate(spec, u, eta, &cfg)?;
            finals.push(ens.mean_at(ens.grid.steps()).to_vec());
        }
        let mut dev_sq = 0.0;
        for c in 0..n {
            let mean = finals.iter().map(|v| v[c]).sum::<f64>() / reps as f64;
            let var = finals
                .iter()
                .map(|v| (v[c] - mean) * (v[c] - mean))
                .sum::<f64>()
                / (reps - 1) as f64;
            dev_sq += var;
        }
        rows.push(ConvergenceRow {
            particles: count,
            deviation: dev_sq.sqrt(),
        });
    }

    let (slope, slope_stderr) = if rows.iter().all(|r| r.deviation > 0.0) && rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| (r.particles as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.deviation.ln()).collect();
        let (b, se) = ols_slope(&xs, &ys);
        (Some(b), se)
    } else {
        (None, None)
    };

    Ok(ConvergenceStudy {
        rows,
        reps,
        slope,
        slope_stderr,
    })
}

/// Least-squares slope of y on x with its standard error (None when there
/// are too few points for a residual estimate).
fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let sxy = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>();
    let slope = sxy / sxx;
    if xs.len() > 2 {
        let intercept = my - slope * mx;
        let ss_res = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum::<f64>();
        let se = (ss_res / (n - 2.0) / sxx).sqrt();
        (slope, Some(se))
    } else {
        (slope, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{embed_strict, RelaxedControlPath};
    use crate::problem::{builtin_lq, builtin_oscillating, builtin_singular, singular_with, SingularParams};

    fn grid(l: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, l).unwrap()
    }

    #[test]
    fn frozen_dynamics_stay_at_x0() {
        let spec = singular_with(SingularParams {
            sigma: 0.0,
            gain: 0.0,
            ..SingularParams::default()
        });
        let u = StrictControlPath::constant(grid(16), &[0.0]).unwrap();
        let eta = SingularControlPath::zero(grid(16), 1);
        let ens = simulate(&spec, &u, &eta, &SimConfig::new(4, 1)).unwrap();
        for i in 0..4 {
            for j in 0..=16 {
                assert_eq!(ens.state(i, j), &[2.0]);
            }
        }
    }

    #[test]
    fn pure_singular_displacement() {
        let spec = singular_with(SingularParams {
            sigma: 0.0,
            ..SingularParams::default()
        });
        let u = StrictControlPath::constant(grid(16), &[0.0]).unwrap();
        let eta = SingularControlPath::jump_at_zero(grid(16), vec![2.0]).unwrap();
        let ens = simulate(&spec, &u, &eta, &SimConfig::new(4, 1)).unwrap();
        for j in 0..=16 {
            assert_eq!(ens.state(0, j), &[0.0], "x0 - 2 = 0 after the jump");
        }
    }

    #[test]
    fn lq_mean_matches_mean_ode() {
        // With u ≡ 0 the mean follows m' = (a + ā)m, so m(1) = e^{-0.2}.
        let spec = builtin_lq();
        let u = StrictControlPath::constant(grid(256), &[0.0]).unwrap();
        let eta = SingularControlPath::zero(grid(256), 1);
        let ens = simulate(&spec, &u, &eta, &SimConfig::new(4000, 42)).unwrap();
        let m_t = ens.mean_at(256)[0];
        let expect = (-0.2f64).exp();
        let se = 3.0 * 0.2 / (4000f64).sqrt();
        assert!(
            (m_t - expect).abs() < se + 2e-3,
            "mean at T {m_t} vs {expect}"
        );
    }

    #[test]
    fn determinism_same_config_bitwise() {
        let spec = builtin_lq();
        let u = StrictControlPath::constant(grid(32), &[0.5]).unwrap();
        let eta = SingularControlPath::zero(grid(32), 1);
        let cfg = SimConfig::new(64, 7);
        let a = simulate(&spec, &u, &eta, &cfg).unwrap();
        let b = simulate(&spec, &u, &eta, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_hot_relaxed_matches_strict_bitwise() {
        let spec = builtin_lq();
        let mut u = StrictControlPath::constant(grid(32), &[0.5]).unwrap();
        u.set_value(3, &[-1.0]);
        u.set_value(17, &[2.0]);
        let q = embed_strict(&u, &spec.control_set).unwrap();
        let eta = SingularControlPath::zero(grid(32), 1);
        let cfg = SimConfig::new(32, 11);
        let a = simulate(&spec, &u, &eta, &cfg).unwrap();
        let b = simulate_relaxed(&spec, &q, &eta, &cfg).unwrap();
        assert_eq!(a, b);

        let ca = cost(&spec, &a, Control::Strict(&u), &eta).unwrap();
        let cb = cost(&spec, &b, Control::Relaxed(&q), &eta).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn oscillating_mixture_freezes_the_state() {
        let spec = builtin_oscillating();
        let q = RelaxedControlPath::constant(grid(64), spec.control_set.clone(), &[0.5, 0.5])
            .unwrap();
        let eta = SingularControlPath::zero(grid(64), 1);
        let ens = simulate_relaxed(&spec, &q, &eta, &SimConfig::new(2, 5)).unwrap();
        for j in 0..=64 {
            assert_eq!(ens.state(0, j), &[0.0]);
        }
        let report = cost(&spec, &ens, Control::Relaxed(&q), &eta).unwrap();
        assert_eq!(report.total, 0.0);
    }

    #[test]
    fn lq_symmetric_mixture_equals_zero_control() {
        let spec = builtin_lq();
        let mut weights = vec![0.0; spec.control_set.len()];
        let minus = spec
            .control_set
            .iter()
            .position(|a| a[0] == -1.0)
            .unwrap();
        let plus = spec.control_set.iter().position(|a| a[0] == 1.0).unwrap();
        weights[minus] = 0.5;
        weights[plus] = 0.5;
        let q =
            RelaxedControlPath::constant(grid(64), spec.control_set.clone(), &weights).unwrap();
        let u = StrictControlPath::constant(grid(64), &[0.0]).unwrap();
        let eta = SingularControlPath::zero(grid(64), 1);
        let cfg = SimConfig::new(128, 13);
        let rel = simulate_relaxed(&spec, &q, &eta, &cfg).unwrap();
        let strict = simulate(&spec, &u, &eta, &cfg).unwrap();
        // ½b(-1) + ½b(+1) = b(0) up to one rounding per step.
        let worst = rel.sup_distance(&strict).unwrap();
        assert!(worst < 1e-12, "sup distance {worst}");
    }

    #[test]
    fn cost_is_additive_and_singular_only_case() {
        let spec = singular_with(SingularParams {
            sigma: 0.0,
            x0: 0.0,
            ..SingularParams::default()
        });
        // With x0 = 0 and no dynamics the running and terminal parts vanish.
        let u = StrictControlPath::constant(grid(16), &[0.0]).unwrap();
        let eta = SingularControlPath::jump_at_zero(grid(16), vec![2.0]).unwrap();
        let ens = simulate(&spec, &u, &eta, &SimConfig::new(4, 3)).unwrap();
        let report = cost(&spec, &ens, Control::Strict(&u), &eta).unwrap();
        assert!((report.singular - 1.0).abs() < 1e-15, "0.5 * 2");
        assert!(
            (report.total - (report.running + report.terminal + report.singular)).abs() < 1e-12
        );
    }

    #[test]
    fn antithetic_pairs_mirror_pure_diffusion() {
        let spec = singular_with(SingularParams {
            x0: 0.0,
            ..SingularParams::default()
        });
        let u = StrictControlPath::constant(grid(16), &[0.0]).unwrap();
        let eta = SingularControlPath::zero(grid(16), 1);
        let mut cfg = SimConfig::new(8, 21);
        cfg.antithetic = true;
        let ens = simulate(&spec, &u, &eta, &cfg).unwrap();
        for i in (0..8).step_by(2) {
            for j in 0..=16 {
                assert!((ens.state(i, j)[0] + ens.state(i + 1, j)[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn deterministic_problem_has_zero_deviation() {
        let spec = builtin_oscillating();
        let u = StrictControlPath::constant(grid(8), &[1.0]).unwrap();
        let eta = SingularControlPath::zero(grid(8), 1);
        let study = meanfield_convergence(&spec, &u, &eta, &[10, 20, 40], 3, 1).unwrap();
        assert!(study.rows.iter().all(|r| r.deviation == 0.0));
        assert!(study.slope.is_none());
    }

    #[test]
    fn binary_export_layout() {
        let spec = builtin_oscillating();
        let u = StrictControlPath::constant(grid(4), &[1.0]).unwrap();
        let eta = SingularControlPath::zero(grid(4), 1);
        let ens = simulate(&spec, &u, &eta, &SimConfig::new(2, 1)).unwrap();
        let bin = ens.to_binary();
        assert_eq!(u64::from_le_bytes(bin[0..8].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bin[8..16].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(bin[16..24].try_into().unwrap()), 1);
        assert_eq!(bin.len(), 24 + 2 * 5 * 8);
        let first = f64::from_le_bytes(bin[24..32].try_into().unwrap());
        assert_eq!(first, 0.0);
    }
}

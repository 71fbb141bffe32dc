//! Problem definitions: coefficient functions, dimensions, control sets,
//! standing-assumption validation, and builtin benchmark problems.
//!
//! A problem is the controlled dynamics
//!
//! ```text
//! dX(t) = b(t, X, E[X], u) dt + σ(t, X, E[X]) dW(t) + G(t) dη(t),   X(0) = x₀,
//! ```
//!
//! together with the cost
//!
//! ```text
//! J(u, η) = E[ ∫₀ᵀ f(t, X, E[X], u) dt + h(X(T), E[X(T)]) + ∫₀ᵀ φ(t)·dη(t) ].
//! ```
//!
//! Coefficients are plain closures writing into output slices so the hot
//! simulation loops stay allocation-free. Analytic partial derivatives are
//! optional; central finite differences with step 1e-6·(1+|x|) stand in when
//! they are absent.

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng;

/// b(t, x, y, u) → ℝⁿ written into `out`.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// σ(t, x, y) → ℝ^{n×d} row-major into `out`.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// G(t) → ℝ^{n×m} row-major into `out`.
pub type GainFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;
/// f(t, x, y, u) → ℝ.
pub type RunningCostFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
/// h(x, y) → ℝ.
pub type TerminalCostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// φ(t) → ℝᵐ into `out`.
pub type SingularCostFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Jacobian of a vector coefficient w.r.t. x or y: ℝ^{n×n} row-major.
pub type VectorJacobianFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Jacobian of σ: ∂σ_{i,c}/∂x_l stored at [(i·d + c)·n + l].
pub type DiffusionJacobianFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Gradient of a scalar coefficient: ℝⁿ.
pub type ScalarGradFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Gradient of the terminal cost: ℝⁿ.
pub type TerminalGradFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Optional analytic partial derivatives. Any missing entry falls back to
/// central finite differences.
#[derive(Clone, Default)]
pub struct Derivatives {
    pub b_x: Option<VectorJacobianFn>,
    pub b_y: Option<VectorJacobianFn>,
    pub sigma_x: Option<DiffusionJacobianFn>,
    pub sigma_y: Option<DiffusionJacobianFn>,
    pub f_x: Option<ScalarGradFn>,
    pub f_y: Option<ScalarGradFn>,
    pub h_x: Option<TerminalGradFn>,
    pub h_y: Option<TerminalGradFn>,
}

/// A complete control problem. Immutable after construction; coefficient
/// closures must be pure.
#[derive(Clone)]
pub struct ProblemSpec {
    pub state_dim: usize,
    pub noise_dim: usize,
    pub control_dim: usize,
    pub singular_dim: usize,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub singular_gain: GainFn,
    pub running_cost: RunningCostFn,
    pub terminal_cost: TerminalCostFn,
    pub singular_cost: SingularCostFn,
    pub control_set: Vec<Vec<f64>>,
    pub derivatives: Derivatives,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("control_dim", &self.control_dim)
            .field("singular_dim", &self.singular_dim)
            .field("horizon", &self.horizon)
            .field("x0", &self.x0)
            .field("control_set", &self.control_set.len())
            .finish()
    }
}

fn fd_step(v: &[f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    1e-6 * (1.0 + norm)
}

impl ProblemSpec {
    pub fn validate_dims(&self) -> Result<()> {
        if self.state_dim == 0
            || self.noise_dim == 0
            || self.control_dim == 0
            || self.singular_dim == 0
        {
            return Err(Error::InvalidParam("all dimensions must be >= 1".into()));
        }
        if self.x0.len() != self.state_dim {
            return Err(Error::DimensionMismatch("x0 length != state_dim".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParam("horizon must be positive".into()));
        }
        if self.control_set.is_empty() {
            return Err(Error::InvalidParam("control set must be nonempty".into()));
        }
        for (i, a) in self.control_set.iter().enumerate() {
            if a.len() != self.control_dim {
                return Err(Error::DimensionMismatch(format!(
                    "control point {i} has dimension {}, expected {}",
                    a.len(),
                    self.control_dim
                )));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "control point {i} has non-finite coordinates"
                )));
            }
        }
        Ok(())
    }

    pub fn drift(&self, t: f64, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, y, u, out);
    }

    pub fn diffusion(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, y, out);
    }

    pub fn gain(&self, t: f64, out: &mut [f64]) {
        (self.singular_gain)(t, out);
    }

    pub fn running_cost(&self, t: f64, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
        (self.running_cost)(t, x, y, u)
    }

    pub fn terminal_cost(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.terminal_cost)(x, y)
    }

    pub fn singular_cost(&self, t: f64, out: &mut [f64]) {
        (self.singular_cost)(t, out);
    }

    /// ∂b/∂x (n×n row-major); analytic if available, else central differences.
    pub fn b_x(&self, t: f64, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.derivatives.b_x {
            f(t, x, y, u, out);
            return;
        }
        self.fd_vector_jacobian(t, x, y, u, out, true);
    }

    /// ∂b/∂y (derivative in the expectation argument).
    pub fn b_y(&self, t: f64, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.derivatives.b_y {
            f(t, x, y, u, out);
            return;
        }
        self.fd_vector_jacobian(t, x, y, u, out, false);
    }

    fn fd_vector_jacobian(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        u: &[f64],
        out: &mut [f64],
        wrt_x: bool,
    ) {
        let n = self.state_dim;
        let base = if wrt_x { x } else { y };
        let h = fd_step(base);
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        let mut bumped = base.to_vec();
        for l in 0..n {
            let orig = bumped[l];
            bumped[l] = orig + h;
            if wrt_x {
                self.drift(t, &bumped, y, u, &mut plus);
            } else {
                self.drift(t, x, &bumped, u, &mut plus);
            }
            bumped[l] = orig - h;
            if wrt_x {
                self.drift(t, &bumped, y, u, &mut minus);
            } else {
                self.drift(t, x, &bumped, u, &mut minus);
            }
            bumped[l] = orig;
            for i in 0..n {
                out[i * n + l] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }

    /// ∂σ/∂x with layout [(i·d + c)·n + l].
    pub fn sigma_x(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.derivatives.sigma_x {
            f(t, x, y, out);
            return;
        }
        self.fd_sigma_jacobian(t, x, y, out, true);
    }

    pub fn sigma_y(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.derivatives.sigma_y {
            f(t, x, y, out);
            return;
        }
        self.fd_sigma_jacobian(t, x, y, out, false);
    }

    fn fd_sigma_jacobian(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64], wrt_x: bool) {
        let (n, d) = (self.state_dim, self.noise_dim);
        let base = if wrt_x { x } else { y };
        let h = fd_step(base);
        let mut plus = vec![0.0; n * d];
        let mut minus = vec![0.0; n * d];
        let mut bumped = base.to_vec();
        for l in 0..n {
            let orig = bumped[l];
            bumped[l] = orig + h;
            if wrt_x {
                self.diffusion(t, &bumped, y, &mut plus);
            } else {
                self.diffusion(t, x, &bumped, &mut plus);
            }
            bumped[l] = orig - h;
            if wrt_x {
                self.diffusion(t, &bumped, y, &mut minus);
            } else {
                self.diffusion(t, x, &bumped, &mut minus);
            }
            bumped[l] = orig;
            for i in 0..n {
                for c in 0..d {
                    out[(i * d + c) * n + l] = (plus[i * d + c] - minus[i * d + c]) / (2.0 * h);
                }
            }
        }
    }

    /// ∇ₓ f.
    pub fn f_x(&self, t: f64, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.derivatives.f_x {
            g(t, x, y, u, out);
            return;
        }
        self.fd_scalar_grad(t, x, y, u, out, true);
    }

    pub fn f_y(&self, t: f64, x: &[f64], y: &[f64], u: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.derivatives.f_y {
            g(t, x, y, u, out);
            return;
        }
        self.fd_scalar_grad(t, x, y, u, out, false);
    }

    fn fd_scalar_grad(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        u: &[f64],
        out: &mut [f64],
        wrt_x: bool,
    ) {
        let base = if wrt_x { x } else { y };
        let h = fd_step(base);
        let mut bumped = base.to_vec();
        for l in 0..self.state_dim {
            let orig = bumped[l];
            bumped[l] = orig + h;
            let plus = if wrt_x {
                self.running_cost(t, &bumped, y, u)
            } else {
                self.running_cost(t, x, &bumped, u)
            };
            bumped[l] = orig - h;
            let minus = if wrt_x {
                self.running_cost(t, &bumped, y, u)
            } else {
                self.running_cost(t, x, &bumped, u)
            };
            bumped[l] = orig;
            out[l] = (plus - minus) / (2.0 * h);
        }
    }

    /// ∇ₓ h.
    pub fn h_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.derivatives.h_x {
            g(x, y, out);
            return;
        }
        self.fd_terminal_grad(x, y, out, true);
    }

    pub fn h_y(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        if let Some(g) = &self.derivatives.h_y {
            g(x, y, out);
            return;
        }
        self.fd_terminal_grad(x, y, out, false);
    }

    fn fd_terminal_grad(&self, x: &[f64], y: &[f64], out: &mut [f64], wrt_x: bool) {
        let base = if wrt_x { x } else { y };
        let h = fd_step(base);
        let mut bumped = base.to_vec();
        for l in 0..self.state_dim {
            let orig = bumped[l];
            bumped[l] = orig + h;
            let plus = if wrt_x {
                self.terminal_cost(&bumped, y)
            } else {
                self.terminal_cost(x, &bumped)
            };
            bumped[l] = orig - h;
            let minus = if wrt_x {
                self.terminal_cost(&bumped, y)
            } else {
                self.terminal_cost(x, &bumped)
            };
            bumped[l] = orig;
            out[l] = (plus - minus) / (2.0 * h);
        }
    }
}

/// Which standing assumption a check probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
pub enum AssumptionId {
    H1,
    H2,
    H3,
    H4,
}

#[derive(Debug, Clone, serde::Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub id: AssumptionId,
    pub probe: String,
    pub passed: bool,
    pub worst_residual: f64,
}

#[derive(Debug, Clone, serde::Serialize, Deserialize)]
pub struct AssumptionReport {
    pub seed: u64,
    pub probes: usize,
    pub box_radius: f64,
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
}

const VALIDATE_SEED: u64 = 0x5eed_ca11_da7a_f00d;

struct ProbePoint {
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
}

fn sample_probe(spec: &ProblemSpec, seed: u64, idx: u64, radius: f64) -> ProbePoint {
    let n = spec.state_dim;
    let t = spec.horizon * rng::uniform(seed, idx, 0, 0);
    let coord = |slot: u64, l: usize| radius * (2.0 * rng::uniform(seed, idx, slot, l as u64) - 1.0);
    let x: Vec<f64> = (0..n).map(|l| coord(1, l)).collect();
    let y: Vec<f64> = (0..n).map(|l| coord(2, l)).collect();
    let pick = (rng::tie_break(seed, idx, 3, 0) as usize) % spec.control_set.len();
    let u = spec.control_set[pick].clone();
    ProbePoint { t, x, y, u }
}

/// Probe the standing assumptions on random points of
/// [0, T] × box(box_radius)² × control_set.
///
/// Non-finite coefficient output at any probe aborts with an error (the
/// problem is ill-posed, not merely failing an assumption). Sampling is
/// deterministic; the seed is recorded in the report.
pub fn validate_spec(
    spec: &ProblemSpec,
    probes: usize,
    box_radius: f64,
) -> Result<AssumptionReport> {
    if probes == 0 {
        return Err(Error::InvalidParam("probes must be >= 1".into()));
    }
    if !(box_radius > 0.0) {
        return Err(Error::InvalidParam("box_radius must be positive".into()));
    }
    spec.validate_dims()?;
    let (n, d, m) = (spec.state_dim, spec.noise_dim, spec.singular_dim);
    let seed = VALIDATE_SEED;

    let mut b = vec![0.0; n];
    let mut sig = vec![0.0; n * d];
    let mut gain = vec![0.0; n * m];
    let mut phi = vec![0.0; m];

    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());

    // Finiteness sweep plus the raw magnitudes feeding H2/H4.
    let mut worst_b: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for idx in 0..probes {
        let p = sample_probe(spec, seed, idx as u64, box_radius);
        spec.drift(p.t, &p.x, &p.y, &p.u, &mut b);
        if !finite(&b) {
            return Err(Error::IllPosed {
                coefficient: "b".into(),
            });
        }
        spec.diffusion(p.t, &p.x, &p.y, &mut sig);
        if !finite(&sig) {
            return Err(Error::IllPosed {
                coefficient: "sigma".into(),
            });
        }
        let fv = spec.running_cost(p.t, &p.x, &p.y, &p.u);
        let hv = spec.terminal_cost(&p.x, &p.y);
        if !fv.is_finite() {
            return Err(Error::IllPosed {
                coefficient: "f".into(),
            });
        }
        if !hv.is_finite() {
            return Err(Error::IllPosed {
                coefficient: "h".into(),
            });
        }
        worst_b = worst_b.max(b.iter().map(|v| v.abs()).fold(0.0, f64::max));
        worst_h = worst_h.max(hv.abs());
    }

    let mut checks = Vec::new();

    // H1: smoothness probed through finite-difference self-agreement (steps h
    // and h/2 must give nearly the same slope) and, when analytic derivatives
    // are present, FD/analytic agreement within 1e-4 relative.
    {
        let h1_probes = probes.min(64).max(1);
        let mut worst = 0.0f64;
        let mut jac_h = vec![0.0; n * n];
        let mut grad = vec![0.0; n];
        for idx in 0..h1_probes {
            let p = sample_probe(spec, seed ^ 0x11, idx as u64, box_radius);
            let agree = fd_self_agreement(spec, &p);
            worst = worst.max(agree);
            if spec.derivatives.b_x.is_some() {
                spec.derivatives.b_x.as_ref().unwrap()(p.t, &p.x, &p.y, &p.u, &mut jac_h);
                let mut fd = vec![0.0; n * n];
                spec.fd_vector_jacobian(p.t, &p.x, &p.y, &p.u, &mut fd, true);
                worst = worst.max(rel_mismatch(&jac_h, &fd));
            }
            if spec.derivatives.f_x.is_some() {
                spec.derivatives.f_x.as_ref().unwrap()(p.t, &p.x, &p.y, &p.u, &mut grad);
                let mut fd = vec![0.0; n];
                spec.fd_scalar_grad(p.t, &p.x, &p.y, &p.u, &mut fd, true);
                worst = worst.max(rel_mismatch(&grad, &fd));
            }
        }
        if !worst.is_finite() {
            return Err(Error::IllPosed {
                coefficient: "derivatives".into(),
            });
        }
        checks.push(AssumptionCheck {
            id: AssumptionId::H1,
            probe: format!("finite-difference derivative agreement at {h1_probes} points"),
            passed: worst <= 1e-3,
            worst_residual: worst,
        });
    }

    // H2: linear growth via a dyadic-radius ratio test. The constant C is
    // never pinned; only consistent super-linear growth of the fitted C over
    // doubling radii fails the check.
    {
        let radii = [box_radius / 4.0, box_radius / 2.0, box_radius];
        let mut c_b = [0.0f64; 3];
        let mut c_sig = [0.0f64; 3];
        let per_radius = (probes / 3).max(8);
        for (ri, r) in radii.iter().enumerate() {
            for idx in 0..per_radius {
                let p = sample_probe(spec, seed ^ (0x22 + ri as u64), idx as u64, *r);
                spec.drift(p.t, &p.x, &p.y, &p.u, &mut b);
                spec.diffusion(p.t, &p.x, &p.y, &mut sig);
                let nx = p.x.iter().map(|v| v.abs()).sum::<f64>();
                let ny = p.y.iter().map(|v| v.abs()).sum::<f64>();
                let nu = p.u.iter().map(|v| v.abs()).sum::<f64>();
                let bn = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let sn = sig.iter().map(|v| v.abs()).fold(0.0, f64::max);
                c_b[ri] = c_b[ri].max(bn / (1.0 + nx + ny + nu));
                c_sig[ri] = c_sig[ri].max(sn / (1.0 + nx + ny));
            }
        }
        let ratio = |c: &[f64; 3]| -> f64 {
            let r1 = if c[0] > 0.0 { c[1] / c[0] } else { 1.0 };
            let r2 = if c[1] > 0.0 { c[2] / c[1] } else { 1.0 };
            r1.min(r2)
        };
        let worst = ratio(&c_b).max(ratio(&c_sig));
        checks.push(AssumptionCheck {
            id: AssumptionId::H2,
            probe: format!(
                "fitted growth constants over radii {:.3}/{:.3}/{:.3}",
                radii[0], radii[1], radii[2]
            ),
            passed: worst < 1.5,
            worst_residual: worst,
        });
    }

    // H3: G bounded (and φ finite) over a dense time grid.
    {
        let mut worst = 0.0f64;
        let mut ok = true;
        for j in 0..=256 {
            let t = spec.horizon * j as f64 / 256.0;
            spec.gain(t, &mut gain);
            spec.singular_cost(t, &mut phi);
            if !finite(&gain) || !finite(&phi) {
                ok = false;
                break;
            }
            worst = worst.max(gain.iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
        checks.push(AssumptionCheck {
            id: AssumptionId::H3,
            probe: "sup |G(t)| over 257 time knots".into(),
            passed: ok && worst.is_finite(),
            worst_residual: worst,
        });
    }

    // H4: b and h stay bounded over the probe box.
    checks.push(AssumptionCheck {
        id: AssumptionId::H4,
        probe: format!("sup |b|, |h| over {probes} probes"),
        passed: worst_b.is_finite() && worst_h.is_finite(),
        worst_residual: worst_b.max(worst_h),
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(AssumptionReport {
        seed,
        probes,
        box_radius,
        checks,
        passed,
    })
}

fn rel_mismatch(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}

/// Central differences at steps h and h/2 should agree where the drift and
/// running cost are continuously differentiable.
fn fd_self_agreement(spec: &ProblemSpec, p: &ProbePoint) -> f64 {
    let n = spec.state_dim;
    let h = fd_step(&p.x);
    let slope = |step: f64, l: usize| -> f64 {
        let mut xp = p.x.clone();
        let mut out_p = vec![0.0; n];
        let mut out_m = vec![0.0; n];
        xp[l] += step;
        spec.drift(p.t, &xp, &p.y, &p.u, &mut out_p);
        xp[l] -= 2.0 * step;
        spec.drift(p.t, &xp, &p.y, &p.u, &mut out_m);
        (out_p[0] - out_m[0]) / (2.0 * step)
    };
    let mut worst = 0.0f64;
    for l in 0..n {
        let d1 = slope(h, l);
        let d2 = slope(h / 2.0, l);
        worst = worst.max((d1 - d2).abs() / (1.0 + d2.abs()));
    }
    // Same probe on the running cost.
    let fslope = |step: f64, l: usize| -> f64 {
        let mut xp = p.x.clone();
        xp[l] += step;
        let fp = spec.running_cost(p.t, &xp, &p.y, &p.u);
        xp[l] -= 2.0 * step;
        let fm = spec.running_cost(p.t, &xp, &p.y, &p.u);
        (fp - fm) / (2.0 * step)
    };
    for l in 0..n {
        let d1 = fslope(h, l);
        let d2 = fslope(h / 2.0, l);
        worst = worst.max((d1 - d2).abs() / (1.0 + d2.abs()));
    }
    worst
}

// ---------------------------------------------------------------------------
// Builtin benchmark problems
// ---------------------------------------------------------------------------

/// Parameters of the scalar linear-quadratic mean-field benchmark.
#[derive(Debug, Clone, Copy, serde::Serialize, Deserialize)]
pub struct LqParams {
    pub a: f64,
    pub a_bar: f64,
    pub c: f64,
    pub sigma: f64,
    pub r: f64,
    pub qx: f64,
    pub qh: f64,
    pub phi: f64,
    pub horizon: f64,
    pub x0: f64,
    pub control_min: f64,
    pub control_max: f64,
    pub control_points: usize,
}

impl Default for LqParams {
    fn default() -> Self {
        Self {
            a: -0.5,
            a_bar: 0.3,
            c: 1.0,
            sigma: 0.2,
            r: 1.0,
            qx: 1.0,
            qh: 1.0,
            phi: 10.0,
            horizon: 1.0,
            x0: 1.0,
            control_min: -2.0,
            control_max: 2.0,
            control_points: 41,
        }
    }
}

fn equispaced(lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| vec![lo + (hi - lo) * i as f64 / (count - 1).max(1) as f64])
        .collect()
}

/// Scalar LQ mean-field benchmark:
/// b = a·x + ā·y + c·u, σ constant, f = ½(qx·x² + r·u²), h = ½·qh·x²,
/// G = 1, φ large so the optimal singular part stays at zero.
pub fn lq_with(p: LqParams) -> ProblemSpec {
    let LqParams {
        a,
        a_bar,
        c,
        sigma,
        r,
        qx,
        qh,
        phi,
        horizon,
        x0,
        control_min,
        control_max,
        control_points,
    } = p;
    ProblemSpec {
        state_dim: 1,
        noise_dim: 1,
        control_dim: 1,
        singular_dim: 1,
        horizon,
        x0: vec![x0],
        drift: Arc::new(move |_t, x, y, u, out| {
            out[0] = a * x[0] + a_bar * y[0] + c * u[0];
        }),
        diffusion: Arc::new(move |_t, _x, _y, out| {
            out[0] = sigma;
        }),
        singular_gain: Arc::new(|_t, out| {
            out[0] = 1.0;
        }),
        running_cost: Arc::new(move |_t, x, _y, u| 0.5 * (qx * x[0] * x[0] + r * u[0] * u[0])),
        terminal_cost: Arc::new(move |x, _y| 0.5 * qh * x[0] * x[0]),
        singular_cost: Arc::new(move |_t, out| {
            out[0] = phi;
        }),
        control_set: equispaced(control_min, control_max, control_points),
        derivatives: Derivatives {
            b_x: Some(Arc::new(move |_t, _x, _y, _u, out| out[0] = a)),
            b_y: Some(Arc::new(move |_t, _x, _y, _u, out| out[0] = a_bar)),
            sigma_x: Some(Arc::new(|_t, _x, _y, out| out[0] = 0.0)),
            sigma_y: Some(Arc::new(|_t, _x, _y, out| out[0] = 0.0)),
            f_x: Some(Arc::new(move |_t, x, _y, _u, out| out[0] = qx * x[0])),
            f_y: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            h_x: Some(Arc::new(move |x, _y, out| out[0] = qh * x[0])),
            h_y: Some(Arc::new(|_x, _y, out| out[0] = 0.0)),
        },
    }
}

/// Scalar LQ mean-field benchmark with the default parameters.
pub fn builtin_lq() -> ProblemSpec {
    lq_with(LqParams::default())
}

/// Parameters of the bang-bang benchmark (no diffusion, drift equal to the
/// control, running cost x²).
#[derive(Debug, Clone, Copy, serde::Serialize, Deserialize)]
pub struct OscillatingParams {
    pub horizon: f64,
    pub x0: f64,
}

impl Default for OscillatingParams {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            x0: 0.0,
        }
    }
}

pub fn oscillating_with(p: OscillatingParams) -> ProblemSpec {
    ProblemSpec {
        state_dim: 1,
        noise_dim: 1,
        control_dim: 1,
        singular_dim: 1,
        horizon: p.horizon,
        x0: vec![p.x0],
        drift: Arc::new(|_t, _x, _y, u, out| {
            out[0] = u[0];
        }),
        diffusion: Arc::new(|_t, _x, _y, out| {
            out[0] = 0.0;
        }),
        singular_gain: Arc::new(|_t, out| {
            out[0] = 0.0;
        }),
        running_cost: Arc::new(|_t, x, _y, _u| x[0] * x[0]),
        terminal_cost: Arc::new(|_x, _y| 0.0),
        singular_cost: Arc::new(|_t, out| {
            out[0] = 0.0;
        }),
        control_set: vec![vec![-1.0], vec![1.0]],
        derivatives: Derivatives {
            b_x: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            b_y: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            sigma_x: Some(Arc::new(|_t, _x, _y, out| out[0] = 0.0)),
            sigma_y: Some(Arc::new(|_t, _x, _y, out| out[0] = 0.0)),
            f_x: Some(Arc::new(|_t, x, _y, _u, out| out[0] = 2.0 * x[0])),
            f_y: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            h_x: Some(Arc::new(|_x, _y, out| out[0] = 0.0)),
            h_y: Some(Arc::new(|_x, _y, out| out[0] = 0.0)),
        },
    }
}

/// Bang-bang benchmark whose strict infimum is only attained by the relaxed
/// mixture ½(δ₋₁ + δ₊₁): drift u, no diffusion, running cost x².
pub fn builtin_oscillating() -> ProblemSpec {
    oscillating_with(OscillatingParams::default())
}

/// Parameters of the singular-action benchmark.
#[derive(Debug, Clone, Copy, serde::Serialize, Deserialize)]
pub struct SingularParams {
    pub horizon: f64,
    pub x0: f64,
    pub sigma: f64,
    pub gain: f64,
    pub phi: f64,
}

impl Default for SingularParams {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            x0: 2.0,
            sigma: 0.1,
            gain: -1.0,
            phi: 0.5,
        }
    }
}

pub fn singular_with(p: SingularParams) -> ProblemSpec {
    let SingularParams {
        horizon,
        x0,
        sigma,
        gain,
        phi,
    } = p;
    ProblemSpec {
        state_dim: 1,
        noise_dim: 1,
        control_dim: 1,
        singular_dim: 1,
        horizon,
        x0: vec![x0],
        drift: Arc::new(|_t, _x, _y, _u, out| {
            out[0] = 0.0;
        }),
        diffusion: Arc::new(move |_t, _x, _y, out| {
            out[0] = sigma;
        }),
        singular_gain: Arc::new(move |_t, out| {
            out[0] = gain;
        }),
        running_cost: Arc::new(|_t, x, _y, _u| x[0] * x[0]),
        terminal_cost: Arc::new(|_x, _y| 0.0),
        singular_cost: Arc::new(move |_t, out| {
            out[0] = phi;
        }),
        control_set: vec![vec![0.0]],
        derivatives: Derivatives {
            b_x: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            b_y: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            sigma_x: Some(Arc::new(|_t, _x, _y, out| out[0] = 0.0)),
            sigma_y: Some(Arc::new(|_t, _x, _y, out| out[0] = 0.0)),
            f_x: Some(Arc::new(|_t, x, _y, _u, out| out[0] = 2.0 * x[0])),
            f_y: Some(Arc::new(|_t, _x, _y, _u, out| out[0] = 0.0)),
            h_x: Some(Arc::new(|_x, _y, out| out[0] = 0.0)),
            h_y: Some(Arc::new(|_x, _y, out| out[0] = 0.0)),
        },
    }
}

/// Benchmark with a worthwhile singular action: pushing the state down via η
/// (G = −1) trades the running state cost against the proportional cost φ·dη.
pub fn builtin_singular() -> ProblemSpec {
    singular_with(SingularParams::default())
}

// ---------------------------------------------------------------------------
// JSON problem loading
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ProblemConfigJson {
    builtin: String,
    #[serde(default)]
    overrides: serde_json::Map<String, serde_json::Value>,
}

fn num(v: &serde_json::Value, key: &str) -> Result<f64> {
    match v {
        serde_json::Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::InvalidParam(format!("override `{key}` is not a number"))),
        serde_json::Value::Array(a) if a.len() == 1 => num(&a[0], key),
        _ => Err(Error::InvalidParam(format!(
            "override `{key}` must be a number"
        ))),
    }
}

/// Build a problem from a JSON document naming a builtin plus numeric
/// parameter overrides. Custom coefficient functions are code-only and not
/// expressible here.
pub fn load_problem_json(text: &str) -> Result<ProblemSpec> {
    let cfg: ProblemConfigJson = serde_json::from_str(text)?;
    load_problem(&cfg.builtin, &cfg.overrides)
}

/// Same as [`load_problem_json`] but from already-parsed pieces.
pub fn load_problem(
    builtin: &str,
    overrides: &serde_json::Map<String, serde_json::Value>,
) -> Result<ProblemSpec> {
    match builtin {
        "lq" => {
            let mut p = LqParams::default();
            for (k, v) in overrides {
                match k.as_str() {
                    "a" => p.a = num(v, k)?,
                    "a_bar" => p.a_bar = num(v, k)?,
                    "c" => p.c = num(v, k)?,
                    "sigma" => p.sigma = num(v, k)?,
                    "r" => p.r = num(v, k)?,
                    "qx" => p.qx = num(v, k)?,
                    "qh" => p.qh = num(v, k)?,
                    "phi" => p.phi = num(v, k)?,
                    "horizon" => p.horizon = num(v, k)?,
                    "x0" => p.x0 = num(v, k)?,
                    "control_min" => p.control_min = num(v, k)?,
                    "control_max" => p.control_max = num(v, k)?,
                    "control_points" => p.control_points = num(v, k)? as usize,
                    _ => {
                        return Err(Error::InvalidParam(format!(
                            "unknown override `{k}` for builtin `lq`"
                        )))
                    }
                }
            }
            Ok(lq_with(p))
        }
        "oscillating" => {
            let mut p = OscillatingParams::default();
            for (k, v) in overrides {
                match k.as_str() {
                    "horizon" => p.horizon = num(v, k)?,
                    "x0" => p.x0 = num(v, k)?,
                    _ => {
                        return Err(Error::InvalidParam(format!(
                            "unknown override `{k}` for builtin `oscillating`"
                        )))
                    }
                }
            }
            Ok(oscillating_with(p))
        }
        "singular" => {
            let mut p = SingularParams::default();
            for (k, v) in overrides {
                match k.as_str() {
                    "horizon" => p.horizon = num(v, k)?,
                    "x0" => p.x0 = num(v, k)?,
                    "sigma" => p.sigma = num(v, k)?,
                    "gain" => p.gain = num(v, k)?,
                    "phi" => p.phi = num(v, k)?,
                    _ => {
                        return Err(Error::InvalidParam(format!(
                            "unknown override `{k}` for builtin `singular`"
                        )))
                    }
                }
            }
            Ok(singular_with(p))
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lq_fixed_values() {
        let spec = builtin_lq();
        assert_eq!(spec.horizon, 1.0);
        let mut b = [0.0];
        spec.drift(0.0, &[1.0], &[1.0], &[0.0], &mut b);
        assert!((b[0] - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn oscillating_fixed_values() {
        let spec = builtin_oscillating();
        assert_eq!(spec.running_cost(0.3, &[0.0], &[0.0], &[1.0]), 0.0);
        assert_eq!(spec.control_set, vec![vec![-1.0], vec![1.0]]);
        let mut s = [1.0];
        for t in [0.0, 0.4, 1.0] {
            spec.diffusion(t, &[0.7], &[-0.3], &mut s);
            assert_eq!(s[0], 0.0);
        }
    }

    #[test]
    fn singular_fixed_values() {
        let spec = builtin_singular();
        let mut g = [0.0];
        for t in [0.0, 0.5, 1.0] {
            spec.gain(t, &mut g);
            assert_eq!(g[0], -1.0);
        }
    }

    #[test]
    fn builtins_pass_validation() {
        for spec in [builtin_lq(), builtin_oscillating(), builtin_singular()] {
            let report = validate_spec(&spec, 300, 5.0).unwrap();
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn superlinear_drift_fails_growth_check() {
        let mut spec = builtin_lq();
        spec.drift = Arc::new(|_t, x, _y, _u, out| {
            out[0] = x[0] * x[0];
        });
        spec.derivatives.b_x = None;
        spec.derivatives.b_y = None;
        let report = validate_spec(&spec, 600, 10.0).unwrap();
        assert!(!report.passed);
        let h2 = report
            .checks
            .iter()
            .find(|c| c.id == AssumptionId::H2)
            .unwrap();
        assert!(!h2.passed, "H2 should fail, residual {}", h2.worst_residual);
    }

    #[test]
    fn non_finite_coefficient_is_ill_posed() {
        let mut spec = builtin_lq();
        spec.running_cost = Arc::new(|_t, x, _y, _u| 1.0 / (x[0] - x[0]));
        assert!(matches!(
            validate_spec(&spec, 50, 2.0),
            Err(Error::IllPosed { .. })
        ));
    }

    #[test]
    fn analytic_and_fd_derivatives_agree() {
        let spec = builtin_lq();
        let mut bare = spec.clone();
        bare.derivatives = Derivatives::default();
        let mut a = [0.0];
        let mut f = [0.0];
        for idx in 0..100u64 {
            let p = sample_probe(&spec, 99, idx, 3.0);
            spec.b_x(p.t, &p.x, &p.y, &p.u, &mut a);
            bare.b_x(p.t, &p.x, &p.y, &p.u, &mut f);
            assert!((a[0] - f[0]).abs() / (1.0 + a[0].abs()) < 1e-4);
            spec.f_x(p.t, &p.x, &p.y, &p.u, &mut a);
            bare.f_x(p.t, &p.x, &p.y, &p.u, &mut f);
            assert!((a[0] - f[0]).abs() / (1.0 + a[0].abs()) < 1e-4);
            spec.h_x(&p.x, &p.y, &mut a);
            bare.h_x(&p.x, &p.y, &mut f);
            assert!((a[0] - f[0]).abs() / (1.0 + a[0].abs()) < 1e-4);
        }
    }

    #[test]
    fn builtins_are_deterministic() {
        let s1 = builtin_lq();
        let s2 = builtin_lq();
        let mut b1 = [0.0];
        let mut b2 = [0.0];
        for idx in 0..20u64 {
            let p = sample_probe(&s1, 7, idx, 4.0);
            s1.drift(p.t, &p.x, &p.y, &p.u, &mut b1);
            s2.drift(p.t, &p.x, &p.y, &p.u, &mut b2);
            assert_eq!(b1[0].to_bits(), b2[0].to_bits());
            assert_eq!(
                s1.running_cost(p.t, &p.x, &p.y, &p.u).to_bits(),
                s2.running_cost(p.t, &p.x, &p.y, &p.u).to_bits()
            );
        }
    }

    #[test]
    fn json_loading_with_overrides() {
        let spec =
            load_problem_json(r#"{"builtin": "lq", "overrides": {"horizon": 2.0, "x0": 0.5}}"#)
                .unwrap();
        assert_eq!(spec.horizon, 2.0);
        assert_eq!(spec.x0, vec![0.5]);

        assert!(matches!(
            load_problem_json(r#"{"builtin": "nope"}"#),
            Err(Error::UnknownBuiltin(_))
        ));
        assert!(matches!(
            load_problem_json(r#"{"builtin": "lq", "overrides": {"bogus": 1}}"#),
            Err(Error::InvalidParam(_))
        ));
    }
}

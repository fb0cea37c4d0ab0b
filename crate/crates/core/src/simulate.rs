//! Exponential-Euler simulation of the coupled system
//!
//! ```text
//! Y_{k+1} = U_Δt (Y_k + η ΔW_k)
//! X_{k+1} = S_Δt (X_k + ⟨Z_k, ΔB_k⟩ Y_k),      Z_k = z_policy(Y_k)
//! ```
//!
//! with `Δt = Δx`, so both semigroups act as exact index shifts. Noise
//! increments are Karhunen–Loève coefficient vectors `√(λ_n Δt) ξ_n`.
//!
//! Linear functionals of `X_τ` never need the `X` curve itself:
//! `ℓ(X_n) = ℓ(S_{nΔt} x0) + Σ_k β_k ℓ(S_{(n−k)Δt} Y_k)`. The streaming
//! [`PathEvaluator`] uses this, while [`simulate_path`] materializes the full
//! trajectory through [`step_system`].

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filipovic::{HwElement, Space};
use crate::operators::{CovOp, FiniteRankOp, SemigroupSpec};
use crate::rng::{fill_normals, stream, StreamTag};

/// How the direction `Z_t` of the `X` volatility is chosen.
#[derive(Debug, Clone)]
pub enum ZPolicy {
    /// A fixed unit vector `γ`.
    Constant(HwElement),
    /// `Y_t / ‖Y_t‖`, and `0` when `Y_t = 0`.
    NormalizedY,
}

impl ZPolicy {
    /// Constant policy along `γ / ‖γ‖`.
    pub fn constant(gamma: HwElement) -> Result<Self> {
        let n = gamma.norm()?;
        if !(n > 0.0) {
            return Err(Error::Config("constant Z direction must be nonzero".into()));
        }
        Ok(Self::Constant(gamma.scaled(1.0 / n)))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }

    /// `Z` for the current factor value.
    pub fn z(&self, y: &HwElement) -> Result<HwElement> {
        match self {
            Self::Constant(g) => Ok(g.clone()),
            Self::NormalizedY => {
                let n = y.norm()?;
                if n == 0.0 {
                    Ok(y.space().zero())
                } else {
                    Ok(y.scaled(1.0 / n))
                }
            }
        }
    }
}

/// A model parameter a Greek differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    X0,
    Y0,
    Eta,
}

impl Parameter {
    pub fn name(&self) -> &'static str {
        match self {
            Self::X0 => "x0",
            Self::Y0 => "y0",
            Self::Eta => "eta",
        }
    }
}

/// A perturbation direction for one parameter.
#[derive(Debug, Clone)]
pub enum Direction {
    X0(HwElement),
    Y0(HwElement),
    Eta(FiniteRankOp),
}

impl Direction {
    pub fn parameter(&self) -> Parameter {
        match self {
            Self::X0(_) => Parameter::X0,
            Self::Y0(_) => Parameter::Y0,
            Self::Eta(_) => Parameter::Eta,
        }
    }

    /// `‖h‖_w` for curves, the Hilbert–Schmidt norm for `η` directions.
    pub fn norm(&self) -> Result<f64> {
        match self {
            Self::X0(h) | Self::Y0(h) => h.norm(),
            Self::Eta(z) => z.hs_norm(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Self::X0(h) => Self::X0(h.scaled(c)),
            Self::Y0(h) => Self::Y0(h.scaled(c)),
            Self::Eta(z) => Self::Eta(z.scaled(c)),
        }
    }
}

/// Complete model state.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub space: Arc<Space>,
    pub x0: HwElement,
    pub y0: HwElement,
    pub eta: FiniteRankOp,
    pub q_w: CovOp,
    pub q_b: CovOp,
    pub semigroup_x: SemigroupSpec,
    pub semigroup_y: SemigroupSpec,
    pub z_policy: ZPolicy,
    /// Longest simulated time.
    pub horizon: f64,
}

impl ModelSpec {
    pub fn dt(&self) -> f64 {
        self.space.dx()
    }

    pub fn n_steps(&self, tau: f64) -> Result<usize> {
        self.space.grid().steps_of(tau)
    }

    pub fn validate(&self) -> Result<()> {
        let sp = &self.space;
        let mut curves = vec![&self.x0, &self.y0];
        for v in self.q_w.eigvecs().iter().chain(self.q_b.eigvecs()) {
            curves.push(v);
        }
        for (_, a, b) in self.eta.terms() {
            curves.push(a);
            curves.push(b);
        }
        if let ZPolicy::Constant(g) = &self.z_policy {
            curves.push(g);
        }
        for c in curves {
            if !c.space().same_as(sp) {
                return Err(Error::Config("model component on a different grid".into()));
            }
            if c.valid_len() < sp.storage_len() {
                return Err(Error::Config("model components must span the whole storage".into()));
            }
            if c.deriv().iter().any(|v| !v.is_finite()) || !c.f0().is_finite() {
                return Err(Error::Data("non-finite model component".into()));
            }
        }
        self.semigroup_x.validate()?;
        self.semigroup_y.validate()?;
        let n = self.n_steps(self.horizon)?;
        if sp.storage_len() < sp.n_nodes() + n {
            return Err(Error::Config(format!(
                "grid extension {} cannot absorb {n} steps",
                sp.grid().extension
            )));
        }
        Ok(())
    }

    /// The model with `θ ← θ + ε·dir`.
    pub fn perturbed(&self, dir: &Direction, eps: f64) -> Result<ModelSpec> {
        let mut out = self.clone();
        match dir {
            Direction::X0(h) => out.x0.axpy(eps, h)?,
            Direction::Y0(h) => out.y0.axpy(eps, h)?,
            Direction::Eta(z) => out.eta = self.eta.plus_scaled(eps, z)?,
        }
        Ok(out)
    }
}

/// KL coefficients `√(λ_n Δt) ξ_{k,n}` for `n_steps` steps.
pub fn gen_increments(q: &CovOp, dt: f64, n_steps: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let scale: Vec<f64> = q.eigvals().iter().map(|l| (l * dt).sqrt()).collect();
    (0..n_steps)
        .map(|_| {
            let mut xi = vec![0.0; scale.len()];
            fill_normals(rng, &mut xi);
            xi.iter().zip(&scale).map(|(x, s)| x * s).collect()
        })
        .collect()
}

/// `(Y_k, X_k)`.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub y: HwElement,
    pub x: HwElement,
}

/// Everything a per-step observer may need.
pub struct StepInfo<'s> {
    pub k: usize,
    pub y: &'s HwElement,
    pub dw: &'s [f64],
    pub db: &'s [f64],
    /// `⟨Z_k, v^B_n⟩`.
    pub zb: &'s [f64],
    /// `⟨Z_k, ΔB_k⟩`.
    pub beta: f64,
    /// `‖Q_B^{1/2} Z_k‖²`.
    pub q: f64,
    /// `‖Y_k‖` under the normalized policy, `NaN` otherwise.
    pub y_norm: f64,
}

/// Precomputed projections shared by all paths of one model.
pub struct Simulator<'a> {
    spec: &'a ModelSpec,
    n_steps: usize,
    sqrt_w: Vec<f64>,
    sqrt_b: Vec<f64>,
    lam_b: Vec<f64>,
    /// `σ_j ⟨a_j, v^W_n⟩`.
    eta_proj: Vec<Vec<f64>>,
    eta_right: Vec<&'a HwElement>,
    gamma_zb: Option<Vec<f64>>,
    gamma_q: f64,
    fac_x: f64,
    fac_y: f64,
}

fn project(op: &FiniteRankOp, q: &CovOp) -> Result<Vec<Vec<f64>>> {
    op.terms()
        .iter()
        .map(|(s, a, _)| {
            q.eigvecs()
                .iter()
                .map(|v| Ok(s * a.inner_product(v)?))
                .collect()
        })
        .collect()
}

/// `v ← fac·(v + Σ_j c_j b_j)`, then shift by one step if `shifts`.
fn advance(v: &mut HwElement, coefs: &[f64], rights: &[&HwElement], fac: f64, shifts: bool) {
    let live: Vec<(f64, &HwElement)> = coefs
        .iter()
        .zip(rights)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, b)| (*c, *b))
        .collect();
    if !live.is_empty() || fac != 1.0 {
        v.combine_scale_unchecked(fac, &live);
    }
    if shifts {
        v.shift_steps_unchecked(1);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ModelSpec, tau: f64) -> Result<Self> {
        spec.validate()?;
        let n_steps = spec.n_steps(tau)?;
        if n_steps > spec.n_steps(spec.horizon)? {
            return Err(Error::Config(format!("time {tau} beyond model horizon {}", spec.horizon)));
        }
        let dt = spec.dt();
        let gamma_zb = match &spec.z_policy {
            ZPolicy::Constant(g) => Some(
                spec.q_b
                    .eigvecs()
                    .iter()
                    .map(|v| g.inner_product(v))
                    .collect::<Result<Vec<f64>>>()?,
            ),
            ZPolicy::NormalizedY => None,
        };
        let lam_b = spec.q_b.eigvals().to_vec();
        let gamma_q = gamma_zb
            .as_ref()
            .map(|zb| zb.iter().zip(&lam_b).map(|(z, l)| l * z * z).sum())
            .unwrap_or(f64::NAN);
        Ok(Self {
            spec,
            n_steps,
            sqrt_w: spec.q_w.eigvals().iter().map(|l| (l * dt).sqrt()).collect(),
            sqrt_b: lam_b.iter().map(|l| (l * dt).sqrt()).collect(),
            lam_b,
            eta_proj: project(&spec.eta, &spec.q_w)?,
            eta_right: spec.eta.terms().iter().map(|(_, _, b)| b).collect(),
            gamma_zb,
            gamma_q,
            fac_x: spec.semigroup_x.factor(dt),
            fac_y: spec.semigroup_y.factor(dt),
        })
    }

    pub fn spec(&self) -> &'a ModelSpec {
        self.spec
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// `⟨Z, v^B_n⟩` into `zb`; returns `(q, ‖Y‖)`.
    fn z_state(&self, y: &HwElement, zb: &mut [f64]) -> (f64, f64) {
        match &self.gamma_zb {
            Some(g) => {
                zb.copy_from_slice(g);
                (self.gamma_q, f64::NAN)
            }
            None => {
                let ny = y.dot_unchecked(y).sqrt();
                if ny == 0.0 {
                    zb.fill(0.0);
                    return (0.0, 0.0);
                }
                for (z, v) in zb.iter_mut().zip(self.spec.q_b.eigvecs()) {
                    *z = y.dot_unchecked(v) / ny;
                }
                let q = zb.iter().zip(&self.lam_b).map(|(z, l)| l * z * z).sum();
                (q, ny)
            }
        }
    }

    fn eta_coefs(proj: &[Vec<f64>], dw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(proj.iter().map(|row| dot(row, dw)));
    }

    /// `Y ← U_Δt (Y + η ΔW)`.
    fn advance_y(&self, y: &mut HwElement, dw: &[f64], scratch: &mut Vec<f64>) {
        Self::eta_coefs(&self.eta_proj, dw, scratch);
        advance(y, scratch, &self.eta_right, self.fac_y, self.spec.semigroup_y.shifts());
    }

    /// One step of the exponential-Euler scheme.
    pub fn step(&self, state: &SystemState, dw: &[f64], db: &[f64]) -> Result<SystemState> {
        let sp = &self.spec.space;
        if dw.len() != self.sqrt_w.len() || db.len() != self.sqrt_b.len() {
            return Err(Error::Argument("increment length does not match covariance rank".into()));
        }
        let headroom = |v: &HwElement, sg: &SemigroupSpec| {
            let need = sp.n_nodes() + usize::from(sg.shifts());
            if v.valid_len() < need {
                Err(Error::Domain("headroom exhausted".into()))
            } else {
                Ok(())
            }
        };
        headroom(&state.y, &self.spec.semigroup_y)?;
        headroom(&state.x, &self.spec.semigroup_x)?;
        let mut zb = vec![0.0; self.sqrt_b.len()];
        self.z_state(&state.y, &mut zb);
        let beta = dot(&zb, db);
        let mut y = state.y.clone();
        let mut scratch = Vec::new();
        self.advance_y(&mut y, dw, &mut scratch);
        let mut x = state.x.clone();
        advance(&mut x, &[beta], &[&state.y], self.fac_x, self.spec.semigroup_x.shifts());
        Ok(SystemState { y, x })
    }

    /// Runs the factor `Y` along path `path`, calling `visit` at every step
    /// before the update. Returns `Y_n`.
    pub fn run_y<V>(&self, seed: u64, path: u64, visit: V) -> Result<HwElement>
    where
        V: FnMut(&StepInfo) -> Result<()>,
    {
        self.run_y_with(seed, path, None, &RunOffset::default(), visit)
    }

    /// As [`run_y`](Self::run_y), keeping only the first `keep` cells of the
    /// factor, with `y0 ← y0 + c·u` and `η ← η + c·ζ` applied when given.
    /// Callers must not take inner products of a truncated factor.
    pub(crate) fn run_y_with<V>(
        &self,
        seed: u64,
        path: u64,
        keep: Option<usize>,
        offset: &RunOffset,
        mut visit: V,
    ) -> Result<HwElement>
    where
        V: FnMut(&StepInfo) -> Result<()>,
    {
        let mut rw = stream(seed, path, StreamTag::W);
        let mut rb = stream(seed, path, StreamTag::B);
        let mut y = self.spec.y0.clone();
        if let Some(keep) = keep {
            y.truncate(keep);
        }
        if let Some((c, u)) = offset.y0 {
            y.axpy_unchecked(c, u);
        }
        let mut rights = self.eta_right.clone();
        if let Some((_, _, extra)) = offset.eta {
            rights.extend_from_slice(extra);
        }
        let mut dw = vec![0.0; self.sqrt_w.len()];
        let mut db = vec![0.0; self.sqrt_b.len()];
        let mut zb = vec![0.0; self.sqrt_b.len()];
        let mut coefs = Vec::new();
        let mut extra_coefs = Vec::new();
        for k in 0..self.n_steps {
            fill_normals(&mut rw, &mut dw);
            for (v, s) in dw.iter_mut().zip(&self.sqrt_w) {
                *v *= s;
            }
            fill_normals(&mut rb, &mut db);
            for (v, s) in db.iter_mut().zip(&self.sqrt_b) {
                *v *= s;
            }
            let (q, y_norm) = self.z_state(&y, &mut zb);
            let beta = dot(&zb, &db);
            visit(&StepInfo {
                k,
                y: &y,
                dw: &dw,
                db: &db,
                zb: &zb,
                beta,
                q,
                y_norm,
            })?;
            Self::eta_coefs(&self.eta_proj, &dw, &mut coefs);
            if let Some((c, proj, _)) = offset.eta {
                Self::eta_coefs(proj, &dw, &mut extra_coefs);
                coefs.extend(extra_coefs.iter().map(|v| c * v));
            }
            advance(&mut y, &coefs, &rights, self.fac_y, self.spec.semigroup_y.shifts());
        }
        Ok(y)
    }

    /// `dβ` for a factor tangent `D` under the normalized policy:
    /// `⟨D,ΔB⟩/‖Y‖ − ⟨Y,ΔB⟩⟨Y,D⟩/‖Y‖³`.
    fn dbeta(&self, info: &StepInfo, d: &HwElement) -> f64 {
        if self.gamma_zb.is_some() || info.y_norm == 0.0 {
            return 0.0;
        }
        let ny = info.y_norm;
        let yd = info.y.dot_unchecked(d);
        let mut s = 0.0;
        for ((v, z), b) in self.spec.q_b.eigvecs().iter().zip(info.zb).zip(info.db) {
            let dp = d.dot_unchecked(v);
            s += b * (dp / ny - z * yd / (ny * ny));
        }
        s
    }
}

/// Parameter displacement applied inside a factor run.
#[derive(Default)]
pub(crate) struct RunOffset<'r> {
    y0: Option<(f64, &'r HwElement)>,
    eta: Option<(f64, &'r [Vec<f64>], &'r [&'r HwElement])>,
}

/// `step_system`: one exponential-Euler step for `(Y, X)`.
pub fn step_system(spec: &ModelSpec, state: &SystemState, dw: &[f64], db: &[f64]) -> Result<SystemState> {
    Simulator::new(spec, spec.dt())?.step(state, dw, db)
}

/// A linear functional of the forward curve.
#[derive(Debug, Clone)]
pub enum Probe {
    /// `f(x) = δ_x(X)`.
    Point(f64),
    /// `g(x, d) = J_{x,d}(X)`.
    Delivery(f64, f64),
    /// `⟨X, h⟩_w`.
    Inner(HwElement),
}

impl Probe {
    fn reach(&self) -> f64 {
        match self {
            Self::Point(x) => *x,
            Self::Delivery(x, d) => x + d,
            Self::Inner(_) => 0.0,
        }
    }

    /// The functional applied to `f`.
    pub fn apply(&self, f: &HwElement) -> Result<f64> {
        match self {
            Self::Point(x) => f.eval(*x),
            Self::Delivery(x, d) => f.integ_jxd(*x, *d),
            Self::Inner(h) => f.inner_product(h),
        }
    }
}

/// A probe with the adjoint semigroup precomputed on every step.
pub(crate) struct PreparedProbe {
    probe: Probe,
    /// `S*_{(n−k)Δt} h` for inner-product probes.
    adjoints: Vec<HwElement>,
    /// `e^{−κ(n−k)Δt}` for the shift kinds' damping.
    factors: Vec<f64>,
    shifts: bool,
    dt: f64,
    n: usize,
}

impl PreparedProbe {
    pub(crate) fn new(sim: &Simulator, probe: &Probe) -> Result<Self> {
        let spec = sim.spec;
        let n = sim.n_steps;
        let dt = spec.dt();
        let sg = spec.semigroup_x;
        let sp = &spec.space;
        let limit = (sp.storage_len() - n) as f64 * dt;
        if probe.reach() > limit * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "probe reaches {} but only {limit} survives {n} steps",
                probe.reach()
            )));
        }
        match probe {
            Probe::Point(x) | Probe::Delivery(x, _) if *x < 0.0 => {
                return Err(Error::Domain(format!("probe point {x} must be nonnegative")));
            }
            Probe::Delivery(_, d) if !(*d > 0.0) => {
                return Err(Error::Argument(format!("delivery length must be positive, got {d}")));
            }
            _ => {}
        }
        let adjoints = match probe {
            Probe::Inner(h) => (0..n)
                .map(|k| sg.apply_adjoint((n - k) as f64 * dt, h))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let factors = (0..n).map(|k| sg.factor((n - k) as f64 * dt)).collect();
        Ok(Self {
            probe: probe.clone(),
            adjoints,
            factors,
            shifts: sg.shifts(),
            dt,
            n,
        })
    }

    /// `ℓ(S_{(n−k)Δt} f)`.
    pub(crate) fn after(&self, k: usize, f: &HwElement) -> f64 {
        let lag = if self.shifts { (self.n - k) as f64 * self.dt } else { 0.0 };
        match &self.probe {
            Probe::Point(x) => self.factors[k] * f.eval_unchecked(x + lag),
            Probe::Delivery(x, d) => self.factors[k] * f.integ_jxd_unchecked(x + lag, *d),
            Probe::Inner(_) => f.dot_unchecked(&self.adjoints[k]),
        }
    }
}

enum PreparedDirection<'a> {
    /// Tangent is deterministic: `ℓ(S_τ h)`.
    Fixed(f64),
    /// Factor tangent `D_{k+1} = U(D_k + ζ ΔW_k)`.
    Flow {
        d0: HwElement,
        zeta_proj: Vec<Vec<f64>>,
        zeta_right: Vec<&'a HwElement>,
    },
}

/// Cells of the factor that a set of point/delivery probes can reach, or
/// `None` when something needs the full quadrature window.
pub(crate) fn local_keep<'p>(spec: &ModelSpec, tau: f64, probes: impl IntoIterator<Item = &'p Probe>) -> Option<usize> {
    let mut reach: f64 = 0.0;
    for p in probes {
        match p {
            Probe::Inner(_) => return None,
            _ => reach = reach.max(p.reach()),
        }
    }
    if !spec.z_policy.is_constant() {
        return None;
    }
    let cells = ((reach + tau) / spec.dt()).ceil() as usize + 2;
    Some(cells.min(spec.space.storage_len()))
}

/// How a displacement `θ + c·dir` enters a streamed run.
enum PreparedOffset<'a> {
    /// `ℓ_i(S_τ h)` per probe; `X_τ` is affine in `x0`.
    X0(Vec<f64>),
    Y0(&'a HwElement),
    Eta {
        proj: Vec<Vec<f64>>,
        rights: Vec<&'a HwElement>,
    },
}

/// Values of the probes (and tangent functionals) on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFunctionals {
    pub probes: Vec<f64>,
    /// `ℓ_T(DX_τ(dir))` for each direction.
    pub tangents: Vec<f64>,
}

/// Streams paths and returns only linear functionals of `X_τ` and its tangents.
pub struct PathEvaluator<'a> {
    sim: Simulator<'a>,
    probes: Vec<PreparedProbe>,
    base: Vec<f64>,
    tangent_probe: Option<PreparedProbe>,
    directions: Vec<PreparedDirection<'a>>,
    /// Cells of the factor that the probes can reach, when nothing needs
    /// the full quadrature window.
    keep: Option<usize>,
    offset: Option<PreparedOffset<'a>>,
}

impl<'a> PathEvaluator<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        tau: f64,
        probes: &[Probe],
        tangent_probe: Option<&Probe>,
        directions: &'a [Direction],
    ) -> Result<Self> {
        let sim = Simulator::new(spec, tau)?;
        let sx = spec.semigroup_x;
        let prepared: Vec<PreparedProbe> = probes
            .iter()
            .map(|p| PreparedProbe::new(&sim, p))
            .collect::<Result<_>>()?;
        let flowed_x0 = sx.apply(tau, &spec.x0)?;
        let base = probes.iter().map(|p| p.apply(&flowed_x0)).collect::<Result<_>>()?;
        if !directions.is_empty() && tangent_probe.is_none() {
            return Err(Error::Argument("tangent directions need a tangent probe".into()));
        }
        let tangent_probe = tangent_probe.map(|p| PreparedProbe::new(&sim, p)).transpose()?;
        let mut dirs = Vec::with_capacity(directions.len());
        for dir in directions {
            let tp = tangent_probe.as_ref().expect("checked above");
            dirs.push(match dir {
                Direction::X0(h) => PreparedDirection::Fixed(tp.probe.apply(&sx.apply(tau, h)?)?),
                Direction::Y0(h) => PreparedDirection::Flow {
                    d0: h.clone(),
                    zeta_proj: Vec::new(),
                    zeta_right: Vec::new(),
                },
                Direction::Eta(z) => PreparedDirection::Flow {
                    d0: spec.space.zero(),
                    zeta_proj: project(z, &spec.q_w)?,
                    zeta_right: z.terms().iter().map(|(_, _, b)| b).collect(),
                },
            });
        }
        for d in &dirs {
            if let PreparedDirection::Flow { d0, .. } = d {
                if !d0.space().same_as(&spec.space) || d0.valid_len() < spec.space.storage_len() {
                    return Err(Error::Config("direction must span the model grid".into()));
                }
            }
        }
        let keep = local_keep(
            spec,
            tau,
            probes.iter().chain(tangent_probe.as_ref().map(|p| &p.probe)),
        );
        Ok(Self {
            sim,
            probes: prepared,
            base,
            tangent_probe,
            directions: dirs,
            keep,
            offset: None,
        })
    }

    pub fn simulator(&self) -> &Simulator<'a> {
        &self.sim
    }

    /// Enables [`run_offset`](Self::run_offset) along `dir`.
    pub fn with_offset_direction(mut self, dir: &'a Direction) -> Result<Self> {
        let spec = self.sim.spec;
        self.offset = Some(match dir {
            Direction::X0(h) => {
                let flowed = spec.semigroup_x.apply(self.sim.n_steps as f64 * spec.dt(), h)?;
                PreparedOffset::X0(
                    self.probes
                        .iter()
                        .map(|p| p.probe.apply(&flowed))
                        .collect::<Result<_>>()?,
                )
            }
            Direction::Y0(h) => {
                if !h.space().same_as(&spec.space) || h.valid_len() < spec.space.storage_len() {
                    return Err(Error::Config("direction must span the model grid".into()));
                }
                PreparedOffset::Y0(h)
            }
            Direction::Eta(z) => PreparedOffset::Eta {
                proj: project(z, &spec.q_w)?,
                rights: z.terms().iter().map(|(_, _, b)| b).collect(),
            },
        });
        Ok(self)
    }

    pub fn run(&self, seed: u64, path: u64) -> Result<PathFunctionals> {
        self.run_inner(seed, path, 0.0)
    }

    /// Runs the model at `θ + c·dir` for the direction set with
    /// [`with_offset_direction`](Self::with_offset_direction).
    pub fn run_offset(&self, seed: u64, path: u64, c: f64) -> Result<PathFunctionals> {
        if self.offset.is_none() {
            return Err(Error::Argument("evaluator has no offset direction".into()));
        }
        self.run_inner(seed, path, c)
    }

    fn run_inner(&self, seed: u64, path: u64, c: f64) -> Result<PathFunctionals> {
        let sim = &self.sim;
        let spec = sim.spec;
        let fac_y = sim.fac_y;
        let shifts_y = spec.semigroup_y.shifts();
        let mut probes = self.base.clone();
        let mut tangents = vec![0.0; self.directions.len()];
        let mut states: Vec<Option<HwElement>> = self
            .directions
            .iter()
            .map(|d| match d {
                PreparedDirection::Fixed(_) => None,
                PreparedDirection::Flow { d0, .. } => {
                    let mut d = d0.clone();
                    if let Some(keep) = self.keep {
                        d.truncate(keep);
                    }
                    Some(d)
                }
            })
            .collect();
        let mut scratch = Vec::new();
        let run_offset = match (&self.offset, c != 0.0) {
            (Some(PreparedOffset::Y0(h)), true) => RunOffset {
                y0: Some((c, *h)),
                eta: None,
            },
            (Some(PreparedOffset::Eta { proj, rights }), true) => RunOffset {
                y0: None,
                eta: Some((c, proj.as_slice(), rights.as_slice())),
            },
            _ => RunOffset::default(),
        };
        sim.run_y_with(seed, path, self.keep, &run_offset, |info| {
            let k = info.k;
            if info.beta != 0.0 {
                for (acc, p) in probes.iter_mut().zip(&self.probes) {
                    *acc += info.beta * p.after(k, info.y);
                }
            }
            if let Some(tp) = &self.tangent_probe {
                let mut y_term = None;
                for ((dir, state), acc) in self.directions.iter().zip(&mut states).zip(&mut tangents) {
                    let (PreparedDirection::Flow { zeta_proj, zeta_right, .. }, Some(d)) = (dir, state) else {
                        continue;
                    };
                    let db = sim.dbeta(info, d);
                    if info.beta != 0.0 {
                        *acc += info.beta * tp.after(k, d);
                    }
                    if db != 0.0 {
                        let yv = *y_term.get_or_insert_with(|| tp.after(k, info.y));
                        *acc += db * yv;
                    }
                    Simulator::eta_coefs(zeta_proj, info.dw, &mut scratch);
                    advance(d, &scratch, zeta_right, fac_y, shifts_y);
                }
            }
            Ok(())
        })?;
        for (acc, dir) in tangents.iter_mut().zip(&self.directions) {
            if let PreparedDirection::Fixed(v) = dir {
                *acc = *v;
            }
        }
        if let (Some(PreparedOffset::X0(shift)), true) = (&self.offset, c != 0.0) {
            for (p, v) in probes.iter_mut().zip(shift) {
                *p += c * v;
            }
        }
        Ok(PathFunctionals { probes, tangents })
    }
}

/// One full simulated scenario.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub seed: u64,
    pub path_index: u64,
    pub y: Vec<HwElement>,
    pub x: Vec<HwElement>,
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
    /// `DX_τ` along each requested direction.
    pub tangents: Vec<HwElement>,
}

/// Simulates and records one path up to `tau`, with tangent paths for `directions`.
pub fn simulate_path(
    spec: &ModelSpec,
    tau: f64,
    seed: u64,
    path_index: u64,
    directions: &[Direction],
) -> Result<PathBundle> {
    let sim = Simulator::new(spec, tau)?;
    let n = sim.n_steps;
    let dt = spec.dt();
    let dw = gen_increments(&spec.q_w, dt, n, &mut stream(seed, path_index, StreamTag::W));
    let db = gen_increments(&spec.q_b, dt, n, &mut stream(seed, path_index, StreamTag::B));
    let mut state = SystemState {
        y: spec.y0.clone(),
        x: spec.x0.clone(),
    };
    let mut ys = vec![state.y.clone()];
    let mut xs = vec![state.x.clone()];

    // factor tangent D and forward tangent T per flowing direction
    struct Flow<'z> {
        d: HwElement,
        t: HwElement,
        zeta: Option<(&'z FiniteRankOp, Vec<Vec<f64>>)>,
    }
    let mut flows: Vec<Option<Flow>> = directions
        .iter()
        .map(|dir| {
            Ok(match dir {
                Direction::X0(_) => None,
                Direction::Y0(h) => Some(Flow {
                    d: h.clone(),
                    t: spec.space.zero(),
                    zeta: None,
                }),
                Direction::Eta(z) => Some(Flow {
                    d: spec.space.zero(),
                    t: spec.space.zero(),
                    zeta: Some((z, project(z, &spec.q_w)?)),
                }),
            })
        })
        .collect::<Result<_>>()?;

    let mut zb = vec![0.0; spec.q_b.len()];
    let mut scratch = Vec::new();
    for k in 0..n {
        let (q, y_norm) = sim.z_state(&state.y, &mut zb);
        let beta = dot(&zb, &db[k]);
        let info = StepInfo {
            k,
            y: &state.y,
            dw: &dw[k],
            db: &db[k],
            zb: &zb,
            beta,
            q,
            y_norm,
        };
        for flow in flows.iter_mut().flatten() {
            let dbeta = sim.dbeta(&info, &flow.d);
            flow.t.axpy(beta, &flow.d)?;
            flow.t.axpy(dbeta, &state.y)?;
            spec.semigroup_x.apply_steps(1, &mut flow.t)?;
            match &flow.zeta {
                Some((z, proj)) => {
                    Simulator::eta_coefs(proj, &dw[k], &mut scratch);
                    let rights: Vec<&HwElement> = z.terms().iter().map(|(_, _, b)| b).collect();
                    advance(&mut flow.d, &scratch, &rights, sim.fac_y, spec.semigroup_y.shifts());
                }
                None => spec.semigroup_y.apply_steps(1, &mut flow.d)?,
            }
        }
        state = sim.step(&state, &dw[k], &db[k])?;
        ys.push(state.y.clone());
        xs.push(state.x.clone());
    }
    let tangents = directions
        .iter()
        .zip(flows)
        .map(|(dir, flow)| match (dir, flow) {
            (Direction::X0(h), _) => spec.semigroup_x.apply(tau, h),
            (_, Some(f)) => Ok(f.t),
            _ => unreachable!("flowing directions carry state"),
        })
        .collect::<Result<_>>()?;
    Ok(PathBundle {
        seed,
        path_index,
        y: ys,
        x: xs,
        dw,
        db,
        tangents,
    })
}

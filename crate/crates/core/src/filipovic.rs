//! Numerical realization of the Filipović space `H_w`.
//!
//! A curve is stored as its value at zero together with its weak derivative,
//! one sample per grid cell `[iΔx, (i+1)Δx)`. Between nodes the curve is
//! linear, so point values follow from a cumulative sum of the derivative and
//! integrals of the curve are exact.
//!
//! The inner product is
//!
//! ```text
//! <f, g>_w = f(0) g(0) + Σ_i ω_i f'_i g'_i,     ω_i = Δx² / ∫_{cell i} w⁻¹(s) ds
//! ```
//!
//! i.e. a harmonic cell average of the weight. With this choice the discrete
//! representers of point evaluation, of the delivery averages and of the
//! adjoint shift are exact in the discrete inner product, and their values
//! agree with the closed forms `h_x(y) = 1 + ∫_0^{x∧y} w⁻¹` at the nodes.
//!
//! All quadrature runs over the window `[0, L)`, `L = n_nodes·Δx`. Storage
//! extends `extension` cells past the window so that left shifts (which
//! consume data at the front) keep the window covered.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative slack used when deciding whether a time lies on the grid.
const GRID_SNAP_TOL: f64 = 1e-9;

/// The weight function `w` of the space.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    /// `w(x) = e^{αx}`.
    Exponential { alpha: f64 },
    /// Node values of `w` with spacing `spacing`; `1/w` is interpolated linearly
    /// and held constant past the last node.
    Tabulated { spacing: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFn {
    kind: WeightKind,
    inv_integral: f64,
}

impl WeightFn {
    pub fn exponential(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("weight rate must be positive, got {alpha}")));
        }
        Ok(Self {
            kind: WeightKind::Exponential { alpha },
            inv_integral: 1.0 / alpha,
        })
    }

    /// A tabulated weight. The integral of `1/w` is taken over the table span.
    pub fn tabulated(spacing: f64, values: Vec<f64>) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Config("weight table spacing must be positive".into()));
        }
        if values.len() < 2 {
            return Err(Error::Config("weight table needs at least two nodes".into()));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weight must satisfy w(0) = 1, got {}", values[0])));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite weight table entry".into()));
        }
        if values.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::Config("weight table must be nondecreasing".into()));
        }
        let inv_integral = values
            .windows(2)
            .map(|p| 0.5 * spacing * (1.0 / p[0] + 1.0 / p[1]))
            .sum();
        Ok(Self {
            kind: WeightKind::Tabulated { spacing, values },
            inv_integral,
        })
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    /// Rate `α` for the exponential weight, `None` for tables.
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            WeightKind::Exponential { alpha } => Some(alpha),
            WeightKind::Tabulated { .. } => None,
        }
    }

    /// `∫_0^∞ w⁻¹(s) ds`.
    pub fn inv_integral(&self) -> f64 {
        self.inv_integral
    }

    pub fn value(&self, y: f64) -> f64 {
        match &self.kind {
            WeightKind::Exponential { alpha } => (alpha * y).exp(),
            WeightKind::Tabulated { .. } => 1.0 / self.inv_value(y),
        }
    }

    fn inv_value(&self, y: f64) -> f64 {
        match &self.kind {
            WeightKind::Exponential { alpha } => (-alpha * y).exp(),
            WeightKind::Tabulated { spacing, values } => {
                let pos = (y / spacing).max(0.0);
                let k = pos.floor() as usize;
                if k + 1 >= values.len() {
                    return 1.0 / values[values.len() - 1];
                }
                let t = pos - k as f64;
                (1.0 - t) / values[k] + t / values[k + 1]
            }
        }
    }

    /// `∫_a^b w⁻¹(s) ds` for `0 ≤ a ≤ b`.
    pub fn inv_integral_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match &self.kind {
            WeightKind::Exponential { alpha } => {
                (-alpha * a).exp() * (-(-alpha * (b - a)).exp_m1()) / alpha
            }
            WeightKind::Tabulated { spacing, values } => {
                // piecewise-linear 1/w: integrate segment by segment
                let mut total = 0.0;
                let mut lo = a;
                while lo < b {
                    let k = (lo / spacing).floor();
                    let seg_end = ((k + 1.0) * spacing).min(b);
                    let hi = if seg_end <= lo { b.min(lo + spacing) } else { seg_end };
                    if (k as usize) + 1 >= values.len() {
                        total += (b - lo) / values[values.len() - 1];
                        break;
                    }
                    total += 0.5 * (hi - lo) * (self.inv_value(lo) + self.inv_value(hi));
                    lo = hi;
                }
                total
            }
        }
    }

    /// `∫_0^x w⁻¹(s) ds`.
    pub fn inv_integral_to(&self, x: f64) -> f64 {
        self.inv_integral_between(0.0, x)
    }
}

/// Uniform grid `0, Δx, 2Δx, …`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dx: f64,
    /// Cells in the quadrature window.
    pub n_nodes: usize,
    /// Extra cells beyond the window reserved for shift headroom.
    pub extension: usize,
}

impl Grid {
    pub fn new(dx: f64, n_nodes: usize, extension: usize) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {dx}")));
        }
        if n_nodes == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        Ok(Self { dx, n_nodes, extension })
    }

    pub fn storage_len(&self) -> usize {
        self.n_nodes + self.extension
    }

    /// Length `L` of the quadrature window.
    pub fn window(&self) -> f64 {
        self.n_nodes as f64 * self.dx
    }

    /// Number of cells spanned by `s`, which must be a nonnegative grid multiple.
    pub fn steps_of(&self, s: f64) -> Result<usize> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Config(format!("shift must be nonnegative, got {s}")));
        }
        let m = (s / self.dx).round();
        if (m * self.dx - s).abs() > GRID_SNAP_TOL * s.max(1.0) {
            return Err(Error::Config(format!("shift {s} is not a multiple of Δx = {}", self.dx)));
        }
        Ok(m as usize)
    }
}

/// A grid together with its weight and precomputed cell tables.
#[derive(Debug)]
pub struct Space {
    grid: Grid,
    weight: WeightFn,
    /// Cell average of `w⁻¹`.
    inv_w_avg: Vec<f64>,
    /// Quadrature weights `ω_i = Δx / inv_w_avg_i`.
    omega: Vec<f64>,
}

impl Space {
    pub fn new(grid: Grid, weight: WeightFn) -> Arc<Self> {
        let n = grid.storage_len();
        let dx = grid.dx;
        let inv_w_avg: Vec<f64> = (0..n)
            .map(|i| {
                let a = i as f64 * dx;
                weight.inv_integral_between(a, a + dx) / dx
            })
            .collect();
        let omega = inv_w_avg.iter().map(|v| dx / v).collect();
        Arc::new(Self {
            grid,
            weight,
            inv_w_avg,
            omega,
        })
    }

    /// Exponential weight `e^{αx}` on `[0, L)` with `L` rounded up to the grid.
    pub fn exponential(alpha: f64, dx: f64, window: f64, extension: usize) -> Result<Arc<Self>> {
        let n_nodes = (window / dx - GRID_SNAP_TOL).ceil().max(1.0) as usize;
        Ok(Self::new(Grid::new(dx, n_nodes, extension)?, WeightFn::exponential(alpha)?))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight(&self) -> &WeightFn {
        &self.weight
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes
    }

    pub fn storage_len(&self) -> usize {
        self.grid.storage_len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn inv_weight_avg(&self) -> &[f64] {
        &self.inv_w_avg
    }

    pub fn same_as(&self, other: &Space) -> bool {
        std::ptr::eq(self, other) || (self.grid == other.grid && self.weight == other.weight)
    }

    /// `√(2·max(1, ∫w⁻¹))`, the uniform bound on the left-shift operator norm.
    pub fn shift_norm_bound(&self) -> f64 {
        (2.0 * self.weight.inv_integral().max(1.0)).sqrt()
    }

    pub fn zero(self: &Arc<Self>) -> HwElement {
        HwElement::from_parts(self, 0.0, vec![0.0; self.storage_len()])
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> HwElement {
        HwElement::from_parts(self, c, vec![0.0; self.storage_len()])
    }

    /// Nodal interpolant of `f` over the whole storage.
    pub fn from_values(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> HwElement {
        let dx = self.dx();
        let n = self.storage_len();
        let values: Vec<f64> = (0..=n).map(|i| f(i as f64 * dx)).collect();
        let deriv = values.windows(2).map(|p| (p[1] - p[0]) / dx).collect();
        HwElement::from_parts(self, values[0], deriv)
    }

    /// Curve with value `f0` at zero and derivative `fprime` sampled at cell midpoints.
    pub fn from_derivative(self: &Arc<Self>, f0: f64, fprime: impl Fn(f64) -> f64) -> HwElement {
        let dx = self.dx();
        let deriv = (0..self.storage_len())
            .map(|i| fprime((i as f64 + 0.5) * dx))
            .collect();
        HwElement::from_parts(self, f0, deriv)
    }

    fn check_point(&self, x: f64, what: &str) -> Result<()> {
        let top = self.storage_len() as f64 * self.dx();
        if !(x.is_finite() && x >= 0.0 && x <= top * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("{what} = {x} outside [0, {top}]")));
        }
        Ok(())
    }

    /// Representer `h_x` of point evaluation: `<f, h_x>_w = f(x)`.
    pub fn kernel_hx(self: &Arc<Self>, x: f64) -> Result<HwElement> {
        self.check_point(x, "kernel point")?;
        let dx = self.dx();
        let deriv = (0..self.storage_len())
            .map(|i| overlap(i, dx, 0.0, x) * self.inv_w_avg[i] / dx)
            .collect();
        Ok(HwElement::from_parts(self, 1.0, deriv))
    }

    /// `‖δ_x‖²_* = h_x(x) = 1 + ∫_0^x w⁻¹`.
    pub fn eval_norm_sq(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Domain(format!("evaluation point {x} must be nonnegative")));
        }
        Ok(1.0 + self.weight.inv_integral_to(x))
    }

    /// Representer `h_d^I` of the average over `[0, d]`.
    pub fn kernel_hdi(self: &Arc<Self>, d: f64) -> Result<HwElement> {
        self.kernel_hxd(0.0, d)
    }

    /// Representer `h_{x,d}` of the delivery average `J_{x,d}`.
    ///
    /// Derivative: `w⁻¹` on `[0, x]`, `(x + d − y)/(d·w(y))` on `(x, x+d]`, zero after.
    pub fn kernel_hxd(self: &Arc<Self>, x: f64, d: f64) -> Result<HwElement> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Argument(format!("delivery length must be positive, got {d}")));
        }
        self.check_point(x + d, "delivery end")?;
        let dx = self.dx();
        let deriv = (0..self.storage_len())
            .map(|i| {
                let a = i as f64 * dx;
                let b = a + dx;
                let flat = overlap(i, dx, 0.0, x);
                let lo = a.max(x);
                let hi = b.min(x + d);
                let ramp = if hi > lo {
                    let end = x + d;
                    0.5 * ((end - lo) * (end - lo) - (end - hi) * (end - hi)) / d
                } else {
                    0.0
                };
                (flat + ramp) * self.inv_w_avg[i] / dx
            })
            .collect();
        Ok(HwElement::from_parts(self, 1.0, deriv))
    }
}

/// Length of `[i·dx, (i+1)·dx) ∩ [lo, hi]`.
fn overlap(i: usize, dx: f64, lo: f64, hi: f64) -> f64 {
    let a = i as f64 * dx;
    let b = a + dx;
    (b.min(hi) - a.max(lo)).max(0.0)
}

/// A curve in `H_w`.
///
/// `deriv()[i]` is the derivative on cell `i` of the curve's own coordinate;
/// shifting advances an internal offset, so the trustworthy length
/// (`valid_len`) shrinks with every left shift.
#[derive(Debug)]
pub struct HwElement {
    space: Arc<Space>,
    f0: f64,
    data: Vec<f64>,
    start: usize,
}

impl Clone for HwElement {
    fn clone(&self) -> Self {
        Self {
            space: Arc::clone(&self.space),
            f0: self.f0,
            data: self.deriv().to_vec(),
            start: 0,
        }
    }
}

impl PartialEq for HwElement {
    fn eq(&self, other: &Self) -> bool {
        self.space.same_as(&other.space) && self.f0 == other.f0 && self.deriv() == other.deriv()
    }
}

impl HwElement {
    /// Builds a curve from raw derivative samples. Samples past the storage
    /// length are dropped.
    pub fn from_parts(space: &Arc<Space>, f0: f64, mut deriv: Vec<f64>) -> Self {
        deriv.truncate(space.storage_len());
        Self {
            space: Arc::clone(space),
            f0,
            data: deriv,
            start: 0,
        }
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn deriv(&self) -> &[f64] {
        &self.data[self.start..]
    }

    pub fn valid_len(&self) -> usize {
        self.data.len() - self.start
    }

    /// Right end of the trustworthy data.
    pub fn valid_extent(&self) -> f64 {
        self.valid_len() as f64 * self.space.dx()
    }

    fn check_same_space(&self, other: &HwElement) -> Result<()> {
        if !self.space.same_as(&other.space) {
            return Err(Error::Config("curves live on different grids".into()));
        }
        Ok(())
    }

    fn check_window(&self) -> Result<()> {
        if self.valid_len() < self.space.n_nodes() {
            return Err(Error::Domain(format!(
                "curve covers {} cells, quadrature window needs {}",
                self.valid_len(),
                self.space.n_nodes()
            )));
        }
        Ok(())
    }

    pub fn inner_product(&self, other: &HwElement) -> Result<f64> {
        self.check_same_space(other)?;
        self.check_window()?;
        other.check_window()?;
        let v = self.dot_unchecked(other);
        if !v.is_finite() {
            return Err(Error::Data("non-finite value in inner product".into()));
        }
        Ok(v)
    }

    /// Inner product without precondition checks; caller guarantees both
    /// curves share the space and cover the window.
    pub(crate) fn dot_unchecked(&self, other: &HwElement) -> f64 {
        let n = self.space.n_nodes();
        let w = &self.space.omega[..n];
        let a = &self.deriv()[..n];
        let b = &other.deriv()[..n];
        let mut acc = [0.0f64; 4];
        let mut chunks = w.chunks_exact(4).zip(a.chunks_exact(4)).zip(b.chunks_exact(4));
        for ((w4, a4), b4) in &mut chunks {
            for k in 0..4 {
                acc[k] += w4[k] * a4[k] * b4[k];
            }
        }
        let rem = n - n % 4;
        let mut tail = 0.0;
        for i in rem..n {
            tail += w[i] * a[i] * b[i];
        }
        self.f0 * other.f0 + ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
    }

    pub fn norm_sq(&self) -> Result<f64> {
        self.inner_product(self)
    }

    pub fn norm(&self) -> Result<f64> {
        Ok(self.norm_sq()?.sqrt())
    }

    /// `δ_x(f) = f(0) + ∫_0^x f'`, linear between nodes.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Domain(format!("evaluation point {x} must be nonnegative")));
        }
        let ext = self.valid_extent();
        if x > ext * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("evaluation point {x} beyond valid data {ext}")));
        }
        let v = self.eval_unchecked(x);
        if !v.is_finite() {
            return Err(Error::Data("non-finite value in evaluation".into()));
        }
        Ok(v)
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let dx = self.space.dx();
        let d = self.deriv();
        let pos = x / dx;
        let k = (pos.floor() as usize).min(d.len());
        let mut sum = 0.0;
        for v in &d[..k] {
            sum += v;
        }
        let mut val = self.f0 + dx * sum;
        if k < d.len() {
            val += (x - k as f64 * dx) * d[k];
        }
        val
    }

    /// Node values `f(0), f(Δx), …` over the valid data.
    pub fn node_values(&self) -> Vec<f64> {
        let dx = self.space.dx();
        let mut out = Vec::with_capacity(self.valid_len() + 1);
        let mut v = self.f0;
        out.push(v);
        for d in self.deriv() {
            v += dx * d;
            out.push(v);
        }
        out
    }

    /// `I_d(f) = (1/d) ∫_0^d f(u) du`.
    pub fn integ_id(&self, d: f64) -> Result<f64> {
        self.integ_jxd(0.0, d)
    }

    /// `J_{x,d}(f) = (1/d) ∫_0^d f(x+u) du`: the exact integral of the
    /// piecewise-linear curve, summed cell by cell with the trapezoid rule.
    pub fn integ_jxd(&self, x: f64, d: f64) -> Result<f64> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Argument(format!("delivery length must be positive, got {d}")));
        }
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::Domain(format!("delivery start {x} must be nonnegative")));
        }
        let ext = self.valid_extent();
        if x + d > ext * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("delivery end {} beyond valid data {ext}", x + d)));
        }
        let v = self.integ_jxd_unchecked(x, d);
        if !v.is_finite() {
            return Err(Error::Data("non-finite value in delivery average".into()));
        }
        Ok(v)
    }

    pub(crate) fn integ_jxd_unchecked(&self, x: f64, d: f64) -> f64 {
        let dx = self.space.dx();
        let deriv = self.deriv();
        let end = x + d;
        let first = ((x / dx).floor() as usize).min(deriv.len().saturating_sub(1));
        // value at the left node of the first cell
        let mut node_val = self.f0 + dx * deriv[..first].iter().sum::<f64>();
        let mut integral = 0.0;
        // normalizing by the covered length rather than d keeps tiny intervals accurate
        let mut covered = 0.0;
        let mut i = first;
        while i < deriv.len() {
            let a = i as f64 * dx;
            if a >= end {
                break;
            }
            let lo = a.max(x);
            let hi = (a + dx).min(end);
            if hi > lo {
                let v_lo = node_val + deriv[i] * (lo - a);
                let v_hi = node_val + deriv[i] * (hi - a);
                integral += 0.5 * (hi - lo) * (v_lo + v_hi);
                covered += hi - lo;
            }
            node_val += dx * deriv[i];
            i += 1;
        }
        if covered > 0.0 {
            integral / covered
        } else {
            node_val
        }
    }

    /// Left shift `(S_s f)(y) = f(y + s)`.
    pub fn shift(&self, s: f64) -> Result<HwElement> {
        let m = self.space.grid.steps_of(s)?;
        let mut out = self.clone();
        out.shift_steps(m)?;
        Ok(out)
    }

    /// In-place left shift by `m` cells.
    pub fn shift_steps(&mut self, m: usize) -> Result<()> {
        if m == 0 {
            return Ok(());
        }
        if self.valid_len() < m + self.space.n_nodes() {
            return Err(Error::Domain(format!(
                "shift by {m} cells exhausts headroom ({} valid, window {})",
                self.valid_len(),
                self.space.n_nodes()
            )));
        }
        self.shift_steps_unchecked(m);
        Ok(())
    }

    pub(crate) fn shift_steps_unchecked(&mut self, m: usize) {
        let dx = self.space.dx();
        let head: f64 = self.data[self.start..self.start + m].iter().sum();
        self.f0 += dx * head;
        self.start += m;
    }

    /// Adjoint of the left shift with respect to `<·,·>_w`:
    /// `(S_s* g)(0) = g(0)`, derivative `g(0)·w⁻¹` on `[0, s]` and
    /// `w(y−s)/w(y)·g'(y−s)` beyond.
    pub fn shift_adjoint(&self, s: f64) -> Result<HwElement> {
        let m = self.space.grid.steps_of(s)?;
        self.check_window()?;
        let sp = &self.space;
        let len = (self.valid_len() + m).min(sp.storage_len());
        let g = self.deriv();
        let deriv = (0..len)
            .map(|j| {
                if j < m {
                    self.f0 * sp.inv_w_avg[j]
                } else {
                    sp.omega[j - m] / sp.omega[j] * g[j - m]
                }
            })
            .collect();
        Ok(HwElement::from_parts(sp, self.f0, deriv))
    }

    /// Drops valid data past `len` cells.
    pub(crate) fn truncate(&mut self, len: usize) {
        self.data.truncate(self.start + len);
    }

    pub fn scale(&mut self, c: f64) {
        self.f0 *= c;
        for v in &mut self.data[self.start..] {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> HwElement {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += c·other`; the result keeps the shorter valid length.
    pub fn axpy(&mut self, c: f64, other: &HwElement) -> Result<()> {
        self.check_same_space(other)?;
        self.axpy_unchecked(c, other);
        Ok(())
    }

    pub(crate) fn axpy_unchecked(&mut self, c: f64, other: &HwElement) {
        let len = self.valid_len().min(other.valid_len());
        self.data.truncate(self.start + len);
        self.f0 += c * other.f0;
        let dst = &mut self.data[self.start..];
        for (d, s) in dst.iter_mut().zip(&other.deriv()[..len]) {
            *d += c * s;
        }
    }

    /// `self ← fac·(self + Σ c_j b_j)` in a single pass.
    pub(crate) fn combine_scale_unchecked(&mut self, fac: f64, terms: &[(f64, &HwElement)]) {
        let len = terms
            .iter()
            .fold(self.valid_len(), |l, (_, b)| l.min(b.valid_len()));
        self.data.truncate(self.start + len);
        self.f0 = fac * terms.iter().fold(self.f0, |acc, (c, b)| acc + c * b.f0);
        let dst = &mut self.data[self.start..];
        match terms {
            [] => dst.iter_mut().for_each(|v| *v *= fac),
            [(c, b)] => {
                for (v, x) in dst.iter_mut().zip(b.deriv()) {
                    *v = fac * (*v + c * x);
                }
            }
            [(c1, b1), (c2, b2)] => {
                for ((v, x), y) in dst.iter_mut().zip(b1.deriv()).zip(b2.deriv()) {
                    *v = fac * (*v + c1 * x + c2 * y);
                }
            }
            [(c1, b1), (c2, b2), (c3, b3)] => {
                for (((v, x), y), z) in dst
                    .iter_mut()
                    .zip(b1.deriv())
                    .zip(b2.deriv())
                    .zip(b3.deriv())
                {
                    *v = fac * (*v + c1 * x + c2 * y + c3 * z);
                }
            }
            _ => {
                for (i, v) in dst.iter_mut().enumerate() {
                    let mut s = *v;
                    for (c, b) in terms {
                        s += c * b.deriv()[i];
                    }
                    *v = fac * s;
                }
            }
        }
    }

    pub fn add(&self, other: &HwElement) -> Result<HwElement> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &HwElement) -> Result<HwElement> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// `Σ c_k e_k` over a nonempty family sharing one space.
    pub fn linear_combination(coeffs: &[f64], elems: &[HwElement]) -> Result<HwElement> {
        let Some(first) = elems.first() else {
            return Err(Error::Argument("empty family".into()));
        };
        if coeffs.len() != elems.len() {
            return Err(Error::Argument("coefficient count does not match family".into()));
        }
        let mut out = first.space.zero();
        for (c, e) in coeffs.iter().zip(elems) {
            out.axpy(*c, e)?;
        }
        Ok(out)
    }

    /// CSV form: a header row with `f0, dx, alpha`, then `(node_index, deriv_value)` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let alpha = self
            .space
            .weight
            .alpha()
            .map(|a| a.to_string())
            .unwrap_or_else(|| "tabulated".into());
        let _ = writeln!(s, "f0,dx,alpha");
        let _ = writeln!(s, "{},{},{}", self.f0, self.space.dx(), alpha);
        let _ = writeln!(s, "node_index,deriv_value");
        for (i, v) in self.deriv().iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }

    pub fn from_csv(space: &Arc<Space>, text: &str) -> Result<HwElement> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let bad = |what: &str| Error::Data(format!("malformed curve CSV: {what}"));
        if lines.next().map(str::trim) != Some("f0,dx,alpha") {
            return Err(bad("missing header"));
        }
        let meta: Vec<&str> = lines.next().ok_or_else(|| bad("missing metadata"))?.split(',').collect();
        if meta.len() != 3 {
            return Err(bad("metadata row"));
        }
        let f0: f64 = meta[0].trim().parse().map_err(|_| bad("f0"))?;
        let dx: f64 = meta[1].trim().parse().map_err(|_| bad("dx"))?;
        if (dx - space.dx()).abs() > 1e-15 * dx.abs().max(1.0) {
            return Err(Error::Config(format!("curve spacing {dx} does not match grid {}", space.dx())));
        }
        if let Some(alpha) = space.weight.alpha() {
            let a: f64 = meta[2].trim().parse().map_err(|_| bad("alpha"))?;
            if a != alpha {
                return Err(Error::Config(format!("curve weight rate {a} does not match {alpha}")));
            }
        }
        if lines.next().map(str::trim) != Some("node_index,deriv_value") {
            return Err(bad("missing column header"));
        }
        let mut deriv = Vec::new();
        for (expected, line) in lines.enumerate() {
            let (idx, val) = line.split_once(',').ok_or_else(|| bad("row"))?;
            let idx: usize = idx.trim().parse().map_err(|_| bad("node index"))?;
            if idx != expected {
                return Err(bad("node indices out of order"));
            }
            deriv.push(val.trim().parse::<f64>().map_err(|_| bad("deriv value"))?);
        }
        Ok(HwElement::from_parts(space, f0, deriv))
    }
}

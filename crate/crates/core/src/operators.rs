//! Covariance, rank-one and finite-rank operators on `H_w`, and the
//! semigroups driving the two model factors.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filipovic::{HwElement, Space};

/// Largest accepted condition number of a seed family's Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// The seed family `{1, 1 − e^{−y}, 1 − e^{−2y}, …}` with `m` members.
pub fn seed_family(space: &Arc<Space>, m: usize) -> Vec<HwElement> {
    (0..m)
        .map(|k| {
            if k == 0 {
                space.constant(1.0)
            } else {
                let k = k as f64;
                space.from_values(move |y| 1.0 - (-k * y).exp())
            }
        })
        .collect()
}

/// Gram matrix `⟨f_i, f_j⟩_w` of a family.
pub fn gram_matrix(family: &[HwElement]) -> Result<DMatrix<f64>> {
    let m = family.len();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = family[i].inner_product(&family[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Orthonormalizes a family by modified Gram–Schmidt with one
/// reorthogonalization pass.
pub fn build_onb(seeds: &[HwElement]) -> Result<Vec<HwElement>> {
    if seeds.is_empty() {
        return Ok(Vec::new());
    }
    let gram = gram_matrix(seeds)?;
    let eig = gram.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min > MAX_GRAM_CONDITION {
        return Err(Error::Degeneracy(format!(
            "Gram matrix eigenvalues in [{min:e}, {max:e}], condition above {MAX_GRAM_CONDITION:e}"
        )));
    }
    let mut basis: Vec<HwElement> = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let mut v = seed.clone();
        for _ in 0..2 {
            for e in &basis {
                let c = e.inner_product(&v)?;
                v.axpy(-c, e)?;
            }
        }
        let n = v.norm()?;
        if !(n > 0.0) {
            return Err(Error::Degeneracy("seed family is linearly dependent".into()));
        }
        v.scale(1.0 / n);
        basis.push(v);
    }
    Ok(basis)
}

/// A trace-class covariance `Q = Σ λ_n v_n ⊗ v_n` with `H_w`-orthonormal `v_n`.
#[derive(Debug, Clone)]
pub struct CovOp {
    eigvals: Vec<f64>,
    eigvecs: Vec<HwElement>,
}

impl CovOp {
    pub fn new(eigvals: Vec<f64>, eigvecs: Vec<HwElement>) -> Result<Self> {
        if eigvals.len() != eigvecs.len() {
            return Err(Error::Config("eigenvalue and eigenvector counts differ".into()));
        }
        if eigvals.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("covariance eigenvalues must be finite and nonnegative".into()));
        }
        Ok(Self { eigvals, eigvecs })
    }

    /// `λ_n = scale·n^{−exponent}`, `n = 1..=m`, on the orthonormalized seed family.
    pub fn power_law(space: &Arc<Space>, scale: f64, exponent: f64, m: usize) -> Result<Self> {
        let vecs = build_onb(&seed_family(space, m))?;
        let vals = (1..=m).map(|n| scale * (n as f64).powf(-exponent)).collect();
        Self::new(vals, vecs)
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &[HwElement] {
        &self.eigvecs
    }

    pub fn len(&self) -> usize {
        self.eigvals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigvals.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.eigvals.iter().sum()
    }

    fn spectral_apply(&self, f: &HwElement, power: impl Fn(f64) -> f64) -> Result<HwElement> {
        let mut out = f.space().zero();
        for (l, v) in self.eigvals.iter().zip(&self.eigvecs) {
            let c = power(*l) * v.inner_product(f)?;
            out.axpy(c, v)?;
        }
        Ok(out)
    }

    pub fn apply(&self, f: &HwElement) -> Result<HwElement> {
        self.spectral_apply(f, |l| l)
    }

    /// `Q^{1/2} f = Σ √λ_n ⟨v_n, f⟩ v_n`.
    pub fn sqrt_apply(&self, f: &HwElement) -> Result<HwElement> {
        self.spectral_apply(f, f64::sqrt)
    }

    /// `‖Q^{1/2} f‖² = Σ λ_n ⟨v_n, f⟩²`.
    pub fn sqrt_norm_sq(&self, f: &HwElement) -> Result<f64> {
        let mut s = 0.0;
        for (l, v) in self.eigvals.iter().zip(&self.eigvecs) {
            let c = v.inner_product(f)?;
            s += l * c * c;
        }
        Ok(s)
    }
}

/// `cov_sqrt_apply(Q, f)`.
pub fn cov_sqrt_apply(q: &CovOp, f: &HwElement) -> Result<HwElement> {
    q.sqrt_apply(f)
}

/// `a ⊗ b : f ↦ ⟨a, f⟩ b`.
#[derive(Debug, Clone)]
pub struct RankOneOp {
    pub left: HwElement,
    pub right: HwElement,
}

impl RankOneOp {
    pub fn new(left: HwElement, right: HwElement) -> Self {
        Self { left, right }
    }

    pub fn apply(&self, f: &HwElement) -> Result<HwElement> {
        Ok(self.right.scaled(self.left.inner_product(f)?))
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.right.clone(), self.left.clone())
    }

    pub fn hs_norm(&self) -> Result<f64> {
        Ok(self.left.norm()? * self.right.norm()?)
    }

    /// `(a ⊗ b) Q^{1/2} = (Q^{1/2} a) ⊗ b`, since `Q^{1/2}` is symmetric.
    pub fn compose_cov_sqrt(&self, q: &CovOp) -> Result<Self> {
        Ok(Self::new(q.sqrt_apply(&self.left)?, self.right.clone()))
    }
}

/// `f ↦ Σ_j σ_j ⟨a_j, f⟩ b_j`.
#[derive(Debug, Clone)]
pub struct FiniteRankOp {
    space: Arc<Space>,
    terms: Vec<(f64, HwElement, HwElement)>,
}

impl FiniteRankOp {
    pub fn zero(space: &Arc<Space>) -> Self {
        Self {
            space: Arc::clone(space),
            terms: Vec::new(),
        }
    }

    pub fn new(space: &Arc<Space>, terms: Vec<(f64, HwElement, HwElement)>) -> Result<Self> {
        for (s, a, b) in &terms {
            if !s.is_finite() {
                return Err(Error::Data("non-finite operator weight".into()));
            }
            if !a.space().same_as(space) || !b.space().same_as(space) {
                return Err(Error::Config("operator term on a different grid".into()));
            }
        }
        Ok(Self {
            space: Arc::clone(space),
            terms,
        })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn terms(&self) -> &[(f64, HwElement, HwElement)] {
        &self.terms
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn apply(&self, f: &HwElement) -> Result<HwElement> {
        let mut out = self.space.zero();
        for (s, a, b) in &self.terms {
            out.axpy(s * a.inner_product(f)?, b)?;
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: Arc::clone(&self.space),
            terms: self
                .terms
                .iter()
                .map(|(s, a, b)| (*s, b.clone(), a.clone()))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            space: Arc::clone(&self.space),
            terms: self.terms.iter().map(|(s, a, b)| (c * s, a.clone(), b.clone())).collect(),
        }
    }

    /// `self + c·other`, by concatenating term lists.
    pub fn plus_scaled(&self, c: f64, other: &FiniteRankOp) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(s, a, b)| (c * s, a.clone(), b.clone())));
        Self::new(&self.space, terms)
    }

    /// `‖T‖²_HS = Σ_{jk} σ_j σ_k ⟨a_j, a_k⟩ ⟨b_j, b_k⟩`.
    pub fn hs_norm(&self) -> Result<f64> {
        let n = self.terms.len();
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                let (sj, aj, bj) = &self.terms[j];
                let (sk, ak, bk) = &self.terms[k];
                s += sj * sk * aj.inner_product(ak)? * bj.inner_product(bk)?;
            }
        }
        Ok(s.max(0.0).sqrt())
    }
}

/// A `C₀`-semigroup acting on `H_w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemigroupSpec {
    LeftShift,
    /// `e^{−κt}` times the left shift.
    DampedLeftShift { kappa: f64 },
    /// `e^{−κt}` times the identity.
    ScalarDecay { kappa: f64 },
}

impl SemigroupSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::LeftShift => Ok(()),
            Self::DampedLeftShift { kappa } | Self::ScalarDecay { kappa } => {
                if kappa.is_finite() && *kappa >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("semigroup rate must be nonnegative, got {kappa}")))
                }
            }
        }
    }

    /// Whether the semigroup moves the curve (and so consumes headroom).
    pub fn shifts(&self) -> bool {
        !matches!(self, Self::ScalarDecay { .. })
    }

    /// Scalar damping factor at time `t`.
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            Self::LeftShift => 1.0,
            Self::DampedLeftShift { kappa } | Self::ScalarDecay { kappa } => (-kappa * t).exp(),
        }
    }

    pub fn apply(&self, t: f64, f: &HwElement) -> Result<HwElement> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Argument(format!("semigroup time must be nonnegative, got {t}")));
        }
        let mut out = if self.shifts() { f.shift(t)? } else { f.clone() };
        let c = self.factor(t);
        if c != 1.0 {
            out.scale(c);
        }
        Ok(out)
    }

    /// In-place application over `m` grid steps.
    pub fn apply_steps(&self, m: usize, f: &mut HwElement) -> Result<()> {
        if self.shifts() {
            f.shift_steps(m)?;
        }
        let c = self.factor(m as f64 * f.space().dx());
        if c != 1.0 {
            f.scale(c);
        }
        Ok(())
    }

    pub fn apply_adjoint(&self, t: f64, f: &HwElement) -> Result<HwElement> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Argument(format!("semigroup time must be nonnegative, got {t}")));
        }
        let mut out = if self.shifts() { f.shift_adjoint(t)? } else { f.clone() };
        let c = self.factor(t);
        if c != 1.0 {
            out.scale(c);
        }
        Ok(out)
    }

    /// `δ_x(S_t f)` without materializing `S_t f`.
    pub fn eval_after(&self, t: f64, f: &HwElement, x: f64) -> Result<f64> {
        let at = if self.shifts() { x + t } else { x };
        Ok(self.factor(t) * f.eval(at)?)
    }

    /// `J_{x,d}(S_t f)` without materializing `S_t f`.
    pub fn jxd_after(&self, t: f64, f: &HwElement, x: f64, d: f64) -> Result<f64> {
        let at = if self.shifts() { x + t } else { x };
        Ok(self.factor(t) * f.integ_jxd(at, d)?)
    }
}

/// `semigroup_apply(S, t, f)`.
pub fn semigroup_apply(s: &SemigroupSpec, t: f64, f: &HwElement) -> Result<HwElement> {
    s.apply(t, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn space() -> Arc<Space> {
        Space::exponential(1.0, 1.0 / 64.0, 30.0, 64).unwrap()
    }

    #[test]
    fn unit_constant_is_its_own_basis() {
        let sp = space();
        let onb = build_onb(&[sp.constant(1.0)]).unwrap();
        assert_eq!(onb[0], sp.constant(1.0));
    }

    #[test]
    fn saturating_seed_is_orthogonal_to_constant() {
        let sp = space();
        let fam = seed_family(&sp, 2);
        // ⟨1 − e^{−y}, 1⟩_w = 0 since the second curve vanishes at zero
        assert_eq!(fam[1].inner_product(&fam[0]).unwrap(), 0.0);
        let onb = build_onb(&fam).unwrap();
        assert_abs_diff_eq!(onb[1].norm().unwrap(), 1.0, epsilon = 1e-12);
        let n = fam[1].norm().unwrap();
        assert_abs_diff_eq!(onb[1].f0(), 0.0);
        assert_abs_diff_eq!(onb[1].eval(1.0).unwrap(), fam[1].eval(1.0).unwrap() / n, epsilon = 1e-14);
    }

    #[test]
    fn default_basis_is_orthonormal() {
        let sp = space();
        let onb = build_onb(&seed_family(&sp, 8)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let ip = onb[i].inner_product(&onb[j]).unwrap();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ip - target).abs() <= 1e-10, "({i},{j}) = {ip}");
            }
        }
    }

    #[test]
    fn dependent_family_is_degenerate() {
        let sp = space();
        let a = sp.from_values(|y| 1.0 - (-y).exp());
        let fam = vec![sp.constant(1.0), a.clone(), a.scaled(2.0)];
        assert!(matches!(build_onb(&fam), Err(Error::Degeneracy(_))));
    }

    #[test]
    fn single_eigenpair_square_root() {
        let sp = space();
        let v = build_onb(&seed_family(&sp, 2)).unwrap();
        let q = CovOp::new(vec![4.0], vec![v[1].clone()]).unwrap();
        let out = q.sqrt_apply(&v[1]).unwrap();
        let expect = v[1].scaled(2.0);
        let diff = out.sub(&expect).unwrap().norm().unwrap();
        assert!(diff < 1e-12);
        let orth = q.sqrt_apply(&v[0]).unwrap();
        assert!(orth.norm().unwrap() < 1e-12);
    }

    #[test]
    fn rank_one_hs_and_adjoint() {
        let sp = space();
        let v = build_onb(&seed_family(&sp, 3)).unwrap();
        let t = RankOneOp::new(v[0].clone(), v[1].clone());
        assert_abs_diff_eq!(t.hs_norm().unwrap(), 1.0, epsilon = 1e-12);
        let f = sp.from_values(|y| (0.5 * y).sin() * (-y).exp() + 0.2);
        let g = sp.from_values(|y| 1.0 - (-3.0 * y).exp());
        let lhs = t.apply(&f).unwrap().inner_product(&g).unwrap();
        let rhs = f.inner_product(&t.adjoint().apply(&g).unwrap()).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn finite_rank_hs_matches_basis_sum() {
        let sp = space();
        let onb = build_onb(&seed_family(&sp, 6)).unwrap();
        let fam = seed_family(&sp, 6);
        let t = FiniteRankOp::new(
            &sp,
            vec![
                (0.7, fam[1].clone(), fam[2].clone()),
                (-0.3, fam[0].clone(), fam[4].clone()),
                (1.1, fam[3].clone(), fam[3].clone()),
            ],
        )
        .unwrap();
        let by_basis: f64 = onb
            .iter()
            .map(|e| t.apply(e).unwrap().norm_sq().unwrap())
            .sum();
        assert_abs_diff_eq!(t.hs_norm().unwrap(), by_basis.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(t.adjoint().hs_norm().unwrap(), t.hs_norm().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn semigroup_examples() {
        let sp = space();
        let f = sp.from_values(|y| 2.0 + (-y).exp());
        for s in [
            SemigroupSpec::LeftShift,
            SemigroupSpec::DampedLeftShift { kappa: 0.7 },
            SemigroupSpec::ScalarDecay { kappa: 1.0 },
        ] {
            assert_eq!(s.apply(0.0, &f).unwrap(), f);
            let twice = s.apply(0.25, &s.apply(0.5, &f).unwrap()).unwrap();
            let once = s.apply(0.75, &f).unwrap();
            assert_abs_diff_eq!(twice.f0(), once.f0(), epsilon = 1e-13);
            for (a, b) in twice.deriv().iter().zip(once.deriv()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-13);
            }
        }
        let half = SemigroupSpec::ScalarDecay { kappa: 1.0 }
            .apply(2f64.ln(), &f)
            .unwrap();
        assert_abs_diff_eq!(half.f0(), 0.5 * f.f0(), epsilon = 1e-15);
    }
}

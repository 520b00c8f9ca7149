//! Exterior algebra over the generators `e_j = d eta_j`, `a_j = d zeta-bar_j`
//! and `b_j = d z-bar_j` with complex coefficients.
//!
//! A monomial is a bitmask: bit `j` is `e_j`, bit `N + j` is `a_j`, bit
//! `2N + j` is `b_j`. Stored monomials are in increasing bit order and the
//! sign of any reordering is folded into the coefficient.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};
use crate::poly::powi;
use crate::sampling::SurfacePoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gen {
    E(usize),
    A(usize),
    B(usize),
}

/// An element of the exterior algebra on `3N` generators.
#[derive(Clone, Debug, PartialEq)]
pub struct FormValue {
    n: usize,
    terms: Vec<(u64, C64)>,
}

/// Sign of `m1 ^ m2` relative to the sorted monomial `m1 | m2`.
#[inline]
pub fn wedge_sign(m1: u64, m2: u64) -> f64 {
    let mut swaps = 0u32;
    let mut rest = m2;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (m1 >> j).count_ones();
        rest &= rest - 1;
    }
    if swaps & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl FormValue {
    pub fn zero(n: usize) -> Self {
        assert!(3 * n <= 64, "at most 21 ambient coordinates");
        Self { n, terms: Vec::new() }
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut f = Self::zero(n);
        if c != ZERO {
            f.terms.push((0, c));
        }
        f
    }

    pub fn gen(n: usize, g: Gen) -> Self {
        Self::monomial(n, &[g], ONE)
    }

    /// `c * g_1 ^ ... ^ g_k`, reordered into canonical form.
    pub fn monomial(n: usize, gens: &[Gen], c: C64) -> Self {
        let mut f = Self::scalar(n, c);
        for &g in gens {
            f = f.wedge_mask(Self::bit(n, g), ONE);
        }
        f
    }

    /// Builds a form from arbitrary (mask, coefficient) pairs.
    pub fn from_terms(n: usize, terms: Vec<(u64, C64)>) -> Self {
        let mut f = Self { n, terms };
        f.normalize();
        f
    }

    pub fn bit(n: usize, g: Gen) -> u64 {
        match g {
            Gen::E(j) => 1 << j,
            Gen::A(j) => 1 << (n + j),
            Gen::B(j) => 1 << (2 * n + j),
        }
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(u64, C64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn e_mask(&self) -> u64 {
        (1u64 << self.n) - 1
    }

    pub fn a_mask(&self) -> u64 {
        self.e_mask() << self.n
    }

    pub fn b_mask(&self) -> u64 {
        self.e_mask() << (2 * self.n)
    }

    /// Coefficient of a canonical monomial.
    pub fn coefficient(&self, mask: u64) -> C64 {
        self.terms
            .binary_search_by_key(&mask, |t| t.0)
            .map_or(ZERO, |i| self.terms[i].1)
    }

    fn normalize(&mut self) {
        self.terms.sort_unstable_by_key(|t| t.0);
        let mut out: Vec<(u64, C64)> = Vec::with_capacity(self.terms.len());
        for &(m, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == m => last.1 += c,
                _ => out.push((m, c)),
            }
        }
        out.retain(|t| t.1 != ZERO);
        self.terms = out;
    }

    fn wedge_mask(&self, mask: u64, c: C64) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m & mask == 0)
            .map(|&(m, x)| (m | mask, x * c * wedge_sign(m, mask)))
            .collect();
        Self::from_terms(self.n, terms)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(Error::UniverseMismatch(self.n, other.n))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Ok(Self::from_terms(self.n, terms))
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        self.terms.extend_from_slice(&other.terms);
        self.normalize();
    }

    pub fn scale(&self, c: C64) -> Self {
        if c == ZERO {
            return Self::zero(self.n);
        }
        Self { n: self.n, terms: self.terms.iter().map(|&(m, x)| (m, x * c)).collect() }
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.wedge_unchecked(other))
    }

    pub(crate) fn wedge_unchecked(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(m1, c1) in &self.terms {
            for &(m2, c2) in &other.terms {
                if m1 & m2 == 0 {
                    terms.push((m1 | m2, c1 * c2 * wedge_sign(m1, m2)));
                }
            }
        }
        Self::from_terms(self.n, terms)
    }

    /// Interior multiplication with `2 pi i sum_j eta_j d/d(d eta_j)`.
    pub fn contract_eta(&self, eta: &[C64]) -> Self {
        let e_mask = self.e_mask();
        let factor = C64::new(0.0, 2.0 * PI);
        let mut terms = Vec::new();
        for &(m, c) in &self.terms {
            let mut es = m & e_mask;
            while es != 0 {
                let j = es.trailing_zeros() as usize;
                let below = (m & ((1u64 << j) - 1)).count_ones();
                let sign = if below & 1 == 0 { 1.0 } else { -1.0 };
                terms.push((m & !(1u64 << j), c * factor * eta[j] * sign));
                es &= es - 1;
            }
        }
        Self::from_terms(self.n, terms)
    }

    /// Terms with exactly `k` e-generators.
    pub fn bidegree_part(&self, k: usize) -> Self {
        let e_mask = self.e_mask();
        Self {
            n: self.n,
            terms: self.terms.iter().filter(|(m, _)| (m & e_mask).count_ones() as usize == k).copied().collect(),
        }
    }

    /// Largest number of e-generators in any term.
    pub fn max_e_degree(&self) -> usize {
        let e_mask = self.e_mask();
        self.terms.iter().map(|(m, _)| (m & e_mask).count_ones() as usize).max().unwrap_or(0)
    }

    /// The form `kappa` with `self = kappa ^ e_1 ^ ... ^ e_N`.
    pub fn extract_top_eta(&self) -> Result<Self> {
        let e_mask = self.e_mask();
        let mut terms = Vec::with_capacity(self.terms.len());
        for &(m, c) in &self.terms {
            let found = (m & e_mask).count_ones() as usize;
            if found != self.n {
                return Err(Error::WrongDegree { expected: self.n, found });
            }
            let rest = m & !e_mask;
            terms.push((rest, c * wedge_sign(rest, e_mask)));
        }
        Ok(Self::from_terms(self.n, terms))
    }

    /// `e_1 ^ ... ^ e_N`.
    pub fn eta_volume(n: usize) -> Self {
        Self { n, terms: vec![((1u64 << n) - 1, ONE)] }
    }
}

/// Coefficients of the pullback to `Reg X` of the `(n, n)`-in-zeta part of
/// `u`, indexed by the `b_degree`-subsets of `dz-bar` generators in
/// lexicographic order. Each coefficient is a density against `dV_X`.
pub fn pullback_surface(u: &FormValue, pt: &SurfacePoint, b_degree: usize) -> Result<Vec<C64>> {
    let dim = pt.frame.len() / u.n;
    pullback_frame(u, &pt.frame, dim, b_degree)
}

/// [`pullback_surface`] for an explicit orthonormal `N x n` tangent frame.
pub fn pullback_frame(u: &FormValue, frame: &[C64], dim: usize, b_degree: usize) -> Result<Vec<C64>> {
    let big_n = u.n;
    let subsets = linalg::subsets(big_n, b_degree);
    let mut out = vec![ZERO; subsets.len()];
    let e_mask = u.e_mask();
    let a_mask = u.a_mask();
    let b_mask = u.b_mask();
    // dV = (i/2)^n (-1)^{n(n-1)/2} dw_1..dw_n dw-bar_1..dw-bar_n
    let sign = if (dim * (dim.saturating_sub(1)) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let vol = powi(C64::new(0.0, 0.5), dim as u32) * sign;
    let mut sub_e = vec![ZERO; dim * dim];
    let mut sub_a = vec![ZERO; dim * dim];
    for &(m, c) in u.terms() {
        let ea = (m & a_mask).count_ones() as usize;
        if ea > dim {
            return Err(Error::DegreeOverflow { found: ea, dim });
        }
        let ee = (m & e_mask).count_ones() as usize;
        if ee != dim || ea != dim || (m & b_mask).count_ones() as usize != b_degree {
            continue;
        }
        let rows_e = bits(m & e_mask, 0);
        let rows_a = bits(m & a_mask, big_n);
        for (i, &r) in rows_e.iter().enumerate() {
            for k in 0..dim {
                sub_e[i * dim + k] = frame[r * dim + k];
            }
        }
        for (i, &r) in rows_a.iter().enumerate() {
            for k in 0..dim {
                sub_a[i * dim + k] = frame[r * dim + k].conj();
            }
        }
        let density = c * linalg::det(&sub_e, dim) * linalg::det(&sub_a, dim) / vol;
        let bset = bits(m & b_mask, 2 * big_n);
        let idx = subsets.binary_search(&bset).expect("subset index");
        out[idx] += density;
    }
    Ok(out)
}

fn bits(mut m: u64, offset: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while m != 0 {
        out.push(m.trailing_zeros() as usize - offset);
        m &= m - 1;
    }
    out
}

/// `(sqrt(2)^q sum_I |phi_I|^2)^{1/2}` for coefficients in an orthonormal coframe.
pub fn pointwise_norm(coeffs: &[C64], q: usize) -> f64 {
    (2f64.sqrt().powi(q as i32)).sqrt() * linalg::norm(coeffs)
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3` clamped to `[0, 1]`, with its derivative.
pub fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let t2 = t * t;
        (t2 * t * (10.0 - 15.0 * t + 6.0 * t2), 30.0 * t2 * (1.0 - t) * (1.0 - t))
    }
}

/// Polynomial in `zeta` and `zeta-bar`: terms `c zeta^alpha zeta-bar^beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPoly {
    pub num_vars: usize,
    pub terms: Vec<(Vec<u32>, Vec<u32>, C64)>,
}

impl MixedPoly {
    pub fn constant(num_vars: usize, c: C64) -> Self {
        Self { num_vars, terms: vec![(vec![0; num_vars], vec![0; num_vars], c)] }
    }

    /// `c zeta^alpha zeta-bar^beta`.
    pub fn monomial(alpha: Vec<u32>, beta: Vec<u32>, c: C64) -> Self {
        Self { num_vars: alpha.len(), terms: vec![(alpha, beta, c)] }
    }

    pub fn plus(mut self, other: Self) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn eval(&self, zeta: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|(a, b, c)| {
                let mut v = *c;
                for j in 0..self.num_vars {
                    v *= powi(zeta[j], a[j]) * powi(zeta[j].conj(), b[j]);
                }
                v
            })
            .sum()
    }

    /// `d/d zeta-bar_k`.
    pub fn dbar(&self, k: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(_, b, _)| b[k] > 0)
            .map(|(a, b, c)| {
                let mut b2 = b.clone();
                b2[k] -= 1;
                (a.clone(), b2, c * f64::from(b[k]))
            })
            .collect();
        Self { num_vars: self.num_vars, terms }
    }

    pub fn is_holomorphic(&self) -> bool {
        self.terms.iter().all(|(_, b, c)| *c == ZERO || b.iter().all(|&x| x == 0))
    }
}

/// Radial bump: 1 on `|zeta| <= inner`, 0 on `|zeta| >= outer`, a quintic
/// smoothstep in `|zeta|^2` between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub inner: f64,
    pub outer: f64,
}

impl Bump {
    /// Value and derivative with respect to `s = |zeta|^2`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let (lo, hi) = (self.inner * self.inner, self.outer * self.outer);
        let (v, dv) = smoothstep((s - lo) / (hi - lo));
        (1.0 - v, -dv / (hi - lo))
    }
}

/// A `(0, q)` test form `sum_I P_I(zeta, zeta-bar) beta(|zeta|^2) d zeta-bar_I`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestForm {
    pub ambient_dim: usize,
    pub q: usize,
    pub coeffs: Vec<(Vec<usize>, MixedPoly)>,
    pub bump: Option<Bump>,
}

impl TestForm {
    pub fn function(poly: MixedPoly, bump: Option<Bump>) -> Self {
        Self { ambient_dim: poly.num_vars, q: 0, coeffs: vec![(Vec::new(), poly)], bump }
    }

    pub fn zero(ambient_dim: usize, q: usize) -> Self {
        Self { ambient_dim, q, coeffs: Vec::new(), bump: None }
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        for (_, p) in out.coeffs.iter_mut() {
            for t in p.terms.iter_mut() {
                t.2 *= c;
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|(_, p)| p.terms.iter().all(|t| t.2 == ZERO))
    }

    fn bump_at(&self, zeta: &[C64]) -> (f64, f64) {
        match self.bump {
            Some(b) => b.eval(linalg::norm_sqr(zeta)),
            None => (1.0, 0.0),
        }
    }

    /// Scalar value for `q = 0`.
    pub fn value(&self, zeta: &[C64]) -> C64 {
        let (beta, _) = self.bump_at(zeta);
        self.coeffs.iter().filter(|(i, _)| i.is_empty()).map(|(_, p)| p.eval(zeta) * beta).sum()
    }

    pub fn eval(&self, zeta: &[C64]) -> FormValue {
        let n = self.ambient_dim;
        let (beta, _) = self.bump_at(zeta);
        let mut out = FormValue::zero(n);
        for (idx, p) in &self.coeffs {
            let gens: Vec<Gen> = idx.iter().map(|&j| Gen::A(j)).collect();
            out.add_assign(&FormValue::monomial(n, &gens, p.eval(zeta) * beta));
        }
        out
    }

    /// Closed-form `dbar` of the form at `zeta`.
    pub fn dbar_eval(&self, zeta: &[C64]) -> FormValue {
        let n = self.ambient_dim;
        let (beta, dbeta) = self.bump_at(zeta);
        let mut out = FormValue::zero(n);
        for (idx, p) in &self.coeffs {
            let pv = p.eval(zeta);
            for k in 0..n {
                if idx.contains(&k) {
                    continue;
                }
                let c = p.dbar(k).eval(zeta) * beta + pv * dbeta * zeta[k];
                if c == ZERO {
                    continue;
                }
                let mut gens = vec![Gen::A(k)];
                gens.extend(idx.iter().map(|&j| Gen::A(j)));
                out.add_assign(&FormValue::monomial(n, &gens, c));
            }
        }
        out
    }

    /// Radius beyond which the form vanishes, if it has compact support.
    pub fn support_radius(&self) -> Option<f64> {
        self.bump.map(|b| b.outer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn e(j: usize) -> FormValue {
        FormValue::gen(3, Gen::E(j))
    }

    fn a(j: usize) -> FormValue {
        FormValue::gen(3, Gen::A(j))
    }

    #[test]
    fn wedge_examples() {
        let e1e2 = e(0).wedge(&e(1)).unwrap();
        let e2e1 = e(1).wedge(&e(0)).unwrap();
        assert_eq!(e1e2, e2e1.scale(c(-1.0, 0.0)));
        let u = e(0).add(&a(1)).unwrap();
        assert_eq!(FormValue::scalar(3, ONE).wedge(&u).unwrap(), u);
        let v = e(0).add(&a(0)).unwrap();
        assert!(v.wedge(&v).unwrap().is_zero());
        assert!(matches!(e(0).wedge(&FormValue::gen(4, Gen::E(0))), Err(Error::UniverseMismatch(3, 4))));
    }

    #[test]
    fn contraction_examples() {
        let eta = [c(0.3, -1.0), c(2.0, 0.5), c(-0.7, 0.1)];
        for j in 0..3 {
            let got = e(j).contract_eta(&eta);
            assert_eq!(got.coefficient(0), c(0.0, 2.0 * PI) * eta[j]);
        }
    }

    #[test]
    fn bidegree_examples() {
        let u = e(0).wedge(&a(0)).unwrap().add(&a(0).wedge(&a(1)).unwrap()).unwrap();
        assert_eq!(u.bidegree_part(1), e(0).wedge(&a(0)).unwrap());
        let mut sum = FormValue::zero(3);
        for k in 0..=3 {
            sum.add_assign(&u.bidegree_part(k));
        }
        assert_eq!(sum, u);
    }

    #[test]
    fn extract_examples() {
        let vol = FormValue::eta_volume(3);
        let u = a(0).wedge(&vol).unwrap().scale(c(5.0, 0.0));
        assert_eq!(u.extract_top_eta().unwrap(), a(0).scale(c(5.0, 0.0)));
        assert_eq!(vol.extract_top_eta().unwrap(), FormValue::scalar(3, ONE));
        assert!(matches!(e(0).extract_top_eta(), Err(Error::WrongDegree { expected: 3, found: 1 })));
    }

    #[test]
    fn pullback_of_volume_form_is_one() {
        // frame: a unitary 3x2 block
        let s = 1.0 / 2f64.sqrt();
        let frame = vec![c(s, 0.0), c(0.0, 0.0), c(0.0, s), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        // dV = (i/2)^2 dw1 dw1b dw2 dw2b in frame coordinates; build it ambiently via the frame
        let n = 3;
        let mut dw = Vec::new();
        let mut dwb = Vec::new();
        for k in 0..2 {
            // dw_k = sum_j conj(F_jk) d zeta_j on the tangent space
            let mut f = FormValue::zero(n);
            let mut fb = FormValue::zero(n);
            for j in 0..3 {
                f.add_assign(&FormValue::gen(n, Gen::E(j)).scale(frame[j * 2 + k].conj()));
                fb.add_assign(&FormValue::gen(n, Gen::A(j)).scale(frame[j * 2 + k]));
            }
            dw.push(f);
            dwb.push(fb);
        }
        let i2 = c(0.0, 0.5);
        let vol = dw[0]
            .wedge(&dwb[0])
            .unwrap()
            .wedge(&dw[1].wedge(&dwb[1]).unwrap())
            .unwrap()
            .scale(i2 * i2);
        let got = pullback_frame(&vol, &frame, 2, 0).unwrap();
        assert!((got[0] - ONE).norm() < 1e-14, "{got:?}");
        let low = dw[0].wedge(&dw[1]).unwrap().wedge(&dwb[0]).unwrap();
        assert_eq!(pullback_frame(&low, &frame, 2, 0).unwrap()[0], ZERO);
        let over = a(0).wedge(&a(1)).unwrap().wedge(&a(2)).unwrap();
        assert!(matches!(pullback_frame(&over, &frame, 2, 0), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(pointwise_norm(&[c(3.0, 4.0)], 0), 5.0);
        assert!((pointwise_norm(&[ONE, ZERO], 1) - 2f64.powf(0.25)).abs() < 1e-15);
        // unitary rotation of the coframe
        let (cs, sn) = (0.6f64, 0.8f64);
        let phi = [c(0.3, -0.2), c(1.1, 0.4)];
        let rot = [phi[0] * cs - phi[1] * c(0.0, sn), phi[0] * c(0.0, -sn) + phi[1] * cs];
        assert!((pointwise_norm(&phi, 1) - pointwise_norm(&rot, 1)).abs() < 1e-10);
    }

    #[test]
    fn test_form_dbar_matches_finite_differences() {
        let poly = MixedPoly::monomial(vec![1, 0, 0], vec![0, 1, 0], c(1.0, 0.5))
            .plus(MixedPoly::monomial(vec![0, 0, 2], vec![1, 0, 1], c(-0.3, 0.0)));
        let bump = Some(Bump { inner: 0.5, outer: 1.5 });
        let forms = [
            TestForm::function(poly.clone(), bump),
            TestForm { ambient_dim: 3, q: 1, coeffs: vec![(vec![1], poly)], bump },
        ];
        let zeta = [c(0.4, 0.3), c(-0.5, 0.2), c(0.1, -0.6)];
        let h = 1e-6;
        for form in &forms {
            let closed = form.dbar_eval(&zeta);
            let mut fd = FormValue::zero(3);
            for k in 0..3 {
                let shift = |d: C64| {
                    let mut z = zeta;
                    z[k] += d;
                    form.eval(&z)
                };
                let dx = shift(c(h, 0.0)).add(&shift(c(-h, 0.0)).scale(c(-1.0, 0.0))).unwrap().scale(c(0.5 / h, 0.0));
                let dy = shift(c(0.0, h)).add(&shift(c(0.0, -h)).scale(c(-1.0, 0.0))).unwrap().scale(c(0.5 / h, 0.0));
                // d/d zeta-bar = (d/dx + i d/dy) / 2
                let partial = dx.add(&dy.scale(c(0.0, 1.0))).unwrap().scale(c(0.5, 0.0));
                fd.add_assign(&a(k).wedge(&partial).unwrap());
            }
            let diff = fd.add(&closed.scale(c(-1.0, 0.0))).unwrap();
            assert!(!closed.is_zero());
            assert!(diff.terms().iter().all(|t| t.1.norm() < 1e-6), "{diff:?}");
        }
    }

    fn arb_form(max_terms: usize) -> impl Strategy<Value = FormValue> {
        prop::collection::vec((0u64..(1 << 9), -1.0f64..1.0, -1.0f64..1.0), 0..max_terms)
            .prop_map(|v| FormValue::from_terms(3, v.into_iter().map(|(m, re, im)| (m, C64::new(re, im))).collect()))
    }

    fn homogeneous(f: FormValue, deg: u32) -> FormValue {
        let terms = f.terms().iter().filter(|(m, _)| m.count_ones() == deg).copied().collect();
        FormValue::from_terms(3, terms)
    }

    proptest! {
        #[test]
        fn graded_anticommutativity(u in arb_form(6), v in arb_form(6), p in 0u32..4, q in 0u32..4) {
            let (u, v) = (homogeneous(u, p), homogeneous(v, q));
            let lhs = u.wedge(&v).unwrap();
            let sign = if (p * q) % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = v.wedge(&u).unwrap().scale(C64::new(sign, 0.0));
            prop_assert!(lhs.add(&rhs.scale(C64::new(-1.0, 0.0))).unwrap().terms().iter().all(|t| t.1.norm() < 1e-12));
        }

        #[test]
        fn wedge_is_associative(u in arb_form(4), v in arb_form(4), w in arb_form(4)) {
            let l = u.wedge(&v).unwrap().wedge(&w).unwrap();
            let r = u.wedge(&v.wedge(&w).unwrap()).unwrap();
            prop_assert!(l.add(&r.scale(C64::new(-1.0, 0.0))).unwrap().terms().iter().all(|t| t.1.norm() < 1e-12));
        }

        #[test]
        fn contraction_is_an_antiderivation(u in arb_form(5), v in arb_form(5), p in 0u32..4,
                                            er in -1.0f64..1.0, ei in -1.0f64..1.0) {
            let u = homogeneous(u, p);
            let eta = [C64::new(er, ei), C64::new(0.3, -0.7), C64::new(-1.2, 0.4)];
            let lhs = u.wedge(&v).unwrap().contract_eta(&eta);
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = u.contract_eta(&eta).wedge(&v).unwrap()
                .add(&u.wedge(&v.contract_eta(&eta)).unwrap().scale(C64::new(sign, 0.0))).unwrap();
            prop_assert!(lhs.add(&rhs.scale(C64::new(-1.0, 0.0))).unwrap().terms().iter().all(|t| t.1.norm() < 1e-9));
            prop_assert!(u.contract_eta(&eta).contract_eta(&eta).terms().iter().all(|t| t.1.norm() < 1e-9));
        }

        #[test]
        fn extract_inverts_volume_wedge(u in arb_form(6)) {
            let e_mask = 0b111u64;
            let kappa = FormValue::from_terms(3, u.terms().iter().filter(|(m, _)| m & e_mask == 0).copied().collect());
            let back = kappa.wedge(&FormValue::eta_volume(3)).unwrap().extract_top_eta().unwrap();
            prop_assert_eq!(back, kappa);
        }
    }
}

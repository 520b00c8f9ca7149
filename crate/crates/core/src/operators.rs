//! Integral operators on `X` evaluated by stratified Monte Carlo: the
//! Koppelman pair `K`, `P` applied to test forms, the scalar model operators
//! `T`, `T_m`, `T_j`, and `L^p` norms.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::forms::{pointwise_norm, pullback_surface, FormValue, TestForm};
use crate::kernels::{
    double_exp_radius, kernel_k_with, kernel_p, ln_model_k_gamma, CalibrationConstants, KernelContext, WeightConfig,
};
use crate::linalg::{self, ZERO};
use crate::sampling::{integrate, Estimate, Integrand, QuadratureResult, Region, SamplingPlan, SurfacePoint};
use crate::varieties::ConeVariety;

struct KIntegrand<'a, F> {
    v: &'a ConeVariety,
    z: &'a [C64],
    cfg: &'a WeightConfig,
    cal: &'a CalibrationConstants,
    out_degree: usize,
    out_dim: usize,
    form: F,
}

impl<F: Fn(&[C64]) -> FormValue + Sync> Integrand for KIntegrand<'_, F> {
    fn dim(&self) -> usize {
        self.out_dim
    }

    fn eval(&self, pt: &SurfacePoint, out: &mut [C64]) {
        let phi = (self.form)(&pt.position);
        if phi.is_zero() {
            return;
        }
        let res = KernelContext::new(self.v, &pt.position)
            .and_then(|ctx| kernel_k_with(self.v, &ctx, &pt.position, self.z, self.cfg, self.cal))
            .and_then(|k| pullback_surface(&drop_overflow(&k.wedge_unchecked(&phi), self.v.dim()), pt, self.out_degree));
        match res {
            Ok(d) => out.copy_from_slice(&d),
            Err(e) => log::trace!("K integrand skipped a point: {e}"),
        }
    }
}

/// Drops terms with more than `n` `dzeta-bar` factors, which vanish on `X`.
fn drop_overflow(u: &FormValue, n: usize) -> FormValue {
    let a_mask = u.a_mask();
    if u.terms().iter().all(|(m, _)| (m & a_mask).count_ones() as usize <= n) {
        return u.clone();
    }
    let terms = u.terms().iter().filter(|(m, _)| (m & a_mask).count_ones() as usize <= n).copied().collect();
    FormValue::from_terms(u.universe(), terms)
}

fn check_z(v: &ConeVariety, z: &[C64], plan: &SamplingPlan) -> Result<()> {
    if z.len() != v.ambient_dim() {
        return Err(Error::InvalidArgument("z has the wrong dimension".into()));
    }
    if linalg::norm(z) < 10.0 * plan.r_min {
        log::warn!("z is within 10 r_min of the singular point; the estimate may be biased");
    }
    Ok(())
}

fn k_plan(v: &ConeVariety, z: &[C64], plan: &SamplingPlan) -> SamplingPlan {
    let n = v.dim();
    let mut plan = plan.clone().with_focus(z, (2 * n - 1) as f64);
    if v.excess() > 0 {
        plan = plan.with_focus(&vec![ZERO; v.ambient_dim()], v.excess() as f64);
    }
    plan
}

/// `int_{X cap B} K(zeta, z) ^ form(zeta)` for a `(0, q)`-form given pointwise,
/// over the ball `B` of radius `min(rho2, support)`. Returns `C(N, q-1)`
/// coefficients in lexicographic `dz-bar` order.
#[allow(clippy::too_many_arguments)]
pub fn apply_k_pointwise<F: Fn(&[C64]) -> FormValue + Sync>(
    v: &ConeVariety,
    q: usize,
    form: F,
    support: Option<f64>,
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
    plan: &SamplingPlan,
) -> Result<QuadratureResult> {
    cfg.validate()?;
    check_z(v, z, plan)?;
    if q == 0 || q > v.dim() {
        return Err(Error::WrongDegree { expected: 1, found: q });
    }
    let radius = support.map_or(cfg.rho2, |s| s.min(cfg.rho2)).min(cfg.omega_prime);
    let region = Region::ball(&vec![ZERO; v.ambient_dim()], radius);
    let integrand = KIntegrand {
        v,
        z,
        cfg,
        cal,
        out_degree: q - 1,
        out_dim: linalg::subsets(v.ambient_dim(), q - 1).len(),
        form,
    };
    integrate(v, &region, &integrand, &k_plan(v, z, plan))
}

/// `(K phi)(z)` for a test form of bidegree `(0, q)`, `q >= 1`.
pub fn apply_k(
    v: &ConeVariety,
    phi: &TestForm,
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
    plan: &SamplingPlan,
) -> Result<QuadratureResult> {
    if phi.is_zero() {
        return Ok(zero_result(linalg::subsets(v.ambient_dim(), phi.q.saturating_sub(1)).len()));
    }
    apply_k_pointwise(v, phi.q, |x| phi.eval(x), phi.support_radius(), z, cfg, cal, plan)
}

/// `(K dbar phi)(z)` using the closed-form `dbar` of the test form.
pub fn apply_k_dbar(
    v: &ConeVariety,
    phi: &TestForm,
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
    plan: &SamplingPlan,
) -> Result<QuadratureResult> {
    if phi.is_zero() {
        return Ok(zero_result(linalg::subsets(v.ambient_dim(), phi.q).len()));
    }
    apply_k_pointwise(v, phi.q + 1, |x| phi.dbar_eval(x), phi.support_radius(), z, cfg, cal, plan)
}

fn zero_result(dim: usize) -> QuadratureResult {
    QuadratureResult { value: vec![ZERO; dim], stderr: vec![0.0; dim], samples: 0, discarded: 0, strata: Vec::new() }
}

/// `(P phi)(z)` for a function, integrating over the annulus `rho1 <= |zeta| <= rho2`.
pub fn apply_p(
    v: &ConeVariety,
    phi: &TestForm,
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
    plan: &SamplingPlan,
) -> Result<QuadratureResult> {
    cfg.validate()?;
    check_z(v, z, plan)?;
    if phi.q != 0 {
        return Err(Error::WrongDegree { expected: 0, found: phi.q });
    }
    if phi.is_zero() {
        return Ok(zero_result(1));
    }
    let region = Region::annulus(&vec![ZERO; v.ambient_dim()], cfg.rho1, cfg.rho2);
    let plan = SamplingPlan { foci: Vec::new(), ..plan.clone() };
    let integrand = crate::sampling::ScalarFn(|pt: &SurfacePoint| {
        let val = phi.value(&pt.position);
        if val == ZERO {
            return ZERO;
        }
        let res = kernel_p(v, &pt.position, z, cfg, cal).and_then(|p| pullback_surface(&p, pt, 0));
        match res {
            Ok(d) => d[0] * val,
            Err(e) => {
                log::trace!("P integrand skipped a point: {e}");
                ZERO
            }
        }
    });
    integrate(v, &region, &integrand, &plan)
}

/// Scalar integrand `f(zeta) exp(ln_kernel(zeta))` combined in logs.
struct LogKernel<F, G> {
    f: F,
    ln_kernel: G,
}

impl<F: Fn(&[C64]) -> f64 + Sync, G: Fn(&[C64]) -> Option<f64> + Sync> Integrand for LogKernel<F, G> {
    fn eval(&self, pt: &SurfacePoint, out: &mut [C64]) {
        self.eval_weighted(pt, 0.0, out);
    }

    fn eval_weighted(&self, pt: &SurfacePoint, ln_weight: f64, out: &mut [C64]) {
        let fv = (self.f)(&pt.position);
        if fv == 0.0 {
            return;
        }
        if let Some(lk) = (self.ln_kernel)(&pt.position) {
            out[0] += C64::new(fv * (lk + ln_weight).exp(), 0.0);
        }
    }
}

fn check_model_gamma(v: &ConeVariety, gamma: f64, bound: f64) -> Result<()> {
    if !(0.0..bound).contains(&gamma) {
        return Err(Error::ExponentRange(format!("gamma = {gamma} outside [0, {bound})")));
    }
    let _ = v;
    Ok(())
}

fn model_plan(v: &ConeVariety, z: &[C64], gamma: f64, plan: &SamplingPlan) -> SamplingPlan {
    let n = v.dim();
    let mut plan = plan.clone().with_focus(z, (2 * n - 1) as f64);
    if gamma > 0.0 {
        plan = plan.with_focus(&vec![ZERO; v.ambient_dim()], gamma);
    }
    plan
}

fn estimate(res: &QuadratureResult) -> Estimate {
    Estimate { value: res.scalar().re, stderr: res.scalar_stderr() }
}

/// `T f(z) = int_region f(zeta) k_gamma(zeta, z) dV_X`.
pub fn apply_model_t<F: Fn(&[C64]) -> f64 + Sync>(
    v: &ConeVariety,
    f: F,
    z: &[C64],
    gamma: f64,
    region: &Region,
    plan: &SamplingPlan,
) -> Result<Estimate> {
    let n = v.dim();
    check_model_gamma(v, gamma, 2.0 * n as f64)?;
    let integrand = LogKernel { f, ln_kernel: |x: &[C64]| ln_model_k_gamma(x, z, gamma, n).ok() };
    Ok(estimate(&integrate(v, region, &integrand, &model_plan(v, z, gamma, plan))?))
}

/// `(T - T_j) f(z) = int_{k_gamma > j} f k_gamma dV_X`, the part removed by truncation at level `j`.
pub fn apply_truncation_error<F: Fn(&[C64]) -> f64 + Sync>(
    v: &ConeVariety,
    f: F,
    z: &[C64],
    gamma: f64,
    level: f64,
    region: &Region,
    plan: &SamplingPlan,
) -> Result<Estimate> {
    let n = v.dim();
    check_model_gamma(v, gamma, 2.0 * n as f64)?;
    let ln_level = level.ln();
    let integrand = LogKernel {
        f,
        ln_kernel: |x: &[C64]| ln_model_k_gamma(x, z, gamma, n).ok().filter(|&lk| lk > ln_level),
    };
    Ok(estimate(&integrate(v, region, &integrand, &model_plan(v, z, gamma, plan))?))
}

/// Largest `m` for which `r_{m+1} = exp(-e^{m+1})` stays in the normal double range.
pub const MAX_ANNULUS_INDEX: usize = 5;

/// `T_m f(z) = int_{r_{m+1} <= |zeta| <= r_m} f k_gamma / (|zeta| |log |zeta||) dV_X`.
pub fn apply_t_m<F: Fn(&[C64]) -> f64 + Sync>(
    v: &ConeVariety,
    f: F,
    z: &[C64],
    gamma: f64,
    m: usize,
    plan: &SamplingPlan,
) -> Result<Estimate> {
    let n = v.dim();
    check_model_gamma(v, gamma, 2.0 * n as f64 - 1.0)?;
    if m > MAX_ANNULUS_INDEX {
        return Err(Error::ExponentRange(format!("annulus index {m} > {MAX_ANNULUS_INDEX} underflows")));
    }
    let (r_in, r_out) = (double_exp_radius(m as f64 + 1.0), double_exp_radius(m as f64));
    let origin = vec![ZERO; v.ambient_dim()];
    let region = Region::annulus(&origin, r_in, r_out);
    let integrand = LogKernel {
        f,
        ln_kernel: |x: &[C64]| {
            let r = linalg::norm(x);
            let lk = ln_model_k_gamma(x, z, gamma, n).ok()?;
            Some(lk - r.ln() - r.ln().abs().ln())
        },
    };
    let mut plan = plan.clone().with_focus(&origin, gamma + 1.0);
    if linalg::norm(z) < 2.0 * r_out {
        plan = plan.with_focus(z, (2 * n - 1) as f64);
    }
    Ok(estimate(&integrate(v, &region, &integrand, &plan)?))
}

/// `(int_region |f|^p dV_X)^{1/p}` for a pointwise magnitude `f`, with a
/// delta-method standard error.
pub fn lp_norm<F: Fn(&SurfacePoint) -> f64 + Sync>(
    v: &ConeVariety,
    f: F,
    region: &Region,
    p: f64,
    plan: &SamplingPlan,
) -> Result<Estimate> {
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidArgument(format!("lp_norm needs 1 <= p < inf, got {p}")));
    }
    let integrand = crate::sampling::ScalarFn(|pt: &SurfacePoint| C64::new(f(pt).abs().powf(p), 0.0));
    let res = integrate(v, region, &integrand, plan)?;
    let i = res.scalar().re.max(0.0);
    let value = i.powf(1.0 / p);
    let stderr = if i > 0.0 { res.scalar_stderr() * value / (p * i) } else { 0.0 };
    Ok(Estimate { value, stderr })
}

/// Empirical essential supremum of `f` over the sample points, with the sample count.
pub fn sup_norm<F: Fn(&SurfacePoint) -> f64 + Sync>(
    v: &ConeVariety,
    f: F,
    region: &Region,
    plan: &SamplingPlan,
) -> Result<(f64, usize)> {
    use std::sync::Mutex;
    let best = Mutex::new(0.0f64);
    let integrand = crate::sampling::ScalarFn(|pt: &SurfacePoint| {
        let x = f(pt).abs();
        let mut b = best.lock().expect("sup lock");
        if x > *b {
            *b = x;
        }
        ZERO
    });
    let res = integrate(v, region, &integrand, plan)?;
    Ok((best.into_inner().expect("sup lock"), res.samples))
}

/// Coefficients of a `(0, q)` ambient form restricted to the tangent coframe at `pt`.
pub fn restrict_to_frame(form: &FormValue, pt: &SurfacePoint, q: usize) -> Vec<C64> {
    let big_n = form.universe();
    let n = pt.frame.len() / big_n;
    let targets = linalg::subsets(n, q);
    let mut out = vec![ZERO; targets.len()];
    let a_mask = form.a_mask();
    let mut sub = vec![ZERO; q * q];
    for &(m, c) in form.terms() {
        if m & !a_mask != 0 || (m & a_mask).count_ones() as usize != q {
            continue;
        }
        let rows: Vec<usize> = (0..big_n).filter(|j| m & (1u64 << (big_n + j)) != 0).collect();
        for (t, cols) in targets.iter().enumerate() {
            for (i, &r) in rows.iter().enumerate() {
                for (k, &col) in cols.iter().enumerate() {
                    sub[i * q + k] = pt.frame[r * n + col].conj();
                }
            }
            out[t] += c * if q == 0 { C64::new(1.0, 0.0) } else { linalg::det(&sub, q) };
        }
    }
    out
}

/// `L^p` norm of a test form on `X cap region` with the intrinsic pointwise norm.
pub fn form_lp_norm(
    v: &ConeVariety,
    phi: &TestForm,
    region: &Region,
    p: f64,
    plan: &SamplingPlan,
) -> Result<Estimate> {
    lp_norm(v, |pt: &SurfacePoint| pointwise_norm(&restrict_to_frame(&phi.eval(&pt.position), pt, phi.q), phi.q), region, p, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{Bump, MixedPoly};
    use crate::sampling::{layer_cake_integral, point_with_norm};
    use std::f64::consts::PI;

    fn origin() -> Vec<C64> {
        vec![ZERO; 3]
    }

    #[test]
    fn k_of_two_form_on_a1_keeps_samples() {
        // kernel ^ dbar phi carries (0, 3)-terms in C^3 that vanish on X
        let v = ConeVariety::catalog("a1").unwrap();
        let poly = MixedPoly::monomial(vec![0, 0, 0], vec![0, 1, 0], C64::new(1.0, 0.0));
        let phi = TestForm { ambient_dim: 3, q: 1, coeffs: vec![(vec![0], poly)], bump: Some(Bump { inner: 0.6, outer: 1.4 }) };
        let z = point_with_norm(&v, 0.4, 2);
        let cfg = WeightConfig::default();
        let cal = CalibrationConstants::for_variety(&v).unwrap();
        let r = apply_k_dbar(&v, &phi, &z, &cfg, &cal, &SamplingPlan::new(3_000, 1)).unwrap();
        assert!(r.stderr.iter().any(|s| *s > 0.0), "{r:?}");
        assert!(linalg::norm(&r.value) > 0.0);
    }

    #[test]
    fn constant_lp_norm_on_hyperplane() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let est = lp_norm(&v, |_| 1.0, &Region::ball(&origin(), 1.0), 2.0, &SamplingPlan::new(20_000, 1)).unwrap();
        let want = (PI * PI / 2.0).sqrt();
        assert!((est.value - want).abs() < 3.0 * est.stderr + 1e-9, "{} +- {}", est.value, est.stderr);
    }

    #[test]
    fn inverse_norm_lp_on_a1_matches_layer_cake() {
        let v = ConeVariety::catalog("a1").unwrap();
        let plan = SamplingPlan::new(40_000, 2).with_focus(&origin(), 2.0);
        let est = lp_norm(&v, |pt| 1.0 / pt.norm(), &Region::ball(&origin(), 1.0), 2.0, &plan).unwrap();
        let lc = layer_cake_integral(&v, |s| 1.0 / (s * s), &origin(), 1.0, &SamplingPlan::new(20_000, 3)).unwrap();
        let (a, b) = (est.value * est.value, lc.value);
        let err = 2.0 * est.value * est.stderr;
        assert!((a - b).abs() < 3.0 * (err * err + lc.stderr * lc.stderr).sqrt() + 0.01 * b, "{a} vs {b}");
    }

    #[test]
    fn model_t_matches_layer_cake() {
        let v = ConeVariety::catalog("a1").unwrap();
        let z = point_with_norm(&v, 0.5, 4);
        let r = 0.3;
        let est = apply_model_t(&v, |_| 1.0, &z, 0.0, &Region::ball(&z, r), &SamplingPlan::new(40_000, 5)).unwrap();
        let lc = layer_cake_integral(&v, |s| s.powi(-3), &z, r, &SamplingPlan::new(20_000, 6)).unwrap();
        let tol = 3.0 * (est.stderr.powi(2) + lc.stderr.powi(2)).sqrt() + 0.01 * lc.value;
        assert!((est.value - lc.value).abs() < tol, "{} vs {}", est.value, lc.value);
        let zero = apply_model_t(&v, |_| 0.0, &z, 1.0, &Region::ball(&origin(), 1.0), &SamplingPlan::new(1000, 5)).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(matches!(
            apply_model_t(&v, |_| 1.0, &z, 4.0, &Region::ball(&origin(), 1.0), &SamplingPlan::new(1000, 5)),
            Err(Error::ExponentRange(_))
        ));
    }

    #[test]
    fn t_m_rejects_underflowing_annuli() {
        let v = ConeVariety::catalog("a1").unwrap();
        let z = point_with_norm(&v, 0.5, 4);
        assert!(apply_t_m(&v, |_| 1.0, &z, 1.0, 6, &SamplingPlan::new(1000, 1)).is_err());
        let t = apply_t_m(&v, |_| 1.0, &z, 1.0, 1, &SamplingPlan::new(4000, 1)).unwrap();
        assert!(t.value > 0.0);
    }

    #[test]
    fn zero_forms_give_zero() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let z = [C64::new(0.3, 0.0), ZERO, ZERO];
        let cfg = WeightConfig::default();
        let cal = CalibrationConstants::for_variety(&v).unwrap();
        let plan = SamplingPlan::new(1000, 1);
        let phi = TestForm::zero(3, 1);
        assert_eq!(apply_k(&v, &phi, &z, &cfg, &cal, &plan).unwrap().value, vec![ZERO]);
        let f = TestForm::zero(3, 0);
        assert_eq!(apply_p(&v, &f, &z, &cfg, &cal, &plan).unwrap().value, vec![ZERO]);
    }

    #[test]
    fn k_is_linear() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let z = [C64::new(0.3, 0.1), C64::new(0.0, -0.2), ZERO];
        let cfg = WeightConfig::default();
        let cal = CalibrationConstants::for_variety(&v).unwrap();
        let plan = SamplingPlan::new(4000, 9);
        let poly = MixedPoly::monomial(vec![1, 0, 0], vec![0, 1, 0], C64::new(1.0, 0.0));
        let phi = TestForm { ambient_dim: 3, q: 1, coeffs: vec![(vec![0], poly)], bump: Some(Bump { inner: 0.5, outer: 1.2 }) };
        let one = apply_k(&v, &phi, &z, &cfg, &cal, &plan).unwrap();
        let two = apply_k(&v, &phi.scaled(C64::new(2.0, 0.0)), &z, &cfg, &cal, &plan).unwrap();
        // identical seeds make the estimator exactly linear
        assert!((two.scalar() - one.scalar() * 2.0).norm() < 1e-9 * one.scalar().norm().max(1.0));
    }

    #[test]
    fn p_reproduces_constants_on_a1() {
        let v = ConeVariety::catalog("a1").unwrap();
        let cfg = WeightConfig::default();
        let cal = CalibrationConstants::for_variety(&v).unwrap();
        let z = point_with_norm(&v, 0.5, 21);
        let one = TestForm::function(MixedPoly::constant(3, C64::new(1.0, 0.0)), None);
        let res = apply_p(&v, &one, &z, &cfg, &cal, &SamplingPlan::new(40_000, 22)).unwrap();
        let err = res.scalar_stderr();
        assert!((res.scalar() - 1.0).norm() < 3.0 * err + 0.02, "{} +- {err}", res.scalar());
    }

    #[test]
    fn restriction_matches_frame_coefficients() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let plan = SamplingPlan::new(50, 1);
        let check = crate::sampling::ScalarFn(|pt: &SurfacePoint| {
            // a_2 vanishes on the hyperplane zeta_3 = 0
            let form = FormValue::gen(3, crate::forms::Gen::A(2));
            let c = restrict_to_frame(&form, pt, 1);
            assert!(linalg::norm(&c) < 1e-12);
            let form = FormValue::gen(3, crate::forms::Gen::A(0))
                .wedge(&FormValue::gen(3, crate::forms::Gen::A(1)))
                .unwrap();
            let c = restrict_to_frame(&form, pt, 2);
            assert!((c[0].norm() - 1.0).abs() < 1e-12);
            ZERO
        });
        integrate(&v, &Region::ball(&origin(), 1.0), &check, &plan).unwrap();
    }
}

//! Kernel ingredients: the Bochner-Martinelli form `B`, the ball weight `g`,
//! Hefer and structure forms, the assembled kernels `K` and `P`, and the
//! scalar model kernels `k_gamma`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{pullback_frame, smoothstep, wedge_sign, Bump, FormValue, Gen, MixedPoly, TestForm};
use crate::linalg::{self, ONE, ZERO};
use crate::varieties::ConeVariety;

/// `1 / (2 pi i)`.
pub(crate) const INV_2PI_I: C64 = C64::new(0.0, -1.0 / (2.0 * PI));

/// Minors norm on the unit link below which a point counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Cut-off radii of the ball weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub omega_prime: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { rho1: 1.0, rho2: 1.8, omega_prime: 2.0 }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho1 > 0.0 && self.rho1 < self.rho2 && self.rho2 <= self.omega_prime {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "weight radii need 0 < rho1 < rho2 <= omega', got {}, {}, {}",
                self.rho1, self.rho2, self.omega_prime
            )))
        }
    }

    /// `chi` and `d chi / ds` at `s = |zeta|^2`.
    pub fn chi(&self, s: f64) -> (f64, f64) {
        let (lo, hi) = (self.rho1 * self.rho1, self.rho2 * self.rho2);
        let (v, dv) = smoothstep((s - lo) / (hi - lo));
        (1.0 - v, -dv / (hi - lo))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Pointwise match with the flat Bochner-Martinelli density.
    FlatClosedForm,
    /// Fitted by Monte Carlo on the flat model.
    Calibrated,
}

/// Global complex scales applied to `K` and `P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConstants {
    pub c_k: C64,
    pub c_p: C64,
    pub provenance: Provenance,
}

impl CalibrationConstants {
    /// Constants for dimension `n` and codimension `nu` from the pointwise
    /// comparison on the linear model `C^n x {0}`: `c_K` maps the raw
    /// `K ^ d zeta-bar_j` density onto [`bm_flat_density`]. `P` carries
    /// `dbar chi` in front of `e_1 ^ ... ^ e_N` where `K ^ dbar phi` carries it
    /// behind, so `c_P = (-1)^N c_K`.
    pub fn flat(n: usize, nu: usize) -> Result<Self> {
        if n == 0 || nu == 0 {
            return Err(Error::InvalidArgument("flat model needs n >= 1 and nu >= 1".into()));
        }
        let big_n = n + nu;
        let mut zeta = vec![ZERO; big_n];
        let mut z = vec![ZERO; big_n];
        for j in 0..n {
            zeta[j] = C64::new(0.31 - 0.07 * j as f64, 0.12 + 0.05 * j as f64);
            z[j] = C64::new(-0.05 * j as f64, 0.1);
        }
        let raw = flat_raw_density(&zeta, &z, n, nu)?;
        let exact = bm_flat_density(&zeta[..n], &z[..n]);
        let c = exact[0] / raw[0];
        let sign = if big_n % 2 == 0 { 1.0 } else { -1.0 };
        Ok(Self { c_k: c, c_p: c * sign, provenance: Provenance::FlatClosedForm })
    }

    /// [`Self::flat`] for the dimensions of `v`.
    pub fn for_variety(v: &ConeVariety) -> Result<Self> {
        Self::flat(v.dim(), v.codim())
    }
}

/// Raw (`c_K = 1`) densities of `K ^ d zeta-bar_j`, `j < n`, for the linear
/// model `zeta_{n+1} = ... = zeta_{n+nu} = 0` inside the region where `g = 1`.
pub(crate) fn flat_raw_density(zeta: &[C64], z: &[C64], n: usize, nu: usize) -> Result<Vec<C64>> {
    let big_n = n + nu;
    let mut h = FormValue::scalar(big_n, ONE);
    for i in 0..nu {
        let mut row = vec![ZERO; big_n];
        row[n + i] = ONE;
        h = h.wedge_unchecked(&one_form(big_n, &row, INV_2PI_I));
    }
    let normal: Vec<usize> = (n..big_n).collect();
    let omega = hat_form(big_n, &normal, ONE);
    let eta = linalg::sub(zeta, z);
    let b_parts = bm_b_parts(&eta, n)?;
    let top = h.wedge_unchecked(&b_parts[n - 1]).extract_top_eta()?;
    let k = omega.wedge_unchecked(&top);
    let mut frame = vec![ZERO; big_n * n];
    for j in 0..n {
        frame[j * n + j] = ONE;
    }
    (0..n)
        .map(|j| {
            let u = k.wedge_unchecked(&FormValue::gen(big_n, Gen::A(j)));
            Ok(pullback_frame(&u, &frame, n, 0)?[0])
        })
        .collect()
}

/// Classical Bochner-Martinelli densities on `C^n`:
/// `k_j = -((n-1)!/pi^n) conj(zeta_j - z_j) / |zeta - z|^{2n}`, so that
/// `u(z) = int sum_j du/d zeta-bar_j k_j dV` for compactly supported `u`.
pub fn bm_flat_density(zeta: &[C64], z: &[C64]) -> Vec<C64> {
    let n = zeta.len();
    let eta = linalg::sub(zeta, z);
    let fact: f64 = (1..n).map(|k| k as f64).product();
    let c = -fact / PI.powi(n as i32) / linalg::norm(&eta).powi(2 * n as i32);
    eta.iter().map(|e| e.conj() * c).collect()
}

/// `scale * sum_j coeffs_j e_j`.
fn one_form(big_n: usize, coeffs: &[C64], scale: C64) -> FormValue {
    let terms = coeffs.iter().enumerate().filter(|(_, c)| **c != ZERO).map(|(j, c)| (1u64 << j, c * scale)).collect();
    FormValue::from_terms(big_n, terms)
}

/// `c * e-hat_I` with `e_I ^ e-hat_I = e_1 ^ ... ^ e_N`.
fn hat_form(big_n: usize, idx: &[usize], c: C64) -> FormValue {
    let all = (1u64 << big_n) - 1;
    let mask_i: u64 = idx.iter().map(|&j| 1u64 << j).sum();
    let rest = all & !mask_i;
    FormValue::from_terms(big_n, vec![(rest, c * wedge_sign(mask_i, rest))])
}

fn check_pole(eta: &[C64], what: &str) -> Result<f64> {
    let r = linalg::norm(eta);
    if r == 0.0 || !r.is_finite() {
        Err(Error::Pole(format!("{what} at eta = 0")))
    } else {
        Ok(r)
    }
}

/// `b = sum_j conj(eta_j) e_j / (2 pi i |eta|^2)`, normalized so that `delta_eta b = 1`.
pub fn bm_b(eta: &[C64]) -> Result<FormValue> {
    let r = check_pole(eta, "b")?;
    let coeffs: Vec<C64> = eta.iter().map(|e| e.conj() / r / r).collect();
    Ok(one_form(eta.len(), &coeffs, INV_2PI_I))
}

/// Closed-form `dbar b` with `d eta-bar_k = a_k - b_k`.
pub fn bm_dbar_b(eta: &[C64]) -> Result<FormValue> {
    let r = check_pole(eta, "dbar b")?;
    let big_n = eta.len();
    let (r2, r4) = (r * r, r * r * r * r);
    let mut terms = Vec::with_capacity(2 * big_n * big_n);
    for j in 0..big_n {
        for k in 0..big_n {
            let delta = if j == k { 1.0 / r2 } else { 0.0 };
            let m = (C64::new(delta, 0.0) - eta[j].conj() * eta[k] / r4) * INV_2PI_I;
            if m == ZERO {
                continue;
            }
            // a_k ^ e_j = -(e_j ^ a_k) in canonical order
            let ej = 1u64 << j;
            terms.push((ej | (1u64 << (big_n + k)), -m));
            terms.push((ej | (1u64 << (2 * big_n + k)), m));
        }
    }
    Ok(FormValue::from_terms(big_n, terms))
}

/// `[B_1, ..., B_n]` with `B_k = b ^ (dbar b)^{k-1}`.
pub fn bm_b_parts(eta: &[C64], n: usize) -> Result<Vec<FormValue>> {
    let b = bm_b(eta)?;
    let db = bm_dbar_b(eta)?;
    let mut parts = Vec::with_capacity(n);
    parts.push(b);
    for k in 1..n {
        let next = parts[k - 1].wedge_unchecked(&db);
        parts.push(next);
    }
    Ok(parts)
}

/// `B = b + b dbar b + ... + b (dbar b)^{N-1}`.
pub fn bm_big_b(eta: &[C64]) -> Result<FormValue> {
    let mut out = FormValue::zero(eta.len());
    for p in bm_b_parts(eta, eta.len())? {
        out.add_assign(&p);
    }
    Ok(out)
}

fn sigma_denominator(zeta: &[C64], z: &[C64]) -> Result<C64> {
    let d = linalg::inner(zeta, &linalg::sub(zeta, z));
    if d.norm() <= 1e-300 {
        return Err(Error::Pole("support form denominator |zeta|^2 - conj(zeta).z vanishes".into()));
    }
    Ok(d)
}

/// `sigma = sum_j conj(zeta_j) e_j / (2 pi i (|zeta|^2 - conj(zeta).z))`.
pub fn weight_sigma(zeta: &[C64], z: &[C64]) -> Result<FormValue> {
    let d = sigma_denominator(zeta, z)?;
    let coeffs: Vec<C64> = zeta.iter().map(|x| x.conj() / d).collect();
    Ok(one_form(zeta.len(), &coeffs, INV_2PI_I))
}

/// Closed-form `dbar sigma` in the `a` generators.
pub fn weight_dbar_sigma(zeta: &[C64], z: &[C64]) -> Result<FormValue> {
    let d = sigma_denominator(zeta, z)?;
    let big_n = zeta.len();
    let eta = linalg::sub(zeta, z);
    let mut terms = Vec::with_capacity(big_n * big_n);
    for j in 0..big_n {
        for k in 0..big_n {
            let delta = if j == k { ONE / d } else { ZERO };
            let m = (delta - zeta[j].conj() * eta[k] / (d * d)) * INV_2PI_I;
            if m != ZERO {
                terms.push(((1u64 << j) | (1u64 << (big_n + k)), -m));
            }
        }
    }
    Ok(FormValue::from_terms(big_n, terms))
}

/// `[g_0, ..., g_top]` with `g_0 = chi`, `g_k = -dbar chi ^ sigma ^ (dbar sigma)^{k-1}`.
pub fn weight_g_parts(zeta: &[C64], z: &[C64], cfg: &WeightConfig, top: usize) -> Result<Vec<FormValue>> {
    let big_n = zeta.len();
    let (chi, dchi) = cfg.chi(linalg::norm_sqr(zeta));
    let mut parts = vec![FormValue::scalar(big_n, C64::new(chi, 0.0))];
    if dchi == 0.0 {
        parts.resize(top + 1, FormValue::zero(big_n));
        return Ok(parts);
    }
    let dchi_form = FormValue::from_terms(
        big_n,
        zeta.iter().enumerate().map(|(j, x)| (1u64 << (big_n + j), -x * dchi)).collect(),
    );
    let sigma = weight_sigma(zeta, z)?;
    let dsigma = weight_dbar_sigma(zeta, z)?;
    let mut acc = dchi_form.wedge_unchecked(&sigma);
    for k in 1..=top {
        if k > 1 {
            acc = acc.wedge_unchecked(&dsigma);
        }
        parts.push(acc.clone());
    }
    Ok(parts)
}

/// `g = chi - dbar chi ^ (sigma + sigma dbar sigma + ...)`.
pub fn weight_g(zeta: &[C64], z: &[C64], cfg: &WeightConfig) -> Result<FormValue> {
    let mut out = FormValue::zero(zeta.len());
    for p in weight_g_parts(zeta, z, cfg, zeta.len())? {
        out.add_assign(&p);
    }
    Ok(out)
}

/// `h = h_1 ^ ... ^ h_nu` with `h_i = (1/2 pi i) sum_j H_i^j e_j`.
pub fn hefer_form(v: &ConeVariety, zeta: &[C64], z: &[C64]) -> FormValue {
    let big_n = v.ambient_dim();
    let h = v.hefer_coeffs(zeta, z);
    let mut out = FormValue::scalar(big_n, ONE);
    for i in 0..h.rows {
        let row: Vec<C64> = (0..big_n).map(|j| h.get(i, j)).collect();
        out = out.wedge_unchecked(&one_form(big_n, &row, h.convention_scale));
    }
    out
}

/// The single factor `h_i`.
pub fn hefer_factor(v: &ConeVariety, zeta: &[C64], z: &[C64], i: usize) -> FormValue {
    let big_n = v.ambient_dim();
    let h = v.hefer_coeffs(zeta, z);
    let row: Vec<C64> = (0..big_n).map(|j| h.get(i, j)).collect();
    one_form(big_n, &row, h.convention_scale)
}

/// `omega = sum_I conj(det J_I) e-hat_I / |m|^2`, evaluated on the unit link
/// and rescaled by `|zeta|^{-(d - nu)}`.
pub fn structure_form(v: &ConeVariety, zeta: &[C64]) -> Result<FormValue> {
    let big_n = v.ambient_dim();
    let r = linalg::norm(zeta);
    if r == 0.0 {
        if v.excess() > 0 {
            return Err(Error::NearSingular { norm: 0.0, tol: SINGULAR_TOL });
        }
    }
    let unit: Vec<C64> = if r > 0.0 { zeta.iter().map(|x| x / r).collect() } else { zeta.to_vec() };
    let minors = v.minors(&v.jacobian(&unit));
    let norm2: f64 = minors.iter().map(|(_, m)| m.norm_sqr()).sum();
    if norm2.sqrt() <= SINGULAR_TOL {
        return Err(Error::NearSingular { norm: norm2.sqrt(), tol: SINGULAR_TOL });
    }
    let scale = if v.excess() == 0 { 1.0 } else { r.powi(-(v.excess() as i32)) };
    let mut out = FormValue::zero(big_n);
    for (idx, m) in &minors {
        if *m != ZERO {
            out.add_assign(&hat_form(big_n, idx, m.conj() * (scale / norm2)));
        }
    }
    Ok(out)
}

/// Precomputed `z`-independent data at a surface point.
pub struct KernelContext {
    pub omega: FormValue,
}

impl KernelContext {
    pub fn new(v: &ConeVariety, zeta: &[C64]) -> Result<Self> {
        Ok(Self { omega: structure_form(v, zeta)? })
    }
}

/// `K = c_K omega ^ extract_top(h ^ (g ^ B)_n)`.
pub fn kernel_k(
    v: &ConeVariety,
    zeta: &[C64],
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
) -> Result<FormValue> {
    let ctx = KernelContext::new(v, zeta)?;
    kernel_k_with(v, &ctx, zeta, z, cfg, cal)
}

pub fn kernel_k_with(
    v: &ConeVariety,
    ctx: &KernelContext,
    zeta: &[C64],
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
) -> Result<FormValue> {
    let big_n = v.ambient_dim();
    let n = v.dim();
    let eta = linalg::sub(zeta, z);
    let g = weight_g_parts(zeta, z, cfg, n)?;
    if g.iter().all(FormValue::is_zero) {
        return Ok(FormValue::zero(big_n));
    }
    let b = bm_b_parts(&eta, n)?;
    let mut gb = FormValue::zero(big_n);
    for k in 0..n {
        if !g[k].is_zero() {
            gb.add_assign(&g[k].wedge_unchecked(&b[n - k - 1]));
        }
    }
    let top = hefer_form(v, zeta, z).wedge_unchecked(&gb).extract_top_eta()?;
    Ok(ctx.omega.wedge_unchecked(&top).scale(cal.c_k))
}

/// `P = c_P omega ^ extract_top(h ^ g_n)`; zero off the annulus `rho1 < |zeta| < rho2`.
pub fn kernel_p(
    v: &ConeVariety,
    zeta: &[C64],
    z: &[C64],
    cfg: &WeightConfig,
    cal: &CalibrationConstants,
) -> Result<FormValue> {
    let big_n = v.ambient_dim();
    let n = v.dim();
    let (_, dchi) = cfg.chi(linalg::norm_sqr(zeta));
    if dchi == 0.0 {
        return Ok(FormValue::zero(big_n));
    }
    let omega = structure_form(v, zeta)?;
    let g = weight_g_parts(zeta, z, cfg, n)?;
    let top = hefer_form(v, zeta, z).wedge_unchecked(&g[n]).extract_top_eta()?;
    Ok(omega.wedge_unchecked(&top).scale(cal.c_p))
}

fn check_gamma(zeta: &[C64], z: &[C64], gamma: f64) -> Result<(f64, f64, f64)> {
    let dist = linalg::norm(&linalg::sub(zeta, z));
    if dist == 0.0 {
        return Err(Error::Pole("model kernel at zeta = z".into()));
    }
    let rz = linalg::norm(zeta);
    if rz == 0.0 && gamma > 0.0 {
        return Err(Error::Pole("model kernel at zeta = 0".into()));
    }
    Ok((dist, rz, linalg::norm(z)))
}

/// `ln k_gamma`; `-inf` when `z = 0` and `gamma > 0`.
pub fn ln_model_k_gamma(zeta: &[C64], z: &[C64], gamma: f64, n: usize) -> Result<f64> {
    let (dist, rz, rw) = check_gamma(zeta, z, gamma)?;
    let ratio = if gamma == 0.0 { 0.0 } else { gamma * (rw.ln() - rz.ln()) };
    Ok(ratio - (2 * n - 1) as f64 * dist.ln())
}

/// `k_gamma = |z|^gamma / (|zeta|^gamma |zeta - z|^{2n-1})`.
pub fn model_k_gamma(zeta: &[C64], z: &[C64], gamma: f64, n: usize) -> Result<f64> {
    Ok(ln_model_k_gamma(zeta, z, gamma, n)?.exp())
}

/// `(|z|/|zeta|)^gamma conj(zeta_i - z_i) / |zeta - z|^{2n}`.
pub fn model_k_tilde(zeta: &[C64], z: &[C64], gamma: f64, i: usize, n: usize) -> Result<C64> {
    let (dist, rz, rw) = check_gamma(zeta, z, gamma)?;
    let ratio = if gamma == 0.0 { 1.0 } else { (gamma * (rw.ln() - rz.ln())).exp() };
    Ok((zeta[i] - z[i]).conj() * (ratio / dist.powi(2 * n as i32)))
}

/// `k_gamma` where `k_gamma <= j`, zero above.
pub fn k_gamma_truncated(zeta: &[C64], z: &[C64], gamma: f64, j: f64, n: usize) -> Result<f64> {
    let k = model_k_gamma(zeta, z, gamma, n)?;
    Ok(if k > j { 0.0 } else { k })
}

/// `r_k = exp(-e^k)`.
pub fn double_exp_radius(k: f64) -> f64 {
    (-k.exp()).exp()
}

/// `chi_k(|zeta|) k_gamma / (|zeta| |log |zeta||)` with `chi_k` the indicator
/// of `[r_{k+1}, r_k]`.
pub fn t_k_kernel(zeta: &[C64], z: &[C64], gamma: f64, k: usize, n: usize) -> Result<f64> {
    let rz = linalg::norm(zeta);
    if rz < double_exp_radius(k as f64 + 1.0) || rz > double_exp_radius(k as f64) {
        return Ok(0.0);
    }
    let lk = ln_model_k_gamma(zeta, z, gamma, n)?;
    Ok((lk - rz.ln() - rz.ln().abs().ln()).exp())
}

/// Per-point Monte Carlo estimates of the kernel constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub z: Vec<C64>,
    pub c_p: C64,
    pub c_p_stderr: f64,
    pub c_k: C64,
    pub c_k_stderr: f64,
}

/// Pooled constants from [`calibrate`] with their standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub constants: CalibrationConstants,
    pub c_p_stderr: f64,
    pub c_k_stderr: f64,
    pub points: Vec<CalibrationPoint>,
}

/// The test function used to fix `c_K`: `zeta-bar_1` times a bump reaching past `rho1`.
pub fn calibration_test_function(big_n: usize, cfg: &WeightConfig) -> TestForm {
    let mut beta = vec![0; big_n];
    beta[0] = 1;
    let poly = MixedPoly::monomial(vec![0; big_n], beta, ONE);
    TestForm::function(poly, Some(Bump { inner: 0.6 * cfg.rho1, outer: 0.5 * (cfg.rho1 + cfg.rho2) }))
}

fn pool(values: &[(C64, f64)]) -> (C64, f64) {
    let mut wsum = 0.0;
    let mut acc = ZERO;
    for &(c, s) in values {
        let w = 1.0 / (s * s).max(1e-300);
        wsum += w;
        acc += c * w;
    }
    (acc / wsum, (1.0 / wsum).sqrt())
}

/// Fits `c_P` from `P 1 = 1` and then `c_K` from `phi = P phi + K dbar phi`
/// on a flat variety, at each of `z_points`, and pools the estimates.
///
/// Fails with [`Error::CalibrationFailure`] when a per-point estimate differs
/// from the pooled value by more than 5 standard errors.
pub fn calibrate(
    v: &ConeVariety,
    cfg: &WeightConfig,
    z_points: &[Vec<C64>],
    plan: &crate::sampling::SamplingPlan,
) -> Result<Calibration> {
    use crate::operators::{apply_k_dbar, apply_p};
    if v.excess() != 0 || v.degrees().iter().any(|&d| d != 1) {
        return Err(Error::InvalidArgument(format!("calibration needs a flat variety, got {}", v.name())));
    }
    if z_points.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one z point".into()));
    }
    let raw = CalibrationConstants { c_k: ONE, c_p: ONE, provenance: Provenance::Calibrated };
    let one = TestForm::function(MixedPoly::constant(v.ambient_dim(), ONE), None);
    let phi = calibration_test_function(v.ambient_dim(), cfg);
    let mut per_p = Vec::with_capacity(z_points.len());
    let mut raw_parts = Vec::with_capacity(z_points.len());
    for (i, z) in z_points.iter().enumerate() {
        let p = plan.clone().with_stream(plan.stream.wrapping_mul(7919).wrapping_add(3 * i as u64));
        let p1 = apply_p(v, &one, z, cfg, &raw, &p)?;
        let pphi = apply_p(v, &phi, z, cfg, &raw, &p.clone().with_stream(p.stream + 1))?;
        let kphi = apply_k_dbar(v, &phi, z, cfg, &raw, &p.clone().with_stream(p.stream + 2))?;
        let (a, sa) = (p1.scalar(), p1.scalar_stderr());
        per_p.push((ONE / a, sa / a.norm_sqr()));
        raw_parts.push((pphi.scalar(), pphi.scalar_stderr(), kphi.scalar(), kphi.scalar_stderr()));
    }
    let (c_p, c_p_stderr) = pool(&per_p);
    let mut per_k = Vec::with_capacity(z_points.len());
    for (z, &(pv, ps, kv, ks)) in z_points.iter().zip(&raw_parts) {
        let num = phi.value(z) - c_p * pv;
        let c = num / kv;
        let num_var = (c_p.norm() * ps).powi(2) + (pv.norm() * c_p_stderr).powi(2);
        let s = ((num_var + (c.norm() * ks).powi(2)) / kv.norm_sqr()).sqrt();
        per_k.push((c, s));
    }
    let (c_k, c_k_stderr) = pool(&per_k);
    for (&(cp, sp), &(ck, sk)) in per_p.iter().zip(&per_k) {
        for (dev, s) in [((cp - c_p).norm(), sp), ((ck - c_k).norm(), sk)] {
            if dev > 5.0 * s {
                return Err(Error::CalibrationFailure { residual: dev, bound: 5.0 * s });
            }
        }
    }
    let points = z_points
        .iter()
        .zip(per_p.iter().zip(&per_k))
        .map(|(z, (&(cp, sp), &(ck, sk)))| CalibrationPoint { z: z.clone(), c_p: cp, c_p_stderr: sp, c_k: ck, c_k_stderr: sk })
        .collect();
    Ok(Calibration {
        constants: CalibrationConstants { c_k, c_p, provenance: Provenance::Calibrated },
        c_p_stderr,
        c_k_stderr,
        points,
    })
}

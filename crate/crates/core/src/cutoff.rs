//! Double-exponential cut-offs `mu_k = rho_k(log(-log r(|zeta|)))` that
//! switch off near the singular point, with their closed-form `dbar`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{pointwise_norm, smoothstep, FormValue};
use crate::kernels::double_exp_radius;
use crate::linalg::{self, ZERO};
use crate::operators::restrict_to_frame;
use crate::sampling::{integrate, point_with_norm, Estimate, Integrand, Region, SamplingPlan, SurfacePoint};
use crate::varieties::ConeVariety;

/// Radii below this are refused.
pub const UNDERFLOW_GUARD: f64 = 1e-300;

/// `rho_k(x) = 1 - S(x - k)` and its derivative.
pub fn rho_k(k: usize, x: f64) -> (f64, f64) {
    let (s, ds) = smoothstep(x - k as f64);
    (1.0 - s, -ds)
}

/// The radius modifier: `x` below 1/4, 1/2 above 3/4, with `r' = 1 - S(2(x - 1/4))` between.
pub fn r_fn(x: f64) -> (f64, f64) {
    if x <= 0.25 {
        (x, 1.0)
    } else if x >= 0.75 {
        (0.5, 0.0)
    } else {
        let u = 2.0 * (x - 0.25);
        let u4 = u * u * u * u;
        let antider = u4 * u * u - 3.0 * u4 * u + 2.5 * u4;
        (0.25 + 0.5 * (u - antider), 1.0 - smoothstep(u).0)
    }
}

fn check_radius(x: f64) -> Result<()> {
    if x < UNDERFLOW_GUARD {
        Err(Error::InvalidArgument(format!("radius {x:e} is below the underflow guard")))
    } else {
        Ok(())
    }
}

/// `mu_k` at `|zeta| = x`.
pub fn mu_k(k: usize, x: f64) -> Result<f64> {
    check_radius(x)?;
    let (r, _) = r_fn(x);
    Ok(rho_k(k, (-r.ln()).ln()).0)
}

/// The factor `c` with `dbar mu_k = c(x) sum_j zeta_j d zeta-bar_j / (2x)`.
pub fn dbar_mu_factor(k: usize, x: f64) -> Result<f64> {
    check_radius(x)?;
    let (r, dr) = r_fn(x);
    let (_, drho) = rho_k(k, (-r.ln()).ln());
    if drho == 0.0 || dr == 0.0 {
        return Ok(0.0);
    }
    Ok(drho * dr / (r * r.ln()))
}

/// `dbar mu_k` as an ambient `(0, 1)`-form.
pub fn dbar_mu_form(k: usize, zeta: &[C64]) -> Result<FormValue> {
    let x = linalg::norm(zeta);
    let c = dbar_mu_factor(k, x)?;
    let big_n = zeta.len();
    if c == 0.0 {
        return Ok(FormValue::zero(big_n));
    }
    let terms = zeta.iter().enumerate().map(|(j, z)| (1u64 << (big_n + j), z * (c / (2.0 * x)))).collect();
    Ok(FormValue::from_terms(big_n, terms))
}

/// Intrinsic pointwise norm of `dbar mu_k` on `X` at a sample point.
pub fn dbar_mu_norm(k: usize, pt: &SurfacePoint) -> Result<f64> {
    let form = dbar_mu_form(k, &pt.position)?;
    if form.is_zero() {
        return Ok(0.0);
    }
    Ok(pointwise_norm(&restrict_to_frame(&form, pt, 1), 1))
}

struct PowerNorm {
    k: usize,
    p: f64,
}

impl Integrand for PowerNorm {
    fn eval(&self, pt: &SurfacePoint, out: &mut [C64]) {
        self.eval_weighted(pt, 0.0, out);
    }

    fn eval_weighted(&self, pt: &SurfacePoint, ln_weight: f64, out: &mut [C64]) {
        if let Ok(m) = dbar_mu_norm(self.k, pt) {
            if m > 0.0 {
                out[0] += (self.p * m.ln() + ln_weight).exp();
            }
        }
    }
}

/// `||dbar mu_k||_{L^p(X cap B_1)}`, integrating over the support annulus.
pub fn dbar_mu_lp_norm(v: &ConeVariety, k: usize, p: f64, plan: &SamplingPlan) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::InvalidArgument("cut-off index must be >= 1".into()));
    }
    if !(p >= 1.0) || p.is_infinite() {
        return Err(Error::InvalidArgument(format!("need 1 <= p < inf, got {p}")));
    }
    let (r_in, r_out) = (double_exp_radius(k as f64 + 1.0), double_exp_radius(k as f64));
    check_radius(r_in)?;
    let origin = vec![ZERO; v.ambient_dim()];
    let plan = plan.clone().with_focus(&origin, p);
    let res = integrate(v, &Region::annulus(&origin, r_in, r_out), &PowerNorm { k, p }, &plan)?;
    let i = res.scalar().re.max(0.0);
    let value = i.powf(1.0 / p);
    let stderr = if i > 0.0 { res.scalar_stderr() * value / (p * i) } else { 0.0 };
    Ok(Estimate { value, stderr })
}

/// Where `dbar mu_k` was found nonzero among probe radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub k: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    pub probes: usize,
    pub nonzero_inside: usize,
    pub nonzero_outside: usize,
}

impl SupportReport {
    pub fn confined(&self) -> bool {
        self.nonzero_outside == 0 && self.nonzero_inside > 0
    }
}

/// Probes `dbar mu_k` at points of `X` with log-uniform radii spanning the
/// support annulus and one `e`-fold beyond it on each side.
pub fn support_check(v: &ConeVariety, k: usize, probes: usize, seed: u64) -> Result<SupportReport> {
    let (r_in, r_out) = (double_exp_radius(k as f64 + 1.0), double_exp_radius(k as f64));
    let lo = (r_in.ln() * 1.5).max(UNDERFLOW_GUARD.ln());
    let hi = (r_out.ln() * 0.5).min(0.9f64.ln());
    let mut report = SupportReport { k, r_inner: r_in, r_outer: r_out, probes, nonzero_inside: 0, nonzero_outside: 0 };
    let base = point_with_norm(v, 1.0, seed);
    for i in 0..probes {
        let t = (i as f64 + 0.5) / probes as f64;
        let x = (lo + t * (hi - lo)).exp();
        let zeta: Vec<C64> = base.iter().map(|c| c * x).collect();
        let c = dbar_mu_factor(k, linalg::norm(&zeta))?;
        if c != 0.0 {
            if x >= r_in * (1.0 - 1e-12) && x <= r_out * (1.0 + 1e-12) {
                report.nonzero_inside += 1;
            } else {
                report.nonzero_outside += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_modifier_is_c1_and_bounded() {
        assert_eq!(r_fn(0.1), (0.1, 1.0));
        assert_eq!(r_fn(0.9), (0.5, 0.0));
        assert!((r_fn(0.75 - 1e-12).0 - 0.5).abs() < 1e-10);
        assert!((r_fn(0.25 + 1e-12).0 - 0.25).abs() < 1e-10);
        let h = 1e-6;
        for i in 1..50 {
            let x = 0.25 + 0.5 * i as f64 / 50.0;
            let fd = (r_fn(x + h).0 - r_fn(x - h).0) / (2.0 * h);
            assert!((fd - r_fn(x).1).abs() < 1e-6);
            assert!((0.0..=1.0).contains(&r_fn(x).1));
        }
    }

    #[test]
    fn rho_derivative_is_bounded_by_two() {
        for i in 0..1000 {
            let x = 0.5 + 2.0 * i as f64 / 1000.0;
            assert!(rho_k(1, x).1.abs() <= 2.0);
        }
        assert_eq!(rho_k(2, 1.5).0, 1.0);
        assert_eq!(rho_k(2, 3.5).0, 0.0);
    }

    #[test]
    fn mu_is_one_at_moderate_radii() {
        for k in 1..=5 {
            assert_eq!(mu_k(k, 0.5).unwrap(), 1.0);
            assert_eq!(mu_k(k, double_exp_radius(k as f64 + 1.5)).unwrap(), 0.0);
        }
        assert!(mu_k(1, 1e-301).is_err());
    }

    #[test]
    fn dbar_factor_matches_finite_difference() {
        // d mu / dx = c(x) since dbar |zeta| = sum zeta_j d zeta-bar_j / (2 |zeta|)
        let k = 1;
        let (r_in, r_out) = (double_exp_radius(2.0), double_exp_radius(1.0));
        for i in 1..20 {
            let x = (r_in.ln() + (r_out.ln() - r_in.ln()) * i as f64 / 20.0).exp();
            let h = x * 1e-6;
            let fd = (mu_k(k, x + h).unwrap() - mu_k(k, x - h).unwrap()) / (2.0 * h);
            let c = dbar_mu_factor(k, x).unwrap();
            assert!((fd - c).abs() < 1e-5 * c.abs().max(1e-300) + 1e-12 / x, "{fd} vs {c}");
        }
    }

    #[test]
    fn support_is_confined() {
        let v = ConeVariety::catalog("a1").unwrap();
        for k in 1..=4 {
            let rep = support_check(&v, k, 400, 3).unwrap();
            assert!(rep.confined(), "{rep:?}");
        }
    }

    #[test]
    fn lp_norm_decays() {
        let v = ConeVariety::catalog("a1").unwrap();
        let plan = SamplingPlan::new(20_000, 4);
        let vals: Vec<f64> = (1..=3).map(|k| dbar_mu_lp_norm(&v, k, 4.0, &plan).unwrap().value).collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
        assert!(vals[2] < 0.5 * vals[0]);
    }
}

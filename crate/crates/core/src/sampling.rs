//! Quadrature on the regular part of a cone.
//!
//! Points come from coordinate projections realised as branched covers: a base
//! point in `C^n` is drawn, the fiber equations are solved for the remaining
//! `nu` coordinates, and every sheet contributes with its graph volume factor.
//! Base points are drawn from a deterministic mixture of a uniform ball and
//! geometric shells around declared poles; the estimator divides by the
//! mixture density.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::poly::powi;
use crate::roots::{self, PolySystem};
use crate::varieties::ConeVariety;

pub const POINT_TOL: f64 = 1e-10;
pub const FRAME_TOL: f64 = 1e-8;
pub const BRANCH_TOL: f64 = 1e-8;
/// Words of the ChaCha stream reserved per sample.
const WORDS_PER_SAMPLE: u128 = 1024;
const HOMOTOPY_GAMMA: C64 = C64::new(0.6234898018587336, 0.7818314824680298);

/// A point of `Reg X` produced by a chart, with its quadrature data.
#[derive(Clone, Debug)]
pub struct SurfacePoint {
    pub position: Vec<C64>,
    /// Orthonormal basis of the holomorphic tangent space, `N x n` row-major.
    pub frame: Vec<C64>,
    /// `det(I + Dg* Dg)` for the graph over the chart's base coordinates.
    pub gram_factor: f64,
    /// Volume factor actually used: `gram_factor` times the chart's partition weight.
    pub chart_factor: f64,
    pub sheet: usize,
    pub chart: usize,
    /// Sampling density of the base point relative to Lebesgue measure on `C^n`.
    pub pdf: f64,
    pub ln_pdf: f64,
}

impl SurfacePoint {
    pub fn norm(&self) -> f64 {
        linalg::norm(&self.position)
    }

    /// `ln(chart_factor / pdf)`, the log of the quadrature weight.
    pub fn ln_weight(&self) -> f64 {
        self.chart_factor.ln() - self.ln_pdf
    }
}

/// All admissible solutions over one base point.
#[derive(Clone, Debug)]
pub struct Fiber {
    pub points: Vec<SurfacePoint>,
    /// Solutions dropped near the branch locus.
    pub discarded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Ball { center: Vec<C64>, radius: f64 },
    Annulus { center: Vec<C64>, r_inner: f64, r_outer: f64 },
    /// `X` intersected with the ball of the given radius about the origin.
    Domain { radius: f64 },
}

impl Region {
    pub fn ball(center: &[C64], radius: f64) -> Self {
        Region::Ball { center: center.to_vec(), radius }
    }

    pub fn annulus(center: &[C64], r_inner: f64, r_outer: f64) -> Self {
        Region::Annulus { center: center.to_vec(), r_inner, r_outer }
    }

    fn center(&self, dim: usize) -> Vec<C64> {
        match self {
            Region::Ball { center, .. } | Region::Annulus { center, .. } => center.clone(),
            Region::Domain { .. } => vec![ZERO; dim],
        }
    }

    fn outer(&self) -> f64 {
        match *self {
            Region::Ball { radius, .. } | Region::Domain { radius } => radius,
            Region::Annulus { r_outer, .. } => r_outer,
        }
    }

    fn inner(&self) -> f64 {
        match *self {
            Region::Annulus { r_inner, .. } => r_inner,
            _ => 0.0,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Region::Ball { center, radius } => center.len() == dim && *radius > 0.0,
            Region::Annulus { center, r_inner, r_outer } => {
                center.len() == dim && *r_inner > 0.0 && r_inner < r_outer
            }
            Region::Domain { radius } => *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::EmptyRegion(format!("{self:?}")))
        }
    }

    pub fn contains(&self, zeta: &[C64]) -> bool {
        let r = match self {
            Region::Ball { center, .. } | Region::Annulus { center, .. } => {
                linalg::norm(&linalg::sub(zeta, center))
            }
            Region::Domain { .. } => linalg::norm(zeta),
        };
        r < self.outer() && r >= self.inner()
    }
}

/// A point where the integrand is singular, with its pole order in `|zeta - p|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Focus {
    pub point: Vec<C64>,
    pub order: f64,
}

impl Focus {
    pub fn new(point: &[C64], order: f64) -> Self {
        Self { point: point.to_vec(), order }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ChartMode {
    /// Every admissible chart, combined through the partition of unity
    /// `|det J_I|^2 / sum_J |det J_J|^2`.
    Blended,
    /// One chart, given by its free coordinates.
    Single(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub samples: usize,
    pub seed: u64,
    /// Distinguishes independent estimates sharing a seed.
    pub stream: u64,
    pub r_min: f64,
    pub shell_ratio: f64,
    pub uniform_fraction: f64,
    pub foci: Vec<Focus>,
    pub chart_mode: ChartMode,
}

impl SamplingPlan {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            stream: 0,
            r_min: 1e-4,
            shell_ratio: 2.0,
            uniform_fraction: 0.2,
            foci: Vec::new(),
            chart_mode: ChartMode::Blended,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_focus(mut self, point: &[C64], order: f64) -> Self {
        self.foci.push(Focus::new(point, order));
        self
    }

    pub fn with_chart(mut self, mode: ChartMode) -> Self {
        self.chart_mode = mode;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }
}

/// Per-stratum contribution to an estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub chart: usize,
    pub label: String,
    pub value: Vec<C64>,
    pub stderr: Vec<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: Vec<C64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    pub discarded: usize,
    pub strata: Vec<StratumResult>,
}

impl QuadratureResult {
    pub fn scalar(&self) -> C64 {
        self.value[0]
    }

    pub fn scalar_stderr(&self) -> f64 {
        self.stderr[0]
    }
}

/// A real estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// A vector-valued function on `Reg X`.
pub trait Integrand: Sync {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, pt: &SurfacePoint, out: &mut [C64]);

    /// Adds `exp(ln_weight) * f(pt)` to `out`. Integrands whose values or
    /// weights leave the double range override this to combine them in logs.
    fn eval_weighted(&self, pt: &SurfacePoint, ln_weight: f64, out: &mut [C64]) {
        let mut tmp = vec![ZERO; self.dim()];
        self.eval(pt, &mut tmp);
        let w = ln_weight.exp();
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t * w;
        }
    }
}

/// Wraps a scalar closure as an integrand.
pub struct ScalarFn<F>(pub F);

impl<F: Fn(&SurfacePoint) -> C64 + Sync> Integrand for ScalarFn<F> {
    fn eval(&self, pt: &SurfacePoint, out: &mut [C64]) {
        out[0] = (self.0)(pt);
    }
}

/// A real radial function `g(|zeta - center|)` evaluated in logs, so that
/// power-law profiles stay finite at radii where `g` or the weight overflow.
pub struct LogRadial<F> {
    pub center: Vec<C64>,
    /// Returns `ln g(s)` given `ln s`, or `None` where `g` vanishes.
    pub ln_profile: F,
}

impl<F: Fn(f64) -> Option<f64> + Sync> Integrand for LogRadial<F> {
    fn eval(&self, pt: &SurfacePoint, out: &mut [C64]) {
        let s = linalg::norm(&linalg::sub(&pt.position, &self.center));
        out[0] = C64::new((self.ln_profile)(s.ln()).map_or(0.0, f64::exp), 0.0);
    }

    fn eval_weighted(&self, pt: &SurfacePoint, ln_weight: f64, out: &mut [C64]) {
        let s = linalg::norm(&linalg::sub(&pt.position, &self.center));
        if let Some(lg) = (self.ln_profile)(s.ln()) {
            out[0] += (lg + ln_weight).exp();
        }
    }
}

struct FiberSystem<'a> {
    v: &'a ConeVariety,
    free: &'a [usize],
    point: Vec<C64>,
}

impl PolySystem for FiberSystem<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn degrees(&self) -> Vec<u32> {
        self.v.degrees().to_vec()
    }

    fn eval_jac(&self, t: &[C64], f: &mut [C64], jac: &mut [C64]) {
        let mut zeta = self.point.clone();
        for (k, &j) in self.free.iter().enumerate() {
            zeta[j] = t[k];
        }
        let n = self.v.ambient_dim();
        let m = self.free.len();
        let full = self.v.jacobian(&zeta);
        for (i, p) in self.v.polys().iter().enumerate() {
            f[i] = p.eval(&zeta);
            for (k, &j) in self.free.iter().enumerate() {
                jac[i * m + k] = full[i * n + j];
            }
        }
    }
}

fn complement(n: usize, free: &[usize]) -> Vec<usize> {
    (0..n).filter(|j| !free.contains(j)).collect()
}

/// Deterministic unit base point used to probe charts.
fn probe_base(n: usize) -> Vec<C64> {
    let raw: Vec<C64> = (0..n)
        .map(|k| C64::new(0.37 + 0.61 * k as f64, -0.23 + 0.29 * (k * k) as f64).sin())
        .collect();
    let s = linalg::norm(&raw);
    raw.into_iter().map(|x| x / s).collect()
}

/// Free-coordinate sets over whose complements the cone is a finite branched cover.
pub(crate) fn admissible_charts(v: &ConeVariety) -> Vec<Vec<usize>> {
    let n = v.ambient_dim();
    if v.codim() == 1 {
        let d = v.degrees()[0];
        return (0..n)
            .filter(|&k| {
                let mut e = vec![0; n];
                e[k] = d;
                v.polys()[0].coefficient(&e) != ZERO
            })
            .map(|k| vec![k])
            .collect();
    }
    let bezout: usize = v.degrees().iter().map(|&d| d as usize).product();
    linalg::subsets(n, v.codim())
        .into_iter()
        .filter(|free| {
            let base = probe_base(n - v.codim());
            solve_raw(v, free, &base).map_or(false, |(pts, lost)| pts.len() == bezout && lost == 0)
        })
        .collect()
}

/// Solves the fiber over `base` (coordinates in the complement of `free`).
/// Returns the solutions and the number of discarded near-branch solutions.
fn solve_raw(v: &ConeVariety, free: &[usize], base: &[C64]) -> Result<(Vec<Vec<C64>>, usize)> {
    let n = v.ambient_dim();
    let base_idx = complement(n, free);
    let scale = linalg::norm(base);
    if scale == 0.0 {
        return Ok((Vec::new(), 1));
    }
    let mut unit = vec![ZERO; n];
    for (k, &j) in base_idx.iter().enumerate() {
        unit[j] = base[k] / scale;
    }
    let mut sols: Vec<Vec<C64>> = Vec::new();
    let mut discarded = 0;
    if v.codim() == 1 {
        let k = free[0];
        let p = &v.polys()[0];
        let d = p.degree() as usize;
        let mut coeffs = vec![ZERO; d + 1];
        for (e, c) in p.terms() {
            let mut m = c;
            for (l, &el) in e.iter().enumerate() {
                if l != k {
                    m *= powi(unit[l], el);
                }
            }
            coeffs[e[k] as usize] += m;
        }
        if coeffs[d] == ZERO {
            return Err(Error::FiberDegenerate { proj: base_idx });
        }
        for t in roots::poly_roots(&coeffs) {
            let mut zeta = unit.clone();
            zeta[k] = t;
            let (_, dp) = roots::horner(&coeffs, t);
            let r = linalg::norm(&zeta);
            if dp.norm() < BRANCH_TOL * r.powi(d as i32 - 1) * coeffs[d].norm() {
                discarded += 1;
                continue;
            }
            sols.push(zeta);
        }
    } else {
        let sys = FiberSystem { v, free, point: unit.clone() };
        let bezout: usize = v.degrees().iter().map(|&d| d as usize).product();
        let found = roots::total_degree_homotopy(&sys, HOMOTOPY_GAMMA);
        discarded += bezout.saturating_sub(found.len());
        let m = free.len();
        let mut f = vec![ZERO; m];
        let mut jac = vec![ZERO; m * m];
        let deg_sum: i32 = v.degrees().iter().map(|&d| d as i32 - 1).sum();
        for t in found {
            sys.eval_jac(&t, &mut f, &mut jac);
            let mut zeta = unit.clone();
            for (i, &j) in free.iter().enumerate() {
                zeta[j] = t[i];
            }
            let r = linalg::norm(&zeta);
            if linalg::det(&jac, m).norm() < BRANCH_TOL * r.powi(deg_sum) {
                discarded += 1;
                continue;
            }
            sols.push(zeta);
        }
    }
    // residual check at the normalised point
    sols.retain(|zeta| {
        let r = linalg::norm(zeta);
        let unit_pt: Vec<C64> = zeta.iter().map(|x| x / r).collect();
        let ok = linalg::norm(&v.eval_tuple(&unit_pt)) <= POINT_TOL * 1e2;
        if !ok {
            discarded += 1;
        }
        ok
    });
    for zeta in sols.iter_mut() {
        for x in zeta.iter_mut() {
            *x *= scale;
        }
    }
    Ok((sols, discarded))
}

/// Geometry at a point of `Reg X`: tangent frame, graph factor for `free`, and
/// the blended chart factor.
struct LocalGeometry {
    frame: Vec<C64>,
    gram: f64,
    blended: f64,
}

fn local_geometry(v: &ConeVariety, zeta: &[C64], free: &[usize]) -> Result<LocalGeometry> {
    let r = linalg::norm(zeta);
    if r == 0.0 {
        return Err(Error::NearSingular { norm: 0.0, tol: FRAME_TOL });
    }
    let unit: Vec<C64> = zeta.iter().map(|x| x / r).collect();
    let jac = v.jacobian(&unit);
    let (mnorm2, own, adm) = if v.codim() == 1 {
        let m2 = linalg::norm_sqr(&jac);
        let own = jac[free[0]].norm_sqr();
        let adm: f64 = v.charts().iter().map(|c| jac[c[0]].norm_sqr()).sum();
        (m2, own, adm)
    } else {
        let minors = v.minors(&jac);
        let m2: f64 = minors.iter().map(|(_, m)| m.norm_sqr()).sum();
        let get = |set: &[usize]| minors.iter().find(|(c, _)| c.as_slice() == set).map_or(0.0, |(_, m)| m.norm_sqr());
        let own = get(free);
        let adm: f64 = v.charts().iter().map(|c| get(c)).sum();
        (m2, own, adm)
    };
    let mnorm = mnorm2.sqrt();
    if mnorm <= FRAME_TOL {
        return Err(Error::NearSingular { norm: mnorm, tol: FRAME_TOL });
    }
    let frame = linalg::kernel_basis(&jac, v.codim(), v.ambient_dim())
        .ok_or(Error::NearSingular { norm: mnorm, tol: FRAME_TOL })?;
    Ok(LocalGeometry { frame, gram: mnorm2 / own, blended: mnorm2 / adm })
}

/// Orthonormal basis of `ker(df/dzeta)` at `zeta`, as an `N x n` row-major matrix.
pub fn tangent_frame(v: &ConeVariety, zeta: &[C64]) -> Result<Vec<C64>> {
    let r = linalg::norm(zeta);
    let norm = if r == 0.0 { 0.0 } else {
        let unit: Vec<C64> = zeta.iter().map(|x| x / r).collect();
        v.minors_norm(&unit)
    };
    if norm <= FRAME_TOL {
        return Err(Error::NearSingular { norm, tol: FRAME_TOL });
    }
    local_geometry(v, zeta, &v.charts()[0]).map(|g| g.frame)
}

/// All sheets over `base`, where `free` lists the solved-for coordinates and
/// `base` gives the others in increasing index order.
pub fn fiber_points(v: &ConeVariety, base: &[C64], free: &[usize]) -> Result<Fiber> {
    if base.len() != v.dim() || free.len() != v.codim() {
        return Err(Error::InvalidArgument("base or projection has the wrong size".into()));
    }
    let (sols, mut discarded) = solve_raw(v, free, base)?;
    let mut points = Vec::with_capacity(sols.len());
    for (sheet, zeta) in sols.into_iter().enumerate() {
        match local_geometry(v, &zeta, free) {
            Ok(g) => points.push(SurfacePoint {
                position: zeta,
                frame: g.frame,
                gram_factor: g.gram,
                chart_factor: g.gram,
                sheet,
                chart: 0,
                pdf: 1.0,
                ln_pdf: 0.0,
            }),
            Err(_) => discarded += 1,
        }
    }
    Ok(Fiber { points, discarded })
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im)
        })
        .collect()
}

/// Points on the unit link of `X`, from random base points over every chart.
pub fn link_points(v: &ConeVariety, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let charts = v.charts();
    let mut i = 0usize;
    let mut attempts = 0usize;
    while out.len() < count && attempts < 20 * count + 100 {
        attempts += 1;
        let free = &charts[i % charts.len()];
        i += 1;
        let base = gaussian_vec(&mut rng, v.dim());
        if let Ok((sols, _)) = solve_raw(v, free, &base) {
            for zeta in sols {
                let r = linalg::norm(&zeta);
                out.push(zeta.into_iter().map(|x| x / r).collect());
                if out.len() == count {
                    break;
                }
            }
        }
    }
    out
}

/// A random point of `X` with the given norm.
pub fn point_with_norm(v: &ConeVariety, norm: f64, seed: u64) -> Vec<C64> {
    let p = link_points(v, 1, seed).pop().expect("link sample");
    p.into_iter().map(|x| x * norm).collect()
}

/// A point of `X` near `z`: step `delta` along a tangent direction, then return
/// to `X` by re-solving the fiber over the stepped base point.
pub fn nearby_point(v: &ConeVariety, z: &[C64], delta: f64, direction: usize) -> Result<Vec<C64>> {
    let n = v.dim();
    let g = local_geometry(v, z, &v.charts()[0])?;
    // pick the chart in which z is least branched
    let r = linalg::norm(z);
    let unit: Vec<C64> = z.iter().map(|x| x / r).collect();
    let jac = v.jacobian(&unit);
    let free = v
        .charts()
        .iter()
        .max_by(|a, b| {
            let da = chart_det(v, &jac, a);
            let db = chart_det(v, &jac, b);
            da.total_cmp(&db)
        })
        .unwrap()
        .clone();
    let k = direction % n;
    let phase = C64::from_polar(1.0, 0.7 * (direction / n) as f64);
    let target: Vec<C64> = (0..v.ambient_dim()).map(|j| z[j] + g.frame[j * n + k] * phase * delta).collect();
    let base_idx = complement(v.ambient_dim(), &free);
    let base: Vec<C64> = base_idx.iter().map(|&j| target[j]).collect();
    let (sols, _) = solve_raw(v, &free, &base)?;
    sols.into_iter()
        .min_by(|a, b| {
            linalg::norm(&linalg::sub(a, &target)).total_cmp(&linalg::norm(&linalg::sub(b, &target)))
        })
        .ok_or(Error::EmptyRegion("no fiber point near the target".into()))
}

fn chart_det(v: &ConeVariety, jac: &[C64], free: &[usize]) -> f64 {
    let rows: Vec<usize> = (0..v.codim()).collect();
    linalg::minor(jac, v.ambient_dim(), &rows, free).norm()
}

#[derive(Clone, Debug)]
enum StratumKind {
    Uniform { radius: f64 },
    Shell { inner: f64 },
    Core { radius: f64 },
}

#[derive(Clone, Debug)]
struct Stratum {
    center: Vec<C64>,
    kind: StratumKind,
    count: usize,
    label: String,
    ln_frac: f64,
}

fn ln_ball_volume(n: usize) -> f64 {
    // volume of the unit ball in R^{2n}: pi^n / n!
    n as f64 * PI.ln() - ln_factorial(n)
}

fn ln_sphere_area(n: usize) -> f64 {
    // area of the unit sphere in R^{2n}: 2 pi^n / (n-1)!
    2f64.ln() + n as f64 * PI.ln() - ln_factorial(n - 1)
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

impl Stratum {
    /// Log density of this stratum's own distribution at `x`, or `None` outside its support.
    fn ln_density(&self, x: &[C64], ratio: f64, n: usize) -> Option<f64> {
        let rho = linalg::norm(&linalg::sub(x, &self.center));
        let two_n = 2.0 * n as f64;
        match self.kind {
            StratumKind::Uniform { radius } => {
                (rho < radius).then(|| -ln_ball_volume(n) - two_n * radius.ln())
            }
            StratumKind::Shell { inner } => (rho >= inner && rho < inner * ratio)
                .then(|| -ln_ball_volume(n) - two_n * inner.ln() - (ratio.powf(two_n) - 1.0).ln()),
            StratumKind::Core { radius } => (rho < radius && rho > 0.0)
                .then(|| -radius.ln() - ln_sphere_area(n) - (two_n - 1.0) * rho.ln()),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, ratio: f64, n: usize) -> Vec<C64> {
        let dir = gaussian_vec(rng, n);
        let dn = linalg::norm(&dir);
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let two_n = 2.0 * n as f64;
        let rho = match self.kind {
            StratumKind::Uniform { radius } => radius * u.powf(1.0 / two_n),
            StratumKind::Shell { inner } => inner * (1.0 + u * (ratio.powf(two_n) - 1.0)).powf(1.0 / two_n),
            StratumKind::Core { radius } => radius * u,
        };
        self.center.iter().zip(&dir).map(|(c, d)| c + d * (rho / dn)).collect()
    }
}

fn build_strata(
    plan: &SamplingPlan,
    region: &Region,
    base_idx: &[usize],
    big_n: usize,
    budget: usize,
) -> Vec<Stratum> {
    let n = base_idx.len();
    let proj = |p: &[C64]| -> Vec<C64> { base_idx.iter().map(|&j| p[j]).collect() };
    let center = proj(&region.center(big_n));
    let radius = region.outer();
    let ratio = plan.shell_ratio;
    let two_n = 2.0 * n as f64;
    // (stratum, relative weight) per group; groups share the budget
    let mut groups: Vec<Vec<(Stratum, f64)>> = Vec::new();
    let uniform = Stratum {
        center: center.clone(),
        kind: StratumKind::Uniform { radius },
        count: 0,
        label: "uniform".into(),
        ln_frac: 0.0,
    };
    let region_center = region.center(big_n);
    for (fi, focus) in plan.foci.iter().enumerate() {
        let pb = proj(&focus.point);
        let dist = linalg::norm(&linalg::sub(&pb, &center));
        let r_hi = radius + dist;
        let at_center = matches!(region, Region::Annulus { .. })
            && linalg::norm(&linalg::sub(&focus.point, &region_center)) <= 1e-14 * (1.0 + radius);
        let r_lo = if at_center { plan.r_min.min(region.inner() / 4.0) } else { plan.r_min };
        let shells = ((r_hi / r_lo).ln() / ratio.ln()).ceil().max(1.0) as usize;
        let expo = two_n - focus.order.min(two_n);
        let mut group = Vec::new();
        let mut last_weight = 0.0;
        for k in 0..shells {
            let outer = r_hi / ratio.powi(k as i32);
            let inner = outer / ratio;
            if outer <= dist - radius {
                break;
            }
            let w = (inner * ratio.sqrt()).powf(expo);
            last_weight = w;
            group.push((
                Stratum {
                    center: pb.clone(),
                    kind: StratumKind::Shell { inner },
                    count: 0,
                    label: format!("focus{fi}/shell{k}"),
                    ln_frac: 0.0,
                },
                w,
            ));
        }
        let core = r_hi / ratio.powi(shells as i32);
        if core > dist - radius && !group.is_empty() {
            group.push((
                Stratum {
                    center: pb.clone(),
                    kind: StratumKind::Core { radius: core },
                    count: 0,
                    label: format!("focus{fi}/core"),
                    ln_frac: 0.0,
                },
                last_weight,
            ));
        }
        if !group.is_empty() {
            groups.push(group);
        }
    }
    let uniform_share = if groups.is_empty() { 1.0 } else { plan.uniform_fraction };
    let mut strata = vec![uniform];
    strata[0].count = ((budget as f64 * uniform_share).round() as usize).max(4);
    let per_group = budget as f64 * (1.0 - uniform_share) / groups.len().max(1) as f64;
    for group in groups {
        let total: f64 = group.iter().map(|(_, w)| w).sum();
        for (mut s, w) in group {
            s.count = ((per_group * w / total).round() as usize).max(4);
            strata.push(s);
        }
    }
    let total: usize = strata.iter().map(|s| s.count).sum();
    for s in strata.iter_mut() {
        s.ln_frac = (s.count as f64 / total as f64).ln();
    }
    strata
}

fn stream_id(plan: &SamplingPlan, chart: usize, stratum: usize) -> u64 {
    plan.stream
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((chart as u64) << 40)
        .wrapping_add(stratum as u64)
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Monte Carlo estimate of `int_region f dV_X`.
pub fn integrate<I: Integrand + ?Sized>(
    v: &ConeVariety,
    region: &Region,
    integrand: &I,
    plan: &SamplingPlan,
) -> Result<QuadratureResult> {
    let big_n = v.ambient_dim();
    let n = v.dim();
    region.validate(big_n)?;
    if plan.samples == 0 || !(plan.shell_ratio > 1.0) || !(plan.r_min > 0.0) {
        return Err(Error::InvalidArgument("sampling plan needs samples, r_min > 0 and shell_ratio > 1".into()));
    }
    for f in &plan.foci {
        if f.point.len() != big_n {
            return Err(Error::InvalidArgument("focus has the wrong dimension".into()));
        }
    }
    let charts: Vec<(usize, Vec<usize>, bool)> = match &plan.chart_mode {
        ChartMode::Blended => v.charts().iter().cloned().enumerate().map(|(i, c)| (i, c, true)).collect(),
        ChartMode::Single(free) => {
            let mut free = free.clone();
            free.sort_unstable();
            if !v.charts().contains(&free) {
                return Err(Error::FiberDegenerate { proj: complement(big_n, &free) });
            }
            vec![(0, free, false)]
        }
    };
    let dim = integrand.dim();
    let budget = (plan.samples / charts.len()).max(8);
    let mut value = vec![ZERO; dim];
    let mut var = vec![0.0; dim];
    let mut samples = 0;
    let mut discarded = 0;
    let mut strata_out = Vec::new();
    for (ci, free, blended) in &charts {
        let base_idx = complement(big_n, free);
        let strata = build_strata(plan, region, &base_idx, big_n, budget);
        let base_center: Vec<C64> = base_idx.iter().map(|&j| region.center(big_n)[j]).collect();
        let chart_total: usize = strata.iter().map(|s| s.count).sum();
        let ln_total = (chart_total as f64).ln();
        for (si, stratum) in strata.iter().enumerate() {
            let stream = stream_id(plan, *ci, si);
            let rows: Vec<(Vec<C64>, usize, bool)> = (0..stratum.count)
                .into_par_iter()
                .map(|idx| {
                    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                    rng.set_stream(stream);
                    rng.set_word_pos(idx as u128 * WORDS_PER_SAMPLE);
                    let x = stratum.draw(&mut rng, plan.shell_ratio, n);
                    let mut out = vec![ZERO; dim];
                    if linalg::norm(&linalg::sub(&x, &base_center)) >= region.outer() {
                        return (out, 0, false);
                    }
                    let terms: Vec<f64> = strata
                        .iter()
                        .filter_map(|s| s.ln_density(&x, plan.shell_ratio, n).map(|l| l + s.ln_frac))
                        .collect();
                    let ln_pdf = log_sum_exp(&terms);
                    let Ok((sols, mut lost)) = solve_raw(v, free, &x) else {
                        return (out, 1, false);
                    };
                    let mut hit = false;
                    for (sheet, zeta) in sols.into_iter().enumerate() {
                        if !region.contains(&zeta) {
                            continue;
                        }
                        let Ok(g) = local_geometry(v, &zeta, free) else {
                            lost += 1;
                            continue;
                        };
                        let chart_factor = if *blended { g.blended } else { g.gram };
                        let pt = SurfacePoint {
                            position: zeta,
                            frame: g.frame,
                            gram_factor: g.gram,
                            chart_factor,
                            sheet,
                            chart: *ci,
                            pdf: ln_pdf.exp(),
                            ln_pdf,
                        };
                        // divide by the mixture size: the estimator is (1/N) sum f / q
                        integrand.eval_weighted(&pt, pt.ln_weight() - ln_total, &mut out);
                        hit = true;
                    }
                    (out, lost, hit)
                })
                .collect();
            let count = rows.len();
            let hits = rows.iter().filter(|r| r.2).count();
            if hits == 0 && count > 0 {
                log::debug!("stratum {} of chart {ci} received no admissible fiber points", stratum.label);
            }
            discarded += rows.iter().map(|r| r.1).sum::<usize>();
            let mut s_value = vec![ZERO; dim];
            let mut s_err = vec![0.0; dim];
            for c in 0..dim {
                let re: Vec<f64> = rows.iter().map(|r| r.0[c].re).collect();
                let im: Vec<f64> = rows.iter().map(|r| r.0[c].im).collect();
                let sum = C64::new(pairwise_sum(&re), pairwise_sum(&im));
                // each row is already divided by N; the sample mean of N*row is sum*N/count
                let mean = sum / count as f64;
                let dev: Vec<f64> = rows.iter().map(|r| (r.0[c] - mean).norm_sqr()).collect();
                let ss = pairwise_sum(&dev);
                let v_s = if count > 1 { ss * count as f64 / (count as f64 - 1.0) } else { 0.0 };
                s_value[c] = sum;
                s_err[c] = v_s.sqrt();
                value[c] += sum;
                var[c] += v_s;
            }
            samples += count;
            strata_out.push(StratumResult {
                chart: *ci,
                label: stratum.label.clone(),
                value: s_value,
                stderr: s_err,
                count,
            });
        }
    }
    if discarded > 0 {
        log::debug!("{discarded} fiber points discarded near the branch locus");
    }
    Ok(QuadratureResult { value, stderr: var.into_iter().map(f64::sqrt).collect(), samples, discarded, strata: strata_out })
}

/// `Vol(X cap B_r(z)) / r^{2n}`.
pub fn estimate_v(v: &ConeVariety, r: f64, z: &[C64], plan: &SamplingPlan) -> Result<Estimate> {
    if !(r > 0.0) {
        return Err(Error::EmptyRegion(format!("radius {r}")));
    }
    let plan = SamplingPlan { foci: vec![Focus::new(z, 0.0)], ..plan.clone() };
    let res = integrate(v, &Region::ball(z, r), &ScalarFn(|_: &SurfacePoint| C64::new(1.0, 0.0)), &plan)?;
    let scale = r.powi(2 * v.dim() as i32);
    Ok(Estimate { value: res.scalar().re / scale, stderr: res.scalar_stderr() / scale })
}

/// Radius grid levels used by [`layer_cake_integral`].
pub const LAYER_CAKE_LEVELS: usize = 12;
const LAYER_CAKE_SUBSTEPS: usize = 16;

/// `int_{X cap B_{r_max}(z)} g(|zeta - z|) dV_X` from the distribution function,
/// with `v(s, z)` estimated on the grid `s_k = r_max 2^{-k}`.
///
/// `g` must be nonnegative and nonincreasing on `(0, r_max]`.
pub fn layer_cake_integral(
    v: &ConeVariety,
    g: impl Fn(f64) -> f64,
    z: &[C64],
    r_max: f64,
    plan: &SamplingPlan,
) -> Result<Estimate> {
    let n = v.dim();
    let two_n = 2 * n as i32;
    let grid: Vec<f64> = (0..=LAYER_CAKE_LEVELS).map(|k| r_max * 0.5f64.powi(k as i32)).collect();
    // fine grid for the Stieltjes sum
    let fine: Vec<f64> = (0..=LAYER_CAKE_LEVELS * LAYER_CAKE_SUBSTEPS)
        .map(|j| r_max * 0.5f64.powf(j as f64 / LAYER_CAKE_SUBSTEPS as f64))
        .collect();
    let gv: Vec<f64> = fine.iter().map(|&s| g(s)).collect();
    for w in gv.windows(2) {
        if !(w[1] >= 0.0 && w[0] >= 0.0) || w[1] < w[0] * (1.0 - 1e-12) {
            return Err(Error::NonRadialProfile);
        }
    }
    let s_k = *fine.last().unwrap();
    let m = gv.len();
    let alpha = if gv[m - 1] > 0.0 && gv[m - 2] > 0.0 {
        (gv[m - 1] / gv[m - 2]).ln() / (fine[m - 2] / fine[m - 1]).ln()
    } else {
        0.0
    };
    if alpha >= 2.0 * n as f64 {
        return Err(Error::ExponentRange(format!("profile exponent {alpha:.3} >= 2n")));
    }
    // linear functional of the grid values of v
    let functional = |vals: &[f64]| -> f64 {
        let v_at = |j: usize| -> f64 {
            let pos = j / LAYER_CAKE_SUBSTEPS;
            let frac = (j % LAYER_CAKE_SUBSTEPS) as f64 / LAYER_CAKE_SUBSTEPS as f64;
            if pos >= LAYER_CAKE_LEVELS {
                vals[LAYER_CAKE_LEVELS]
            } else {
                vals[pos] * (1.0 - frac) + vals[pos + 1] * frac
            }
        };
        let big_v = |j: usize| v_at(j) * fine[j].powi(two_n);
        let mut total = gv[0] * big_v(0);
        for j in 0..m - 1 {
            total += (gv[j + 1] - gv[j]) * 0.5 * (big_v(j) + big_v(j + 1));
        }
        if alpha > 0.0 {
            total += vals[LAYER_CAKE_LEVELS] * alpha * gv[m - 1] * s_k.powi(two_n) / (2.0 * n as f64 - alpha);
        }
        total
    };
    let mut est = Vec::with_capacity(grid.len());
    for (k, &s) in grid.iter().enumerate() {
        let p = plan.clone().with_stream(plan.stream.wrapping_mul(31).wrapping_add(1000 + k as u64));
        est.push(estimate_v(v, s, z, &p)?);
    }
    let vals: Vec<f64> = est.iter().map(|e| e.value).collect();
    let value = functional(&vals);
    let mut var = 0.0;
    for k in 0..grid.len() {
        let mut unit = vec![0.0; grid.len()];
        unit[k] = 1.0;
        var += (functional(&unit) * est[k].stderr).powi(2);
    }
    Ok(Estimate { value, stderr: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn one(_: &SurfacePoint) -> C64 {
        c(1.0, 0.0)
    }

    #[test]
    fn a1_fiber_over_unit_base() {
        let v = ConeVariety::catalog("a1").unwrap();
        let fiber = fiber_points(&v, &[c(1.0, 0.0), c(0.0, 0.0)], &[2]).unwrap();
        assert_eq!(fiber.points.len(), 2);
        for p in &fiber.points {
            assert!((p.position[2].norm() - 1.0).abs() < 1e-14 && p.position[2].re.abs() < 1e-14);
            assert!((p.gram_factor - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_matches_finite_difference_resolve() {
        let v = ConeVariety::catalog("fermat3").unwrap();
        let base = [c(0.4, -0.3), c(0.9, 0.2)];
        let fiber = fiber_points(&v, &base, &[2]).unwrap();
        let h = 1e-6;
        for p in &fiber.points {
            // implicit derivatives by re-solving at perturbed base points
            let mut dg = [ZERO; 2];
            for k in 0..2 {
                let mut b = base;
                b[k] += h;
                let moved = fiber_points(&v, &b, &[2]).unwrap();
                let near = moved
                    .points
                    .iter()
                    .min_by(|a, b| (a.position[2] - p.position[2]).norm().total_cmp(&(b.position[2] - p.position[2]).norm()))
                    .unwrap();
                dg[k] = (near.position[2] - p.position[2]) / h;
            }
            let gram = 1.0 + dg[0].norm_sqr() + dg[1].norm_sqr();
            assert!((gram - p.gram_factor).abs() < 1e-4 * gram, "{gram} vs {}", p.gram_factor);
        }
    }

    #[test]
    fn hyperplane_fiber_is_flat() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let fiber = fiber_points(&v, &[c(0.3, 0.2), c(-1.0, 0.5)], &[2]).unwrap();
        assert_eq!(fiber.points.len(), 1);
        assert_eq!(fiber.points[0].position[2], ZERO);
        assert!((fiber.points[0].gram_factor - 1.0).abs() < 1e-15);
        assert!(matches!(fiber_points(&v, &[c(1.0, 0.0), c(0.0, 0.0)], &[0]), Err(Error::FiberDegenerate { .. })));
    }

    #[test]
    fn branch_points_are_discarded() {
        let v = ConeVariety::catalog("a1").unwrap();
        let fiber = fiber_points(&v, &[c(1.0, 0.0), c(0.0, 1.0)], &[2]).unwrap();
        assert!(fiber.points.is_empty());
        assert_eq!(fiber.discarded, 2);
    }

    #[test]
    fn frames_are_orthonormal_tangent_bases() {
        for name in ["hyperplane", "a1", "fermat4", "ci22"] {
            let v = ConeVariety::catalog(name).unwrap();
            let (big_n, n) = (v.ambient_dim(), v.dim());
            for (i, p) in link_points(&v, 200, 3).into_iter().enumerate() {
                let p: Vec<C64> = p.into_iter().map(|x| x * (0.1 + i as f64 * 0.01)).collect();
                let f = tangent_frame(&v, &p).unwrap();
                let gram = linalg::matmul(&linalg::adjoint(&f, big_n, n), &f, n, big_n, n);
                for a in 0..n {
                    for b in 0..n {
                        let want = if a == b { 1.0 } else { 0.0 };
                        assert!((gram[a * n + b] - want).norm() < 1e-10);
                    }
                }
                let jac = v.jacobian(&p);
                let scale = linalg::norm(&jac);
                let jf = linalg::matmul(&jac, &f, v.codim(), big_n, n);
                assert!(linalg::norm(&jf) < 1e-8 * scale);
            }
        }
        let h = ConeVariety::catalog("hyperplane").unwrap();
        let f = tangent_frame(&h, &[c(0.3, 0.0), c(0.5, 0.1), ZERO]).unwrap();
        assert!(f[4].norm() < 1e-15 && f[5].norm() < 1e-15);
        assert!(matches!(tangent_frame(&h, &[ZERO; 3]), Err(Error::NearSingular { .. })));
    }

    #[test]
    fn flat_unit_ball_volume() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let plan = SamplingPlan::new(20_000, 1);
        let r = integrate(&v, &Region::Domain { radius: 1.0 }, &ScalarFn(one), &plan).unwrap();
        let want = PI * PI / 2.0;
        assert!((r.scalar().re - want).abs() < 3.0 * r.scalar_stderr() + 1e-12, "{:?}", r.value);
        assert_eq!(r.samples, r.strata.iter().map(|s| s.count).sum::<usize>());
    }

    #[test]
    fn flat_inverse_distance_integral() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let zero = [ZERO; 3];
        let plan = SamplingPlan::new(40_000, 2).with_focus(&zero, 1.0);
        let f = ScalarFn(|p: &SurfacePoint| c(1.0 / p.norm(), 0.0));
        let r = integrate(&v, &Region::Domain { radius: 1.0 }, &f, &plan).unwrap();
        let want = 2.0 * PI * PI / 3.0;
        assert!((r.scalar().re - want).abs() < 3.0 * r.scalar_stderr(), "{} vs {want} ({})", r.scalar().re, r.scalar_stderr());
        let lc = layer_cake_integral(&v, |s| 1.0 / s, &zero, 1.0, &SamplingPlan::new(4000, 3)).unwrap();
        assert!((lc.value - want).abs() < 3.0 * lc.stderr + 1e-3 * want, "{lc:?}");
    }

    #[test]
    fn cone_volume_is_degree_times_ball() {
        let zero = [ZERO; 3];
        for (name, d) in [("a1", 2.0), ("fermat3", 3.0)] {
            let v = ConeVariety::catalog(name).unwrap();
            let e = estimate_v(&v, 0.7, &zero, &SamplingPlan::new(30_000, 4)).unwrap();
            let want = d * PI * PI / 2.0;
            assert!((e.value - want).abs() < 3.0 * e.stderr, "{name}: {e:?} vs {want}");
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let v = ConeVariety::catalog("a1").unwrap();
        let z = point_with_norm(&v, 0.5, 8);
        let plan = SamplingPlan::new(5000, 9).with_focus(&z, 2.0);
        let f = ScalarFn(|p: &SurfacePoint| c(1.0 / linalg::norm(&linalg::sub(&p.position, &z)).powi(2), 0.0));
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| integrate(&v, &Region::Domain { radius: 1.0 }, &f, &plan).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.value[0].re.to_bits(), b.value[0].re.to_bits());
        assert_eq!(a.stderr[0].to_bits(), b.stderr[0].to_bits());
    }

    #[test]
    fn single_charts_agree() {
        let v = ConeVariety::catalog("a1").unwrap();
        let z = point_with_norm(&v, 0.5, 12);
        let f = ScalarFn(|p: &SurfacePoint| c(p.position[0].norm_sqr() + 0.5, 0.0));
        let region = Region::ball(&z, 0.6);
        let mut results = Vec::new();
        for free in [vec![0], vec![2]] {
            let plan = SamplingPlan::new(20_000, 5).with_chart(ChartMode::Single(free));
            results.push(integrate(&v, &region, &f, &plan).unwrap());
        }
        let diff = (results[0].scalar() - results[1].scalar()).norm();
        let se = results[0].scalar_stderr().hypot(results[1].scalar_stderr());
        assert!(diff < 3.0 * se, "{diff} vs {se}");
    }

    #[test]
    fn empty_regions_are_rejected() {
        let v = ConeVariety::catalog("a1").unwrap();
        let plan = SamplingPlan::new(100, 1);
        let zero = [ZERO; 3];
        assert!(matches!(
            integrate(&v, &Region::annulus(&zero, 0.5, 0.2), &ScalarFn(one), &plan),
            Err(Error::EmptyRegion(_))
        ));
        assert!(matches!(estimate_v(&v, 0.0, &zero, &plan), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn layer_cake_rejects_increasing_profiles() {
        let v = ConeVariety::catalog("hyperplane").unwrap();
        let r = layer_cake_integral(&v, |s| s, &[ZERO; 3], 1.0, &SamplingPlan::new(100, 1));
        assert!(matches!(r, Err(Error::NonRadialProfile)));
    }

    #[test]
    fn nearby_points_stay_on_the_cone() {
        let v = ConeVariety::catalog("fermat3").unwrap();
        let z = point_with_norm(&v, 0.6, 1);
        for (k, delta) in [1e-3, 1e-2, 1e-1].into_iter().enumerate() {
            let w = nearby_point(&v, &z, delta, k).unwrap();
            let dist = linalg::norm(&linalg::sub(&w, &z));
            assert!(dist > 0.5 * delta && dist < 2.0 * delta);
            assert!(v.eval_tuple(&w)[0].norm() < 1e-10);
        }
    }
}

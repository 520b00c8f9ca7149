//! Root finding for fiber equations: companion-matrix eigenvalues for one
//! unknown, total-degree homotopy continuation for square systems.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::linalg::{self, ONE, ZERO};

/// Roots of `sum_k coeffs[k] t^k`. The leading coefficient must be nonzero.
///
/// Eigenvalues of the companion matrix, each refined by two Newton steps.
pub fn poly_roots(coeffs: &[C64]) -> Vec<C64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    assert!(lead != ZERO, "leading coefficient vanishes");
    let monic: Vec<C64> = coeffs.iter().map(|c| c / lead).collect();
    let mut roots = match deg {
        0 => Vec::new(),
        1 => vec![-monic[0]],
        2 => {
            // eigenvalues of [[0, -c0], [1, -c1]] in closed form, cancellation-free
            let b = monic[1];
            let c = monic[0];
            let disc = (b * b - 4.0 * c).sqrt();
            let q = if (b.conj() * disc).re >= 0.0 { -0.5 * (b + disc) } else { -0.5 * (b - disc) };
            if q == ZERO {
                vec![ZERO, ZERO]
            } else {
                vec![q, c / q]
            }
        }
        _ => companion_eigenvalues(&monic),
    };
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let (p, dp) = horner(&monic, *r);
            if dp == ZERO {
                break;
            }
            let step = p / dp;
            if !step.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    roots
}

fn companion_eigenvalues(monic: &[C64]) -> Vec<C64> {
    let d = monic.len() - 1;
    let mut m = DMatrix::<C64>::zeros(d, d);
    for i in 1..d {
        m[(i, i - 1)] = ONE;
    }
    for i in 0..d {
        m[(i, d - 1)] = -monic[i];
    }
    match m.clone().try_schur(1e-15, 10_000) {
        Some(s) => {
            let (_, t) = s.unpack();
            (0..d).map(|i| t[(i, i)]).collect()
        }
        None => aberth(monic),
    }
}

/// Aberth-Ehrlich iteration, used only if the Schur iteration fails to converge.
fn aberth(monic: &[C64]) -> Vec<C64> {
    let d = monic.len() - 1;
    let radius = 1.0 + monic[..d].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<C64> = (0..d)
        .map(|k| C64::from_polar(radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / d as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..d {
            let (p, dp) = horner(monic, z[i]);
            let ratio = p / dp;
            let s: C64 = (0..d).filter(|&j| j != i).map(|j| ONE / (z[i] - z[j])).sum();
            let w = ratio / (ONE - ratio * s);
            if w.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm());
            }
        }
        if moved < 1e-15 * radius {
            break;
        }
    }
    z
}

/// Value and derivative of a polynomial with ascending coefficients.
pub fn horner(coeffs: &[C64], t: C64) -> (C64, C64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in coeffs.iter().rev() {
        dp = dp * t + p;
        p = p * t + c;
    }
    (p, dp)
}

/// A square polynomial system `F: C^m -> C^m` for continuation.
pub trait PolySystem {
    fn dim(&self) -> usize;
    fn degrees(&self) -> Vec<u32>;
    /// Writes `F(t)` into `f` and the row-major Jacobian into `jac`.
    fn eval_jac(&self, t: &[C64], f: &mut [C64], jac: &mut [C64]);
}

/// Tracks the total-degree homotopy `(1-s) gamma G + s F`, `G_i = t_i^{d_i} - 1`,
/// from all `prod d_i` start solutions and returns the finite, distinct endpoints.
pub fn total_degree_homotopy<S: PolySystem>(sys: &S, gamma: C64) -> Vec<Vec<C64>> {
    let m = sys.dim();
    let degs = sys.degrees();
    let mut starts: Vec<Vec<C64>> = vec![Vec::new()];
    for &d in &degs {
        let mut next = Vec::new();
        for s in &starts {
            for k in 0..d {
                let mut v = s.clone();
                v.push(C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / d as f64));
                next.push(v);
            }
        }
        starts = next;
    }
    let mut out: Vec<Vec<C64>> = Vec::new();
    for start in starts {
        if let Some(end) = track_path(sys, &degs, gamma, start) {
            let scale = 1.0 + linalg::norm(&end);
            if out.iter().all(|o| linalg::norm(&linalg::sub(o, &end)) > 1e-7 * scale) {
                out.push(end);
            }
        }
    }
    debug_assert!(out.iter().all(|v| v.len() == m));
    out
}

struct Homotopy<'a, S> {
    sys: &'a S,
    degs: &'a [u32],
    gamma: C64,
}

impl<S: PolySystem> Homotopy<'_, S> {
    /// Returns H(t,s), H_t (row-major) and H_s.
    fn eval(&self, t: &[C64], s: f64) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
        let m = t.len();
        let mut f = vec![ZERO; m];
        let mut jf = vec![ZERO; m * m];
        self.sys.eval_jac(t, &mut f, &mut jf);
        let mut h = vec![ZERO; m];
        let mut ht = vec![ZERO; m * m];
        let mut hs = vec![ZERO; m];
        for i in 0..m {
            let d = self.degs[i];
            let ti = t[i];
            let g = crate::poly::powi(ti, d) - ONE;
            let dg = f64::from(d) * crate::poly::powi(ti, d - 1);
            h[i] = (1.0 - s) * self.gamma * g + s * f[i];
            hs[i] = f[i] - self.gamma * g;
            for j in 0..m {
                ht[i * m + j] = s * jf[i * m + j];
            }
            ht[i * m + i] += (1.0 - s) * self.gamma * dg;
        }
        (h, ht, hs)
    }

    fn tangent(&self, t: &[C64], s: f64) -> Option<Vec<C64>> {
        let (_, ht, hs) = self.eval(t, s);
        let m = t.len();
        let x = linalg::solve(&ht, m, &hs, 1)?;
        Some(x.into_iter().map(|v| -v).collect())
    }
}

fn track_path<S: PolySystem>(sys: &S, degs: &[u32], gamma: C64, start: Vec<C64>) -> Option<Vec<C64>> {
    let hom = Homotopy { sys, degs, gamma };
    let m = start.len();
    let mut t = start;
    let mut s = 0.0f64;
    let mut ds = 0.02f64;
    let mut successes = 0;
    while s < 1.0 {
        if ds < 1e-10 {
            return None;
        }
        let step = ds.min(1.0 - s);
        // fourth-order Runge-Kutta predictor
        let k1 = hom.tangent(&t, s)?;
        let t2: Vec<C64> = t.iter().zip(&k1).map(|(a, b)| a + b * (0.5 * step)).collect();
        let k2 = hom.tangent(&t2, s + 0.5 * step);
        let pred = k2.and_then(|k2| {
            let t3: Vec<C64> = t.iter().zip(&k2).map(|(a, b)| a + b * (0.5 * step)).collect();
            let k3 = hom.tangent(&t3, s + 0.5 * step)?;
            let t4: Vec<C64> = t.iter().zip(&k3).map(|(a, b)| a + b * step).collect();
            let k4 = hom.tangent(&t4, s + step)?;
            Some(
                (0..m)
                    .map(|i| t[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (step / 6.0))
                    .collect::<Vec<C64>>(),
            )
        });
        let corrected = pred.and_then(|p| newton(&hom, p, s + step, 4, 1e-10));
        match corrected {
            Some(tn) => {
                t = tn;
                s += step;
                successes += 1;
                if successes >= 3 {
                    ds = (ds * 1.6).min(0.1);
                    successes = 0;
                }
                if linalg::norm(&t) > 1e8 {
                    return None;
                }
            }
            None => {
                ds *= 0.5;
                successes = 0;
            }
        }
    }
    // polish on the target system
    let mut f = vec![ZERO; m];
    let mut jac = vec![ZERO; m * m];
    for _ in 0..8 {
        sys.eval_jac(&t, &mut f, &mut jac);
        let Some(dx) = linalg::solve(&jac, m, &f, 1) else { break };
        for (ti, di) in t.iter_mut().zip(&dx) {
            *ti -= di;
        }
        if linalg::norm(&dx) < 1e-15 * (1.0 + linalg::norm(&t)) {
            break;
        }
    }
    sys.eval_jac(&t, &mut f, &mut jac);
    (linalg::norm(&f) < 1e-8 * (1.0 + linalg::norm(&t))).then_some(t)
}

fn newton<S: PolySystem>(hom: &Homotopy<'_, S>, mut t: Vec<C64>, s: f64, iters: usize, tol: f64) -> Option<Vec<C64>> {
    let m = t.len();
    for _ in 0..iters {
        let (h, ht, _) = hom.eval(&t, s);
        let dx = linalg::solve(&ht, m, &h, 1)?;
        for (ti, di) in t.iter_mut().zip(&dx) {
            *ti -= di;
        }
        if linalg::norm(&dx) < tol * (1.0 + linalg::norm(&t)) {
            return Some(t);
        }
    }
    None
}

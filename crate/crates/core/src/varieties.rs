//! Affine cones over smooth projective complete intersections: the defining
//! tuple, its Jacobian and minors, Hefer coefficients and degree thresholds.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::poly::{powi, MultiIndexPoly};
use crate::sampling;

/// Number of link points used to certify the regularity margin.
const MARGIN_SAMPLES: usize = 2048;
const MARGIN_SEED: u64 = 0x6c69_6e6b;

/// The affine cone `X = {f_1 = ... = f_nu = 0}` in `C^N`.
#[derive(Clone, Debug)]
pub struct ConeVariety {
    name: String,
    ambient_dim: usize,
    codim: usize,
    dim: usize,
    polys: Vec<MultiIndexPoly>,
    degrees: Vec<u32>,
    total_degree: u32,
    link_regularity_margin: f64,
    charts: Vec<Vec<usize>>,
}

/// Hefer coefficients `H_i^j(zeta, z)` with `sum_j (zeta_j - z_j) H_i^j = f_i(zeta) - f_i(z)`.
///
/// The Hefer form is `h_i = convention_scale * sum_j H_i^j d eta_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeferMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<C64>,
    pub convention_scale: C64,
}

impl HeferMatrix {
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.cols + j]
    }
}

/// Degree-derived exponents and applicability predicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub p_min: f64,
    pub p_min_w: f64,
    pub canonical: bool,
    pub main1_applicable: bool,
    pub main4_applicable: bool,
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    exp: Vec<u32>,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonVariety {
    #[serde(default)]
    name: Option<String>,
    ambient_dim: usize,
    polys: Vec<Vec<JsonTerm>>,
}

impl ConeVariety {
    pub fn new(name: impl Into<String>, ambient_dim: usize, polys: Vec<MultiIndexPoly>) -> Result<Self> {
        let name = name.into();
        let codim = polys.len();
        if codim == 0 {
            return Err(Error::InvalidVariety("at least one defining polynomial is required".into()));
        }
        if codim >= ambient_dim {
            return Err(Error::InvalidVariety(format!(
                "{codim} equations in C^{ambient_dim} leave no positive dimension"
            )));
        }
        if 3 * ambient_dim > 64 {
            return Err(Error::InvalidVariety(format!("ambient dimension {ambient_dim} exceeds 21")));
        }
        for p in &polys {
            if p.num_vars() != ambient_dim {
                return Err(Error::InvalidVariety(format!(
                    "polynomial in {} variables, ambient dimension is {ambient_dim}",
                    p.num_vars()
                )));
            }
            if p.degree() == 0 {
                return Err(Error::InvalidVariety("constant defining polynomial".into()));
            }
        }
        let degrees: Vec<u32> = polys.iter().map(|p| p.degree()).collect();
        let mut v = Self {
            name,
            ambient_dim,
            codim,
            dim: ambient_dim - codim,
            total_degree: degrees.iter().sum(),
            degrees,
            polys,
            link_regularity_margin: 0.0,
            charts: Vec::new(),
        };
        v.charts = sampling::admissible_charts(&v);
        if v.charts.is_empty() {
            return Err(Error::InvalidVariety("no coordinate projection is a finite branched cover".into()));
        }
        let margin = v.refined_margin(sampling::link_points(&v, MARGIN_SAMPLES, MARGIN_SEED));
        if !(margin.is_finite() && margin > 1e-3) {
            return Err(Error::InvalidVariety(format!(
                "link is not smooth: minors norm drops to {margin:e}"
            )));
        }
        v.link_regularity_margin = margin;
        Ok(v)
    }

    /// Minimum of the minors norm over `points`, improved by local descent on
    /// the link from the lowest few samples.
    fn refined_margin(&self, points: Vec<Vec<C64>>) -> f64 {
        let mut scored: Vec<(f64, Vec<C64>)> = points.into_iter().map(|p| (self.minors_norm(&p), p)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = scored.first().map_or(f64::INFINITY, |s| s.0);
        for (start, p) in scored.into_iter().take(4) {
            let (mut cur, mut p) = (start, p);
            let mut step = 0.1;
            for it in 0..150 {
                if step < 1e-7 || cur < 1e-9 {
                    break;
                }
                let Ok(q) = sampling::nearby_point(self, &p, step, it) else {
                    step *= 0.5;
                    continue;
                };
                let r = linalg::norm(&q);
                let q: Vec<C64> = q.into_iter().map(|x| x / r).collect();
                let m = self.minors_norm(&q);
                if m < cur {
                    cur = m;
                    p = q;
                } else if it % (2 * self.dim) == 2 * self.dim - 1 {
                    step *= 0.6;
                }
            }
            best = best.min(cur);
        }
        best
    }

    /// Looks up `hyperplane`, `a1`, `fermat2`..`fermat4` or `ci22`.
    pub fn catalog(name: &str) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        match name {
            "hyperplane" => Self::new(name, 3, vec![MultiIndexPoly::new(3, [(vec![0, 0, 1], one)])?]),
            "a1" => Self::new(name, 3, vec![MultiIndexPoly::power_sum(3, 2, &[one; 3])?]),
            "ci22" => {
                let q1 = MultiIndexPoly::power_sum(4, 2, &[one; 4])?;
                let w: Vec<C64> = (1..=4).map(|k| C64::new(k as f64, 0.0)).collect();
                let q2 = MultiIndexPoly::power_sum(4, 2, &w)?;
                Self::new(name, 4, vec![q1, q2])
            }
            _ => {
                let Some(d) = name.strip_prefix("fermat") else {
                    return Err(Error::UnknownVariety(name.into()));
                };
                let d: u32 = d.parse().map_err(|_| Error::UnknownVariety(name.into()))?;
                if !(2..=4).contains(&d) {
                    return Err(Error::UnsupportedDegree(format!(
                        "fermat{d}: the catalog covers degrees 2 to 4 in C^3"
                    )));
                }
                Self::new(name, 3, vec![MultiIndexPoly::power_sum(3, d, &[one; 3])?])
            }
        }
    }

    /// Parses `{"ambient_dim": N, "polys": [[{"exp": [...], "re": x, "im": y}, ...], ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: JsonVariety = serde_json::from_str(text)?;
        let polys = spec
            .polys
            .into_iter()
            .map(|terms| {
                MultiIndexPoly::new(
                    spec.ambient_dim,
                    terms.into_iter().map(|t| (t.exp, C64::new(t.re, t.im))),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec.name.unwrap_or_else(|| "custom".into()), spec.ambient_dim, polys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }
    pub fn codim(&self) -> usize {
        self.codim
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn polys(&self) -> &[MultiIndexPoly] {
        &self.polys
    }
    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }
    pub fn total_degree(&self) -> u32 {
        self.total_degree
    }
    pub fn link_regularity_margin(&self) -> f64 {
        self.link_regularity_margin
    }
    /// Free-coordinate sets whose complementary projections are finite branched covers.
    pub fn charts(&self) -> &[Vec<usize>] {
        &self.charts
    }
    /// `d - nu`, the homogeneity degree of the minors.
    pub fn excess(&self) -> i64 {
        i64::from(self.total_degree) - self.codim as i64
    }

    pub fn eval_tuple(&self, zeta: &[C64]) -> Vec<C64> {
        self.polys.iter().map(|p| p.eval(zeta)).collect()
    }

    /// Row-major `nu x N` Jacobian.
    pub fn jacobian(&self, zeta: &[C64]) -> Vec<C64> {
        let n = self.ambient_dim;
        let mut jac = vec![ZERO; self.codim * n];
        for (i, p) in self.polys.iter().enumerate() {
            p.eval_grad(zeta, &mut jac[i * n..(i + 1) * n]);
        }
        jac
    }

    /// All `nu x nu` minors of the Jacobian, indexed by column subsets in lexicographic order.
    pub fn minors(&self, jac: &[C64]) -> Vec<(Vec<usize>, C64)> {
        let rows: Vec<usize> = (0..self.codim).collect();
        linalg::subsets(self.ambient_dim, self.codim)
            .into_iter()
            .map(|cols| {
                let m = linalg::minor(jac, self.ambient_dim, &rows, &cols);
                (cols, m)
            })
            .collect()
    }

    pub fn minors_norm(&self, zeta: &[C64]) -> f64 {
        let jac = self.jacobian(zeta);
        if self.codim == 1 {
            return linalg::norm(&jac);
        }
        let m: Vec<C64> = self.minors(&jac).into_iter().map(|(_, m)| m).collect();
        linalg::norm(&m)
    }

    /// Telescoping divided differences in coordinate order.
    pub fn hefer_coeffs(&self, zeta: &[C64], z: &[C64]) -> HeferMatrix {
        let n = self.ambient_dim;
        let mut entries = vec![ZERO; self.codim * n];
        for (i, p) in self.polys.iter().enumerate() {
            let row = &mut entries[i * n..(i + 1) * n];
            for (e, c) in p.terms() {
                // prefix[j] = prod_{l<j} z_l^{e_l}, suffix[j] = prod_{l>j} zeta_l^{e_l}
                let mut suffix = vec![ZERO; n];
                let mut acc = C64::new(1.0, 0.0);
                for j in (0..n).rev() {
                    suffix[j] = acc;
                    acc *= powi(zeta[j], e[j]);
                }
                let mut prefix = C64::new(1.0, 0.0);
                for j in 0..n {
                    let a = e[j];
                    if a > 0 {
                        let mut dd = ZERO;
                        for k in 0..a {
                            dd += powi(zeta[j], k) * powi(z[j], a - 1 - k);
                        }
                        row[j] += c * prefix * suffix[j] * dd;
                    }
                    prefix *= powi(z[j], a);
                }
            }
        }
        HeferMatrix {
            rows: self.codim,
            cols: n,
            entries,
            convention_scale: C64::new(0.0, -1.0 / (2.0 * PI)),
        }
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        let two_n = 2 * self.dim;
        let excess = self.excess();
        if excess >= two_n as i64 {
            return Err(Error::DegenerateExponent { excess, two_n });
        }
        let tn = two_n as f64;
        let ex = excess as f64;
        let d = i64::from(self.total_degree);
        let bound = two_n as i64 + self.codim as i64 - 1;
        Ok(Thresholds {
            p_min: tn / (tn - ex),
            // at excess = 2n - 1 the weak threshold is infinite
            p_min_w: if ex + 1.0 >= tn { f64::INFINITY } else { tn / (tn - ex - 1.0) },
            canonical: d <= self.ambient_dim as i64 - 1,
            main1_applicable: d <= bound,
            main4_applicable: d < bound,
        })
    }
}

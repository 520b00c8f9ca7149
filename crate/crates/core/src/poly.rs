//! Sparse homogeneous polynomials with complex coefficients.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// A homogeneous polynomial in `num_vars` complex variables.
///
/// Terms are kept in a sorted map keyed by exponent vector. Every exponent
/// vector sums to `degree` and no stored coefficient is exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiIndexPoly {
    num_vars: usize,
    degree: u32,
    terms: BTreeMap<Vec<u32>, C64>,
}

impl MultiIndexPoly {
    pub fn new(num_vars: usize, terms: impl IntoIterator<Item = (Vec<u32>, C64)>) -> Result<Self> {
        if num_vars == 0 {
            return Err(Error::InvalidVariety("polynomial needs at least one variable".into()));
        }
        let mut map: BTreeMap<Vec<u32>, C64> = BTreeMap::new();
        let mut degree = None;
        for (exp, c) in terms {
            if exp.len() != num_vars {
                return Err(Error::InvalidVariety(format!(
                    "exponent {exp:?} has length {} instead of {num_vars}",
                    exp.len()
                )));
            }
            let deg: u32 = exp.iter().sum();
            match degree {
                None => degree = Some(deg),
                Some(d) if d != deg => {
                    return Err(Error::InvalidVariety(format!(
                        "polynomial is not homogeneous: degrees {d} and {deg}"
                    )))
                }
                _ => {}
            }
            *map.entry(exp).or_insert(C64::new(0.0, 0.0)) += c;
        }
        map.retain(|_, c| *c != C64::new(0.0, 0.0));
        let degree = match degree {
            Some(d) if !map.is_empty() => d,
            _ => return Err(Error::InvalidVariety("polynomial has no nonzero terms".into())),
        };
        Ok(Self { num_vars, degree, terms: map })
    }

    /// Sum of `coeff * zeta_k^degree` over the given coordinates.
    pub fn power_sum(num_vars: usize, degree: u32, coeffs: &[C64]) -> Result<Self> {
        let terms = coeffs.iter().enumerate().map(|(k, &c)| {
            let mut e = vec![0; num_vars];
            e[k] = degree;
            (e, c)
        });
        Self::new(num_vars, terms)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], C64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exp: &[u32]) -> C64 {
        self.terms.get(exp).copied().unwrap_or_default()
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        debug_assert_eq!(x.len(), self.num_vars);
        self.terms.iter().map(|(e, &c)| c * monomial(x, e)).sum()
    }

    /// Value and gradient at `x`.
    pub fn eval_grad(&self, x: &[C64], grad: &mut [C64]) -> C64 {
        grad.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        let mut value = C64::new(0.0, 0.0);
        for (e, &c) in &self.terms {
            value += c * monomial(x, e);
            for j in 0..self.num_vars {
                if e[j] == 0 {
                    continue;
                }
                let mut term = c * f64::from(e[j]);
                for (l, (&xl, &el)) in x.iter().zip(e.iter()).enumerate() {
                    let p = if l == j { el - 1 } else { el };
                    term *= powi(xl, p);
                }
                grad[j] += term;
            }
        }
        value
    }
}

pub(crate) fn powi(x: C64, p: u32) -> C64 {
    match p {
        0 => C64::new(1.0, 0.0),
        1 => x,
        2 => x * x,
        _ => {
            let mut acc = C64::new(1.0, 0.0);
            let mut base = x;
            let mut k = p;
            while k > 0 {
                if k & 1 == 1 {
                    acc *= base;
                }
                base *= base;
                k >>= 1;
            }
            acc
        }
    }
}

pub(crate) fn monomial(x: &[C64], e: &[u32]) -> C64 {
    x.iter().zip(e).fold(C64::new(1.0, 0.0), |acc, (&xi, &ei)| acc * powi(xi, ei))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn rejects_inhomogeneous() {
        let p = MultiIndexPoly::new(2, vec![(vec![2, 0], c(1.0)), (vec![0, 1], c(1.0))]);
        assert!(matches!(p, Err(Error::InvalidVariety(_))));
    }

    #[test]
    fn drops_cancelling_terms() {
        let p = MultiIndexPoly::new(2, vec![(vec![1, 1], c(1.0)), (vec![1, 1], c(-1.0)), (vec![2, 0], c(3.0))]).unwrap();
        assert_eq!(p.num_terms(), 1);
        assert!(MultiIndexPoly::new(2, vec![(vec![1, 1], c(1.0)), (vec![1, 1], c(-1.0))]).is_err());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = MultiIndexPoly::new(
            3,
            vec![(vec![3, 0, 0], c(1.0)), (vec![1, 1, 1], C64::new(0.5, -2.0)), (vec![0, 2, 1], c(-1.5))],
        )
        .unwrap();
        let x = [C64::new(0.3, 0.7), C64::new(-1.1, 0.2), C64::new(0.4, -0.9)];
        let mut g = [C64::default(); 3];
        p.eval_grad(&x, &mut g);
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
            assert!((fd - g[j]).norm() < 1e-8);
        }
    }
}

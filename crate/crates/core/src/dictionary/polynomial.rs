use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DictError, Lift, Normalization};

/// Number of monomials of total degree 1..=m in three variables.
pub fn polynomial_dim(m: usize) -> usize {
    (1..=m).fold(0, |n, d| n + (d + 1) * (d + 2) / 2)
}

/// Exponent triples in graded lexicographic order, degree 1 first.
pub fn monomial_exponents(m: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::with_capacity(polynomial_dim(m));
    for d in 1..=m as u32 {
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

#[inline]
fn monomial(x: &[f64; 3], e: &[u32; 3]) -> f64 {
    x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32)
}

/// All monomials of the raw state up to degree `m`.
pub fn lift_polynomial(x: &[f64; 3], m: usize) -> Vec<f64> {
    monomial_exponents(m).iter().map(|e| monomial(x, e)).collect()
}

/// Linear terms are the raw state; higher-degree monomials are taken of the
/// normalized state so they stay O(1) across the envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PolyRepr", into = "PolyRepr")]
pub struct PolynomialDictionary {
    pub degree: usize,
    pub normalization: Normalization,
    exponents: Vec<[u32; 3]>,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    degree: usize,
    n: usize,
    normalization: Normalization,
}

impl From<PolyRepr> for PolynomialDictionary {
    fn from(r: PolyRepr) -> Self {
        Self::new(r.degree, r.normalization)
    }
}

impl From<PolynomialDictionary> for PolyRepr {
    fn from(d: PolynomialDictionary) -> Self {
        PolyRepr { degree: d.degree, n: d.dim(), normalization: d.normalization }
    }
}

impl PolynomialDictionary {
    pub fn new(degree: usize, normalization: Normalization) -> Self {
        assert!(degree >= 1, "polynomial degree must be at least 1");
        Self { degree, normalization, exponents: monomial_exponents(degree) }
    }
}

impl Lift for PolynomialDictionary {
    fn dim(&self) -> usize {
        self.exponents.len()
    }

    fn lift_into(&self, x: &[f64; 3], out: &mut [f64]) {
        out[..3].copy_from_slice(x);
        let xn = self.normalization.apply(x);
        for (o, e) in out[3..].iter_mut().zip(&self.exponents[3..]) {
            *o = monomial(&xn, e);
        }
    }
}

/// Polynomial dictionary with normalization fit on the training states.
pub fn build_polynomial_dictionary(
    x: &DMatrix<f64>,
    degree: usize,
) -> Result<PolynomialDictionary, DictError> {
    if degree == 0 {
        return Err(DictError::Dimension("polynomial degree must be at least 1".into()));
    }
    Ok(PolynomialDictionary::new(degree, Normalization::fit(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_values() {
        let n: Vec<usize> = (0..=7).map(polynomial_dim).collect();
        assert_eq!(n, vec![0, 3, 9, 19, 34, 55, 83, 119]);
    }

    #[test]
    fn degree_two_order() {
        assert_eq!(
            lift_polynomial(&[2.0, 0.0, 1.0], 2),
            vec![2.0, 0.0, 1.0, 4.0, 0.0, 2.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn identity_normalization_matches_raw_monomials() {
        let d = PolynomialDictionary::new(4, Normalization::identity());
        let x = [0.7, -1.3, 2.1];
        assert_eq!(d.lift(&x).as_slice(), lift_polynomial(&x, 4).as_slice());
    }

    #[test]
    fn serde_round_trip() {
        let d = PolynomialDictionary::new(
            3,
            Normalization { mean: [450.1, 1500.3, 28.7], scale: [40.2, 210.9, 3.3] },
        );
        let back: PolynomialDictionary =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}

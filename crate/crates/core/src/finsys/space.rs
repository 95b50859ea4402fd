use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{FzError, Result};

/// Parses an exact weight written as `"p/q"` or as a bare integer `"p"`.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let parse = |s: &str| -> Result<BigInt> {
        s.parse::<BigInt>()
            .map_err(|_| FzError::Schema(format!("weight {text:?} is not of the form \"p/q\"")))
    };
    let (num, den) = (parse(num)?, parse(den)?);
    if den.is_zero() {
        return Err(FzError::Schema(format!("weight {text:?} has a zero denominator")));
    }
    Ok(BigRational::new(num, den))
}

/// Renders a rational as `"p/q"` (or `"p"` when integral).
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// A finite probability space: ordered atoms with strictly positive exact
/// weights summing to one.
#[derive(Debug, Clone)]
pub struct FinProbSpace {
    atoms: Vec<String>,
    weights: Vec<BigRational>,
    weights_f64: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PartialEq for FinProbSpace {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.weights == other.weights
    }
}

impl FinProbSpace {
    pub fn new(atoms: Vec<(String, BigRational)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(FzError::Validation("a probability space needs at least one atom".into()));
        }
        let mut index = HashMap::with_capacity(atoms.len());
        let mut total = BigRational::zero();
        for (i, (id, w)) in atoms.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(FzError::Validation(format!("duplicate atom id {id:?}")));
            }
            if !w.is_positive() {
                return Err(FzError::Validation(format!(
                    "atom {id:?} has non-positive weight {}",
                    format_rational(w)
                )));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(FzError::Validation(format!(
                "weights sum to {}, not 1",
                format_rational(&total)
            )));
        }
        let (atoms, weights): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
        let weights_f64 = weights.iter().map(rational_to_f64).collect();
        Ok(Self { atoms, weights, weights_f64, index })
    }

    /// Uniform weights on the given atom ids.
    pub fn uniform<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let n = BigInt::from(ids.len().max(1));
        let w = BigRational::new(BigInt::one(), n);
        Self::new(ids.into_iter().map(|id| (id, w.clone())).collect())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn atom_id(&self, i: usize) -> &str {
        &self.atoms[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn weight(&self, i: usize) -> &BigRational {
        &self.weights[i]
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn weight_f64(&self, i: usize) -> f64 {
        self.weights_f64[i]
    }

    pub fn weights_f64(&self) -> &[f64] {
        &self.weights_f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parses_fractions_and_integers() {
        assert_eq!(parse_rational("1/3").unwrap(), q(1, 3));
        assert_eq!(parse_rational(" 2/4 ").unwrap(), q(1, 2));
        assert_eq!(parse_rational("1").unwrap(), q(1, 1));
        assert!(matches!(parse_rational("0.5"), Err(FzError::Schema(_))));
        assert!(matches!(parse_rational("1/0"), Err(FzError::Schema(_))));
    }

    #[test]
    fn rejects_bad_weight_sums_and_duplicates() {
        let err = FinProbSpace::new(vec![("a".into(), q(1, 2)), ("b".into(), q(49, 100))]).unwrap_err();
        assert!(err.to_string().contains("99/100"), "{err}");
        let err = FinProbSpace::new(vec![("a".into(), q(1, 2)), ("a".into(), q(1, 2))]).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = FinProbSpace::new(vec![("a".into(), q(1, 1)), ("b".into(), q(0, 1))]).unwrap_err();
        assert!(err.to_string().contains("non-positive"));
    }

    #[test]
    fn uniform_space() {
        let s = FinProbSpace::uniform(["a", "b", "c"]).unwrap();
        assert_eq!(s.weight(2), &q(1, 3));
        assert_eq!(s.index_of("b"), Some(1));
        assert_eq!(format_rational(s.weight(0)), "1/3");
    }
}

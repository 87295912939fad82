//! Sparse parameterized polynomial systems over the complex numbers.
//!
//! A [`ParameterizedSystem`] holds N polynomials in N variables `x` and P
//! parameters `p`, each polynomial a list of [`Monomial`]s. Construction
//! normalizes the term lists (like monomials combined, zero coefficients
//! dropped), after which the system is immutable: evaluation and analytic
//! differentiation are pure functions and safe to share across threads.
//!
//! Systems are interchanged as JSON documents of the form
//!
//! ```json
//! {"vars": ["x"], "params": ["p"],
//!  "polys": [[{"c": [1.0, 0.0], "v": {"x": 2}},
//!             {"c": [-1.0, 0.0], "p": {"p": 1}}]]}
//! ```
//!
//! where `c` is `[re, im]` and `v`/`p` map identifier names to exponents
//! (empty or omitted maps are permitted).

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMat;

/// Sorted `(index, exponent)` pairs for the variable and parameter parts
/// of a term; the canonical identity of a monomial's shape.
type ExponentKey = (Vec<(usize, u32)>, Vec<(usize, u32)>);

/// One sparse term `c · x^a · p^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coefficient: Complex64,
    var_exponents: BTreeMap<usize, u32>,
    param_exponents: BTreeMap<usize, u32>,
}

impl Monomial {
    /// Builds a term; zero exponents are dropped.
    pub fn new(
        coefficient: Complex64,
        var_exponents: impl IntoIterator<Item = (usize, u32)>,
        param_exponents: impl IntoIterator<Item = (usize, u32)>,
    ) -> Self {
        Self {
            coefficient,
            var_exponents: var_exponents.into_iter().filter(|&(_, e)| e > 0).collect(),
            param_exponents: param_exponents.into_iter().filter(|&(_, e)| e > 0).collect(),
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(c, [], [])
    }

    pub fn coefficient(&self) -> Complex64 {
        self.coefficient
    }

    pub fn var_exponents(&self) -> &BTreeMap<usize, u32> {
        &self.var_exponents
    }

    pub fn param_exponents(&self) -> &BTreeMap<usize, u32> {
        &self.param_exponents
    }

    /// Total degree in the parameters jointly.
    pub fn param_degree(&self) -> u32 {
        self.param_exponents.values().sum()
    }

    fn shape_key(&self) -> ExponentKey {
        (
            self.var_exponents.iter().map(|(&i, &e)| (i, e)).collect(),
            self.param_exponents.iter().map(|(&i, &e)| (i, e)).collect(),
        )
    }

    fn eval(&self, x: &[Complex64], p: &[Complex64]) -> Complex64 {
        let mut v = self.coefficient;
        for (&i, &e) in &self.var_exponents {
            v *= x[i].powu(e);
        }
        for (&k, &e) in &self.param_exponents {
            v *= p[k].powu(e);
        }
        v
    }

    /// Monomial value with variable `skip` excluded from the product.
    fn eval_without_var(&self, skip: usize, x: &[Complex64], p: &[Complex64]) -> Complex64 {
        let mut v = self.coefficient;
        for (&i, &e) in &self.var_exponents {
            if i != skip {
                v *= x[i].powu(e);
            }
        }
        for (&k, &e) in &self.param_exponents {
            v *= p[k].powu(e);
        }
        v
    }

    fn eval_without_param(&self, skip: usize, x: &[Complex64], p: &[Complex64]) -> Complex64 {
        let mut v = self.coefficient;
        for (&i, &e) in &self.var_exponents {
            v *= x[i].powu(e);
        }
        for (&k, &e) in &self.param_exponents {
            if k != skip {
                v *= p[k].powu(e);
            }
        }
        v
    }
}

/// Errors raised while parsing or constructing a system.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("system must be square: {n_polys} polynomials for {n_vars} variables")]
    NonSquare { n_polys: usize, n_vars: usize },
    #[error("at least one variable is required")]
    NoVariables,
    #[error("empty identifier in {list}")]
    EmptyName { list: &'static str },
    #[error("duplicate name `{name}`")]
    DuplicateName { name: String },
    #[error("unknown {kind} `{name}` in polys[{poly}][{term}]")]
    UnknownName {
        kind: &'static str,
        name: String,
        poly: usize,
        term: usize,
    },
    #[error("{kind} index {index} out of range in polynomial {poly} (limit {limit})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        poly: usize,
        limit: usize,
    },
    #[error("non-finite coefficient in polys[{poly}][{term}]")]
    NonFiniteCoefficient { poly: usize, term: usize },
}

/// Shape mismatch between a system and a point vector.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("expected {expected} {what}, got {got}")]
pub struct DimensionError {
    pub what: &'static str,
    pub expected: usize,
    pub got: usize,
}

/// A square system F(x; p) of N polynomials in N variables and P parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterizedSystem {
    var_names: Vec<String>,
    param_names: Vec<String>,
    polynomials: Vec<Vec<Monomial>>,
}

impl ParameterizedSystem {
    /// Validates and normalizes a system: names must be unique and nonempty,
    /// the system square, every exponent index in range. Like terms are
    /// combined and exact zero coefficients dropped.
    pub fn new(
        var_names: Vec<String>,
        param_names: Vec<String>,
        polynomials: Vec<Vec<Monomial>>,
    ) -> Result<Self, ParseError> {
        if var_names.is_empty() {
            return Err(ParseError::NoVariables);
        }
        if polynomials.len() != var_names.len() {
            return Err(ParseError::NonSquare {
                n_polys: polynomials.len(),
                n_vars: var_names.len(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, list) in var_names
            .iter()
            .map(|n| (n, "vars"))
            .chain(param_names.iter().map(|n| (n, "params")))
        {
            if name.is_empty() {
                return Err(ParseError::EmptyName { list });
            }
            if !seen.insert(name.clone()) {
                return Err(ParseError::DuplicateName { name: name.clone() });
            }
        }
        let n_vars = var_names.len();
        let n_params = param_names.len();
        let mut normalized = Vec::with_capacity(polynomials.len());
        for (pi, poly) in polynomials.into_iter().enumerate() {
            let mut combined: BTreeMap<ExponentKey, Complex64> = BTreeMap::new();
            for (ti, mono) in poly.into_iter().enumerate() {
                if !(mono.coefficient.re.is_finite() && mono.coefficient.im.is_finite()) {
                    return Err(ParseError::NonFiniteCoefficient { poly: pi, term: ti });
                }
                for &i in mono.var_exponents.keys() {
                    if i >= n_vars {
                        return Err(ParseError::IndexOutOfRange {
                            kind: "variable",
                            index: i,
                            poly: pi,
                            limit: n_vars,
                        });
                    }
                }
                for &k in mono.param_exponents.keys() {
                    if k >= n_params {
                        return Err(ParseError::IndexOutOfRange {
                            kind: "parameter",
                            index: k,
                            poly: pi,
                            limit: n_params,
                        });
                    }
                }
                *combined
                    .entry(mono.shape_key())
                    .or_insert(Complex64::new(0.0, 0.0)) += mono.coefficient;
            }
            let terms: Vec<Monomial> = combined
                .into_iter()
                .filter(|(_, c)| *c != Complex64::new(0.0, 0.0))
                .map(|((v, p), c)| Monomial::new(c, v, p))
                .collect();
            normalized.push(terms);
        }
        Ok(Self {
            var_names,
            param_names,
            polynomials: normalized,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn polynomials(&self) -> &[Vec<Monomial>] {
        &self.polynomials
    }

    fn check_lengths(&self, x: &[Complex64], p: &[Complex64]) -> Result<(), DimensionError> {
        if x.len() != self.n_vars() {
            return Err(DimensionError {
                what: "variables",
                expected: self.n_vars(),
                got: x.len(),
            });
        }
        if p.len() != self.n_params() {
            return Err(DimensionError {
                what: "parameters",
                expected: self.n_params(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Residual vector F(x; p).
    pub fn evaluate(&self, x: &[Complex64], p: &[Complex64]) -> Result<Vec<Complex64>, DimensionError> {
        self.check_lengths(x, p)?;
        Ok(self.eval_unchecked(x, p))
    }

    pub(crate) fn eval_unchecked(&self, x: &[Complex64], p: &[Complex64]) -> Vec<Complex64> {
        self.polynomials
            .iter()
            .map(|poly| poly.iter().map(|m| m.eval(x, p)).sum())
            .collect()
    }

    /// Analytic Jacobians (∂F/∂x, ∂F/∂p) from the monomial representation.
    pub fn jacobian(&self, x: &[Complex64], p: &[Complex64]) -> Result<(CMat, CMat), DimensionError> {
        self.check_lengths(x, p)?;
        Ok(self.jacobian_unchecked(x, p))
    }

    pub(crate) fn jacobian_unchecked(&self, x: &[Complex64], p: &[Complex64]) -> (CMat, CMat) {
        let n = self.n_vars();
        let np = self.n_params();
        let mut jx = CMat::zeros(n, n);
        let mut jp = CMat::zeros(n, np);
        for (row, poly) in self.polynomials.iter().enumerate() {
            for mono in poly {
                for (&j, &e) in &mono.var_exponents {
                    let d = mono.eval_without_var(j, x, p) * (e as f64) * x[j].powu(e - 1);
                    jx.add_to(row, j, d);
                }
                for (&k, &e) in &mono.param_exponents {
                    let d = mono.eval_without_param(k, x, p) * (e as f64) * p[k].powu(e - 1);
                    jp.add_to(row, k, d);
                }
            }
        }
        (jx, jp)
    }

    /// Serializes back to the JSON document format.
    pub fn to_json(&self) -> String {
        let doc = SystemDoc {
            vars: self.var_names.clone(),
            params: self.param_names.clone(),
            polys: self
                .polynomials
                .iter()
                .map(|poly| {
                    poly.iter()
                        .map(|m| TermDoc {
                            c: [m.coefficient.re, m.coefficient.im],
                            v: m.var_exponents
                                .iter()
                                .map(|(&i, &e)| (self.var_names[i].clone(), e))
                                .collect(),
                            p: m.param_exponents
                                .iter()
                                .map(|(&k, &e)| (self.param_names[k].clone(), e))
                                .collect(),
                        })
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("system serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct SystemDoc {
    vars: Vec<String>,
    params: Vec<String>,
    polys: Vec<Vec<TermDoc>>,
}

#[derive(Serialize, Deserialize)]
struct TermDoc {
    c: [f64; 2],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    v: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    p: BTreeMap<String, u32>,
}

/// Parses a system document. JSON errors carry line/column positions;
/// semantic errors name the offending polynomial and term.
pub fn parse_system(text: &str) -> Result<ParameterizedSystem, ParseError> {
    let doc: SystemDoc = serde_json::from_str(text)?;
    let var_index: BTreeMap<&str, usize> = doc
        .vars
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let param_index: BTreeMap<&str, usize> = doc
        .params
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut polynomials = Vec::with_capacity(doc.polys.len());
    for (pi, poly) in doc.polys.iter().enumerate() {
        let mut terms = Vec::with_capacity(poly.len());
        for (ti, term) in poly.iter().enumerate() {
            let mut var_exponents = Vec::new();
            for (name, &e) in &term.v {
                let &i = var_index
                    .get(name.as_str())
                    .ok_or_else(|| ParseError::UnknownName {
                        kind: "variable",
                        name: name.clone(),
                        poly: pi,
                        term: ti,
                    })?;
                var_exponents.push((i, e));
            }
            let mut param_exponents = Vec::new();
            for (name, &e) in &term.p {
                let &k = param_index
                    .get(name.as_str())
                    .ok_or_else(|| ParseError::UnknownName {
                        kind: "parameter",
                        name: name.clone(),
                        poly: pi,
                        term: ti,
                    })?;
                param_exponents.push((k, e));
            }
            terms.push(Monomial::new(
                Complex64::new(term.c[0], term.c[1]),
                var_exponents,
                param_exponents,
            ));
        }
        polynomials.push(terms);
    }
    ParameterizedSystem::new(doc.vars, doc.params, polynomials)
}

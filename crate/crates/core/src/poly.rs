//! Exact multivariate polynomials over classical phase-space coordinates.
//!
//! Variables are ordered `x1..xn` (positions) followed by `x(n+1)..x(2n)`
//! (momenta). Coefficients are arbitrary-precision rationals; conversion to
//! `f64` happens only through [`PhasePolynomial::evaluate`] and
//! [`CompiledPolynomial`].
//!
//! The canonical term order is graded lexicographic, largest first, with
//! `x1 > x2 > ...`. [`fmt::Display`] prints that order and
//! [`PhasePolynomial::parse`] accepts it back unchanged.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational coefficient.
pub type Rational = BigRational;

/// Largest exponent the literal parser accepts on a single variable.
pub const MAX_PARSED_EXPONENT: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("dimension mismatch: {left} vs {right} variables")]
    DimensionMismatch { left: usize, right: usize },
    #[error("variable index {index} out of range for {num_vars} variables")]
    VariableOutOfRange { index: usize, num_vars: usize },
    #[error("a polynomial needs at least one variable")]
    NoVariables,
    #[error("phase space must have an even number of variables, got {0}")]
    OddDimension(usize),
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
}

/// Exponent multi-index, one entry per variable.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one(num_vars: usize) -> Self {
        Monomial(vec![0; num_vars])
    }

    pub fn var(num_vars: usize, index: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[index] = 1;
        Monomial(e)
    }

    pub fn from_exponents(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn num_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Indices of variables with a nonzero exponent.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, _)| i)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Real multivariate polynomial with exact rational coefficients.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PhasePolynomial {
    num_vars: usize,
    terms: BTreeMap<Monomial, Rational>,
}

impl PhasePolynomial {
    pub fn zero(num_vars: usize) -> Self {
        assert!(num_vars > 0, "a polynomial needs at least one variable");
        PhasePolynomial {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: Rational) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(Monomial::one(num_vars), c);
        p
    }

    /// The coordinate `x_{index+1}`.
    pub fn var(num_vars: usize, index: usize) -> Result<Self, PolyError> {
        if index >= num_vars {
            return Err(PolyError::VariableOutOfRange { index, num_vars });
        }
        let mut p = Self::zero(num_vars);
        p.add_term(Monomial::var(num_vars, index), Rational::one());
        Ok(p)
    }

    /// Single term `c * x^exponents`.
    pub fn monomial(exponents: Vec<u32>, c: Rational) -> Result<Self, PolyError> {
        if exponents.is_empty() {
            return Err(PolyError::NoVariables);
        }
        let mut p = Self::zero(exponents.len());
        p.add_term(Monomial(exponents), c);
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in canonical (descending graded lexicographic) order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter().rev()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    /// Maximum total degree over the stored terms; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Variables that appear in at least one term.
    pub fn support(&self) -> BTreeSet<usize> {
        self.terms.keys().flat_map(|m| m.support()).collect()
    }

    /// Adds `c * m` in place, dropping the entry if it cancels.
    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        debug_assert_eq!(m.num_vars(), self.num_vars);
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn check_dims(&self, other: &Self) -> Result<(), PolyError> {
        if self.num_vars != other.num_vars {
            return Err(PolyError::DimensionMismatch {
                left: self.num_vars,
                right: other.num_vars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Rational::one())
    }

    pub fn scale(&self, c: &Rational) -> Self {
        let mut out = Self::zero(self.num_vars);
        if c.is_zero() {
            return out;
        }
        out.terms = self
            .terms
            .iter()
            .map(|(m, k)| (m.clone(), k * c))
            .collect();
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dims(other)?;
        let mut out = Self::zero(self.num_vars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.num_vars, Rational::one());
        for _ in 0..k {
            acc = acc.mul(self).expect("same dimension");
        }
        acc
    }

    /// Formal partial derivative with respect to variable `var` (0-based).
    pub fn partial_derivative(&self, var: usize) -> Result<Self, PolyError> {
        if var >= self.num_vars {
            return Err(PolyError::VariableOutOfRange {
                index: var,
                num_vars: self.num_vars,
            });
        }
        let mut out = Self::zero(self.num_vars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut d = m.clone();
            d.0[var] -= 1;
            out.add_term(d, c * Rational::from_integer(BigInt::from(e)));
        }
        Ok(out)
    }

    /// Horner evaluation, nested one variable at a time.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.num_vars {
            return Err(PolyError::DimensionMismatch {
                left: self.num_vars,
                right: point.len(),
            });
        }
        let terms: Vec<(&[u32], f64)> = self
            .terms
            .iter()
            .map(|(m, c)| (m.exponents(), rational_to_f64(c)))
            .collect();
        Ok(horner(&terms, 0, point))
    }

    /// Restriction of `self` to the terms that satisfy `keep`.
    pub fn filter_terms<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(&Monomial) -> bool,
    {
        PhasePolynomial {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Splits into one single-term polynomial per stored monomial, in
    /// ascending canonical order.
    pub fn monomials(&self) -> Vec<PhasePolynomial> {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut p = Self::zero(self.num_vars);
                p.add_term(m.clone(), c.clone());
                p
            })
            .collect()
    }

    /// Parses the literal format `c * x1^a * x2 + ...`.
    ///
    /// Coefficients may be integers, `p/q` rationals, or finite decimals
    /// (`0.1` parses as exactly `1/10`). Variables are `x1..x{num_vars}`.
    pub fn parse(input: &str, num_vars: usize) -> Result<Self, PolyError> {
        if num_vars == 0 {
            return Err(PolyError::NoVariables);
        }
        Parser::new(input, num_vars).parse()
    }
}

fn horner(terms: &[(&[u32], f64)], var: usize, point: &[f64]) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    if var == point.len() {
        return terms.iter().map(|(_, c)| c).sum();
    }
    let mut groups: BTreeMap<u32, Vec<(&[u32], f64)>> = BTreeMap::new();
    for &(e, c) in terms {
        groups.entry(e[var]).or_default().push((e, c));
    }
    let x = point[var];
    let mut acc = 0.0;
    let mut prev: Option<u32> = None;
    for (&k, group) in groups.iter().rev() {
        if let Some(p) = prev {
            acc *= x.powi((p - k) as i32);
        }
        acc += horner(group, var + 1, point);
        prev = Some(k);
    }
    if let Some(p) = prev {
        acc *= x.powi(p as i32);
    }
    acc
}

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator or denominator overflowed f64 on its own
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Flat `f64` form of a polynomial for hot evaluation loops.
#[derive(Clone, Debug)]
pub struct CompiledPolynomial {
    num_vars: usize,
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPolynomial {
    pub fn new(p: &PhasePolynomial) -> Self {
        CompiledPolynomial {
            num_vars: p.num_vars,
            terms: p
                .terms
                .iter()
                .map(|(m, c)| {
                    let factors = m
                        .exponents()
                        .iter()
                        .enumerate()
                        .filter(|(_, &e)| e > 0)
                        .map(|(i, &e)| (i, e as i32))
                        .collect();
                    (rational_to_f64(c), factors)
                })
                .collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Evaluates at `point`; panics in debug builds on a length mismatch.
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.num_vars);
        self.terms
            .iter()
            .map(|(c, f)| f.iter().fold(*c, |acc, &(i, e)| acc * point[i].powi(e)))
            .sum()
    }
}

/// Liouvillian `L[f] = sum_j dH/dx_j df/dx_(n+j) - dH/dx_(n+j) df/dx_j`
/// for an arbitrary polynomial `h` over `2n` variables.
pub fn liouvillian(h: &PhasePolynomial, f: &PhasePolynomial) -> Result<PhasePolynomial, PolyError> {
    h.check_dims(f)?;
    if !h.num_vars.is_multiple_of(2) {
        return Err(PolyError::OddDimension(h.num_vars));
    }
    let n = h.num_vars / 2;
    let mut out = PhasePolynomial::zero(h.num_vars);
    for j in 0..n {
        let a = h.partial_derivative(j)?.mul(&f.partial_derivative(n + j)?)?;
        let b = h.partial_derivative(n + j)?.mul(&f.partial_derivative(j)?)?;
        out = out.add(&a)?.sub(&b)?;
    }
    Ok(out)
}

/// The canonical symplectic matrix `J = [[0, I], [-I, 0]]` on `2n` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymplecticStructure {
    n: usize,
}

impl SymplecticStructure {
    pub fn new(n: usize) -> Result<Self, PolyError> {
        if n == 0 {
            return Err(PolyError::NoVariables);
        }
        Ok(SymplecticStructure { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> i64 {
        let n = self.n;
        if row < n && col == row + n {
            1
        } else if row >= n && col + n == row {
            -1
        } else {
            0
        }
    }

    pub fn matrix(&self) -> Vec<Vec<Rational>> {
        let d = self.dim();
        (0..d)
            .map(|r| {
                (0..d)
                    .map(|c| Rational::from_integer(BigInt::from(self.entry(r, c))))
                    .collect()
            })
            .collect()
    }

    /// `J v` for a real vector of length `2n`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; 2 * n];
        out[..n].copy_from_slice(&v[n..]);
        for j in 0..n {
            out[n + j] = -v[j];
        }
        out
    }
}

impl fmt::Display for PhasePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms().enumerate() {
            let negative = c.is_negative();
            match (i, negative) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            let mag = c.abs();
            let mut wrote = false;
            if m.is_one() || !mag.is_one() {
                write!(f, "{mag}")?;
                wrote = true;
            }
            for (v, &e) in m.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                if wrote {
                    f.write_str(" * ")?;
                }
                write!(f, "x{}", v + 1)?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
                wrote = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Plus,
    Minus,
    Star,
    Caret,
    Number(Rational),
    Var(usize),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    num_vars: usize,
    peeked: Option<(usize, Token)>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str, num_vars: usize) -> Self {
        Parser {
            src: input.as_bytes(),
            pos: 0,
            num_vars,
            peeked: None,
        }
    }

    fn err<T>(&self, position: usize, message: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse {
            position,
            message: message.into(),
        })
    }

    fn digits(&mut self) -> &'a [u8] {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn lex(&mut self) -> Result<Option<(usize, Token)>, PolyError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = self.src.get(self.pos) else {
            return Ok(None);
        };
        let tok = match b {
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'x' => {
                self.pos += 1;
                let d = self.digits();
                if d.is_empty() {
                    return self.err(start, "expected variable index after 'x'");
                }
                let index = parse_small(d).filter(|&i| i >= 1 && i <= self.num_vars);
                match index {
                    Some(i) => Token::Var(i - 1),
                    None => {
                        return self.err(
                            start,
                            format!("variable index out of range 1..={}", self.num_vars),
                        )
                    }
                }
            }
            b'0'..=b'9' | b'.' => Token::Number(self.number(start)?),
            other => {
                return self.err(start, format!("unexpected character {:?}", other as char))
            }
        };
        Ok(Some((start, tok)))
    }

    fn number(&mut self, start: usize) -> Result<Rational, PolyError> {
        let int_part = self.digits();
        let mut numer = bigint_from_digits(int_part);
        let mut denom = BigInt::one();
        let mut any_digits = !int_part.is_empty();
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            let frac = self.digits();
            any_digits |= !frac.is_empty();
            for &d in frac {
                numer = numer * 10 + BigInt::from(d - b'0');
                denom *= 10;
            }
        }
        if !any_digits {
            return self.err(start, "malformed number");
        }
        if self.src.get(self.pos) == Some(&b'/') {
            self.pos += 1;
            let q = self.digits();
            if q.is_empty() {
                return self.err(start, "expected denominator after '/'");
            }
            let q = bigint_from_digits(q);
            if q.is_zero() {
                return self.err(start, "zero denominator");
            }
            denom *= q;
        }
        Ok(Rational::new(numer, denom))
    }

    fn peek(&mut self) -> Result<Option<&(usize, Token)>, PolyError> {
        if self.peeked.is_none() {
            self.peeked = self.lex()?;
        }
        Ok(self.peeked.as_ref())
    }

    fn next(&mut self) -> Result<Option<(usize, Token)>, PolyError> {
        if let Some(t) = self.peeked.take() {
            return Ok(Some(t));
        }
        self.lex()
    }

    fn parse(mut self) -> Result<PhasePolynomial, PolyError> {
        let mut out = PhasePolynomial::zero(self.num_vars);
        let mut sign = Rational::one();
        match self.peek()? {
            None => return self.err(0, "empty polynomial"),
            Some((_, Token::Minus)) => {
                sign = -sign;
                self.next()?;
            }
            Some((_, Token::Plus)) => {
                self.next()?;
            }
            _ => {}
        }
        loop {
            let (m, c) = self.term()?;
            out.add_term(m, c * &sign);
            match self.next()? {
                None => break,
                Some((_, Token::Plus)) => sign = Rational::one(),
                Some((_, Token::Minus)) => sign = -Rational::one(),
                Some((p, t)) => return self.err(p, format!("expected '+' or '-', found {t:?}")),
            }
        }
        Ok(out)
    }

    fn term(&mut self) -> Result<(Monomial, Rational), PolyError> {
        let mut coeff = Rational::one();
        let mut mono = Monomial::one(self.num_vars);
        loop {
            match self.next()? {
                Some((_, Token::Number(r))) => coeff *= r,
                Some((_, Token::Var(v))) => {
                    let mut e = 1u32;
                    if matches!(self.peek()?, Some((_, Token::Caret))) {
                        self.next()?;
                        e = match self.next()? {
                            Some((p, Token::Number(r))) => {
                                match r.to_integer().to_u32().filter(|_| r.is_integer()) {
                                    Some(e) if e <= MAX_PARSED_EXPONENT => e,
                                    _ => {
                                        return self.err(
                                            p,
                                            format!(
                                                "exponent must be an integer in 0..={MAX_PARSED_EXPONENT}"
                                            ),
                                        )
                                    }
                                }
                            }
                            Some((p, _)) => return self.err(p, "expected exponent"),
                            None => return self.err(self.src.len(), "expected exponent"),
                        };
                    }
                    mono.0[v] += e;
                    if mono.0[v] > MAX_PARSED_EXPONENT {
                        return self.err(self.pos, "exponent too large");
                    }
                }
                Some((p, t)) => return self.err(p, format!("expected factor, found {t:?}")),
                None => return self.err(self.src.len(), "expected factor"),
            }
            if matches!(self.peek()?, Some((_, Token::Star))) {
                self.next()?;
            } else {
                break;
            }
        }
        Ok((mono, coeff))
    }
}

fn parse_small(d: &[u8]) -> Option<usize> {
    if d.len() > 6 {
        return None;
    }
    std::str::from_utf8(d).ok()?.parse().ok()
}

fn bigint_from_digits(d: &[u8]) -> BigInt {
    if d.is_empty() {
        return BigInt::zero();
    }
    BigInt::parse_bytes(d, 10).expect("ascii digits")
}

/// Shorthand for `p/q` in tests and builders.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

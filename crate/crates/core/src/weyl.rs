//! Exact algebra of quadrature operators `X_j`, `P_j` with `[X_j, P_k] = i δ_jk`.
//!
//! Every element is stored normal-ordered: inside a term, all `X_j` factors
//! stand to the left of all `P_j` factors of the same mode. Operators on
//! different modes commute, so a term is one `(a_X, a_P)` exponent pair per
//! mode. Coefficients are Gaussian rationals, so factors of `i` produced by
//! reordering stay exact.
//!
//! The unitary identities used by the gate synthesis reduce, through
//! `U† e^{isH} U = e^{is U†HU}`, to identities between generators. Those are
//! polynomial identities in this algebra and are decided here exactly.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::poly::{self, PhasePolynomial, PolyError, Rational};
use crate::synth::{self, ExpansionTerm};

/// `p + i q` with rational `p`, `q`.
pub type GaussianRational = Complex<Rational>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeylError {
    #[error("mode count mismatch: {left} vs {right}")]
    ModeMismatch { left: usize, right: usize },
    #[error("adjoint series did not terminate within depth {max_depth}")]
    NonTerminating { max_depth: usize },
    #[error("generator degree {degree} outside the supported range 2..=4")]
    DegreeOutOfRange { degree: u32 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Normal-ordered monomial: `prod_j X_j^{a_j} P_j^{b_j}`, one `(a_j, b_j)` per mode.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct WeylMonomial(Vec<(u32, u32)>);

impl WeylMonomial {
    pub fn one(num_modes: usize) -> Self {
        WeylMonomial(vec![(0, 0); num_modes])
    }

    pub fn exponents(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(a, b)| a + b).sum()
    }

    pub fn is_position_only(&self) -> bool {
        self.0.iter().all(|&(_, b)| b == 0)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WeylPolynomial {
    num_modes: usize,
    terms: BTreeMap<WeylMonomial, GaussianRational>,
}

fn rational(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

fn binomial(n: u32, k: u32) -> Rational {
    let mut acc = Rational::one();
    for i in 0..k {
        acc = acc * rational((n - i) as i64) / rational((i + 1) as i64);
    }
    acc
}

fn factorial(k: u32) -> Rational {
    (1..=k).fold(Rational::one(), |acc, i| acc * rational(i as i64))
}

/// `(-i)^k`.
fn minus_i_pow(k: u32) -> GaussianRational {
    match k % 4 {
        0 => Complex::new(rational(1), rational(0)),
        1 => Complex::new(rational(0), rational(-1)),
        2 => Complex::new(rational(-1), rational(0)),
        _ => Complex::new(rational(0), rational(1)),
    }
}

/// Normal-ordered expansion of `X^a P^b · X^c P^d` on a single mode:
/// `P^b X^c = sum_k k! C(b,k) C(c,k) (-i)^k X^{c-k} P^{b-k}`.
fn single_mode_product(
    (a, b): (u32, u32),
    (c, d): (u32, u32),
) -> Vec<((u32, u32), GaussianRational)> {
    (0..=b.min(c))
        .map(|k| {
            let w = factorial(k) * binomial(b, k) * binomial(c, k);
            let coeff = minus_i_pow(k) * Complex::new(w, Rational::zero());
            ((a + c - k, b + d - k), coeff)
        })
        .collect()
}

impl WeylPolynomial {
    pub fn zero(num_modes: usize) -> Self {
        assert!(num_modes > 0, "need at least one mode");
        WeylPolynomial {
            num_modes,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(num_modes: usize, c: GaussianRational) -> Self {
        let mut w = Self::zero(num_modes);
        w.add_term(WeylMonomial::one(num_modes), c);
        w
    }

    pub fn identity(num_modes: usize) -> Self {
        Self::scalar(num_modes, GaussianRational::one())
    }

    /// Single normal-ordered term `c * prod X^a P^b`.
    pub fn term(exponents: Vec<(u32, u32)>, c: GaussianRational) -> Self {
        let mut w = Self::zero(exponents.len());
        w.add_term(WeylMonomial(exponents), c);
        w
    }

    fn quadrature(num_modes: usize, mode: usize, p: bool) -> Self {
        assert!(mode < num_modes, "mode {mode} out of range");
        let mut e = vec![(0, 0); num_modes];
        e[mode] = if p { (0, 1) } else { (1, 0) };
        Self::term(e, GaussianRational::one())
    }

    /// Position quadrature `X_{mode+1}`.
    pub fn x(num_modes: usize, mode: usize) -> Self {
        Self::quadrature(num_modes, mode, false)
    }

    /// Momentum quadrature `P_{mode+1}`.
    pub fn p(num_modes: usize, mode: usize) -> Self {
        Self::quadrature(num_modes, mode, true)
    }

    /// Embeds a commutative polynomial with variable `i` read as `X_{i+1}`.
    pub fn from_positions(p: &PhasePolynomial) -> Self {
        let n = p.num_vars();
        let mut w = Self::zero(n);
        for (m, c) in p.terms() {
            let e = m.exponents().iter().map(|&a| (a, 0)).collect();
            w.add_term(WeylMonomial(e), Complex::new(c.clone(), Rational::zero()));
        }
        w
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&WeylMonomial, &GaussianRational)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(WeylMonomial::degree).max().unwrap_or(0)
    }

    /// Largest `a_X + a_P` of any single mode in any term.
    pub fn max_mode_degree(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(a, b)| a + b))
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, m: WeylMonomial, c: GaussianRational) {
        debug_assert_eq!(m.0.len(), self.num_modes);
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() = o.get().clone() + c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn check(&self, other: &Self) -> Result<(), WeylError> {
        if self.num_modes != other.num_modes {
            return Err(WeylError::ModeMismatch {
                left: self.num_modes,
                right: other.num_modes,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, WeylError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, WeylError> {
        self.add(&other.scale(&Complex::new(rational(-1), Rational::zero())))
    }

    pub fn scale(&self, c: &GaussianRational) -> Self {
        let mut out = Self::zero(self.num_modes);
        for (m, k) in &self.terms {
            out.add_term(m.clone(), k.clone() * c.clone());
        }
        out
    }

    pub fn scale_real(&self, c: &Rational) -> Self {
        self.scale(&Complex::new(c.clone(), Rational::zero()))
    }

    /// Normal-ordered product `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self, WeylError> {
        self.check(other)?;
        let mut out = Self::zero(self.num_modes);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut partial: Vec<(Vec<(u32, u32)>, GaussianRational)> =
                    vec![(Vec::with_capacity(self.num_modes), ca.clone() * cb.clone())];
                for (ea, eb) in ma.0.iter().zip(&mb.0) {
                    let expansion = single_mode_product(*ea, *eb);
                    let mut next = Vec::with_capacity(partial.len() * expansion.len());
                    for (prefix, c) in &partial {
                        for (e, k) in &expansion {
                            let mut v = prefix.clone();
                            v.push(*e);
                            next.push((v, c.clone() * k.clone()));
                        }
                    }
                    partial = next;
                }
                for (e, c) in partial {
                    out.add_term(WeylMonomial(e), c);
                }
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.num_modes);
        for _ in 0..k {
            acc = acc.mul(self).expect("same mode count");
        }
        acc
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &Self) -> Result<Self, WeylError> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Formal adjoint: conjugate coefficients and reverse operator order,
    /// with `X_j` and `P_j` self-adjoint.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.num_modes);
        for (m, c) in &self.terms {
            let ps = Self::term(m.0.iter().map(|&(_, b)| (0, b)).collect(), c.conj());
            let xs = Self::term(
                m.0.iter().map(|&(a, _)| (a, 0)).collect(),
                GaussianRational::one(),
            );
            let reordered = ps.mul(&xs).expect("same mode count");
            out = out.add(&reordered).expect("same mode count");
        }
        out
    }

    /// Drops the mode structure of a position-only element, reading `X_{j+1}`
    /// as variable `j`. Returns `None` if any term has a `P` factor or a
    /// non-real coefficient.
    pub fn to_positions(&self) -> Option<PhasePolynomial> {
        let mut p = PhasePolynomial::zero(self.num_modes);
        for (m, c) in &self.terms {
            if !m.is_position_only() || !c.im.is_zero() {
                return None;
            }
            p.add_term(
                poly::Monomial::from_exponents(m.0.iter().map(|&(a, _)| a).collect()),
                c.re.clone(),
            );
        }
        Some(p)
    }
}

/// Result of an exactly summed adjoint series.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conjugation {
    /// `e^A B e^{-A}`.
    pub result: WeylPolynomial,
    /// Largest `k` with `ad_A^k(B) != 0`; zero when `A` and `B` commute.
    pub depth: usize,
}

/// Default depth bound: `degree(B) · max_mode_degree(A) + 2`.
pub fn default_max_depth(a: &WeylPolynomial, b: &WeylPolynomial) -> usize {
    (b.degree() * a.max_mode_degree()) as usize + 2
}

/// Exact `e^A B e^{-A} = sum_k ad_A^k(B) / k!`, provided the iterated
/// commutators vanish at some depth `<= max_depth` (defaults to
/// [`default_max_depth`]). A series that is still nonzero at `max_depth`
/// is reported as [`WeylError::NonTerminating`] rather than truncated.
pub fn adjoint_series(
    a: &WeylPolynomial,
    b: &WeylPolynomial,
    max_depth: Option<usize>,
) -> Result<Conjugation, WeylError> {
    a.check(b)?;
    let max_depth = max_depth.unwrap_or_else(|| default_max_depth(a, b));
    let mut result = b.clone();
    let mut current = b.clone();
    let mut k_fact = Rational::one();
    for k in 1..=max_depth {
        current = a.commutator(&current)?;
        if current.is_zero() {
            return Ok(Conjugation {
                result,
                depth: k - 1,
            });
        }
        k_fact *= rational(k as i64);
        result = result.add(&current.scale_real(&(Rational::one() / &k_fact)))?;
    }
    Err(WeylError::NonTerminating { max_depth })
}

/// One multiplicand of the product decomposition, checked symbolically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionCheck {
    pub term: ExpansionTerm,
    /// Termination depth of each nonzero-weight controlled-shift conjugation,
    /// as `(mode index, depth)`; zero-weight shifts are skipped.
    pub depths: Vec<(usize, usize)>,
    /// `U† C(v) X_1^a U == C(v) (sum h_i X_i)^a`.
    pub conjugation_holds: bool,
}

/// Symbolic verification of the decomposition of `exp(-is P_1 X_2^a2 X_3^a3 X_4^a4)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyDecompositionReport {
    pub exponents: [u32; 3],
    pub degree: u32,
    pub checks: Vec<ExpansionCheck>,
    /// `sum_v C(v) (sum h_i X_i)^a == X_1 X_2^a2 X_3^a3 X_4^a4`.
    pub sum_holds: bool,
}

impl KeyDecompositionReport {
    pub fn passed(&self) -> bool {
        self.sum_holds && self.checks.iter().all(|c| c.conjugation_holds)
    }

    /// Largest termination depth over all conjugations.
    pub fn max_depth(&self) -> usize {
        self.checks
            .iter()
            .flat_map(|c| c.depths.iter().map(|&(_, d)| d))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for KeyDecompositionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a2, a3, a4] = self.exponents;
        write!(
            f,
            "key-decomposition exponents=({a2},{a3},{a4}) degree={} terms={} depth={} {}",
            self.degree,
            self.checks.len(),
            self.max_depth(),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Checks, at the generator level, both halves of the exact decomposition of
/// `exp(i s X_1 X_2^a2 X_3^a3 X_4^a4)`:
///
/// * each expansion term: conjugating `C(v) X_1^a` by
///   `U = exp(-i h_2 X_2 P_1) exp(-i h_3 X_3 P_1) exp(-i h_4 X_4 P_1)`
///   yields `C(v) (X_1 + h_2 X_2 + h_3 X_3 + h_4 X_4)^a`;
/// * the expansion terms sum back to the monomial `X_1 X_2^a2 X_3^a3 X_4^a4`.
pub fn verify_key_decomposition(
    a2: u32,
    a3: u32,
    a4: u32,
) -> Result<KeyDecompositionReport, WeylError> {
    const MODES: usize = 4;
    let degree = 1 + a2 + a3 + a4;
    let terms = synth::expansion_coefficients(a2, a3, a4)
        .map_err(|_| WeylError::DegreeOutOfRange { degree })?;

    let x = |j| WeylPolynomial::x(MODES, j);
    let i_unit = GaussianRational::new(Rational::zero(), Rational::one());
    let mut checks = Vec::with_capacity(terms.len());
    let mut sum = WeylPolynomial::zero(MODES);
    for term in terms {
        let c = &term.coefficient;
        let mut conjugated = x(0).pow(degree).scale_real(c);
        let mut depths = Vec::new();
        // U† B U with the innermost factor of U applied first; the factors
        // commute, so the order only fixes the report layout.
        for (mode, &h) in term.weights.iter().enumerate().skip(1) {
            if h == 0 {
                continue;
            }
            let generator = x(mode)
                .mul(&WeylPolynomial::p(MODES, 0))?
                .scale(&(i_unit.clone() * Complex::new(rational(h), Rational::zero())));
            let conj = adjoint_series(&generator, &conjugated, None)?;
            depths.push((mode, conj.depth));
            conjugated = conj.result;
        }
        let mut linear = WeylPolynomial::zero(MODES);
        for (mode, &h) in term.weights.iter().enumerate() {
            linear = linear.add(&x(mode).scale_real(&rational(h)))?;
        }
        let expected = linear.pow(degree).scale_real(c);
        sum = sum.add(&expected)?;
        checks.push(ExpansionCheck {
            conjugation_holds: conjugated == expected,
            term,
            depths,
        });
    }
    let target = WeylPolynomial::term(
        vec![(1, 0), (a2, 0), (a3, 0), (a4, 0)],
        GaussianRational::one(),
    );
    Ok(KeyDecompositionReport {
        exponents: [a2, a3, a4],
        degree,
        checks,
        sum_holds: sum == target,
    })
}

/// Checks the Leibniz rule `L[f g] = L[f] g + f L[g]` exactly, with `L` the
/// Liouvillian built from `h`.
pub fn verify_liouvillian_product_rule(
    h: &PhasePolynomial,
    f: &PhasePolynomial,
    g: &PhasePolynomial,
) -> Result<bool, PolyError> {
    let lhs = poly::liouvillian(h, &f.mul(g)?)?;
    let rhs = poly::liouvillian(h, f)?
        .mul(g)?
        .add(&f.mul(&poly::liouvillian(h, g)?)?)?;
    Ok(lhs == rhs)
}

impl fmt::Display for WeylPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({} + {}i)", c.re, c.im)?;
            for (j, &(a, b)) in m.0.iter().enumerate() {
                for (e, name) in [(a, 'X'), (b, 'P')] {
                    match e {
                        0 => {}
                        1 => write!(f, "*{name}{}", j + 1)?,
                        _ => write!(f, "*{name}{}^{e}", j + 1)?,
                    }
                }
            }
        }
        Ok(())
    }
}

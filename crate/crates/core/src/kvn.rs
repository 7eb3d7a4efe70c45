//! Classical Hamiltonians and their Koopman-von Neumann generators.
//!
//! For `H = V(x_1..x_n) + T(x_{n+1}..x_{2n})` the KvN Hamiltonian is
//! `H_KvN = i L = sum_j dT/dX_{n+j} P_j - dV/dX_j P_{n+j}`, a sum of terms
//! `± m(X) P_k` in which `m` never involves mode `k`. Each term therefore is
//! a commuting product of position and momentum quadratures and is simulated
//! by one controlled translation of mode `k`.

use std::fmt;

use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::poly::{self, Monomial, PhasePolynomial, PolyError, Rational};
use crate::weyl::WeylPolynomial;

/// Largest total degree allowed for `V` and `T`.
pub const MAX_HAMILTONIAN_DEGREE: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KvnError {
    #[error("need at least one degree of freedom")]
    NoDegreesOfFreedom,
    #[error("expected a polynomial over {expected} phase-space variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "position-momentum cross term `{monomial}`: H must separate as V(x1..xn) + T(x(n+1)..x2n)"
    )]
    CrossTerm { monomial: String },
    #[error("{part} has degree {degree}; V and T must be at most quartic")]
    DegreeTooHigh { part: &'static str, degree: u32 },
    #[error("invalid KvN term: {0}")]
    InvalidTerm(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// `H = V + T` with `V` over positions and `T` over momenta.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassicalHamiltonian {
    n: usize,
    potential: PhasePolynomial,
    kinetic: PhasePolynomial,
}

fn is_position_monomial(m: &Monomial, n: usize) -> bool {
    m.support().all(|v| v < n)
}

fn is_momentum_monomial(m: &Monomial, n: usize) -> bool {
    m.support().all(|v| v >= n)
}

impl ClassicalHamiltonian {
    /// Both polynomials live on `2n` variables; `potential` may only use the
    /// first `n`, `kinetic` only the last `n`.
    pub fn new(
        n: usize,
        potential: PhasePolynomial,
        kinetic: PhasePolynomial,
    ) -> Result<Self, KvnError> {
        if n == 0 {
            return Err(KvnError::NoDegreesOfFreedom);
        }
        for p in [&potential, &kinetic] {
            if p.num_vars() != 2 * n {
                return Err(KvnError::DimensionMismatch {
                    expected: 2 * n,
                    got: p.num_vars(),
                });
            }
        }
        let offending = potential
            .terms()
            .find(|(m, _)| !is_position_monomial(m, n))
            .or_else(|| kinetic.terms().find(|(m, _)| !is_momentum_monomial(m, n)));
        if let Some((m, c)) = offending {
            return Err(KvnError::CrossTerm {
                monomial: single_term(m, c).to_string(),
            });
        }
        for (part, p) in [("V", &potential), ("T", &kinetic)] {
            if p.degree() > MAX_HAMILTONIAN_DEGREE {
                return Err(KvnError::DegreeTooHigh {
                    part,
                    degree: p.degree(),
                });
            }
        }
        Ok(ClassicalHamiltonian {
            n,
            potential,
            kinetic,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn potential(&self) -> &PhasePolynomial {
        &self.potential
    }

    pub fn kinetic(&self) -> &PhasePolynomial {
        &self.kinetic
    }

    pub fn total(&self) -> PhasePolynomial {
        self.potential.add(&self.kinetic).expect("same dimension")
    }
}

fn single_term(m: &Monomial, c: &Rational) -> PhasePolynomial {
    PhasePolynomial::monomial(m.exponents().to_vec(), c.clone()).expect("nonempty")
}

/// Splits a raw Hamiltonian into `V + T`; constants go to `V`.
pub fn validate_separation(h: &PhasePolynomial, n: usize) -> Result<ClassicalHamiltonian, KvnError> {
    if n == 0 {
        return Err(KvnError::NoDegreesOfFreedom);
    }
    if h.num_vars() != 2 * n {
        return Err(KvnError::DimensionMismatch {
            expected: 2 * n,
            got: h.num_vars(),
        });
    }
    if let Some((m, c)) = h
        .terms()
        .find(|(m, _)| !is_position_monomial(m, n) && !is_momentum_monomial(m, n))
    {
        return Err(KvnError::CrossTerm {
            monomial: single_term(m, c).to_string(),
        });
    }
    let potential = h.filter_terms(|m| is_position_monomial(m, n));
    let kinetic = h.filter_terms(|m| !is_position_monomial(m, n));
    ClassicalHamiltonian::new(n, potential, kinetic)
}

/// `L[f]` for the Liouvillian of `h`.
pub fn liouvillian_apply(
    h: &ClassicalHamiltonian,
    f: &PhasePolynomial,
) -> Result<PhasePolynomial, KvnError> {
    if f.num_vars() != 2 * h.n {
        return Err(KvnError::DimensionMismatch {
            expected: 2 * h.n,
            got: f.num_vars(),
        });
    }
    Ok(poly::liouvillian(&h.total(), f)?)
}

/// `i L` as a first-order differential operator, written in quadratures via
/// `d/dx_k = i P_k`: `i L = sum_k -c_k(X) P_k` where `L = sum_k c_k d/dx_k`.
pub fn liouvillian_operator(h: &ClassicalHamiltonian) -> WeylPolynomial {
    let total = h.total();
    let n = h.n;
    let mut out = WeylPolynomial::zero(2 * n);
    let minus_one = Complex::new(-Rational::one(), Rational::zero());
    for j in 0..n {
        // L = dH/dx_j d/dx_{n+j} - dH/dx_{n+j} d/dx_j
        let pairs = [
            (total.partial_derivative(j).expect("in range"), n + j, Rational::one()),
            (total.partial_derivative(n + j).expect("in range"), j, -Rational::one()),
        ];
        for (coeff, k, sign) in pairs {
            let term = WeylPolynomial::from_positions(&coeff.scale(&sign))
                .mul(&WeylPolynomial::p(2 * n, k))
                .expect("same mode count")
                .scale(&minus_one);
            out = out.add(&term).expect("same mode count");
        }
    }
    out
}

/// One summand `sign * factor(X) * P_mode` of a KvN Hamiltonian.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KvnTerm {
    mode: usize,
    sign: Sign,
    factor: PhasePolynomial,
}

impl KvnTerm {
    /// `mode` is 0-based over the `2n` qumodes. `factor` is a polynomial over
    /// the `2n` qumode positions that must not involve `mode` and has degree
    /// at most 3.
    pub fn new(mode: usize, sign: Sign, factor: PhasePolynomial) -> Result<Self, KvnError> {
        let num_modes = factor.num_vars();
        if mode >= num_modes {
            return Err(KvnError::InvalidTerm(format!(
                "mode {} out of range for {num_modes} qumodes",
                mode + 1
            )));
        }
        if factor.support().contains(&mode) {
            return Err(KvnError::InvalidTerm(format!(
                "factor `{factor}` involves the translated mode {}",
                mode + 1
            )));
        }
        if factor.degree() > MAX_HAMILTONIAN_DEGREE - 1 {
            return Err(KvnError::InvalidTerm(format!(
                "factor `{factor}` has degree {} > 3",
                factor.degree()
            )));
        }
        Ok(KvnTerm { mode, sign, factor })
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn factor(&self) -> &PhasePolynomial {
        &self.factor
    }

    pub fn num_modes(&self) -> usize {
        self.factor.num_vars()
    }

    /// `sign * factor`, the velocity field component of the translated mode.
    pub fn signed_factor(&self) -> PhasePolynomial {
        match self.sign {
            Sign::Plus => self.factor.clone(),
            Sign::Minus => self.factor.neg(),
        }
    }

    /// Degree of the generator `factor · P`.
    pub fn degree(&self) -> u32 {
        self.factor.degree() + 1
    }

    pub fn generator(&self) -> WeylPolynomial {
        WeylPolynomial::from_positions(&self.signed_factor())
            .mul(&WeylPolynomial::p(self.num_modes(), self.mode))
            .expect("same mode count")
    }
}

impl fmt::Display for KvnTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mode={} factor={}", self.sign, self.mode + 1, self.factor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KvnHamiltonian {
    n: usize,
    terms: Vec<KvnTerm>,
}

impl KvnHamiltonian {
    pub fn new(n: usize, terms: Vec<KvnTerm>) -> Result<Self, KvnError> {
        if n == 0 {
            return Err(KvnError::NoDegreesOfFreedom);
        }
        if let Some(t) = terms.iter().find(|t| t.num_modes() != 2 * n) {
            return Err(KvnError::DimensionMismatch {
                expected: 2 * n,
                got: t.num_modes(),
            });
        }
        Ok(KvnHamiltonian { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_modes(&self) -> usize {
        2 * self.n
    }

    pub fn terms(&self) -> &[KvnTerm] {
        &self.terms
    }

    /// True when every generator is at most quadratic.
    pub fn is_quadratic(&self) -> bool {
        self.terms.iter().all(|t| t.degree() <= 2)
    }

    pub fn to_weyl(&self) -> WeylPolynomial {
        self.terms
            .iter()
            .fold(WeylPolynomial::zero(self.num_modes()), |acc, t| {
                acc.add(&t.generator()).expect("same mode count")
            })
    }
}

impl fmt::Display for KvnHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kvn n={} terms={}", self.n, self.terms.len())?;
        for t in &self.terms {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Builds `H_KvN = sum_j dT/dX_{n+j} P_j - dV/dX_j P_{n+j}`, one term per
/// nonzero monomial of each derivative. For each `j` the `P_j` terms come
/// first, then the `P_{n+j}` terms, each in ascending monomial order.
pub fn build_kvn(h: &ClassicalHamiltonian) -> Result<KvnHamiltonian, KvnError> {
    let n = h.n;
    let mut terms = Vec::new();
    for j in 0..n {
        let dt = h.kinetic.partial_derivative(n + j)?;
        for m in dt.monomials() {
            terms.push(KvnTerm::new(j, Sign::Plus, m)?);
        }
        let dv = h.potential.partial_derivative(j)?;
        for m in dv.monomials() {
            terms.push(KvnTerm::new(n + j, Sign::Minus, m)?);
        }
    }
    KvnHamiltonian::new(n, terms)
}

/// Position of a generator in the catalog of elementary KvN exponentials,
/// with the translated mode relabelled as mode 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GeneratorClass {
    /// `c P_k`: constant factor.
    Translation,
    /// `c P_1 X_2^a2 X_3^a3 X_4^a4` with `a2 >= a3 >= a4`.
    Catalog { exponents: [u32; 3] },
}

/// Classifies a single-monomial factor; `None` if it is not a monomial or
/// would need more than three control modes.
pub fn classify_factor(factor: &PhasePolynomial) -> Option<GeneratorClass> {
    if factor.num_terms() != 1 {
        return None;
    }
    let (m, _) = factor.terms().next()?;
    let mut exps: Vec<u32> = m.exponents().iter().copied().filter(|&e| e > 0).collect();
    if exps.is_empty() {
        return Some(GeneratorClass::Translation);
    }
    if exps.len() > 3 || m.degree() > 3 {
        return None;
    }
    exps.sort_unstable_by(|a, b| b.cmp(a));
    exps.resize(3, 0);
    Some(GeneratorClass::Catalog {
        exponents: [exps[0], exps[1], exps[2]],
    })
}

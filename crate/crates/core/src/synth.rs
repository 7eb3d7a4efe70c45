//! Lowering of KvN generators to elementary qumode gates.
//!
//! A term `c X_2^a2 X_3^a3 X_4^a4 P_1` (modes relabelled) with total degree
//! `a = 1 + a2 + a3 + a4` is compiled as follows:
//!
//! * `a = 1`: `exp(-is c P_1) = F_1† D_1(sc) F_1`;
//! * `a = 2`: a single controlled-X, `CX_21(sc)`;
//! * `a = 3, 4`: `F_1† exp(is c X_1 X_2^a2 X_3^a3 X_4^a4) F_1`, where the
//!   inner exponential splits into commuting factors
//!   `exp(is c C(v) (X_1 + h_2 X_2 + h_3 X_3 + h_4 X_4)^a)`, each realised as
//!   `U† exp(is c C(v) X_1^a) U` with `U` a product of controlled-X gates.
//!
//! Gate conventions (`s` real):
//!
//! | kind | token | unitary |
//! |------|-------|---------|
//! | momentum displacement | `D` | `exp(i s X)` |
//! | quadratic phase | `P` | `exp(i s X^2 / 2)` |
//! | cubic phase | `V` | `exp(i s X^3 / 3)` |
//! | quartic phase | `Q4` | `exp(i s X^4)` |
//! | rotation | `R` | `exp(i s (X^2 + P^2) / 2)` |
//! | controlled phase | `CZ` | `exp(i s X_j X_k)` |
//! | controlled X | `CX` | `exp(-i s X_j P_k)`, translates `x_k` by `s x_j` |
//! | Fourier | `F` / `Fdg` | `R(π/2)` up to global phase, and its inverse |

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::kvn::{KvnHamiltonian, KvnTerm};
use crate::poly::{rational_to_f64, PhasePolynomial, Rational};

/// Largest qumode count accepted by the gate-listing parser.
pub const MAX_LISTING_MODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("generator degree {degree} outside the supported range 2..=4")]
    DegreeOutOfRange { degree: u32 },
    #[error("unsupported KvN term `{0}`")]
    UnsupportedTerm(String),
    #[error("invalid gate {gate}: {reason}")]
    InvalidGate { gate: String, reason: String },
    #[error("parameter must be finite, got {0}")]
    NonFinite(f64),
    #[error("number of Trotter steps must be positive")]
    NoSteps,
    #[error("mode count mismatch: {left} vs {right}")]
    ModeMismatch { left: usize, right: usize },
    #[error("gate listing line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One factor `C(v) (sum_i h_i x_i)^a` of the monomial expansion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionTerm {
    pub v: [u32; 3],
    pub coefficient: Rational,
    /// `(h_1, h_2, h_3, h_4)` with `h_1 = 1`, `h_i = a_i - 2 v_i`.
    pub weights: [i64; 4],
}

fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// Expansion of `x_1 x_2^a2 x_3^a3 x_4^a4` into `a`-th powers of linear
/// forms, `a = 1 + a2 + a3 + a4 ∈ {2, 3, 4}`, with
/// `C(v) = (-1)^{v2+v3+v4} C(a2,v2) C(a3,v3) C(a4,v4) / (2^{a-1} a!)`.
///
/// Terms are in lexicographic order of `v`.
pub fn expansion_coefficients(a2: u32, a3: u32, a4: u32) -> Result<Vec<ExpansionTerm>, SynthError> {
    let a = 1 + a2 + a3 + a4;
    if !(2..=4).contains(&a) {
        return Err(SynthError::DegreeOutOfRange { degree: a });
    }
    let a_fact: i64 = (1..=a as i64).product();
    let norm = int(1) / int((1i64 << (a - 1)) * a_fact);
    let mut out = Vec::new();
    for v2 in 0..=a2 {
        for v3 in 0..=a3 {
            for v4 in 0..=a4 {
                let sign = if (v2 + v3 + v4) % 2 == 0 { 1 } else { -1 };
                let c = &norm * int(sign * binomial(a2, v2) * binomial(a3, v3) * binomial(a4, v4));
                out.push(ExpansionTerm {
                    v: [v2, v3, v4],
                    coefficient: c,
                    weights: [
                        1,
                        a2 as i64 - 2 * v2 as i64,
                        a3 as i64 - 2 * v3 as i64,
                        a4 as i64 - 2 * v4 as i64,
                    ],
                })
            }
        }
    }
    Ok(out)
}

/// Every ordered exponent triple `(a2, a3, a4)` with `1 + a2 + a3 + a4 ∈ {2, 3, 4}`.
pub fn admissible_exponents() -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 1..=3u32 {
        for a2 in (0..=total).rev() {
            for a3 in (0..=total - a2).rev() {
                out.push([a2, a3, total - a2 - a3]);
            }
        }
    }
    out
}

/// Checks `sum_v C(v) (sum_i h_i x_i)^a == x_1 x_2^a2 x_3^a3 x_4^a4` as an
/// exact polynomial identity in four variables.
pub fn expansion_identity_holds(a2: u32, a3: u32, a4: u32) -> Result<bool, SynthError> {
    let terms = expansion_coefficients(a2, a3, a4)?;
    let a = 1 + a2 + a3 + a4;
    let mut sum = PhasePolynomial::zero(4);
    for t in &terms {
        let mut linear = PhasePolynomial::zero(4);
        for (i, &h) in t.weights.iter().enumerate() {
            let xi = PhasePolynomial::var(4, i).expect("in range");
            linear = linear.add(&xi.scale(&int(h))).expect("same dimension");
        }
        sum = sum
            .add(&linear.pow(a).scale(&t.coefficient))
            .expect("same dimension");
    }
    let target = PhasePolynomial::monomial(vec![1, a2, a3, a4], Rational::one()).expect("nonempty");
    Ok(sum == target)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    MomentumDisplacement,
    QuadraticPhase,
    CubicPhase,
    QuarticPhase,
    Rotation,
    ControlledZ,
    ControlledX,
    Fourier,
    FourierInverse,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::MomentumDisplacement,
        GateKind::QuadraticPhase,
        GateKind::CubicPhase,
        GateKind::QuarticPhase,
        GateKind::Rotation,
        GateKind::ControlledZ,
        GateKind::ControlledX,
        GateKind::Fourier,
        GateKind::FourierInverse,
    ];

    pub fn token(self) -> &'static str {
        match self {
            GateKind::MomentumDisplacement => "D",
            GateKind::QuadraticPhase => "P",
            GateKind::CubicPhase => "V",
            GateKind::QuarticPhase => "Q4",
            GateKind::Rotation => "R",
            GateKind::ControlledZ => "CZ",
            GateKind::ControlledX => "CX",
            GateKind::Fourier => "F",
            GateKind::FourierInverse => "Fdg",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::ControlledZ | GateKind::ControlledX => 2,
            _ => 1,
        }
    }

    pub fn has_param(self) -> bool {
        !matches!(self, GateKind::Fourier | GateKind::FourierInverse)
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| format!("unknown gate kind {s:?}"))
    }
}

/// Elementary gate. Mode indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Displacement { mode: usize, s: f64 },
    QuadraticPhase { mode: usize, s: f64 },
    CubicPhase { mode: usize, s: f64 },
    QuarticPhase { mode: usize, s: f64 },
    Rotation { mode: usize, s: f64 },
    ControlledZ { a: usize, b: usize, s: f64 },
    /// Translates `x_target` by `s * x_control`.
    ControlledX { control: usize, target: usize, s: f64 },
    Fourier { mode: usize },
    FourierInverse { mode: usize },
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Displacement { .. } => GateKind::MomentumDisplacement,
            Gate::QuadraticPhase { .. } => GateKind::QuadraticPhase,
            Gate::CubicPhase { .. } => GateKind::CubicPhase,
            Gate::QuarticPhase { .. } => GateKind::QuarticPhase,
            Gate::Rotation { .. } => GateKind::Rotation,
            Gate::ControlledZ { .. } => GateKind::ControlledZ,
            Gate::ControlledX { .. } => GateKind::ControlledX,
            Gate::Fourier { .. } => GateKind::Fourier,
            Gate::FourierInverse { .. } => GateKind::FourierInverse,
        }
    }

    pub fn modes(&self) -> Vec<usize> {
        match *self {
            Gate::Displacement { mode, .. }
            | Gate::QuadraticPhase { mode, .. }
            | Gate::CubicPhase { mode, .. }
            | Gate::QuarticPhase { mode, .. }
            | Gate::Rotation { mode, .. }
            | Gate::Fourier { mode }
            | Gate::FourierInverse { mode } => vec![mode],
            Gate::ControlledZ { a, b, .. } => vec![a, b],
            Gate::ControlledX { control, target, .. } => vec![control, target],
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            Gate::Displacement { s, .. }
            | Gate::QuadraticPhase { s, .. }
            | Gate::CubicPhase { s, .. }
            | Gate::QuarticPhase { s, .. }
            | Gate::Rotation { s, .. }
            | Gate::ControlledZ { s, .. }
            | Gate::ControlledX { s, .. } => Some(s),
            Gate::Fourier { .. } | Gate::FourierInverse { .. } => None,
        }
    }

    /// Builds a gate from its kind, modes and parameter, validating arity.
    pub fn from_parts(kind: GateKind, modes: &[usize], param: Option<f64>) -> Result<Self, SynthError> {
        let bad = |reason: String| SynthError::InvalidGate {
            gate: kind.token().to_string(),
            reason,
        };
        if modes.len() != kind.arity() {
            return Err(bad(format!("expected {} mode(s), got {}", kind.arity(), modes.len())));
        }
        let s = match (kind.has_param(), param) {
            (true, Some(s)) => s,
            (false, None) => 0.0,
            (true, None) => return Err(bad("missing parameter".into())),
            (false, Some(_)) => return Err(bad("takes no parameter".into())),
        };
        let m = modes[0];
        let gate = match kind {
            GateKind::MomentumDisplacement => Gate::Displacement { mode: m, s },
            GateKind::QuadraticPhase => Gate::QuadraticPhase { mode: m, s },
            GateKind::CubicPhase => Gate::CubicPhase { mode: m, s },
            GateKind::QuarticPhase => Gate::QuarticPhase { mode: m, s },
            GateKind::Rotation => Gate::Rotation { mode: m, s },
            GateKind::ControlledZ => Gate::ControlledZ { a: m, b: modes[1], s },
            GateKind::ControlledX => Gate::ControlledX {
                control: m,
                target: modes[1],
                s,
            },
            GateKind::Fourier => Gate::Fourier { mode: m },
            GateKind::FourierInverse => Gate::FourierInverse { mode: m },
        };
        gate.validate(usize::MAX)?;
        Ok(gate)
    }

    /// Checks finiteness, distinct modes on two-mode gates, and mode range.
    pub fn validate(&self, num_modes: usize) -> Result<(), SynthError> {
        if let Some(s) = self.param() {
            if !s.is_finite() {
                return Err(SynthError::NonFinite(s));
            }
        }
        let modes = self.modes();
        if modes.len() == 2 && modes[0] == modes[1] {
            return Err(SynthError::InvalidGate {
                gate: self.to_string(),
                reason: "two-mode gate needs distinct modes".into(),
            });
        }
        if let Some(&m) = modes.iter().find(|&&m| m >= num_modes) {
            return Err(SynthError::InvalidGate {
                gate: self.to_string(),
                reason: format!("mode {} out of range for {num_modes} qumodes", m + 1),
            });
        }
        Ok(())
    }

    /// The inverse gate.
    pub fn inverse(&self) -> Gate {
        let mut g = *self;
        match &mut g {
            Gate::Displacement { s, .. }
            | Gate::QuadraticPhase { s, .. }
            | Gate::CubicPhase { s, .. }
            | Gate::QuarticPhase { s, .. }
            | Gate::Rotation { s, .. }
            | Gate::ControlledZ { s, .. }
            | Gate::ControlledX { s, .. } => *s = -*s,
            Gate::Fourier { mode } => return Gate::FourierInverse { mode: *mode },
            Gate::FourierInverse { mode } => return Gate::Fourier { mode: *mode },
        }
        g
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let modes: Vec<String> = self.modes().iter().map(|m| (m + 1).to_string()).collect();
        write!(f, "{} {}", self.kind().token(), modes.join(","))?;
        if let Some(s) = self.param() {
            // Debug formatting of f64 is the shortest string that round-trips.
            write!(f, " {s:?}")?;
        }
        Ok(())
    }
}

/// Ordered gate list; the first gate is applied first.
#[derive(Clone, Debug, PartialEq)]
pub struct GateSequence {
    num_modes: usize,
    gates: Vec<Gate>,
}

impl GateSequence {
    pub fn new(num_modes: usize) -> Self {
        GateSequence {
            num_modes,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(num_modes: usize, gates: Vec<Gate>) -> Result<Self, SynthError> {
        let mut seq = Self::new(num_modes);
        for g in gates {
            seq.push(g)?;
        }
        Ok(seq)
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), SynthError> {
        gate.validate(self.num_modes)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn append(&mut self, other: &GateSequence) -> Result<(), SynthError> {
        if other.num_modes != self.num_modes {
            return Err(SynthError::ModeMismatch {
                left: self.num_modes,
                right: other.num_modes,
            });
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    /// Reversed sequence of inverse gates.
    pub fn inverse(&self) -> GateSequence {
        GateSequence {
            num_modes: self.num_modes,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    pub fn count_kind(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind() == kind).count()
    }

    /// Parses the listing produced by [`fmt::Display`]: a `modes N` header
    /// followed by one `KIND m[,m] [param]` line per gate, with 1-based modes.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut seq: Option<GateSequence> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| SynthError::Parse {
                line: line_no,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some(s) = seq.as_mut() else {
                match fields.as_slice() {
                    ["modes", n] => {
                        let n: usize = n.parse().map_err(|_| err(format!("bad mode count {n:?}")))?;
                        if n == 0 || n > MAX_LISTING_MODES {
                            return Err(err(format!("mode count must be in 1..={MAX_LISTING_MODES}")));
                        }
                        seq = Some(GateSequence::new(n));
                        continue;
                    }
                    _ => return Err(err("expected `modes N` header".into())),
                }
            };
            let (kind, modes, param) = match fields.as_slice() {
                [k, m] => (*k, *m, None),
                [k, m, p] => (*k, *m, Some(*p)),
                _ => return Err(err(format!("expected `KIND modes [param]`, got {line:?}"))),
            };
            let kind: GateKind = kind.parse().map_err(err)?;
            let modes = modes
                .split(',')
                .map(|m| match m.parse::<usize>() {
                    Ok(m) if m >= 1 => Ok(m - 1),
                    _ => Err(err(format!("bad mode index {m:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let param = param
                .map(|p| p.parse::<f64>().map_err(|_| err(format!("bad parameter {p:?}"))))
                .transpose()?;
            let gate = Gate::from_parts(kind, &modes, param).map_err(|e| err(e.to_string()))?;
            s.push(gate).map_err(|e| err(e.to_string()))?;
        }
        seq.ok_or_else(|| SynthError::Parse {
            line: 0,
            message: "missing `modes N` header".into(),
        })
    }
}

impl fmt::Display for GateSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "modes {}", self.num_modes)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Upper bound on the gates emitted for a single-monomial term with `e`
/// expansion terms: a Fourier pair plus, per expansion term, up to three
/// controlled-X conjugation pairs around one phase gate.
pub fn gate_count_bound(expansion_terms: usize) -> usize {
    2 + 7 * expansion_terms
}

/// Gates implementing `exp(-i s g(X) P_k)` for the term `g P_k`,
/// `g = sign · factor`. A zero step gives an empty sequence.
pub fn synthesize_term(term: &KvnTerm, s: f64) -> Result<GateSequence, SynthError> {
    if !s.is_finite() {
        return Err(SynthError::NonFinite(s));
    }
    let num_modes = term.num_modes();
    let mut seq = GateSequence::new(num_modes);
    if s == 0.0 {
        return Ok(seq);
    }
    let target = term.mode();
    for mono in term.signed_factor().monomials() {
        let (m, c) = mono.terms().next().expect("single term");
        let strength = s * rational_to_f64(c);
        // control modes by decreasing exponent, ties by mode index
        let mut controls: Vec<(usize, u32)> = m
            .exponents()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(j, &e)| (j, e))
            .collect();
        controls.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        if controls.len() > 3 || m.degree() > 3 {
            return Err(SynthError::UnsupportedTerm(term.to_string()));
        }
        match m.degree() {
            0 => {
                seq.push(Gate::Fourier { mode: target })?;
                seq.push(Gate::Displacement {
                    mode: target,
                    s: strength,
                })?;
                seq.push(Gate::FourierInverse { mode: target })?;
            }
            1 => seq.push(Gate::ControlledX {
                control: controls[0].0,
                target,
                s: strength,
            })?,
            _ => lower_monomial(&mut seq, target, &controls, strength)?,
        }
    }
    Ok(seq)
}

fn lower_monomial(
    seq: &mut GateSequence,
    target: usize,
    controls: &[(usize, u32)],
    strength: f64,
) -> Result<(), SynthError> {
    let mut exps = [0u32; 3];
    let mut modes = [None; 3];
    for (i, &(mode, e)) in controls.iter().enumerate() {
        exps[i] = e;
        modes[i] = Some(mode);
    }
    let degree = 1 + exps.iter().sum::<u32>();
    let terms = expansion_coefficients(exps[0], exps[1], exps[2])?;
    seq.push(Gate::Fourier { mode: target })?;
    for term in &terms {
        let theta = strength * rational_to_f64(&term.coefficient);
        let shifts: Vec<(usize, f64)> = term.weights[1..]
            .iter()
            .zip(modes)
            .filter(|(&h, _)| h != 0)
            .map(|(&h, m)| (m.expect("nonzero weight has a mode"), h as f64))
            .collect();
        for &(control, h) in &shifts {
            seq.push(Gate::ControlledX { control, target, s: h })?;
        }
        seq.push(match degree {
            2 => Gate::QuadraticPhase {
                mode: target,
                s: 2.0 * theta,
            },
            3 => Gate::CubicPhase {
                mode: target,
                s: 3.0 * theta,
            },
            _ => Gate::QuarticPhase {
                mode: target,
                s: theta,
            },
        })?;
        for &(control, h) in shifts.iter().rev() {
            seq.push(Gate::ControlledX { control, target, s: -h })?;
        }
    }
    seq.push(Gate::FourierInverse { mode: target })?;
    Ok(())
}

/// `CX_jk(s)` from a controlled phase conjugated by Fourier gates on the
/// target: `exp(-i s X_j P_k) = F_k† CZ_jk(s) F_k`.
pub fn cx_via_cz(num_modes: usize, control: usize, target: usize, s: f64) -> Result<GateSequence, SynthError> {
    GateSequence::from_gates(
        num_modes,
        vec![
            Gate::Fourier { mode: target },
            Gate::ControlledZ {
                a: control,
                b: target,
                s,
            },
            Gate::FourierInverse { mode: target },
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrotterOrder {
    /// `S_1(dt) = prod_a exp(-i dt G_a)` in term order.
    First,
    /// Symmetric (Strang) step: forward sweep at `dt/2`, then reversed sweep at `dt/2`.
    Second,
}

impl TryFrom<u32> for TrotterOrder {
    type Error = String;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(TrotterOrder::First),
            2 => Ok(TrotterOrder::Second),
            _ => Err(format!("Trotter order must be 1 or 2, got {v}")),
        }
    }
}

/// One product-formula step of length `dt`.
pub fn trotter_step(h: &KvnHamiltonian, dt: f64, order: TrotterOrder) -> Result<GateSequence, SynthError> {
    if !dt.is_finite() {
        return Err(SynthError::NonFinite(dt));
    }
    let mut seq = GateSequence::new(h.num_modes());
    match order {
        TrotterOrder::First => {
            for t in h.terms() {
                seq.append(&synthesize_term(t, dt)?)?;
            }
        }
        TrotterOrder::Second => {
            for t in h.terms() {
                seq.append(&synthesize_term(t, dt / 2.0)?)?;
            }
            for t in h.terms().iter().rev() {
                seq.append(&synthesize_term(t, dt / 2.0)?)?;
            }
        }
    }
    Ok(seq)
}

/// `n_steps` repetitions of [`trotter_step`] with `dt = t / n_steps`.
pub fn trotter_circuit(
    h: &KvnHamiltonian,
    t: f64,
    n_steps: usize,
    order: TrotterOrder,
) -> Result<GateSequence, SynthError> {
    if !t.is_finite() {
        return Err(SynthError::NonFinite(t));
    }
    if n_steps == 0 {
        return Err(SynthError::NoSteps);
    }
    let mut circuit = GateSequence::new(h.num_modes());
    if t == 0.0 {
        return Ok(circuit);
    }
    let step = trotter_step(h, t / n_steps as f64, order)?;
    circuit.gates.reserve(step.len() * n_steps);
    for _ in 0..n_steps {
        circuit.append(&step)?;
    }
    Ok(circuit)
}

impl ExpansionTerm {
    pub fn coefficient_f64(&self) -> f64 {
        rational_to_f64(&self.coefficient)
    }

    pub fn is_trivial(&self) -> bool {
        self.coefficient.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kvn::{build_kvn, validate_separation, Sign};
    use crate::poly::ratio;

    fn p(s: &str, n: usize) -> PhasePolynomial {
        PhasePolynomial::parse(s, n).unwrap()
    }

    #[test]
    fn expansion_examples() {
        let t = expansion_coefficients(1, 0, 0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].coefficient.clone(), t[0].weights), (ratio(1, 4), [1, 1, 0, 0]));
        assert_eq!((t[1].coefficient.clone(), t[1].weights), (ratio(-1, 4), [1, -1, 0, 0]));

        let t = expansion_coefficients(2, 0, 0).unwrap();
        let got: Vec<_> = t.iter().map(|e| (e.coefficient.clone(), e.weights[1])).collect();
        assert_eq!(
            got,
            vec![(ratio(1, 24), 2), (ratio(-1, 12), 0), (ratio(1, 24), -2)]
        );

        let t = expansion_coefficients(1, 1, 0).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t
            .iter()
            .all(|e| e.coefficient == ratio(1, 24) || e.coefficient == ratio(-1, 24)));
        assert!(expansion_identity_holds(1, 1, 0).unwrap());

        assert!(matches!(
            expansion_coefficients(0, 0, 0),
            Err(SynthError::DegreeOutOfRange { degree: 1 })
        ));
        assert!(expansion_coefficients(2, 1, 1).is_err());
    }

    #[test]
    fn expansion_terms_follow_closed_form() {
        for [a2, a3, a4] in admissible_exponents() {
            for t in expansion_coefficients(a2, a3, a4).unwrap() {
                for (i, (&a, &v)) in [a2, a3, a4].iter().zip(&t.v).enumerate() {
                    assert_eq!(t.weights[i + 1], a as i64 - 2 * v as i64);
                }
                assert_eq!(t.weights[0], 1);
            }
        }
    }

    #[test]
    fn admissible_set() {
        let all = admissible_exponents();
        assert_eq!(all.len(), 19);
        assert!(all.iter().all(|e| (1..=3).contains(&e.iter().sum::<u32>())));
        for canonical in [[1, 0, 0], [2, 0, 0], [1, 1, 0], [3, 0, 0], [2, 1, 0], [1, 1, 1]] {
            assert!(all.contains(&canonical));
        }
    }

    #[test]
    fn harmonic_term_is_one_controlled_x() {
        let term = KvnTerm::new(0, Sign::Plus, p("x2", 2)).unwrap();
        let seq = synthesize_term(&term, 0.25).unwrap();
        assert_eq!(
            seq.gates(),
            &[Gate::ControlledX {
                control: 1,
                target: 0,
                s: 0.25
            }]
        );
        let term = KvnTerm::new(1, Sign::Minus, p("x1", 2)).unwrap();
        let seq = synthesize_term(&term, 0.25).unwrap();
        assert_eq!(
            seq.gates(),
            &[Gate::ControlledX {
                control: 0,
                target: 1,
                s: -0.25
            }]
        );
        assert!(synthesize_term(&term, 0.0).unwrap().is_empty());
        assert!(synthesize_term(&term, f64::NAN).is_err());
    }

    #[test]
    fn constant_factor_is_conjugated_displacement() {
        let term = KvnTerm::new(1, Sign::Minus, p("3", 2)).unwrap();
        let seq = synthesize_term(&term, 0.5).unwrap();
        assert_eq!(
            seq.gates(),
            &[
                Gate::Fourier { mode: 1 },
                Gate::Displacement { mode: 1, s: -1.5 },
                Gate::FourierInverse { mode: 1 }
            ]
        );
    }

    #[test]
    fn cubic_term_shape() {
        let term = KvnTerm::new(1, Sign::Minus, p("1/10*x1^3", 2)).unwrap();
        let seq = synthesize_term(&term, 0.1).unwrap();
        assert_eq!(seq.gates().first(), Some(&Gate::Fourier { mode: 1 }));
        assert_eq!(seq.gates().last(), Some(&Gate::FourierInverse { mode: 1 }));
        assert_eq!(seq.count_kind(GateKind::QuarticPhase), 4);
        assert_eq!(seq.count_kind(GateKind::ControlledX), 8);
        assert!(seq.len() <= gate_count_bound(4));
        // (3,0,0): weights 3, 1, -1, -3
        let shifts: Vec<f64> = seq
            .gates()
            .iter()
            .filter_map(|g| match g {
                Gate::ControlledX { s, .. } => Some(*s),
                _ => None,
            })
            .collect();
        assert_eq!(shifts, vec![3.0, -3.0, 1.0, -1.0, -1.0, 1.0, -3.0, 3.0]);
    }

    #[test]
    fn zero_weight_conjugations_are_skipped() {
        let term = KvnTerm::new(0, Sign::Plus, p("x2^2", 2)).unwrap();
        let seq = synthesize_term(&term, 0.3).unwrap();
        // F, [CX V CX], [V], [CX V CX], Fdg
        assert_eq!(seq.len(), 2 + 3 + 1 + 3);
        assert_eq!(seq.count_kind(GateKind::CubicPhase), 3);
    }

    #[test]
    fn gate_counts_respect_bound() {
        for [a2, a3, a4] in admissible_exponents() {
            let factor = PhasePolynomial::monomial(vec![0u32, a2, a3, a4], ratio(1, 1)).unwrap();
            let term = KvnTerm::new(0, Sign::Plus, factor).unwrap();
            let seq = synthesize_term(&term, 0.2).unwrap();
            let e = expansion_coefficients(a2, a3, a4).unwrap().len();
            assert!(seq.len() <= gate_count_bound(e), "{a2},{a3},{a4}");
        }
    }

    #[test]
    fn cx_via_cz_shape() {
        let seq = cx_via_cz(2, 0, 1, 1.0).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(cx_via_cz(2, 1, 1, 1.0).is_err());
    }

    #[test]
    fn trotter_layout() {
        let h = validate_separation(&p("1/2*x1^2 + 1/2*x2^2", 2), 1).unwrap();
        let kvn = build_kvn(&h).unwrap();
        let c = trotter_circuit(&kvn, 1.0, 4, TrotterOrder::First).unwrap();
        assert_eq!(c.len(), 8);
        assert!(c
            .gates()
            .iter()
            .all(|g| matches!(g, Gate::ControlledX { s, .. } if s.abs() == 0.25)));
        let c2 = trotter_circuit(&kvn, 1.0, 4, TrotterOrder::Second).unwrap();
        assert_eq!(c2.len(), 16);
        assert_eq!(
            &c2.gates()[..4],
            &[
                Gate::ControlledX { control: 1, target: 0, s: 0.125 },
                Gate::ControlledX { control: 0, target: 1, s: -0.125 },
                Gate::ControlledX { control: 0, target: 1, s: -0.125 },
                Gate::ControlledX { control: 1, target: 0, s: 0.125 },
            ]
        );
        assert!(trotter_circuit(&kvn, 0.0, 3, TrotterOrder::First).unwrap().is_empty());
        assert!(matches!(
            trotter_circuit(&kvn, 1.0, 0, TrotterOrder::First),
            Err(SynthError::NoSteps)
        ));
        assert!(trotter_circuit(&kvn, f64::INFINITY, 1, TrotterOrder::First).is_err());
    }

    #[test]
    fn listing_round_trip() {
        let h = validate_separation(&p("1/2*x1^2 + 1/2*x2^2 + 1/40*x1^4", 2), 1).unwrap();
        let kvn = build_kvn(&h).unwrap();
        let c = trotter_circuit(&kvn, 0.7, 3, TrotterOrder::Second).unwrap();
        let text = c.to_string();
        let back = GateSequence::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_string(), text);
    }

    #[test]
    fn listing_format() {
        let seq = GateSequence::from_gates(
            3,
            vec![
                Gate::ControlledX { control: 1, target: 0, s: 0.1 },
                Gate::Fourier { mode: 2 },
                Gate::QuarticPhase { mode: 2, s: -1e-20 },
            ],
        )
        .unwrap();
        assert_eq!(seq.to_string(), "modes 3\nCX 2,1 0.1\nF 3\nQ4 3 -1e-20\n");
    }

    #[test]
    fn listing_rejects_malformed_input() {
        for bad in [
            "",
            "CX 1,2 0.1",
            "modes 0",
            "modes 2\nCX 1,1 0.5",
            "modes 2\nCX 1,3 0.5",
            "modes 2\nCX 1 0.5",
            "modes 2\nF 1 0.5",
            "modes 2\nD 1",
            "modes 2\nD 1 NaN",
            "modes 2\nD 1 inf",
            "modes 2\nD 0 1.0",
            "modes 2\nXX 1 1.0",
            "modes 2\nD 1 1.0 extra",
        ] {
            assert!(GateSequence::parse(bad).is_err(), "accepted {bad:?}");
        }
        let ok = GateSequence::parse("# comment\n\nmodes 1\n  D 1 2.5  \n").unwrap();
        assert_eq!(ok.gates(), &[Gate::Displacement { mode: 0, s: 2.5 }]);
    }

    #[test]
    fn inverse_reverses_and_negates() {
        let seq = synthesize_term(&KvnTerm::new(0, Sign::Plus, p("x2*x3", 3)).unwrap(), 0.4).unwrap();
        let inv = seq.inverse();
        assert_eq!(inv.len(), seq.len());
        assert_eq!(inv.gates()[0], seq.gates().last().unwrap().inverse());
        assert_eq!(inv.inverse(), seq);
    }
}

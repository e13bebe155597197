//! Phase bookkeeping for three-phase unbalanced networks.
//!
//! Buses and lines carry an ordered subset of the phases `a`, `b`, `c`.
//! Vectors and matrices attached to them ([`PhaseVector`], [`PhaseMatrix`])
//! are stored in fixed 3-slot arrays but addressed by [`Phase`], so that
//! moving a quantity between elements with different phase sets is an
//! explicit [`PhaseMatrix::project`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Integer label used in the rotation exponent: a→0, b→1, c→2.
    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "A" => Ok(Phase::A),
            "b" | "B" => Ok(Phase::B),
            "c" | "C" => Ok(Phase::C),
            other => Err(format!("unknown phase '{other}'")),
        }
    }
}

/// Non-empty ordered subset of `{a, b, c}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn new(phases: &[Phase]) -> Option<PhaseSet> {
        let mut mask = 0u8;
        for p in phases {
            let bit = 1 << p.index();
            if mask & bit != 0 {
                return None;
            }
            mask |= bit;
        }
        (mask != 0).then_some(PhaseSet(mask))
    }

    pub fn single(p: Phase) -> PhaseSet {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersection(self, other: PhaseSet) -> Option<PhaseSet> {
        let m = self.0 & other.0;
        (m != 0).then_some(PhaseSet(m))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> + Clone {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` inside the ordered set.
    pub fn position(self, p: Phase) -> Option<usize> {
        self.contains(p)
            .then(|| (self.0 & ((1 << p.index()) - 1)).count_ones() as usize)
    }

    pub fn phase_at(self, pos: usize) -> Phase {
        self.iter().nth(pos).expect("phase position out of range")
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PhaseSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let phases = s
            .chars()
            .map(|c| c.to_string().parse::<Phase>())
            .collect::<Result<Vec<_>, _>>()?;
        let set = PhaseSet::new(&phases).ok_or_else(|| format!("invalid phase set '{s}'"))?;
        // canonical order only
        if set.to_string() != s.to_ascii_lowercase() {
            return Err(format!("phase set '{s}' must be written in a-b-c order"));
        }
        Ok(set)
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `α = e^{-i2π/3}`.
pub fn alpha() -> C64 {
    C64::from_polar(1.0, -2.0 * PI / 3.0)
}

/// `α^k` for any integer exponent (negative exponents give conjugates).
pub fn alpha_pow(k: i32) -> C64 {
    C64::from_polar(1.0, -2.0 * PI * f64::from(k) / 3.0)
}

/// `α^{φ−ψ}` using the integer phase labels.
pub fn rotation(phi: Phase, psi: Phase) -> C64 {
    alpha_pow(phi.index() as i32 - psi.index() as i32)
}

/// Complex vector indexed by a phase set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseVector {
    phases: PhaseSet,
    data: [C64; 3],
}

impl PhaseVector {
    pub fn zeros(phases: PhaseSet) -> Self {
        PhaseVector {
            phases,
            data: [ZERO; 3],
        }
    }

    pub fn from_fn(phases: PhaseSet, mut f: impl FnMut(Phase) -> C64) -> Self {
        let mut v = Self::zeros(phases);
        for (k, p) in phases.iter().enumerate() {
            v.data[k] = f(p);
        }
        v
    }

    pub fn phases(&self) -> PhaseSet {
        self.phases
    }

    pub fn get(&self, p: Phase) -> C64 {
        let k = self
            .phases
            .position(p)
            .unwrap_or_else(|| panic!("phase {p} not in {}", self.phases));
        self.data[k]
    }

    /// Entry for `p`, zero when the phase is absent.
    pub fn get_or_zero(&self, p: Phase) -> C64 {
        self.phases.position(p).map_or(ZERO, |k| self.data[k])
    }

    pub fn set(&mut self, p: Phase, value: C64) {
        let k = self
            .phases
            .position(p)
            .unwrap_or_else(|| panic!("phase {p} not in {}", self.phases));
        self.data[k] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, C64)> + '_ {
        self.phases.iter().zip(self.data.iter().copied())
    }

    /// Re-index onto `target`: shared phases are copied, others are zero.
    pub fn project(&self, target: PhaseSet) -> PhaseVector {
        PhaseVector::from_fn(target, |p| self.get_or_zero(p))
    }

    pub fn map(&self, mut f: impl FnMut(C64) -> C64) -> PhaseVector {
        PhaseVector::from_fn(self.phases, |p| f(self.get(p)))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for PhaseVector {
    type Output = PhaseVector;
    fn add(self, rhs: PhaseVector) -> PhaseVector {
        assert_eq!(self.phases, rhs.phases, "phase sets differ");
        PhaseVector::from_fn(self.phases, |p| self.get(p) + rhs.get(p))
    }
}

impl Sub for PhaseVector {
    type Output = PhaseVector;
    fn sub(self, rhs: PhaseVector) -> PhaseVector {
        assert_eq!(self.phases, rhs.phases, "phase sets differ");
        PhaseVector::from_fn(self.phases, |p| self.get(p) - rhs.get(p))
    }
}

impl AddAssign for PhaseVector {
    fn add_assign(&mut self, rhs: PhaseVector) {
        *self = *self + rhs;
    }
}

/// Square complex matrix indexed by (row phase, column phase).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseMatrix {
    phases: PhaseSet,
    data: [[C64; 3]; 3],
}

impl PhaseMatrix {
    pub fn zeros(phases: PhaseSet) -> Self {
        PhaseMatrix {
            phases,
            data: [[ZERO; 3]; 3],
        }
    }

    pub fn from_fn(phases: PhaseSet, mut f: impl FnMut(Phase, Phase) -> C64) -> Self {
        let mut m = Self::zeros(phases);
        for (r, pr) in phases.iter().enumerate() {
            for (c, pc) in phases.iter().enumerate() {
                m.data[r][c] = f(pr, pc);
            }
        }
        m
    }

    /// Diagonal matrix with `v` on the diagonal.
    pub fn from_diag(v: &PhaseVector) -> Self {
        Self::from_fn(v.phases(), |r, c| if r == c { v.get(r) } else { ZERO })
    }

    /// `a b^H`.
    pub fn outer(a: &PhaseVector, b: &PhaseVector) -> Self {
        assert_eq!(a.phases(), b.phases(), "phase sets differ");
        Self::from_fn(a.phases(), |r, c| a.get(r) * b.get(c).conj())
    }

    pub fn phases(&self) -> PhaseSet {
        self.phases
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn get(&self, row: Phase, col: Phase) -> C64 {
        let (r, c) = self.pos(row, col);
        self.data[r][c]
    }

    pub fn get_or_zero(&self, row: Phase, col: Phase) -> C64 {
        match (self.phases.position(row), self.phases.position(col)) {
            (Some(r), Some(c)) => self.data[r][c],
            _ => ZERO,
        }
    }

    pub fn set(&mut self, row: Phase, col: Phase, value: C64) {
        let (r, c) = self.pos(row, col);
        self.data[r][c] = value;
    }

    fn pos(&self, row: Phase, col: Phase) -> (usize, usize) {
        match (self.phases.position(row), self.phases.position(col)) {
            (Some(r), Some(c)) => (r, c),
            _ => panic!("entry ({row},{col}) not in {}", self.phases),
        }
    }

    /// Entry by position inside the phase set.
    pub fn at(&self, r: usize, c: usize) -> C64 {
        self.data[r][c]
    }

    pub fn diag(&self) -> PhaseVector {
        PhaseVector::from_fn(self.phases, |p| self.get(p, p))
    }

    pub fn adjoint(&self) -> PhaseMatrix {
        Self::from_fn(self.phases, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> PhaseMatrix {
        Self::from_fn(self.phases, |r, c| self.get(c, r))
    }

    pub fn scale(&self, k: C64) -> PhaseMatrix {
        Self::from_fn(self.phases, |r, c| self.get(r, c) * k)
    }

    pub fn trace(&self) -> C64 {
        self.phases.iter().map(|p| self.get(p, p)).sum()
    }

    pub fn mul_vec(&self, v: &PhaseVector) -> PhaseVector {
        assert_eq!(self.phases, v.phases(), "phase sets differ");
        PhaseVector::from_fn(self.phases, |r| {
            self.phases.iter().map(|c| self.get(r, c) * v.get(c)).sum()
        })
    }

    /// Re-index onto `target`: shared entries are kept, others are zero.
    /// Covers both restriction (`v_i^{Φ_ij}`) and zero padding.
    pub fn project(&self, target: PhaseSet) -> PhaseMatrix {
        Self::from_fn(target, |r, c| self.get_or_zero(r, c))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().map(|(_, _, z)| z.norm()).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Phase, Phase, C64)> + '_ {
        self.phases
            .iter()
            .flat_map(move |r| self.phases.iter().map(move |c| (r, c, self.get(r, c))))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.entries()
            .all(|(r, c, z)| (z - self.get(c, r).conj()).norm() <= tol)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.entries().all(|(r, c, z)| (z - self.get(c, r)).norm() <= tol)
    }
}

impl Add for PhaseMatrix {
    type Output = PhaseMatrix;
    fn add(self, rhs: PhaseMatrix) -> PhaseMatrix {
        assert_eq!(self.phases, rhs.phases, "phase sets differ");
        PhaseMatrix::from_fn(self.phases, |r, c| self.get(r, c) + rhs.get(r, c))
    }
}

impl Sub for PhaseMatrix {
    type Output = PhaseMatrix;
    fn sub(self, rhs: PhaseMatrix) -> PhaseMatrix {
        assert_eq!(self.phases, rhs.phases, "phase sets differ");
        PhaseMatrix::from_fn(self.phases, |r, c| self.get(r, c) - rhs.get(r, c))
    }
}

impl AddAssign for PhaseMatrix {
    fn add_assign(&mut self, rhs: PhaseMatrix) {
        *self = *self + rhs;
    }
}

impl Neg for PhaseMatrix {
    type Output = PhaseMatrix;
    fn neg(self) -> PhaseMatrix {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for PhaseMatrix {
    type Output = PhaseMatrix;
    fn mul(self, rhs: PhaseMatrix) -> PhaseMatrix {
        assert_eq!(self.phases, rhs.phases, "phase sets differ");
        PhaseMatrix::from_fn(self.phases, |r, c| {
            self.phases.iter().map(|k| self.get(r, k) * rhs.get(k, c)).sum()
        })
    }
}

/// The balanced-rotation matrix `γ = β β^H`, `β = [1, α, α²]ᵀ`, restricted
/// to `phases`. Entry `(φ, ψ)` equals `α^{φ−ψ}`.
pub fn gamma_submatrix(phases: PhaseSet) -> PhaseMatrix {
    let beta = |p: Phase| alpha_pow(p.index() as i32);
    PhaseMatrix::from_fn(phases, |r, c| beta(r) * beta(c).conj())
}

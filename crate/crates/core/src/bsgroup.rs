//! `BS(1,m) = ⟨a_1, a_2 | a_1^{-1} a_2 a_1 = a_2^m⟩` in affine normal form.
//!
//! An element is the affine map `x ↦ m^e·x + num/m^d` of `Z[1/m]`, with
//! `a_1 = (x ↦ x/m)` and `a_2 = (x ↦ x + 1)`, and products compose as maps:
//! `(g·h)(x) = g(h(x))`. The representation is faithful, so equality of
//! normalized triples is equality in the group.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::Rational;
use crate::{Error, Result};

/// Generator ids used by every `BS(1,m)` word.
pub const A1: usize = 0;
pub const A2: usize = 1;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawElement", into = "RawElement")]
pub struct BsElement {
    m: u64,
    e: i64,
    num: BigInt,
    d: u32,
}

#[derive(Serialize, Deserialize)]
struct RawElement {
    m: u64,
    e: i64,
    num: String,
    d: u32,
}

impl TryFrom<RawElement> for BsElement {
    type Error = Error;
    fn try_from(raw: RawElement) -> Result<Self> {
        let num: BigInt = raw
            .num
            .parse()
            .map_err(|_| Error::Malformed(format!("bad numerator {:?}", raw.num)))?;
        BsElement::new(raw.m, raw.e, num, raw.d)
    }
}

impl From<BsElement> for RawElement {
    fn from(g: BsElement) -> Self {
        RawElement {
            m: g.m,
            e: g.e,
            num: g.num.to_string(),
            d: g.d,
        }
    }
}

impl fmt::Debug for BsElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(e={}, num={}, d={})", self.e, self.num, self.d)
    }
}

impl fmt::Display for BsElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x -> {}^{}*x + {}/{}^{}", self.m, self.e, self.num, self.m, self.d)
    }
}

fn check_base(m: u64) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("base m = {m} must be at least 2")));
    }
    Ok(())
}

fn m_pow(m: u64, k: u32) -> BigInt {
    num_traits::pow(BigInt::from(m), k as usize)
}

impl BsElement {
    /// Builds `x ↦ m^e x + num/m^d` and normalizes it.
    pub fn new(m: u64, e: i64, num: BigInt, d: u32) -> Result<Self> {
        check_base(m)?;
        Ok(BsElement { m, e, num, d }.normalized())
    }

    fn normalized(mut self) -> Self {
        let mb = BigInt::from(self.m);
        if self.num.is_zero() {
            self.d = 0;
            return self;
        }
        while self.d > 0 {
            let (q, r) = self.num.div_rem(&mb);
            if !r.is_zero() {
                break;
            }
            self.num = q;
            self.d -= 1;
        }
        self
    }

    pub fn identity(m: u64) -> Result<Self> {
        BsElement::new(m, 0, BigInt::zero(), 0)
    }

    /// `a_1 = (x ↦ x/m)`.
    pub fn a1(m: u64) -> Result<Self> {
        BsElement::new(m, -1, BigInt::zero(), 0)
    }

    /// `a_2 = (x ↦ x + 1)`.
    pub fn a2(m: u64) -> Result<Self> {
        BsElement::new(m, 0, BigInt::one(), 0)
    }

    /// `a_1^i a_2^l`, i.e. `x ↦ (x + l)/m^i` for `i ≥ 0`.
    pub fn a1_pow_a2_pow(m: u64, i: u32, l: i64) -> Result<Self> {
        BsElement::new(m, -(i as i64), BigInt::from(l), i)
    }

    pub fn base(&self) -> u64 {
        self.m
    }

    pub fn dilation_exponent(&self) -> i64 {
        self.e
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn denominator_exponent(&self) -> u32 {
        self.d
    }

    pub fn is_identity(&self) -> bool {
        self.e == 0 && self.num.is_zero()
    }

    /// The translation part `num/m^d` as a rational.
    pub fn translation(&self) -> Rational {
        BigRational::new(self.num.clone(), m_pow(self.m, self.d))
    }

    /// Evaluates the affine map at a rational point.
    pub fn apply(&self, x: &Rational) -> Rational {
        let scale = if self.e >= 0 {
            BigRational::from_integer(m_pow(self.m, self.e as u32))
        } else {
            BigRational::new(BigInt::one(), m_pow(self.m, self.e.unsigned_abs() as u32))
        };
        scale * x + self.translation()
    }

    /// Group product `self · other = self ∘ other`.
    pub fn mul(&self, other: &BsElement) -> Result<BsElement> {
        if self.m != other.m {
            return Err(Error::BaseMismatch {
                left: self.m,
                right: other.m,
            });
        }
        let m = self.m;
        let e = self
            .e
            .checked_add(other.e)
            .ok_or_else(|| Error::Overflow("dilation exponent".into()))?;
        // m^{e1} · num2/m^{d2}
        let (num_a, d_a) = if self.e >= 0 {
            (&other.num * m_pow(m, self.e as u32), other.d)
        } else {
            (other.num.clone(), other.d + self.e.unsigned_abs() as u32)
        };
        let (num_b, d_b) = (&self.num, self.d);
        let d = d_a.max(d_b);
        let num = num_a * m_pow(m, d - d_a) + num_b * m_pow(m, d - d_b);
        Ok(BsElement { m, e, num, d }.normalized())
    }

    pub fn inverse(&self) -> BsElement {
        // x ↦ m^{-e} x - m^{-e} num/m^d
        let m = self.m;
        let (num, d) = if self.e <= 0 {
            (-(&self.num) * m_pow(m, self.e.unsigned_abs() as u32), self.d)
        } else {
            (-(&self.num), self.d + self.e as u32)
        };
        BsElement { m, e: -self.e, num, d }.normalized()
    }

    pub fn pow(&self, k: i64) -> BsElement {
        let mut base = if k < 0 { self.inverse() } else { self.clone() };
        let mut acc = BsElement {
            m: self.m,
            e: 0,
            num: BigInt::zero(),
            d: 0,
        };
        let mut k = k.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base).expect("same base");
            }
            base = base.mul(&base).expect("same base");
            k >>= 1;
        }
        acc
    }

    /// The word `a_1^d a_2^num a_1^{-e-d}`, which evaluates back to `self`.
    pub fn canonical_word(&self) -> Result<Word> {
        let num = self
            .num
            .to_i64()
            .ok_or_else(|| Error::Overflow(format!("numerator {} does not fit a word exponent", self.num)))?;
        let tail = -(self.e) - self.d as i64;
        Ok(Word::new(vec![(A1, self.d as i64), (A2, num), (A1, tail)]))
    }
}

/// A freely reduced word `g_{i_1}^{r_1} ⋯ g_{i_k}^{r_k}` in numbered generators.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<(usize, i64)>", into = "Vec<(usize, i64)>")]
pub struct Word {
    letters: Vec<(usize, i64)>,
}

impl From<Vec<(usize, i64)>> for Word {
    fn from(letters: Vec<(usize, i64)>) -> Self {
        Word::new(letters)
    }
}

impl From<Word> for Vec<(usize, i64)> {
    fn from(w: Word) -> Self {
        w.letters
    }
}

impl Word {
    /// Freely reduces: merges adjacent powers of one generator and drops zero exponents.
    pub fn new(letters: impl IntoIterator<Item = (usize, i64)>) -> Self {
        let mut out: Vec<(usize, i64)> = Vec::new();
        for (g, r) in letters {
            if r == 0 {
                continue;
            }
            match out.last_mut() {
                Some((last, exp)) if *last == g => {
                    *exp += r;
                    if *exp == 0 {
                        out.pop();
                    }
                }
                _ => out.push((g, r)),
            }
        }
        Word { letters: out }
    }

    pub fn empty() -> Self {
        Word::default()
    }

    pub fn generator(g: usize) -> Self {
        Word::new([(g, 1)])
    }

    pub fn letters(&self) -> &[(usize, i64)] {
        &self.letters
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Total exponent length `Σ |r_j|`.
    pub fn length(&self) -> u64 {
        self.letters.iter().map(|(_, r)| r.unsigned_abs()).sum()
    }

    pub fn inverse(&self) -> Word {
        Word::new(self.letters.iter().rev().map(|&(g, r)| (g, -r)))
    }

    pub fn concat(&self, other: &Word) -> Word {
        Word::new(self.letters.iter().chain(&other.letters).copied())
    }

    pub fn max_generator(&self) -> Option<usize> {
        self.letters.iter().map(|(g, _)| *g).max()
    }

    /// Evaluates a word over `a_1, a_2` in `BS(1,m)`.
    pub fn eval_bs(&self, m: u64) -> Result<BsElement> {
        let mut acc = BsElement::identity(m)?;
        let a1 = BsElement::a1(m)?;
        let a2 = BsElement::a2(m)?;
        for &(g, r) in &self.letters {
            let letter = match g {
                A1 => a1.pow(r),
                A2 => a2.pow(r),
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "generator {other} is not a generator of BS(1,m)"
                    )))
                }
            };
            acc = acc.mul(&letter)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e");
        }
        for (k, (g, r)) in self.letters.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            if *r == 1 {
                write!(f, "a{}", g + 1)?;
            } else {
                write!(f, "a{}^{}", g + 1, r)?;
            }
        }
        Ok(())
    }
}

/// A finite presentation: named generators and freely reduced relators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub generators: Vec<String>,
    pub relators: Vec<Word>,
}

fn conj_relator(a: usize, b: usize, m: i64) -> Word {
    // a^{-1} b a b^{-m}
    Word::new([(a, -1), (b, 1), (a, 1), (b, -m)])
}

impl Presentation {
    pub fn new(generators: Vec<String>, relators: Vec<Word>) -> Result<Self> {
        let p = Presentation { generators, relators };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.relators.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::Malformed(format!("relator {i} is empty")));
            }
            if Word::new(w.letters.iter().copied()) != *w {
                return Err(Error::Malformed(format!("relator {i} is not freely reduced")));
            }
            if w.max_generator().is_some_and(|g| g >= self.generators.len()) {
                return Err(Error::Malformed(format!("relator {i} uses an undeclared generator")));
            }
        }
        Ok(())
    }

    /// `⟨a_1, a_2 | a_1^{-1} a_2 a_1 a_2^{-m}⟩`.
    pub fn baumslag_solitar(m: u64) -> Result<Self> {
        check_base(m)?;
        Presentation::new(
            vec!["a1".into(), "a2".into()],
            vec![conj_relator(A1, A2, m as i64)],
        )
    }

    /// `H_{n,m}`: `a_i^{-1} a_{i+1} a_i = a_{i+1}^m` cyclically in `i`.
    pub fn higman(n: usize, m: u64) -> Result<Self> {
        check_base(m)?;
        if n < 2 {
            return Err(Error::InvalidParameter("H_{n,m} needs n >= 2".into()));
        }
        let generators = (1..=n).map(|i| format!("a{i}")).collect();
        let relators = (0..n).map(|i| conj_relator(i, (i + 1) % n, m as i64)).collect();
        Presentation::new(generators, relators)
    }

    /// `(Z/4Z) ⋉ H_{4,m}` with `t a_i t^{-1} = a_{i+1}`, `t^4 = e`, and
    /// `a_1^{-1} a_2 a_1 = a_2^m`; `t` is generator 4.
    pub fn higman_semidirect(m: u64) -> Result<Self> {
        check_base(m)?;
        let t = 4;
        let mut relators = vec![Word::new([(t, 4)])];
        for i in 0..4 {
            relators.push(Word::new([(t, 1), (i, 1), (t, -1), ((i + 1) % 4, -1)]));
        }
        relators.push(conj_relator(0, 1, m as i64));
        Presentation::new(
            vec!["a1".into(), "a2".into(), "a3".into(), "a4".into(), "t".into()],
            relators,
        )
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".into();
        }
        w.letters()
            .iter()
            .map(|&(g, r)| {
                let name = self.generators.get(g).cloned().unwrap_or_else(|| format!("g{g}"));
                if r == 1 {
                    name
                } else {
                    format!("{name}^{r}")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Presentation = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("presentation serializes")
    }
}

/// Default cap on the number of elements a Følner-set construction may produce.
pub const DEFAULT_FOLNER_BUDGET: u64 = 10_000_000;

/// `|F_j| = 2j · 2M·m^{2j}`, if it fits in a `u64`.
pub fn folner_size(j: u32, big_m: u64, m: u64) -> Option<u64> {
    let rows = 2u64.checked_mul(j as u64)?;
    let cols = m
        .checked_pow(2 * j)?
        .checked_mul(big_m)?
        .checked_mul(2)?;
    rows.checked_mul(cols)
}

/// `F_j = {a_1^i a_2^l : 0 ≤ i < 2j, 0 ≤ l < 2M m^{2j}}`, row by row.
pub fn folner_set(j: u32, big_m: u64, m: u64, budget: u64) -> Result<Vec<BsElement>> {
    check_base(m)?;
    if j == 0 || big_m == 0 {
        return Err(Error::InvalidParameter("Følner index j and M must be positive".into()));
    }
    let size = folner_size(j, big_m, m);
    match size {
        Some(s) if s <= budget => {}
        _ => {
            return Err(Error::BudgetExceeded {
                what: "Følner set",
                needed: size.map_or_else(|| "overflow".into(), |s| s.to_string()),
                budget,
            })
        }
    }
    let cols = 2 * big_m * m.pow(2 * j);
    let mut out = Vec::with_capacity(size.unwrap() as usize);
    for i in 0..2 * j {
        for l in 0..cols {
            out.push(BsElement::a1_pow_a2_pow(m, i, l as i64)?);
        }
    }
    Ok(out)
}

/// `a_1^i a_2^l` for `i < rows`, `l < cols`: the same box shape with free sizes.
pub fn box_set(m: u64, rows: u32, cols: u64) -> Result<Vec<BsElement>> {
    let mut out = Vec::with_capacity(rows as usize * cols as usize);
    for i in 0..rows {
        for l in 0..cols {
            out.push(BsElement::a1_pow_a2_pow(m, i, l as i64)?);
        }
    }
    Ok(out)
}

/// All normalized elements with `|e| ≤ e_max`, `d ≤ d_max`, `|num| ≤ num_max`.
pub fn elements_in_box(m: u64, e_max: i64, d_max: u32, num_max: i64) -> Result<Vec<BsElement>> {
    check_base(m)?;
    let mut out = Vec::new();
    for e in -e_max..=e_max {
        for d in 0..=d_max {
            for num in -num_max..=num_max {
                if d > 0 && (num == 0 || num.rem_euclid(m as i64) == 0) {
                    continue;
                }
                out.push(BsElement::new(m, e, BigInt::from(num), d)?);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FolnerReport {
    /// `|sF Δ F|`.
    pub sym_diff: usize,
    /// `|(F_prev^{-1} F) \ F|`.
    pub nesting_excess: usize,
    pub size: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub boundary_ratio: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub nesting_ratio: Rational,
    /// `|sF Δ F| ≤ |F|/j`.
    pub boundary_pass: bool,
    /// `|(F_prev^{-1} F) \ F| ≤ η|F|`.
    pub nesting_pass: bool,
}

/// Boundary and nesting diagnostics of a Følner level `F = F_j` with predecessor `F_prev`.
pub fn folner_diagnostics(
    f_prev: &[BsElement],
    f: &[BsElement],
    s: &BsElement,
    j: u32,
    eta: &Rational,
) -> Result<FolnerReport> {
    if f.is_empty() {
        return Err(Error::Empty("Følner set"));
    }
    if j == 0 {
        return Err(Error::InvalidParameter("level j must be positive".into()));
    }
    let set: HashSet<&BsElement> = f.iter().collect();
    let translated: HashSet<BsElement> = f.iter().map(|g| s.mul(g)).collect::<Result<_>>()?;
    let sym_diff = translated.iter().filter(|g| !set.contains(g)).count()
        + set.iter().filter(|g| !translated.contains(**g)).count();

    let mut excess: HashSet<BsElement> = HashSet::new();
    for a in f_prev {
        let a_inv = a.inverse();
        for b in f {
            let p = a_inv.mul(b)?;
            if !set.contains(&p) {
                excess.insert(p);
            }
        }
    }
    let size = set.len();
    let denom = BigInt::from(size);
    let boundary_ratio = BigRational::new(BigInt::from(sym_diff), denom.clone());
    let nesting_ratio = BigRational::new(BigInt::from(excess.len()), denom);
    let boundary_pass = boundary_ratio <= BigRational::new(BigInt::one(), BigInt::from(j));
    let nesting_pass = &nesting_ratio <= eta;
    Ok(FolnerReport {
        sym_diff,
        nesting_excess: excess.len(),
        size,
        boundary_ratio,
        nesting_ratio,
        boundary_pass,
        nesting_pass,
    })
}

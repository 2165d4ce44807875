//! Sofic approximations as data: a finite domain of group elements (or words)
//! mapped to permutations of one degree `n`, and the check of approximate
//! multiplicativity and freeness.
//!
//! Besides explicit tables there are lazy backings: the arithmetic model `ψ`
//! of `BS(1,m)` on `Z/nZ`, the amplification of another approximation, and a
//! deliberately corrupted variant used to exercise verifiers.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, mod_inv, mod_pow, mod_pow_signed, reduce_i128};
use crate::bsgroup::{BsElement, Word, A1, A2};
use crate::rational::Rational;
use crate::{Error, HammingValue, Permutation, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyKind {
    Element,
    Word,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Key {
    Element(BsElement),
    Word(Word),
}

impl Key {
    pub fn kind(&self) -> KeyKind {
        match self {
            Key::Element(_) => KeyKind::Element,
            Key::Word(_) => KeyKind::Word,
        }
    }

    /// The empty word and the identity element are trivial; every other key is not.
    pub fn is_identity(&self) -> bool {
        match self {
            Key::Element(g) => g.is_identity(),
            Key::Word(w) => w.is_empty(),
        }
    }

    /// The key of the product `self · other`, if the kinds agree.
    pub fn product(&self, other: &Key) -> Result<Key> {
        match (self, other) {
            (Key::Element(g), Key::Element(h)) => Ok(Key::Element(g.mul(h)?)),
            (Key::Word(v), Key::Word(w)) => Ok(Key::Word(v.concat(w))),
            _ => Err(Error::InvalidParameter("keys of different kinds".into())),
        }
    }

    pub fn inverse(&self) -> Key {
        match self {
            Key::Element(g) => Key::Element(g.inverse()),
            Key::Word(w) => Key::Word(w.inverse()),
        }
    }
}

impl std::fmt::Display for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Key::Element(g) => match g.canonical_word() {
                Ok(w) => write!(f, "{w}"),
                Err(_) => write!(f, "{g:?}"),
            },
            Key::Word(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Clone, Debug)]
enum Backing {
    Table(HashMap<Key, Permutation>),
    /// `ψ(g)(x) = m^e x − num·m^{−d} mod n`.
    Arithmetic { m: u64 },
    /// `r` disjoint copies of `inner` followed by fixed points.
    Amplified { inner: Box<SoficApprox> },
    /// `inner`, post-composed on `[lo, hi)` with a key-dependent scramble.
    Scrambled {
        inner: Box<SoficApprox>,
        lo: usize,
        hi: usize,
        seed: u64,
    },
    /// `σ ∘ inner(g) ∘ σ^{-1}`.
    Conjugated {
        inner: Box<SoficApprox>,
        sigma: Permutation,
    },
}

#[derive(Clone, Debug)]
pub struct SoficApprox {
    n: usize,
    kind: KeyKind,
    domain: Vec<Key>,
    backing: Backing,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    degree: usize,
    key_kind: KeyKind,
    entries: Vec<(Key, Permutation)>,
}

fn stable_hash(key: &Key, seed: u64) -> u64 {
    // FNV-1a over the JSON form keeps scrambles reproducible across builds.
    let text = serde_json::to_string(key).expect("keys serialize");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

impl SoficApprox {
    /// An explicit table; the domain is the key set in the given order.
    pub fn from_table(n: usize, kind: KeyKind, entries: Vec<(Key, Permutation)>) -> Result<Self> {
        let mut domain = Vec::with_capacity(entries.len());
        let mut table = HashMap::with_capacity(entries.len());
        for (key, p) in entries {
            if key.kind() != kind {
                return Err(Error::InvalidParameter(format!("key {key} is not of kind {kind:?}")));
            }
            if p.degree() != n {
                return Err(Error::DegreeMismatch {
                    left: n,
                    right: p.degree(),
                });
            }
            if table.insert(key.clone(), p).is_some() {
                return Err(Error::Malformed(format!("duplicate key {key}")));
            }
            domain.push(key);
        }
        Ok(SoficApprox {
            n,
            kind,
            domain,
            backing: Backing::Table(table),
        })
    }

    /// Replaces the declared domain `S`. Lazy backings accept any domain they can evaluate.
    pub fn with_domain(mut self, keys: Vec<Key>) -> Result<Self> {
        for key in &keys {
            if key.kind() != self.kind {
                return Err(Error::InvalidParameter(format!("key {key} is not of kind {:?}", self.kind)));
            }
            if !self.contains(key) {
                return Err(Error::MissingKey(key.to_string()));
            }
        }
        self.domain = keys;
        Ok(self)
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn key_kind(&self) -> KeyKind {
        self.kind
    }

    pub fn domain(&self) -> &[Key] {
        &self.domain
    }

    /// Whether `φ` has an image for `key`.
    pub fn contains(&self, key: &Key) -> bool {
        if key.kind() != self.kind {
            return false;
        }
        match &self.backing {
            Backing::Table(t) => t.contains_key(key),
            Backing::Arithmetic { m } => match key {
                Key::Element(g) => g.base() == *m,
                Key::Word(w) => w.letters().iter().all(|&(g, _)| g == A1 || g == A2),
            },
            Backing::Amplified { inner }
            | Backing::Scrambled { inner, .. }
            | Backing::Conjugated { inner, .. } => inner.contains(key),
        }
    }

    /// `φ(key)`, synthesized on demand for lazy backings.
    pub fn permutation(&self, key: &Key) -> Result<Permutation> {
        if !self.contains(key) {
            return Err(Error::MissingKey(key.to_string()));
        }
        match &self.backing {
            Backing::Table(t) => Ok(t[key].clone()),
            Backing::Arithmetic { m } => {
                let g = match key {
                    Key::Element(g) => g.clone(),
                    Key::Word(w) => w.eval_bs(*m)?,
                };
                Ok(psi(&g, self.n))
            }
            Backing::Amplified { inner } => {
                let p = inner.permutation(key)?;
                let k = inner.n;
                let r = self.n / k;
                let mut image: Vec<usize> = (0..self.n).collect();
                for c in 0..r {
                    for x in 0..k {
                        image[c * k + x] = c * k + p.apply(x);
                    }
                }
                Ok(Permutation::from_image_unchecked(image))
            }
            Backing::Scrambled { inner, lo, hi, seed } => {
                let p = inner.permutation(key)?;
                if key.is_identity() || hi <= lo {
                    return Ok(p);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(key, *seed));
                let block = Permutation::random(hi - lo, &mut rng);
                let image = p
                    .image()
                    .iter()
                    .map(|&y| if (*lo..*hi).contains(&y) { lo + block.apply(y - lo) } else { y })
                    .collect();
                Ok(Permutation::from_image_unchecked(image))
            }
            Backing::Conjugated { inner, sigma } => {
                let p = inner.permutation(key)?;
                sigma.compose(&p)?.compose(&sigma.inverse())
            }
        }
    }

    pub fn element(&self, g: &BsElement) -> Result<Permutation> {
        self.permutation(&Key::Element(g.clone()))
    }

    fn generator_key(&self, gen: usize) -> Result<Key> {
        match self.kind {
            KeyKind::Word => Ok(Key::Word(Word::generator(gen))),
            KeyKind::Element => {
                let m = self.base().ok_or_else(|| Error::MissingKey(format!("generator a{}", gen + 1)))?;
                match gen {
                    A1 => Ok(Key::Element(BsElement::a1(m)?)),
                    A2 => Ok(Key::Element(BsElement::a2(m)?)),
                    _ => Err(Error::MissingKey(format!("generator a{}", gen + 1))),
                }
            }
        }
    }

    /// The base `m` of element keys, if any key or backing fixes it.
    fn base(&self) -> Option<u64> {
        match &self.backing {
            Backing::Arithmetic { m } => Some(*m),
            Backing::Amplified { inner }
            | Backing::Scrambled { inner, .. }
            | Backing::Conjugated { inner, .. } => inner.base(),
            Backing::Table(_) => self.domain.iter().find_map(|k| match k {
                Key::Element(g) => Some(g.base()),
                Key::Word(_) => None,
            }),
        }
    }

    /// Extends `φ` to words: `φ(g_1^{r_1} ⋯ g_k^{r_k}) = φ(g_1)^{r_1} ∘ ⋯ ∘ φ(g_k)^{r_k}`.
    pub fn eval_word(&self, w: &Word) -> Result<Permutation> {
        let mut acc = Permutation::identity(self.n);
        for &(gen, r) in w.letters() {
            let key = self.generator_key(gen)?;
            let letter = if self.contains(&key) {
                self.permutation(&key)?.pow(r)
            } else {
                let inv = key.inverse();
                if !self.contains(&inv) {
                    return Err(Error::MissingKey(key.to_string()));
                }
                self.permutation(&inv)?.pow(-r)
            };
            acc = acc.compose(&letter)?;
        }
        Ok(acc)
    }

    /// `r = ⌊target_n / n⌋` disjoint copies on `{0..rn−1}`, identity on the rest.
    pub fn amplify(&self, target_n: usize) -> Result<SoficApprox> {
        if target_n < self.n || self.n == 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot amplify degree {} to {target_n}",
                self.n
            )));
        }
        Ok(SoficApprox {
            n: target_n,
            kind: self.kind,
            domain: self.domain.clone(),
            backing: Backing::Amplified {
                inner: Box::new(self.clone()),
            },
        })
    }

    /// Corrupts every non-identity image on the points `[lo, hi)` with an
    /// independent pseudo-random permutation per key.
    pub fn scramble_block(&self, lo: usize, hi: usize, seed: u64) -> Result<SoficApprox> {
        if lo > hi || hi > self.n {
            return Err(Error::InvalidParameter(format!("block [{lo}, {hi}) out of range")));
        }
        Ok(SoficApprox {
            n: self.n,
            kind: self.kind,
            domain: self.domain.clone(),
            backing: Backing::Scrambled {
                inner: Box::new(self.clone()),
                lo,
                hi,
                seed,
            },
        })
    }

    /// `g ↦ σ ∘ φ(g) ∘ σ^{-1}`.
    pub fn conjugate(&self, sigma: &Permutation) -> Result<SoficApprox> {
        if sigma.degree() != self.n {
            return Err(Error::DegreeMismatch {
                left: self.n,
                right: sigma.degree(),
            });
        }
        Ok(SoficApprox {
            n: self.n,
            kind: self.kind,
            domain: self.domain.clone(),
            backing: Backing::Conjugated {
                inner: Box::new(self.clone()),
                sigma: sigma.clone(),
            },
        })
    }

    /// Tabulates the current domain.
    pub fn materialize(&self) -> Result<SoficApprox> {
        let entries = self
            .domain
            .par_iter()
            .map(|k| Ok((k.clone(), self.permutation(k)?)))
            .collect::<Result<Vec<_>>>()?;
        SoficApprox::from_table(self.n, self.kind, entries)
    }

    /// JSON export of the domain: `{degree, key_kind, entries: [[key, image], ...]}`.
    pub fn to_json(&self) -> Result<String> {
        let entries = self
            .domain
            .iter()
            .map(|k| Ok((k.clone(), self.permutation(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let json = TableJson {
            degree: self.n,
            key_kind: self.kind,
            entries,
        };
        Ok(serde_json::to_string(&json)?)
    }

    pub fn from_json(s: &str) -> Result<SoficApprox> {
        let t: TableJson = serde_json::from_str(s)?;
        SoficApprox::from_table(t.degree, t.key_kind, t.entries)
    }
}

/// A serializable description of an approximation: explicit tables are
/// written out, lazy backings are written as their parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelDescription {
    Table {
        degree: usize,
        key_kind: KeyKind,
        entries: Vec<(Key, Permutation)>,
    },
    Arithmetic {
        degree: usize,
        m: u64,
        key_kind: KeyKind,
        domain: Vec<Key>,
    },
    Amplified {
        degree: usize,
        inner: Box<ModelDescription>,
    },
    Scrambled {
        lo: usize,
        hi: usize,
        seed: u64,
        inner: Box<ModelDescription>,
    },
    Conjugated {
        sigma: Permutation,
        inner: Box<ModelDescription>,
    },
}

impl SoficApprox {
    pub fn describe(&self) -> ModelDescription {
        match &self.backing {
            Backing::Table(t) => ModelDescription::Table {
                degree: self.n,
                key_kind: self.kind,
                entries: self.domain.iter().map(|k| (k.clone(), t[k].clone())).collect(),
            },
            Backing::Arithmetic { m } => ModelDescription::Arithmetic {
                degree: self.n,
                m: *m,
                key_kind: self.kind,
                domain: self.domain.clone(),
            },
            Backing::Amplified { inner } => ModelDescription::Amplified {
                degree: self.n,
                inner: Box::new(inner.describe()),
            },
            Backing::Scrambled { inner, lo, hi, seed } => ModelDescription::Scrambled {
                lo: *lo,
                hi: *hi,
                seed: *seed,
                inner: Box::new(inner.describe()),
            },
            Backing::Conjugated { inner, sigma } => ModelDescription::Conjugated {
                sigma: sigma.clone(),
                inner: Box::new(inner.describe()),
            },
        }
    }

    pub fn from_description(d: &ModelDescription) -> Result<SoficApprox> {
        match d {
            ModelDescription::Table {
                degree,
                key_kind,
                entries,
            } => SoficApprox::from_table(*degree, *key_kind, entries.clone()),
            ModelDescription::Arithmetic {
                degree,
                m,
                key_kind,
                domain,
            } => {
                let base = match key_kind {
                    KeyKind::Element => arithmetic_bs_approx(*degree, *m)?,
                    KeyKind::Word => arithmetic_bs_word_approx(*degree, *m)?,
                };
                base.with_domain(domain.clone())
            }
            ModelDescription::Amplified { degree, inner } => {
                SoficApprox::from_description(inner)?.amplify(*degree)
            }
            ModelDescription::Scrambled { lo, hi, seed, inner } => {
                SoficApprox::from_description(inner)?.scramble_block(*lo, *hi, *seed)
            }
            ModelDescription::Conjugated { sigma, inner } => {
                SoficApprox::from_description(inner)?.conjugate(sigma)
            }
        }
    }
}

/// `ψ(g)` on `Z/nZ`.
fn psi(g: &BsElement, n: usize) -> Permutation {
    let nn = n as u64;
    if nn <= 1 {
        return Permutation::identity(n);
    }
    let m = g.base();
    let mult = mod_pow_signed(m, g.dilation_exponent(), nn).expect("base is a unit");
    let num = g.numerator().mod_floor(&BigInt::from(nn)).to_u64().expect("reduced mod n");
    let inv_md = mod_pow(mod_inv(m, nn).expect("base is a unit"), g.denominator_exponent() as u64, nn);
    let shift = crate::arith::mul_mod(num, inv_md, nn);
    let image = (0..nn)
        .map(|x| {
            let y = crate::arith::mul_mod(mult, x, nn);
            ((y + nn - shift) % nn) as usize
        })
        .collect();
    Permutation::from_image_unchecked(image)
}

/// The arithmetic model `ψ: BS(1,m) → Sym(Z/nZ)` with `ψ(a_1)x = m^{−1}x`, `ψ(a_2)x = x − 1`.
/// The domain starts as `{a_1, a_2}`; use [`SoficApprox::with_domain`] to widen it.
pub fn arithmetic_bs_approx(n: usize, m: u64) -> Result<SoficApprox> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("base m = {m} must be at least 2")));
    }
    if n == 0 || gcd(m, n as u64) != 1 {
        return Err(Error::NotCoprime { a: m, b: n as u64 });
    }
    Ok(SoficApprox {
        n,
        kind: KeyKind::Element,
        domain: vec![Key::Element(BsElement::a1(m)?), Key::Element(BsElement::a2(m)?)],
        backing: Backing::Arithmetic { m },
    })
}

/// `ψ` with word keys, so words over `a_1, a_2` can be queried directly.
pub fn arithmetic_bs_word_approx(n: usize, m: u64) -> Result<SoficApprox> {
    let mut psi = arithmetic_bs_approx(n, m)?;
    psi.kind = KeyKind::Word;
    psi.domain = vec![Key::Word(Word::generator(A1)), Key::Word(Word::generator(A2))];
    Ok(psi)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoficReport {
    pub degree: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub delta: Rational,
    /// Max of `d_h(φ(g)φ(h), φ(gh))` over `g, h, gh ∈ S`.
    pub max_defect: HammingValue,
    pub defect_witness: Option<(Key, Key)>,
    /// Min of `d_h(φ(g), id)` over `g ∈ S \ {e}`.
    pub min_displacement: HammingValue,
    pub displacement_witness: Option<Key>,
    pub triples_checked: usize,
    /// No triple `(g, h, gh)` lies in `S`, so the defect bound holds vacuously.
    pub vacuous: bool,
    pub pass: bool,
}

/// Checks `max_defect < δ` and `min_displacement > 1 − δ` over the domain of `φ`.
pub fn check_sofic(phi: &SoficApprox, delta: &Rational) -> Result<SoficReport> {
    if phi.domain.is_empty() {
        return Err(Error::Empty("sofic approximation domain"));
    }
    let n = phi.n;
    let perms: Vec<Permutation> = phi
        .domain
        .par_iter()
        .map(|k| phi.permutation(k))
        .collect::<Result<_>>()?;
    let index: HashMap<&Key, usize> = phi.domain.iter().enumerate().map(|(i, k)| (k, i)).collect();

    // (defect numerator, triples, witness) per left factor
    let per_g: Vec<(usize, usize, Option<(usize, usize)>)> = (0..phi.domain.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (0usize, 0usize, None);
            for (j, h) in phi.domain.iter().enumerate() {
                let Ok(gh) = phi.domain[i].product(h) else { continue };
                let Some(&l) = index.get(&gh) else { continue };
                best.1 += 1;
                let (pg, ph, pgh) = (perms[i].image(), perms[j].image(), perms[l].image());
                let bad = (0..n).filter(|&x| pg[ph[x]] != pgh[x]).count();
                if best.2.is_none() || bad > best.0 {
                    best.0 = bad;
                    best.2 = Some((i, j));
                }
            }
            best
        })
        .collect();

    let triples_checked = per_g.iter().map(|t| t.1).sum();
    let mut max_defect = HammingValue::zero(n);
    let mut defect_witness = None;
    for (bad, _, w) in &per_g {
        if let Some((i, j)) = w {
            if defect_witness.is_none() || *bad > max_defect.numerator {
                max_defect = HammingValue::new(*bad, n);
                defect_witness = Some((phi.domain[*i].clone(), phi.domain[*j].clone()));
            }
        }
    }

    let mut min_displacement = HammingValue::new(n, n);
    let mut displacement_witness = None;
    for (k, p) in phi.domain.iter().zip(&perms) {
        if k.is_identity() {
            continue;
        }
        let d = p.displacement();
        if displacement_witness.is_none() || d.numerator < min_displacement.numerator {
            min_displacement = d;
            displacement_witness = Some(k.clone());
        }
    }

    let one_minus = crate::rational::ratio(1, 1) - delta;
    let pass = max_defect.to_rational() < *delta && min_displacement.to_rational() > one_minus;
    Ok(SoficReport {
        degree: n,
        delta: delta.clone(),
        max_defect,
        defect_witness,
        min_displacement,
        displacement_witness,
        triples_checked,
        vacuous: triples_checked == 0,
        pass,
    })
}

/// Affine data of `ψ(w)(x) = m^a x + b mod n`, and the predicted number of fixed points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineData {
    pub a: i64,
    pub b: u64,
    pub fixed_points: u64,
}

/// Computes `(a, b)` of `ψ(w)` letter by letter and counts solutions of `(m^a − 1)x ≡ −b (mod n)`.
pub fn affine_fixed_points(w: &Word, m: u64, n: u64) -> Result<AffineData> {
    if n == 0 || gcd(m, n) != 1 {
        return Err(Error::NotCoprime { a: m, b: n });
    }
    // (a, b) ∘ (a', b') = (a + a', m^a b' + b)
    let (mut a, mut b) = (0i64, 0u64);
    for &(gen, r) in w.letters() {
        let (la, lb) = match gen {
            A1 => (-r, 0),
            A2 => (0, reduce_i128(-(r as i128), n)),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "generator {other} is not a generator of BS(1,m)"
                )))
            }
        };
        let ma = mod_pow_signed(m, a, n).expect("unit");
        b = (crate::arith::mul_mod(ma, lb, n) + b) % n;
        a = a
            .checked_add(la)
            .ok_or_else(|| Error::Overflow("dilation exponent".into()))?;
    }
    let big_a = (mod_pow_signed(m, a, n).expect("unit") + n - 1) % n;
    let g = gcd(big_a, n);
    let rhs = (n - b % n) % n;
    let fixed_points = if rhs % g == 0 { g } else { 0 };
    Ok(AffineData { a, b, fixed_points })
}

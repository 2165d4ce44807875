//! Permutations of `{0..n-1}` and the normalized Hamming metric.
//!
//! Composition follows `(p∘q)(i) = p(q(i))` everywhere in the crate.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rational::Rational;
use crate::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Permutation {
    image: Vec<usize>,
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let image = Vec::<usize>::deserialize(d)?;
        Permutation::from_image(image).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.image)
    }
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            image: (0..n).collect(),
        }
    }

    pub fn from_image(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for (i, &v) in image.iter().enumerate() {
            if v >= n {
                return Err(Error::NotAPermutation(format!("image[{i}] = {v} out of range")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::NotAPermutation(format!("value {v} occurs twice")));
            }
        }
        Ok(Permutation { image })
    }

    /// Builds the product of the given disjoint cycles on `n` points.
    pub fn from_cycles(n: usize, cycles: &[&[usize]]) -> Result<Self> {
        let mut image: Vec<usize> = (0..n).collect();
        for cycle in cycles {
            for (k, &a) in cycle.iter().enumerate() {
                let b = cycle[(k + 1) % cycle.len()];
                if a >= n || b >= n {
                    return Err(Error::NotAPermutation(format!("cycle point out of range for n = {n}")));
                }
                image[a] = b;
            }
        }
        Permutation::from_image(image)
    }

    /// `x ↦ (x + shift) mod n`.
    pub fn rotation(n: usize, shift: i64) -> Self {
        let s = shift.rem_euclid(n.max(1) as i64) as usize;
        Permutation {
            image: (0..n).map(|x| (x + s) % n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut image: Vec<usize> = (0..n).collect();
        image.shuffle(rng);
        Permutation { image }
    }

    /// Caller guarantees `image` is a bijection of `{0..image.len()-1}`.
    pub(crate) fn from_image_unchecked(image: Vec<usize>) -> Self {
        debug_assert!(Permutation::from_image(image.clone()).is_ok());
        Permutation { image }
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.image.len()
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn into_image(self) -> Vec<usize> {
        self.image
    }

    /// `self ∘ other`, i.e. `other` acts first.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        check_degree(self, other)?;
        Ok(Permutation {
            image: other.image.iter().map(|&i| self.image[i]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.degree()];
        for (i, &v) in self.image.iter().enumerate() {
            inv[v] = i;
        }
        Permutation { image: inv }
    }

    /// `self^k` for any integer `k`, by repeated squaring.
    pub fn pow(&self, k: i64) -> Permutation {
        let mut base = if k < 0 { self.inverse() } else { self.clone() };
        let mut e = k.unsigned_abs();
        let mut acc = Permutation::identity(self.degree());
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&base).expect("same degree");
            }
            base = base.compose(&base).expect("same degree");
            e >>= 1;
        }
        acc
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn hamming(&self, other: &Permutation) -> Result<HammingValue> {
        check_degree(self, other)?;
        let differ = self
            .image
            .iter()
            .zip(&other.image)
            .filter(|(a, b)| a != b)
            .count();
        Ok(HammingValue::new(differ, self.degree()))
    }

    /// `d_h(self, id)`: the fraction of moved points.
    pub fn displacement(&self) -> HammingValue {
        HammingValue::new(self.degree() - self.fixed_points(), self.degree())
    }

    pub fn fixed_points(&self) -> usize {
        self.image.iter().enumerate().filter(|(i, &v)| *i == v).count()
    }

    /// Cycle lengths, one entry per cycle (fixed points included), in order of
    /// each cycle's smallest point.
    pub fn cycle_lengths(&self) -> Vec<usize> {
        let n = self.degree();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.image[x];
                len += 1;
            }
            out.push(len);
        }
        out
    }

    /// `|{i : self^k(i) = i}|` from the cycle decomposition: the sum of the
    /// lengths of cycles whose length divides `k`.
    pub fn periodic_points(&self, k: usize) -> Result<usize> {
        if k == 0 {
            return Err(Error::InvalidParameter("period k must be at least 1".into()));
        }
        Ok(self.cycle_lengths().into_iter().filter(|len| k % len == 0).sum())
    }

    /// Same count as [`Permutation::periodic_points`], by iterating `k` times from each point.
    pub fn periodic_points_by_iteration(&self, k: usize) -> Result<usize> {
        if k == 0 {
            return Err(Error::InvalidParameter("period k must be at least 1".into()));
        }
        Ok((0..self.degree())
            .filter(|&i| {
                let mut x = i;
                for _ in 0..k {
                    x = self.image[x];
                }
                x == i
            })
            .count())
    }
}

/// Advances `a` to the next permutation in lexicographic order; returns `false`
/// (leaving `a` sorted ascending) after the last one.
pub fn next_lexicographic(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        a.reverse();
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

fn check_degree(p: &Permutation, q: &Permutation) -> Result<()> {
    if p.degree() != q.degree() {
        return Err(Error::DegreeMismatch {
            left: p.degree(),
            right: q.degree(),
        });
    }
    Ok(())
}

/// An exact normalized Hamming distance `numerator / n`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HammingValue {
    pub numerator: usize,
    pub n: usize,
}

impl HammingValue {
    pub fn new(numerator: usize, n: usize) -> Self {
        assert!(numerator <= n, "Hamming numerator {numerator} exceeds degree {n}");
        HammingValue { numerator, n }
    }

    pub fn zero(n: usize) -> Self {
        HammingValue::new(0, n)
    }

    pub fn to_rational(self) -> Rational {
        if self.n == 0 {
            return BigRational::from_integer(BigInt::from(0));
        }
        BigRational::new(BigInt::from(self.numerator), BigInt::from(self.n))
    }

    pub fn to_f64(self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.numerator as f64 / self.n as f64
        }
    }

    pub fn cmp_rational(self, q: &Rational) -> Ordering {
        self.to_rational().cmp(q)
    }
}

impl PartialEq for HammingValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HammingValue {}

impl PartialOrd for HammingValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HammingValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let l = self.numerator as u128 * other.n.max(1) as u128;
        let r = other.numerator as u128 * self.n.max(1) as u128;
        l.cmp(&r)
    }
}

impl fmt::Display for HammingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<usize>>())
            .prop_shuffle()
            .prop_map(|v| Permutation::from_image(v).unwrap())
    }

    fn triple(max_n: usize) -> impl Strategy<Value = (Permutation, Permutation, Permutation)> {
        (1..max_n).prop_flat_map(|n| (perm_strategy(n), perm_strategy(n), perm_strategy(n)))
    }

    #[test]
    fn compose_examples() {
        let p = Permutation::from_cycles(2, &[&[0, 1]]).unwrap();
        let id = Permutation::identity(2);
        assert_eq!(id.compose(&p).unwrap(), p);
        assert_eq!(p.compose(&p).unwrap(), id);

        let c = Permutation::from_cycles(3, &[&[0, 1, 2]]).unwrap();
        assert_eq!(c.inverse(), Permutation::from_cycles(3, &[&[0, 2, 1]]).unwrap());
        assert!(c.compose(&c.inverse()).unwrap().is_identity());
    }

    #[test]
    fn compose_is_right_to_left() {
        // p sends 0->1, q sends 1->2; p∘q applies q first.
        let p = Permutation::from_image(vec![1, 0, 2]).unwrap();
        let q = Permutation::from_image(vec![0, 2, 1]).unwrap();
        let pq = p.compose(&q).unwrap();
        assert_eq!(pq.image(), &[1, 2, 0]);
    }

    #[test]
    fn lexicographic_enumeration() {
        for n in 0..=6usize {
            let mut a: Vec<usize> = (0..n).collect();
            let mut seen = std::collections::HashSet::new();
            let mut prev = a.clone();
            seen.insert(a.clone());
            while next_lexicographic(&mut a) {
                assert!(a > prev);
                prev = a.clone();
                assert!(seen.insert(a.clone()));
            }
            assert_eq!(seen.len(), (1..=n).product::<usize>());
            assert_eq!(a, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Permutation::from_image(vec![0, 0]).is_err());
        assert!(Permutation::from_image(vec![0, 2]).is_err());
        let a = Permutation::identity(2);
        let b = Permutation::identity(3);
        assert!(matches!(a.compose(&b), Err(Error::DegreeMismatch { .. })));
        assert!(a.hamming(&b).is_err());
        assert!(a.periodic_points(0).is_err());
    }

    #[test]
    fn hamming_examples() {
        let c = Permutation::from_cycles(5, &[&[0, 1, 2]]).unwrap();
        let id = Permutation::identity(5);
        assert_eq!(c.hamming(&c).unwrap().numerator, 0);
        assert_eq!(c.hamming(&id).unwrap(), HammingValue::new(3, 5));
        let t = Permutation::from_cycles(4, &[&[1, 3]]).unwrap();
        let h = t.hamming(&Permutation::identity(4)).unwrap();
        assert_eq!((h.numerator, h.n), (2, 4));
        assert_eq!(h, HammingValue::new(1, 2));
    }

    #[test]
    fn periodic_examples() {
        let id = Permutation::identity(7);
        for k in 1..10 {
            assert_eq!(id.periodic_points(k).unwrap(), 7);
        }
        let c4 = Permutation::from_cycles(4, &[&[0, 1, 2, 3]]).unwrap();
        assert_eq!(c4.periodic_points(2).unwrap(), 0);
        assert_eq!(c4.periodic_points_by_iteration(2).unwrap(), 0);
        assert_eq!(c4.periodic_points(4).unwrap(), 4);
    }

    #[test]
    fn periodic_routes_agree_on_large_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 10, 1000, 10_000] {
            let p = Permutation::random(n, &mut rng);
            for _ in 0..4 {
                let k = rng.gen_range(1..=12);
                assert_eq!(p.periodic_points(k).unwrap(), p.periodic_points_by_iteration(k).unwrap());
            }
        }
    }

    #[test]
    fn pow_matches_repeated_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Permutation::random(50, &mut rng);
        let mut acc = Permutation::identity(50);
        for _ in 0..7 {
            acc = acc.compose(&p).unwrap();
        }
        assert_eq!(p.pow(7), acc);
        assert_eq!(p.pow(-7), acc.inverse());
        assert!(p.pow(0).is_identity());
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric((p, q, r) in triple(40)) {
            let pq = p.hamming(&q).unwrap();
            prop_assert_eq!(pq, q.hamming(&p).unwrap());
            prop_assert_eq!(pq.numerator == 0, p == q);
            let pr = p.hamming(&r).unwrap();
            let rq = r.hamming(&q).unwrap();
            prop_assert!(pq.numerator <= pr.numerator + rq.numerator);
        }

        #[test]
        fn hamming_is_bi_invariant((p, q, r) in triple(40)) {
            let base = p.hamming(&q).unwrap();
            let left = r.compose(&p).unwrap().hamming(&r.compose(&q).unwrap()).unwrap();
            let right = p.compose(&r).unwrap().hamming(&q.compose(&r).unwrap()).unwrap();
            prop_assert_eq!(base.numerator, left.numerator);
            prop_assert_eq!(base.numerator, right.numerator);
        }

        #[test]
        fn periodic_routes_agree(p in (1usize..200).prop_flat_map(perm_strategy), k in 1usize..=12) {
            prop_assert_eq!(p.periodic_points(k).unwrap(), p.periodic_points_by_iteration(k).unwrap());
        }
    }
}

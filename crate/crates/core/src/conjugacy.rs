//! Conjugators between two sofic approximations built from their quasi-tilings.
//!
//! Both approximations are tiled by the same shapes. Tiles are matched level by
//! level, trimmed to the common part of their disjoint cores, and `τ` sends
//! `φ_1(g)c` to `φ_2(g)ρ_j(c)`. Points outside the matched support are paired
//! off in increasing order.

use serde::{Deserialize, Serialize};

use crate::bsgroup::BsElement;
use crate::rational::{from_int, Rational};
use crate::sofic::{Key, SoficApprox};
use crate::tiling::{quasi_tile, verify_tiling, TileConfig, Tiling};
use crate::{Error, HammingValue, Permutation, Result};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConjugatorConfig {
    /// Tile ε; defaults to ε/7.
    #[serde(default, with = "opt_rational")]
    pub tile_eps: Option<Rational>,
    /// Tile κ; defaults to ε/7.
    #[serde(default, with = "opt_rational")]
    pub tile_kappa: Option<Rational>,
    #[serde(default)]
    pub tile: TileConfig,
}

mod opt_rational {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.serialize_some(&crate::rational::format(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|s| crate::rational::parse(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchedLevel {
    pub j: usize,
    /// `(c, ρ_j(c))` for `c ∈ C'_{1,j}`; `ρ_j` pairs centers by position in the stored order.
    pub pairs: Vec<(usize, usize)>,
    /// Positions in `F_j` of the trimmed shape `F_{j,c}`, one list per pair.
    pub trimmed: Vec<Vec<u32>>,
    pub shape_size: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conjugator {
    pub degree: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub eps: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub tile_eps: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub tile_kappa: Rational,
    pub tau: Permutation,
    /// `Λ_1` and `Λ_2 = τ(Λ_1)`, sorted.
    pub support1: Vec<usize>,
    pub support2: Vec<usize>,
    pub levels: Vec<MatchedLevel>,
    /// `min |F_{j,c}| / |F_j|` over all matched tiles.
    pub min_trim_ratio: f64,
    pub tiling1: Tiling,
    pub tiling2: Tiling,
}

/// Disjoint cores of one tiling: `core[j][i][p]` says whether `φ(F_j[p]) C_j[i]`
/// is kept. Tiles are scanned level by level in their stored order.
fn cores(t: &Tiling, phi: &SoficApprox) -> Result<Vec<Vec<Vec<bool>>>> {
    let mut claimed = vec![false; t.degree];
    let mut out = Vec::with_capacity(t.shapes.len());
    for s in &t.shapes {
        let perms: Vec<Permutation> = s.elements.iter().map(|g| phi.element(g)).collect::<Result<_>>()?;
        let mut level = Vec::with_capacity(s.centers.len());
        for &c in &s.centers {
            let mask = perms
                .iter()
                .map(|p| {
                    let x = p.apply(c);
                    !std::mem::replace(&mut claimed[x], true)
                })
                .collect();
            level.push(mask);
        }
        out.push(level);
    }
    Ok(out)
}

/// Builds `τ` from tilings of `φ_1` and `φ_2` by the shapes `F_1 ⊂ … ⊂ F_k`.
pub fn build_conjugator(
    phi1: &SoficApprox,
    phi2: &SoficApprox,
    shapes: &[Vec<BsElement>],
    eps: &Rational,
    config: &ConjugatorConfig,
) -> Result<Conjugator> {
    let n = phi1.degree();
    if phi2.degree() != n {
        return Err(Error::DegreeMismatch {
            left: n,
            right: phi2.degree(),
        });
    }
    let seventh = eps / from_int(7);
    let tile_eps = config.tile_eps.clone().unwrap_or_else(|| seventh.clone());
    let tile_kappa = config.tile_kappa.clone().unwrap_or(seventh);

    let t1 = quasi_tile(phi1, shapes, &tile_eps, &tile_kappa, &config.tile)?;
    let t2 = quasi_tile(phi2, shapes, &tile_eps, &tile_kappa, &config.tile)?;
    for (side, (t, phi)) in [(&t1, phi1), (&t2, phi2)].into_iter().enumerate() {
        let v = verify_tiling(t, phi);
        if !v.pass {
            let failed: Vec<String> = v
                .conclusions
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            return Err(Error::TilingRejected {
                side: side + 1,
                detail: failed.join("; "),
            });
        }
    }
    let core1 = cores(&t1, phi1)?;
    let core2 = cores(&t2, phi2)?;

    let mut tau = vec![usize::MAX; n];
    let mut hit = vec![false; n];
    let mut levels = Vec::with_capacity(t1.k);
    let mut min_trim_ratio = 1.0f64;
    for (j, (s1, s2)) in t1.shapes.iter().zip(&t2.shapes).enumerate() {
        let p1: Vec<Permutation> = s1.elements.iter().map(|g| phi1.element(g)).collect::<Result<_>>()?;
        let p2: Vec<Permutation> = s2.elements.iter().map(|g| phi2.element(g)).collect::<Result<_>>()?;
        let size = s1.elements.len();
        let m = s1.centers.len().min(s2.centers.len());
        let mut pairs = Vec::with_capacity(m);
        let mut trimmed = Vec::with_capacity(m);
        for i in 0..m {
            let (c1, c2) = (s1.centers[i], s2.centers[i]);
            let keep: Vec<u32> = (0..size)
                .filter(|&p| core1[j][i][p] && core2[j][i][p])
                .map(|p| p as u32)
                .collect();
            for &p in &keep {
                let x = p1[p as usize].apply(c1);
                let y = p2[p as usize].apply(c2);
                if tau[x] != usize::MAX || hit[y] {
                    return Err(Error::Malformed(format!("trimmed tiles overlap at {x} -> {y}")));
                }
                tau[x] = y;
                hit[y] = true;
            }
            if size > 0 {
                min_trim_ratio = min_trim_ratio.min(keep.len() as f64 / size as f64);
            }
            pairs.push((c1, c2));
            trimmed.push(keep);
        }
        levels.push(MatchedLevel {
            j: j + 1,
            pairs,
            trimmed,
            shape_size: size,
        });
    }

    let support1: Vec<usize> = (0..n).filter(|&x| tau[x] != usize::MAX).collect();
    let mut support2: Vec<usize> = support1.iter().map(|&x| tau[x]).collect();
    support2.sort_unstable();
    let required = (Rational::from_integer(1.into()) - from_int(4) * &tile_eps) * from_int(n as u64);
    if from_int(support1.len() as u64) < required {
        return Err(Error::InsufficientSupport {
            support: support1.len(),
            required: crate::rational::format(&required),
        });
    }

    // order-preserving bijection between the complements
    let free_targets = (0..n).filter(|&y| !hit[y]);
    let free_sources: Vec<usize> = (0..n).filter(|&x| tau[x] == usize::MAX).collect();
    for (x, y) in free_sources.into_iter().zip(free_targets) {
        tau[x] = y;
    }
    let tau = Permutation::from_image(tau)?;

    Ok(Conjugator {
        degree: n,
        eps: eps.clone(),
        tile_eps,
        tile_kappa,
        tau,
        support1,
        support2,
        levels,
        min_trim_ratio,
        tiling1: t1,
        tiling2: t2,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KeyDefect {
    pub key: Key,
    /// `d_h(τ φ_1(s) τ^{-1}, φ_2(s))`.
    pub defect: HammingValue,
    /// `|R_1(s)|`, `|R_2(s)|`: points where `φ_i(s)x = φ_i(sg)φ_i(g)^{-1}x` for all `g ∈ F_k`.
    pub regular1: Option<usize>,
    pub regular2: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub per_key: Vec<KeyDefect>,
    pub max_defect: HammingValue,
    /// `max_defect ≤ ε`.
    pub pass: bool,
}

/// `|{x : φ(s)x = φ(sg)φ(g)^{-1}x for all g ∈ F}|`, or `None` if some `sg` has no image.
pub fn regular_points(phi: &SoficApprox, s: &BsElement, top: &[BsElement]) -> Option<usize> {
    let n = phi.degree();
    let ps = phi.element(s).ok()?;
    let mut good = vec![true; n];
    for g in top {
        let pg = phi.element(g).ok()?;
        let psg = phi.element(&s.mul(g).ok()?).ok()?;
        // at x = φ(g)z: φ(s)x = φ(sg)z
        for z in 0..n {
            let x = pg.apply(z);
            if ps.apply(x) != psg.apply(z) {
                good[x] = false;
            }
        }
    }
    Some(good.into_iter().filter(|&b| b).count())
}

/// Max over `s ∈ S` of `d_h(τ φ_1(s) τ^{-1}, φ_2(s))`.
pub fn conjugacy_defect(
    c: &Conjugator,
    phi1: &SoficApprox,
    phi2: &SoficApprox,
    keys: &[Key],
) -> Result<ConjugacyReport> {
    conjugacy_defect_of(&c.tau, &c.eps, phi1, phi2, keys, c.tiling1.shapes.last().map(|s| s.elements.as_slice()))
}

/// As [`conjugacy_defect`], for an arbitrary bijection `τ`.
pub fn conjugacy_defect_of(
    tau: &Permutation,
    eps: &Rational,
    phi1: &SoficApprox,
    phi2: &SoficApprox,
    keys: &[Key],
    top: Option<&[BsElement]>,
) -> Result<ConjugacyReport> {
    let n = tau.degree();
    if phi1.degree() != n || phi2.degree() != n {
        return Err(Error::DegreeMismatch {
            left: n,
            right: phi1.degree().max(phi2.degree()),
        });
    }
    if keys.is_empty() {
        return Err(Error::Empty("key set"));
    }
    let tau_inv = tau.inverse();
    let mut per_key = Vec::with_capacity(keys.len());
    let mut max_defect = HammingValue::zero(n);
    for key in keys {
        let p1 = phi1.permutation(key)?;
        let p2 = phi2.permutation(key)?;
        let bad = (0..n)
            .filter(|&y| tau.apply(p1.apply(tau_inv.apply(y))) != p2.apply(y))
            .count();
        let defect = HammingValue::new(bad, n);
        if defect > max_defect {
            max_defect = defect;
        }
        let (regular1, regular2) = match (key, top) {
            (Key::Element(s), Some(top)) => (regular_points(phi1, s, top), regular_points(phi2, s, top)),
            _ => (None, None),
        };
        per_key.push(KeyDefect {
            key: key.clone(),
            defect,
            regular1,
            regular2,
        });
    }
    let pass = max_defect.to_rational() <= *eps;
    Ok(ConjugacyReport {
        per_key,
        max_defect,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::sofic::arithmetic_bs_approx;
    use crate::tiling::{admissible_lengths, interval_shapes, plan_parameters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quarter() -> ConjugatorConfig {
        ConjugatorConfig {
            tile_eps: Some(ratio(1, 4)),
            tile_kappa: Some(ratio(1, 4)),
            tile: TileConfig::default(),
        }
    }

    fn cyclic_shapes(n: usize) -> Vec<Vec<BsElement>> {
        let q = ratio(1, 4);
        let plan = plan_parameters(&q, &q).unwrap();
        interval_shapes(3, &admissible_lengths(n, &plan, &q, 1, u64::MAX)).unwrap()
    }

    fn a2_key() -> Vec<Key> {
        vec![Key::Element(BsElement::a2(3).unwrap())]
    }

    #[test]
    fn identity_conjugator_has_no_defect() {
        let psi = arithmetic_bs_approx(200, 3).unwrap();
        let keys = vec![Key::Element(BsElement::a1(3).unwrap()), Key::Element(BsElement::a2(3).unwrap())];
        let r = conjugacy_defect_of(&Permutation::identity(200), &ratio(1, 4), &psi, &psi, &keys, None).unwrap();
        assert_eq!(r.max_defect.numerator, 0);
        assert!(r.pass);
    }

    #[test]
    fn random_tau_on_mismatched_inputs() {
        let psi = arithmetic_bs_approx(1000, 3).unwrap();
        let tau = Permutation::random(1000, &mut ChaCha8Rng::seed_from_u64(3));
        let r = conjugacy_defect_of(&tau, &ratio(1, 4), &psi, &psi, &a2_key(), None).unwrap();
        assert!(r.max_defect.to_f64() > 0.5);
    }

    #[test]
    fn equal_inputs() {
        let psi = arithmetic_bs_approx(1000, 3).unwrap();
        let shapes = cyclic_shapes(1000);
        let c = build_conjugator(&psi, &psi, &shapes, &ratio(1, 4), &quarter()).unwrap();
        assert_eq!(c.support1.len(), c.support2.len());
        let r = conjugacy_defect(&c, &psi, &psi, &a2_key()).unwrap();
        assert_eq!(r.max_defect.numerator, 0);
        assert!(c.min_trim_ratio >= 0.5);
    }

    #[test]
    fn cyclic_shifts_of_coprime_phase() {
        let n = 1000;
        let psi = arithmetic_bs_approx(n, 3).unwrap();
        // x ↦ 7x conjugates x − 1 to x − 7
        let sigma = Permutation::from_image((0..n).map(|x| 7 * x % n).collect()).unwrap();
        let phi2 = psi.conjugate(&sigma).unwrap();
        let c = build_conjugator(&psi, &phi2, &cyclic_shapes(n), &ratio(1, 4), &quarter()).unwrap();
        let r = conjugacy_defect(&c, &psi, &phi2, &a2_key()).unwrap();
        assert!(r.pass, "{}", r.max_defect);
        let json = serde_json::to_string(&c).unwrap();
        let back: Conjugator = serde_json::from_str(&json).unwrap();
        assert_eq!(back.tau, c.tau);
    }

    #[test]
    fn random_conjugates_in_the_cyclic_direction() {
        let n = 1000;
        let psi = arithmetic_bs_approx(n, 3).unwrap();
        for seed in 0..3 {
            let sigma = Permutation::random(n, &mut ChaCha8Rng::seed_from_u64(seed));
            let phi2 = psi.conjugate(&sigma).unwrap();
            let c = build_conjugator(&psi, &phi2, &cyclic_shapes(n), &ratio(1, 4), &quarter()).unwrap();
            let r = conjugacy_defect(&c, &psi, &phi2, &a2_key()).unwrap();
            assert!(r.pass, "seed {seed}: {}", r.max_defect);
            let lo = (1.0 - 4.0 * 0.25) * n as f64;
            assert!(c.support1.len() as f64 >= lo);
            // ψ is a homomorphism, so every point is regular
            assert_eq!(r.per_key[0].regular1, Some(n));
        }
    }

    #[test]
    fn default_parameters_refuse_small_degree() {
        let psi = arithmetic_bs_approx(1000, 3).unwrap();
        let eps = ratio(1, 4);
        let plan = plan_parameters(&(&eps / from_int(7)), &(&eps / from_int(7))).unwrap();
        assert_eq!(plan.k, 111);
        let shapes = interval_shapes(3, &admissible_lengths(1000, &plan, &(&eps / from_int(7)), 1, u64::MAX)).unwrap();
        let err = build_conjugator(&psi, &psi, &shapes, &eps, &ConjugatorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::BelowThreshold { .. }), "{err}");
    }
}

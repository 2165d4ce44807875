//! Quasi-tilings of a sofic approximation by translated Følner shapes.
//!
//! [`quasi_tile`] builds center sets `C_k, …, C_1` from the top shape down:
//! it first finds the points where `φ` is exactly multiplicative and free on
//! `F_k^{-1} F_k`, then at each level extracts an ε-disjoint family of tiles
//! avoiding everything already placed. [`verify_tiling`] re-derives all four
//! guarantees from `φ` and the center sets alone.

use std::collections::{HashMap, HashSet};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsgroup::BsElement;
use crate::flow::feasible_assignment;
use crate::rational::{ceil_usize, from_int, ratio, Rational};
use crate::sofic::{Key, SoficApprox};
use crate::{Error, Permutation, Result};

/// A family of subsets of `{0..n-1}`, each tagged with an index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetFamily {
    n: usize,
    sets: Vec<(usize, Vec<usize>)>,
}

impl SetFamily {
    /// Sorts and deduplicates each set; rejects out-of-range points.
    pub fn new(n: usize, sets: Vec<(usize, Vec<usize>)>) -> Result<Self> {
        let mut out = Vec::with_capacity(sets.len());
        for (idx, mut s) in sets {
            s.sort_unstable();
            s.dedup();
            if let Some(&x) = s.last() {
                if x >= n {
                    return Err(Error::InvalidParameter(format!("set {idx} contains {x} >= {n}")));
                }
            }
            out.push((idx, s));
        }
        Ok(SetFamily { n, sets: out })
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[(usize, Vec<usize>)] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Largest number of sets containing one point.
    pub fn multiplicity(&self) -> usize {
        let mut count = vec![0usize; self.n];
        for (_, s) in &self.sets {
            for &x in s {
                count[x] += 1;
            }
        }
        count.into_iter().max().unwrap_or(0)
    }

    /// The smallest `ρ` for which this is a `ρ`-even covering of multiplicity
    /// [`SetFamily::multiplicity`]: `1 − Σ|A_i| / (M·n)`.
    pub fn evenness(&self) -> Rational {
        let m = self.multiplicity();
        if m == 0 || self.n == 0 {
            return Rational::one();
        }
        let total: usize = self.sets.iter().map(|(_, s)| s.len()).sum();
        Rational::one() - Rational::new(BigInt::from(total), BigInt::from(m * self.n))
    }

    pub fn union_size(&self) -> usize {
        let mut seen = vec![false; self.n];
        for (_, s) in &self.sets {
            for &x in s {
                seen[x] = true;
            }
        }
        seen.into_iter().filter(|&b| b).count()
    }
}

/// An ε-disjoint subfamily with its pairwise disjoint witnesses `A_i' ⊂ A_i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Extraction {
    /// Positions into the family's set list, in selection order.
    pub selected: Vec<usize>,
    /// Indices (tags) of the selected sets.
    pub indices: Vec<usize>,
    pub witnesses: Vec<Vec<usize>>,
    /// `|∪_{i ∈ I} A_i|`.
    pub coverage: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub rho: Rational,
    pub multiplicity: usize,
    /// `ε(1 − ρ)·n`.
    #[serde(with = "crate::rational::serde_str")]
    pub guaranteed: Rational,
}

fn core_threshold(size: usize, eps: &Rational) -> usize {
    ceil_usize(&((Rational::one() - eps) * from_int(size as u64)))
}

fn check_eps(eps: &Rational) -> Result<()> {
    if *eps <= Rational::zero() || *eps > Rational::one() {
        return Err(Error::InvalidParameter(format!(
            "ε = {} must lie in (0, 1]",
            crate::rational::format(eps)
        )));
    }
    Ok(())
}

/// Greedy order: descending size, then smallest index.
fn greedy_order(fam: &SetFamily) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fam.sets.len()).collect();
    order.sort_by(|&a, &b| {
        let (ia, sa) = &fam.sets[a];
        let (ib, sb) = &fam.sets[b];
        sb.len().cmp(&sa.len()).then(ia.cmp(ib))
    });
    order
}

/// Runs the greedy selection, stopping once the union reaches `stop_at`.
fn greedy(fam: &SetFamily, eps: &Rational, stop_at: Option<usize>) -> (Vec<usize>, Vec<Vec<usize>>, usize) {
    let mut covered = vec![false; fam.n];
    let mut union = 0usize;
    let mut thresholds: HashMap<usize, usize> = HashMap::new();
    let mut selected = Vec::new();
    let mut witnesses = Vec::new();
    for pos in greedy_order(fam) {
        if stop_at.is_some_and(|t| union >= t) {
            break;
        }
        let set = &fam.sets[pos].1;
        if set.is_empty() {
            continue;
        }
        let need = *thresholds
            .entry(set.len())
            .or_insert_with(|| core_threshold(set.len(), eps));
        let fresh: Vec<usize> = set.iter().copied().filter(|&x| !covered[x]).collect();
        if fresh.len() >= need {
            for &x in set {
                covered[x] = true;
            }
            union += fresh.len();
            selected.push(pos);
            witnesses.push(fresh);
        }
    }
    (selected, witnesses, union)
}

fn finish(fam: &SetFamily, eps: &Rational, selected: Vec<usize>, witnesses: Vec<Vec<usize>>, coverage: usize) -> Extraction {
    let rho = fam.evenness();
    let guaranteed = eps * (Rational::one() - &rho) * from_int(fam.n as u64);
    Extraction {
        indices: selected.iter().map(|&p| fam.sets[p].0).collect(),
        selected,
        witnesses,
        coverage,
        rho,
        multiplicity: fam.multiplicity(),
        guaranteed,
    }
}

/// Maximal greedy ε-disjoint subfamily. Its union is at least `ε(1 − ρ)n`
/// whenever the family is a `ρ`-even covering.
pub fn extract_eps_disjoint(fam: &SetFamily, eps: &Rational) -> Result<Extraction> {
    if fam.is_empty() {
        return Err(Error::Empty("set family"));
    }
    check_eps(eps)?;
    let (selected, witnesses, coverage) = greedy(fam, eps, None);
    Ok(finish(fam, eps, selected, witnesses, coverage))
}

/// Greedy selection until the union reaches `target`, then one reverse pass
/// dropping every set whose removal keeps the union at or above `target`.
/// If the target is unreachable the maximal greedy family is returned.
pub fn extract_to_target(fam: &SetFamily, eps: &Rational, target: usize) -> Result<Extraction> {
    if fam.is_empty() {
        return Err(Error::Empty("set family"));
    }
    check_eps(eps)?;
    let (mut selected, mut witnesses, mut coverage) = greedy(fam, eps, Some(target));
    if coverage >= target {
        let mut count = vec![0u32; fam.n];
        for &p in &selected {
            for &x in &fam.sets[p].1 {
                count[x] += 1;
            }
        }
        let mut keep = vec![true; selected.len()];
        for i in (0..selected.len()).rev() {
            let set = &fam.sets[selected[i]].1;
            let lost = set.iter().filter(|&&x| count[x] == 1).count();
            if coverage - lost >= target {
                keep[i] = false;
                coverage -= lost;
                for &x in set {
                    count[x] -= 1;
                }
            }
        }
        let mut it = keep.iter();
        selected.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        witnesses.retain(|_| *it.next().unwrap());
    }
    Ok(finish(fam, eps, selected, witnesses, coverage))
}

/// Checks ε-disjointness exactly: is there a choice of pairwise disjoint
/// `A_i' ⊂ A_i` with `|A_i'| ≥ (1 − ε)|A_i|`?
pub fn is_eps_disjoint(fam: &SetFamily, eps: &Rational) -> bool {
    let sets: Vec<Vec<usize>> = fam.sets.iter().map(|(_, s)| s.clone()).collect();
    let demand: Vec<u64> = sets.iter().map(|s| core_threshold(s.len(), eps) as u64).collect();
    feasible_assignment(&sets, &demand, fam.n)
}

/// Output of [`plan_parameters`]; `lambdas[j-1] = λ_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plan {
    pub k: usize,
    #[serde(with = "crate::rational::serde_vec")]
    pub lambdas: Vec<Rational>,
    #[serde(with = "crate::rational::serde_str")]
    pub eta: Rational,
    /// `min(κ, ε/2)`, the value the construction is run at.
    #[serde(with = "crate::rational::serde_str")]
    pub kappa_effective: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub sigma_1: Rational,
}

impl Plan {
    /// `σ_r = λ_r + … + λ_k` for `1 ≤ r ≤ k + 1`.
    pub fn sigma(&self, r: usize) -> Rational {
        self.lambdas[r - 1..].iter().fold(Rational::zero(), |a, l| a + l)
    }
}

/// `k` smallest with `(1−ε)^k ≤ ε/2`, `λ_k = ε`, `λ_j = ε(1 − σ_{j+1})`,
/// `η = κ'/(24/ε)^{k−1}` with `κ' = min(κ, ε/2)`.
pub fn plan_parameters(eps: &Rational, kappa: &Rational) -> Result<Plan> {
    if *eps <= Rational::zero() || *eps > ratio(1, 4) {
        return Err(Error::InvalidParameter(format!(
            "ε = {} must lie in (0, 1/4]",
            crate::rational::format(eps)
        )));
    }
    if *kappa <= Rational::zero() {
        return Err(Error::InvalidParameter("κ must be positive".into()));
    }
    let half = eps / from_int(2);
    let kappa_effective = if *kappa > half { half.clone() } else { kappa.clone() };
    let q = Rational::one() - eps;
    let mut k = 1usize;
    let mut pow = q.clone();
    while pow > half {
        pow *= &q;
        k += 1;
    }
    let mut lambdas = vec![Rational::zero(); k];
    let mut sigma = Rational::zero();
    for j in (1..=k).rev() {
        let l = eps * (Rational::one() - &sigma);
        sigma += &l;
        lambdas[j - 1] = l;
    }
    let base = from_int(24) / eps;
    let mut denom = Rational::one();
    for _ in 1..k {
        denom *= &base;
    }
    let eta = &kappa_effective / denom;
    Ok(Plan {
        k,
        lambdas,
        eta,
        kappa_effective,
        sigma_1: sigma,
    })
}

/// Tunable thresholds of [`quasi_tile`].
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TileConfig {
    /// Minimum degree `N`; defaults to `max_j ⌈|F_j| / (κ λ_j)⌉`.
    pub admissibility_n: Option<usize>,
    /// Largest tolerated `δ' = 1 − |B|/n`; defaults to `κ`.
    #[serde(default, with = "opt_rational")]
    pub max_delta_prime: Option<Rational>,
    /// When set, each `|(F_{j−1}^{-1} F_j) \ F_j| ≤ η|F_j|` is enforced.
    #[serde(default, with = "opt_rational")]
    pub nesting_eta: Option<Rational>,
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
pub struct Shape {
    pub j: usize,
    pub elements: Vec<BsElement>,
    /// `C_j`, in the order the construction ranked them.
    pub centers: Vec<usize>,
    #[serde(with = "crate::rational::serde_str")]
    pub lambda: Rational,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelReport {
    pub j: usize,
    pub candidates: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub rho: Rational,
    pub multiplicity: usize,
    pub target: usize,
    pub covered: usize,
    /// `| |φ(F_j)C_j| / (λ_j n) − 1 |`.
    pub measured_kappa: f64,
    /// `|(F_{j−1}^{-1} F_j) \ F_j| / |F_j|`, absent for `j = 1`.
    pub nesting_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tiling {
    pub degree: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub eps: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub kappa: Rational,
    pub k: usize,
    /// `shapes[j-1]` holds `F_j`, `C_j`, `λ_j`.
    pub shapes: Vec<Shape>,
    pub good_points: usize,
    #[serde(with = "crate::rational::serde_str")]
    pub delta_prime: Rational,
    pub admissibility_n: usize,
    pub levels: Vec<LevelReport>,
}

fn nesting_excess(prev: &[BsElement], cur: &[BsElement]) -> Result<usize> {
    let set: HashSet<&BsElement> = cur.iter().collect();
    let mut excess: HashSet<BsElement> = HashSet::new();
    for a in prev {
        let a_inv = a.inverse();
        for b in cur {
            let p = a_inv.mul(b)?;
            if !set.contains(&p) {
                excess.insert(p);
            }
        }
    }
    Ok(excess.len())
}

fn dedup_shape(f: &[BsElement]) -> Vec<BsElement> {
    let mut seen = HashSet::new();
    f.iter().filter(|g| seen.insert((*g).clone())).cloned().collect()
}

/// Points `x` with `φ(g)^{-1}φ(h)x = φ(g^{-1}h)x` and `φ(g^{-1}h)x ≠ x` for all `g ≠ h` in `F_k`.
fn good_points(phi: &SoficApprox, top: &[BsElement], images: &[Permutation]) -> Result<Vec<bool>> {
    let n = phi.degree();
    let mut pairs: HashMap<BsElement, Vec<(usize, usize)>> = HashMap::new();
    for (a, g) in top.iter().enumerate() {
        let g_inv = g.inverse();
        for (b, h) in top.iter().enumerate() {
            if a != b {
                pairs.entry(g_inv.mul(h)?).or_default().push((a, b));
            }
        }
    }
    let groups: Vec<(BsElement, Vec<(usize, usize)>)> = pairs.into_iter().collect();
    let bad = groups
        .par_iter()
        .map(|(s, ps)| -> Result<Vec<bool>> {
            let p = phi.element(s)?;
            let ps_img = p.image();
            let mut bad = vec![false; n];
            for x in 0..n {
                if ps_img[x] == x {
                    bad[x] = true;
                }
            }
            for &(a, b) in ps {
                let (ga, hb) = (images[a].image(), images[b].image());
                for x in 0..n {
                    // φ(h)x = φ(g)φ(s)x
                    if hb[x] != ga[ps_img[x]] {
                        bad[x] = true;
                    }
                }
            }
            Ok(bad)
        })
        .try_reduce(
            || vec![false; n],
            |mut acc, b| {
                acc.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
                Ok(acc)
            },
        )?;
    Ok(bad.into_iter().map(|b| !b).collect())
}

/// Builds `C_k, …, C_1` for shapes `F_1 ⊂ … ⊂ F_k` (`shapes[j-1] = F_j`).
pub fn quasi_tile(
    phi: &SoficApprox,
    shapes: &[Vec<BsElement>],
    eps: &Rational,
    kappa: &Rational,
    config: &TileConfig,
) -> Result<Tiling> {
    let plan = plan_parameters(eps, kappa)?;
    let k = plan.k;
    let n = phi.degree();
    if shapes.len() != k {
        return Err(Error::InvalidParameter(format!(
            "expected {k} shapes for these parameters, got {}",
            shapes.len()
        )));
    }
    let shapes: Vec<Vec<BsElement>> = shapes.iter().map(|f| dedup_shape(f)).collect();
    if !shapes[0].iter().any(|g| g.is_identity()) {
        return Err(Error::InvalidParameter("F_1 must contain the identity".into()));
    }
    for j in 1..k {
        let outer: HashSet<&BsElement> = shapes[j].iter().collect();
        if !shapes[j - 1].iter().all(|g| outer.contains(g)) {
            return Err(Error::InvalidParameter(format!("F_{j} is not contained in F_{}", j + 1)));
        }
    }

    let default_n = (0..k)
        .map(|j| ceil_usize(&(from_int(shapes[j].len() as u64) / (kappa * &plan.lambdas[j]))))
        .max()
        .unwrap_or(0);
    let admissibility_n = config.admissibility_n.unwrap_or(default_n);
    if n < admissibility_n {
        return Err(Error::BelowThreshold {
            n,
            threshold: admissibility_n,
        });
    }

    let mut nesting = vec![None; k];
    for j in 1..k {
        let excess = nesting_excess(&shapes[j - 1], &shapes[j])?;
        let ratio_j = Rational::new(BigInt::from(excess), BigInt::from(shapes[j].len()));
        if let Some(eta) = &config.nesting_eta {
            if ratio_j > *eta {
                return Err(Error::InvalidParameter(format!(
                    "nesting condition fails at j = {}: ratio {}",
                    j + 1,
                    crate::rational::format(&ratio_j)
                )));
            }
        }
        nesting[j] = Some(crate::rational::to_f64(&ratio_j));
    }

    let top = &shapes[k - 1];
    let images: Vec<Permutation> = top.par_iter().map(|g| phi.element(g)).collect::<Result<_>>()?;
    let position: HashMap<&BsElement, usize> = top.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let good = good_points(phi, top, &images)?;
    let good_count = good.iter().filter(|&&b| b).count();
    let delta_prime = Rational::new(BigInt::from(n - good_count), BigInt::from(n.max(1)));
    let allowed = config.max_delta_prime.clone().unwrap_or_else(|| kappa.clone());
    if delta_prime > allowed {
        return Err(Error::TooCoarse {
            bad: n - good_count,
            n,
            allowed: crate::rational::format(&allowed),
        });
    }

    // Candidates are indexed by their rank along the orbits of φ(s)^{-1}, where s is
    // the first non-identity element of F_k, so that ties break the same way for
    // relabelled copies of φ.
    let walk = top
        .iter()
        .position(|g| !g.is_identity())
        .map(|i| images[i].inverse());
    let mut rank = vec![usize::MAX; n];
    let mut by_rank = Vec::with_capacity(n);
    for start in 0..n {
        let mut x = start;
        while rank[x] == usize::MAX {
            rank[x] = by_rank.len();
            by_rank.push(x);
            x = walk.as_ref().map_or(x, |w| w.apply(x));
        }
    }

    let mut placed = vec![false; n];
    let mut centers: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut levels = Vec::with_capacity(k);
    for j in (0..k).rev() {
        let idx: Vec<usize> = shapes[j].iter().map(|g| position[g]).collect();
        let tile = |c: usize| -> Vec<usize> { idx.iter().map(|&i| images[i].apply(c)).collect() };
        let sets: Vec<(usize, Vec<usize>)> = by_rank
            .iter()
            .filter(|&&c| good[c])
            .map(|&c| (rank[c], tile(c)))
            .filter(|(_, t)| t.iter().all(|&x| !placed[x]))
            .collect();
        let candidates = sets.len();
        let target = ceil_usize(&(&plan.lambdas[j] * (Rational::one() - &delta_prime) * from_int(n as u64)));
        let (chosen, covered, rho, multiplicity) = if sets.is_empty() {
            (Vec::new(), 0, Rational::one(), 0)
        } else {
            let fam = SetFamily::new(n, sets)?;
            let ex = extract_to_target(&fam, eps, target)?;
            for &p in &ex.selected {
                for &x in &fam.sets()[p].1 {
                    placed[x] = true;
                }
            }
            (ex.indices, ex.coverage, ex.rho, ex.multiplicity)
        };
        let mut chosen = chosen;
        chosen.sort_unstable();
        let chosen: Vec<usize> = chosen.into_iter().map(|r| by_rank[r]).collect();
        let lambda_n = crate::rational::to_f64(&plan.lambdas[j]) * n as f64;
        levels.push(LevelReport {
            j: j + 1,
            candidates,
            rho,
            multiplicity,
            target,
            covered,
            measured_kappa: (covered as f64 / lambda_n - 1.0).abs(),
            nesting_ratio: nesting[j],
        });
        centers[j] = chosen;
    }
    levels.reverse();

    let shapes_out = shapes
        .into_iter()
        .zip(centers)
        .enumerate()
        .map(|(j, (elements, centers))| Shape {
            j: j + 1,
            elements,
            centers,
            lambda: plan.lambdas[j].clone(),
        })
        .collect();
    Ok(Tiling {
        degree: n,
        eps: eps.clone(),
        kappa: kappa.clone(),
        k,
        shapes: shapes_out,
        good_points: good_count,
        delta_prime,
        admissibility_n,
        levels,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConclusionCheck {
    pub name: String,
    pub pass: bool,
    /// Signed slack: positive when the conclusion holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TilingVerification {
    pub lambda_recursion: bool,
    pub conclusions: Vec<ConclusionCheck>,
    /// `|φ(F_j)C_j| / n` per level.
    pub densities: Vec<f64>,
    pub pass: bool,
}

/// `λ_k = ε`, `λ_j = ε(1 − σ_{j+1})`, `1 − ε ≤ σ_1 ≤ 1`.
pub fn check_lambda_recursion(eps: &Rational, lambdas: &[Rational]) -> bool {
    let mut sigma = Rational::zero();
    for l in lambdas.iter().rev() {
        if *l != eps * (Rational::one() - &sigma) {
            return false;
        }
        sigma += l;
    }
    !lambdas.is_empty() && sigma >= Rational::one() - eps && sigma <= Rational::one()
}

/// Rechecks the four tiling guarantees from `φ` and the center sets.
pub fn verify_tiling(t: &Tiling, phi: &SoficApprox) -> TilingVerification {
    let n = t.degree;
    let lambdas: Vec<Rational> = t.shapes.iter().map(|s| s.lambda.clone()).collect();
    let lambda_recursion = check_lambda_recursion(&t.eps, &lambdas) && lambdas.len() == t.k;

    if phi.degree() != n {
        let fail = |name: &str| ConclusionCheck {
            name: name.into(),
            pass: false,
            margin: f64::NEG_INFINITY,
            detail: format!("approximation has degree {}, tiling {}", phi.degree(), n),
        };
        return TilingVerification {
            lambda_recursion,
            conclusions: ["disjoint shapes", "injective tiles", "eps-disjoint cover", "densities"]
                .iter()
                .map(|s| fail(s))
                .collect(),
            densities: vec![],
            pass: false,
        };
    }

    // tiles[j] = list of (center, tile points in shape order)
    let mut tiles: Vec<Vec<Vec<usize>>> = Vec::with_capacity(t.shapes.len());
    let mut errors = Vec::new();
    for s in &t.shapes {
        let perms: Vec<Option<Permutation>> = s
            .elements
            .iter()
            .map(|g| match phi.permutation(&Key::Element(g.clone())) {
                Ok(p) => Some(p),
                Err(e) => {
                    errors.push(format!("F_{}: {e}", s.j));
                    None
                }
            })
            .collect();
        let level = s
            .centers
            .iter()
            .filter(|&&c| c < n)
            .map(|&c| perms.iter().flatten().map(|p| p.apply(c)).collect())
            .collect();
        if s.centers.iter().any(|&c| c >= n) {
            errors.push(format!("C_{} has a center out of range", s.j));
        }
        tiles.push(level);
    }
    let sound = errors.is_empty();

    let unions: Vec<HashSet<usize>> = tiles
        .iter()
        .map(|level| level.iter().flatten().copied().collect())
        .collect();

    let (c1, (c2, (c3, c4))) = rayon::join(
        || {
            // (1) shapes pairwise disjoint
            let mut owner = vec![usize::MAX; n];
            let mut clashes = 0usize;
            for (j, u) in unions.iter().enumerate() {
                for &x in u {
                    if owner[x] != usize::MAX && owner[x] != j {
                        clashes += 1;
                    }
                    owner[x] = j;
                }
            }
            ConclusionCheck {
                name: "disjoint shapes".into(),
                pass: clashes == 0 && sound,
                margin: -(clashes as f64),
                detail: format!("{clashes} points lie in tiles of two shapes"),
            }
        },
        || {
            rayon::join(
                || {
                    // (2) s ↦ φ(s)c injective on F_j
                    let mut worst = 0usize;
                    for (j, level) in tiles.iter().enumerate() {
                        let size = t.shapes[j].elements.len();
                        for tile in level {
                            let distinct: HashSet<&usize> = tile.iter().collect();
                            worst = worst.max(size - distinct.len().min(size));
                        }
                    }
                    ConclusionCheck {
                        name: "injective tiles".into(),
                        pass: worst == 0 && sound,
                        margin: -(worst as f64),
                        detail: format!("largest collision count within one tile: {worst}"),
                    }
                },
                || {
                    rayon::join(
                        || {
                            // (3) ε-disjoint and (1−ε)-covering
                            let sets: Vec<(usize, Vec<usize>)> =
                                tiles.iter().flatten().cloned().enumerate().collect();
                            let fam = SetFamily::new(n, sets).expect("points are in range");
                            let disjoint = is_eps_disjoint(&fam, &t.eps);
                            let covered = fam.union_size();
                            let need = (Rational::one() - &t.eps) * from_int(n as u64);
                            let covers = from_int(covered as u64) >= need;
                            ConclusionCheck {
                                name: "eps-disjoint cover".into(),
                                pass: disjoint && covers && sound,
                                margin: (covered as f64 - crate::rational::to_f64(&need)) / n.max(1) as f64,
                                detail: format!(
                                    "eps-disjoint: {disjoint}; union {covered} of {n}, need {}",
                                    crate::rational::format(&need)
                                ),
                            }
                        },
                        || {
                            // (4) (1−κ)λ_j ≤ |φ(F_j)C_j|/n ≤ (1+κ)λ_j
                            let mut ok = sound;
                            let mut margin = f64::INFINITY;
                            let mut details = Vec::new();
                            for (j, u) in unions.iter().enumerate() {
                                let density = Rational::new(BigInt::from(u.len()), BigInt::from(n.max(1)));
                                let lam = &t.shapes[j].lambda;
                                let lo = (Rational::one() - &t.kappa) * lam;
                                let hi = (Rational::one() + &t.kappa) * lam;
                                ok &= density >= lo && density <= hi;
                                let d = crate::rational::to_f64(&density);
                                let m = (d - crate::rational::to_f64(&lo)).min(crate::rational::to_f64(&hi) - d);
                                margin = margin.min(m);
                                details.push(format!("j={}: {:.5} in [{:.5}, {:.5}]", j + 1, d, crate::rational::to_f64(&lo), crate::rational::to_f64(&hi)));
                            }
                            ConclusionCheck {
                                name: "densities".into(),
                                pass: ok,
                                margin,
                                detail: details.join("; "),
                            }
                        },
                    )
                },
            )
        },
    );
    let mut conclusions = vec![c1, c2, c3, c4];
    if !sound {
        for c in &mut conclusions {
            c.detail = format!("{} ({})", c.detail, errors.join(", "));
        }
    }
    let densities = unions.iter().map(|u| u.len() as f64 / n.max(1) as f64).collect();
    let pass = lambda_recursion && conclusions.iter().all(|c| c.pass);
    TilingVerification {
        lambda_recursion,
        conclusions,
        densities,
        pass,
    }
}

/// Lengths `L_1 ≤ … ≤ L_k` with `rows·L_j ≤ κλ_j n`, capped at `cap`.
pub fn admissible_lengths(n: usize, plan: &Plan, kappa: &Rational, rows: u32, cap: u64) -> Vec<u64> {
    plan.lambdas
        .iter()
        .map(|l| {
            let budget = kappa * l * from_int(n as u64) / from_int(rows as u64);
            let floor = budget.floor().to_integer();
            let len: u64 = floor.try_into().unwrap_or(0);
            len.clamp(1, cap.max(1))
        })
        .collect()
}

/// `F_j = {a_2^0, …, a_2^{L_j − 1}}`.
pub fn interval_shapes(m: u64, lengths: &[u64]) -> Result<Vec<Vec<BsElement>>> {
    lengths
        .iter()
        .map(|&l| crate::bsgroup::box_set(m, 1, l))
        .collect()
}

/// `F_j = {a_1^i a_2^l : i < rows, l < L_j}`.
pub fn box_shapes(m: u64, rows: u32, lengths: &[u64]) -> Result<Vec<Vec<BsElement>>> {
    lengths
        .iter()
        .map(|&l| crate::bsgroup::box_set(m, rows, l))
        .collect()
}

/// `F_j = {a_1^0, …, a_1^{L_j − 1}}`.
pub fn dilation_shapes(m: u64, lengths: &[u64]) -> Result<Vec<Vec<BsElement>>> {
    let a1 = BsElement::a1(m)?;
    Ok(lengths
        .iter()
        .map(|&l| (0..l as i64).map(|i| a1.pow(i)).collect())
        .collect())
}

/// A tiling bundled with the approximation it refers to, for offline checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TilingCertificate {
    pub tiling: Tiling,
    pub model: crate::sofic::ModelDescription,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sofic::arithmetic_bs_approx;
    use proptest::prelude::*;

    fn fam(n: usize, sets: &[&[usize]]) -> SetFamily {
        SetFamily::new(n, sets.iter().enumerate().map(|(i, s)| (i, s.to_vec())).collect()).unwrap()
    }

    #[test]
    fn plan_for_quarter() {
        let p = plan_parameters(&ratio(1, 4), &ratio(1, 4)).unwrap();
        assert_eq!(p.k, 8);
        assert_eq!(p.lambdas[7], ratio(1, 4));
        assert_eq!(p.kappa_effective, ratio(1, 8));
        assert!(check_lambda_recursion(&ratio(1, 4), &p.lambdas));
        // σ_j = 1 − (1−ε)^{k−j+1}
        for j in 1..=p.k {
            let closed = Rational::one() - num_traits::pow(ratio(3, 4), p.k - j + 1);
            assert_eq!(p.sigma(j), closed);
        }
        assert!(p.sigma_1 >= ratio(7, 8) && p.sigma_1 <= ratio(15, 16));
        assert!(plan_parameters(&ratio(1, 3), &ratio(1, 8)).is_err());
        assert!(plan_parameters(&ratio(0, 1), &ratio(1, 8)).is_err());
        assert!(plan_parameters(&ratio(1, 8), &ratio(0, 1)).is_err());
    }

    #[test]
    fn plan_bounds_hold_for_many_eps() {
        for den in 4..=60 {
            let eps = ratio(1, den);
            let p = plan_parameters(&eps, &ratio(1, 100)).unwrap();
            let q = Rational::one() - &eps;
            assert!(num_traits::pow(q.clone(), p.k) <= &eps / from_int(2));
            assert!(num_traits::pow(q, p.k - 1) > &eps / from_int(2));
            assert!(p.sigma_1 >= Rational::one() - &eps / from_int(2));
            assert!(p.sigma_1 <= Rational::one() - &eps / from_int(4));
            assert!(check_lambda_recursion(&eps, &p.lambdas));
        }
    }

    #[test]
    fn lambda_recursion_rejects_tampering() {
        let p = plan_parameters(&ratio(1, 4), &ratio(1, 8)).unwrap();
        let mut l = p.lambdas.clone();
        l[3] += ratio(1, 1000);
        assert!(!check_lambda_recursion(&ratio(1, 4), &l));
        assert!(!check_lambda_recursion(&ratio(1, 4), &[]));
    }

    #[test]
    fn disjoint_family_is_kept_whole() {
        let f = fam(6, &[&[0, 1], &[2, 3], &[4, 5]]);
        let ex = extract_eps_disjoint(&f, &ratio(1, 10)).unwrap();
        assert_eq!(ex.indices, vec![0, 1, 2]);
        assert_eq!(ex.witnesses, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(ex.coverage, 6);
    }

    #[test]
    fn duplicates_yield_one() {
        let f = fam(5, &[&[0, 1, 2], &[0, 1, 2]]);
        let ex = extract_eps_disjoint(&f, &ratio(9, 10)).unwrap();
        assert_eq!(ex.indices.len(), 1);
        assert!(!is_eps_disjoint(&f, &ratio(1, 2)));
        assert!(matches!(
            extract_eps_disjoint(&SetFamily::new(3, vec![]).unwrap(), &ratio(1, 2)),
            Err(Error::Empty(_))
        ));
        assert!(SetFamily::new(3, vec![(0, vec![3])]).is_err());
    }

    #[test]
    fn target_extraction_is_minimal() {
        let sets: Vec<(usize, Vec<usize>)> = (0..20).map(|i| (i, (5 * i..5 * i + 5).collect())).collect();
        let f = SetFamily::new(100, sets).unwrap();
        let ex = extract_to_target(&f, &ratio(1, 4), 32).unwrap();
        assert_eq!(ex.coverage, 35);
        assert_eq!(ex.indices.len(), 7);
        // dropping any member falls below the target
        for w in &ex.witnesses {
            assert!(ex.coverage - w.len() < 32);
        }
    }

    fn interval_family(n: usize, seed: u64) -> SetFamily {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut count = vec![0usize; n];
        let mut sets = Vec::new();
        for idx in 0..4000 {
            let len = rng.gen_range(5..40);
            let start = rng.gen_range(0..n - len);
            if (start..start + len).any(|x| count[x] >= 4) {
                continue;
            }
            for x in start..start + len {
                count[x] += 1;
            }
            sets.push((idx, (start..start + len).collect()));
        }
        SetFamily::new(n, sets).unwrap()
    }

    #[test]
    fn random_intervals_meet_the_covering_bound() {
        for seed in 0..10 {
            let f = interval_family(1000, seed);
            assert!(f.multiplicity() <= 4);
            for eps in [ratio(1, 4), ratio(1, 10), ratio(1, 2)] {
                let ex = extract_eps_disjoint(&f, &eps).unwrap();
                assert!(from_int(ex.coverage as u64) >= ex.guaranteed, "seed {seed}");
                let chosen = SetFamily::new(
                    1000,
                    ex.selected.iter().map(|&p| f.sets()[p].clone()).collect(),
                )
                .unwrap();
                assert_eq!(chosen.union_size(), ex.coverage);
                assert!(is_eps_disjoint(&chosen, &eps));
            }
        }
    }

    proptest! {
        #[test]
        fn witnesses_are_disjoint_cores(
            sets in proptest::collection::vec(proptest::collection::vec(0usize..60, 1..12), 1..30),
            num in 1i64..10,
        ) {
            let eps = ratio(num, 10);
            let f = SetFamily::new(60, sets.into_iter().enumerate().collect()).unwrap();
            let ex = extract_eps_disjoint(&f, &eps).unwrap();
            let mut seen = HashSet::new();
            for (w, &p) in ex.witnesses.iter().zip(&ex.selected) {
                let full: HashSet<_> = f.sets()[p].1.iter().collect();
                prop_assert!(w.iter().all(|x| full.contains(x)));
                prop_assert!(w.len() >= core_threshold(full.len(), &eps));
                for x in w {
                    prop_assert!(seen.insert(*x));
                }
            }
            prop_assert!(from_int(ex.coverage as u64) >= ex.guaranteed);
        }
    }

    fn cyclic_setup(n: usize) -> (SoficApprox, Vec<Vec<BsElement>>) {
        let eps = ratio(1, 4);
        let plan = plan_parameters(&eps, &eps).unwrap();
        let lengths = admissible_lengths(n, &plan, &eps, 1, u64::MAX);
        (arithmetic_bs_approx(n, 3).unwrap(), interval_shapes(3, &lengths).unwrap())
    }

    #[test]
    fn cyclic_model_tiles() {
        let (phi, shapes) = cyclic_setup(1000);
        let eps = ratio(1, 4);
        let t = quasi_tile(&phi, &shapes, &eps, &eps, &TileConfig::default()).unwrap();
        assert_eq!(t.good_points, 1000);
        let v = verify_tiling(&t, &phi);
        assert!(v.pass, "{v:#?}");
    }

    #[test]
    fn verifier_catches_overlaps_and_bad_densities() {
        let (phi, shapes) = cyclic_setup(1000);
        let eps = ratio(1, 4);
        let t = quasi_tile(&phi, &shapes, &eps, &eps, &TileConfig::default()).unwrap();

        let mut overlap = t.clone();
        let c = overlap.shapes[7].centers[0];
        overlap.shapes[0].centers.push(c);
        let v = verify_tiling(&overlap, &phi);
        assert!(!v.conclusions[0].pass);
        assert!(!v.pass);

        let mut sparse = t.clone();
        sparse.shapes[7].centers.truncate(1);
        let v = verify_tiling(&sparse, &phi);
        assert!(!v.conclusions[3].pass);
        assert!(v.conclusions[3].margin < 0.0);

        let mut tampered = t.clone();
        tampered.shapes[2].lambda += ratio(1, 100);
        assert!(!verify_tiling(&tampered, &phi).lambda_recursion);

        let json = serde_json::to_string(&t).unwrap();
        let back: Tiling = serde_json::from_str(&json).unwrap();
        assert!(verify_tiling(&back, &phi).pass);
    }

    #[test]
    fn refuses_small_degree_and_bad_shapes() {
        let (phi, shapes) = cyclic_setup(1000);
        let eps = ratio(1, 4);
        let small = arithmetic_bs_approx(100, 3).unwrap();
        assert!(matches!(
            quasi_tile(&small, &shapes, &eps, &eps, &TileConfig::default()),
            Err(Error::BelowThreshold { .. })
        ));
        assert!(quasi_tile(&phi, &shapes[1..], &eps, &eps, &TileConfig::default()).is_err());
        let mut reversed = shapes.clone();
        reversed.swap(0, 7);
        assert!(quasi_tile(&phi, &reversed, &eps, &eps, &TileConfig::default()).is_err());
        let strict = TileConfig {
            nesting_eta: Some(ratio(1, 1000)),
            ..TileConfig::default()
        };
        assert!(quasi_tile(&phi, &shapes, &eps, &eps, &strict).is_err());
    }

    #[test]
    fn corrupted_block_is_never_certified() {
        let (phi, shapes) = cyclic_setup(1000);
        let eps = ratio(1, 4);
        let bad = phi.scramble_block(0, 500, 5).unwrap();
        match quasi_tile(&bad, &shapes, &eps, &eps, &TileConfig::default()) {
            Err(Error::TooCoarse { bad, .. }) => assert!(bad >= 400),
            Err(e) => panic!("unexpected error {e}"),
            Ok(t) => assert!(!verify_tiling(&t, &bad).pass),
        }
        // Even with the threshold lifted, no certificate passes.
        let lax = TileConfig {
            max_delta_prime: Some(Rational::one()),
            ..TileConfig::default()
        };
        if let Ok(t) = quasi_tile(&bad, &shapes, &eps, &eps, &lax) {
            assert!(!verify_tiling(&t, &bad).pass);
        }
    }
}

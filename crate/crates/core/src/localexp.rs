//! Functions on `Z/nZ` that behave locally like `x ↦ m^x`: defect sets, the
//! induced map `g`, the `H_3` witness, p-adic fixed points of the lifted map
//! `G`, and a searcher over permutations with `f⁴ = id`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, is_prime, mod_inv, mod_pow, mul_mod, multiplicative_order, prime_power};
use crate::perm::{next_lexicographic, HammingValue, Permutation};
use crate::rational::{ratio, Rational};
use crate::{Error, Result};

/// A function `Z/nZ → Z/nZ` stored as its image array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ZnFunction {
    image: Vec<usize>,
    bijective: bool,
}

impl TryFrom<Vec<usize>> for ZnFunction {
    type Error = Error;
    fn try_from(image: Vec<usize>) -> Result<Self> {
        ZnFunction::new(image)
    }
}

impl From<ZnFunction> for Vec<usize> {
    fn from(f: ZnFunction) -> Vec<usize> {
        f.image
    }
}

impl ZnFunction {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        if n == 0 {
            return Err(Error::Empty("function"));
        }
        let mut seen = vec![false; n];
        let mut bijective = true;
        for &v in &image {
            if v >= n {
                return Err(Error::InvalidParameter(format!("image value {v} outside Z/{n}Z")));
            }
            bijective &= !std::mem::replace(&mut seen[v], true);
        }
        Ok(ZnFunction { image, bijective })
    }

    pub fn identity(n: usize) -> Self {
        ZnFunction {
            image: (0..n).collect(),
            bijective: true,
        }
    }

    pub fn from_permutation(p: &Permutation) -> Self {
        ZnFunction {
            image: p.image().to_vec(),
            bijective: true,
        }
    }

    pub fn n(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, x: usize) -> usize {
        self.image[x]
    }

    pub fn is_bijective(&self) -> bool {
        self.bijective
    }

    pub fn to_permutation(&self) -> Result<Permutation> {
        if !self.bijective {
            return Err(Error::NotBijective(self.n()));
        }
        Permutation::from_image(self.image.clone())
    }

    /// `f⁴ = id` pointwise.
    pub fn is_four_periodic(&self) -> bool {
        four_periodic_failures(&self.image) == 0
    }

    /// Counts of fixed points, 2-cycles and 4-cycles; `None` unless `f⁴ = id`.
    pub fn cycle_histogram(&self) -> Option<[usize; 3]> {
        if !self.bijective || !self.is_four_periodic() {
            return None;
        }
        let mut h = [0; 3];
        for len in Permutation::from_image(self.image.clone()).ok()?.cycle_lengths() {
            match len {
                1 => h[0] += 1,
                2 => h[1] += 1,
                _ => h[2] += 1,
            }
        }
        Some(h)
    }
}

fn four_periodic_failures(f: &[usize]) -> usize {
    (0..f.len()).filter(|&x| f[f[f[f[x]]]] != x).count()
}

fn local_law_holds(f: &[usize], m: u64, x: usize) -> bool {
    let n = f.len();
    f[(x + 1) % n] as u64 == mul_mod(m % n as u64, f[x] as u64, n as u64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectReport {
    pub n: usize,
    pub m: u64,
    /// `{x : f(x+1) ≠ m f(x)}`, cyclically.
    pub defect: Vec<usize>,
    /// `{x : f⁴(x) ≠ x}`.
    pub four_periodic_failures: Vec<usize>,
    #[serde(with = "crate::rational::serde_str")]
    pub defect_fraction: Rational,
    #[serde(with = "crate::rational::serde_str")]
    pub four_fraction: Rational,
}

pub fn defect_report(f: &ZnFunction, m: u64) -> Result<DefectReport> {
    let n = f.n();
    if gcd(m, n as u64) != 1 {
        return Err(Error::NotCoprime { a: m, b: n as u64 });
    }
    let img = f.image();
    let defect: Vec<usize> = (0..n).filter(|&x| !local_law_holds(img, m, x)).collect();
    let four: Vec<usize> = (0..n).filter(|&x| img[img[img[img[x]]]] != x).collect();
    Ok(DefectReport {
        n,
        m,
        defect_fraction: ratio(defect.len() as i64, n as i64),
        four_fraction: ratio(four.len() as i64, n as i64),
        defect,
        four_periodic_failures: four,
    })
}

/// Recomputes both sets of a [`DefectReport`] by a second, differently ordered
/// scan (shifted copy of `m·f` and the square of `f²`) and compares.
pub fn recheck_defect(f: &ZnFunction, report: &DefectReport) -> bool {
    let n = f.n();
    let img = f.image();
    let scaled: Vec<u64> = img.iter().map(|&v| (report.m % n as u64) * v as u64 % n as u64).collect();
    let mut shifted = img.to_vec();
    shifted.rotate_left(1 % n);
    let defect: Vec<usize> = (0..n).filter(|&x| shifted[x] as u64 != scaled[x]).collect();
    let sq: Vec<usize> = img.iter().map(|&v| img[v]).collect();
    let four: Vec<usize> = (0..n).filter(|&x| sq[sq[x]] != x).collect();
    defect == report.defect && four == report.four_periodic_failures
}

/// `x ↦ m^x` while the powers are distinct (`x < ord_n(m)`), then the unused
/// residues in increasing order: a bijection whose defect sits at the seam.
pub fn exp_like_bijection(m: u64, n: u64) -> Result<ZnFunction> {
    if n < 2 || gcd(m, n) != 1 {
        return Err(Error::NotCoprime { a: m, b: n });
    }
    let order = multiplicative_order(m, n).expect("coprime") as usize;
    let n = n as usize;
    let mut image = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut v = 1 % n as u64;
    for _ in 0..order {
        image.push(v as usize);
        used[v as usize] = true;
        v = mul_mod(v, m, n as u64);
    }
    image.extend((0..n).filter(|&v| !used[v]));
    ZnFunction::new(image)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InducedG {
    pub g: ZnFunction,
    /// `|{x : g(mx) = m^m g(x)}|`.
    pub scaling_holds: usize,
}

/// `g(x) = f²(f^{−2}(x) + 1)`.
pub fn induce_g(f: &ZnFunction, m: u64) -> Result<InducedG> {
    let p = f.to_permutation()?;
    let n = p.degree();
    let f2 = p.pow(2);
    let f2inv = p.pow(-2);
    let image: Vec<usize> = (0..n).map(|x| f2.apply((f2inv.apply(x) + 1) % n)).collect();
    let g = ZnFunction::new(image)?;
    let nn = n as u64;
    let mm = mod_pow(m, m, nn);
    let scaling_holds = (0..n)
        .filter(|&x| g.apply(mul_mod(m, x as u64, nn) as usize) as u64 == mul_mod(mm, g.apply(x) as u64, nn))
        .count();
    Ok(InducedG { g, scaling_holds })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H3Witness {
    /// `d_h(w_i(g_1, g_2, g_3), id)` for `i = 1, 2, 3`.
    pub relator_defects: [HammingValue; 3],
    /// `d_h(g_1, id)`.
    pub g1_displacement: HammingValue,
    /// `g_3 = f g_1 f^{-1}` and `g_2 = f² g_1 f^{-2}` as permutations.
    pub conjugations_hold: bool,
}

/// `w(a, b) = a^{-1} b a b^{-m}` evaluated on permutations.
fn relator(a: &Permutation, b: &Permutation, m: u64) -> Result<Permutation> {
    a.inverse().compose(b)?.compose(a)?.compose(&b.pow(-(m as i64)))
}

pub fn h3_witness(f: &ZnFunction, m: u64) -> Result<H3Witness> {
    let p = f.to_permutation()?;
    let n = p.degree();
    let finv = p.inverse();
    let f2 = p.pow(2);
    let f2inv = p.pow(-2);
    let g1 = Permutation::rotation(n, -1);
    let g3 = Permutation::from_image((0..n).map(|x| p.apply((finv.apply(x) + n - 1) % n)).collect())?;
    let g2 = Permutation::from_image((0..n).map(|x| f2.apply((f2inv.apply(x) + n - 1) % n)).collect())?;
    let conjugations_hold = p.compose(&g1)?.compose(&finv)? == g3 && f2.compose(&g1)?.compose(&f2inv)? == g2;
    let relator_defects = [
        relator(&g1, &g2, m)?.displacement(),
        relator(&g2, &g3, m)?.displacement(),
        relator(&g3, &g1, m)?.displacement(),
    ];
    Ok(H3Witness {
        relator_defects,
        g1_displacement: g1.displacement(),
        conjugations_hold,
    })
}

/// Points where `f(x+1) = m f(x)` or `f³(x) = x` fails.
pub fn mezo_failures(f: &ZnFunction, m: u64) -> usize {
    let img = f.image();
    (0..img.len())
        .filter(|&x| !local_law_holds(img, m, x) || img[img[img[x]]] != x)
        .count()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MezoMinimum {
    pub n: usize,
    /// Minimum over bijections `f` and over `m` of the failing fraction.
    #[serde(with = "crate::rational::serde_str")]
    pub fraction: Rational,
    /// Smallest `m` attaining it.
    pub m: u64,
    /// Lexicographically first minimizer for that `m`.
    pub witness: ZnFunction,
}

/// Exhausts `Sym(n)` for every `m ∈ [2, n)` coprime to `n`.
pub fn mezo_minimum(n: usize) -> Result<MezoMinimum> {
    if !(2..=10).contains(&n) {
        return Err(Error::InvalidParameter(format!("exhaustion over Sym({n}) needs 2 ≤ n ≤ 10")));
    }
    let ms: Vec<u64> = (2..n as u64).filter(|&m| gcd(m, n as u64) == 1).collect();
    if ms.is_empty() {
        return Err(Error::InvalidParameter(format!("no m in [2, {n}) is coprime to {n}")));
    }
    let per_m: Vec<(usize, u64, Vec<usize>)> = ms
        .par_iter()
        .map(|&m| {
            let mut a: Vec<usize> = (0..n).collect();
            let mut best = (usize::MAX, a.clone());
            loop {
                let fails = (0..n).filter(|&x| !local_law_holds(&a, m, x) || a[a[a[x]]] != x).count();
                if fails < best.0 {
                    best = (fails, a.clone());
                }
                if !next_lexicographic(&mut a) {
                    break;
                }
            }
            (best.0, m, best.1)
        })
        .collect();
    let (fails, m, image) = per_m.into_iter().min_by_key(|t| (t.0, t.1)).expect("nonempty");
    Ok(MezoMinimum {
        n,
        fraction: ratio(fails as i64, n as i64),
        m,
        witness: ZnFunction::new(image)?,
    })
}

/// `p`, `r` and `s ≡ 1 (mod p)` for the maps `x ↦ c·s^x` on `Z/p^rZ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadicContext {
    pub p: u64,
    pub r: u32,
    pub s: u64,
    /// `m` when built from one.
    pub m: Option<u64>,
    /// `p | m − 1`: outside the proposition's hypothesis.
    pub complementary: bool,
}

impl PadicContext {
    /// `s = m^{p−1} mod p^r`.
    pub fn new(p: u64, r: u32, m: u64) -> Result<Self> {
        let modulus = Self::check(p, r)?;
        if m % p == 0 {
            return Err(Error::NotCoprime { a: m, b: p });
        }
        Ok(PadicContext {
            p,
            r,
            s: mod_pow(m, p - 1, modulus),
            m: Some(m),
            complementary: (m + p - 1) % p == 0,
        })
    }

    pub fn with_s(p: u64, r: u32, s: u64) -> Result<Self> {
        let modulus = Self::check(p, r)?;
        if s % p != 1 % p {
            return Err(Error::InvalidParameter(format!("s = {s} is not 1 mod {p}")));
        }
        Ok(PadicContext {
            p,
            r,
            s: s % modulus,
            m: None,
            complementary: false,
        })
    }

    fn check(p: u64, r: u32) -> Result<u64> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if r == 0 {
            return Err(Error::InvalidParameter("r must be at least 1".into()));
        }
        p.checked_pow(r)
            .filter(|&q| q <= u32::MAX as u64)
            .ok_or_else(|| Error::Overflow(format!("{p}^{r}")))
    }

    pub fn modulus(&self) -> u64 {
        self.p.pow(self.r)
    }

    /// `p^{r−1}`, a multiple of the period of `x ↦ s^x`.
    pub fn period(&self) -> u64 {
        self.p.pow(self.r - 1)
    }

    /// `s^x mod p^r`, exponent reduced mod `p^{r−1}`.
    pub fn s_pow(&self, x: u64) -> u64 {
        mod_pow(self.s, x % self.period(), self.modulus())
    }

    /// `[s^x : 0 ≤ x < p^r]`.
    pub fn s_table(&self) -> Vec<u64> {
        let q = self.modulus();
        let mut t = Vec::with_capacity(q as usize);
        let mut v = 1 % q;
        for _ in 0..q {
            t.push(v);
            v = mul_mod(v, self.s, q);
        }
        t
    }
}

/// `G(x_1,x_2,x_3,x_4) = (c_4 s^{x_4}, c_1 s^{x_1}, c_2 s^{x_2}, c_3 s^{x_3})`.
fn apply_g(ctx: &PadicContext, c: &[u64; 4], x: &[u64; 4], q: u64) -> [u64; 4] {
    let t = |j: usize, v: u64| mul_mod(c[j] % q, ctx.s_pow(v) % q, q);
    [t(3, x[3]), t(0, x[0]), t(1, x[1]), t(2, x[2])]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub point: [u64; 4],
    /// `G(point) = point` mod `p^r`.
    pub fixed: bool,
}

/// Determines the fixed point of `G` mod `p`, then mod `p²`, …, mod `p^r`.
pub fn padic_fixed_point(ctx: &PadicContext, c: &[u64; 4]) -> Result<LiftedPoint> {
    let q = ctx.modulus();
    if let Some(&bad) = c.iter().find(|&&cj| cj % ctx.p == 0) {
        return Err(Error::InvalidParameter(format!("c = {bad} is not a unit mod {}", ctx.p)));
    }
    // mod p every s^x is 1
    let mut x = [c[3] % ctx.p, c[0] % ctx.p, c[1] % ctx.p, c[2] % ctx.p];
    let mut pk = ctx.p;
    for _ in 1..ctx.r {
        pk *= ctx.p;
        x = apply_g(ctx, c, &x, pk);
    }
    let fixed = apply_g(ctx, c, &x, q) == x;
    Ok(LiftedPoint { point: x, fixed })
}

pub const BRUTE_FORCE_STATES: u64 = 1_000_000;

/// Every fixed point of `G` on `(Z/p^rZ)^4`, by scanning all states.
pub fn padic_fixed_points_brute(ctx: &PadicContext, c: &[u64; 4]) -> Result<Vec<[u64; 4]>> {
    let q = ctx.modulus();
    let states = q.checked_pow(4).unwrap_or(u64::MAX);
    if states > BRUTE_FORCE_STATES {
        return Err(Error::BudgetExceeded {
            what: "p-adic brute force",
            needed: states.to_string(),
            budget: BRUTE_FORCE_STATES,
        });
    }
    let table = ctx.s_table();
    let t = |j: usize, v: u64| mul_mod(c[j] % q, table[v as usize], q);
    let mut found: Vec<[u64; 4]> = (0..q)
        .into_par_iter()
        .flat_map_iter(|x1| {
            let mut local = Vec::new();
            for x2 in 0..q {
                for x3 in 0..q {
                    for x4 in 0..q {
                        let x = [x1, x2, x3, x4];
                        if [t(3, x4), t(0, x1), t(1, x2), t(2, x3)] == x {
                            local.push(x);
                        }
                    }
                }
            }
            local
        })
        .collect();
    found.sort_unstable();
    Ok(found)
}

/// Counts behind the two-branch lower bound for bijections of `Z/p^rZ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NorviReport {
    pub p: u64,
    pub r: u32,
    pub m: u64,
    /// `|{x : f(x+1) ≠ m f(x)}|`.
    pub defect: usize,
    /// `|{x : f⁴(x) ≠ x}|`.
    pub non_four_periodic: usize,
    /// Both counts agree with a second scan.
    pub consistent: bool,
    /// `p^r / 2`.
    pub four_threshold: f64,
    /// `p^{r/4−1} / 2^{1/4}`.
    pub defect_threshold: f64,
    pub four_branch: bool,
    pub defect_branch: bool,
    pub holds: bool,
    /// `r < 5`.
    pub below_proof_regime: bool,
    /// `p | m − 1`.
    pub complementary: bool,
    /// Distinct values of `g(x)·s^{−x}`, `g(x) = m^{−1} f(mx)`.
    pub multipliers: usize,
}

pub fn norvi_audit(f: &ZnFunction, m: u64) -> Result<NorviReport> {
    let n = f.n() as u64;
    let (p, r) = prime_power(n).ok_or(Error::NotPrimePower(n))?;
    let ctx = PadicContext::new(p, r, m)?;
    let report = defect_report(f, m)?;
    let consistent = recheck_defect(f, &report);
    if !f.is_bijective() {
        return Err(Error::NotBijective(f.n()));
    }
    let m_inv = mod_inv(m, n).expect("unit");
    let s_inv = mod_inv(ctx.s, n).expect("unit");
    let mut multipliers: Vec<u64> = (0..n)
        .map(|x| {
            let g = mul_mod(m_inv, f.apply(mul_mod(m, x, n) as usize) as u64, n);
            mul_mod(g, mod_pow(s_inv, x % ctx.period(), n), n)
        })
        .collect();
    multipliers.sort_unstable();
    multipliers.dedup();
    let four_threshold = n as f64 / 2.0;
    let defect_threshold = (p as f64).powf(r as f64 / 4.0 - 1.0) / 2f64.powf(0.25);
    let non_four = report.four_periodic_failures.len();
    let defect = report.defect.len();
    let four_branch = non_four as f64 >= four_threshold;
    let defect_branch = defect as f64 >= defect_threshold;
    Ok(NorviReport {
        p,
        r,
        m,
        defect,
        non_four_periodic: non_four,
        consistent,
        four_threshold,
        defect_threshold,
        four_branch,
        defect_branch,
        holds: four_branch || defect_branch,
        below_proof_regime: r < 5,
        complementary: ctx.complementary,
        multipliers: multipliers.len(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeMAudit {
    pub p: u64,
    pub m: u64,
    /// Distinct `c(x) = g(x)/x^m`, `x ≠ 0`, ascending.
    pub multipliers: Vec<u64>,
    /// `g(0)`, where no multiplier is defined.
    pub g_at_zero: u64,
    /// Largest per-triple solution count of `c_3(c_2(c_1 x^m + 1)^m + 1)^m + 1 = x`.
    pub max_per_triple: usize,
    pub total_solutions: usize,
    /// `max_per_triple ≤ m³`.
    pub cap_respected: bool,
    /// `|{x : g(g(g(x)+1)+1)+1 = x}|`.
    pub cycle_points: usize,
}

pub const DEGREE_M_BUDGET: u64 = 100_000_000;

pub fn degree_m_audit(g: &ZnFunction, m: u64) -> Result<DegreeMAudit> {
    let p = g.n() as u64;
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if m % p == 0 {
        return Err(Error::NotCoprime { a: m, b: p });
    }
    let mut multipliers: Vec<u64> = (1..p)
        .map(|x| mul_mod(g.apply(x as usize) as u64, mod_inv(mod_pow(x, m, p), p).expect("unit"), p))
        .collect();
    multipliers.sort_unstable();
    multipliers.dedup();
    let k = multipliers.len() as u64;
    let work = k.saturating_pow(3).saturating_mul(p);
    if work > DEGREE_M_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "degree-m triple scan",
            needed: work.to_string(),
            budget: DEGREE_M_BUDGET,
        });
    }
    let step = |c: u64, x: u64| mul_mod(c, mod_pow(x, m, p), p);
    let mut triples = Vec::with_capacity((k * k * k) as usize);
    for &c1 in &multipliers {
        for &c2 in &multipliers {
            for &c3 in &multipliers {
                triples.push((c1, c2, c3));
            }
        }
    }
    let counts: Vec<usize> = triples
        .par_iter()
        .map(|&(c1, c2, c3)| {
            (0..p)
                .filter(|&x| {
                    let y = (step(c1, x) + 1) % p;
                    let z = (step(c2, y) + 1) % p;
                    (step(c3, z) + 1) % p == x
                })
                .count()
        })
        .collect();
    let max_per_triple = counts.iter().copied().max().unwrap_or(0);
    let gi = |x: usize| g.apply(x);
    let pu = p as usize;
    let cycle_points = (0..pu).filter(|&x| (gi((gi((gi(x) + 1) % pu) + 1) % pu) + 1) % pu == x).count();
    Ok(DegreeMAudit {
        p,
        m,
        g_at_zero: g.apply(0) as u64,
        max_per_triple,
        total_solutions: counts.iter().sum(),
        cap_respected: (max_per_triple as u64) <= m.saturating_pow(3),
        cycle_points,
        multipliers,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Candidate evaluations (exhaustive) or proposals (annealing).
    pub budget: u64,
    pub t_start: f64,
    pub t_end: f64,
    /// Largest `n` searched exhaustively.
    pub exhaustive_max_n: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 1_000_000,
            t_start: 2.0,
            t_end: 0.02,
            exhaustive_max_n: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchResult {
    pub n: usize,
    pub m: u64,
    pub seed: u64,
    pub budget: u64,
    pub f: ZnFunction,
    /// `|D|` as tracked by the search.
    pub defect: usize,
    /// `|D|` from [`defect_report`].
    pub defect_recomputed: usize,
    /// Fixed points, 2-cycles, 4-cycles.
    pub histogram: [usize; 3],
    pub exhaustive: bool,
    pub evaluations: u64,
    /// The budget ran out before the search finished.
    pub budget_exhausted: bool,
}

/// No bijection of `Z/nZ`, `n ≥ 2`, fails the local law at fewer than two points.
pub const DEFECT_FLOOR: usize = 2;

fn defect_count(f: &[usize], m: u64) -> usize {
    (0..f.len()).filter(|&x| !local_law_holds(f, m, x)).count()
}

pub fn search_local_exp(n: usize, m: u64, seed: u64, config: &SearchConfig) -> Result<SearchResult> {
    if n < 2 || gcd(m, n as u64) != 1 {
        return Err(Error::NotCoprime { a: m, b: n as u64 });
    }
    let exhaustive = n <= config.exhaustive_max_n;
    let (image, defect, evaluations, budget_exhausted) = if exhaustive {
        exhaustive_search(n, m, config.budget)
    } else {
        anneal(n, m, seed, config)
    };
    let f = ZnFunction::new(image)?;
    let defect_recomputed = defect_report(&f, m)?.defect.len();
    let histogram = f
        .cycle_histogram()
        .ok_or_else(|| Error::Malformed("search produced a map with f⁴ ≠ id".into()))?;
    Ok(SearchResult {
        n,
        m,
        seed,
        budget: config.budget,
        f,
        defect,
        defect_recomputed,
        histogram,
        exhaustive,
        evaluations,
        budget_exhausted,
    })
}

/// Runs one search per seed in parallel; the best has the lowest defect, then the lowest seed.
pub fn search_best_of(n: usize, m: u64, seeds: &[u64], config: &SearchConfig) -> Result<SearchResult> {
    let results: Vec<SearchResult> = seeds
        .par_iter()
        .map(|&s| search_local_exp(n, m, s, config))
        .collect::<Result<_>>()?;
    results
        .into_iter()
        .min_by_key(|r| (r.defect, r.seed))
        .ok_or(Error::Empty("seed list"))
}

const UNSET: usize = usize::MAX;

/// Visits every `f` with `f⁴ = id`: the smallest free point becomes a fixed
/// point, joins a 2-cycle, or starts a 4-cycle.
fn exhaustive_search(n: usize, m: u64, budget: u64) -> (Vec<usize>, usize, u64, bool) {
    struct State {
        m: u64,
        budget: u64,
        evaluations: u64,
        best: Option<(usize, Vec<usize>)>,
        stopped: bool,
    }
    fn rec(f: &mut Vec<usize>, st: &mut State) {
        if st.stopped {
            return;
        }
        let Some(a) = f.iter().position(|&v| v == UNSET) else {
            if st.evaluations >= st.budget {
                st.stopped = true;
                return;
            }
            st.evaluations += 1;
            let d = defect_count(f, st.m);
            if st.best.as_ref().is_none_or(|b| d < b.0) {
                st.best = Some((d, f.clone()));
            }
            return;
        };
        let free: Vec<usize> = (a + 1..f.len()).filter(|&v| f[v] == UNSET).collect();
        f[a] = a;
        rec(f, st);
        for &b in &free {
            f[a] = b;
            f[b] = a;
            rec(f, st);
            f[b] = UNSET;
        }
        for &b in &free {
            for &c in &free {
                for &d in &free {
                    if b == c || c == d || b == d {
                        continue;
                    }
                    f[a] = b;
                    f[b] = c;
                    f[c] = d;
                    f[d] = a;
                    rec(f, st);
                    f[b] = UNSET;
                    f[c] = UNSET;
                    f[d] = UNSET;
                }
            }
        }
        f[a] = UNSET;
    }
    let mut st = State {
        m,
        budget,
        evaluations: 0,
        best: None,
        stopped: false,
    };
    rec(&mut vec![UNSET; n], &mut st);
    let (d, f) = st.best.unwrap_or_else(|| (defect_count(&(0..n).collect::<Vec<_>>(), m), (0..n).collect()));
    (f, d, st.evaluations, st.stopped)
}

struct Annealer {
    f: Vec<usize>,
    inv: Vec<usize>,
    m: u64,
}

impl Annealer {
    fn cycle(&self, x: usize) -> Vec<usize> {
        let mut c = vec![x];
        let mut y = self.f[x];
        while y != x {
            c.push(y);
            y = self.f[y];
        }
        c
    }

    /// Changes that turn the current map into a neighbour, or `None`.
    fn propose(&self, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
        let n = self.f.len();
        let x = rng.gen_range(0..n);
        if rng.gen_bool(0.5) {
            // conjugate by the transposition (x y)
            let y = rng.gen_range(0..n);
            if x == y {
                return None;
            }
            let tau = |z: usize| if z == x { y } else if z == y { x } else { z };
            let mut pts = vec![x, y, self.inv[x], self.inv[y]];
            pts.sort_unstable();
            pts.dedup();
            return Some(pts.into_iter().map(|z| (z, tau(self.f[tau(z)]))).collect());
        }
        let cx = self.cycle(x);
        match cx.len() {
            1 => {
                let y = rng.gen_range(0..n);
                (y != x && self.f[y] == y).then(|| vec![(x, y), (y, x)])
            }
            2 => {
                let b = cx[1];
                if rng.gen_bool(0.5) {
                    return Some(vec![(x, x), (b, b)]);
                }
                let c = rng.gen_range(0..n);
                let cc = self.cycle(c);
                if cc.len() != 2 || cc.contains(&x) {
                    return None;
                }
                let d = cc[1];
                // (x c b d), whose square is (x b)(c d)
                Some(vec![(x, c), (c, b), (b, d), (d, x)])
            }
            _ => {
                let (b, c, d) = (cx[1], cx[2], cx[3]);
                Some(vec![(x, c), (c, x), (b, d), (d, b)])
            }
        }
    }

    fn local_defect(&self, pts: &[usize]) -> usize {
        pts.iter().filter(|&&z| !local_law_holds(&self.f, self.m, z)).count()
    }

    fn set(&mut self, changes: &[(usize, usize)]) -> Vec<(usize, usize)> {
        let old: Vec<(usize, usize)> = changes.iter().map(|&(z, _)| (z, self.f[z])).collect();
        for &(z, v) in changes {
            self.f[z] = v;
        }
        for &(z, v) in changes {
            self.inv[v] = z;
        }
        old
    }
}

fn anneal(n: usize, m: u64, seed: u64, config: &SearchConfig) -> (Vec<usize>, usize, u64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // random relabelling of (0 1 2 3)(4 5 6 7)… with leftover fixed points
    let mut labels: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let mut f: Vec<usize> = (0..n).collect();
    for block in labels.chunks(4).filter(|b| b.len() == 4) {
        for i in 0..4 {
            f[block[i]] = block[(i + 1) % 4];
        }
    }
    let mut inv = vec![0; n];
    for (x, &v) in f.iter().enumerate() {
        inv[v] = x;
    }
    let mut st = Annealer { f, inv, m };
    let mut current = defect_count(&st.f, m);
    let mut best = (current, st.f.clone());
    let ratio = (config.t_end / config.t_start).max(f64::MIN_POSITIVE);
    let mut evaluations = 0;
    while evaluations < config.budget && best.0 > DEFECT_FLOOR {
        let t = config.t_start * ratio.powf(evaluations as f64 / config.budget as f64);
        evaluations += 1;
        let Some(changes) = st.propose(&mut rng) else {
            continue;
        };
        let mut pts: Vec<usize> = changes.iter().flat_map(|&(z, _)| [z, (z + n - 1) % n]).collect();
        pts.sort_unstable();
        pts.dedup();
        let before = st.local_defect(&pts);
        let old = st.set(&changes);
        let after = st.local_defect(&pts);
        let delta = after as f64 - before as f64;
        if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
            current = current + after - before;
            if current < best.0 {
                best = (current, st.f.clone());
            }
        } else {
            st.set(&old);
        }
    }
    let exhausted = best.0 > DEFECT_FLOOR;
    (best.1, best.0, evaluations, exhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_bijection(n: usize, rng: &mut ChaCha8Rng) -> ZnFunction {
        ZnFunction::from_permutation(&Permutation::random(n, rng))
    }

    #[test]
    fn defect_examples() {
        let f = exp_like_bijection(2, 5).unwrap();
        assert_eq!(f.image(), &[1, 2, 4, 3, 0]);
        let r = defect_report(&f, 2).unwrap();
        assert_eq!(r.defect, vec![3, 4]);
        assert_eq!(r.defect_fraction, ratio(2, 5));
        assert!(recheck_defect(&f, &r));

        let id = defect_report(&ZnFunction::identity(5), 2).unwrap();
        assert_eq!(id.defect, vec![0, 2, 3, 4]);
        assert!(id.four_periodic_failures.is_empty());

        let four = ZnFunction::from_permutation(&Permutation::from_cycles(8, &[&[0, 3, 5, 1], &[2, 7]]).unwrap());
        assert!(defect_report(&four, 3).unwrap().four_periodic_failures.is_empty());
        assert!(defect_report(&four, 2).is_err());
    }

    #[test]
    fn exp_like_seam() {
        for n in [7u64, 11, 13, 101, 15, 21] {
            let f = exp_like_bijection(2, n).unwrap();
            assert!(f.is_bijective());
            let d = defect_report(&f, 2).unwrap();
            let order = multiplicative_order(2, n).unwrap() as usize;
            // the law holds along the power run
            assert!(d.defect.iter().all(|&x| x + 1 >= order));
        }
    }

    #[test]
    fn json_round_trip() {
        let f = exp_like_bijection(3, 7).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, "[1,3,2,6,4,5,0]");
        assert_eq!(serde_json::from_str::<ZnFunction>(&s).unwrap(), f);
        assert!(serde_json::from_str::<ZnFunction>("[0,7]").is_err());
        let nb: ZnFunction = serde_json::from_str("[0,0,1]").unwrap();
        assert!(!nb.is_bijective());
        assert!(h3_witness(&nb, 2).is_err());
    }

    #[test]
    fn induced_g() {
        let g = induce_g(&ZnFunction::identity(9), 2).unwrap().g;
        assert_eq!(g.image(), &[1, 2, 3, 4, 5, 6, 7, 8, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let f = random_bijection(30, &mut rng);
            assert!(induce_g(&f, 7).unwrap().g.is_bijective());
        }
    }

    #[test]
    fn scaling_identity_on_exact_windows() {
        // with f(x+1) = m f(x) wherever the chain needs it, g(mx) = m^m g(x)
        let (m, n) = (2u64, 11u64);
        let f = exp_like_bijection(m, n).unwrap();
        let ig = induce_g(&f, m).unwrap();
        let img = f.image();
        let p = f.to_permutation().unwrap();
        let finv = p.inverse();
        let nn = n as usize;
        for x in 0..nn {
            let y1 = finv.apply(x);
            let y2 = finv.apply((y1 + 1) % nn);
            let y3 = p.pow(-2).apply(x);
            let y4: Vec<usize> = (0..m as usize).map(|k| (m as usize * y1 + k) % nn).collect();
            let all_good = [y1, y2, y3].iter().chain(&y4).all(|&y| local_law_holds(img, m, y));
            if all_good {
                let lhs = ig.g.apply((m as usize * x) % nn) as u64;
                assert_eq!(lhs, mod_pow(m, m, n) * ig.g.apply(x) as u64 % n, "x = {x}");
            }
        }
    }

    #[test]
    fn h3_examples() {
        let f = exp_like_bijection(2, 5).unwrap();
        let w = h3_witness(&f, 2).unwrap();
        assert_eq!(w.g1_displacement.numerator, 5);
        assert!(w.conjugations_hold);
        let d = defect_report(&f, 2).unwrap();
        assert!(w.relator_defects[2].to_rational() <= ratio(2, 1) * d.defect_fraction);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn h3_invariants(seed in any::<u64>(), n in 2usize..60, m in 2u64..20) {
            prop_assume!(gcd(m, n as u64) == 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_bijection(n, &mut rng);
            let w = h3_witness(&f, m).unwrap();
            prop_assert_eq!(w.g1_displacement.numerator, n);
            prop_assert!(w.conjugations_hold);
            let d = defect_report(&f, m).unwrap();
            prop_assert!(w.relator_defects[2].to_rational() <= ratio(2, 1) * d.defect_fraction.clone());
            prop_assert!(recheck_defect(&f, &d));
        }
    }

    #[test]
    fn mezo_minima() {
        let expected = [(4, ratio(3, 4)), (5, ratio(2, 5)), (6, ratio(2, 3)), (7, ratio(2, 7))];
        for (n, q) in expected {
            let r = mezo_minimum(n).unwrap();
            assert_eq!(r.fraction, q, "n = {n}");
            let fails = (q * ratio(n as i64, 1)).to_integer();
            assert_eq!(num_bigint::BigInt::from(mezo_failures(&r.witness, r.m)), fails);
        }
        assert!(mezo_minimum(11).is_err());
    }

    #[test]
    fn padic_lifting_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (p, r, s) in [(3u64, 3u32, 4u64), (5, 2, 16)] {
            let ctx = PadicContext::with_s(p, r, s).unwrap();
            let q = ctx.modulus();
            for _ in 0..12 {
                let mut c = [0u64; 4];
                for cj in &mut c {
                    *cj = loop {
                        let v = rng.gen_range(1..q);
                        if v % p != 0 {
                            break v;
                        }
                    };
                }
                let lifted = padic_fixed_point(&ctx, &c).unwrap();
                let brute = padic_fixed_points_brute(&ctx, &c).unwrap();
                assert!(brute.len() <= 1);
                assert_eq!(brute.first().copied(), lifted.fixed.then_some(lifted.point));
            }
        }
    }

    #[test]
    fn padic_context() {
        let ctx = PadicContext::with_s(3, 4, 1).unwrap();
        assert_eq!(padic_fixed_point(&ctx, &[1, 1, 1, 1]).unwrap(), LiftedPoint { point: [1, 1, 1, 1], fixed: true });
        assert!(padic_fixed_point(&ctx, &[1, 3, 1, 1]).is_err());
        assert!(PadicContext::with_s(3, 2, 5).is_err());
        assert!(PadicContext::new(4, 2, 3).is_err());
        let ctx = PadicContext::new(5, 3, 2).unwrap();
        assert_eq!(ctx.s, 16);
        assert!(!ctx.complementary);
        assert!(PadicContext::new(5, 3, 6).unwrap().complementary);
        // period divides p^{r-1}
        let t = ctx.s_table();
        assert!((0..125).all(|x| t[x] == t[x % 25]));
        assert!(padic_fixed_points_brute(&PadicContext::with_s(7, 2, 8).unwrap(), &[1; 4]).is_err());
    }

    #[test]
    fn norvi_exhaustive_n9() {
        let mut a: Vec<usize> = (0..9).collect();
        let mut all = Vec::with_capacity(362_880);
        loop {
            all.push(a.clone());
            if !next_lexicographic(&mut a) {
                break;
            }
        }
        let failures = all
            .par_iter()
            .filter(|img| {
                let r = norvi_audit(&ZnFunction::new(img.to_vec()).unwrap(), 2).unwrap();
                !(r.holds && r.consistent)
            })
            .count();
        assert_eq!(failures, 0);
    }

    #[test]
    fn norvi_random_243() {
        let bad = (0..1_000_000u64)
            .into_par_iter()
            .filter(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let f = random_bijection(243, &mut rng);
                !norvi_audit(&f, 2).unwrap().holds
            })
            .count();
        assert_eq!(bad, 0);
    }

    #[test]
    fn norvi_on_exp_like() {
        let f = exp_like_bijection(2, 243).unwrap();
        let r = norvi_audit(&f, 2).unwrap();
        assert_eq!(r.defect, defect_report(&f, 2).unwrap().defect.len());
        assert!(!r.below_proof_regime);
        assert!(norvi_audit(&exp_like_bijection(2, 81).unwrap(), 2).unwrap().below_proof_regime);
        assert!(r.consistent);
        assert!(norvi_audit(&ZnFunction::identity(12), 5).is_err());
    }

    #[test]
    fn degree_m() {
        let (p, m) = (101u64, 2u64);
        let g = ZnFunction::new((0..p).map(|x| mod_pow(x, m, p) as usize).collect()).unwrap();
        let a = degree_m_audit(&g, m).unwrap();
        assert_eq!(a.multipliers, vec![1]);
        assert_eq!(a.g_at_zero, 0);
        let brute = (0..p)
            .filter(|&x| {
                let y = (x * x + 1) % p;
                let z = (y * y + 1) % p;
                (z * z + 1) % p == x
            })
            .count();
        assert_eq!(a.total_solutions, brute);
        assert!(a.cap_respected);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cs: Vec<u64> = (0..4).map(|_| rng.gen_range(1..p)).collect();
            let g = ZnFunction::new(
                (0..p).map(|x| mul_mod(cs[rng.gen_range(0..4)], mod_pow(x, m, p), p) as usize).collect(),
            )
            .unwrap();
            let a = degree_m_audit(&g, m).unwrap();
            assert!(a.multipliers.len() <= 4);
            assert!(a.cap_respected);
        }
        assert!(degree_m_audit(&ZnFunction::identity(9), 2).is_err());
    }

    #[test]
    fn exhaustive_optima() {
        let expected: [(usize, u64, usize); 8] =
            [(2, 3, 2), (3, 2, 2), (4, 3, 3), (5, 2, 2), (5, 4, 3), (6, 5, 4), (7, 2, 3), (8, 3, 5)];
        let cfg = SearchConfig::default();
        for (n, m, d) in expected {
            let a = search_local_exp(n, m, 1, &cfg).unwrap();
            let b = search_local_exp(n, m, 99, &cfg).unwrap();
            assert!(a.exhaustive && !a.budget_exhausted);
            assert_eq!(a.defect, d, "n={n} m={m}");
            assert_eq!(a.defect_recomputed, d);
            assert_eq!(a.f, b.f);
            assert!(a.f.is_four_periodic());
        }
        // every map with f⁴ = id is visited: 10!·P_10
        let r = search_local_exp(10, 3, 0, &cfg).unwrap();
        assert_eq!(r.evaluations, 218_656);
        let cut = search_local_exp(8, 3, 0, &SearchConfig { budget: 50, ..cfg }).unwrap();
        assert!(cut.budget_exhausted);
        assert_eq!(cut.evaluations, 50);
    }

    #[test]
    fn annealing_outputs_are_sound() {
        let cfg = SearchConfig {
            budget: 20_000,
            ..SearchConfig::default()
        };
        for (n, m) in [(16usize, 3u64), (17, 2), (50, 3), (101, 2)] {
            let r = search_best_of(n, m, &[1, 2, 3, 4], &cfg).unwrap();
            assert!(!r.exhaustive);
            assert!(r.f.is_four_periodic());
            assert_eq!(r.defect, r.defect_recomputed);
            assert!(r.defect >= DEFECT_FLOOR);
            let again = search_local_exp(n, m, r.seed, &cfg).unwrap();
            assert_eq!(again.f, r.f);
        }
    }
}

//! The exponential map `f_{m,n}(x) = m^x mod n` on `{0..n-1}` and censuses of
//! its periodic points, plus the counting steps of the argument that 3-periodic
//! points are rare, as executable diagnostics.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, is_prime, mod_inv, mod_pow, multiplicative_order, mul_mod};
use crate::rational::{from_int, Rational};
use crate::{Error, Result};

/// `f_{m,n}` as a table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpMap {
    m: u64,
    n: u64,
    image: Vec<u32>,
}

const SPOT_CHECKS: usize = 16;

/// Tabulates `f(x+1) = m·f(x)` from `f(0) = 1` and spot-checks it against
/// square-and-multiply.
pub fn exp_map(m: u64, n: u64) -> Result<ExpMap> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("modulus n = {n} must be at least 2")));
    }
    if n > u32::MAX as u64 {
        return Err(Error::InvalidParameter(format!("modulus n = {n} is too large to tabulate")));
    }
    if gcd(m, n) != 1 {
        return Err(Error::NotCoprime { a: m, b: n });
    }
    let mut image = Vec::with_capacity(n as usize);
    let mut v = 1 % n;
    let step = m % n;
    for _ in 0..n {
        image.push(v as u32);
        v = v * step % n;
    }
    let f = ExpMap { m, n, image };
    let mut rng = ChaCha8Rng::seed_from_u64(m ^ n.rotate_left(17));
    for _ in 0..SPOT_CHECKS {
        let x = rng.gen_range(0..n);
        if f.apply(x) != mod_pow(m, x, n) {
            return Err(Error::Malformed(format!("tabulation disagrees with m^x at x = {x}")));
        }
    }
    Ok(f)
}

impl ExpMap {
    pub fn base(&self) -> u64 {
        self.m
    }

    pub fn modulus(&self) -> u64 {
        self.n
    }

    pub fn image(&self) -> &[u32] {
        &self.image
    }

    pub fn apply(&self, x: u64) -> u64 {
        self.image[x as usize] as u64
    }

    /// `|{x : f^k(x) = x}|` by iterating `f` from every point.
    pub fn count_k_periodic(&self, k: usize) -> Result<u64> {
        check_k(k)?;
        let f = &self.image;
        let mut count = 0;
        for x in 0..f.len() {
            let mut y = x;
            for _ in 0..k {
                y = f[y] as usize;
            }
            count += (y == x) as u64;
        }
        Ok(count)
    }

    /// The same counts for `k = 1..=4`, read off precomputed tables of `f², f³, f⁴`.
    pub fn counts_by_tables(&self) -> [u64; 4] {
        let f = &self.image;
        let mut table = f.clone();
        let mut counts = [0u64; 4];
        for (k, slot) in counts.iter_mut().enumerate() {
            if k > 0 {
                // f^{k+1} = f ∘ f^k
                table = table.iter().map(|&y| f[y as usize]).collect();
            }
            *slot = table.iter().enumerate().filter(|&(x, &y)| y as usize == x).count() as u64;
        }
        counts
    }

    /// The points `x` with `f^k(x) = x`, in increasing order.
    pub fn periodic_set(&self, k: usize) -> Result<Vec<u64>> {
        check_k(k)?;
        let f = &self.image;
        Ok((0..f.len())
            .filter(|&x| {
                let mut y = x;
                for _ in 0..k {
                    y = f[y] as usize;
                }
                y == x
            })
            .map(|x| x as u64)
            .collect())
    }
}

fn check_k(k: usize) -> Result<()> {
    if !(1..=4).contains(&k) {
        return Err(Error::InvalidParameter(format!("iterate k = {k} must lie in 1..=4")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCensus {
    pub n: u64,
    pub m: u64,
    /// Multiplicative order of `m` mod `n`.
    pub order: u64,
    /// `fix[k-1] = |{x : f^k(x) = x}|`, by iteration.
    pub fix: [u64; 4],
    /// The same counts from the iterate tables.
    pub fix_tables: [u64; 4],
    /// `n ≤ 4`.
    pub degenerate: bool,
}

impl CycleCensus {
    pub fn routes_agree(&self) -> bool {
        self.fix == self.fix_tables
    }
}

pub fn census(m: u64, n: u64) -> Result<CycleCensus> {
    let f = exp_map(m, n)?;
    let mut fix = [0u64; 4];
    for (k, slot) in fix.iter_mut().enumerate() {
        *slot = f.count_k_periodic(k + 1)?;
    }
    Ok(CycleCensus {
        n,
        m,
        order: multiplicative_order(m, n).expect("coprime"),
        fix,
        fix_tables: f.counts_by_tables(),
        degenerate: n <= 4,
    })
}

/// Moduli `p^r` with `p` prime in `[p_lo, p_hi]` and `r_min ≤ r ≤ r_max`, sorted, up to `max_n`.
pub fn prime_power_moduli(p_lo: u64, p_hi: u64, r_min: u32, r_max: u32, max_n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for p in crate::arith::primes_in_range(p_lo, p_hi) {
        for r in r_min.max(1)..=r_max {
            match p.checked_pow(r) {
                Some(q) if q <= max_n => out.push(q),
                _ => break,
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Runs [`census`] on every modulus coprime to `m`, on a pool of `workers`
/// threads; rows come back in the order of `moduli`.
pub fn sweep(m: u64, moduli: &[u64], workers: usize) -> Result<Vec<CycleCensus>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| {
        moduli
            .par_iter()
            .filter(|&&n| n >= 2 && gcd(m, n) == 1)
            .map(|&n| census(m, n))
            .collect()
    })
}

pub const CSV_HEADER: &str = "n,m,order,fix1,fix2,fix3,fix4,frac3,frac4";

/// CSV with header [`CSV_HEADER`]; fractions to 10 decimals.
pub fn to_csv(rows: &[CycleCensus]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let n = r.n as f64;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.10},{:.10}",
            r.n,
            r.m,
            r.order,
            r.fix[0],
            r.fix[1],
            r.fix[2],
            r.fix[3],
            r.fix[2] as f64 / n,
            r.fix[3] as f64 / n
        )
        .expect("writing to a string");
    }
    out
}

/// A modulus whose 3-periodic count exceeds `3n/4 + slack`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Finding {
    pub n: u64,
    pub count: u64,
    pub bound: f64,
}

pub fn three_cycle_findings(rows: &[CycleCensus], slack: f64) -> Vec<Finding> {
    rows.iter()
        .filter_map(|r| {
            let bound = 0.75 * r.n as f64 + slack;
            (r.fix[2] as f64 > bound).then(|| Finding {
                n: r.n,
                count: r.fix[2],
                bound,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapCensus {
    /// Smallest `k < 2/δ` maximizing the count.
    pub k: u64,
    /// `|{x ∈ X : x + k ∈ X, x + k < n}|`.
    pub count: u64,
    /// `δ²n/4 − 1`.
    pub guarantee: f64,
}

/// Finds the most frequent short gap inside `X ⊂ {0..n-1}`.
pub fn gap_census(x: &[u64], n: u64, delta: &Rational) -> Result<GapCensus> {
    if *delta <= Rational::from_integer(0.into()) {
        return Err(Error::InvalidParameter("δ must be positive".into()));
    }
    let mut member = vec![false; n as usize];
    for &v in x {
        if v >= n {
            return Err(Error::InvalidParameter(format!("{v} is outside 0..{n}")));
        }
        member[v as usize] = true;
    }
    let size = member.iter().filter(|&&b| b).count() as u64;
    if from_int(size) < delta * from_int(n) {
        return Err(Error::InvalidParameter(format!(
            "|X| = {size} is below δn = {}",
            crate::rational::to_f64(&(delta * from_int(n)))
        )));
    }
    // k < 2/δ  ⇔  k·δ < 2
    let two = from_int(2);
    let mut best = GapCensus {
        k: 1,
        count: 0,
        guarantee: crate::rational::to_f64(&(delta * delta)) * n as f64 / 4.0 - 1.0,
    };
    let mut k = 1u64;
    while k < n && from_int(k) * delta < two {
        let count = (0..(n - k) as usize)
            .filter(|&v| member[v] && member[v + k as usize])
            .count() as u64;
        if count > best.count {
            best.k = k;
            best.count = count;
        }
        k += 1;
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RictuConfig {
    /// Largest degree `d = ℓ^{m^k}` evaluated.
    pub degree_cap: u64,
    /// `C` in `c_d = d/e + C log² d`.
    pub konyagin_c: f64,
}

impl Default for RictuConfig {
    fn default() -> Self {
        RictuConfig {
            degree_cap: 1_000_000,
            konyagin_c: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RictuReport {
    pub degree: u64,
    pub roots: u64,
    /// `c_d · n^{1 − 1/d}`.
    pub bound: f64,
    /// The polynomial vanishes identically mod `n`.
    pub degenerate: bool,
    pub n_prime: bool,
    /// Prime `n`, non-degenerate, and more roots than the bound allows.
    pub violates_bound: bool,
}

/// Counts roots of `(z+k)^d − m^{κn}(z^ℓ + k) ≡ 0 (mod n)` with `d = ℓ^{m^k}`.
pub fn rictu_roots(n: u64, m: u64, k: u32, ell: u64, kappa_exp: u64, config: &RictuConfig) -> Result<RictuReport> {
    if n < 2 || gcd(m, n) != 1 {
        return Err(Error::NotCoprime { a: m, b: n });
    }
    if ell == 0 {
        return Err(Error::InvalidParameter("ℓ must be positive".into()));
    }
    let too_big = || Error::BudgetExceeded {
        what: "polynomial degree",
        needed: format!("{ell}^({m}^{k})"),
        budget: config.degree_cap,
    };
    let degree = if ell == 1 {
        1
    } else {
        let e = m.checked_pow(k).ok_or_else(too_big)?;
        let e: u32 = e.try_into().map_err(|_| too_big())?;
        ell.checked_pow(e).ok_or_else(too_big)?
    };
    if degree > config.degree_cap {
        return Err(too_big());
    }
    let order = multiplicative_order(m, n).expect("coprime");
    let exp = ((kappa_exp as u128 * n as u128) % order as u128) as u64;
    let coeff = mod_pow(m, exp, n);
    let kk = k as u64 % n;
    let roots = (0..n)
        .into_par_iter()
        .filter(|&z| {
            let lhs = mod_pow((z + kk) % n, degree, n);
            let rhs = mul_mod(coeff, (mod_pow(z, ell, n) + kk) % n, n);
            lhs == rhs
        })
        .count() as u64;
    let degenerate = ell == 1 && coeff == 1 % n;
    let d = degree as f64;
    let c_d = d / std::f64::consts::E + config.konyagin_c * d.ln().powi(2);
    let bound = c_d * (n as f64).powf(1.0 - 1.0 / d);
    let n_prime = is_prime(n);
    Ok(RictuReport {
        degree,
        roots,
        bound,
        degenerate,
        n_prime,
        violates_bound: n_prime && !degenerate && roots as f64 > bound,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KurkoRow {
    /// Wraparound count `0 ≤ c < m^k`.
    pub c: u64,
    /// `c' ≡ m^{−cn} (mod n)`.
    pub c_prime: u64,
    /// `|{y ∈ 1..n : f(y) + k ≡ f(c' y^{m^k} mod n)}|`.
    pub count: u64,
}

/// Evaluates the shifted relation for every candidate `c'`.
pub fn kurko_census(f: &ExpMap, k: u32, budget: u64) -> Result<Vec<KurkoRow>> {
    let (m, n) = (f.base(), f.modulus());
    let candidates = m.checked_pow(k).filter(|&c| c <= budget).ok_or_else(|| Error::BudgetExceeded {
        what: "wraparound candidates",
        needed: format!("{m}^{k}"),
        budget,
    })?;
    let m_inv = mod_inv(m, n).expect("coprime");
    let power = candidates;
    let kk = k as u64 % n;
    let rows = (0..candidates)
        .into_par_iter()
        .map(|c| {
            let c_prime = mod_pow(m_inv, ((c as u128 * n as u128) % multiplicative_order(m, n).unwrap() as u128) as u64, n);
            let count = (1..n)
                .filter(|&y| {
                    let arg = mul_mod(c_prime, mod_pow(y, power, n), n);
                    (f.apply(y) + kk) % n == f.apply(arg)
                })
                .count() as u64;
            KurkoRow { c, c_prime, count }
        })
        .collect();
    Ok(rows)
}

/// The counting chain for one modulus: 3-periodic set, best gap, best `c'`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub n: u64,
    pub m: u64,
    pub three_periodic: u64,
    /// `|X| ≥ δn`; when false the later steps are skipped.
    pub premise: bool,
    pub gap: Option<GapCensus>,
    pub best_kurko: Option<KurkoRow>,
    /// `δ⁴ n / (5 m^k)`.
    pub kurko_guarantee: Option<f64>,
}

pub fn proof_chain(m: u64, n: u64, delta: &Rational, budget: u64) -> Result<ChainReport> {
    let f = exp_map(m, n)?;
    let x = f.periodic_set(3)?;
    let premise = from_int(x.len() as u64) >= delta * from_int(n);
    let mut report = ChainReport {
        n,
        m,
        three_periodic: x.len() as u64,
        premise,
        gap: None,
        best_kurko: None,
        kurko_guarantee: None,
    };
    if !premise {
        return Ok(report);
    }
    let gap = gap_census(&x, n, delta)?;
    let k: u32 = gap.k.try_into().map_err(|_| Error::Overflow("gap".into()))?;
    let rows = kurko_census(&f, k, budget)?;
    let best = rows.into_iter().max_by(|a, b| a.count.cmp(&b.count).then(b.c.cmp(&a.c)));
    let d = crate::rational::to_f64(delta);
    report.kurko_guarantee = Some(d.powi(4) * n as f64 / (5.0 * (m as f64).powi(k as i32)));
    report.gap = Some(gap);
    report.best_kurko = best;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn small_tables() {
        assert_eq!(exp_map(2, 5).unwrap().image(), &[1, 2, 4, 3, 1]);
        assert_eq!(exp_map(2, 3).unwrap().image(), &[1, 2, 1]);
        for (m, n) in [(3u64, 7u64), (5, 12), (2, 1001)] {
            assert_eq!(exp_map(m, n).unwrap().apply(0), 1);
        }
        assert!(matches!(exp_map(2, 10), Err(Error::NotCoprime { .. })));
        assert!(exp_map(2, 1).is_err());
    }

    #[test]
    fn running_product_matches_powering() {
        for n in 2..=10_000u64 {
            for m in [2u64, 3] {
                if gcd(m, n) != 1 {
                    continue;
                }
                let f = exp_map(m, n).unwrap();
                if n % 97 == 0 || n < 200 {
                    for x in 0..n {
                        assert_eq!(f.apply(x), mod_pow(m, x, n));
                    }
                }
            }
        }
    }

    #[test]
    fn periodic_examples() {
        let f = exp_map(2, 5).unwrap();
        assert_eq!(f.count_k_periodic(1).unwrap(), 1);
        assert_eq!(f.periodic_set(1).unwrap(), vec![3]);
        assert_eq!(exp_map(2, 3).unwrap().count_k_periodic(3).unwrap(), 0);
        assert!(f.count_k_periodic(0).is_err());
        assert!(f.count_k_periodic(5).is_err());
    }

    #[test]
    fn iteration_and_tables_agree() {
        for n in 2..3000u64 {
            for m in [2u64, 3, 5] {
                if gcd(m, n) == 1 {
                    let c = census(m, n).unwrap();
                    assert!(c.routes_agree(), "m={m} n={n}");
                    assert!(c.fix.iter().all(|&v| v <= n));
                }
            }
        }
    }

    #[test]
    fn sweep_is_ordered_and_csv_is_well_formed() {
        let moduli = crate::arith::primes_in_range(3, 400);
        let rows = sweep(2, &moduli, 3).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), moduli);
        let serial: Vec<CycleCensus> = moduli.iter().map(|&n| census(2, n).unwrap()).collect();
        assert_eq!(rows, serial);
        let csv = to_csv(&rows[..2]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        let r = &rows[0];
        assert_eq!(
            lines[1],
            format!(
                "3,2,2,{},{},{},{},{:.10},{:.10}",
                r.fix[0], r.fix[1], r.fix[2], r.fix[3],
                r.fix[2] as f64 / 3.0, r.fix[3] as f64 / 3.0
            )
        );
        // 2 is skipped for m = 2
        assert_eq!(sweep(2, &[2, 3], 1).unwrap().len(), 1);
    }

    #[test]
    fn prime_power_lists() {
        assert_eq!(prime_power_moduli(3, 5, 1, 3, 1000), vec![3, 5, 9, 25, 27, 125]);
        assert_eq!(prime_power_moduli(3, 3, 2, 2, 1000), vec![9]);
    }

    #[test]
    fn gaps() {
        let all: Vec<u64> = (0..50).collect();
        let g = gap_census(&all, 50, &ratio(1, 1)).unwrap();
        assert_eq!((g.k, g.count), (1, 49));
        let evens: Vec<u64> = (0..100).step_by(2).collect();
        let g = gap_census(&evens, 100, &ratio(1, 2)).unwrap();
        assert_eq!((g.k, g.count), (2, 49));
        assert!(gap_census(&evens, 100, &ratio(3, 4)).is_err());
        for n in [30u64, 100, 997] {
            let ap: Vec<u64> = (0..n).step_by(3).collect();
            let delta = ratio(ap.len() as i64, n as i64);
            let g = gap_census(&ap, n, &delta).unwrap();
            assert_eq!(g.k, 3);
            assert!(g.count as f64 >= g.guarantee);
        }
    }

    #[test]
    fn gap_guarantee_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(10..400u64);
            let p = rng.gen_range(0.05..0.9);
            let x: Vec<u64> = (0..n).filter(|_| rng.gen_bool(p)).collect();
            if x.is_empty() {
                continue;
            }
            let delta = ratio(x.len() as i64, n as i64);
            let g = gap_census(&x, n, &delta).unwrap();
            assert!(g.count as f64 >= g.guarantee, "n={n} |X|={}", x.len());
        }
    }

    #[test]
    fn rictu_cases() {
        let cfg = RictuConfig::default();
        let r = rictu_roots(101, 2, 1, 1, 0, &cfg).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.roots, 101);
        assert!(!r.violates_bound);

        let r = rictu_roots(101, 2, 1, 2, 3, &cfg).unwrap();
        assert_eq!(r.degree, 4);
        // brute force oracle
        let coeff = mod_pow(2, 3 * 101, 101);
        let brute = (0..101u64)
            .filter(|&z| mod_pow(z + 1, 4, 101) == coeff * ((z * z + 1) % 101) % 101)
            .count() as u64;
        assert_eq!(r.roots, brute);
        assert!(r.roots <= 101);
        assert!(r.roots <= 4, "a quartic has at most 4 roots mod a prime");

        assert!(matches!(
            rictu_roots(101, 2, 5, 3, 1, &cfg),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn kurko_and_chain() {
        let f = exp_map(2, 101).unwrap();
        let rows = kurko_census(&f, 2, 1 << 10).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].c_prime, 1);
        for r in &rows {
            let brute = (1..101u64)
                .filter(|&y| (f.apply(y) + 2) % 101 == f.apply(r.c_prime * mod_pow(y, 4, 101) % 101))
                .count() as u64;
            assert_eq!(r.count, brute);
        }
        let mut completed = None;
        for n in (101..3000u64).step_by(2) {
            let x = exp_map(2, n).unwrap().periodic_set(3).unwrap().len() as i64;
            if x < 2 {
                continue;
            }
            match proof_chain(2, n, &ratio(x, n as i64), 1 << 12) {
                Ok(c) => {
                    completed = Some(c);
                    break;
                }
                Err(e) => assert!(matches!(e, Error::BudgetExceeded { .. })),
            }
        }
        let chain = completed.expect("some modulus has a short gap");
        assert!(chain.premise);
        let gap = chain.gap.as_ref().unwrap();
        assert!(gap.count as f64 >= gap.guarantee);
        assert!(chain.best_kurko.is_some());
        let none = proof_chain(2, 1009, &ratio(9, 10), 1 << 12).unwrap();
        assert!(!none.premise);
    }
}

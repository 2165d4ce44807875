//! The probability `P_n` that a uniform permutation of `n` points satisfies
//! `σ⁴ = id`, computed exactly by its recurrence, and the counting bound on
//! `|S_n|` it is weighed against.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::perm::next_lexicographic;
use crate::rational::{from_int, Rational};
use crate::{Error, Result};

pub const DEFAULT_N_EXACT: usize = 500;
pub const MAX_N: usize = 100_000;

/// `P_1..P_N`: exact up to `n_exact`, natural logs throughout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RationalSeq {
    #[serde(with = "crate::rational::serde_vec")]
    exact: Vec<Rational>,
    log: Vec<f64>,
}

impl RationalSeq {
    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn exact_len(&self) -> usize {
        self.exact.len()
    }

    /// `P_n`, `1 ≤ n ≤ exact_len()`.
    pub fn exact(&self, n: usize) -> Option<&Rational> {
        n.checked_sub(1).and_then(|i| self.exact.get(i))
    }

    /// `ln P_n`, `1 ≤ n ≤ len()`.
    pub fn log(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.log.get(i).copied())
    }
}

fn ln_bigint(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().expect("finite").ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn ln_rational(q: &Rational) -> f64 {
    ln_bigint(q.numer()) - ln_bigint(q.denom())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// `n P_n = P_{n−1} + P_{n−2} + P_{n−4}` with `P_0 = 1` and `P_k = 0` for `k < 0`.
pub fn p_sequence(n_max: usize, n_exact: usize) -> Result<RationalSeq> {
    if n_max == 0 || n_max > MAX_N {
        return Err(Error::InvalidParameter(format!("N = {n_max} must lie in 1..={MAX_N}")));
    }
    let n_exact = n_exact.min(n_max);
    let mut exact: Vec<Rational> = vec![Rational::one()];
    for n in 1..=n_exact {
        let back = |k: usize| n.checked_sub(k).map_or_else(Rational::zero, |i| exact[i].clone());
        let v = (back(1) + back(2) + back(4)) / from_int(n as u64);
        exact.push(v);
    }
    let mut log = vec![0.0f64];
    for n in 1..=n_max {
        let back = |k: usize| n.checked_sub(k).map_or(f64::NEG_INFINITY, |i| log[i]);
        let v = if n <= n_exact {
            ln_rational(&exact[n])
        } else {
            log_sum_exp(&[back(1), back(2), back(4)]) - (n as f64).ln()
        };
        log.push(v);
    }
    exact.remove(0);
    log.remove(0);
    Ok(RationalSeq { exact, log })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropertyReport {
    pub non_increasing: bool,
    /// `n` with `P_n ≥ 1/⌊n/4⌋!`.
    pub factorial_bound_failures: Vec<usize>,
    /// `n ≥ 5` with `P_n > 3 P_{n−4} / n`.
    pub step_bound_failures: Vec<usize>,
    /// `n` where `n!·P_n` is not an integer.
    pub non_integral: Vec<usize>,
}

/// Checks the exact part of `seq`.
pub fn check_properties(seq: &RationalSeq) -> PropertyReport {
    let ex = &seq.exact;
    let mut report = PropertyReport {
        non_increasing: ex.windows(2).all(|w| w[1] <= w[0]),
        factorial_bound_failures: Vec::new(),
        step_bound_failures: Vec::new(),
        non_integral: Vec::new(),
    };
    let mut fact = BigInt::one();
    let mut quarter_fact = BigInt::one();
    for (i, p) in ex.iter().enumerate() {
        let n = i + 1;
        fact *= n;
        if n % 4 == 0 {
            quarter_fact *= n / 4;
        }
        if p * Rational::from_integer(quarter_fact.clone()) >= Rational::one() {
            report.factorial_bound_failures.push(n);
        }
        if n >= 5 && p * from_int(n as u64) > from_int(3) * &ex[i - 4] {
            report.step_bound_failures.push(n);
        }
        if !(p * Rational::from_integer(fact.clone())).is_integer() {
            report.non_integral.push(n);
        }
    }
    report
}

/// `n!·P_n` as an integer.
pub fn involution4_count(seq: &RationalSeq, n: usize) -> Option<BigInt> {
    let p = seq.exact(n)?;
    let fact: BigInt = (1..=n).map(BigInt::from).product();
    let v = p * Rational::from_integer(fact);
    v.is_integer().then(|| v.to_integer())
}

/// `|{σ ∈ Sym(n) : σ⁴ = id}|` by enumerating `Sym(n)`.
pub fn sym_census(n: usize) -> Result<u64> {
    if n > 10 {
        return Err(Error::InvalidParameter(format!("enumerating Sym({n}) is out of budget")));
    }
    if n == 0 {
        return Ok(1);
    }
    // split on σ(0) so each worker enumerates (n−1)! permutations
    Ok((0..n)
        .into_par_iter()
        .map(|first| {
            let mut rest: Vec<usize> = (0..n).filter(|&v| v != first).collect();
            let mut count = 0u64;
            let mut a = vec![0; n];
            loop {
                a[0] = first;
                a[1..].copy_from_slice(&rest);
                count += (0..n).all(|x| a[a[a[a[x]]]] == x) as u64;
                if !next_lexicographic(&mut rest) {
                    break;
                }
            }
            count
        })
        .sum())
}

fn ln_factorial(x: f64) -> f64 {
    libm::lgamma(x + 1.0)
}

/// `ln(C(n, m) · n!/(n−m)!)` with real `m`.
fn ln_s_bound(n: f64, m: f64) -> f64 {
    2.0 * ln_factorial(n) - ln_factorial(m) - 2.0 * ln_factorial(n - m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogBound {
    pub n: usize,
    pub eps: f64,
    /// `m = ⌊εn⌋`.
    pub m: usize,
    pub log_s_bound: f64,
    pub log_p: f64,
    pub log_product: f64,
    /// The same product with `m = εn` real.
    pub smooth_log_product: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailReport {
    pub eps: f64,
    pub rows: Vec<LogBound>,
    /// `ln Σ_{n=N}^{N_max} |S_n|-bound · P_n`.
    pub log_tail_sum: f64,
    /// Smallest `n` from which the smooth log-product decreases up to `N_max`.
    pub decreasing_from: Option<usize>,
    /// `ε < 1/4`; decay is only claimed then.
    pub decay_claimed: bool,
}

pub fn s_bound_tail(n_start: usize, n_max: usize, eps: f64, seq: &RationalSeq) -> Result<TailReport> {
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("ε = {eps} must lie in [0, 1)")));
    }
    if n_start == 0 || n_start > n_max || n_max > seq.len() {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ N = {n_start} ≤ N_max = {n_max} ≤ {}",
            seq.len()
        )));
    }
    let rows: Vec<LogBound> = (n_start..=n_max)
        .map(|n| {
            let nf = n as f64;
            let m = (eps * nf).floor() as usize;
            let log_s_bound = ln_s_bound(nf, m as f64);
            let log_p = seq.log(n).expect("in range");
            LogBound {
                n,
                eps,
                m,
                log_s_bound,
                log_p,
                log_product: log_s_bound + log_p,
                smooth_log_product: ln_s_bound(nf, eps * nf) + log_p,
            }
        })
        .collect();
    let log_tail_sum = log_sum_exp(&rows.iter().map(|r| r.log_product).collect::<Vec<_>>());
    let mut decreasing_from = Some(n_max);
    for w in rows.windows(2).rev() {
        if w[1].smooth_log_product < w[0].smooth_log_product {
            decreasing_from = Some(w[0].n);
        } else {
            if w[1].n == n_max {
                decreasing_from = None;
            }
            break;
        }
    }
    Ok(TailReport {
        eps,
        rows,
        log_tail_sum,
        decreasing_from,
        decay_claimed: eps < 0.25,
    })
}

pub const CSV_HEADER: &str = "n,P_n_num,P_n_den,log_Pn,log_Sn_bound,log_product";

/// One row per `n ≤ N`; numerator and denominator are empty past the exact range.
pub fn to_csv(seq: &RationalSeq, eps: f64) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for n in 1..=seq.len() {
        let (num, den) = seq
            .exact(n)
            .map_or((String::new(), String::new()), |p| (p.numer().to_string(), p.denom().to_string()));
        let log_p = seq.log(n).expect("in range");
        let log_s = ln_s_bound(n as f64, (eps * n as f64).floor());
        writeln!(out, "{n},{num},{den},{log_p:.10},{log_s:.10},{:.10}", log_s + log_p).expect("string");
    }
    out
}

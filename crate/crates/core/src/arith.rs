//! Machine-word modular arithmetic and prime enumeration.

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[inline]
pub fn mul_mod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

/// Square-and-multiply `base^exp mod n`. Returns 0 when `n == 1`.
pub fn mod_pow(base: u64, mut exp: u64, n: u64) -> u64 {
    if n == 1 {
        return 0;
    }
    let mut acc = 1u64;
    let mut b = base % n;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, b, n);
        }
        b = mul_mod(b, b, n);
        exp >>= 1;
    }
    acc
}

/// Inverse of `a` modulo `n`, if it exists.
pub fn mod_inv(a: u64, n: u64) -> Option<u64> {
    if n == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (n as i128, (a % n) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(n as i128) as u64)
}

/// `m^e mod n` for a signed exponent; requires `gcd(m, n) = 1` when `e < 0`.
pub fn mod_pow_signed(m: u64, e: i64, n: u64) -> Option<u64> {
    if e >= 0 {
        Some(mod_pow(m, e as u64, n))
    } else {
        mod_inv(m, n).map(|inv| mod_pow(inv, e.unsigned_abs(), n))
    }
}

/// Reduces a signed integer into `{0..n-1}`.
#[inline]
pub fn reduce_i128(v: i128, n: u64) -> u64 {
    v.rem_euclid(n as i128) as u64
}

/// Deterministic Miller–Rabin for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Prime factorisation by trial division, as `(prime, exponent)` pairs in increasing order.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n)
        .into_iter()
        .fold(n, |acc, (p, _)| acc / p * (p - 1))
}

/// Multiplicative order of `m` modulo `n` (`gcd(m, n) = 1`, `n ≥ 2`).
pub fn multiplicative_order(m: u64, n: u64) -> Option<u64> {
    if n < 2 || gcd(m, n) != 1 {
        return None;
    }
    let mut order = euler_phi(n);
    for (p, _) in factorize(order) {
        while order % p == 0 && mod_pow(m, order / p, n) == 1 {
            order /= p;
        }
    }
    Some(order)
}

/// `Some((p, r))` if `n = p^r` with `p` prime and `r ≥ 1`.
pub fn prime_power(n: u64) -> Option<(u64, u32)> {
    match factorize(n).as_slice() {
        [(p, r)] => Some((*p, *r)),
        _ => None,
    }
}

/// All primes in `[lo, hi]` via a segmented sieve of Eratosthenes.
pub fn primes_in_range(lo: u64, hi: u64) -> Vec<u64> {
    if hi < 2 || lo > hi {
        return Vec::new();
    }
    let lo = lo.max(2);
    let root = (hi as f64).sqrt() as u64 + 1;
    let mut small = vec![true; root as usize + 1];
    let mut base = Vec::new();
    for i in 2..=root as usize {
        if small[i] {
            base.push(i as u64);
            let mut j = i * i;
            while j <= root as usize {
                small[j] = false;
                j += i;
            }
        }
    }
    const SEGMENT: u64 = 1 << 16;
    let mut out = Vec::new();
    let mut start = lo;
    while start <= hi {
        let end = (start + SEGMENT - 1).min(hi);
        let mut seg = vec![true; (end - start + 1) as usize];
        for &p in &base {
            if p * p > end {
                break;
            }
            let first = (start.div_ceil(p) * p).max(p * p);
            let mut j = first;
            while j <= end {
                seg[(j - start) as usize] = false;
                j += p;
            }
        }
        out.extend(
            seg.iter()
                .enumerate()
                .filter(|(_, &is_p)| is_p)
                .map(|(i, _)| start + i as u64),
        );
        start = end + 1;
    }
    out
}

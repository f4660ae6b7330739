//! GF(2) polynomial arithmetic and the linear feedback shift register that
//! backs the Wegman-Carter hash.
//!
//! Polynomials are bit masks: bit `j` is the coefficient of `x^j`, so the
//! AES polynomial `x^8 + x^4 + x^3 + x + 1` is `0x11b`. Degrees up to 127
//! fit the `u128` representation, which covers every tag length the
//! protocol can ask for.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Gf2Error {
    #[error("polynomial degree {0} outside supported range 1..=127")]
    DegreeOutOfRange(usize),
    #[error("no irreducible polynomial found from the given selector")]
    NoIrreducible,
}

pub fn degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

/// `a mod p` for polynomials over GF(2).
pub fn poly_mod(mut a: u128, p: u128) -> u128 {
    let dp = degree(p);
    while degree(a) >= dp && a != 0 {
        a ^= p << (degree(a) - dp);
    }
    a
}

/// `a * b mod p`, with both inputs already reduced below `p`.
///
/// Shift-and-reduce keeps every intermediate below `2^t`, so no wide
/// arithmetic is needed.
pub fn poly_mulmod(mut a: u128, mut b: u128, p: u128) -> u128 {
    let t = degree(p);
    let mut res = 0u128;
    while b != 0 {
        if b & 1 == 1 {
            res ^= a;
        }
        b >>= 1;
        a <<= 1;
        if degree(a) == t {
            a ^= p;
        }
    }
    res
}

pub fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_mod(a, b);
        a = b;
        b = r;
    }
    a
}

/// `x^(2^k) mod p` by repeated squaring.
fn x_pow_pow2(k: usize, p: u128) -> u128 {
    let mut r = poly_mod(2, p); // x
    for _ in 0..k {
        r = poly_mulmod(r, r, p);
    }
    r
}

fn prime_divisors(mut t: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= t {
        if t % d == 0 {
            out.push(d);
            while t % d == 0 {
                t /= d;
            }
        }
        d += 1;
    }
    if t > 1 {
        out.push(t);
    }
    out
}

/// Rabin's irreducibility test over GF(2).
pub fn is_irreducible(p: u128) -> bool {
    let t = degree(p);
    if t < 1 {
        return false; // constants
    }
    if t == 1 {
        return true; // x and x + 1
    }
    if p & 1 == 0 {
        return false; // divisible by x
    }
    let t = t as usize;
    let x = poly_mod(2, p);
    if x_pow_pow2(t, p) != x {
        return false;
    }
    for q in prime_divisors(t) {
        if poly_gcd(x_pow_pow2(t / q, p) ^ x, p) != 1 {
            return false;
        }
    }
    true
}

/// Resolve a `t`-bit selector into an irreducible degree-`t` polynomial.
///
/// The candidate is `x^t + selector-bits + 1` with the constant term forced
/// on; failures step the selector by two (staying odd, wrapping modulo
/// `2^t`) until an irreducible polynomial appears. Both parties run the same
/// deterministic search, so no extra communication is needed.
pub fn resolve_irreducible(t: usize, selector: u128) -> Result<u128, Gf2Error> {
    if t == 0 || t > 127 {
        return Err(Gf2Error::DegreeOutOfRange(t));
    }
    let low_mask = (1u128 << t) - 1;
    let mut v = (selector | 1) & low_mask;
    let steps = 1u128 << (t - 1).min(30); // enough: irreducibles are dense (~1/t)
    for _ in 0..steps {
        let candidate = (1u128 << t) | v;
        if is_irreducible(candidate) {
            return Ok(candidate);
        }
        v = (v + 2) & low_mask;
        v |= 1;
    }
    Err(Gf2Error::NoIrreducible)
}

/// Fibonacci LFSR with connection polynomial `p(x) = x^t + sum p_j x^j`.
///
/// Register bit `j` holds `s_{k+j}`; each clock outputs `s_k` and feeds back
/// `s_{k+t} = XOR_j p_j s_{k+j}`. A zero initial state would produce the
/// all-zero stream (and a forgeable hash), so it is replaced by 1.
#[derive(Debug, Clone)]
pub struct Lfsr {
    reg: u128,
    taps: u128,
    t: usize,
}

impl Lfsr {
    pub fn new(poly: u128, initial_state: u128) -> Self {
        let t = degree(poly) as usize;
        let mask = (1u128 << t) - 1;
        let mut reg = initial_state & mask;
        if reg == 0 {
            reg = 1;
        }
        Self {
            reg,
            taps: poly & mask,
            t,
        }
    }

    pub fn clock(&mut self) -> bool {
        let out = self.reg & 1 == 1;
        let fb = ((self.reg & self.taps).count_ones() & 1) as u128;
        self.reg = (self.reg >> 1) | (fb << (self.t - 1));
        out
    }

    pub fn stream(&mut self, n: usize) -> crate::bits::BitSequence {
        (0..n).map(|_| self.clock()).collect()
    }
}

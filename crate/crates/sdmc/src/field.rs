//! Prime-field arithmetic, roots of unity, DFT/IDFT at the roots of unity,
//! and Lagrange interpolation at arbitrary distinct points.
//!
//! All share encodings in this crate are evaluations of polynomials at the
//! N-th roots of unity in F_q, so every consumer goes through [`FieldSpec`].
//! The field must satisfy N | (q-1) for the N-th roots to exist.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A canonical element of F_q, always reduced to [0, q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fe(pub u64);

/// An immutable description of F_q: the modulus, the smallest primitive
/// root, and cached primitive N-th roots.
#[derive(Debug, Clone, Eq)]
pub struct FieldSpec {
    q: u64,
    generator: u64,
    root_cache: BTreeMap<u64, u64>,
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q
    }
}

const SEARCH_CEILING: u64 = 1 << 62;

impl FieldSpec {
    /// Builds the field F_q. Fails if q is not prime.
    pub fn new(q: u64) -> Result<Self> {
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        let factors = distinct_prime_factors(q - 1);
        let generator = smallest_primitive_root(q, &factors);
        Ok(FieldSpec {
            q,
            generator,
            root_cache: BTreeMap::new(),
        })
    }

    /// Smallest prime q >= max(min_q, N+1) with N | (q-1), with the
    /// primitive N-th root precomputed and cached.
    pub fn find_field(n: u64, min_q: u64) -> Result<Self> {
        assert!(n >= 1 && min_q >= 2);
        let start = min_q.max(n + 1);
        // Candidates are exactly the values == 1 (mod n).
        let mut q = if start % n == 1 {
            start
        } else {
            start + (n + 1 - start % n) % n
        };
        if n == 1 {
            q = start;
        }
        while q < SEARCH_CEILING {
            if is_prime(q) {
                let mut f = FieldSpec::new(q)?;
                let root = f.primitive_nth_root(n)?;
                f.root_cache.insert(n, root.0);
                return Ok(f);
            }
            q += if n == 1 { 1 } else { n };
        }
        Err(Error::SearchBoundExceeded {
            n,
            bound: SEARCH_CEILING,
        })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn elem(&self, v: u64) -> Fe {
        Fe(v % self.q)
    }

    pub fn zero(&self) -> Fe {
        Fe(0)
    }

    pub fn one(&self) -> Fe {
        Fe(1 % self.q)
    }

    pub fn add(&self, a: Fe, b: Fe) -> Fe {
        let s = a.0 + b.0;
        Fe(if s >= self.q { s - self.q } else { s })
    }

    pub fn sub(&self, a: Fe, b: Fe) -> Fe {
        Fe(if a.0 >= b.0 {
            a.0 - b.0
        } else {
            a.0 + self.q - b.0
        })
    }

    pub fn neg(&self, a: Fe) -> Fe {
        Fe(if a.0 == 0 { 0 } else { self.q - a.0 })
    }

    pub fn mul(&self, a: Fe, b: Fe) -> Fe {
        Fe((a.0 as u128 * b.0 as u128 % self.q as u128) as u64)
    }

    pub fn pow(&self, base: Fe, mut exp: u64) -> Fe {
        let mut base = base;
        let mut acc = self.one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; a must be nonzero.
    pub fn inv(&self, a: Fe) -> Fe {
        assert!(a.0 != 0, "inverse of zero");
        self.pow(a, self.q - 2)
    }

    /// alpha_N = g^((q-1)/N) for the smallest primitive root g, so the root
    /// choice is deterministic for a fixed field. Has order exactly N.
    pub fn primitive_nth_root(&self, n: u64) -> Result<Fe> {
        if n == 0 || (self.q - 1) % n != 0 {
            return Err(Error::OrderNotDividing {
                n,
                q_minus_1: self.q - 1,
            });
        }
        if let Some(&r) = self.root_cache.get(&n) {
            return Ok(Fe(r));
        }
        let alpha = self.pow(Fe(self.generator), (self.q - 1) / n);
        debug_assert_eq!(self.pow(alpha, n), self.one());
        Ok(alpha)
    }

    /// Evaluates the polynomial with the given coefficients at the N-th
    /// roots of unity: out[i] = sum_l coeffs[l] * alpha_N^(i*l).
    pub fn dft(&self, coeffs: &[Fe]) -> Result<Vec<Fe>> {
        let n = coeffs.len() as u64;
        let alpha = self.primitive_nth_root(n)?;
        Ok(self.transform(coeffs, alpha))
    }

    /// Inverse of [`FieldSpec::dft`]: coefficient recovery from evaluations.
    pub fn idft(&self, evals: &[Fe]) -> Result<Vec<Fe>> {
        let n = evals.len() as u64;
        let alpha = self.primitive_nth_root(n)?;
        let mut out = self.transform(evals, self.inv(alpha));
        let n_inv = self.inv(self.elem(n));
        for v in &mut out {
            *v = self.mul(*v, n_inv);
        }
        Ok(out)
    }

    fn transform(&self, input: &[Fe], root: Fe) -> Vec<Fe> {
        let n = input.len();
        if n.is_power_of_two() && n >= 2 {
            let mut data = input.to_vec();
            self.ntt_radix2(&mut data, root);
            data
        } else {
            // Reference path: naive O(N^2) evaluation.
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let w = self.pow(root, i as u64);
                let mut acc = self.zero();
                // Horner over coefficients in reverse order.
                for &c in input.iter().rev() {
                    acc = self.add(self.mul(acc, w), c);
                }
                out.push(acc);
            }
            out
        }
    }

    /// Iterative radix-2 Cooley-Tukey; data.len() must be a power of two.
    fn ntt_radix2(&self, data: &mut [Fe], root: Fe) {
        let n = data.len();
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let wlen = self.pow(root, (n / len) as u64);
            for start in (0..n).step_by(len) {
                let mut w = self.one();
                for k in 0..len / 2 {
                    let u = data[start + k];
                    let v = self.mul(data[start + k + len / 2], w);
                    data[start + k] = self.add(u, v);
                    data[start + k + len / 2] = self.sub(u, v);
                    w = self.mul(w, wlen);
                }
            }
            len <<= 1;
        }
    }

    /// Coefficients c_0..c_{d-1} of the unique polynomial of degree < d
    /// through the first d supplied points.
    pub fn lagrange_interpolate(&self, points: &[(Fe, Fe)], degree_bound: usize) -> Result<Vec<Fe>> {
        if points.len() < degree_bound {
            return Err(Error::InsufficientPoints {
                needed: degree_bound,
                got: points.len(),
            });
        }
        for (i, (xi, _)) in points.iter().enumerate() {
            for (xj, _) in points.iter().skip(i + 1) {
                if xi == xj {
                    return Err(Error::DuplicateAbscissa);
                }
            }
        }
        let pts = &points[..degree_bound];
        let d = degree_bound;
        let mut coeffs = vec![self.zero(); d];
        for (j, &(xj, yj)) in pts.iter().enumerate() {
            // Basis polynomial prod_{m != j} (x - x_m) / (x_j - x_m).
            let mut basis = vec![self.zero(); d];
            basis[0] = self.one();
            let mut deg = 0usize;
            let mut denom = self.one();
            for (m, &(xm, _)) in pts.iter().enumerate() {
                if m == j {
                    continue;
                }
                for k in (0..=deg).rev() {
                    let shifted = basis[k];
                    basis[k] = self.mul(basis[k], self.neg(xm));
                    if k + 1 < d {
                        basis[k + 1] = self.add(basis[k + 1], shifted);
                    }
                }
                deg += 1;
                denom = self.mul(denom, self.sub(xj, xm));
            }
            let scale = self.mul(yj, self.inv(denom));
            for k in 0..d {
                coeffs[k] = self.add(coeffs[k], self.mul(basis[k], scale));
            }
        }
        Ok(coeffs)
    }

    /// Evaluates a coefficient vector at x by Horner's rule.
    pub fn eval_poly(&self, coeffs: &[Fe], x: Fe) -> Fe {
        let mut acc = self.zero();
        for &c in coeffs.iter().rev() {
            acc = self.add(self.mul(acc, x), c);
        }
        acc
    }
}

/// Deterministic Miller-Rabin, valid for the full 64-bit range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    base %= m;
    let mut acc = 1u64 % m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Distinct prime factors via trial division with a Pollard rho fallback
/// for large cofactors.
fn distinct_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut p = 2u64;
    while p <= 1_000_000 && p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            if is_prime(m) {
                if !out.contains(&m) {
                    out.push(m);
                }
            } else {
                let d = pollard_rho(m);
                stack.push(d);
                stack.push(m / d);
            }
        }
    }
    out.sort_unstable();
    out
}

fn pollard_rho(n: u64) -> u64 {
    assert!(n > 1 && n % 2 != 0);
    let mut c = 1u64;
    loop {
        let mut x = 2u64;
        let mut y = 2u64;
        let mut d = 1u64;
        while d == 1 {
            x = (mul_mod(x, x, n) + c) % n;
            y = (mul_mod(y, y, n) + c) % n;
            y = (mul_mod(y, y, n) + c) % n;
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn smallest_primitive_root(q: u64, factors: &[u64]) -> u64 {
    if q == 2 {
        return 1;
    }
    'cand: for g in 2..q {
        for &p in factors {
            if pow_mod(g, (q - 1) / p, q) == 1 {
                continue 'cand;
            }
        }
        return g;
    }
    unreachable!("every prime field has a primitive root")
}

//! Exact arithmetic shared by every other module: odd primes with modular
//! kernels, rationals over checked `i128`, and affine maps in both the
//! rational model and the reduced model over F_p.
//!
//! All integer arithmetic is checked; overflow is an error, never a wrap.
//! Rationals are kept in lowest terms with a positive denominator, so
//! structural equality is semantic equality.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// An odd prime modulus, validated on construction.
///
/// The bound p < 2^62 keeps `signed_rep` inside i64 and keeps every u64
/// product representable in u128.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prime(u64);

/// Largest modulus accepted by [`Prime::new`].
pub const MAX_PRIME: u64 = 1 << 62;

impl Prime {
    pub fn new(p: u64) -> Result<Prime> {
        if p < 3 || p >= MAX_PRIME || !is_prime(p) {
            return Err(Error::DegenerateParams {
                reason: format!("{p} is not an odd prime below 2^62"),
            });
        }
        Ok(Prime(p))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    /// Number of {x, -x} orbits in F_p, i.e. (p+1)/2.
    #[inline]
    pub fn orbit_count(self) -> u64 {
        (self.0 + 1) / 2
    }

    #[inline]
    pub fn reduce_u64(self, x: u64) -> Residue {
        Residue(x % self.0)
    }

    pub fn reduce_i128(self, x: i128) -> Residue {
        let p = self.0 as i128;
        Residue(x.rem_euclid(p) as u64)
    }

    #[inline]
    pub fn add(self, x: Residue, y: Residue) -> Residue {
        let s = x.0 + y.0;
        Residue(if s >= self.0 { s - self.0 } else { s })
    }

    #[inline]
    pub fn sub(self, x: Residue, y: Residue) -> Residue {
        Residue(if x.0 >= y.0 {
            x.0 - y.0
        } else {
            x.0 + self.0 - y.0
        })
    }

    #[inline]
    pub fn mul(self, x: Residue, y: Residue) -> Residue {
        Residue((x.0 as u128 * y.0 as u128 % self.0 as u128) as u64)
    }

    #[inline]
    pub fn neg(self, x: Residue) -> Residue {
        Residue(if x.0 == 0 { 0 } else { self.0 - x.0 })
    }

    /// Multiplicative inverse mod p via the extended Euclidean algorithm.
    pub fn inv(self, x: Residue) -> Result<Residue> {
        if x.0 == 0 {
            return Err(Error::ZeroDivisor { p: self.0 });
        }
        // Invariants: old_r = old_s * p + _ * x throughout; gcd ends in old_r.
        let (mut old_r, mut r) = (self.0 as i128, x.0 as i128);
        let (mut old_s, mut s) = (0i128, 1i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        debug_assert_eq!(old_r, 1, "modulus is prime, gcd must be 1");
        Ok(self.reduce_i128(old_s))
    }

    pub fn pow(self, x: Residue, mut e: u64) -> Residue {
        let mut base = x;
        let mut acc = Residue(1 % self.0);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

/// A canonical residue in [0, p). The modulus travels separately (see
/// [`Prime`]); `AffineMapZp` is the place where the pairing is kept on the
/// type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Residue(u64);

impl Residue {
    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    /// Signed representative in [-(p-1)/2, (p-1)/2] congruent to the residue.
    #[inline]
    pub fn signed_rep(self, p: Prime) -> i64 {
        if self.0 <= (p.get() - 1) / 2 {
            self.0 as i64
        } else {
            self.0 as i64 - p.get() as i64
        }
    }
}

/// Convenience wrapper: a^(-1) mod p for a plain integer a.
pub fn mod_inverse(a: u64, p: Prime) -> Result<u64> {
    Ok(p.inv(p.reduce_u64(a))?.value())
}

/// Deterministic Miller-Rabin, valid for every u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for q in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == q {
            return true;
        }
        if n % q == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    // These twelve witnesses are exact for all n < 3.3 * 10^24.
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
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

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    acc
}

/// All primes <= k by a plain sieve. Empty for k <= 1.
pub fn primes_up_to(k: u64) -> Vec<u64> {
    if k < 2 {
        return Vec::new();
    }
    let k = k as usize;
    let mut composite = vec![false; k + 1];
    let mut out = Vec::new();
    for q in 2..=k {
        if !composite[q] {
            out.push(q as u64);
            let mut multiple = q * q;
            while multiple <= k {
                composite[multiple] = true;
                multiple += q;
            }
        }
    }
    out
}

fn gcd_i128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[inline]
fn checked_mul(a: i128, b: i128, context: &'static str) -> Result<i128> {
    a.checked_mul(b).ok_or(Error::Overflow { context })
}

#[inline]
fn checked_add(a: i128, b: i128, context: &'static str) -> Result<i128> {
    a.checked_add(b).ok_or(Error::Overflow { context })
}

/// Exact rational over i128, always in lowest terms with positive
/// denominator. i128::MIN is rejected during normalization, so `abs` and
/// negation never overflow afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rational {
    num: i128,
    den: i128,
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Result<Rational> {
        if den == 0 {
            return Err(Error::ZeroDivisor { p: 0 });
        }
        if num == i128::MIN || den == i128::MIN {
            return Err(Error::Overflow {
                context: "rational normalization",
            });
        }
        let sign = if (num < 0) != (den < 0) { -1 } else { 1 };
        let (num, den) = (num.abs(), den.abs());
        let g = gcd_i128(num, den);
        if g == 0 {
            return Ok(Rational { num: 0, den: 1 });
        }
        Ok(Rational {
            num: sign * (num / g),
            den: den / g,
        })
    }

    pub fn integer(n: i128) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    #[inline]
    pub fn num(self) -> i128 {
        self.num
    }

    #[inline]
    pub fn den(self) -> i128 {
        self.den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }

    pub fn checked_add(self, rhs: Rational) -> Result<Rational> {
        // a/b + c/d with b, d > 0; reduce by g = gcd(b, d) first.
        let g = gcd_i128(self.den, rhs.den);
        let lhs_scale = rhs.den / g;
        let rhs_scale = self.den / g;
        let num = checked_add(
            checked_mul(self.num, lhs_scale, "rational add")?,
            checked_mul(rhs.num, rhs_scale, "rational add")?,
            "rational add",
        )?;
        let den = checked_mul(self.den, lhs_scale, "rational add")?;
        Rational::new(num, den)
    }

    pub fn checked_sub(self, rhs: Rational) -> Result<Rational> {
        self.checked_add(rhs.checked_neg()?)
    }

    pub fn checked_mul(self, rhs: Rational) -> Result<Rational> {
        // Cross-reduce before multiplying to keep intermediates small.
        let g1 = gcd_i128(self.num, rhs.den);
        let g2 = gcd_i128(rhs.num, self.den);
        let num = checked_mul(self.num / g1, rhs.num / g2, "rational mul")?;
        let den = checked_mul(self.den / g2, rhs.den / g1, "rational mul")?;
        Rational::new(num, den)
    }

    pub fn checked_div(self, rhs: Rational) -> Result<Rational> {
        self.checked_mul(rhs.checked_inv()?)
    }

    pub fn checked_neg(self) -> Result<Rational> {
        Ok(Rational {
            num: -self.num,
            den: self.den,
        })
    }

    pub fn checked_inv(self) -> Result<Rational> {
        if self.num == 0 {
            return Err(Error::ZeroDivisor { p: 0 });
        }
        Ok(Rational {
            num: self.num.signum() * self.den,
            den: self.num.abs(),
        })
    }

    /// Reduction mod p: num * den^(-1), defined only when p does not divide
    /// the denominator.
    pub fn reduce(self, p: Prime) -> Result<Residue> {
        if self.den % p.get() as i128 == 0 {
            return Err(Error::BadDenominator {
                den: self.den,
                p: p.get(),
            });
        }
        let num = p.reduce_i128(self.num);
        let den = p.reduce_i128(self.den);
        Ok(p.mul(num, p.inv(den)?))
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Affine map x -> slope * x + intercept over Q, slope nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalAffine {
    slope: Rational,
    intercept: Rational,
}

impl RationalAffine {
    pub fn new(slope: Rational, intercept: Rational) -> Result<RationalAffine> {
        if slope.is_zero() {
            return Err(Error::ZeroSlope { reduced: false });
        }
        Ok(RationalAffine { slope, intercept })
    }

    pub fn identity() -> RationalAffine {
        RationalAffine {
            slope: Rational::ONE,
            intercept: Rational::ZERO,
        }
    }

    /// The shift map x -> a x + b with integer coefficients.
    pub fn shift(a: i128, b: i128) -> Result<RationalAffine> {
        RationalAffine::new(Rational::integer(a), Rational::integer(b))
    }

    #[inline]
    pub fn slope(self) -> Rational {
        self.slope
    }

    #[inline]
    pub fn intercept(self) -> Rational {
        self.intercept
    }

    pub fn apply(self, x: Rational) -> Result<Rational> {
        self.slope.checked_mul(x)?.checked_add(self.intercept)
    }

    /// Composition self o inner: first apply `inner`, then `self`.
    pub fn compose(self, inner: RationalAffine) -> Result<RationalAffine> {
        let slope = self.slope.checked_mul(inner.slope)?;
        let intercept = self
            .slope
            .checked_mul(inner.intercept)?
            .checked_add(self.intercept)?;
        RationalAffine::new(slope, intercept)
    }

    /// Inverse map: x -> x/slope - intercept/slope.
    pub fn invert(self) -> Result<RationalAffine> {
        let inv_slope = self.slope.checked_inv()?;
        let intercept = self.intercept.checked_mul(inv_slope)?.checked_neg()?;
        RationalAffine::new(inv_slope, intercept)
    }

    /// Pointwise negation x -> -(self(x)).
    pub fn negate(self) -> Result<RationalAffine> {
        RationalAffine::new(self.slope.checked_neg()?, self.intercept.checked_neg()?)
    }

    /// Reduce both coefficients mod p. Fails with `BadDenominator` when a
    /// denominator vanishes mod p and with `ZeroSlope` when the slope does.
    pub fn reduce(self, p: Prime) -> Result<AffineMapZp> {
        let a = self.slope.reduce(p)?;
        if a.value() == 0 {
            return Err(Error::ZeroSlope { reduced: true });
        }
        let b = self.intercept.reduce(p)?;
        AffineMapZp::new(p, a, b)
    }
}

/// Reduced affine map x -> a x + b over F_p with a != 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineMapZp {
    p: Prime,
    a: Residue,
    b: Residue,
}

impl AffineMapZp {
    pub fn new(p: Prime, a: Residue, b: Residue) -> Result<AffineMapZp> {
        if a.value() == 0 {
            return Err(Error::ZeroSlope { reduced: true });
        }
        Ok(AffineMapZp { p, a, b })
    }

    pub fn from_integers(p: Prime, a: i128, b: i128) -> Result<AffineMapZp> {
        AffineMapZp::new(p, p.reduce_i128(a), p.reduce_i128(b))
    }

    #[inline]
    pub fn modulus(self) -> Prime {
        self.p
    }

    #[inline]
    pub fn a(self) -> Residue {
        self.a
    }

    #[inline]
    pub fn b(self) -> Residue {
        self.b
    }

    #[inline]
    pub fn apply(self, x: Residue) -> Residue {
        self.p.add(self.p.mul(self.a, x), self.b)
    }

    pub fn invert(self) -> Result<AffineMapZp> {
        let a_inv = self.p.inv(self.a)?;
        let b = self.p.neg(self.p.mul(a_inv, self.b));
        AffineMapZp::new(self.p, a_inv, b)
    }

    /// Composition self o inner over a shared modulus.
    pub fn compose(self, inner: AffineMapZp) -> Result<AffineMapZp> {
        if self.p != inner.p {
            return Err(Error::MismatchedModulus {
                left: self.p.get(),
                right: inner.p.get(),
            });
        }
        let a = self.p.mul(self.a, inner.a);
        let b = self.p.add(self.p.mul(self.a, inner.b), self.b);
        AffineMapZp::new(self.p, a, b)
    }

    /// Pointwise negation x -> -(a x + b).
    pub fn negate(self) -> Result<AffineMapZp> {
        AffineMapZp::new(self.p, self.p.neg(self.a), self.p.neg(self.b))
    }

    pub fn is_identity(self) -> bool {
        self.a.value() == 1 && self.b.value() == 0
    }
}

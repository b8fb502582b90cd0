//! Derived parameters and the translation family they generate.
//!
//! Everything downstream is built from one parameter pack: the box exponents
//! L_q, the dilation scale Q, the window radius T, and the frequency radius
//! N. The floors in those definitions are certified with outward-rounded
//! interval arithmetic — if an enclosure straddles an integer the derivation
//! refuses to guess (`AmbiguousFloor`) rather than silently picking a side.
//!
//! The family F consists of the maps x -> m(x + j/Q^2) for every K-smooth
//! dilation m in the box M and every integer translation index |j| <= T.
//! Pulling F back through the shifts s(x) = ax + b with 1 <= a <= K and
//! |b| <= K stays inside the same coordinate system: the pullback of the
//! (m, j) map under s is the (m/a, j - bQ^2/m) map, with integer index. The
//! collision scans in this module certify whether all those pullbacks stay
//! distinct after reduction mod p, and whether any pair reduces to a
//! sign-flipped inverse of another — the two events that would corrupt a
//! majority vote over the family.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::arith::{primes_up_to, AffineMapZp, Prime, Rational, RationalAffine, Residue};
use crate::error::{Error, Result};
use crate::serde_util::{biguint_string, u128_string};

/// Hard cap on the number of maps a direct (materializing) reduction scan
/// will enumerate. Chosen so the entry buffer stays around 1.5 GiB worst
/// case; larger scans must use the structural mode.
pub const DIRECT_SCAN_CAP: u128 = 1 << 25;

/// Hard cap on the size of the smooth dilation box M.
pub const SMOOTH_CAP: u128 = 1 << 24;

const SAMPLE_CAP: usize = 4;

// ---------------------------------------------------------------------------
// Certified floors via outward-rounded intervals
// ---------------------------------------------------------------------------

/// A closed f64 enclosure [lo, hi] of a positive real quantity. Every
/// operation rounds outward by at least one ulp beyond the worst-case
/// rounding error of the underlying primitive, so the true value always
/// stays inside.
#[derive(Clone, Copy, Debug)]
struct Iv {
    lo: f64,
    hi: f64,
}

impl Iv {
    fn exact(x: f64) -> Iv {
        Iv { lo: x, hi: x }
    }

    fn from_u64(x: u64) -> Iv {
        Iv::from_u128(x as u128)
    }

    fn from_u128(x: u128) -> Iv {
        let f = x as f64;
        if x <= (1u128 << 53) {
            // Exactly representable.
            Iv::exact(f)
        } else {
            Iv {
                lo: f.next_down(),
                hi: f.next_up(),
            }
        }
    }

    /// Natural log; the libm result is within 1 ulp, widen by 2.
    fn ln(self) -> Iv {
        debug_assert!(self.lo > 0.0);
        Iv {
            lo: self.lo.ln().next_down().next_down(),
            hi: self.hi.ln().next_up().next_up(),
        }
    }

    /// Square root is correctly rounded; widen by 1 ulp.
    fn sqrt(self) -> Iv {
        debug_assert!(self.lo >= 0.0);
        Iv {
            lo: self.lo.sqrt().next_down(),
            hi: self.hi.sqrt().next_up(),
        }
    }

    /// Product of nonnegative intervals.
    fn mul(self, rhs: Iv) -> Iv {
        debug_assert!(self.lo >= 0.0 && rhs.lo >= 0.0);
        Iv {
            lo: (self.lo * rhs.lo).next_down(),
            hi: (self.hi * rhs.hi).next_up(),
        }
    }

    /// Quotient by a strictly positive interval.
    fn div(self, rhs: Iv) -> Iv {
        debug_assert!(self.lo >= 0.0 && rhs.lo > 0.0);
        Iv {
            lo: (self.lo / rhs.hi).next_down(),
            hi: (self.hi / rhs.lo).next_up(),
        }
    }

    fn midpoint(self) -> f64 {
        self.lo + (self.hi - self.lo) / 2.0
    }

    /// The floor of the enclosed value, provided every point of the
    /// enclosure has the same floor.
    fn floor_unambiguous(self, expr: &'static str) -> Result<i128> {
        let (fl, fh) = (self.lo.floor(), self.hi.floor());
        if !fl.is_finite() || !fh.is_finite() || fl != fh {
            return Err(Error::AmbiguousFloor {
                expr,
                lo: self.lo,
                hi: self.hi,
            });
        }
        if fl.abs() >= 9.0e18 {
            return Err(Error::Overflow { context: expr });
        }
        Ok(fl as i128)
    }
}

// ---------------------------------------------------------------------------
// Derived parameters
// ---------------------------------------------------------------------------

/// Optional replacements for the derived scale parameters. `l` replaces the
/// box scale L (must be finite and positive); `t` replaces the window radius
/// T (zero is allowed and collapses the translation window to a single map
/// per dilation).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub l: Option<f64>,
    pub t: Option<u64>,
}

/// The full parameter pack derived from (p, K): box scale L, per-prime
/// exponent bounds L_q, dilation scale Q = prod q^{L_q}, window radius T,
/// frequency radius N = floor((p-1)/2K), and the dilation test range
/// M0 = min(K, N). The sizes of the dilation box and of the whole family
/// are precomputed here so they are checked once for overflow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Params {
    pub p: u64,
    pub k: u64,
    pub l: f64,
    pub l_overridden: bool,
    pub t_overridden: bool,
    /// (q, L_q) for every prime q <= K, ascending in q.
    pub l_q: Vec<(u64, u32)>,
    #[serde(with = "u128_string")]
    pub q: u128,
    #[serde(with = "u128_string")]
    pub q_squared: u128,
    #[serde(with = "u128_string")]
    pub q_cubed: u128,
    pub t: u64,
    /// |M| = prod (2 L_q + 1); always odd.
    #[serde(with = "u128_string")]
    pub box_size: u128,
    /// n = |M| (2T + 1); always odd.
    #[serde(with = "u128_string")]
    pub family_size: u128,
    pub n_radius: u64,
    pub m0: u64,
}

impl Params {
    /// The validated modulus. Parameters are only constructed through
    /// [`derive_params`], so revalidation cannot fail.
    pub fn prime(&self) -> Prime {
        Prime::new(self.p).expect("modulus was validated when the parameters were derived")
    }

    /// Window width 2T + 1.
    pub fn width(&self) -> u128 {
        2 * self.t as u128 + 1
    }
}

/// Derive the parameter pack for modulus p and shift range K.
///
/// Default scales: L = log(2K) sqrt(log p / K), L_q = floor(L / log q),
/// T = floor(L K Q^3). Floors are interval-certified. Scales degenerate
/// (T = 0 or N = 0) produce `DegenerateParams`; an override of T skips the
/// window floor entirely, so tiny moduli can still be exercised.
pub fn derive_params(p: Prime, k: u64, overrides: Overrides) -> Result<Params> {
    if k == 0 {
        return Err(Error::DegenerateParams {
            reason: "shift range K must be at least 1".into(),
        });
    }
    if k >= p.get() {
        return Err(Error::DegenerateParams {
            reason: format!("shift range K = {k} must be smaller than p = {}", p.get()),
        });
    }

    let (l_iv, l_overridden) = match overrides.l {
        Some(l) => {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::InvalidOverride {
                    reason: format!("box scale L must be finite and positive, got {l}"),
                });
            }
            (Iv::exact(l), true)
        }
        None => {
            let iv = Iv::from_u64(2 * k)
                .ln()
                .mul(Iv::from_u64(p.get()).ln().div(Iv::from_u64(k)).sqrt());
            (iv, false)
        }
    };
    let l = l_iv.midpoint();

    let mut l_q = Vec::new();
    let mut q: u128 = 1;
    for qp in primes_up_to(k) {
        let e = l_iv
            .div(Iv::from_u64(qp).ln())
            .floor_unambiguous("L_q = floor(L / log q)")?;
        debug_assert!(e >= 0, "L and log q are positive");
        let e = u32::try_from(e).map_err(|_| Error::Overflow {
            context: "exponent bound L_q",
        })?;
        for _ in 0..e {
            q = q.checked_mul(qp as u128).ok_or(Error::Overflow {
                context: "dilation scale Q",
            })?;
        }
        l_q.push((qp, e));
    }
    let q_squared = q.checked_mul(q).ok_or(Error::Overflow {
        context: "dilation scale Q^2",
    })?;
    let q_cubed = q_squared.checked_mul(q).ok_or(Error::Overflow {
        context: "dilation scale Q^3",
    })?;

    let (t, t_overridden) = match overrides.t {
        Some(t) => (t, true),
        None => {
            let kq3 = q_cubed.checked_mul(k as u128).ok_or(Error::Overflow {
                context: "window scale K Q^3",
            })?;
            let t = l_iv
                .mul(Iv::from_u128(kq3))
                .floor_unambiguous("T = floor(L K Q^3)")?;
            if t < 1 {
                return Err(Error::DegenerateParams {
                    reason: "default window radius floor(L K Q^3) is zero at this scale; \
                             override T to proceed"
                        .into(),
                });
            }
            (
                u64::try_from(t).map_err(|_| Error::Overflow {
                    context: "window radius T",
                })?,
                false,
            )
        }
    };
    if t >= (1u64 << 62) {
        return Err(Error::Overflow {
            context: "window radius T",
        });
    }

    let n_radius = (p.get() - 1) / (2 * k);
    if n_radius == 0 {
        return Err(Error::DegenerateParams {
            reason: format!(
                "frequency radius floor((p-1)/2K) vanishes for p = {}, K = {k}",
                p.get()
            ),
        });
    }
    let m0 = k.min(n_radius);

    let width = 2 * (t as u128) + 1;
    let mut box_size: u128 = 1;
    for &(_, e) in &l_q {
        box_size = box_size
            .checked_mul(2 * e as u128 + 1)
            .ok_or(Error::Overflow {
                context: "dilation box size",
            })?;
    }
    let family_size = box_size.checked_mul(width).ok_or(Error::Overflow {
        context: "family size n",
    })?;
    debug_assert_eq!(family_size % 2, 1, "odd box times odd window");

    Ok(Params {
        p: p.get(),
        k,
        l,
        l_overridden,
        t_overridden,
        l_q,
        q,
        q_squared,
        q_cubed,
        t,
        box_size,
        family_size,
        n_radius,
        m0,
    })
}

// ---------------------------------------------------------------------------
// The smooth dilation box M
// ---------------------------------------------------------------------------

/// The multiplicative box M of K-smooth rationals prod q^{n_q} with
/// |n_q| <= L_q, enumerated in lexicographic order of the exponent vectors.
#[derive(Debug, Clone)]
pub struct SmoothSet {
    primes: Vec<u64>,
    bounds: Vec<u32>,
    vectors: Vec<Vec<i32>>,
    values: Vec<Rational>,
    position: BTreeMap<Vec<i32>, usize>,
}

impl SmoothSet {
    pub(crate) fn build(l_q: &[(u64, u32)]) -> Result<SmoothSet> {
        let primes: Vec<u64> = l_q.iter().map(|&(q, _)| q).collect();
        let bounds: Vec<u32> = l_q.iter().map(|&(_, e)| e).collect();
        let mut size: u128 = 1;
        for &e in &bounds {
            size = size
                .checked_mul(2 * e as u128 + 1)
                .ok_or(Error::Overflow {
                    context: "dilation box size",
                })?;
        }
        if size > SMOOTH_CAP {
            return Err(Error::SearchSpaceTooLarge {
                size,
                cap: SMOOTH_CAP,
            });
        }

        let dims = bounds.len();
        let mut vectors = Vec::with_capacity(size as usize);
        let mut cur: Vec<i32> = bounds.iter().map(|&e| -(e as i32)).collect();
        'odometer: loop {
            vectors.push(cur.clone());
            for axis in (0..dims).rev() {
                if cur[axis] < bounds[axis] as i32 {
                    cur[axis] += 1;
                    for later in axis + 1..dims {
                        cur[later] = -(bounds[later] as i32);
                    }
                    continue 'odometer;
                }
            }
            break;
        }
        debug_assert_eq!(vectors.len() as u128, size);

        let values = vectors
            .iter()
            .map(|v| ratio_of(&primes, v))
            .collect::<Result<Vec<_>>>()?;
        let position = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();

        Ok(SmoothSet {
            primes,
            bounds,
            vectors,
            values,
            position,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the all-zero vector (m = 1) is always present
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn bounds(&self) -> &[u32] {
        &self.bounds
    }

    pub fn vector(&self, i: usize) -> &[i32] {
        &self.vectors[i]
    }

    pub fn value(&self, i: usize) -> Rational {
        self.values[i]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// Index of an exponent vector inside the box, if it lies inside.
    pub fn index_of(&self, vector: &[i32]) -> Option<usize> {
        self.position.get(vector).copied()
    }

    /// Whether an exponent vector lies inside the box.
    pub fn contains_vector(&self, vector: &[i32]) -> bool {
        vector.len() == self.bounds.len()
            && vector
                .iter()
                .zip(&self.bounds)
                .all(|(&e, &b)| e.unsigned_abs() <= b)
    }

    /// Exponent vector of a positive integer over the box primes, or None
    /// if the integer has a prime factor outside the list.
    pub(crate) fn factor_exponents(&self, x: u64) -> Option<Vec<i32>> {
        debug_assert!(x >= 1);
        let mut rest = x;
        let mut out = Vec::with_capacity(self.primes.len());
        for &q in &self.primes {
            let mut e = 0i32;
            while rest % q == 0 {
                rest /= q;
                e += 1;
            }
            out.push(e);
        }
        (rest == 1).then_some(out)
    }
}

fn pow_i128(base: u64, e: u32) -> Result<i128> {
    let mut acc: i128 = 1;
    for _ in 0..e {
        acc = acc.checked_mul(base as i128).ok_or(Error::Overflow {
            context: "smooth value",
        })?;
    }
    Ok(acc)
}

/// The rational prod q_i^{v_i} for an exponent vector over given primes.
fn ratio_of(primes: &[u64], vector: &[i32]) -> Result<Rational> {
    debug_assert_eq!(primes.len(), vector.len());
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    for (&q, &e) in primes.iter().zip(vector) {
        if e >= 0 {
            num = num
                .checked_mul(pow_i128(q, e as u32)?)
                .ok_or(Error::Overflow {
                    context: "smooth value",
                })?;
        } else {
            den = den
                .checked_mul(pow_i128(q, e.unsigned_abs())?)
                .ok_or(Error::Overflow {
                    context: "smooth value",
                })?;
        }
    }
    Rational::new(num, den)
}

// ---------------------------------------------------------------------------
// Shifts
// ---------------------------------------------------------------------------

/// The test shifts x -> ax + b. `positive()` enumerates the pullback set
/// (1 <= a <= K, |b| <= K, identity included); `grid()` additionally takes
/// negative slopes -K <= a <= -1 and is what defect profiles sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftSet {
    k: u64,
}

impl ShiftSet {
    pub fn new(k: u64) -> Result<ShiftSet> {
        if k == 0 {
            return Err(Error::DegenerateParams {
                reason: "shift range K must be at least 1".into(),
            });
        }
        if k > (1 << 31) {
            return Err(Error::Overflow {
                context: "shift range K",
            });
        }
        Ok(ShiftSet { k })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Number of positive-slope shifts: K(2K + 1).
    pub fn positive_len(&self) -> u128 {
        self.k as u128 * (2 * self.k as u128 + 1)
    }

    /// Number of shifts in the full grid: 2K(2K + 1).
    pub fn grid_len(&self) -> u128 {
        2 * self.positive_len()
    }

    pub fn contains(&self, a: u64, b: i64) -> bool {
        1 <= a && a <= self.k && b.unsigned_abs() <= self.k
    }

    /// Shifts with 1 <= a <= K, |b| <= K in lexicographic order.
    pub fn positive(&self) -> impl Iterator<Item = (u64, i64)> + '_ {
        let k = self.k as i64;
        (1..=self.k).flat_map(move |a| (-k..=k).map(move |b| (a, b)))
    }

    /// Shifts with 1 <= |a| <= K, |b| <= K in lexicographic order.
    pub fn grid(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let k = self.k as i64;
        (-k..=k)
            .filter(|&a| a != 0)
            .flat_map(move |a| (-k..=k).map(move |b| (a, b)))
    }
}

// ---------------------------------------------------------------------------
// Collision scans
// ---------------------------------------------------------------------------

/// How a reduction scan was executed: `Direct` materializes every reduced
/// coefficient pair and sorts; `Structural` reasons about index intervals
/// per dilation class and never materializes, so it works at any window
/// size. Both are exact; they are cross-checked against each other in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    Direct,
    Structural,
}

/// Outcome of a reduction-collision scan over a set of affine maps.
///
/// `injective` means no two distinct maps reduced to the same pair (a, b)
/// mod p. `sign_free` means no map reduced to the pointwise negation of
/// another map's inverse — the event that would pair up majority votes with
/// opposite signs. `coefficient_bound` is the a-priori bound on every
/// numerator and denominator appearing in the scanned maps and their
/// inverses; when 2 * bound^2 < p both properties are guaranteed without
/// scanning, which `bound_certifies_injectivity` records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionReport {
    pub mode: ScanMode,
    #[serde(with = "u128_string")]
    pub scanned: u128,
    pub injective: bool,
    pub sign_free: bool,
    pub equal_reduction_samples: Vec<[String; 2]>,
    pub sign_collision_samples: Vec<[String; 2]>,
    #[serde(with = "biguint_string")]
    pub coefficient_bound: BigUint,
    pub bound_certifies_injectivity: bool,
}

/// One dilation class of a scan: all maps share the exact rational slope
/// and range over the merged, disjoint, ascending index intervals.
struct ScanClass {
    slope: Rational,
    slope_mod: Residue,
    intervals: Vec<(i128, i128)>,
    size: u128,
}

fn describe(class: &ScanClass, nu: i128) -> String {
    format!("slope {}, index {}", class.slope, nu)
}

fn merge_intervals(mut iv: Vec<(i128, i128)>) -> Vec<(i128, i128)> {
    iv.sort_unstable();
    let mut out: Vec<(i128, i128)> = Vec::with_capacity(iv.len());
    for (lo, hi) in iv {
        if let Some(last) = out.last_mut() {
            // Integer intervals: touching ranges merge too.
            if lo <= last.1 + 1 {
                last.1 = last.1.max(hi);
                continue;
            }
        }
        out.push((lo, hi));
    }
    out
}

fn div_floor_i128(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let q = a / b;
    if a % b != 0 && a < 0 {
        q - 1
    } else {
        q
    }
}

fn div_ceil_i128(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let q = a / b;
    if a % b != 0 && a > 0 {
        q + 1
    } else {
        q
    }
}

/// A pair (x, y) with x in [a1, b1], y in [a2, b2] and x = y (mod p), if one
/// exists. With `forbid_zero_shift` (used when both intervals are the same
/// interval) the solution x = y is excluded.
///
/// Any integer t with ceil((a1-b2)/p) <= t <= floor((b1-a2)/p) yields a
/// nonempty overlap of [a1, b1] with [a2 + tp, b2 + tp], so picking one t in
/// range suffices.
fn congruent_pair(
    i1: (i128, i128),
    i2: (i128, i128),
    p: i128,
    forbid_zero_shift: bool,
) -> Option<(i128, i128)> {
    let t_hi = div_floor_i128(i1.1 - i2.0, p);
    let t_lo = div_ceil_i128(i1.0 - i2.1, p);
    if t_lo > t_hi {
        return None;
    }
    let mut t = t_hi;
    if forbid_zero_shift && t == 0 {
        if t_lo <= -1 {
            t = -1;
        } else {
            return None;
        }
    }
    let x = i1.0.max(i2.0 + t * p);
    debug_assert!(x <= i1.1.min(i2.1 + t * p));
    Some((x, x - t * p))
}

fn scan_total(classes: &[ScanClass]) -> Result<u128> {
    let mut total: u128 = 0;
    for c in classes {
        total = total.checked_add(c.size).ok_or(Error::Overflow {
            context: "scan size",
        })?;
    }
    Ok(total)
}

struct ScanFlags {
    injective: bool,
    sign_free: bool,
    equal_samples: Vec<[String; 2]>,
    sign_samples: Vec<[String; 2]>,
}

/// Materializing scan: every (class, index) pair is reduced to its
/// coefficient key a * 2^64 + b and the sorted key list is checked for
/// duplicates and for mirror keys (p - a, b), which are exactly the
/// sign-flipped-inverse collisions.
fn scan_direct(
    prime: Prime,
    scale_inv: Residue,
    classes: &[ScanClass],
    total: u128,
) -> Result<ScanFlags> {
    if total > DIRECT_SCAN_CAP {
        return Err(Error::ScanTooLarge {
            size: total,
            cap: DIRECT_SCAN_CAP,
        });
    }
    let mut entries: Vec<(u128, u32, i128)> = Vec::with_capacity(total as usize);
    for (cid, class) in classes.iter().enumerate() {
        let a = class.slope_mod;
        let a_key = (a.value() as u128) << 64;
        let step = prime.mul(a, scale_inv);
        for &(lo, hi) in &class.intervals {
            let mut b = prime.mul(step, prime.reduce_i128(lo));
            let mut nu = lo;
            loop {
                entries.push((a_key | b.value() as u128, cid as u32, nu));
                if nu == hi {
                    break;
                }
                nu += 1;
                b = prime.add(b, step);
            }
        }
    }
    debug_assert_eq!(entries.len() as u128, total);
    entries.sort_unstable();

    let mut flags = ScanFlags {
        injective: true,
        sign_free: true,
        equal_samples: Vec::new(),
        sign_samples: Vec::new(),
    };
    for w in entries.windows(2) {
        if w[0].0 == w[1].0 {
            flags.injective = false;
            if flags.equal_samples.len() < SAMPLE_CAP {
                flags.equal_samples.push([
                    describe(&classes[w[0].1 as usize], w[0].2),
                    describe(&classes[w[1].1 as usize], w[1].2),
                ]);
            } else {
                break;
            }
        }
    }

    let p = prime.get();
    let mut i = 0;
    while i < entries.len() {
        let key = entries[i].0;
        let mut run_end = i + 1;
        while run_end < entries.len() && entries[run_end].0 == key {
            run_end += 1;
        }
        let a = (key >> 64) as u64;
        let b = key & u64::MAX as u128;
        let neg_a = p - a; // a != 0 for every scanned map
        if a < neg_a {
            let mirror = ((neg_a as u128) << 64) | b;
            if let Ok(pos) = entries.binary_search_by(|e| e.0.cmp(&mirror)) {
                flags.sign_free = false;
                if flags.sign_samples.len() < SAMPLE_CAP {
                    let e1 = &entries[i];
                    let e2 = &entries[pos];
                    flags.sign_samples.push([
                        describe(&classes[e1.1 as usize], e1.2),
                        describe(&classes[e2.1 as usize], e2.2),
                    ]);
                } else {
                    break;
                }
            }
        }
        i = run_end;
    }
    Ok(flags)
}

/// Non-materializing scan. Two maps collide after reduction iff their
/// slopes agree mod p and their indices agree mod p, so it is enough to
/// intersect index intervals shifted by multiples of p — within a class,
/// across classes of equal reduced slope, and (negated) across classes of
/// opposite reduced slope for the sign check.
fn scan_structural(prime: Prime, classes: &[ScanClass]) -> ScanFlags {
    let p = prime.get() as i128;
    let mut flags = ScanFlags {
        injective: true,
        sign_free: true,
        equal_samples: Vec::new(),
        sign_samples: Vec::new(),
    };

    let record_equal = |c1: &ScanClass, n1: i128, c2: &ScanClass, n2: i128,
                            flags: &mut ScanFlags| {
        flags.injective = false;
        if flags.equal_samples.len() < SAMPLE_CAP {
            flags.equal_samples.push([describe(c1, n1), describe(c2, n2)]);
        }
    };

    for class in classes {
        for i in 0..class.intervals.len() {
            for j in i..class.intervals.len() {
                if flags.equal_samples.len() >= SAMPLE_CAP && !flags.injective {
                    break;
                }
                if let Some((n1, n2)) =
                    congruent_pair(class.intervals[i], class.intervals[j], p, i == j)
                {
                    record_equal(class, n1, class, n2, &mut flags);
                }
            }
        }
    }

    let mut by_slope: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (cid, class) in classes.iter().enumerate() {
        by_slope.entry(class.slope_mod.value()).or_default().push(cid);
    }

    for ids in by_slope.values() {
        for (xi, &cx) in ids.iter().enumerate() {
            for &cy in &ids[xi + 1..] {
                if flags.equal_samples.len() >= SAMPLE_CAP && !flags.injective {
                    break;
                }
                let (c1, c2) = (&classes[cx], &classes[cy]);
                for &i1 in &c1.intervals {
                    for &i2 in &c2.intervals {
                        if let Some((n1, n2)) = congruent_pair(i1, i2, p, false) {
                            record_equal(c1, n1, c2, n2, &mut flags);
                            break;
                        }
                    }
                }
            }
        }
    }

    for (&sigma, ids) in &by_slope {
        let neg = prime.get() - sigma;
        if sigma > neg {
            continue; // handled from the smaller side; sigma == neg impossible mod odd p
        }
        let Some(jds) = by_slope.get(&neg) else {
            continue;
        };
        for &cx in ids {
            for &cy in jds {
                if flags.sign_samples.len() >= SAMPLE_CAP && !flags.sign_free {
                    break;
                }
                let (c1, c2) = (&classes[cx], &classes[cy]);
                for &i1 in &c1.intervals {
                    for &(lo2, hi2) in &c2.intervals {
                        // Indices nu1 = -nu2 (mod p): intersect with -I2.
                        if let Some((n1, n2)) = congruent_pair(i1, (-hi2, -lo2), p, false) {
                            flags.sign_free = false;
                            if flags.sign_samples.len() < SAMPLE_CAP {
                                flags
                                    .sign_samples
                                    .push([describe(c1, n1), describe(c2, -n2)]);
                            }
                            break;
                        }
                    }
                }
            }
        }
    }

    flags
}

/// Upper bound on every coefficient (numerator or denominator, map or
/// inverse) across the pulled-back family: the ceiling of 2(L+1) K Q^4.
///
/// The scalar factor is nudged two ulps up so the result stays an upper
/// bound, then the ceiling of factor * Q^4 is taken exactly by decomposing
/// the f64 into its dyadic mantissa * 2^exponent form.
fn family_coefficient_bound(params: &Params) -> BigUint {
    let factor = (2.0 * (params.l + 1.0) * params.k as f64).next_up().next_up();
    let q4 = BigUint::from(params.q_squared) * BigUint::from(params.q_squared);
    let (mantissa, exponent, sign) = num_traits::Float::integer_decode(factor);
    debug_assert!(sign > 0, "the scale factor is positive");
    let prod = BigUint::from(mantissa) * q4;
    if exponent >= 0 {
        prod << exponent as usize
    } else {
        let s = (-exponent) as usize;
        let mask = (BigUint::from(1u32) << s) - 1u32;
        (prod + mask) >> s
    }
}

fn certifies(prime: Prime, bound: &BigUint) -> bool {
    BigUint::from(2u32) * bound * bound < BigUint::from(prime.get())
}

// ---------------------------------------------------------------------------
// The family
// ---------------------------------------------------------------------------

/// The translation family F: maps x -> m(x + j/Q^2) indexed by a dilation
/// class (position in the smooth box M) and a translation index |j| <= T.
///
/// The family is closed under conjugation by x -> -x (the (m, j) map goes to
/// (m, -j)), which is what makes the majority construction symmetric. A
/// structural collision scan of the bare family runs at construction time
/// and is available through [`Family::report`].
#[derive(Debug, Clone)]
pub struct Family {
    params: Params,
    prime: Prime,
    smooth: SmoothSet,
    scale_inv: Residue,
    slope_mod: Vec<Residue>,
    slope_inv_mod: Vec<Residue>,
    report: CollisionReport,
}

impl Family {
    pub fn new(params: &Params) -> Result<Family> {
        let prime = Prime::new(params.p)?;
        if params.family_size % 2 == 0 {
            return Err(Error::EvenFamily {
                n: params.family_size,
            });
        }
        let smooth = SmoothSet::build(&params.l_q)?;
        debug_assert_eq!(smooth.len() as u128, params.box_size);

        let q2_mod = prime.reduce_i128(params.q_squared as i128);
        let scale_inv = prime.inv(q2_mod)?; // p never divides the K-smooth Q^2
        let slope_mod = smooth
            .values()
            .iter()
            .map(|m| m.reduce(prime))
            .collect::<Result<Vec<_>>>()?;
        let slope_inv_mod = slope_mod
            .iter()
            .map(|&a| prime.inv(a))
            .collect::<Result<Vec<_>>>()?;

        let mut family = Family {
            params: params.clone(),
            prime,
            smooth,
            scale_inv,
            slope_mod,
            slope_inv_mod,
            report: CollisionReport {
                mode: ScanMode::Structural,
                scanned: 0,
                injective: false,
                sign_free: false,
                equal_reduction_samples: Vec::new(),
                sign_collision_samples: Vec::new(),
                coefficient_bound: BigUint::from(0u32),
                bound_certifies_injectivity: false,
            },
        };
        family.report = family.check_reduction_with_mode(None, ScanMode::Structural)?;
        Ok(family)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn smooth(&self) -> &SmoothSet {
        &self.smooth
    }

    /// Number of maps n = |M| (2T + 1).
    pub fn len(&self) -> u128 {
        self.params.family_size
    }

    pub fn is_empty(&self) -> bool {
        false // the identity map (m = 1, j = 0) is always present
    }

    pub fn class_count(&self) -> usize {
        self.smooth.len()
    }

    /// (Q^2)^{-1} mod p, the scale that turns translation indices into
    /// intercepts.
    pub fn scale_inv(&self) -> Residue {
        self.scale_inv
    }

    pub fn slope_mod(&self, class: usize) -> Residue {
        self.slope_mod[class]
    }

    pub fn slope_inv_mod(&self, class: usize) -> Residue {
        self.slope_inv_mod[class]
    }

    /// Collision report of the bare family (no pullbacks), computed at
    /// construction.
    pub fn report(&self) -> &CollisionReport {
        &self.report
    }

    /// The exact rational map of a family member: x -> m x + m j / Q^2.
    pub fn rational_map(&self, class: usize, j: i64) -> Result<RationalAffine> {
        let m = self.smooth.value(class);
        let shift = Rational::new(j as i128, self.params.q_squared as i128)?;
        RationalAffine::new(m, m.checked_mul(shift)?)
    }

    /// The reduced map mod p: a = m, b = m j (Q^2)^{-1}.
    pub fn reduced_map(&self, class: usize, j: i64) -> AffineMapZp {
        let a = self.slope_mod[class];
        let b = self
            .prime
            .mul(self.prime.mul(a, self.scale_inv), self.prime.reduce_i128(j as i128));
        AffineMapZp::new(self.prime, a, b).expect("smooth slopes are never divisible by p")
    }

    /// The reduced inverse mod p: x -> m^{-1} x - j (Q^2)^{-1}. Note the
    /// intercept does not depend on the dilation.
    pub fn reduced_inverse(&self, class: usize, j: i64) -> AffineMapZp {
        let a = self.slope_inv_mod[class];
        let b = self
            .prime
            .neg(self.prime.mul(self.scale_inv, self.prime.reduce_i128(j as i128)));
        AffineMapZp::new(self.prime, a, b).expect("inverse slopes are never divisible by p")
    }

    /// Exact relative size of F minus its pullback under s(x) = ax + b.
    ///
    /// For each dilation m the pullback sends (m, j) to (m/a, j - bQ^2/m);
    /// the entire fiber escapes when m/a leaves the box, and otherwise
    /// exactly min(|b| Q^2/m, 2T+1) translation indices slide out of the
    /// window. The symmetric-difference defect is twice the one-sided count
    /// over n, and is compared against the scale bound
    /// log(2K)/L + K Q^3/T.
    pub fn folner_defect(&self, a: u64, b: i64) -> Result<FolnerDefect> {
        let k = self.params.k;
        if a == 0 || a > k || b.unsigned_abs() > k {
            return Err(Error::InvalidShift {
                a: a as i64,
                b,
                k,
            });
        }
        let width = self.params.width();
        let a_vec = self
            .smooth
            .factor_exponents(a)
            .expect("a <= K is K-smooth by definition");

        let mut escaped: u128 = 0;
        for ci in 0..self.smooth.len() {
            let m_vec = self.smooth.vector(ci);
            let shifted: Vec<i32> = m_vec.iter().zip(&a_vec).map(|(&e, &va)| e - va).collect();
            if !self.smooth.contains_vector(&shifted) {
                escaped += width;
                continue;
            }
            if b == 0 {
                continue;
            }
            // |b| * Q^2 / m = |b| * prod q^{2 L_q - e_q}, an exact integer.
            let mut slide: u128 = b.unsigned_abs() as u128;
            for (ai, &q) in self.smooth.primes().iter().enumerate() {
                let e = 2 * self.smooth.bounds()[ai] as i64 - m_vec[ai] as i64;
                debug_assert!(e >= 0);
                for _ in 0..e {
                    slide = slide.checked_mul(q as u128).ok_or(Error::Overflow {
                        context: "pullback displacement",
                    })?;
                    if slide >= width {
                        break; // already clamped by min() below
                    }
                }
                if slide >= width {
                    break;
                }
            }
            escaped += slide.min(width);
        }

        let n = self.params.family_size;
        let one_sided = escaped as f64 / n as f64;
        let defect = (2 * escaped) as f64 / n as f64;
        let bound = (2.0 * k as f64).ln() / self.params.l
            + (k as f64 * self.params.q_cubed as f64) / self.params.t as f64;
        Ok(FolnerDefect {
            a,
            b,
            escaped,
            family_size: n,
            one_sided,
            defect,
            bound,
            within_bound: defect <= bound * (1.0 + 1e-9),
        })
    }

    /// Scan the family — or its pullback under a whole shift set — for
    /// reduction collisions, choosing the scan mode by size.
    pub fn check_reduction(&self, shifts: Option<&ShiftSet>) -> Result<CollisionReport> {
        let classes = self.scan_classes(shifts)?;
        let total = scan_total(&classes)?;
        let mode = if total <= DIRECT_SCAN_CAP {
            ScanMode::Direct
        } else {
            ScanMode::Structural
        };
        self.run_scan(classes, total, mode)
    }

    /// Same as [`Family::check_reduction`] with the mode forced.
    pub fn check_reduction_with_mode(
        &self,
        shifts: Option<&ShiftSet>,
        mode: ScanMode,
    ) -> Result<CollisionReport> {
        let classes = self.scan_classes(shifts)?;
        let total = scan_total(&classes)?;
        self.run_scan(classes, total, mode)
    }

    fn run_scan(
        &self,
        classes: Vec<ScanClass>,
        total: u128,
        mode: ScanMode,
    ) -> Result<CollisionReport> {
        let flags = match mode {
            ScanMode::Direct => scan_direct(self.prime, self.scale_inv, &classes, total)?,
            ScanMode::Structural => scan_structural(self.prime, &classes),
        };
        let coefficient_bound = family_coefficient_bound(&self.params);
        let bound_certifies_injectivity = certifies(self.prime, &coefficient_bound);
        Ok(CollisionReport {
            mode,
            scanned: total,
            injective: flags.injective,
            sign_free: flags.sign_free,
            equal_reduction_samples: flags.equal_samples,
            sign_collision_samples: flags.sign_samples,
            coefficient_bound,
            bound_certifies_injectivity,
        })
    }

    /// Group the (pulled-back) family into dilation classes with merged
    /// index intervals. Distinct (class, index) pairs are distinct rational
    /// maps, so interval merging is exactly deduplication.
    fn scan_classes(&self, shifts: Option<&ShiftSet>) -> Result<Vec<ScanClass>> {
        let t = self.params.t as i128;
        let mut acc: BTreeMap<Vec<i32>, Vec<(i128, i128)>> = BTreeMap::new();
        match shifts {
            None => {
                for ci in 0..self.smooth.len() {
                    acc.insert(self.smooth.vector(ci).to_vec(), vec![(-t, t)]);
                }
            }
            Some(shifts) => {
                for ci in 0..self.smooth.len() {
                    let m_vec = self.smooth.vector(ci);
                    // Q^2 / m, an exact positive integer.
                    let mut scale: u128 = 1;
                    for (ai, &q) in self.smooth.primes().iter().enumerate() {
                        let e = 2 * self.smooth.bounds()[ai] as i64 - m_vec[ai] as i64;
                        for _ in 0..e {
                            scale = scale.checked_mul(q as u128).ok_or(Error::Overflow {
                                context: "pullback displacement",
                            })?;
                        }
                    }
                    let scale = i128::try_from(scale).map_err(|_| Error::Overflow {
                        context: "pullback displacement",
                    })?;
                    for (a, b) in shifts.positive() {
                        let a_vec = self
                            .smooth
                            .factor_exponents(a)
                            .expect("a <= K is K-smooth by definition");
                        let vec: Vec<i32> =
                            m_vec.iter().zip(&a_vec).map(|(&e, &va)| e - va).collect();
                        let u = (b as i128).checked_mul(scale).ok_or(Error::Overflow {
                            context: "pullback displacement",
                        })?;
                        let lo = (-t).checked_sub(u).ok_or(Error::Overflow {
                            context: "pullback window",
                        })?;
                        let hi = t.checked_sub(u).ok_or(Error::Overflow {
                            context: "pullback window",
                        })?;
                        acc.entry(vec).or_default().push((lo, hi));
                    }
                }
            }
        }

        let mut classes = Vec::with_capacity(acc.len());
        for (vec, intervals) in acc {
            let intervals = merge_intervals(intervals);
            let mut size: u128 = 0;
            for &(lo, hi) in &intervals {
                size += (hi - lo + 1) as u128;
            }
            let slope = ratio_of(self.smooth.primes(), &vec)?;
            let slope_mod = slope.reduce(self.prime)?;
            debug_assert_ne!(slope_mod.value(), 0, "smooth slope can't vanish mod p");
            classes.push(ScanClass {
                slope,
                slope_mod,
                intervals,
                size,
            });
        }
        Ok(classes)
    }
}

/// Relative Følner defect of the family under one shift.
#[derive(Debug, Clone, Serialize)]
pub struct FolnerDefect {
    pub a: u64,
    pub b: i64,
    /// One-sided escape count |F \ s^{-1}F|.
    #[serde(with = "u128_string")]
    pub escaped: u128,
    #[serde(with = "u128_string")]
    pub family_size: u128,
    /// escaped / n.
    pub one_sided: f64,
    /// |s^{-1}F symdiff F| / |F| = 2 escaped / n.
    pub defect: f64,
    /// Scale bound log(2K)/L + K Q^3 / T.
    pub bound: f64,
    pub within_bound: bool,
}

// ---------------------------------------------------------------------------
// Generic reduction check for explicit map lists
// ---------------------------------------------------------------------------

/// Reduction-collision scan over an explicit list of rational affine maps.
///
/// This is the literal, definition-level check: maps are deduplicated
/// exactly, reduced mod p, and compared pairwise via sorted keys; the sign
/// check compares each reduced inverse against the negated reduced inverses
/// of the others. The family scans are cross-validated against this in
/// tests. Every map must be p-admissible (no denominator divisible by p,
/// slope nonzero mod p) or the scan reports the corresponding error.
pub fn check_reduction_maps(maps: &[RationalAffine], p: Prime) -> Result<CollisionReport> {
    let mut keyed: Vec<((i128, i128, i128, i128), RationalAffine)> = maps
        .iter()
        .map(|m| {
            (
                (
                    m.slope().num(),
                    m.slope().den(),
                    m.intercept().num(),
                    m.intercept().den(),
                ),
                *m,
            )
        })
        .collect();
    keyed.sort_unstable_by_key(|e| e.0);
    keyed.dedup_by_key(|e| e.0);
    let scanned = keyed.len() as u128;
    if scanned > DIRECT_SCAN_CAP {
        return Err(Error::ScanTooLarge {
            size: scanned,
            cap: DIRECT_SCAN_CAP,
        });
    }

    let pack = |a: Residue, b: Residue| ((a.value() as u128) << 64) | b.value() as u128;
    let mut direct: Vec<(u128, usize)> = Vec::with_capacity(keyed.len());
    let mut inverses: Vec<(u128, usize)> = Vec::with_capacity(keyed.len());
    let mut neg_inverses: Vec<(u128, usize)> = Vec::with_capacity(keyed.len());
    let mut coefficient_bound = BigUint::from(1u32);
    for (i, (_, m)) in keyed.iter().enumerate() {
        let reduced = m.reduce(p)?;
        direct.push((pack(reduced.a(), reduced.b()), i));
        let inv = m.invert()?;
        let reduced_inv = inv.reduce(p)?;
        inverses.push((pack(reduced_inv.a(), reduced_inv.b()), i));
        neg_inverses.push((
            pack(p.neg(reduced_inv.a()), p.neg(reduced_inv.b())),
            i,
        ));
        for r in [m.slope(), m.intercept(), inv.slope(), inv.intercept()] {
            for c in [r.num().unsigned_abs(), r.den().unsigned_abs()] {
                let c = BigUint::from(c);
                if c > coefficient_bound {
                    coefficient_bound = c;
                }
            }
        }
    }

    let format_map =
        |m: &RationalAffine| format!("({})x + ({})", m.slope(), m.intercept());

    direct.sort_unstable();
    let mut injective = true;
    let mut equal_samples = Vec::new();
    for w in direct.windows(2) {
        if w[0].0 == w[1].0 {
            injective = false;
            if equal_samples.len() < SAMPLE_CAP {
                equal_samples.push([format_map(&keyed[w[0].1].1), format_map(&keyed[w[1].1].1)]);
            }
        }
    }

    inverses.sort_unstable();
    let mut sign_free = true;
    let mut sign_samples = Vec::new();
    let mut recorded: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &(key, i) in &neg_inverses {
        if let Ok(pos) = inverses.binary_search_by(|e| e.0.cmp(&key)) {
            // Expand to the first entry of the equal-key run for determinism.
            let mut first = pos;
            while first > 0 && inverses[first - 1].0 == key {
                first -= 1;
            }
            let j = inverses[first].1;
            debug_assert_ne!(i, j, "a map can't be its own sign mirror mod an odd prime");
            sign_free = false;
            let pair = (i.min(j), i.max(j));
            if sign_samples.len() < SAMPLE_CAP && recorded.insert(pair) {
                sign_samples.push([format_map(&keyed[pair.0].1), format_map(&keyed[pair.1].1)]);
            }
        }
    }

    let bound_certifies_injectivity = certifies(p, &coefficient_bound);
    Ok(CollisionReport {
        mode: ScanMode::Direct,
        scanned,
        injective,
        sign_free,
        equal_reduction_samples: equal_samples,
        sign_collision_samples: sign_samples,
        coefficient_bound,
        bound_certifies_injectivity,
    })
}

//! Truncated p-adic arithmetic with explicit absolute-precision tracking.
//!
//! An element is a residue modulo `p^prec` together with the precision
//! `prec` itself.  Every operation keeps the soundness invariant
//! "stored residue is congruent to the true value modulo `p^prec`";
//! precision never exceeds the minimum precision of the inputs.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest precision (base-p digits) a context may be configured with.
pub const DEFAULT_PRECISION_BOUND: u32 = 64;

/// Deterministic Miller-Rabin for u64 inputs.
fn is_prime_u64(n: u64) -> bool {
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
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        b %= n;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Modular inverse of `a` modulo `m` (must be coprime).
pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    let a = BigInt::from(a.clone());
    let m_int = BigInt::from(m.clone());
    let eg = a.extended_gcd(&m_int);
    if !eg.gcd.is_one() {
        return Err(Error::Valuation(format!("{a} is not invertible modulo {m}")));
    }
    let mut x = eg.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    Ok(x.to_biguint().expect("non-negative"))
}

/// Fixes the prime `p` and the working precision `N` of a whole run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PAdicContext {
    p: u64,
    precision: u32,
    pows: Vec<BigUint>,
}

impl PAdicContext {
    pub fn new(p: u64, precision: u32) -> Result<Self> {
        Self::with_bound(p, precision, DEFAULT_PRECISION_BOUND)
    }

    pub fn with_bound(p: u64, precision: u32, bound: u32) -> Result<Self> {
        if !is_prime_u64(p) {
            return Err(Error::InvalidInput(format!("p = {p} is not prime")));
        }
        if precision == 0 || precision > bound {
            return Err(Error::InvalidInput(format!(
                "precision {precision} outside 1..={bound}"
            )));
        }
        let big_p = BigUint::from(p);
        let mut pows = Vec::with_capacity(precision as usize + 1);
        let mut acc = BigUint::one();
        for _ in 0..=precision {
            pows.push(acc.clone());
            acc *= &big_p;
        }
        Ok(Self { p, precision, pows })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// `p^k` for `k <= N`.
    pub fn pow_p(&self, k: u32) -> &BigUint {
        &self.pows[k as usize]
    }

    fn reduce(&self, x: &BigUint, prec: u32) -> BigUint {
        x % self.pow_p(prec)
    }

    /// p-adic valuation of an integer, capped at `cap`.
    pub fn valuation_capped(&self, x: &BigUint, cap: u32) -> u32 {
        if x.is_zero() {
            return cap;
        }
        let p = BigUint::from(self.p);
        let mut v = 0;
        let mut y = x.clone();
        while v < cap {
            let (q, r) = y.div_rem(&p);
            if !r.is_zero() {
                break;
            }
            y = q;
            v += 1;
        }
        v
    }
}

/// Residue modulo `p^prec` with tracked absolute precision `prec`.
///
/// `prec = 0` is the "no information" element; it absorbs all arithmetic.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PAdicElem {
    residue: BigUint,
    prec: u32,
}

impl PAdicElem {
    pub fn from_biguint(ctx: &PAdicContext, x: BigUint, prec: u32) -> Self {
        let prec = prec.min(ctx.precision);
        Self {
            residue: ctx.reduce(&x, prec),
            prec,
        }
    }

    pub fn from_i64(ctx: &PAdicContext, x: i64, prec: u32) -> Self {
        let prec = prec.min(ctx.precision);
        let m = ctx.pow_p(prec);
        let mut r = BigInt::from(x) % BigInt::from(m.clone());
        if r.is_negative() {
            r += BigInt::from(m.clone());
        }
        Self {
            residue: r.to_biguint().expect("non-negative"),
            prec,
        }
    }

    /// Exact integer constant, known at full working precision.
    pub fn integer(ctx: &PAdicContext, x: i64) -> Self {
        Self::from_i64(ctx, x, ctx.precision)
    }

    pub fn zero(prec: u32) -> Self {
        Self {
            residue: BigUint::zero(),
            prec,
        }
    }

    pub fn one(ctx: &PAdicContext) -> Self {
        Self::integer(ctx, 1)
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// True when the stored residue is 0, i.e. the element is 0 at its
    /// tracked precision.
    pub fn is_zero(&self) -> bool {
        self.residue.is_zero()
    }

    /// Known valuation: `min(v_p(residue), prec)`.  A zero residue means
    /// "valuation at least prec".
    pub fn valuation(&self, ctx: &PAdicContext) -> u32 {
        ctx.valuation_capped(&self.residue, self.prec)
    }

    /// Balanced integer representative in `(-p^prec/2, p^prec/2]`, if it
    /// fits an i64.
    pub fn balanced(&self, ctx: &PAdicContext) -> Option<i64> {
        let m = ctx.pow_p(self.prec);
        let half = m / 2u32;
        if self.residue > half {
            let neg = m - &self.residue;
            neg.to_i64().map(|v| -v)
        } else {
            self.residue.to_i64()
        }
    }

    pub fn with_prec(&self, ctx: &PAdicContext, prec: u32) -> Self {
        let prec = prec.min(self.prec);
        Self {
            residue: ctx.reduce(&self.residue, prec),
            prec,
        }
    }

    pub fn add(&self, ctx: &PAdicContext, rhs: &Self) -> Self {
        let prec = self.prec.min(rhs.prec);
        Self {
            residue: ctx.reduce(&(&self.residue + &rhs.residue), prec),
            prec,
        }
    }

    pub fn neg(&self, ctx: &PAdicContext) -> Self {
        if self.residue.is_zero() {
            return self.clone();
        }
        Self {
            residue: ctx.pow_p(self.prec) - &self.residue,
            prec: self.prec,
        }
    }

    pub fn sub(&self, ctx: &PAdicContext, rhs: &Self) -> Self {
        self.add(ctx, &rhs.neg(ctx))
    }

    pub fn mul(&self, ctx: &PAdicContext, rhs: &Self) -> Self {
        let prec = self.prec.min(rhs.prec);
        Self {
            residue: ctx.reduce(&(&self.residue * &rhs.residue), prec),
            prec,
        }
    }

    /// Multiplication by an exact integer scalar (precision preserved).
    pub fn mul_i64(&self, ctx: &PAdicContext, k: i64) -> Self {
        self.mul(ctx, &Self::from_i64(ctx, k, self.prec))
    }

    /// Exact division by `p^v`; requires known valuation at least `v` and
    /// lowers the precision by `v`.
    pub fn div_exact_p_pow(&self, ctx: &PAdicContext, v: u32) -> Result<Self> {
        if v == 0 {
            return Ok(self.clone());
        }
        if self.prec < v {
            return Err(Error::PrecisionExhausted(format!(
                "dividing a precision-{} element by p^{v}",
                self.prec
            )));
        }
        if self.valuation(ctx) < v {
            return Err(Error::Valuation(format!(
                "division by p^{v} needs valuation >= {v}, found {}",
                self.valuation(ctx)
            )));
        }
        Ok(Self {
            residue: &self.residue / ctx.pow_p(v),
            prec: self.prec - v,
        })
    }

    /// Inverse of a unit (valuation 0) at its own precision.
    pub fn unit_inv(&self, ctx: &PAdicContext) -> Result<Self> {
        if self.prec == 0 {
            return Ok(Self::zero(0));
        }
        if self.valuation(ctx) != 0 {
            return Err(Error::Valuation("inverse of a non-unit".into()));
        }
        Ok(Self {
            residue: mod_inverse(&self.residue, ctx.pow_p(self.prec))?,
            prec: self.prec,
        })
    }

    pub fn pow_u64(&self, ctx: &PAdicContext, mut e: u64) -> Self {
        let mut acc = Self {
            residue: BigUint::one(),
            prec: self.prec,
        };
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(ctx, &base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(ctx, &base);
            }
        }
        acc
    }

    /// Equality at the minimum of the two tracked precisions.
    pub fn eq_at_min_prec(&self, ctx: &PAdicContext, rhs: &Self) -> bool {
        let prec = self.prec.min(rhs.prec);
        ctx.reduce(&self.residue, prec) == ctx.reduce(&rhs.residue, prec)
    }
}

impl Serialize for PAdicElem {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("PAdicElem", 2)?;
        st.serialize_field("residue", &self.residue.to_str_radix(10))?;
        st.serialize_field("prec", &self.prec)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for PAdicElem {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            residue: String,
            prec: u32,
        }
        let raw = Raw::deserialize(d)?;
        let residue = BigUint::parse_bytes(raw.residue.as_bytes(), 10)
            .ok_or_else(|| D::Error::custom("residue is not a decimal integer"))?;
        Ok(PAdicElem {
            residue,
            prec: raw.prec,
        })
    }
}

/// Inverse of the 1-unit `1 + a` via the truncated alternating geometric
/// series; requires `v_p(a) >= 1`.
pub fn inv_one_unit(ctx: &PAdicContext, a: &PAdicElem) -> Result<PAdicElem> {
    if a.prec == 0 {
        return Ok(PAdicElem::zero(0));
    }
    let k = a.prec.min(ctx.precision());
    let v = a.valuation(ctx);
    if v == 0 {
        return Err(Error::Valuation(
            "inv_one_unit needs v_p(a) >= 1 at known precision".into(),
        ));
    }
    let a = a.with_prec(ctx, k);
    let mut sum = PAdicElem::from_i64(ctx, 1, k);
    let mut term = PAdicElem::from_i64(ctx, 1, k);
    let neg_a = a.neg(ctx);
    let mut n = 1u32;
    while n.saturating_mul(v) < k {
        term = term.mul(ctx, &neg_a);
        sum = sum.add(ctx, &term);
        n += 1;
    }
    Ok(sum)
}

/// Largest series index that can still contribute to a log at precision
/// `k` when the argument has valuation `v >= 1`.
fn log_series_bound(p: u64, v: u32, k: u32) -> u64 {
    let mut n = 1u64;
    loop {
        // floor(log_p(n)) bounds v_p(n); once n*v - log_p(n) >= k every
        // later term has valuation >= k as well.
        let mut logp = 0u64;
        let mut acc = p;
        while acc <= n {
            logp += 1;
            acc = acc.saturating_mul(p);
        }
        if n as i64 * v as i64 - logp as i64 >= k as i64 {
            return n;
        }
        n += 1;
    }
}

/// p-adic logarithm of the 1-unit `u`, truncated at the working
/// precision.  The reported precision is the input precision minus the
/// largest `v_p(n)` over contributing terms.
pub fn log_one_unit(ctx: &PAdicContext, u: &PAdicElem) -> Result<PAdicElem> {
    if u.prec == 0 {
        return Ok(PAdicElem::zero(0));
    }
    let k = u.prec.min(ctx.precision());
    let x = u.sub(ctx, &PAdicElem::from_i64(ctx, 1, k));
    if x.is_zero() {
        return Ok(PAdicElem::zero(k));
    }
    let v = x.valuation(ctx);
    if v == 0 {
        return Err(Error::Valuation("log_one_unit needs a 1-unit".into()));
    }
    let bound = log_series_bound(ctx.p(), v, k);
    let mut sum = PAdicElem::zero(k);
    let mut power = PAdicElem::from_i64(ctx, 1, k);
    for n in 1..=bound {
        power = power.mul(ctx, &x);
        let e = {
            let mut e = 0u32;
            let mut m = n;
            while m % ctx.p() as u64 == 0 {
                e += 1;
                m /= ctx.p() as u64;
            }
            e
        };
        // Term x^n / n is dropped once its valuation reaches the working
        // precision; otherwise it contributes and costs v_p(n) digits.
        if (n as i64) * (v as i64) - (e as i64) >= k as i64 {
            continue;
        }
        let unit_part = n / (ctx.p() as u64).pow(e);
        let divided = power.div_exact_p_pow(ctx, e)?;
        let inv_unit =
            PAdicElem::from_biguint(ctx, BigUint::from(unit_part), divided.prec()).unit_inv(ctx)?;
        let mut term = divided.mul(ctx, &inv_unit);
        if n % 2 == 0 {
            term = term.neg(ctx);
        }
        sum = sum.add(ctx, &term);
    }
    if sum.prec() == 0 {
        return Err(Error::PrecisionExhausted(
            "log series lost all precision".into(),
        ));
    }
    Ok(sum)
}

/// Legendre's formula: `v_p(n!) = (n - s_p(n)) / (p - 1)`.
pub fn vp_factorial(ctx: &PAdicContext, n: u64) -> u64 {
    let p = ctx.p();
    let mut digit_sum = 0u64;
    let mut m = n;
    while m > 0 {
        digit_sum += m % p;
        m /= p;
    }
    (n - digit_sum) / (p - 1)
}

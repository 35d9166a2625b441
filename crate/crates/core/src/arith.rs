//! Certified scalars and tent-map iteration.
//!
//! A [`Scalar`] is either an exact rational or a closed interval with dyadic
//! endpoints `[lo, hi] * 2^-bits`. Every sign decision relative to `c = 1/2`
//! is either provably correct or reported as [`SignRelC::Unresolved`].

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub const DEFAULT_PREC_CAP: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precision exhausted at index {index} (cap {cap} bits)")]
    PrecisionExhausted { index: usize, cap: u32 },
    #[error("critical orbit hits c exactly at n = {0}")]
    CriticalHit(usize),
    #[error("not realizable by a tent map: {0}")]
    NotRealizable(String),
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn half() -> BigRational {
    rat(1, 2)
}

fn pow2(k: u32) -> BigInt {
    BigInt::one() << k as usize
}

fn floor_div(a: &BigInt, b: &BigInt) -> BigInt {
    a.div_floor(b)
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    -((-a).div_floor(b))
}

fn shr_floor(a: &BigInt, k: u32) -> BigInt {
    floor_div(a, &pow2(k))
}

fn shr_ceil(a: &BigInt, k: u32) -> BigInt {
    ceil_div(a, &pow2(k))
}

/// Closed interval `[lo, hi] * 2^-bits`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: BigInt,
    hi: BigInt,
    bits: u32,
}

impl Interval {
    pub fn new(lo: BigInt, hi: BigInt, bits: u32) -> Interval {
        assert!(lo <= hi, "interval with lo > hi");
        Interval { lo, hi, bits }
    }

    /// Smallest dyadic interval at `bits` containing `r`.
    pub fn from_rational(r: &BigRational, bits: u32) -> Interval {
        Interval::from_bounds(r, r, bits)
    }

    /// Outward-rounded dyadic enclosure of `[lo, hi]`.
    pub fn from_bounds(lo: &BigRational, hi: &BigRational, bits: u32) -> Interval {
        let scale = pow2(bits);
        let l = floor_div(&(lo.numer() * &scale), lo.denom());
        let h = ceil_div(&(hi.numer() * &scale), hi.denom());
        Interval::new(l, h, bits)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lo(&self) -> BigRational {
        BigRational::new(self.lo.clone(), pow2(self.bits))
    }

    pub fn hi(&self) -> BigRational {
        BigRational::new(self.hi.clone(), pow2(self.bits))
    }

    pub fn width(&self) -> BigRational {
        BigRational::new(&self.hi - &self.lo, pow2(self.bits))
    }

    pub fn mantissas(&self) -> (&BigInt, &BigInt) {
        (&self.lo, &self.hi)
    }

    /// Re-express at another precision, rounding outward when coarsening.
    pub fn rebits(&self, bits: u32) -> Interval {
        match bits.cmp(&self.bits) {
            Ordering::Equal => self.clone(),
            Ordering::Greater => {
                let k = (bits - self.bits) as usize;
                Interval::new(&self.lo << k, &self.hi << k, bits)
            }
            Ordering::Less => {
                let k = self.bits - bits;
                Interval::new(shr_floor(&self.lo, k), shr_ceil(&self.hi, k), bits)
            }
        }
    }

    pub fn contains(&self, r: &BigRational) -> bool {
        self.lo() <= *r && *r <= self.hi()
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let bits = self.bits.max(other.bits);
        let (a, b) = (self.rebits(bits), other.rebits(bits));
        let lo = a.lo.max(b.lo);
        let hi = a.hi.min(b.hi);
        if lo <= hi {
            Some(Interval::new(lo, hi, bits))
        } else {
            None
        }
    }
}

/// Position of a value relative to the critical point `c = 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SignRelC {
    Below,
    Above,
    AtC,
    Unresolved,
}

impl SignRelC {
    /// Itinerary symbol, `None` for `AtC`/`Unresolved`.
    pub fn symbol(self) -> Option<u8> {
        match self {
            SignRelC::Below => Some(0),
            SignRelC::Above => Some(1),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scalar {
    Exact(BigRational),
    Interval(Interval),
}

impl From<BigRational> for Scalar {
    fn from(r: BigRational) -> Self {
        Scalar::Exact(r)
    }
}

impl From<Interval> for Scalar {
    fn from(i: Interval) -> Self {
        Scalar::Interval(i)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => write!(f, "{}", r),
            Scalar::Interval(i) => write!(f, "[{:.17}, {:.17}]", to_f64(&i.lo()), to_f64(&i.hi())),
        }
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Largest f64 not above `r`.
pub fn f64_down(r: &BigRational) -> f64 {
    let f = to_f64(r);
    match BigRational::from_float(f) {
        Some(g) if g > *r => f.next_down(),
        _ => f,
    }
}

/// Smallest f64 not below `r`.
pub fn f64_up(r: &BigRational) -> f64 {
    let f = to_f64(r);
    match BigRational::from_float(f) {
        Some(g) if g < *r => f.next_up(),
        _ => f,
    }
}

impl Scalar {
    pub fn exact(n: i64, d: i64) -> Scalar {
        Scalar::Exact(rat(n, d))
    }

    pub fn half() -> Scalar {
        Scalar::Exact(half())
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Scalar::Exact(r) => Some(r),
            _ => None,
        }
    }

    pub fn bits(&self) -> Option<u32> {
        match self {
            Scalar::Exact(_) => None,
            Scalar::Interval(i) => Some(i.bits),
        }
    }

    pub fn lo(&self) -> BigRational {
        match self {
            Scalar::Exact(r) => r.clone(),
            Scalar::Interval(i) => i.lo(),
        }
    }

    pub fn hi(&self) -> BigRational {
        match self {
            Scalar::Exact(r) => r.clone(),
            Scalar::Interval(i) => i.hi(),
        }
    }

    pub fn width(&self) -> BigRational {
        match self {
            Scalar::Exact(_) => BigRational::zero(),
            Scalar::Interval(i) => i.width(),
        }
    }

    pub fn mid_f64(&self) -> f64 {
        (to_f64(&self.lo()) + to_f64(&self.hi())) / 2.0
    }

    pub fn contains(&self, r: &BigRational) -> bool {
        match self {
            Scalar::Exact(x) => x == r,
            Scalar::Interval(i) => i.contains(r),
        }
    }

    /// Interval view at `bits` (exact values are rounded outward).
    pub fn to_interval(&self, bits: u32) -> Interval {
        match self {
            Scalar::Exact(r) => Interval::from_rational(r, bits),
            Scalar::Interval(i) => i.rebits(bits),
        }
    }

    fn common_bits(&self, other: &Scalar) -> u32 {
        match (self.bits(), other.bits()) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => 0,
        }
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        if let (Scalar::Exact(a), Scalar::Exact(b)) = (self, other) {
            return Scalar::Exact(a + b);
        }
        let p = self.common_bits(other);
        let (a, b) = (self.to_interval(p), other.to_interval(p));
        Scalar::Interval(Interval::new(&a.lo + &b.lo, &a.hi + &b.hi, p))
    }

    pub fn neg(&self) -> Scalar {
        match self {
            Scalar::Exact(a) => Scalar::Exact(-a),
            Scalar::Interval(i) => Scalar::Interval(Interval::new(-&i.hi, -&i.lo, i.bits)),
        }
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        self.add(&other.neg())
    }

    /// `1 - x`.
    pub fn one_minus(&self) -> Scalar {
        Scalar::Exact(BigRational::one()).sub(self)
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        if let (Scalar::Exact(a), Scalar::Exact(b)) = (self, other) {
            return Scalar::Exact(a * b);
        }
        let p = self.common_bits(other);
        let (a, b) = (self.to_interval(p), other.to_interval(p));
        let prods = [&a.lo * &b.lo, &a.lo * &b.hi, &a.hi * &b.lo, &a.hi * &b.hi];
        let mn = prods.iter().min().unwrap();
        let mx = prods.iter().max().unwrap();
        Scalar::Interval(Interval::new(shr_floor(mn, p), shr_ceil(mx, p), p))
    }

    /// Division by a certified-positive divisor.
    pub fn div(&self, other: &Scalar) -> Result<Scalar, ArithError> {
        if other.lo() <= BigRational::zero() {
            return Err(ArithError::Domain("divisor not certified positive".into()));
        }
        if let (Scalar::Exact(a), Scalar::Exact(b)) = (self, other) {
            return Ok(Scalar::Exact(a / b));
        }
        let p = self.common_bits(other);
        let (a, b) = (self.to_interval(p), other.to_interval(p));
        let scale = pow2(p);
        let mut lo: Option<BigInt> = None;
        let mut hi: Option<BigInt> = None;
        for x in [&a.lo, &a.hi] {
            for y in [&b.lo, &b.hi] {
                let num = x * &scale;
                let f = floor_div(&num, y);
                let c = ceil_div(&num, y);
                lo = Some(match lo {
                    Some(l) if l <= f => l,
                    _ => f,
                });
                hi = Some(match hi {
                    Some(h) if h >= c => h,
                    _ => c,
                });
            }
        }
        Ok(Scalar::Interval(Interval::new(lo.unwrap(), hi.unwrap(), p)))
    }

    /// Multiply by 2^k exactly.
    pub fn scale_pow2(&self, k: i32) -> Scalar {
        let f = if k >= 0 {
            BigRational::from_integer(pow2(k as u32))
        } else {
            BigRational::new(BigInt::one(), pow2((-k) as u32))
        };
        self.mul(&Scalar::Exact(f))
    }

    /// Certified comparison: `Some` only when the order is proven.
    pub fn cmp_certified(&self, other: &Scalar) -> Option<Ordering> {
        if let (Scalar::Exact(a), Scalar::Exact(b)) = (self, other) {
            return Some(a.cmp(b));
        }
        if self.hi() < other.lo() {
            Some(Ordering::Less)
        } else if self.lo() > other.hi() {
            Some(Ordering::Greater)
        } else {
            None
        }
    }

    pub fn cmp_rational(&self, r: &BigRational) -> Option<Ordering> {
        self.cmp_certified(&Scalar::Exact(r.clone()))
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(r.abs()),
            Scalar::Interval(i) => {
                if !i.lo.is_negative() {
                    self.clone()
                } else if !i.hi.is_positive() {
                    self.neg()
                } else {
                    let m = (-&i.lo).max(i.hi.clone());
                    Scalar::Interval(Interval::new(BigInt::zero(), m, i.bits))
                }
            }
        }
    }

    pub fn pow(&self, e: usize) -> Scalar {
        let mut base = self.clone();
        let mut acc = Scalar::Exact(BigRational::one());
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Hull of two scalars.
    pub fn hull(&self, other: &Scalar) -> Scalar {
        if self == other {
            return self.clone();
        }
        let p = self.common_bits(other).max(64);
        let (a, b) = (self.to_interval(p), other.to_interval(p));
        Scalar::Interval(Interval::new(a.lo.min(b.lo), a.hi.max(b.hi), p))
    }

    /// Intersect two enclosures of the same true value.
    pub fn meet(&self, other: &Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(_), _) => self.clone(),
            (_, Scalar::Exact(_)) => other.clone(),
            (Scalar::Interval(a), Scalar::Interval(b)) => match a.intersect(b) {
                Some(i) => Scalar::Interval(i),
                None => self.clone(),
            },
        }
    }

    /// Clamp an enclosure of a value known to lie in `[0, 1]`.
    pub fn clamp_unit(&self) -> Scalar {
        match self {
            Scalar::Exact(_) => self.clone(),
            Scalar::Interval(i) => {
                let top = pow2(i.bits);
                let lo = i.lo.clone().max(BigInt::zero()).min(top.clone());
                let hi = i.hi.clone().min(top).max(lo.clone());
                Scalar::Interval(Interval::new(lo, hi, i.bits))
            }
        }
    }
}

pub fn sign_rel_c(x: &Scalar) -> SignRelC {
    let c = half();
    match x {
        Scalar::Exact(r) => match r.cmp(&c) {
            Ordering::Less => SignRelC::Below,
            Ordering::Greater => SignRelC::Above,
            Ordering::Equal => SignRelC::AtC,
        },
        Scalar::Interval(i) => {
            if i.hi() < c {
                SignRelC::Below
            } else if i.lo() > c {
                SignRelC::Above
            } else {
                SignRelC::Unresolved
            }
        }
    }
}

fn unit_check(x: &Scalar) -> Result<(), ArithError> {
    if x.lo() < BigRational::zero() || x.hi() > BigRational::one() {
        return Err(ArithError::Domain(format!("{} not certified inside [0,1]", x)));
    }
    Ok(())
}

/// `T_s(x) = min(sx, s(1-x))` for a slope enclosure `s`.
pub fn tent(s: &Scalar, x: &Scalar) -> Result<Scalar, ArithError> {
    unit_check(x)?;
    if let (Scalar::Exact(sv), Scalar::Exact(xv)) = (s, x) {
        let c = half();
        let y = if *xv <= c { sv * xv } else { sv * (BigRational::one() - xv) };
        return Ok(Scalar::Exact(y));
    }
    let p = x.common_bits(s);
    let xi = x.to_interval(p);
    let si = s.to_interval(p);
    let halfp = pow2(p) >> 1usize;
    let onep = pow2(p);
    let (sl, sh) = (&si.lo, &si.hi);
    let (lo, hi) = if xi.hi <= halfp {
        (sl * &xi.lo, sh * &xi.hi)
    } else if xi.lo >= halfp {
        (sl * (&onep - &xi.hi), sh * (&onep - &xi.lo))
    } else {
        let a = (&xi.lo).min(&(&onep - &xi.hi)).clone();
        (sl * a, sh * &halfp)
    };
    Ok(Scalar::Interval(Interval::new(shr_floor(&lo, p), shr_ceil(&hi, p), p)))
}

/// Left inverse branch `y / s`.
pub fn inv_left(s: &Scalar, y: &Scalar) -> Result<Scalar, ArithError> {
    y.div(s)
}

/// Right inverse branch `1 - y / s`.
pub fn inv_right(s: &Scalar, y: &Scalar) -> Result<Scalar, ArithError> {
    Ok(y.div(s)?.one_minus())
}

type TargetFn = dyn Fn(usize) -> Vec<u8> + Send + Sync;

#[derive(Clone)]
pub enum SlopeSource {
    Exact(BigRational),
    /// Unique root of an integer polynomial (coefficients, lowest degree first) in `(lo, hi)`.
    Root {
        name: String,
        coeffs: Vec<i64>,
        lo: BigRational,
        hi: BigRational,
    },
    /// The slope whose kneading sequence is produced by `target`.
    Kneading {
        name: String,
        target: Arc<TargetFn>,
    },
}

impl fmt::Debug for SlopeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlopeSource::Exact(r) => write!(f, "Exact({})", r),
            SlopeSource::Root { name, .. } => write!(f, "Root({})", name),
            SlopeSource::Kneading { name, .. } => write!(f, "Kneading({})", name),
        }
    }
}

/// A tent slope `s ∈ (1, 2]` together with a precision budget.
#[derive(Clone, Debug)]
pub struct SlopeParam {
    source: SlopeSource,
    prec_cap: u32,
}

fn enclosure_cache() -> &'static Mutex<HashMap<(String, u32), Interval>> {
    static CACHE: OnceLock<Mutex<HashMap<(String, u32), Interval>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl SlopeParam {
    pub fn rational(s: BigRational) -> Result<SlopeParam, ArithError> {
        if s <= BigRational::one() || s > rat(2, 1) {
            return Err(ArithError::Domain(format!("slope {} outside (1, 2]", s)));
        }
        Ok(SlopeParam { source: SlopeSource::Exact(s), prec_cap: DEFAULT_PREC_CAP })
    }

    pub fn ratio(n: i64, d: i64) -> SlopeParam {
        SlopeParam::rational(rat(n, d)).expect("slope in range")
    }

    /// Decimal or `p/q` literal, parsed exactly.
    pub fn parse_rational(text: &str) -> Result<SlopeParam, ArithError> {
        SlopeParam::rational(parse_rational(text)?)
    }

    pub fn root(name: &str, coeffs: Vec<i64>, lo: BigRational, hi: BigRational) -> Result<SlopeParam, ArithError> {
        if lo <= BigRational::one() || hi > rat(2, 1) || lo >= hi {
            return Err(ArithError::Domain("root bracket outside (1, 2]".into()));
        }
        let a = poly_sign(&coeffs, &lo);
        let b = poly_sign(&coeffs, &hi);
        if a == 0 || b == 0 || a == b {
            return Err(ArithError::Domain(format!("bracket for {} has no sign change", name)));
        }
        Ok(SlopeParam {
            source: SlopeSource::Root { name: name.to_string(), coeffs, lo, hi },
            prec_cap: DEFAULT_PREC_CAP,
        })
    }

    pub fn kneading(name: &str, target: Arc<TargetFn>) -> SlopeParam {
        SlopeParam { source: SlopeSource::Kneading { name: name.to_string(), target }, prec_cap: DEFAULT_PREC_CAP }
    }

    pub fn with_prec_cap(mut self, cap: u32) -> SlopeParam {
        self.prec_cap = cap.max(64);
        self
    }

    pub fn prec_cap(&self) -> u32 {
        self.prec_cap
    }

    pub fn source(&self) -> &SlopeSource {
        &self.source
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match &self.source {
            SlopeSource::Exact(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.exact().is_some()
    }

    pub fn label(&self) -> String {
        match &self.source {
            SlopeSource::Exact(r) => r.to_string(),
            SlopeSource::Root { name, .. } | SlopeSource::Kneading { name, .. } => name.clone(),
        }
    }

    /// Rough value, for precision estimates and display only.
    pub fn approx(&self) -> f64 {
        match &self.source {
            SlopeSource::Exact(r) => to_f64(r),
            SlopeSource::Root { lo, hi, .. } => (to_f64(lo) + to_f64(hi)) / 2.0,
            SlopeSource::Kneading { .. } => self.at(64).map(|s| s.mid_f64()).unwrap_or(2.0),
        }
    }

    /// `Some(true)` when `s < 2` is certified (so κ is finite).
    pub fn below_two(&self) -> Option<bool> {
        let two = rat(2, 1);
        match self.at(64).ok()?.cmp_rational(&two) {
            Some(Ordering::Less) => Some(true),
            Some(_) => Some(false),
            None => match &self.source {
                SlopeSource::Exact(r) => Some(*r < two),
                _ => None,
            },
        }
    }

    /// Enclosure of `s` with width at most `2^-bits`.
    pub fn at(&self, bits: u32) -> Result<Scalar, ArithError> {
        match &self.source {
            SlopeSource::Exact(r) => Ok(Scalar::Exact(r.clone())),
            SlopeSource::Root { name, coeffs, lo, hi } => {
                let key = (format!("root:{}", name), bits);
                if let Some(i) = enclosure_cache().lock().unwrap().get(&key) {
                    return Ok(Scalar::Interval(i.clone()));
                }
                let i = root_enclosure(coeffs, lo, hi, bits);
                enclosure_cache().lock().unwrap().insert(key, i.clone());
                Ok(Scalar::Interval(i))
            }
            SlopeSource::Kneading { name, target } => {
                let key = (format!("knead:{}", name), bits);
                if let Some(i) = enclosure_cache().lock().unwrap().get(&key) {
                    return Ok(Scalar::Interval(i.clone()));
                }
                let i = kneading_enclosure(target.as_ref(), bits)?;
                enclosure_cache().lock().unwrap().insert(key, i.clone());
                Ok(Scalar::Interval(i))
            }
        }
    }
}

/// Parse `"3/2"`, `"1.99"` or an integer as an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, ArithError> {
    let t = text.trim();
    let bad = || ArithError::Domain(format!("cannot parse rational '{}'", text));
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((ip, fp)) = t.split_once('.') {
        if fp.is_empty() || !fp.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = ip.starts_with('-');
        let ipv: BigInt = if ip.is_empty() || ip == "-" { BigInt::zero() } else { ip.parse().map_err(|_| bad())? };
        let fpv: BigInt = fp.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), fp.len());
        let mag = ipv.abs() * &den + fpv;
        let num = if neg { -mag } else { mag };
        return Ok(BigRational::new(num, den));
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

fn poly_eval(coeffs: &[i64], x: &BigRational) -> BigRational {
    let mut acc = BigRational::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x + BigRational::from_integer(BigInt::from(*c));
    }
    acc
}

fn poly_sign(coeffs: &[i64], x: &BigRational) -> i32 {
    let v = poly_eval(coeffs, x);
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

fn root_enclosure(coeffs: &[i64], lo: &BigRational, hi: &BigRational, bits: u32) -> Interval {
    let target = BigRational::new(BigInt::one(), pow2(bits + 1));
    let (mut a, mut b) = (lo.clone(), hi.clone());
    let sa = poly_sign(coeffs, &a);
    while &b - &a > target {
        let m = (&a + &b) / rat(2, 1);
        match poly_sign(coeffs, &m) {
            0 => return Interval::from_rational(&m, bits),
            v if v == sa => a = m,
            _ => b = m,
        }
    }
    Interval::from_bounds(&a, &b, bits)
}

/// Compare kneading sequences in the unimodal order (increasing in `s`).
pub fn kneading_order(a: &[u8], b: &[u8]) -> Ordering {
    let mut odd = false;
    for (x, y) in a.iter().zip(b) {
        if x != y {
            let o = x.cmp(y);
            return if odd { o.reverse() } else { o };
        }
        odd ^= *x == 1;
    }
    Ordering::Equal
}

/// Orbit of `c` with certified signs.
#[derive(Clone, Debug)]
pub struct Orbit {
    /// `values[n] = c_n`, with `values[0] = c`.
    pub values: Vec<Scalar>,
    pub signs: Vec<SignRelC>,
    pub bits: Option<u32>,
    /// Set when the exact orbit is eventually periodic (only `s = 2` among rational slopes).
    pub finite: bool,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() <= 1
    }

    pub fn c(&self, n: usize) -> &Scalar {
        &self.values[n]
    }

    pub fn first_unresolved(&self) -> Option<usize> {
        (1..self.values.len()).find(|&n| matches!(self.signs[n], SignRelC::Unresolved))
    }

    pub fn first_critical_hit(&self) -> Option<usize> {
        (1..self.values.len()).find(|&n| matches!(self.signs[n], SignRelC::AtC))
    }

    /// Kneading symbols `ν_1..ν_N` (requires all signs resolved and no hit).
    pub fn symbols(&self) -> Result<Vec<u8>, ArithError> {
        let mut out = Vec::with_capacity(self.len());
        for n in 1..self.values.len() {
            match self.signs[n] {
                SignRelC::Below => out.push(0),
                SignRelC::Above => out.push(1),
                SignRelC::AtC => return Err(ArithError::CriticalHit(n)),
                SignRelC::Unresolved => {
                    return Err(ArithError::PrecisionExhausted { index: n, cap: self.bits.unwrap_or(0) })
                }
            }
        }
        Ok(out)
    }
}

fn exact_orbit(s: &BigRational, n: usize) -> Orbit {
    // c_n = a_n / (2 q^n) with integer a_n; avoids gcd work along the orbit.
    let p = s.numer().clone();
    let q = s.denom().clone();
    let mut a = BigInt::one();
    let mut qn = BigInt::one();
    let mut values = vec![Scalar::half()];
    let mut signs = vec![SignRelC::AtC];
    for _ in 0..n {
        let twice = &qn << 1usize;
        a = if a <= qn { &p * &a } else { &p * (&twice - &a) };
        qn *= &q;
        let v = BigRational::new(a.clone(), &qn << 1usize);
        let sign = match a.cmp(&qn) {
            Ordering::Less => SignRelC::Below,
            Ordering::Greater => SignRelC::Above,
            Ordering::Equal => SignRelC::AtC,
        };
        values.push(Scalar::Exact(v));
        signs.push(sign);
    }
    let finite = q.is_one();
    Orbit { values, signs, bits: None, finite }
}

/// Orbit at a fixed precision; signs may be `Unresolved`.
pub fn critical_orbit_at(s: &SlopeParam, n: usize, bits: u32) -> Result<Orbit, ArithError> {
    if let Some(r) = s.exact() {
        return Ok(exact_orbit(r, n));
    }
    let se = s.at(bits)?;
    let mut x = Scalar::half().to_interval(bits).into();
    let mut values = vec![Scalar::half()];
    let mut signs = vec![SignRelC::AtC];
    for _ in 0..n {
        x = tent(&se, &x)?.clamp_unit();
        signs.push(sign_rel_c(&x));
        values.push(x.clone());
    }
    Ok(Orbit { values, signs, bits: Some(bits), finite: false })
}

/// Starting precision for an orbit of length `n`.
pub fn initial_bits(s: &SlopeParam, n: usize) -> u32 {
    let growth = s.approx().max(1.0).log2();
    let need = 64.0 + n as f64 * growth;
    let mut b = 64u32;
    while (b as f64) < need && b < (1 << 24) {
        b *= 2;
    }
    b.min(s.prec_cap()).max(64)
}

/// Orbit `c_1..c_N` with precision escalation; errors on the first index
/// whose sign stays unresolved at the cap.
pub fn critical_orbit(s: &SlopeParam, n: usize) -> Result<Orbit, ArithError> {
    if s.is_exact() {
        return critical_orbit_at(s, n, 0);
    }
    let mut bits = initial_bits(s, n);
    loop {
        let o = critical_orbit_at(s, n, bits)?;
        match o.first_unresolved() {
            None => return Ok(o),
            Some(idx) => {
                if bits >= s.prec_cap() {
                    return Err(ArithError::PrecisionExhausted { index: idx, cap: s.prec_cap() });
                }
                bits = (bits * 2).min(s.prec_cap());
            }
        }
    }
}

/// Largest prefix of the orbit whose signs resolve within the cap.
pub fn critical_orbit_partial(s: &SlopeParam, n: usize) -> Result<Orbit, ArithError> {
    match critical_orbit(s, n) {
        Ok(o) => Ok(o),
        Err(ArithError::PrecisionExhausted { .. }) => critical_orbit_at(s, n, s.prec_cap()),
        Err(e) => Err(e),
    }
}

pub fn tent_apply(s: &SlopeParam, x: &Scalar) -> Result<Scalar, ArithError> {
    let bits = x.bits().unwrap_or(if s.is_exact() { 0 } else { 128 });
    let se = s.at(bits.max(64))?;
    tent(&se, x)
}

/// How a value can be recomputed at higher precision.
#[derive(Clone, Debug)]
pub enum Recipe {
    Constant(BigRational),
    /// `c_n` for the given slope.
    OrbitPoint {
        slope: SlopeParam,
        n: usize,
    },
}

impl Recipe {
    pub fn eval(&self, bits: u32) -> Result<Scalar, ArithError> {
        match self {
            Recipe::Constant(r) => Ok(Scalar::Exact(r.clone())),
            Recipe::OrbitPoint { slope, n } => Ok(critical_orbit_at(slope, *n, bits)?.values[*n].clone()),
        }
    }
}

/// Refine `x` (computed by `recipe`) until its width is at most `target`.
/// Each step doubles the precision and intersects with the previous
/// enclosure, so refinement never widens.
pub fn refine(x: &Scalar, recipe: &Recipe, target: &BigRational, cap: u32) -> Result<Scalar, ArithError> {
    if x.is_exact() || x.width() <= *target {
        return Ok(x.clone());
    }
    let mut cur = x.clone();
    let mut bits = x.bits().unwrap_or(64).max(64);
    loop {
        if bits >= cap {
            return Err(ArithError::PrecisionExhausted { index: 0, cap });
        }
        bits = (bits * 2).min(cap);
        let fresh = recipe.eval(bits)?;
        cur = match (&cur, &fresh) {
            (Scalar::Interval(a), Scalar::Interval(b)) => {
                let a = a.rebits(bits.max(a.bits()));
                match a.intersect(b) {
                    Some(i) => Scalar::Interval(i),
                    None => return Err(ArithError::Domain("refinement produced disjoint enclosures".into())),
                }
            }
            _ => fresh,
        };
        if cur.is_exact() || cur.width() <= *target {
            return Ok(cur);
        }
    }
}

/// Kneading symbols of an exact dyadic/rational slope, compared with
/// `target` in the unimodal order. Reads up to `limit` symbols.
fn compare_slope(m: &BigRational, target: &TargetFn, limit: usize, cap: u32) -> Result<Ordering, ArithError> {
    let mut len = 64usize.min(limit);
    let mut bits = 128u32;
    loop {
        let t = target(len);
        let s = Scalar::Exact(m.clone());
        let mut x: Scalar = Scalar::half().to_interval(bits).into();
        let mut odd = false;
        let mut needs_bits = false;
        for (i, &want) in t.iter().enumerate() {
            x = tent(&s, &x)?.clamp_unit();
            let got = match sign_rel_c(&x) {
                SignRelC::Below => 0u8,
                SignRelC::Above => 1u8,
                SignRelC::AtC => return Err(ArithError::CriticalHit(i + 1)),
                SignRelC::Unresolved => {
                    needs_bits = true;
                    break;
                }
            };
            if got != want {
                let o = got.cmp(&want);
                return Ok(if odd { o.reverse() } else { o });
            }
            odd ^= got == 1;
        }
        if needs_bits {
            if bits >= cap {
                return Err(ArithError::PrecisionExhausted { index: 0, cap });
            }
            bits = (bits * 2).min(cap);
            continue;
        }
        if len >= limit {
            return Ok(Ordering::Equal);
        }
        len = (len * 2).min(limit);
    }
}

fn bisect_enclosure(target: &TargetFn, bits: u32) -> Result<Interval, ArithError> {
    let mut lo = rat(1, 1);
    let mut hi = rat(2, 1);
    let width = BigRational::new(BigInt::one(), pow2(bits));
    let limit = 8 * bits as usize + 256;
    let cap = (4 * bits + 512).max(DEFAULT_PREC_CAP);
    while &hi - &lo > width {
        let m = (&lo + &hi) / rat(2, 1);
        match compare_slope(&m, target, limit, cap)? {
            Ordering::Less => lo = m,
            Ordering::Greater => hi = m,
            Ordering::Equal => {
                return Err(ArithError::NotRealizable(format!("slope bisection stalled at {} symbols", limit)))
            }
        }
    }
    Ok(Interval::from_bounds(&lo, &hi, bits))
}

/// Fixed-point Horner evaluation of `Σ coef_n t^n` with `t = tt / 2^p`.
/// The result is within `coef.len()` units of `2^-p` of the exact value.
fn horner_fixed(coef: &[i64], tt: &BigInt, p: u32) -> BigInt {
    let mut acc = BigInt::zero();
    for &c in coef.iter().rev() {
        acc = shr_floor(&(acc * tt), p) + (BigInt::from(c) << p as usize);
    }
    acc
}

/// Enclosure of a kneading-defined slope. Low precision uses bisection in
/// the kneading order; high precision refines that by Newton's method on
/// `D(t) = Σ θ_n t^n`, where `θ_n = ∏_{i ≤ n} (±1)` (+1 when `c_i < c`).
/// For a tent map `D(1/s) = 0`, and the zero is certified by a sign change
/// of the truncated series beyond its tail bound, with `D'` of fixed sign on
/// the low-precision bracket.
fn kneading_enclosure(target: &TargetFn, bits: u32) -> Result<Interval, ArithError> {
    const BASE: u32 = 64;
    let base = bisect_enclosure(target, bits.min(BASE))?;
    if bits <= BASE {
        return Ok(base);
    }
    let refined = newton_enclosure(target, &base, bits);
    match refined {
        Some(i) => Ok(i),
        None => bisect_enclosure(target, bits),
    }
}

fn newton_enclosure(target: &TargetFn, base: &Interval, bits: u32) -> Option<Interval> {
    let s_lo = base.lo();
    let s_hi = base.hi();
    let growth = to_f64(&s_lo).log2();
    if growth <= 0.05 {
        return None;
    }
    let n = ((bits as f64 + 64.0) / growth).ceil() as usize + 8;
    let nu = target(n);
    if nu.len() < n {
        return None;
    }
    let mut theta = Vec::with_capacity(n + 1);
    let mut cur = 1i64;
    theta.push(cur);
    for &b in &nu {
        if b == 1 {
            cur = -cur;
        }
        theta.push(cur);
    }
    let deriv: Vec<i64> = (1..theta.len()).map(|i| i as i64 * theta[i]).collect();
    let guard = 64 + usize::BITS - n.leading_zeros();
    let p = bits + guard;
    let one = pow2(p);
    // t ranges over [1/s_hi, 1/s_lo].
    let t_lo_r = BigRational::new(one.clone(), BigInt::one()) / &s_hi;
    let t_hi_r = BigRational::new(one.clone(), BigInt::one()) / &s_lo;
    let a0 = t_lo_r.floor().to_integer();
    let b0 = t_hi_r.ceil().to_integer();
    let mut tt = (&a0 + &b0) >> 1usize;
    for _ in 0..64 {
        let d = horner_fixed(&theta, &tt, p);
        let dd = horner_fixed(&deriv, &tt, p);
        if dd.is_zero() {
            return None;
        }
        let step = (d << p as usize) / &dd;
        tt -= &step;
        if step.abs() <= BigInt::from(1) << (guard as usize - 8) {
            break;
        }
    }
    if tt < a0 || tt > b0 {
        return None;
    }
    // Certify a sign change at tt ± 2^-(bits+4).
    let delta = BigInt::one() << (guard as usize - 4);
    let a = &tt - &delta;
    let b = &tt + &delta;
    let err = BigInt::from(n as u64 + 2);
    // Tail of Σ θ_n t^n beyond n: at most t^{n+1}/(1-t), bounded using b0.
    let tmax = to_f64(&BigRational::new(b0.clone(), one.clone()));
    if tmax >= 1.0 {
        return None;
    }
    let tail_log2 = (n as f64 + 1.0) * tmax.log2() - (1.0 - tmax).log2();
    let tail_ulps = tail_log2 + p as f64;
    if tail_ulps > (p as f64) - 8.0 {
        return None;
    }
    let tail = if tail_ulps < 0.0 { BigInt::one() } else { BigInt::one() << (tail_ulps.ceil() as usize + 1) };
    let margin = &err + &tail;
    let da = horner_fixed(&theta, &a, p);
    let db = horner_fixed(&theta, &b, p);
    let certain = |v: &BigInt| v.abs() > margin;
    if !(certain(&da) && certain(&db)) || da.signum() == db.signum() {
        return None;
    }
    // D' keeps one sign on [a0, b0]: |D'(tt)| exceeds the drift
    // width * Σ n² t^{n-2} ≤ width * 2/(1-t)^3, plus rounding and tail.
    let dd = horner_fixed(&deriv, &tt, p);
    let width = to_f64(&BigRational::new(&b0 - &a0, one.clone()));
    let drift = width * 2.0 / (1.0 - tmax).powi(3) + (n as f64 + 2.0) * tmax.powi(n as i32) / (1.0 - tmax).powi(2);
    let dd_f =
        to_f64(&BigRational::new(dd.clone(), one.clone())).abs() - (n as f64 + 2.0) * 2f64.powi(-(p as i32).min(1000));
    if !(dd_f > drift * 1.01) {
        return None;
    }
    if a < a0 || b > b0 {
        return None;
    }
    // s = 1/t with outward rounding.
    let s_lo_new = BigRational::new(one.clone(), b.clone());
    let s_hi_new = BigRational::new(one, a);
    Some(Interval::from_bounds(&s_lo_new, &s_hi_new, bits))
}

/// An exact dyadic slope whose kneading sequence starts with `prefix`.
pub fn realize_prefix(prefix: &[u8]) -> Result<BigRational, ArithError> {
    if prefix.first() != Some(&1) {
        return Err(ArithError::NotRealizable("kneading prefix must start with 1".into()));
    }
    let owned = prefix.to_vec();
    let target = move |n: usize| owned[..n.min(owned.len())].to_vec();
    let mut lo = rat(1, 1);
    let mut hi = rat(2, 1);
    let cap = (8 * prefix.len() as u32 + 512).max(DEFAULT_PREC_CAP);
    let max_steps = 4 * prefix.len() + 128;
    for _ in 0..max_steps {
        let m = (&lo + &hi) / rat(2, 1);
        match compare_slope(&m, &target, prefix.len(), cap)? {
            Ordering::Equal => return Ok(m),
            Ordering::Less => lo = m,
            Ordering::Greater => hi = m,
        }
    }
    Err(ArithError::NotRealizable(format!("no tent slope found for prefix of length {}", prefix.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_refinement_matches_bisection() {
        use crate::kneading::{fibonacci_q, fixture41_bits};
        use crate::presets::nu_of;
        let targets: Vec<Box<TargetFn>> = vec![Box::new(|n| nu_of(fibonacci_q, n)), Box::new(fixture41_bits)];
        for t in targets {
            let base = bisect_enclosure(t.as_ref(), 64).unwrap();
            let fine = newton_enclosure(t.as_ref(), &base, 300).expect("newton certificate");
            let slow = bisect_enclosure(t.as_ref(), 300).unwrap();
            assert!(fine.intersect(&slow).is_some());
            assert!(fine.width() <= BigRational::new(BigInt::one(), pow2(298)));
        }
    }

    #[test]
    fn interval_rounding_contains() {
        let r = rat(1, 3);
        let i = Interval::from_rational(&r, 20);
        assert!(i.contains(&r));
        assert!(i.width() <= rat(1, 1 << 20));
    }

    #[test]
    fn div_encloses_quotient() {
        let a = Scalar::Interval(Interval::from_rational(&rat(2, 7), 40));
        let b = Scalar::Interval(Interval::from_rational(&rat(5, 3), 40));
        let q = a.div(&b).unwrap();
        assert!(q.contains(&(rat(2, 7) / rat(5, 3))));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/2").unwrap(), rat(3, 2));
        assert_eq!(parse_rational("1.99").unwrap(), rat(199, 100));
        assert_eq!(parse_rational("2").unwrap(), rat(2, 1));
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn kneading_order_direction() {
        // s = 2 gives the largest kneading sequence.
        assert_eq!(kneading_order(&[1, 0, 0, 0], &[1, 0, 0, 1]), Ordering::Greater);
        assert_eq!(kneading_order(&[1, 0, 1, 1], &[1, 0, 1, 0]), Ordering::Greater);
    }
}

//! Fixed-point numerics.
//!
//! Rates, utilizations, fractions and accrual indices are "rays": unsigned
//! integers with 27 fractional decimal digits. Token amounts, prices and
//! values are "wads": 18 fractional decimal digits (attounits for tokens).
//!
//! Multiplication rounds half-up at the result scale, division truncates
//! toward zero. Intermediate products are carried in 256 bits so that any
//! two in-range operands can be combined without overflow; a result that
//! does not fit back into 128 bits is a programming error and panics.

use std::fmt;
use std::str::FromStr;

use ethnum::U256;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const RAY_DECIMALS: u32 = 27;
pub const WAD_DECIMALS: u32 = 18;
pub const RAY: u128 = 1_000_000_000_000_000_000_000_000_000;
pub const WAD: u128 = 1_000_000_000_000_000_000;
pub const HALF_RAY: u128 = RAY / 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFixedError {
    #[error("empty number")]
    Empty,
    #[error("invalid digit in `{0}`")]
    InvalidDigit(String),
    #[error("`{input}` has more than {max} fractional digits")]
    TooPrecise { input: String, max: u32 },
    #[error("`{0}` is out of range")]
    Overflow(String),
    #[error("`{0}` is negative")]
    Negative(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    Down,
    HalfUp,
    Up,
}

/// `a * b / c` with a 256-bit intermediate.
pub fn mul_div(a: u128, b: u128, c: u128, rounding: Rounding) -> u128 {
    assert!(c != 0, "fixed-point division by zero");
    let prod = U256::from(a) * U256::from(b);
    let c = U256::from(c);
    let q = match rounding {
        Rounding::Down => prod / c,
        Rounding::HalfUp => (prod + c / 2) / c,
        Rounding::Up => (prod + c - 1) / c,
    };
    u128::try_from(q).expect("fixed-point result exceeds 128 bits")
}

fn parse_scaled(s: &str, decimals: u32) -> Result<u128, ParseFixedError> {
    let t = s.trim();
    if t.is_empty() {
        return Err(ParseFixedError::Empty);
    }
    if t.starts_with('-') {
        return Err(ParseFixedError::Negative(t.to_string()));
    }
    let t = t.strip_prefix('+').unwrap_or(t);
    let (int_part, frac_part) = match t.split_once('.') {
        Some((i, f)) => (i, f),
        None => (t, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(ParseFixedError::Empty);
    }
    let digits_ok = |p: &str| p.chars().all(|c| c.is_ascii_digit() || c == '_');
    if !digits_ok(int_part) || !digits_ok(frac_part) {
        return Err(ParseFixedError::InvalidDigit(t.to_string()));
    }
    let frac: String = frac_part.chars().filter(|c| *c != '_').collect();
    let frac = frac.trim_end_matches('0');
    if frac.len() as u32 > decimals {
        return Err(ParseFixedError::TooPrecise {
            input: t.to_string(),
            max: decimals,
        });
    }
    let overflow = || ParseFixedError::Overflow(t.to_string());
    let scale = 10u128.pow(decimals);
    let mut int_val: u128 = 0;
    for c in int_part.chars().filter(|c| *c != '_') {
        int_val = int_val
            .checked_mul(10)
            .and_then(|v| v.checked_add(c.to_digit(10).unwrap() as u128))
            .ok_or_else(overflow)?;
    }
    let mut frac_val: u128 = 0;
    for c in frac.chars() {
        frac_val = frac_val * 10 + c.to_digit(10).unwrap() as u128;
    }
    frac_val *= 10u128.pow(decimals - frac.len() as u32);
    int_val
        .checked_mul(scale)
        .and_then(|v| v.checked_add(frac_val))
        .ok_or_else(overflow)
}

fn format_scaled(
    f: &mut fmt::Formatter<'_>,
    raw: u128,
    decimals: u32,
    negative: bool,
) -> fmt::Result {
    let scale = 10u128.pow(decimals);
    let int_part = raw / scale;
    let frac = raw % scale;
    let sign = if negative { "-" } else { "" };
    if frac == 0 {
        return write!(f, "{sign}{int_part}");
    }
    let frac_str = format!("{:0width$}", frac, width = decimals as usize);
    write!(f, "{sign}{int_part}.{}", frac_str.trim_end_matches('0'))
}

/// Accepts decimal strings only, so CSV fields are never routed through `f64`.
struct DecimalVisitor<T>(std::marker::PhantomData<T>);

impl<T> de::Visitor<'_> for DecimalVisitor<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    type Value = T;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a decimal string")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<T, E> {
        v.parse().map_err(E::custom)
    }
}

macro_rules! fixed_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                d.deserialize_str(DecimalVisitor::<$ty>(std::marker::PhantomData))
            }
        }
    };
}

/// Unsigned 27-decimal fixed-point number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ray(u128);

impl Ray {
    pub const ZERO: Ray = Ray(0);
    pub const ONE: Ray = Ray(RAY);
    pub const MAX: Ray = Ray(u128::MAX);

    pub const fn from_raw(raw: u128) -> Self {
        Ray(raw)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    pub const fn from_int(n: u64) -> Self {
        Ray(n as u128 * RAY)
    }

    /// `num / den` truncated, e.g. `Ray::ratio(7, 10)` is 0.7.
    pub fn ratio(num: u128, den: u128) -> Self {
        Ray(mul_div(num, RAY, den, Rounding::Down))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn mul(self, rhs: Ray) -> Ray {
        Ray(mul_div(self.0, rhs.0, RAY, Rounding::HalfUp))
    }

    pub fn div(self, rhs: Ray) -> Ray {
        Ray(mul_div(self.0, RAY, rhs.0, Rounding::Down))
    }

    pub fn mul_int(self, n: u128) -> Ray {
        Ray(self.0.checked_mul(n).expect("ray overflow"))
    }

    pub fn div_int(self, n: u128) -> Ray {
        Ray(self.0 / n)
    }

    pub fn add(self, rhs: Ray) -> Ray {
        Ray(self.0.checked_add(rhs.0).expect("ray overflow"))
    }

    pub fn saturating_sub(self, rhs: Ray) -> Ray {
        Ray(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: Ray) -> Option<Ray> {
        self.0.checked_sub(rhs.0).map(Ray)
    }

    pub fn min(self, rhs: Ray) -> Ray {
        Ray(self.0.min(rhs.0))
    }

    pub fn max(self, rhs: Ray) -> Ray {
        Ray(self.0.max(rhs.0))
    }

    /// Exponentiation by squaring, each product rounded half-up.
    pub fn pow(self, mut exp: u64) -> Ray {
        let mut base = self;
        let mut acc = Ray::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(base);
            }
            exp >>= 1;
            if exp > 0 {
                base = base.mul(base);
            }
        }
        acc
    }

    pub fn to_f64(self) -> f64 {
        let int = (self.0 / RAY) as f64;
        let frac = (self.0 % RAY) as f64 / RAY as f64;
        int + frac
    }

    /// Nearest ray to a finite non-negative float; saturates at `Ray::MAX`.
    pub fn from_f64(x: f64) -> Ray {
        if !(x > 0.0) {
            return Ray::ZERO;
        }
        if x >= u128::MAX as f64 / RAY as f64 {
            return Ray::MAX;
        }
        let int = x.trunc();
        let frac = x - int;
        Ray((int as u128) * RAY + (frac * RAY as f64).round() as u128)
    }
}

impl FromStr for Ray {
    type Err = ParseFixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scaled(s, RAY_DECIMALS).map(Ray)
    }
}

impl fmt::Display for Ray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0, RAY_DECIMALS, false)
    }
}

fixed_serde!(Ray);

/// Token quantity in attounits (18 decimals).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Amount(u128);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn from_raw(raw: u128) -> Self {
        Amount(raw)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    pub const fn from_tokens(n: u64) -> Self {
        Amount(n as u128 * WAD)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn add(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_add(rhs.0).expect("amount overflow"))
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    pub fn saturating_sub(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_sub(rhs.0))
    }

    pub fn min(self, rhs: Amount) -> Amount {
        Amount(self.0.min(rhs.0))
    }

    pub fn max(self, rhs: Amount) -> Amount {
        Amount(self.0.max(rhs.0))
    }

    /// Scale by a ray factor.
    pub fn mul_ray(self, r: Ray, rounding: Rounding) -> Amount {
        Amount(mul_div(self.0, r.raw(), RAY, rounding))
    }

    /// Divide by a ray factor (e.g. convert to index-scaled units).
    pub fn div_ray(self, r: Ray, rounding: Rounding) -> Amount {
        Amount(mul_div(self.0, RAY, r.raw(), rounding))
    }

    /// Ratio of two amounts as a ray, truncated.
    pub fn ratio(self, den: Amount) -> Ray {
        Ray::ratio(self.0, den.0)
    }

    /// Value at a price, rounded half-up.
    pub fn value_at(self, price: Price) -> Value {
        Value(mul_div(self.0, price.raw(), WAD, Rounding::HalfUp))
    }

    pub fn to_f64(self) -> f64 {
        (self.0 / WAD) as f64 + (self.0 % WAD) as f64 / WAD as f64
    }
}

impl std::iter::Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, Amount::add)
    }
}

impl FromStr for Amount {
    type Err = ParseFixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scaled(s, WAD_DECIMALS).map(Amount)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0, WAD_DECIMALS, false)
    }
}

fixed_serde!(Amount);

/// Value units (USD) per whole token, 18 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(u128);

impl Price {
    pub const fn from_raw(raw: u128) -> Self {
        Price(raw)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    pub const fn from_int(n: u64) -> Self {
        Price(n as u128 * WAD)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `self / other` as a ray.
    pub fn ratio(self, other: Price) -> Ray {
        Ray::ratio(self.0, other.0)
    }

    pub fn mul_ray(self, r: Ray) -> Price {
        Price(mul_div(self.0, r.raw(), RAY, Rounding::HalfUp))
    }

    pub fn to_f64(self) -> f64 {
        (self.0 / WAD) as f64 + (self.0 % WAD) as f64 / WAD as f64
    }
}

impl FromStr for Price {
    type Err = ParseFixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scaled(s, WAD_DECIMALS).map(Price)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0, WAD_DECIMALS, false)
    }
}

fixed_serde!(Price);

/// Non-negative value in value units (USD), 18 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Value(u128);

impl Value {
    pub const ZERO: Value = Value(0);

    pub const fn from_raw(raw: u128) -> Self {
        Value(raw)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn add(self, rhs: Value) -> Value {
        Value(self.0.checked_add(rhs.0).expect("value overflow"))
    }

    pub fn saturating_sub(self, rhs: Value) -> Value {
        Value(self.0.saturating_sub(rhs.0))
    }

    pub fn mul_ray(self, r: Ray) -> Value {
        Value(mul_div(self.0, r.raw(), RAY, Rounding::HalfUp))
    }

    /// Tokens worth this value at `price`, truncated.
    pub fn to_amount(self, price: Price) -> Amount {
        Amount::from_raw(mul_div(self.0, WAD, price.raw(), Rounding::Down))
    }

    pub fn ratio(self, den: Value) -> Ray {
        Ray::ratio(self.0, den.0)
    }

    pub fn signed(self) -> SignedValue {
        SignedValue(i128::try_from(self.0).expect("value exceeds signed range"))
    }

    pub fn to_f64(self) -> f64 {
        (self.0 / WAD) as f64 + (self.0 % WAD) as f64 / WAD as f64
    }
}

impl std::iter::Sum for Value {
    fn sum<I: Iterator<Item = Value>>(iter: I) -> Value {
        iter.fold(Value::ZERO, Value::add)
    }
}

impl FromStr for Value {
    type Err = ParseFixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scaled(s, WAD_DECIMALS).map(Value)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0, WAD_DECIMALS, false)
    }
}

fixed_serde!(Value);

/// Signed value (PnL), 18 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SignedValue(i128);

impl SignedValue {
    pub const ZERO: SignedValue = SignedValue(0);

    pub const fn from_raw(raw: i128) -> Self {
        SignedValue(raw)
    }

    pub const fn raw(self) -> i128 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn add(self, rhs: SignedValue) -> SignedValue {
        SignedValue(self.0.checked_add(rhs.0).expect("signed value overflow"))
    }

    pub fn sub(self, rhs: SignedValue) -> SignedValue {
        SignedValue(self.0.checked_sub(rhs.0).expect("signed value overflow"))
    }

    pub fn to_f64(self) -> f64 {
        let mag = self.0.unsigned_abs();
        let v = (mag / WAD) as f64 + (mag % WAD) as f64 / WAD as f64;
        if self.0 < 0 {
            -v
        } else {
            v
        }
    }
}

impl FromStr for SignedValue {
    type Err = ParseFixedError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let mag = parse_scaled(body, WAD_DECIMALS)?;
        let mag = i128::try_from(mag).map_err(|_| ParseFixedError::Overflow(t.to_string()))?;
        Ok(SignedValue(if neg { -mag } else { mag }))
    }
}

impl fmt::Display for SignedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0.unsigned_abs(), WAD_DECIMALS, self.0 < 0)
    }
}

fixed_serde!(SignedValue);

/// Signed ray, used for net carry rates that may go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SignedRay(i128);

impl SignedRay {
    pub const ZERO: SignedRay = SignedRay(0);

    pub const fn from_raw(raw: i128) -> Self {
        SignedRay(raw)
    }

    pub const fn raw(self) -> i128 {
        self.0
    }

    pub fn from_diff(plus: Ray, minus: Ray) -> SignedRay {
        let p = i128::try_from(plus.raw()).expect("ray exceeds signed range");
        let m = i128::try_from(minus.raw()).expect("ray exceeds signed range");
        SignedRay(p - m)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn to_f64(self) -> f64 {
        let v = Ray::from_raw(self.0.unsigned_abs()).to_f64();
        if self.0 < 0 {
            -v
        } else {
            v
        }
    }
}

impl fmt::Display for SignedRay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format_scaled(f, self.0.unsigned_abs(), RAY_DECIMALS, self.0 < 0)
    }
}

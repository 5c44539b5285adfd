//! Tick arithmetic on the `1.0001^t` price grid.
//!
//! Prices are obtained by exponentiation by squaring from the constant
//! `10001 / 10000` on a 128-bit mantissa, so the mapping never touches the
//! platform `pow`/`exp` and loses no precision to the inexact binary `1.0001`.
//! Tick rounding (`tick_lower` / `tick_upper`) uses a logarithm only for the
//! initial guess and then settles the answer by comparing against
//! [`tick_to_price`], which makes the result independent of libm accuracy.

use super::CurveError;
use crate::Scalar;

pub const MIN_TICK: i64 = -887_272;
pub const MAX_TICK: i64 = 887_272;

/// Price multiplier between adjacent ticks.
pub const TICK_BASE: f64 = 1.0001;

fn check_tick(tick: i64) -> Result<(), CurveError> {
    if !(MIN_TICK..=MAX_TICK).contains(&tick) {
        return Err(CurveError::TickOutOfRange { tick });
    }
    Ok(())
}

fn check_spacing(spacing: u32) -> Result<i64, CurveError> {
    if spacing == 0 {
        return Err(CurveError::InvalidTickSpacing);
    }
    Ok(spacing as i64)
}

/// `1.0001^tick`, correctly rounded to within an ulp of `f64`.
pub fn tick_to_price<S: Scalar>(tick: i64) -> Result<S, CurveError> {
    check_tick(tick)?;
    let (m, e) = pow_extended(tick);
    Ok(S::lit(to_f64(m, e)))
}

/// `1.0001^tick` as `m · 2^(e − 127)` with `m` normalised (bit 127 set).
///
/// Repeated squaring of `10001/10000` (or its reciprocal for negative
/// ticks) on a 128-bit mantissa, truncating each product.
fn pow_extended(tick: i64) -> (u128, i64) {
    let base = if tick >= 0 {
        // 1.0001 · 2^127
        ((1u128 << 127) + (1u128 << 127) / 10000, 0i64)
    } else {
        // 10000/10001 · 2^128, i.e. 2^128 − ceil(2^128 / 10001)
        (u128::MAX - u128::MAX / 10001, -1i64)
    };
    let mut exp = tick.unsigned_abs();
    let mut acc = (1u128 << 127, 0i64);
    let mut sq = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_normalised(acc, sq);
        }
        exp >>= 1;
        if exp > 0 {
            sq = mul_normalised(sq, sq);
        }
    }
    acc
}

fn mul_normalised((a, ea): (u128, i64), (b, eb): (u128, i64)) -> (u128, i64) {
    let (hi, lo) = mul_wide(a, b);
    if hi >> 127 == 1 {
        (hi, ea + eb + 1)
    } else {
        ((hi << 1) | (lo >> 127), ea + eb)
    }
}

/// Rounds `m · 2^(e − 127)` to the nearest `f64` (ties away from zero).
fn to_f64(m: u128, e: i64) -> f64 {
    let mut mant = (m >> 75) as u64;
    if (m >> 74) & 1 == 1 {
        mant += 1;
    }
    let mut e = e;
    if mant == 1 << 53 {
        mant >>= 1;
        e += 1;
    }
    // mant · 2^(e − 52); e stays far inside the normal exponent range.
    let scale = f64::from_bits(((e - 52 + 1023) as u64) << 52);
    mant as f64 * scale
}

/// Largest tick `k` with `tick_to_price(k) <= price`.
fn floor_tick<S: Scalar>(price: S) -> Result<i64, CurveError> {
    if !(price > S::zero()) || !price.is_finite() {
        return Err(CurveError::InvalidPrice {
            price: price.as_f64(),
        });
    }
    let lo_price: S = tick_to_price(MIN_TICK)?;
    let hi_price: S = tick_to_price(MAX_TICK)?;
    if price < lo_price || price > hi_price {
        return Err(CurveError::PriceOutsideTickRange {
            price: price.as_f64(),
        });
    }
    let guess = (price.as_f64().ln() / TICK_BASE.ln()).floor() as i64;
    let mut k = guess.clamp(MIN_TICK, MAX_TICK);
    while k > MIN_TICK && tick_to_price::<S>(k)? > price {
        k -= 1;
    }
    while k < MAX_TICK && tick_to_price::<S>(k + 1)? <= price {
        k += 1;
    }
    Ok(k)
}

/// Maximum tick aligned to `spacing` whose price is at or below `price`.
pub fn tick_lower<S: Scalar>(price: S, spacing: u32) -> Result<i64, CurveError> {
    let ts = check_spacing(spacing)?;
    let k = floor_tick(price)?;
    Ok(k.div_euclid(ts) * ts)
}

/// Minimum tick aligned to `spacing` whose price is at or above `price`.
/// An exact multiple of the spacing maps to itself.
pub fn tick_upper<S: Scalar>(price: S, spacing: u32) -> Result<i64, CurveError> {
    let ts = check_spacing(spacing)?;
    let k = floor_tick(price)?;
    let exact = tick_to_price::<S>(k)? == price;
    Ok(if exact {
        -((-k).div_euclid(ts)) * ts
    } else {
        (k.div_euclid(ts) + 1) * ts
    })
}

/// Lowest and highest ticks aligned to `spacing` inside the tick bounds.
pub fn usable_tick_bounds(spacing: u32) -> Result<(i64, i64), CurveError> {
    let ts = check_spacing(spacing)?;
    Ok((-(MAX_TICK.div_euclid(ts)) * ts, MAX_TICK.div_euclid(ts) * ts))
}

/// Reference evaluation of `1.0001^tick` in 128-bit fixed point.
///
/// Computes `(10000/10001)^|tick|` in Q1.127 by repeated squaring and
/// converts once at the end. Precision degrades for very large `|tick|`
/// because the fraction approaches the 2^-127 resolution.
pub fn tick_to_price_fixed(tick: i64) -> Result<f64, CurveError> {
    check_tick(tick)?;
    const ONE: u128 = 1 << 127;
    // floor(2^127 * 10000 / 10001) without overflowing: 2^127 = q*10001 + r.
    let base = {
        let q = ONE / 10001;
        let r = ONE % 10001;
        q * 10000 + (r * 10000) / 10001
    };
    let mut exp = tick.unsigned_abs();
    let mut acc = ONE;
    let mut sq = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_q127(acc, sq);
        }
        sq = mul_q127(sq, sq);
        exp >>= 1;
    }
    let frac = acc as f64 / ONE as f64;
    Ok(if tick < 0 { frac } else { 1.0 / frac })
}

/// Full 256-bit product as `(high, low)` halves.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & MASK);
    let (b1, b0) = (b >> 64, b & MASK);
    let lo = a0 * b0;
    let mid1 = a1 * b0;
    let mid2 = a0 * b1;
    let mut hi = a1 * b1;
    let (lo, c1) = lo.overflowing_add(mid1 << 64);
    hi += (mid1 >> 64) + c1 as u128;
    let (lo, c2) = lo.overflowing_add(mid2 << 64);
    hi += (mid2 >> 64) + c2 as u128;
    (hi, lo)
}

/// `(a * b) >> 127`.
fn mul_q127(a: u128, b: u128) -> u128 {
    let (hi, lo) = mul_wide(a, b);
    (hi << 1) | (lo >> 127)
}

/// [`tick_to_price`] cross-checked against the fixed-point reference.
pub fn tick_to_price_validated(tick: i64, rel_tol: f64) -> Result<f64, CurveError> {
    let fast: f64 = tick_to_price(tick)?;
    let reference = tick_to_price_fixed(tick)?;
    let rel = ((fast - reference) / reference).abs();
    if rel > rel_tol {
        return Err(CurveError::TickPrecision {
            tick,
            relative_error: rel,
        });
    }
    Ok(fast)
}

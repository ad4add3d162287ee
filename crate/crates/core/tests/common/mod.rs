//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specqd_core::mxfp4::{E8m0Scale, MxfpBlock, BLOCK_SIZE};
use specqd_core::{Layout, MxfpTensor, QuantizedActivationPanel};

/// E2M1 magnitudes as listed for the format.
pub const GRID: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Signed value of a 4-bit code from the magnitude table.
pub fn code_value(bits: u8) -> f64 {
    let m = GRID[(bits & 7) as usize];
    if bits & 8 != 0 {
        -m
    } else {
        m
    }
}

/// Nearest grid magnitude by exhaustive search; ties pick the even grid
/// index (mantissa bit 0).
pub fn nearest_index(a: f64) -> usize {
    let mut best = 0;
    for i in 1..GRID.len() {
        let (d_best, d_i) = ((a - GRID[best]).abs(), (a - GRID[i]).abs());
        if d_i < d_best || (d_i == d_best && i % 2 == 0) {
            best = i;
        }
    }
    best
}

/// `2^(floor(log2 max) - 2)` found by repeated doubling/halving, exponent
/// clamped to E8M0's range; 1 for an all-zero block.
pub fn scale_oracle(max: f32) -> f64 {
    if max == 0.0 {
        return 1.0;
    }
    let max = max as f64;
    let (mut p, mut e) = (1.0f64, 0i32);
    while p > max {
        p /= 2.0;
        e -= 1;
    }
    while p * 2.0 <= max {
        p *= 2.0;
        e += 1;
    }
    2f64.powi((e - 2).clamp(-127, 127))
}

/// Block values spanning a random binade.
pub fn random_block_values(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mag = 2f32.powi(rng.random_range(-20..20));
    (0..BLOCK_SIZE).map(|_| rng.random_range(-mag..mag)).collect()
}

/// Tensor with uniformly random codes and block scale exponents drawn from
/// `exps`.
pub fn random_mxfp(rng: &mut ChaCha8Rng, rows: usize, cols: usize, exps: std::ops::RangeInclusive<i32>) -> MxfpTensor {
    let blocks = (0..rows * cols / BLOCK_SIZE)
        .map(|_| {
            let mut b = MxfpBlock {
                codes: [0; BLOCK_SIZE / 2],
                scale: E8m0Scale::from_exponent(rng.random_range(exps.clone())).unwrap(),
            };
            for byte in b.codes.iter_mut() {
                *byte = rng.random();
            }
            b
        })
        .collect();
    MxfpTensor::from_blocks(rows, cols, Layout::Plain, blocks).unwrap()
}

/// Random int8 panel (values in [-127, 127]) with power-of-two scales drawn
/// from `exps`. Returns the panel and its row-major values and scales.
pub fn random_pow2_panel(
    rng: &mut ChaCha8Rng,
    k: usize,
    n: usize,
    exps: std::ops::RangeInclusive<i32>,
) -> (QuantizedActivationPanel, Vec<i8>, Vec<f32>) {
    let values: Vec<i8> = (0..k * n).map(|_| rng.random_range(-127i8..=127)).collect();
    let scales: Vec<f32> = (0..k / BLOCK_SIZE * n)
        .map(|_| 2f32.powi(rng.random_range(exps.clone())))
        .collect();
    let panel = QuantizedActivationPanel::from_parts(k, n, &values, &scales).unwrap();
    (panel, values, scales)
}

/// Exact `W * A` in rationals: every element product summed without any
/// rounding. `a(row, col, kb)` yields the activation and its block scale.
pub fn exact_product(
    w: &MxfpTensor,
    n: usize,
    a: impl Fn(usize, usize) -> Ratio<i128>,
) -> Vec<Ratio<i128>> {
    let mut out = vec![Ratio::from_integer(0); w.rows() * n];
    for r in 0..w.rows() {
        for c in 0..n {
            let mut acc = Ratio::from_integer(0);
            for i in 0..w.cols() {
                let wv = pow2(w.scale(r, i / BLOCK_SIZE).exponent()) * half_units(w.code(r, i).bits());
                acc += wv * a(i, c);
            }
            out[r * n + c] = acc;
        }
    }
    out
}

/// Code value as an exact rational.
pub fn half_units(bits: u8) -> Ratio<i128> {
    Ratio::new((code_value(bits) * 2.0) as i128, 2)
}

pub fn pow2(e: i32) -> Ratio<i128> {
    if e >= 0 {
        Ratio::from_integer(1i128 << e)
    } else {
        Ratio::new(1, 1i128 << -e)
    }
}

pub fn ratio_to_f64(r: &Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact rational value of a finite `f32`.
pub fn f32_to_ratio(v: f32) -> Ratio<i128> {
    assert!(v.is_finite());
    let bits = v.to_bits();
    let sign = if bits >> 31 == 1 { -1 } else { 1 };
    let exp = ((bits >> 23) & 0xff) as i32;
    let frac = (bits & 0x7f_ffff) as i128;
    let (mant, e) = if exp == 0 { (frac, -149) } else { (frac | 1 << 23, exp - 150) };
    if mant == 0 {
        return Ratio::from_integer(0);
    }
    let tz = mant.trailing_zeros();
    pow2(e + tz as i32) * Ratio::from_integer(sign * (mant >> tz))
}

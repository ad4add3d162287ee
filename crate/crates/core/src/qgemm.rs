//! Weight-quantized GEMM: `out (M x N) = W (M x K) * A (K x N)` with skinny N.
//!
//! Three paths share one reduction order per output element (K ascending,
//! one 32-element block at a time):
//!
//! * [`gemm_reference`]: plain `f32` GEMM, the oracle for everything else.
//! * [`gemm_mxfp4_latescale_f32`]: `f32` partial dot product over a block of
//!   decoded E2M1 weights, multiplied by the block scale once, then added to
//!   the running accumulator.
//! * [`gemm_mxfp4_int8`]: weights mapped through the int8 lookup table and
//!   dotted against int8 activations into an `i32` partial; the partial is
//!   scaled once by `weight_scale * activation_scale / 2`.
//!
//! Kernels split work across panels of output rows only, so results do not
//! depend on the thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mxfp4::{
    fp4_decode, fp4_to_int8_lut, quantize_direct_cast, Fp4Code, Layout, MxfpBlock, MxfpTensor,
    BLOCK_SIZE, PANEL_ROWS,
};
use crate::tensor::Matrix;

/// Largest magnitude of an int8 activation.
pub const ACT_MAX: i32 = 127;
/// Bound on a per-block integer partial: `12 * 127 * 32`.
pub const MAX_BLOCK_PARTIAL: i32 = 12 * ACT_MAX * BLOCK_SIZE as i32;

/// Work (M*N*K) below which kernels stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Which kernel evaluates a linear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GemmPath {
    /// Dequantize to `f32` and run the reference GEMM.
    Reference,
    LatescaleF32,
    Int8,
}

impl GemmPath {
    pub fn name(self) -> &'static str {
        match self {
            GemmPath::Reference => "reference",
            GemmPath::LatescaleF32 => "latescale_f32",
            GemmPath::Int8 => "int8",
        }
    }
}

impl std::str::FromStr for GemmPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(GemmPath::Reference),
            "latescale_f32" => Ok(GemmPath::LatescaleF32),
            "int8" => Ok(GemmPath::Int8),
            other => Err(Error::Config(format!("unknown gemm path `{other}`"))),
        }
    }
}

impl std::fmt::Display for GemmPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl GemmShape {
    pub fn new(m: usize, n: usize, k: usize) -> Result<Self> {
        if m == 0 || n == 0 || k == 0 {
            return Err(Error::Shape(format!("degenerate gemm shape {m}x{n}x{k}")));
        }
        if !k.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::NotBlockAligned { dim: "K", value: k });
        }
        Ok(GemmShape { m, n, k })
    }

    pub fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.n as f64 * self.k as f64
    }
}

/// Int8 activations with one symmetric `f32` scale per (32-row block, column).
///
/// Logically `K x N`; stored column-major so each column's K values are
/// contiguous for the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedActivationPanel {
    k: usize,
    n: usize,
    values: Vec<i8>,
    scales: Vec<f32>,
}

impl QuantizedActivationPanel {
    /// Builds a panel from row-major `K x N` values and `K/32 x N` scales.
    pub fn from_parts(k: usize, n: usize, values: &[i8], scales: &[f32]) -> Result<Self> {
        if !k.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::NotBlockAligned { dim: "K", value: k });
        }
        let kbs = k / BLOCK_SIZE;
        if values.len() != k * n || scales.len() != kbs * n {
            return Err(Error::Shape(format!(
                "panel {k}x{n} needs {} values and {} scales, got {} and {}",
                k * n,
                kbs * n,
                values.len(),
                scales.len()
            )));
        }
        if let Some(i) = values.iter().position(|&v| v == i8::MIN) {
            return Err(Error::Shape(format!(
                "activation value -128 at index {i} outside symmetric range"
            )));
        }
        if let Some(index) = scales.iter().position(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::NonFinite {
                index,
                value: scales[index],
            });
        }
        let mut col_values = vec![0i8; k * n];
        let mut col_scales = vec![0f32; kbs * n];
        for c in 0..n {
            for r in 0..k {
                col_values[c * k + r] = values[r * n + c];
            }
            for b in 0..kbs {
                col_scales[c * kbs + b] = scales[b * n + c];
            }
        }
        Ok(QuantizedActivationPanel {
            k,
            n,
            values: col_values,
            scales: col_scales,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, row: usize, col: usize) -> i8 {
        self.values[col * self.k + row]
    }

    pub fn scale(&self, kb: usize, col: usize) -> f32 {
        self.scales[col * (self.k / BLOCK_SIZE) + kb]
    }


    /// `value * scale` for every entry, as a `K x N` matrix.
    pub fn dequantize(&self) -> Matrix {
        Matrix::from_fn(self.k, self.n, |r, c| {
            self.value(r, c) as f32 * self.scale(r / BLOCK_SIZE, c)
        })
    }
}

fn check_conform(m: usize, k: usize, a_rows: usize) -> Result<()> {
    if k != a_rows {
        return Err(Error::Shape(format!(
            "weights are {m}x{k} but activations have {a_rows} rows"
        )));
    }
    Ok(())
}

/// Triple-loop `f32` GEMM.
pub fn gemm_reference(w: &Matrix, a: &Matrix) -> Result<Matrix> {
    check_conform(w.rows(), w.cols(), a.rows())?;
    let cols = a.transpose();
    let out = reference_cols(w, cols.as_slice(), a.cols());
    Matrix::from_vec(w.rows(), a.cols(), out)
}

/// Reference GEMM against activations given as `n` contiguous columns of
/// length K. Returns row-major `M x n`.
pub(crate) fn reference_cols(w: &Matrix, cols: &[f32], n: usize) -> Vec<f32> {
    let k = w.cols();
    debug_assert_eq!(cols.len(), k * n);
    let mut out = vec![0f32; w.rows() * n];
    let kernel = |(row, out_row): (usize, &mut [f32])| {
        let wr = w.row(row);
        for (c, o) in out_row.iter_mut().enumerate() {
            let col = &cols[c * k..(c + 1) * k];
            let mut acc = 0f32;
            for i in 0..k {
                acc += wr[i] * col[i];
            }
            *o = acc;
        }
    };
    if n == 0 {
        return out;
    }
    if w.rows() * n * k >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(kernel);
    } else {
        out.chunks_mut(n).enumerate().for_each(kernel);
    }
    out
}

/// Symmetric per-(block, column) int8 quantization: `scale = max|a| / 127`
/// (1.0 for an all-zero block), `value = round_ties_even(a / scale)`.
pub fn quantize_activations(a: &Matrix) -> Result<QuantizedActivationPanel> {
    if !a.rows().is_multiple_of(BLOCK_SIZE) {
        return Err(Error::NotBlockAligned {
            dim: "K",
            value: a.rows(),
        });
    }
    a.check_finite()?;
    let cols = a.transpose();
    Ok(quantize_cols(cols.as_slice(), a.rows(), a.cols()))
}

/// Ties-to-even rounding for `|x| <= 2^22`. Adding and removing 1.5 * 2^23
/// pushes the fraction bits out under the default rounding mode; unlike
/// `f32::round_ties_even` this never falls back to a library call.
#[inline]
fn round_even_small(x: f32) -> f32 {
    const MAGIC: f32 = 12_582_912.0;
    (x + MAGIC) - MAGIC
}

/// Same as [`quantize_activations`] for `n` contiguous columns of length `k`.
pub(crate) fn quantize_cols(cols: &[f32], k: usize, n: usize) -> QuantizedActivationPanel {
    let kbs = k / BLOCK_SIZE;
    let mut values = vec![0i8; k * n];
    let mut scales = vec![1f32; kbs * n];
    for c in 0..n {
        for b in 0..kbs {
            let src = &cols[c * k + b * BLOCK_SIZE..c * k + (b + 1) * BLOCK_SIZE];
            let dst = &mut values[c * k + b * BLOCK_SIZE..c * k + (b + 1) * BLOCK_SIZE];
            let max = src.iter().fold(0f32, |m, v| m.max(v.abs()));
            if max == 0.0 {
                continue;
            }
            let scale = max / ACT_MAX as f32;
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = round_even_small(v / scale).clamp(-ACT_MAX as f32, ACT_MAX as f32) as i8;
            }
            scales[c * kbs + b] = scale;
        }
    }
    QuantizedActivationPanel {
        k,
        n,
        values,
        scales,
    }
}

/// Integer dot product of one block's LUT-mapped weight codes with 32 int8
/// activations, accumulated in groups of four like a VNNI lane.
#[inline]
pub fn block_dot_i8(block: &MxfpBlock, lut: &[i8; 16], acts: &[i8]) -> i32 {
    debug_assert_eq!(acts.len(), BLOCK_SIZE);
    let mut lanes = [0i32; BLOCK_SIZE / 4];
    for (g, lane) in lanes.iter_mut().enumerate() {
        let b0 = block.codes[2 * g];
        let b1 = block.codes[2 * g + 1];
        let w = [
            lut[(b0 & 0x0f) as usize],
            lut[(b0 >> 4) as usize],
            lut[(b1 & 0x0f) as usize],
            lut[(b1 >> 4) as usize],
        ];
        let a = &acts[4 * g..4 * g + 4];
        *lane = w[0] as i32 * a[0] as i32
            + w[1] as i32 * a[1] as i32
            + w[2] as i32 * a[2] as i32
            + w[3] as i32 * a[3] as i32;
    }
    lanes.iter().sum()
}

/// E2M1 code to `f32` value.
fn decode_table() -> [f32; 16] {
    let mut t = [0f32; 16];
    for (i, v) in t.iter_mut().enumerate() {
        *v = fp4_decode(Fp4Code::new(i as u8).expect("4-bit index"));
    }
    t
}

/// Decoded (unscaled) values of a block's 32 codes.
#[inline]
fn expand_f32(block: &MxfpBlock, table: &[f32; 16]) -> [f32; BLOCK_SIZE] {
    let mut w = [0f32; BLOCK_SIZE];
    for (j, &b) in block.codes.iter().enumerate() {
        w[2 * j] = table[(b & 0x0f) as usize];
        w[2 * j + 1] = table[(b >> 4) as usize];
    }
    w
}

/// LUT-mapped int8 weights of a block's 32 codes, one packed byte at a time,
/// widened to `i16` so the dot product maps onto 16-bit multiply-add lanes.
#[inline]
fn expand_i8(block: &MxfpBlock, pairs: &[[i16; 2]; 256]) -> [i16; BLOCK_SIZE] {
    let mut w = [0i16; BLOCK_SIZE];
    for (dst, &b) in w.chunks_exact_mut(2).zip(&block.codes) {
        dst.copy_from_slice(&pairs[b as usize]);
    }
    w
}

/// Both nibbles of every code byte through the int8 LUT.
fn pair_table(lut: &[i8; 16]) -> [[i16; 2]; 256] {
    let mut t = [[0i16; 2]; 256];
    for (b, p) in t.iter_mut().enumerate() {
        *p = [lut[b & 0x0f] as i16, lut[b >> 4] as i16];
    }
    t
}

/// Every product is at most 12 * 128 in magnitude and 32 of them cannot
/// overflow `i32`, so wrapping arithmetic is exact here; it also keeps the
/// loop vectorizable when overflow checks are compiled in.
#[inline]
fn dot_i8(w: &[i16; BLOCK_SIZE], a: &[i16]) -> i32 {
    let a: &[i16; BLOCK_SIZE] = a.try_into().expect("block-sized activations");
    let mut acc = 0i32;
    for i in 0..BLOCK_SIZE {
        acc = acc.wrapping_add((w[i] as i32).wrapping_mul(a[i] as i32));
    }
    acc
}

/// Drives a per-block kernel over panels of output rows.
///
/// `accumulate(block, kb, out)` adds block `kb`'s scaled contribution to the
/// `n` outputs of the block's row; blocks arrive in ascending `kb` for every
/// row, so each output sees one fixed reduction order.
fn run_panels<F>(w: &MxfpTensor, n: usize, accumulate: F) -> Vec<f32>
where
    F: Fn(&MxfpBlock, usize, &mut [f32]) + Sync,
{
    let m = w.rows();
    let kbs = w.k_blocks();
    let mut out = vec![0f32; m * n];
    if n == 0 {
        return out;
    }
    let kernel = |(panel, chunk): (usize, &mut [f32])| {
        let start = panel * PANEL_ROWS;
        let height = chunk.len() / n;
        for kb in 0..kbs {
            for r in 0..height {
                accumulate(w.block(start + r, kb), kb, &mut chunk[r * n..(r + 1) * n]);
            }
        }
    };
    if m * n * w.cols() >= PAR_THRESHOLD {
        out.par_chunks_mut(PANEL_ROWS * n).enumerate().for_each(kernel);
    } else {
        out.chunks_mut(PANEL_ROWS * n).enumerate().for_each(kernel);
    }
    out
}

/// Late-scaling MXFP4 x `f32` GEMM.
pub fn gemm_mxfp4_latescale_f32(w: &MxfpTensor, a: &Matrix) -> Result<Matrix> {
    check_conform(w.rows(), w.cols(), a.rows())?;
    let cols = a.transpose();
    let out = latescale_cols(w, cols.as_slice(), a.cols());
    Matrix::from_vec(w.rows(), a.cols(), out)
}

pub(crate) fn latescale_cols(w: &MxfpTensor, cols: &[f32], n: usize) -> Vec<f32> {
    let k = w.cols();
    let table = decode_table();
    run_panels(w, n, |block, kb, out| {
        let wv = expand_f32(block, &table);
        let scale = block.scale.value();
        for (c, o) in out.iter_mut().enumerate() {
            let acts = &cols[c * k + kb * BLOCK_SIZE..c * k + (kb + 1) * BLOCK_SIZE];
            let mut partial = 0f32;
            for i in 0..BLOCK_SIZE {
                partial += wv[i] * acts[i];
            }
            *o += partial * scale;
        }
    })
}

/// MXFP4 x int8 GEMM through the FP4 to int8 lookup table.
pub fn gemm_mxfp4_int8(w: &MxfpTensor, a: &QuantizedActivationPanel) -> Result<Matrix> {
    check_conform(w.rows(), w.cols(), a.k())?;
    let out = int8_panel(w, a);
    Matrix::from_vec(w.rows(), a.n(), out)
}

pub(crate) fn int8_panel(w: &MxfpTensor, a: &QuantizedActivationPanel) -> Vec<f32> {
    let pairs = pair_table(&fp4_to_int8_lut());
    let (k, kbs) = (a.k(), a.k() / BLOCK_SIZE);
    let wide: Vec<i16> = a.values.iter().map(|&v| v as i16).collect();
    run_panels(w, a.n(), |block, kb, out| {
        let wv = expand_i8(block, &pairs);
        let ws = block.scale.value();
        for (c, o) in out.iter_mut().enumerate() {
            let acts = &wide[c * k + kb * BLOCK_SIZE..c * k + (kb + 1) * BLOCK_SIZE];
            let partial = dot_i8(&wv, acts);
            // the LUT doubles every weight; 0.5 undoes it exactly
            *o += partial as f32 * (ws * a.scales[c * kbs + kb] * 0.5);
        }
    })
}

/// Exact value of one block's integer partial through plain decoding; used
/// to cross-check [`block_dot_i8`].
pub fn block_dot_i8_via_decode(block: &MxfpBlock, acts: &[i8]) -> i32 {
    (0..BLOCK_SIZE)
        .map(|i| (2.0 * fp4_decode(block.code(i))) as i32 * acts[i] as i32)
        .sum()
}

/// Compulsory bytes moved by one GEMM: weights in their storage format,
/// `f32` activations in and `f32` results out, each touched once.
pub fn gemm_bytes(shape: GemmShape, path: GemmPath) -> u64 {
    let weights = match path {
        GemmPath::Reference => shape.m as u64 * shape.k as u64 * 4,
        GemmPath::LatescaleF32 | GemmPath::Int8 => {
            (shape.m * shape.k / BLOCK_SIZE) as u64 * (BLOCK_SIZE as u64 / 2 + 1)
        }
    };
    weights + shape.k as u64 * shape.n as u64 * 4 + shape.m as u64 * shape.n as u64 * 4
}

/// One benchmark measurement; also the row format of the bench CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub path: GemmPath,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub bytes: u64,
    pub seconds: f64,
    pub gbps: f64,
}

pub const BENCH_WARMUPS: usize = 2;
pub const BENCH_MIN_REPS: usize = 9;

/// Times `path` on seeded random data: median of at least 9 repetitions after
/// 2 warm-ups. `seconds` is the median per-iteration time and `gbps` divides
/// the compulsory bytes by it.
pub fn gemm_bench(shape: GemmShape, path: GemmPath, repetitions: usize) -> Result<BenchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_9e77);
    let w = Matrix::from_fn(shape.m, shape.k, |_, _| rng.random_range(-1.0f32..1.0));
    let a = Matrix::from_fn(shape.k, shape.n, |_, _| rng.random_range(-1.0f32..1.0));
    let cols = a.transpose();
    let wq = quantize_direct_cast(&w)?.to_layout(Layout::KBlocked);
    let dense = match path {
        GemmPath::Reference => Some(w),
        _ => None,
    };
    drop(a);

    let run = || -> Vec<f32> {
        match path {
            GemmPath::Reference => reference_cols(dense.as_ref().unwrap(), cols.as_slice(), shape.n),
            GemmPath::LatescaleF32 => latescale_cols(&wq, cols.as_slice(), shape.n),
            GemmPath::Int8 => {
                let panel = quantize_cols(cols.as_slice(), shape.k, shape.n);
                int8_panel(&wq, &panel)
            }
        }
    };
    for _ in 0..BENCH_WARMUPS {
        std::hint::black_box(run());
    }
    let reps = repetitions.max(BENCH_MIN_REPS);
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(run());
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let seconds = times[reps / 2];
    let bytes = gemm_bytes(shape, path);
    Ok(BenchRecord {
        path,
        m: shape.m,
        n: shape.n,
        k: shape.k,
        bytes,
        seconds,
        gbps: bytes as f64 / seconds / 1e9,
    })
}

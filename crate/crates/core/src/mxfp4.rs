//! MXFP4 block floating point: E2M1 elements sharing one E8M0 power-of-two
//! scale per 32 consecutive elements along the reduction dimension.
//!
//! Quantization is a direct cast with no calibration. For every block `V`
//! the shared scale is the largest power of two `<= max|V|` divided by 4 (the
//! largest power of two E2M1 can represent); each element is then rounded to
//! the nearest E2M1 value of `v / scale`, with magnitudes above 6 clamped to 6.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Elements sharing one scale.
pub const BLOCK_SIZE: usize = 32;
/// Largest finite E2M1 magnitude.
pub const FP4_MAX: f32 = 6.0;
/// Effective storage cost of one MXFP4 element: 4 code bits plus 8/32 scale bits.
pub const BITS_PER_ELEMENT: f64 = 4.25;
/// Rows interleaved per panel in [`Layout::KBlocked`].
pub const PANEL_ROWS: usize = 8;

const E8M0_BIAS: i32 = 127;
const E8M0_MAX_BIASED: i32 = 254;

/// E2M1 magnitudes indexed by the low three code bits.
const E2M1_MAGNITUDES: [f32; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];
/// Midpoints between consecutive magnitudes; all exactly representable.
const E2M1_MIDPOINTS: [f32; 7] = [0.25, 0.75, 1.25, 1.75, 2.5, 3.5, 5.0];

/// A 4-bit E2M1 code: 1 sign bit, 2 exponent bits, 1 mantissa bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fp4Code(u8);

impl Fp4Code {
    pub const ZERO: Fp4Code = Fp4Code(0);

    pub fn new(bits: u8) -> Option<Self> {
        (bits < 16).then_some(Fp4Code(bits))
    }

    pub fn all() -> impl Iterator<Item = Fp4Code> {
        (0u8..16).map(Fp4Code)
    }

    #[inline]
    pub const fn bits(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn is_negative(self) -> bool {
        self.0 & 0b1000 != 0
    }

    #[inline]
    pub const fn exponent(self) -> u8 {
        (self.0 >> 1) & 0b11
    }

    #[inline]
    pub const fn mantissa(self) -> u8 {
        self.0 & 1
    }

    #[inline]
    pub fn decode(self) -> f32 {
        fp4_decode(self)
    }
}

/// Decodes an E2M1 code. Exponent field 0 is subnormal (`0.5 * m`); otherwise
/// the value is `2^(e-1) * (1 + 0.5 * m)`.
pub fn fp4_decode(code: Fp4Code) -> f32 {
    let m = code.mantissa() as f32;
    let magnitude = match code.exponent() {
        0 => 0.5 * m,
        e => (1u32 << (e - 1)) as f32 * (1.0 + 0.5 * m),
    };
    if code.is_negative() {
        -magnitude
    } else {
        magnitude
    }
}

/// Rounds `v` to the nearest E2M1 value. Ties go to the even mantissa and
/// magnitudes above 6 clamp to 6. The sign bit follows `v`, so `-0.0` and
/// tiny negatives map to the negative-zero code.
pub fn fp4_encode(v: f32) -> Result<Fp4Code> {
    if !v.is_finite() {
        return Err(Error::NonFinite { index: 0, value: v });
    }
    Ok(encode_finite(v))
}

#[inline]
fn encode_finite(v: f32) -> Fp4Code {
    let a = v.abs();
    let mut index = E2M1_MAGNITUDES.len() - 1;
    for (j, &mid) in E2M1_MIDPOINTS.iter().enumerate() {
        if a < mid {
            index = j;
            break;
        }
        if a == mid {
            // candidates j and j + 1; the even index has mantissa bit 0
            index = if j % 2 == 0 { j } else { j + 1 };
            break;
        }
    }
    let sign = if v.is_sign_negative() { 0b1000 } else { 0 };
    Fp4Code(sign | index as u8)
}

/// An E8M0 scale: an unsigned biased exponent encoding `2^(biased - 127)`.
///
/// The all-ones pattern (NaN in the OCP format) is never produced or accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct E8m0Scale(u8);

impl E8m0Scale {
    pub const ONE: E8m0Scale = E8m0Scale(127);

    pub fn from_biased(biased: u8) -> Option<Self> {
        (biased as i32 <= E8M0_MAX_BIASED).then_some(E8m0Scale(biased))
    }

    /// `2^exp`, or `None` outside the representable range.
    pub fn from_exponent(exp: i32) -> Option<Self> {
        let biased = exp + E8M0_BIAS;
        (0..=E8M0_MAX_BIASED)
            .contains(&biased)
            .then_some(E8m0Scale(biased as u8))
    }

    #[inline]
    pub const fn biased_exponent(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn exponent(self) -> i32 {
        self.0 as i32 - E8M0_BIAS
    }

    /// The scale as an `f32`; exact for every representable scale.
    #[inline]
    pub fn value(self) -> f32 {
        if self.0 == 0 {
            // 2^-127 is subnormal in f32
            f32::from_bits(1 << 22)
        } else {
            f32::from_bits((self.0 as u32) << 23)
        }
    }
}

/// Outcome of choosing a block scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleChoice {
    pub scale: E8m0Scale,
    /// The ideal exponent fell outside E8M0 and was clamped to the boundary.
    pub clamped: bool,
}

/// `floor(log2(m))` for a positive finite `m`, read from the bit pattern.
fn floor_log2(m: f32) -> i32 {
    debug_assert!(m > 0.0 && m.is_finite());
    let bits = m.to_bits();
    let exp = ((bits >> 23) & 0xff) as i32;
    if exp != 0 {
        exp - 127
    } else {
        let mantissa = bits & 0x007f_ffff;
        (31 - mantissa.leading_zeros() as i32) - 149
    }
}

/// Shared scale for a block: `2^(floor(log2(max|V|)) - 2)`, or 1.0 for an
/// all-zero block.
pub fn block_scale(values: &[f32]) -> Result<ScaleChoice> {
    let mut max = 0.0f32;
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index, value: v });
        }
        max = max.max(v.abs());
    }
    Ok(scale_for_max(max))
}

fn scale_for_max(max: f32) -> ScaleChoice {
    if max == 0.0 {
        return ScaleChoice {
            scale: E8m0Scale::ONE,
            clamped: false,
        };
    }
    // largest power of two representable in E2M1 is 4 = 2^2
    let ideal = floor_log2(max) - 2 + E8M0_BIAS;
    let biased = ideal.clamp(0, E8M0_MAX_BIASED);
    ScaleChoice {
        scale: E8m0Scale(biased as u8),
        clamped: biased != ideal,
    }
}

/// 32 E2M1 codes packed two per byte (even index in the low nibble) plus
/// their shared scale: 17 bytes per 32 elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MxfpBlock {
    pub codes: [u8; BLOCK_SIZE / 2],
    pub scale: E8m0Scale,
}

impl MxfpBlock {
    pub const ZERO: MxfpBlock = MxfpBlock {
        codes: [0; BLOCK_SIZE / 2],
        scale: E8m0Scale::ONE,
    };

    #[inline]
    pub fn code(&self, i: usize) -> Fp4Code {
        let byte = self.codes[i / 2];
        Fp4Code(if i.is_multiple_of(2) { byte & 0x0f } else { byte >> 4 })
    }

    #[inline]
    pub fn set_code(&mut self, i: usize, code: Fp4Code) {
        let byte = &mut self.codes[i / 2];
        if i.is_multiple_of(2) {
            *byte = (*byte & 0xf0) | code.0;
        } else {
            *byte = (*byte & 0x0f) | (code.0 << 4);
        }
    }

    /// Direct-casts 32 values.
    pub fn quantize(values: &[f32]) -> Result<(MxfpBlock, bool)> {
        if values.len() != BLOCK_SIZE {
            return Err(Error::Shape(format!(
                "block holds {BLOCK_SIZE} values, got {}",
                values.len()
            )));
        }
        let choice = block_scale(values)?;
        let inv = 1.0 / choice.scale.value() as f64;
        let mut block = MxfpBlock {
            codes: [0; BLOCK_SIZE / 2],
            scale: choice.scale,
        };
        for (i, &v) in values.iter().enumerate() {
            // power-of-two scaling is exact in f64 and fits f32 range for
            // every scale we produce
            block.set_code(i, encode_finite((v as f64 * inv) as f32));
        }
        Ok((block, choice.clamped))
    }

    pub fn dequantize_into(&self, out: &mut [f32]) {
        let s = self.scale.value();
        for (i, o) in out.iter_mut().enumerate().take(BLOCK_SIZE) {
            *o = fp4_decode(self.code(i)) * s;
        }
    }
}

/// Block ordering inside an [`MxfpTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// Row-major: all blocks of row 0, then row 1, ...
    Plain,
    /// Rows grouped in panels of [`PANEL_ROWS`]; within a panel blocks are
    /// ordered K-block-major so a GEMM streams one contiguous run per
    /// K step for all rows of the panel.
    KBlocked,
}

impl Layout {
    pub fn tag(self) -> u8 {
        match self {
            Layout::Plain => 0,
            Layout::KBlocked => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Layout::Plain),
            1 => Ok(Layout::KBlocked),
            _ => Err(Error::UnknownTag { what: "layout", tag }),
        }
    }
}

/// A `rows x cols` matrix quantized to MXFP4 with blocks along `cols` (K).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MxfpTensor {
    rows: usize,
    cols: usize,
    layout: Layout,
    blocks: Vec<MxfpBlock>,
}

/// Diagnostics from a direct cast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CastStats {
    pub blocks: usize,
    pub clamped_scales: usize,
}

impl MxfpTensor {
    pub fn from_blocks(
        rows: usize,
        cols: usize,
        layout: Layout,
        blocks: Vec<MxfpBlock>,
    ) -> Result<Self> {
        if !cols.is_multiple_of(BLOCK_SIZE) {
            return Err(Error::NotBlockAligned {
                dim: "cols",
                value: cols,
            });
        }
        if blocks.len() != rows * cols / BLOCK_SIZE {
            return Err(Error::Shape(format!(
                "{} blocks for a {rows}x{cols} tensor (expected {})",
                blocks.len(),
                rows * cols / BLOCK_SIZE
            )));
        }
        Ok(MxfpTensor {
            rows,
            cols,
            layout,
            blocks,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn k_blocks(&self) -> usize {
        self.cols / BLOCK_SIZE
    }

    /// Blocks in storage order.
    pub fn blocks(&self) -> &[MxfpBlock] {
        &self.blocks
    }

    /// Storage index of block `(row, kb)`.
    #[inline]
    pub fn block_index(&self, row: usize, kb: usize) -> usize {
        let kbs = self.k_blocks();
        match self.layout {
            Layout::Plain => row * kbs + kb,
            Layout::KBlocked => {
                let panel_start = row - row % PANEL_ROWS;
                let height = PANEL_ROWS.min(self.rows - panel_start);
                panel_start * kbs + kb * height + row % PANEL_ROWS
            }
        }
    }

    #[inline]
    pub fn block(&self, row: usize, kb: usize) -> &MxfpBlock {
        &self.blocks[self.block_index(row, kb)]
    }

    pub fn to_layout(&self, layout: Layout) -> MxfpTensor {
        if layout == self.layout {
            return self.clone();
        }
        let mut out = MxfpTensor {
            rows: self.rows,
            cols: self.cols,
            layout,
            blocks: vec![MxfpBlock::ZERO; self.blocks.len()],
        };
        for row in 0..self.rows {
            for kb in 0..self.k_blocks() {
                let dst = out.block_index(row, kb);
                out.blocks[dst] = *self.block(row, kb);
            }
        }
        out
    }

    pub fn code(&self, row: usize, col: usize) -> Fp4Code {
        self.block(row, col / BLOCK_SIZE).code(col % BLOCK_SIZE)
    }

    pub fn scale(&self, row: usize, kb: usize) -> E8m0Scale {
        self.block(row, kb).scale
    }

    /// Bytes occupied by codes and scales (17 per block).
    pub fn storage_bytes(&self) -> usize {
        self.blocks.len() * (BLOCK_SIZE / 2 + 1)
    }
}

/// Quantizes every 32-element block along the columns of `m`.
///
/// `m.cols()` must already be a multiple of 32; see [`Matrix::pad_cols`].
pub fn quantize_direct_cast(m: &Matrix) -> Result<MxfpTensor> {
    quantize_direct_cast_with_stats(m).map(|(t, _)| t)
}

pub fn quantize_direct_cast_with_stats(m: &Matrix) -> Result<(MxfpTensor, CastStats)> {
    if !m.cols().is_multiple_of(BLOCK_SIZE) {
        return Err(Error::NotBlockAligned {
            dim: "cols",
            value: m.cols(),
        });
    }
    m.check_finite()?;
    let kbs = m.cols() / BLOCK_SIZE;
    let mut blocks = Vec::with_capacity(m.rows() * kbs);
    let mut stats = CastStats::default();
    for r in 0..m.rows() {
        for chunk in m.row(r).chunks_exact(BLOCK_SIZE) {
            let (block, clamped) = MxfpBlock::quantize(chunk)?;
            stats.blocks += 1;
            stats.clamped_scales += clamped as usize;
            blocks.push(block);
        }
    }
    let tensor = MxfpTensor::from_blocks(m.rows(), m.cols(), Layout::Plain, blocks)?;
    Ok((tensor, stats))
}

/// Expands an MXFP4 tensor back to `f32`. Every element is exact.
pub fn dequantize(t: &MxfpTensor) -> Matrix {
    let mut out = Matrix::zeros(t.rows(), t.cols());
    for r in 0..t.rows() {
        let row = out.row_mut(r);
        for (kb, chunk) in row.chunks_exact_mut(BLOCK_SIZE).enumerate() {
            t.block(r, kb).dequantize_into(chunk);
        }
    }
    out
}

/// E2M1 to int8 lookup table holding `2 * decode(code)`, so every entry is an
/// integer in `{0, ±1, ±2, ±3, ±4, ±6, ±8, ±12}`. Consumers undo the factor
/// with a `2^-1` output scale.
pub fn fp4_to_int8_lut() -> [i8; 16] {
    let mut lut = [0i8; 16];
    for code in Fp4Code::all() {
        lut[code.bits() as usize] = (fp4_decode(code) * 2.0) as i8;
    }
    lut
}

/// Truncates an `f32` to bfloat16 precision (round toward zero), returning
/// the result widened back to `f32`.
pub fn truncate_to_bf16(v: f32) -> f32 {
    f32::from_bits(v.to_bits() & 0xffff_0000)
}

pub fn truncate_matrix_to_bf16(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |r, c| truncate_to_bf16(m.get(r, c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code_for(v: f32) -> Fp4Code {
        fp4_encode(v).unwrap()
    }

    #[test]
    fn decode_examples() {
        assert_eq!(fp4_decode(Fp4Code(0b0000)), 0.0);
        assert!(fp4_decode(Fp4Code(0b0000)).is_sign_positive());
        assert_eq!(fp4_decode(Fp4Code(0b0111)), 6.0);
        assert_eq!(fp4_decode(Fp4Code(0b1001)), -0.5);
        assert_eq!(fp4_decode(Fp4Code(0b1000)), 0.0);
        assert!(fp4_decode(Fp4Code(0b1000)).is_sign_negative());
    }

    #[test]
    fn encode_examples() {
        assert_eq!(fp4_decode(code_for(7.5)), 6.0);
        assert_eq!(fp4_decode(code_for(-100.0)), -6.0);
        assert_eq!(code_for(0.0), Fp4Code(0));
        assert_eq!(fp4_decode(code_for(2.5)), 2.0);
    }

    #[test]
    fn ties_go_to_even_mantissa() {
        let expected = [(0.25, 0.0), (0.75, 1.0), (1.25, 1.0), (1.75, 2.0), (2.5, 2.0), (3.5, 4.0), (5.0, 4.0)];
        for (mid, want) in expected {
            let c = code_for(mid);
            assert_eq!(fp4_decode(c), want, "tie at {mid}");
            assert_eq!(c.mantissa(), 0);
            assert_eq!(fp4_decode(code_for(-mid)), -want);
        }
    }

    #[test]
    fn encode_rejects_non_finite() {
        assert!(fp4_encode(f32::NAN).is_err());
        assert!(fp4_encode(f32::INFINITY).is_err());
        assert!(fp4_encode(f32::NEG_INFINITY).is_err());
    }

    #[test]
    fn scale_examples() {
        let mut v = [0.0f32; 32];
        assert_eq!(block_scale(&v).unwrap().scale.value(), 1.0);
        v[3] = 6.0;
        assert_eq!(block_scale(&v).unwrap().scale.value(), 1.0);
        v[3] = -4.0;
        assert_eq!(block_scale(&v).unwrap().scale.value(), 1.0);
        v[3] = 8.1;
        assert_eq!(block_scale(&v).unwrap().scale.value(), 2.0);
        v[3] = 3.99;
        assert_eq!(block_scale(&v).unwrap().scale.value(), 0.5);
    }

    #[test]
    fn tiny_blocks_clamp_scale_and_flag() {
        let mut v = [0.0f32; 32];
        v[0] = f32::from_bits(1); // smallest subnormal, 2^-149
        let choice = block_scale(&v).unwrap();
        assert!(choice.clamped);
        assert_eq!(choice.scale.biased_exponent(), 0);
        let m = Matrix::from_vec(1, 32, v.to_vec()).unwrap();
        let (_, stats) = quantize_direct_cast_with_stats(&m).unwrap();
        assert_eq!(stats.clamped_scales, 1);
    }

    #[test]
    fn floor_log2_matches_powers() {
        for e in -149..128 {
            let p = 2f64.powi(e) as f32;
            assert_eq!(floor_log2(p), e, "2^{e}");
            if (-126..127).contains(&e) {
                assert_eq!(floor_log2(p * 1.75), e);
            }
        }
    }

    #[test]
    fn scale_values_are_exact_powers() {
        for b in 0..=254u8 {
            let s = E8m0Scale::from_biased(b).unwrap();
            assert_eq!(s.value() as f64, 2f64.powi(b as i32 - 127));
        }
        assert!(E8m0Scale::from_biased(255).is_none());
    }

    #[test]
    fn quantize_examples() {
        let mut v = vec![0.0f32; 32];
        v[0] = 6.0;
        v[1] = 3.0;
        let t = quantize_direct_cast(&Matrix::from_vec(1, 32, v).unwrap()).unwrap();
        assert_eq!(t.scale(0, 0).value(), 1.0);
        assert_eq!(fp4_decode(t.code(0, 0)), 6.0);
        assert_eq!(fp4_decode(t.code(0, 1)), 3.0);
        assert!((2..32).all(|i| t.code(0, i) == Fp4Code::ZERO));

        let mut v = vec![0.0f32; 32];
        v[0] = 8.1;
        let m = Matrix::from_vec(1, 32, v).unwrap();
        let t = quantize_direct_cast(&m).unwrap();
        assert_eq!(t.scale(0, 0).value(), 2.0);
        assert_eq!(fp4_decode(t.code(0, 0)), 4.0);
        assert_eq!(dequantize(&t).get(0, 0), 8.0);
    }

    #[test]
    fn zero_tensor_round_trip() {
        let t = quantize_direct_cast(&Matrix::zeros(3, 64)).unwrap();
        assert!(t.blocks().iter().all(|b| *b == MxfpBlock::ZERO));
        assert_eq!(dequantize(&t), Matrix::zeros(3, 64));
    }

    #[test]
    fn unaligned_and_non_finite_inputs_fail() {
        assert!(matches!(
            quantize_direct_cast(&Matrix::zeros(2, 33)),
            Err(Error::NotBlockAligned { value: 33, .. })
        ));
        let mut m = Matrix::zeros(2, 32);
        m.set(1, 5, f32::NAN);
        assert!(matches!(
            quantize_direct_cast(&m),
            Err(Error::NonFinite { index: 37, .. })
        ));
        let padded = Matrix::zeros(2, 33).pad_cols(BLOCK_SIZE);
        assert_eq!(padded.cols(), 64);
        assert!(quantize_direct_cast(&padded).is_ok());
    }

    #[test]
    fn lut_is_twice_decode() {
        let lut = fp4_to_int8_lut();
        for c in Fp4Code::all() {
            assert_eq!(lut[c.bits() as usize] as f32, 2.0 * fp4_decode(c));
        }
        assert_eq!(lut[0b0111], 12);
        assert_eq!(lut[0b0001], 1);
        assert_eq!(lut[0b1000], 0);
    }

    #[test]
    fn kblocked_layout_preserves_blocks() {
        let m = Matrix::from_fn(13, 96, |r, c| ((r * 31 + c * 7) % 17) as f32 - 8.0);
        let plain = quantize_direct_cast(&m).unwrap();
        let kb = plain.to_layout(Layout::KBlocked);
        assert_eq!(kb.layout(), Layout::KBlocked);
        assert_eq!(dequantize(&kb), dequantize(&plain));
        assert_eq!(kb.to_layout(Layout::Plain), plain);
        // storage order: panel of 8 rows, K-block-major
        assert_eq!(kb.blocks()[1], *plain.block(1, 0));
        assert_eq!(kb.blocks()[8], *plain.block(0, 1));
    }

    #[test]
    fn bf16_truncation_drops_low_mantissa() {
        assert_eq!(truncate_to_bf16(1.0), 1.0);
        let v = f32::from_bits(0x3f80_ffff);
        assert_eq!(truncate_to_bf16(v).to_bits(), 0x3f80_0000);
        assert_eq!(truncate_to_bf16(-2.75), -2.75);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widths accepted by [`quantize`]. 32 stores raw `f32`, 64 raw `f64` (lossless).
pub const SUPPORTED_BITS: [u8; 6] = [2, 4, 8, 16, 32, 64];

/// Affine min-max quantized coefficient vector.
///
/// Codes are packed little-endian; sub-byte codes fill each byte from the
/// least significant bit up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedVector {
    pub bits: u8,
    pub scale: f32,
    pub zero_point: f32,
    pub packed: Vec<u8>,
    pub length: usize,
}

impl QuantizedVector {
    /// Zero-length payload, used for an empty support.
    pub fn empty(bits: u8) -> Self {
        Self {
            bits,
            scale: if bits >= 32 { 1.0 } else { 0.0 },
            zero_point: 0.0,
            packed: Vec::new(),
            length: 0,
        }
    }

    pub fn is_raw(&self) -> bool {
        self.bits >= 32
    }

    /// Bytes needed to hold `length` codes at `bits` each.
    pub fn packed_len(bits: u8, length: usize) -> usize {
        (length * bits as usize).div_ceil(8)
    }

    /// Largest dequantization error the quantizer guarantees per element.
    pub fn error_bound(&self) -> f64 {
        match self.bits {
            64 => 0.0,
            // f32 rounding: half an ulp of the largest stored magnitude, with room to spare
            32 => {
                let largest = self
                    .packed
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")).abs())
                    .fold(0.0f32, f32::max);
                largest as f64 * f32::EPSILON as f64
            }
            _ => self.scale as f64 / 2.0,
        }
    }
}

pub fn check_bits(bits: u8) -> Result<()> {
    if SUPPORTED_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "quantization width must be one of {SUPPORTED_BITS:?}, got {bits}"
        )))
    }
}

/// Affine min-max quantization: `zero_point = min`, `scale = (max - min)/(2^bits - 1)`,
/// codes `round((x - min)/scale)` clamped to `[0, 2^bits - 1]`.
///
/// The `f32` zero point is rounded down and the `f32` scale rounded up so that
/// the stored grid still covers `[min, max]`. A constant input gets `scale = 0`
/// and dequantizes to the constant rounded to `f32`.
pub fn quantize(values: &[f64], bits: u8) -> Result<QuantizedVector> {
    check_bits(bits)?;
    if values.is_empty() {
        return Err(Error::Empty("quantize"));
    }
    let limit = if bits == 64 { f64::MAX } else { f32::MAX as f64 };
    if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > limit) {
        return Err(Error::Invalid(format!("cannot quantize value {v}")));
    }
    let length = values.len();
    match bits {
        64 => {
            return Ok(QuantizedVector {
                bits,
                scale: 1.0,
                zero_point: 0.0,
                packed: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
                length,
            })
        }
        32 => {
            return Ok(QuantizedVector {
                bits,
                scale: 1.0,
                zero_point: 0.0,
                packed: values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
                length,
            })
        }
        _ => {}
    }

    let levels = ((1u32 << bits) - 1) as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut zero_point = lo as f32;
    if zero_point as f64 > lo && hi > lo {
        zero_point = zero_point.next_down();
    }
    let (scale, codes): (f32, Vec<u32>) = if hi == lo {
        (0.0, vec![0; length])
    } else {
        let zp = zero_point as f64;
        let mut scale = ((hi - zp) / levels) as f32;
        while zp + scale as f64 * levels < hi {
            scale = scale.next_up();
        }
        let s = scale as f64;
        let codes = values
            .iter()
            .map(|&x| ((x - zp) / s).round().clamp(0.0, levels) as u32)
            .collect();
        (scale, codes)
    };
    Ok(QuantizedVector {
        bits,
        scale,
        zero_point,
        packed: pack_codes(&codes, bits),
        length,
    })
}

pub fn dequantize(q: &QuantizedVector) -> Result<Vec<f64>> {
    check_bits(q.bits)?;
    let expected = QuantizedVector::packed_len(q.bits, q.length);
    if q.packed.len() != expected {
        return Err(Error::Invalid(format!(
            "packed payload holds {} bytes, {} codes at {} bits need {expected}",
            q.packed.len(),
            q.length,
            q.bits
        )));
    }
    Ok(match q.bits {
        64 => q
            .packed
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        32 => q
            .packed
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect(),
        bits => {
            let zp = q.zero_point as f64;
            let s = q.scale as f64;
            unpack_codes(&q.packed, bits, q.length)
                .into_iter()
                .map(|c| zp + s * c as f64)
                .collect()
        }
    })
}

/// Packs codes of `bits` width (2, 4, 8 or 16), little-endian, LSB-first.
pub fn pack_codes(codes: &[u32], bits: u8) -> Vec<u8> {
    let width = bits as usize;
    let mut out = vec![0u8; QuantizedVector::packed_len(bits, codes.len())];
    for (i, &code) in codes.iter().enumerate() {
        for b in 0..width {
            if (code >> b) & 1 == 1 {
                let bit = i * width + b;
                out[bit / 8] |= 1 << (bit % 8);
            }
        }
    }
    out
}

pub fn unpack_codes(packed: &[u8], bits: u8, length: usize) -> Vec<u32> {
    let width = bits as usize;
    (0..length)
        .map(|i| {
            let mut code = 0u32;
            for b in 0..width {
                let bit = i * width + b;
                if (packed[bit / 8] >> (bit % 8)) & 1 == 1 {
                    code |= 1 << b;
                }
            }
            code
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_vector() {
        let q = quantize(&[5.0, 5.0, 5.0], 8).unwrap();
        assert_eq!(q.scale, 0.0);
        assert_eq!(unpack_codes(&q.packed, 8, 3), vec![0, 0, 0]);
        assert_eq!(dequantize(&q).unwrap(), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn endpoints_at_eight_bits() {
        let q = quantize(&[0.0, 1.0], 8).unwrap();
        assert_eq!(q.packed, vec![0, 255]);
        assert_eq!(q.zero_point, 0.0);
        assert!((q.scale as f64 - 1.0 / 255.0).abs() < 1e-9);
        let d = dequantize(&q).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 1.0).abs() <= q.error_bound());
    }

    #[test]
    fn four_bit_uniform_error_bound() {
        let mut rng = crate::basis::RngStream::from_sub_seed(17);
        let xs: Vec<f64> = (0..1000).map(|_| rng.next_uniform() * 2.0 - 1.0).collect();
        let q = quantize(&xs, 4).unwrap();
        let d = dequantize(&q).unwrap();
        let worst = xs.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= q.error_bound() + 1e-15, "{worst} vs {}", q.error_bound());
    }

    #[test]
    fn sub_byte_layout_is_lsb_first() {
        assert_eq!(pack_codes(&[1, 2, 3, 0], 2), vec![0b00_11_10_01]);
        assert_eq!(pack_codes(&[0xA, 0x5, 0xF], 4), vec![0x5A, 0x0F]);
        assert_eq!(pack_codes(&[0x1234], 16), vec![0x34, 0x12]);
    }

    #[test]
    fn raw_widths_round_trip() {
        let xs = [0.1, -2.5, 1e-7];
        assert_eq!(dequantize(&quantize(&xs, 64).unwrap()).unwrap(), xs.to_vec());
        let d32 = dequantize(&quantize(&xs, 32).unwrap()).unwrap();
        for (a, b) in xs.iter().zip(&d32) {
            assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn errors() {
        assert!(quantize(&[], 8).is_err());
        assert!(quantize(&[1.0], 3).is_err());
        let mut q = quantize(&[1.0, 2.0, 3.0], 4).unwrap();
        q.packed.push(0);
        assert!(dequantize(&q).is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(bits in prop::sample::select(vec![2u8, 4, 8, 16]), raw in prop::collection::vec(any::<u32>(), 0..64)) {
            let mask = if bits == 32 { u32::MAX } else { (1u32 << bits) - 1 };
            let codes: Vec<u32> = raw.iter().map(|c| c & mask).collect();
            let packed = pack_codes(&codes, bits);
            prop_assert_eq!(unpack_codes(&packed, bits, codes.len()), codes);
        }

        #[test]
        fn dequantization_within_half_step(
            bits in prop::sample::select(vec![2u8, 4, 8, 16]),
            xs in prop::collection::vec(-1e3f64..1e3, 1..50),
        ) {
            let q = quantize(&xs, bits).unwrap();
            let d = dequantize(&q).unwrap();
            let top = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            // a constant vector can only be as exact as its f32 zero point
            let eps = if q.scale == 0.0 { f32::EPSILON as f64 } else { 4.0 * f64::EPSILON };
            let slack = eps * top;
            for (a, b) in xs.iter().zip(&d) {
                prop_assert!((a - b).abs() <= q.error_bound() + slack);
            }
        }
    }
}

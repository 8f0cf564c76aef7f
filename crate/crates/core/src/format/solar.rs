//! `.solar` container: a 12-byte header followed by one CRC-protected record
//! per tensor. All integers and floats are little-endian.
//!
//! ```text
//! header   "SOLR" | version u16 | flags u16 | tensor_count u32
//! record   name_len u16 | name | m n r N_A N_B u32 | slice_width u16 |
//!          noise_sigma f32 | seed u64 | [fingerprint u64] |
//!          alpha_mask | alpha_payload | beta_mask | beta_payload | crc32 u32
//! payload  bits u8 | scale f32 | zero_point f32 | length u32 | packed codes
//! ```
//!
//! Masks hold `ceil(N/8)` bytes, bit `i` (LSB-first) set when basis `i` is kept.
//! The CRC covers the record from `name_len` through the beta payload.

use std::path::Path;

use crate::basis::BasisMode;
use crate::error::{Error, FormatErrorKind, Result};
use crate::pipeline::{CoefficientBlock, SolarArtifact};
use crate::quant::{AccountingMode, FootprintReport, FootprintTerm, QuantizedVector, SUPPORTED_BITS};

pub const MAGIC: [u8; 4] = *b"SOLR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;

pub const FLAG_REFIT: u16 = 1 << 0;
pub const FLAG_RANDOM_BASIS: u16 = 1 << 1;
pub const FLAG_FINGERPRINT: u16 = 1 << 2;
const KNOWN_FLAGS: u16 = FLAG_REFIT | FLAG_RANDOM_BASIS | FLAG_FINGERPRINT;

/// Bytes of a payload descriptor: bits, scale, zero point, length.
const PAYLOAD_HEADER_LEN: usize = 1 + 4 + 4 + 4;

fn flags_of(artifact: &SolarArtifact) -> u16 {
    let mut flags = 0;
    if artifact.refit {
        flags |= FLAG_REFIT;
    }
    if artifact.basis_mode == BasisMode::Random {
        flags |= FLAG_RANDOM_BASIS;
    }
    if artifact.svd_fingerprint.is_some() {
        flags |= FLAG_FINGERPRINT;
    }
    flags
}

fn format_err(offset: usize, kind: FormatErrorKind) -> Error {
    Error::Format { offset, kind }
}

fn narrow<T: TryFrom<usize>>(value: usize, field: &'static str, offset: usize) -> Result<T> {
    T::try_from(value).map_err(|_| format_err(offset, FormatErrorKind::FieldOverflow(field)))
}

/// Serializes named artifacts. All artifacts must share the header flags.
pub fn encode(artifacts: &[(String, SolarArtifact)]) -> Result<Vec<u8>> {
    let flags = artifacts.first().map_or(0, |(_, a)| flags_of(a));
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&narrow::<u32>(artifacts.len(), "tensor_count", 8)?.to_le_bytes());

    for (name, artifact) in artifacts {
        let start = out.len();
        if flags_of(artifact) != flags {
            return Err(format_err(start, FormatErrorKind::MixedFlags));
        }
        artifact.validate()?;
        if name.len() > u16::MAX as usize {
            return Err(format_err(start, FormatErrorKind::NameTooLong(name.len())));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for (value, field) in [
            (artifact.m, "m"),
            (artifact.n, "n"),
            (artifact.r, "r"),
            (artifact.n_a(), "N_A"),
            (artifact.n_b(), "N_B"),
        ] {
            out.extend_from_slice(&narrow::<u32>(value, field, out.len())?.to_le_bytes());
        }
        out.extend_from_slice(&narrow::<u16>(artifact.slice_width, "slice_width", out.len())?.to_le_bytes());
        out.extend_from_slice(&artifact.noise_sigma.to_le_bytes());
        out.extend_from_slice(&artifact.master_seed.to_le_bytes());
        if let Some(fp) = artifact.svd_fingerprint {
            out.extend_from_slice(&fp.to_le_bytes());
        }
        write_block(&mut out, &artifact.alpha)?;
        write_block(&mut out, &artifact.beta)?;
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

fn write_block(out: &mut Vec<u8>, block: &CoefficientBlock) -> Result<()> {
    let c = &block.coefficients;
    out.extend_from_slice(&c.mask_bytes());
    match &block.quantized {
        Some(q) => {
            out.push(q.bits);
            out.extend_from_slice(&q.scale.to_le_bytes());
            out.extend_from_slice(&q.zero_point.to_le_bytes());
            out.extend_from_slice(&narrow::<u32>(q.length, "payload length", out.len())?.to_le_bytes());
            out.extend_from_slice(&q.packed);
        }
        None => {
            out.push(64);
            out.extend_from_slice(&1f32.to_le_bytes());
            out.extend_from_slice(&0f32.to_le_bytes());
            out.extend_from_slice(&narrow::<u32>(c.len(), "payload length", out.len())?.to_le_bytes());
            for v in &c.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(format_err(
                self.pos,
                FormatErrorKind::Truncated {
                    needed: len,
                    available,
                },
            ));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
}

/// Structural view of one side before semantic checks.
struct RawBlock<'a> {
    mask_offset: usize,
    mask: &'a [u8],
    payload_offset: usize,
    bits: u8,
    scale: f32,
    zero_point: f32,
    length: usize,
    packed: &'a [u8],
}

fn read_block<'a>(rd: &mut Reader<'a>, pool: usize) -> Result<RawBlock<'a>> {
    let mask_offset = rd.pos;
    let mask = rd.take(pool.div_ceil(8))?;
    let payload_offset = rd.pos;
    let bits = rd.u8()?;
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(format_err(payload_offset, FormatErrorKind::BadBits(bits)));
    }
    let scale = rd.f32()?;
    let zero_point = rd.f32()?;
    let length = rd.u32()? as usize;
    let packed = rd.take(QuantizedVector::packed_len(bits, length))?;
    Ok(RawBlock {
        mask_offset,
        mask,
        payload_offset,
        bits,
        scale,
        zero_point,
        length,
        packed,
    })
}

fn finish_block(raw: RawBlock<'_>, pool: usize, side: char) -> Result<CoefficientBlock> {
    let mut support = Vec::new();
    for (byte_idx, &byte) in raw.mask.iter().enumerate() {
        for bit in 0..8 {
            if byte >> bit & 1 == 1 {
                let i = byte_idx * 8 + bit;
                if i >= pool {
                    return Err(format_err(
                        raw.mask_offset + byte_idx,
                        FormatErrorKind::MaskOutOfRange { side },
                    ));
                }
                support.push(i);
            }
        }
    }
    if support.len() != raw.length {
        return Err(format_err(
            raw.payload_offset,
            FormatErrorKind::PopcountMismatch {
                side,
                mask: support.len(),
                payload: raw.length,
            },
        ));
    }
    let q = QuantizedVector {
        bits: raw.bits,
        scale: raw.scale,
        zero_point: raw.zero_point,
        packed: raw.packed.to_vec(),
        length: raw.length,
    };
    if q.is_raw() && (q.scale != 1.0 || q.zero_point != 0.0) {
        return Err(format_err(
            raw.payload_offset,
            FormatErrorKind::InvalidRecord(format!(
                "side {side}: raw {}-bit payload must carry scale 1 and zero point 0",
                q.bits
            )),
        ));
    }
    let block = CoefficientBlock::from_quantized(pool, support, q)
        .map_err(|e| format_err(raw.payload_offset, FormatErrorKind::InvalidRecord(e.to_string())))?;
    Ok(if raw.bits == 64 {
        CoefficientBlock::raw(block.coefficients)
    } else {
        block
    })
}

/// Parses and validates a `.solar` stream.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, SolarArtifact)>> {
    let mut rd = Reader { bytes, pos: 0 };
    let magic = rd.array::<4>()?;
    if magic != MAGIC {
        return Err(format_err(0, FormatErrorKind::BadMagic(magic)));
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(format_err(4, FormatErrorKind::UnsupportedVersion(version)));
    }
    let flags = rd.u16()?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(format_err(6, FormatErrorKind::ReservedFlags(flags)));
    }
    let count = rd.u32()? as usize;

    let mut out = Vec::with_capacity(count.min(1024));
    for record in 0..count {
        let start = rd.pos;
        let name_len = rd.u16()? as usize;
        let name_offset = rd.pos;
        let name_bytes = rd.take(name_len)?;
        let m = rd.u32()? as usize;
        let n = rd.u32()? as usize;
        let r = rd.u32()? as usize;
        let n_a = rd.u32()? as usize;
        let n_b = rd.u32()? as usize;
        let slice_width = rd.u16()? as usize;
        let noise_sigma = rd.f32()?;
        let master_seed = rd.u64()?;
        let svd_fingerprint = if flags & FLAG_FINGERPRINT != 0 {
            Some(rd.u64()?)
        } else {
            None
        };
        let raw_a = read_block(&mut rd, n_a)?;
        let raw_b = read_block(&mut rd, n_b)?;
        let body_end = rd.pos;
        let stored = rd.u32()?;
        let computed = crc32fast::hash(&bytes[start..body_end]);
        if stored != computed {
            return Err(format_err(
                body_end,
                FormatErrorKind::CrcMismatch {
                    record,
                    stored,
                    computed,
                },
            ));
        }

        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| format_err(name_offset, FormatErrorKind::BadUtf8))?
            .to_owned();
        let artifact = SolarArtifact {
            master_seed,
            m,
            n,
            r,
            slice_width,
            noise_sigma,
            basis_mode: if flags & FLAG_RANDOM_BASIS != 0 {
                BasisMode::Random
            } else {
                BasisMode::Aligned
            },
            refit: flags & FLAG_REFIT != 0,
            alpha: finish_block(raw_a, n_a, 'A')?,
            beta: finish_block(raw_b, n_b, 'B')?,
            svd_fingerprint,
        };
        artifact
            .validate()
            .map_err(|e| format_err(start, FormatErrorKind::InvalidRecord(e.to_string())))?;
        out.push((name, artifact));
    }
    if rd.pos != bytes.len() {
        return Err(format_err(rd.pos, FormatErrorKind::TrailingBytes(bytes.len() - rd.pos)));
    }
    Ok(out)
}

pub fn write_solar(path: impl AsRef<Path>, artifacts: &[(String, SolarArtifact)]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(artifacts)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_solar(path: impl AsRef<Path>) -> Result<Vec<(String, SolarArtifact)>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Byte-table accounting of an encoded file: the published arithmetic applied
/// per tensor (`ceil(((k_A + k_B) bits + N_A + N_B)/8)`, plus one seed byte),
/// with everything else the container stores itemized as overhead. The report
/// total plus the overhead terms equals the encoded length.
pub fn file_accounting(artifacts: &[(String, SolarArtifact)]) -> Result<FootprintReport> {
    let encoded_len = encode(artifacts)?.len() as u64;
    let mut coeff_bits = 0u64;
    let mut mask_bits = 0u64;
    let mut formula_payload = 0u64;
    let mut names = 0u64;
    let mut fingerprints = 0u64;
    for (name, a) in artifacts {
        let ca = a.alpha.coefficients.len() as u64 * a.alpha.bits() as u64;
        let cb = a.beta.coefficients.len() as u64 * a.beta.bits() as u64;
        let masks = (a.n_a() + a.n_b()) as u64;
        coeff_bits += ca + cb;
        mask_bits += masks;
        formula_payload += (ca + cb + masks).div_ceil(8);
        names += 2 + name.len() as u64;
        if a.svd_fingerprint.is_some() {
            fingerprints += 8;
        }
    }
    let tensors = artifacts.len() as u64;
    let byte_count = formula_payload + 1;

    let mut overhead = vec![
        FootprintTerm::new("header", HEADER_LEN as u64),
        FootprintTerm::new("tensor names", names),
        FootprintTerm::new("shape and pool fields", tensors * (5 * 4 + 2 + 4)),
        FootprintTerm::new("seed width beyond one byte", (tensors * 8).saturating_sub(1)),
        FootprintTerm::new("quantizer constants", tensors * 2 * PAYLOAD_HEADER_LEN as u64),
        FootprintTerm::new("record CRCs", tensors * 4),
    ];
    if fingerprints > 0 {
        overhead.push(FootprintTerm::new("SVD fingerprints", fingerprints));
    }
    if tensors == 0 {
        // no record stores a seed, yet the formula still charges one byte
        let header = FootprintTerm::new("header less the charged seed byte", encoded_len - 1);
        return Ok(report(byte_count, 0, 0, vec![header]));
    }
    let itemized: u64 = overhead.iter().map(|t| t.value).sum();
    overhead.push(FootprintTerm::new(
        "byte padding of masks and payloads",
        encoded_len - byte_count - itemized,
    ));
    Ok(report(byte_count, coeff_bits, mask_bits, overhead))
}

fn report(byte_count: u64, coeff_bits: u64, mask_bits: u64, overhead: Vec<FootprintTerm>) -> FootprintReport {
    FootprintReport {
        label: "encoded .solar file".into(),
        formula: "sum over tensors of ceil(((k_A + k_B) x bits + N_A + N_B)/8) + 1".into(),
        accounting_mode: AccountingMode::ByteTable,
        param_count: 0,
        byte_count,
        breakdown: vec![
            FootprintTerm::new("coefficient bits", coeff_bits),
            FootprintTerm::new("index mask bits", mask_bits),
            FootprintTerm::new("seed", 1),
        ],
        container_overhead: Vec::new(),
    }
    .with_container_overhead(overhead)
}

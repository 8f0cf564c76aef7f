//! Representation-cost accounting for LoRA, NOLA and compressed adapters.
//!
//! Two accountings coexist. The parameter table charges every selected
//! coefficient as one parameter, every pool index as one bit (folded into
//! 32-bit words) and the seed as one parameter. The byte table charges each
//! coefficient `bits/8` bytes, a single `N`-bit mask per layer, and one byte
//! for the seed. Presets reproduce the published totals exactly.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    ParamTable,
    ByteTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintTerm {
    pub term: String,
    pub value: u64,
}

impl FootprintTerm {
    pub fn new(term: impl Into<String>, value: u64) -> Self {
        Self {
            term: term.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintReport {
    pub label: String,
    pub formula: String,
    pub accounting_mode: AccountingMode,
    pub param_count: u64,
    pub byte_count: u64,
    pub breakdown: Vec<FootprintTerm>,
    /// Terms that exist on disk but not in the published arithmetic
    /// (container header, names, CRCs, quantizer constants, full seed width).
    pub container_overhead: Vec<FootprintTerm>,
}

impl FootprintReport {
    /// The count selected by the accounting mode.
    pub fn total(&self) -> u64 {
        match self.accounting_mode {
            AccountingMode::ParamTable => self.param_count,
            AccountingMode::ByteTable => self.byte_count,
        }
    }

    pub fn with_container_overhead(mut self, terms: Vec<FootprintTerm>) -> Self {
        self.container_overhead = terms;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let unit = match self.accounting_mode {
            AccountingMode::ParamTable => "parameters",
            AccountingMode::ByteTable => "bytes",
        };
        let mut rows: Vec<(String, String)> = vec![
            ("method".into(), self.label.clone()),
            ("accounting".into(), format!("{:?}", self.accounting_mode)),
            ("formula".into(), self.formula.clone()),
        ];
        let body: Vec<(String, String)> = self
            .breakdown
            .iter()
            .map(|t| (t.term.clone(), t.value.to_string()))
            .collect();
        let overhead: Vec<(String, String)> = self
            .container_overhead
            .iter()
            .map(|t| (format!("container: {}", t.term), t.value.to_string()))
            .collect();
        let total = (format!("total {unit}"), self.total().to_string());
        let key_w = rows
            .iter()
            .chain(&body)
            .chain(&overhead)
            .chain(std::iter::once(&total))
            .map(|r| r.0.len())
            .max()
            .unwrap_or(0);
        let val_w = body
            .iter()
            .chain(&overhead)
            .chain(std::iter::once(&total))
            .map(|r| r.1.len())
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows.drain(..) {
            let _ = writeln!(out, "{k:<key_w$}  {v}");
        }
        let rule = format!("{}  {}", "-".repeat(key_w), "-".repeat(val_w));
        let _ = writeln!(out, "{rule}");
        for (k, v) in &body {
            let _ = writeln!(out, "{k:<key_w$}  {v:>val_w$}");
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{:<key_w$}  {:>val_w$}", total.0, total.1);
        if !overhead.is_empty() {
            for (k, v) in &overhead {
                let _ = writeln!(out, "{k:<key_w$}  {v:>val_w$}");
            }
        }
        out
    }
}

/// `layers x (k_A + k_B + (N_A + N_B)/32) + 1`; the mask term is rounded up
/// over the whole product so fractional per-layer words stay exact.
pub fn footprint_params(layers: u64, k_a: u64, k_b: u64, n_a: u64, n_b: u64) -> u64 {
    solar_params(layers, k_a, k_b, n_a + n_b, 1)
}

/// General parameter-table count over `units` coefficient pairs sharing
/// `mask_bits` of index mask each.
pub fn solar_params(units: u64, k_a: u64, k_b: u64, mask_bits: u64, seed_term: u64) -> u64 {
    units * (k_a + k_b) + (units * mask_bits).div_ceil(32) + seed_term
}

/// One group of identically shaped LoRA projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoraGroup {
    /// Layers (times projections) sharing this shape.
    pub layers: u64,
    pub input: u64,
    pub rank: u64,
    pub output: u64,
}

/// `sum over groups of layers x (in x r + r x out)`.
pub fn footprint_params_lora(groups: &[LoraGroup]) -> u64 {
    groups
        .iter()
        .map(|g| g.layers * (g.input * g.rank + g.rank * g.output))
        .sum()
}

/// `layers x ((k_A + k_B) + N_mask/bits) x bits/8 + 1`, evaluated as
/// `layers x ((k_A + k_B) x bits + N_mask) / 8` so every printed width stays integral.
pub fn footprint_bytes(layers: u64, k_a: u64, k_b: u64, n_mask: u64, bits: u8) -> Result<u64> {
    super::check_bits(bits)?;
    Ok((layers * ((k_a + k_b) * bits as u64 + n_mask)).div_ceil(8) + 1)
}

/// `layers x projections x 2 x bases + seed_term`.
pub fn footprint_nola(layers: u64, projections: u64, bases: u64, seed_term: u64) -> u64 {
    layers * projections * 2 * bases + seed_term
}

/// The scheme behind a footprint row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FootprintScheme {
    Solar {
        units: u64,
        k_a: u64,
        k_b: u64,
        mask_bits: u64,
        seed_term: u64,
    },
    SolarBytes {
        units: u64,
        k_a: u64,
        k_b: u64,
        mask_bits: u64,
        bits: u8,
    },
    Lora {
        groups: Vec<LoraGroup>,
        bytes_per_param: Option<u64>,
    },
    Nola {
        layers: u64,
        projections: u64,
        bases: u64,
        seed_term: u64,
    },
}

impl FootprintScheme {
    pub fn report(&self, label: &str) -> Result<FootprintReport> {
        Ok(match *self {
            FootprintScheme::Solar {
                units,
                k_a,
                k_b,
                mask_bits,
                seed_term,
            } => {
                let coeffs = units * (k_a + k_b);
                let masks = (units * mask_bits).div_ceil(32);
                let params = coeffs + masks + seed_term;
                FootprintReport {
                    label: label.into(),
                    formula: format!("{units} x (({k_a} + {k_b}) + {mask_bits}/32) + {seed_term}"),
                    accounting_mode: AccountingMode::ParamTable,
                    param_count: params,
                    byte_count: 4 * params,
                    breakdown: vec![
                        FootprintTerm::new("coefficients", coeffs),
                        FootprintTerm::new("index masks (32-bit words)", masks),
                        FootprintTerm::new("seed", seed_term),
                    ],
                    container_overhead: Vec::new(),
                }
            }
            FootprintScheme::SolarBytes {
                units,
                k_a,
                k_b,
                mask_bits,
                bits,
            } => {
                let bytes = footprint_bytes(units, k_a, k_b, mask_bits, bits)?;
                let mask_bytes = (units * mask_bits).div_ceil(8);
                FootprintReport {
                    label: label.into(),
                    formula: format!(
                        "{units} x (({k_a} + {k_b}) + {mask_bits}/{bits}) x {bits}/8 + 1"
                    ),
                    accounting_mode: AccountingMode::ByteTable,
                    param_count: solar_params(units, k_a, k_b, mask_bits, 1),
                    byte_count: bytes,
                    breakdown: vec![
                        FootprintTerm::new(format!("coefficients ({bits}-bit)"), bytes - 1 - mask_bytes),
                        FootprintTerm::new("index masks", mask_bytes),
                        FootprintTerm::new("seed", 1),
                    ],
                    container_overhead: Vec::new(),
                }
            }
            FootprintScheme::Lora {
                ref groups,
                bytes_per_param,
            } => {
                let params = footprint_params_lora(groups);
                let formula = groups
                    .iter()
                    .map(|g| format!("{} x ({} x {} + {} x {})", g.layers, g.input, g.rank, g.rank, g.output))
                    .collect::<Vec<_>>()
                    .join(" + ");
                let (mode, bpp) = match bytes_per_param {
                    Some(b) => (AccountingMode::ByteTable, b),
                    None => (AccountingMode::ParamTable, 4),
                };
                FootprintReport {
                    label: label.into(),
                    formula: if bytes_per_param.is_some() {
                        format!("[{formula}] x {bpp}")
                    } else {
                        formula
                    },
                    accounting_mode: mode,
                    param_count: params,
                    byte_count: params * bpp,
                    breakdown: groups
                        .iter()
                        .enumerate()
                        .map(|(i, g)| {
                            let p = g.layers * (g.input * g.rank + g.rank * g.output);
                            FootprintTerm::new(
                                format!("group {i} ({}x{}x{})", g.input, g.rank, g.output),
                                if bytes_per_param.is_some() { p * bpp } else { p },
                            )
                        })
                        .collect(),
                    container_overhead: Vec::new(),
                }
            }
            FootprintScheme::Nola {
                layers,
                projections,
                bases,
                seed_term,
            } => {
                let params = footprint_nola(layers, projections, bases, seed_term);
                FootprintReport {
                    label: label.into(),
                    formula: format!("{layers} x {projections} x 2 x {bases} + {seed_term}"),
                    accounting_mode: AccountingMode::ParamTable,
                    param_count: params,
                    byte_count: 4 * params,
                    breakdown: vec![
                        FootprintTerm::new("coefficients", params - seed_term),
                        FootprintTerm::new("seed", seed_term),
                    ],
                    container_overhead: Vec::new(),
                }
            }
        })
    }
}

/// A named row of the published footprint tables.
#[derive(Debug, Clone)]
pub struct FootprintPreset {
    pub name: &'static str,
    pub description: &'static str,
    pub scheme: FootprintScheme,
    /// The total printed in the published table.
    pub printed: u64,
}

impl FootprintPreset {
    pub fn report(&self) -> FootprintReport {
        self.scheme
            .report(self.name)
            .expect("presets use supported widths")
    }
}

fn lora(layers: u64, dims: &[(u64, u64, u64)], bytes: Option<u64>) -> FootprintScheme {
    FootprintScheme::Lora {
        groups: dims
            .iter()
            .map(|&(input, rank, output)| LoraGroup {
                layers,
                input,
                rank,
                output,
            })
            .collect(),
        bytes_per_param: bytes,
    }
}

fn solar(units: u64, k: u64, mask_bits: u64, seed_term: u64) -> FootprintScheme {
    FootprintScheme::Solar {
        units,
        k_a: k,
        k_b: k,
        mask_bits,
        seed_term,
    }
}

fn solar_bytes(units: u64, k: u64, mask_bits: u64, bits: u8) -> FootprintScheme {
    FootprintScheme::SolarBytes {
        units,
        k_a: k,
        k_b: k,
        mask_bits,
        bits,
    }
}

fn nola(layers: u64, projections: u64, bases: u64, seed_term: u64) -> FootprintScheme {
    FootprintScheme::Nola {
        layers,
        projections,
        bases,
        seed_term,
    }
}

/// All built-in presets.
pub fn presets() -> Vec<FootprintPreset> {
    macro_rules! preset {
        ($name:expr, $desc:expr, $scheme:expr, $printed:expr) => {
            FootprintPreset {
                name: $name,
                description: $desc,
                scheme: $scheme,
                printed: $printed,
            }
        };
    }
    vec![
        // ViT parameter tables
        preset!("vitb-lora-r4", "ViT-B LoRA r=4, Q projections", lora(12, &[(768, 4, 768)], None), 73728),
        preset!("vitb-solar-4000-1600", "ViT-B, N=4000 -> k=1600, masks for A and B", solar(12, 1600, 8000, 1), 41401),
        preset!("vitl-lora-r4", "ViT-L LoRA r=4, Q projections", lora(24, &[(1024, 4, 1024)], None), 196608),
        preset!("vitl-solar-1000-500", "ViT-L, N=1000 -> k=500, masks for A and B", solar(24, 500, 2000, 1), 25501),
        preset!("nola-vitb", "ViT-B NOLA, MLP projections, 1000 bases", nola(12, 2, 1000, 1), 48001),
        // LLaMA-3 (Q and V projections; one pool term per projection)
        preset!(
            "llama1b-lora-r8",
            "LLaMA-3.2 1B LoRA r=8, Q (2048->2048) and V (2048->512)",
            lora(16, &[(2048, 8, 2048), (2048, 8, 512)], None),
            851968
        ),
        preset!("llama1b-nola", "LLaMA-3.2 1B NOLA, printed without the seed", nola(16, 2, 1000, 0), 64000),
        preset!("llama1b-solar-4000-1200", "LLaMA-3.2 1B, N=4000 -> k=1200", solar(32, 1200, 4000, 1), 80801),
        preset!(
            "llama3b-lora-r1",
            "LLaMA-3.2 3B LoRA r=1, Q (3072->3072) and V (3072->1024)",
            lora(28, &[(3072, 1, 3072), (3072, 1, 1024)], None),
            286720
        ),
        preset!("llama3b-nola", "LLaMA-3.2 3B NOLA, printed without the seed", nola(28, 2, 1000, 0), 112000),
        preset!("llama3b-solar-1000-150", "LLaMA-3.2 3B, N=1000 -> k=150", solar(56, 150, 1000, 1), 18551),
        preset!(
            "llama8b-lora-r1",
            "LLaMA-3.1 8B LoRA r=1, Q (4096->4096) and V (4096->1024)",
            lora(32, &[(4096, 1, 4096), (4096, 1, 1024)], None),
            425984
        ),
        preset!("llama8b-nola", "LLaMA-3.1 8B NOLA, printed without the seed", nola(32, 2, 1000, 0), 128000),
        preset!("llama8b-solar-1000-300", "LLaMA-3.1 8B, N=1000 -> k=300", solar(64, 300, 1000, 1), 40401),
        // GPT-2 (Q and V projections)
        preset!("gpt2s-lora-r4", "GPT-2 Small LoRA r=4, Q and V", lora(24, &[(768, 4, 768)], None), 147456),
        preset!("gpt2s-nola", "GPT-2 Small NOLA, printed without the seed", nola(12, 2, 1000, 0), 48000),
        preset!(
            "gpt2s-solar-1000-300",
            "GPT-2 Small, N=1000 -> k=300; the printed total omits the +1 seed term",
            solar(24, 300, 1000, 0),
            15150
        ),
        preset!("gpt2s-solar-100-90", "GPT-2 Small, N=100 -> k=90", solar(24, 90, 100, 1), 4396),
        preset!("gpt2m-lora-r4", "GPT-2 Medium LoRA r=4, Q and V", lora(48, &[(1024, 4, 1024)], None), 393216),
        preset!("gpt2m-solar-1000-300", "GPT-2 Medium, N=1000 -> k=300", solar(48, 300, 1000, 1), 30301),
        preset!("gpt2m-solar-100-90", "GPT-2 Medium, N=100 -> k=90", solar(48, 90, 100, 1), 8791),
        // byte-level table
        preset!("vitb-lora-r1-bytes", "ViT-B LoRA r=1, fp32 bytes", lora(12, &[(768, 1, 768)], Some(4)), 73728),
        preset!("vitb-solar-8bit-500-50", "ViT-B r=1, N=500 -> k=50, 8-bit", solar_bytes(12, 50, 500, 8), 1951),
        preset!("vitb-solar-8bit-100-10", "ViT-B r=1, N=100 -> k=10, 8-bit", solar_bytes(12, 10, 100, 8), 391),
        preset!("vitl-lora-r4-bytes", "ViT-L LoRA r=4, fp32 bytes", lora(24, &[(1024, 4, 1024)], Some(4)), 786432),
        preset!("vitl-solar-32bit-4000-1600", "ViT-L r=4, N=4000 -> k=1600, 32-bit", solar_bytes(24, 1600, 4000, 32), 319201),
        preset!("vitl-solar-16bit-4000-1600", "ViT-L r=4, N=4000 -> k=1600, 16-bit", solar_bytes(24, 1600, 4000, 16), 165601),
        preset!("vitl-solar-8bit-4000-1600", "ViT-L r=4, N=4000 -> k=1600, 8-bit", solar_bytes(24, 1600, 4000, 8), 88801),
        preset!("vitl-solar-4bit-4000-1600", "ViT-L r=4, N=4000 -> k=1600, 4-bit", solar_bytes(24, 1600, 4000, 4), 50401),
    ]
}

pub fn preset(name: &str) -> Result<FootprintPreset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = presets().iter().map(|p| p.name).collect();
            Error::Invalid(format!(
                "unknown footprint preset {name:?}; valid presets: {}",
                names.join(", ")
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_formula_examples() {
        assert_eq!(footprint_params(12, 1600, 1600, 4000, 4000), 41401);
        assert_eq!(footprint_params(24, 500, 500, 1000, 1000), 25501);
        assert_eq!(footprint_params(0, 10, 10, 64, 64), 1);
    }

    #[test]
    fn lora_formula_examples() {
        let g = |layers, input, rank, output| LoraGroup { layers, input, rank, output };
        assert_eq!(footprint_params_lora(&[g(12, 768, 4, 768)]), 73728);
        assert_eq!(footprint_params_lora(&[g(16, 2048, 8, 2048), g(16, 2048, 8, 512)]), 851968);
        assert_eq!(footprint_params_lora(&[g(48, 1024, 4, 1024)]), 393216);
    }

    #[test]
    fn byte_formula_examples() {
        assert_eq!(footprint_bytes(24, 1600, 1600, 4000, 32).unwrap(), 319201);
        assert_eq!(footprint_bytes(24, 1600, 1600, 4000, 8).unwrap(), 88801);
        assert_eq!(footprint_bytes(24, 1600, 1600, 4000, 4).unwrap(), 50401);
        assert_eq!(footprint_bytes(12, 50, 50, 500, 8).unwrap(), 1951);
        assert!(footprint_bytes(1, 1, 1, 1, 3).is_err());
    }

    #[test]
    fn nola_formula_examples() {
        assert_eq!(footprint_nola(12, 2, 1000, 1), 48001);
        assert_eq!(footprint_nola(16, 2, 1000, 1), 64001);
        assert_eq!(footprint_nola(16, 2, 1000, 0), 64000);
        assert_eq!(footprint_nola(0, 2, 1000, 1), 1);
    }

    #[test]
    fn every_preset_matches_its_printed_total() {
        for p in presets() {
            assert_eq!(p.report().total(), p.printed, "{}", p.name);
        }
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        let msg = preset("nope").unwrap_err().to_string();
        assert!(msg.contains("vitb-lora-r4"));
    }

    #[test]
    fn table_and_json_render() {
        let r = preset("vitb-solar-4000-1600").unwrap().report();
        let t = r.to_table();
        assert!(t.contains("41401"));
        assert!(t.contains("index masks"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["param_count"], 41401);
        assert_eq!(v["accounting_mode"], "param_table");
    }
}

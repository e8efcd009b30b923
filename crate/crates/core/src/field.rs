// SPDX-License-Identifier: Apache-2.0

//! Composite-field arithmetic for the AES S-box.
//!
//! Bytes in the AES polynomial basis (reduction polynomial
//! `x^8 + x^4 + x^3 + x + 1`) are mapped by a GF(2)-linear isomorphism into
//! the tower GF(((2^2)^2)^2), where inversion decomposes into GF(2^4) and
//! GF(2^2) operations:
//!
//! * GF(2^2) over GF(2) with `w^2 + w + 1`, element `(b1, b0)` = `b1*w + b0`
//! * GF(2^4) over GF(2^2) with `z^2 + z + phi`, nibble `(hi, lo)` = `hi*z + lo`
//! * GF(2^8) over GF(2^4) with `y^2 + y + lambda`, byte `(hi, lo)` = `hi*y + lo`
//!
//! Bit 0 is always the least significant bit and the coefficient of the
//! constant basis element. Matrices are stored as eight row bytes; output
//! bit `r` is the parity of `row[r] & input`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The published AES S-box table.
pub const AES_SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// Lower byte of the AES reduction polynomial `x^8 + x^4 + x^3 + x + 1`.
const AES_POLY_LOW: u8 = 0x1b;

/// An element of GF(2^8) in the AES polynomial basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Gf8Elem(pub u8);

impl Gf8Elem {
    pub const ZERO: Gf8Elem = Gf8Elem(0);
    pub const ONE: Gf8Elem = Gf8Elem(1);
}

/// An element of GF(2^8) in the tower basis, split into GF(2^4) halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TowerElem {
    pub hi: u8,
    pub lo: u8,
}

impl TowerElem {
    pub fn new(hi: u8, lo: u8) -> Self {
        debug_assert!(hi < 16 && lo < 16);
        TowerElem { hi: hi & 0xf, lo: lo & 0xf }
    }

    pub fn from_byte(byte: u8) -> Self {
        TowerElem { hi: byte >> 4, lo: byte & 0xf }
    }

    pub fn to_byte(self) -> u8 {
        (self.hi << 4) | self.lo
    }
}

/// A square matrix over GF(2), one byte per row.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitMatrix8(pub [u8; 8]);

impl fmt::Debug for BitMatrix8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.0.iter().map(|r| format!("{r:#04x}")))
            .finish()
    }
}

impl BitMatrix8 {
    pub const IDENTITY: BitMatrix8 = BitMatrix8([0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80]);

    /// Builds the matrix whose column `c` is `columns[c]`.
    pub fn from_columns(columns: [u8; 8]) -> Self {
        let mut rows = [0u8; 8];
        for (c, col) in columns.iter().enumerate() {
            for (r, row) in rows.iter_mut().enumerate() {
                if (col >> r) & 1 == 1 {
                    *row |= 1 << c;
                }
            }
        }
        BitMatrix8(rows)
    }

    pub fn apply(&self, x: u8) -> u8 {
        self.0
            .iter()
            .enumerate()
            .fold(0u8, |acc, (r, row)| acc | ((((row & x).count_ones() & 1) as u8) << r))
    }

    /// Matrix product `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &BitMatrix8) -> BitMatrix8 {
        let mut columns = [0u8; 8];
        for (c, col) in columns.iter_mut().enumerate() {
            *col = self.apply(rhs.apply(1 << c));
        }
        BitMatrix8::from_columns(columns)
    }

    /// Gauss-Jordan inverse over GF(2); `None` when singular.
    pub fn inverse(&self) -> Option<BitMatrix8> {
        let mut left = self.0;
        let mut right = Self::IDENTITY.0;
        for col in 0..8 {
            let pivot = (col..8).find(|&r| (left[r] >> col) & 1 == 1)?;
            left.swap(col, pivot);
            right.swap(col, pivot);
            for r in 0..8 {
                if r != col && (left[r] >> col) & 1 == 1 {
                    left[r] ^= left[col];
                    right[r] ^= right[col];
                }
            }
        }
        Some(BitMatrix8(right))
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse().is_some()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("lambda {0:#x} does not fit in four bits")]
    LambdaRange(u8),
    #[error("phi {0:#x} does not fit in two bits")]
    PhiRange(u8),
    #[error("delta matrix is singular")]
    SingularDelta,
    #[error("delta_inv is not the inverse of delta")]
    InverseMismatch,
    #[error("composite S-box disagrees with the reference at input {input:#04x}: got {got:#04x}, expected {expected:#04x}")]
    SboxMismatch { input: u8, got: u8, expected: u8 },
}

/// Constants that pin down one composite-field representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldParams {
    #[serde(with = "hex_byte")]
    pub lambda: u8,
    #[serde(with = "hex_byte")]
    pub phi: u8,
    #[serde(with = "hex_rows")]
    pub delta: BitMatrix8,
    #[serde(with = "hex_rows")]
    pub delta_inv: BitMatrix8,
    #[serde(with = "hex_rows")]
    pub affine_a: BitMatrix8,
    #[serde(with = "hex_byte")]
    pub affine_b: u8,
}

/// The AES affine matrix (row `i` selects bits `i, i+4, i+5, i+6, i+7`).
pub const AES_AFFINE_A: BitMatrix8 = BitMatrix8([0xf1, 0xe3, 0xc7, 0x8f, 0x1f, 0x3e, 0x7c, 0xf8]);
pub const AES_AFFINE_B: u8 = 0x63;

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams::DEFAULT
    }
}

impl FieldParams {
    /// Parameter set used by the synthesized S-box unless another is loaded.
    pub const DEFAULT: FieldParams = FieldParams {
        lambda: 0xe,
        phi: 0x2,
        delta: BitMatrix8([0xab, 0xc0, 0xf4, 0x68, 0xa2, 0x72, 0x7e, 0xa0]),
        delta_inv: BitMatrix8([0x9b, 0x90, 0xea, 0x8a, 0x32, 0xde, 0x5c, 0x5e]),
        affine_a: AES_AFFINE_A,
        affine_b: AES_AFFINE_B,
    };

    /// Derives the isomorphism for `(phi, lambda)` from roots of the three
    /// defining polynomials inside the AES field. `root_choice` bits 0, 1 and
    /// 2 select which of the two conjugate roots is used at each level.
    pub fn derive(phi: u8, lambda: u8, root_choice: u8) -> Option<FieldParams> {
        if phi > 3 || lambda > 15 {
            return None;
        }
        let roots = |f: &dyn Fn(u8) -> u8| -> Vec<u8> { (0..=255u8).filter(|&r| f(r) == 0).collect() };
        // w^2 + w + 1 = 0
        let ws = roots(&|r| gf256_mul(r, r) ^ r ^ 1);
        let w = *ws.get((root_choice & 1) as usize)?;
        let embed4 = |v: u8| -> u8 {
            let mut out = 0;
            if v & 1 != 0 {
                out ^= 1;
            }
            if v & 2 != 0 {
                out ^= w;
            }
            out
        };
        let phi_e = embed4(phi);
        let zs = roots(&|r| gf256_mul(r, r) ^ r ^ phi_e);
        let z = *zs.get(((root_choice >> 1) & 1) as usize)?;
        let embed16 = |v: u8| -> u8 { gf256_mul(embed4(v >> 2), z) ^ embed4(v & 3) };
        let lambda_e = embed16(lambda);
        let ys = roots(&|r| gf256_mul(r, r) ^ r ^ lambda_e);
        let y = *ys.get(((root_choice >> 2) & 1) as usize)?;
        let mut columns = [0u8; 8];
        for (bit, col) in columns.iter_mut().enumerate() {
            let nibble = 1u8 << (bit % 4);
            let low = embed16(nibble);
            *col = if bit < 4 { low } else { gf256_mul(low, y) };
        }
        let delta_inv = BitMatrix8::from_columns(columns);
        let delta = delta_inv.inverse()?;
        Some(FieldParams {
            lambda,
            phi,
            delta,
            delta_inv,
            affine_a: AES_AFFINE_A,
            affine_b: AES_AFFINE_B,
        })
    }

    /// Every parameter set reachable through [`FieldParams::derive`].
    pub fn candidates() -> Vec<FieldParams> {
        let mut out = Vec::new();
        for phi in 0..4u8 {
            for lambda in 0..16u8 {
                for root_choice in 0..8u8 {
                    if let Some(p) = FieldParams::derive(phi, lambda, root_choice) {
                        if p.validate().is_ok() && !out.contains(&p) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    /// Checks the structural invariants and the exhaustive S-box oracle.
    pub fn validate(&self) -> Result<(), FieldError> {
        if self.lambda > 0xf {
            return Err(FieldError::LambdaRange(self.lambda));
        }
        if self.phi > 0x3 {
            return Err(FieldError::PhiRange(self.phi));
        }
        if !self.delta.is_invertible() {
            return Err(FieldError::SingularDelta);
        }
        if self.delta.compose(&self.delta_inv) != BitMatrix8::IDENTITY {
            return Err(FieldError::InverseMismatch);
        }
        first_sbox_mismatch(|x| sbox_composite(Gf8Elem(x), self).0)
    }

    /// `A * delta_inv`, the merged output linear layer of the S-box.
    pub fn output_matrix(&self) -> BitMatrix8 {
        self.affine_a.compose(&self.delta_inv)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field params serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<FieldParams> {
        serde_json::from_str(text)
    }
}

/// Returns the first input on which `sbox` disagrees with [`AES_SBOX`].
pub fn first_sbox_mismatch(sbox: impl Fn(u8) -> u8) -> Result<(), FieldError> {
    for x in 0..=255u8 {
        let got = sbox(x);
        let expected = AES_SBOX[x as usize];
        if got != expected {
            return Err(FieldError::SboxMismatch { input: x, got, expected });
        }
    }
    Ok(())
}

/// Multiplication in the AES field by shift-and-add.
pub fn gf256_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= AES_POLY_LOW;
        }
        b >>= 1;
    }
    acc
}

pub fn gf4_mul(a: u8, b: u8) -> u8 {
    debug_assert!(a < 4 && b < 4);
    let (a1, a0) = (a >> 1, a & 1);
    let (b1, b0) = (b >> 1, b & 1);
    let hh = a1 & b1;
    let hi = hh ^ (a1 & b0) ^ (a0 & b1);
    let lo = (a0 & b0) ^ hh;
    (hi << 1) | lo
}

/// Squaring in GF(2^2); linear: `(b1, b0) -> (b1, b1 ^ b0)`.
pub fn gf4_square(a: u8) -> u8 {
    let a1 = a >> 1;
    (a1 << 1) | (a1 ^ (a & 1))
}

/// Inverse in GF(2^2) (equal to the square), with `0 -> 0`.
pub fn gf4_inv(a: u8) -> u8 {
    gf4_square(a)
}

pub fn gf16_mul(a: u8, b: u8, params: &FieldParams) -> u8 {
    debug_assert!(a < 16 && b < 16);
    let (a1, a0) = (a >> 2, a & 3);
    let (b1, b0) = (b >> 2, b & 3);
    let hh = gf4_mul(a1, b1);
    let ll = gf4_mul(a0, b0);
    let hi = gf4_mul(a1 ^ a0, b1 ^ b0) ^ ll;
    let lo = ll ^ gf4_mul(hh, params.phi);
    (hi << 2) | lo
}

pub fn gf16_square(a: u8, params: &FieldParams) -> u8 {
    gf16_mul(a, a, params)
}

/// `a^2 * lambda`, the constant-scaled square term of the tower inverse.
pub fn gf16_square_scale(a: u8, params: &FieldParams) -> u8 {
    gf16_mul(gf16_square(a, params), params.lambda, params)
}

/// Inverse in GF(2^4) through the GF(2^2) norm, with `0 -> 0`.
pub fn gf16_inv(a: u8, params: &FieldParams) -> u8 {
    let (a1, a0) = (a >> 2, a & 3);
    let norm = gf4_mul(gf4_square(a1), params.phi) ^ gf4_mul(a1, a0) ^ gf4_square(a0);
    let norm_inv = gf4_inv(norm);
    let hi = gf4_mul(norm_inv, a1);
    let lo = gf4_mul(norm_inv, a0 ^ a1);
    (hi << 2) | lo
}

/// Inverse in the tower field:
/// `d = (hi ^ lo) * lo ^ hi^2 * lambda`, result `(d^-1 * hi, d^-1 * (hi ^ lo))`.
pub fn gf256_tower_inv(x: TowerElem, params: &FieldParams) -> TowerElem {
    let sum = x.hi ^ x.lo;
    let d = gf16_mul(sum, x.lo, params) ^ gf16_square_scale(x.hi, params);
    let d_inv = gf16_inv(d, params);
    TowerElem::new(gf16_mul(d_inv, x.hi, params), gf16_mul(d_inv, sum, params))
}

pub fn map_iso(x: Gf8Elem, params: &FieldParams) -> TowerElem {
    TowerElem::from_byte(params.delta.apply(x.0))
}

pub fn map_iso_inv(x: TowerElem, params: &FieldParams) -> Gf8Elem {
    Gf8Elem(params.delta_inv.apply(x.to_byte()))
}

pub fn affine_transform(x: Gf8Elem, params: &FieldParams) -> Gf8Elem {
    Gf8Elem(params.affine_a.apply(x.0) ^ params.affine_b)
}

pub fn sbox_reference(x: Gf8Elem) -> Gf8Elem {
    Gf8Elem(AES_SBOX[x.0 as usize])
}

pub fn sbox_composite(x: Gf8Elem, params: &FieldParams) -> Gf8Elem {
    affine_transform(map_iso_inv(gf256_tower_inv(map_iso(x, params), params), params), params)
}

mod hex_byte {
    use super::*;

    pub fn serialize<S: Serializer>(value: &u8, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{value:#04x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
        let raw = ByteRepr::deserialize(d)?;
        raw.into_byte().map_err(serde::de::Error::custom)
    }
}

mod hex_rows {
    use super::*;

    pub fn serialize<S: Serializer>(value: &BitMatrix8, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<String> = value.0.iter().map(|r| format!("{r:#04x}")).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BitMatrix8, D::Error> {
        let raw: Vec<ByteRepr> = Vec::deserialize(d)?;
        if raw.len() != 8 {
            return Err(serde::de::Error::custom(format!("expected 8 rows, got {}", raw.len())));
        }
        let mut rows = [0u8; 8];
        for (slot, r) in rows.iter_mut().zip(raw) {
            *slot = r.into_byte().map_err(serde::de::Error::custom)?;
        }
        Ok(BitMatrix8(rows))
    }
}

/// A byte written either as a JSON integer or as a hex string.
#[derive(Deserialize)]
#[serde(untagged)]
enum ByteRepr {
    Int(u64),
    Text(String),
}

impl ByteRepr {
    fn into_byte(self) -> Result<u8, String> {
        match self {
            ByteRepr::Int(v) => u8::try_from(v).map_err(|_| format!("{v} does not fit in a byte")),
            ByteRepr::Text(t) => {
                let digits = t.trim().trim_start_matches("0x").trim_start_matches("0X");
                u8::from_str_radix(digits, 16).map_err(|e| format!("bad hex byte {t:?}: {e}"))
            }
        }
    }
}

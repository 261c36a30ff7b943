//! Capacity-limited fronthaul: what each BS sends to the central unit.
//!
//! Either every BS quantizes its sample covariance (`L²` real scalars), or
//! it runs a local detection over all `B·N` devices and quantizes the
//! activity estimates, from which the CU rebuilds a covariance per BS.

mod huffman;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{self, DetectionReport, SolutionVector, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{self, ActivityPattern, CovarianceKind, CovarianceSet, NetworkInstance, SignatureSet};

pub use huffman::{huffman_build_encode, huffman_decode, BitStream, HuffmanCode};

/// Largest hermitian asymmetry accepted by [`quantize_covariance`].
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Bits per alphabet entry charged for a transmitted Huffman table, on top
/// of the `R` bits naming the symbol.
pub const TABLE_BITS_PER_ENTRY: u64 = 6;

/// Side-information bits per covariance payload (two `f64` range bounds).
pub const SIDE_INFO_BITS: u64 = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformQuantizer {
    bits: u8,
    lo: f64,
    hi: f64,
}

impl UniformQuantizer {
    /// `2^bits` cells over `[lo, hi]`. A zero-width range is widened so that
    /// every value still lands in the first cell.
    pub fn new(bits: u8, lo: f64, hi: f64) -> Result<Self> {
        if !(1..=32).contains(&bits) {
            return Err(Error::Config(format!("quantizer bits {bits} outside 1..=32")));
        }
        if !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(Error::Config(format!("invalid quantizer range [{lo}, {hi}]")));
        }
        let hi = if hi == lo { lo + lo.abs().max(1.0) * 1e-9 } else { hi };
        Ok(Self { bits, lo, hi })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.levels() as f64
    }

    /// Cell index, clipping values outside the range.
    pub fn index(&self, x: f64) -> u32 {
        let k = ((x - self.lo) / self.step()).floor();
        k.clamp(0.0, (self.levels() - 1) as f64) as u32
    }

    /// Cell midpoint.
    pub fn reconstruct(&self, index: u32) -> f64 {
        self.lo + (index as f64 + 0.5) * self.step()
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.reconstruct(self.index(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Covariance,
    Indicators,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Covariance => "covariance",
            Scheme::Indicators => "indicators",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Scheme::Covariance => 0,
            Scheme::Indicators => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedPayload {
    pub scheme: Scheme,
    pub bits: u8,
    pub indices: Vec<u32>,
    /// Quantizer range for the covariance scheme.
    pub side_info: Option<(f64, f64)>,
    /// `indices.len() · bits`.
    pub raw_bits: u64,
    /// Huffman-coded body length.
    pub coded_bits: u64,
    /// Alphabet-table overhead of the Huffman code.
    pub table_bits: u64,
}

impl QuantizedPayload {
    fn new(scheme: Scheme, q: &UniformQuantizer, indices: Vec<u32>, side_info: Option<(f64, f64)>) -> Result<Self> {
        let code = HuffmanCode::from_symbols(&indices)?;
        Ok(Self {
            scheme,
            bits: q.bits(),
            raw_bits: indices.len() as u64 * q.bits() as u64,
            coded_bits: code.coded_bits(),
            table_bits: code.alphabet_size() as u64 * (q.bits() as u64 + TABLE_BITS_PER_ENTRY),
            indices,
            side_info,
        })
    }

    pub fn quantizer(&self) -> Result<UniformQuantizer> {
        let (lo, hi) = match self.scheme {
            Scheme::Covariance => self.side_info.ok_or_else(|| Error::Payload("covariance payload without range".into()))?,
            Scheme::Indicators => (0.0, 1.0),
        };
        UniformQuantizer::new(self.bits, lo, hi)
    }

    /// Reconstructed scalars in payload order.
    pub fn values(&self) -> Result<Vec<f64>> {
        let q = self.quantizer()?;
        if self.indices.iter().any(|&i| i as u64 >= q.levels()) {
            return Err(Error::Payload("index exceeds quantizer levels".into()));
        }
        Ok(self.indices.iter().map(|&i| q.reconstruct(i)).collect())
    }

    /// Serialize as
    /// `scheme u8 · R u8 · count u32 · flags u8 · [lo f64 · hi f64] ·
    /// [table] · body`, big-endian. Flag bit 0: Huffman-coded body with
    /// table (`size u32`, then `symbol u32 · length u8` in canonical order,
    /// then `body_bits u64`); bit 1: range present. Bodies are MSB-first.
    pub fn to_bytes(&self, huffman: bool) -> Result<Vec<u8>> {
        let mut out = vec![self.scheme.tag(), self.bits];
        out.extend_from_slice(&u32::try_from(self.indices.len()).map_err(|_| Error::Payload("too many symbols".into()))?.to_be_bytes());
        let flags = u8::from(huffman) | (u8::from(self.side_info.is_some()) << 1);
        out.push(flags);
        if let Some((lo, hi)) = self.side_info {
            out.extend_from_slice(&lo.to_be_bytes());
            out.extend_from_slice(&hi.to_be_bytes());
        }
        let body = if huffman && !self.indices.is_empty() {
            let (code, bits) = huffman_build_encode(&self.indices)?;
            out.extend_from_slice(&(code.alphabet_size() as u32).to_be_bytes());
            for (s, l) in code.symbols.iter().zip(&code.lengths) {
                out.extend_from_slice(&s.to_be_bytes());
                out.push(*l);
            }
            out.extend_from_slice(&bits.len.to_be_bytes());
            bits
        } else {
            let mut bits = BitStream::default();
            for &i in &self.indices {
                bits.push(i as u64, self.bits);
            }
            bits
        };
        out.extend_from_slice(&body.bytes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let scheme = match cur.u8()? {
            0 => Scheme::Covariance,
            1 => Scheme::Indicators,
            t => return Err(Error::Payload(format!("unknown scheme tag {t}"))),
        };
        let bits = cur.u8()?;
        let count = cur.u32()? as usize;
        let flags = cur.u8()?;
        if flags & !0b11 != 0 {
            return Err(Error::Payload(format!("unknown flags {flags:#x}")));
        }
        let side_info = if flags & 2 != 0 { Some((cur.f64()?, cur.f64()?)) } else { None };
        let q = match scheme {
            Scheme::Covariance => {
                let (lo, hi) = side_info.ok_or_else(|| Error::Payload("covariance payload without range".into()))?;
                UniformQuantizer::new(bits, lo, hi)?
            }
            Scheme::Indicators => UniformQuantizer::new(bits, 0.0, 1.0)?,
        };
        let indices = if flags & 1 != 0 && count > 0 {
            let size = cur.u32()? as usize;
            let pairs = (0..size).map(|_| Ok((cur.u32()?, cur.u8()?))).collect::<Result<Vec<_>>>()?;
            let code = HuffmanCode::from_lengths(&pairs)?;
            let len = cur.u64()?;
            let body = cur.take(len.div_ceil(8) as usize)?;
            let symbols = code.decode(&BitStream { bytes: body.to_vec(), len })?;
            if symbols.len() != count {
                return Err(Error::Payload(format!("decoded {} symbols, header says {count}", symbols.len())));
            }
            symbols
        } else {
            let len = count as u64 * bits as u64;
            let body = BitStream { bytes: cur.take(len.div_ceil(8) as usize)?.to_vec(), len };
            (0..count as u64)
                .map(|k| (0..bits as u64).fold(0u32, |acc, b| (acc << 1) | u32::from(body.bit(k * bits as u64 + b))))
                .collect()
        };
        if cur.pos != bytes.len() {
            return Err(Error::Payload("trailing bytes".into()));
        }
        if indices.iter().any(|&i| i as u64 >= q.levels()) {
            return Err(Error::Payload("index exceeds quantizer levels".into()));
        }
        QuantizedPayload::new(scheme, &q, indices, side_info)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Payload("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Diagonal (real parts), then the strict upper triangle row by row as
/// `re, im` pairs: `L²` reals.
pub fn pack_hermitian(m: &CMat) -> Vec<f64> {
    let l = m.nrows();
    let mut out = Vec::with_capacity(l * l);
    out.extend((0..l).map(|i| m[(i, i)].re));
    for i in 0..l {
        for j in i + 1..l {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

/// Inverse of [`pack_hermitian`].
pub fn unpack_hermitian(v: &[f64]) -> Result<CMat> {
    let l = (v.len() as f64).sqrt().round() as usize;
    if l * l != v.len() || l == 0 {
        return Err(Error::Payload(format!("{} scalars do not form a covariance", v.len())));
    }
    let mut m = CMat::zeros(l, l);
    for i in 0..l {
        m[(i, i)] = v[i].into();
    }
    let mut k = l;
    for i in 0..l {
        for j in i + 1..l {
            let z = num_complex::Complex64::new(v[k], v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    Ok(m)
}

/// Quantize with the range set to the min and max of the packed scalars.
pub fn quantize_covariance(sigma: &CMat, bits: u8) -> Result<QuantizedPayload> {
    let v = pack_checked(sigma)?;
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    quantize_packed(&v, bits, lo, hi)
}

/// Quantize over a caller-chosen range; values outside it are clipped.
pub fn quantize_covariance_in_range(sigma: &CMat, bits: u8, lo: f64, hi: f64) -> Result<QuantizedPayload> {
    quantize_packed(&pack_checked(sigma)?, bits, lo, hi)
}

fn pack_checked(sigma: &CMat) -> Result<Vec<f64>> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::Shape(format!("covariance is {}×{}", sigma.nrows(), sigma.ncols())));
    }
    let asym = linalg::relative_asymmetry(sigma);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    Ok(pack_hermitian(sigma))
}

fn quantize_packed(v: &[f64], bits: u8, lo: f64, hi: f64) -> Result<QuantizedPayload> {
    let q = UniformQuantizer::new(bits, lo, hi)?;
    let indices = v.iter().map(|&x| q.index(x)).collect();
    let (lo, hi) = q.range();
    QuantizedPayload::new(Scheme::Covariance, &q, indices, Some((lo, hi)))
}

pub fn dequantize_covariance(payload: &QuantizedPayload) -> Result<CMat> {
    if payload.scheme != Scheme::Covariance {
        return Err(Error::Payload("not a covariance payload".into()));
    }
    unpack_hermitian(&payload.values()?)
}

/// Indicators on the fixed range `[0, 1]`.
pub fn quantize_indicators(values: &[f64], bits: u8) -> Result<QuantizedPayload> {
    if let Some(&x) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::OutOfRange { value: x, lo: 0.0, hi: 1.0 });
    }
    let q = UniformQuantizer::new(bits, 0.0, 1.0)?;
    QuantizedPayload::new(Scheme::Indicators, &q, values.iter().map(|&x| q.index(x)).collect(), None)
}

pub fn dequantize_indicators(payload: &QuantizedPayload) -> Result<Vec<f64>> {
    if payload.scheme != Scheme::Indicators {
        return Err(Error::Payload("not an indicator payload".into()));
    }
    payload.values()
}

/// `Σ̄_b = Σ_j S_j diag(ā^b_j) G_bj S_j^H + σ² I` from the indicators BS `b`
/// sent (one vector of `B·N` values per BS).
pub fn reconstruct_covariances(
    indicators: &[Vec<f64>],
    sigs: &SignatureSet,
    net: &NetworkInstance,
    noise_var: f64,
) -> Result<CovarianceSet> {
    if indicators.len() != net.cells() {
        return Err(Error::Payload(format!("{} indicator vectors for {} BSs", indicators.len(), net.cells())));
    }
    let mats = indicators
        .iter()
        .enumerate()
        .map(|(b, a)| model::model_covariance(net, sigs, a, b, noise_var))
        .collect::<Result<_>>()?;
    Ok(CovarianceSet { kind: CovarianceKind::Reconstructed, noise_var, mats })
}

/// Bits over all BSs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BitAccount {
    pub raw_bits: u64,
    pub coded_bits: u64,
    pub table_bits: u64,
    pub side_info_bits: u64,
}

impl BitAccount {
    fn add(&mut self, p: &QuantizedPayload) {
        self.raw_bits += p.raw_bits;
        self.coded_bits += p.coded_bits;
        self.table_bits += p.table_bits;
        if p.side_info.is_some() {
            self.side_info_bits += SIDE_INFO_BITS;
        }
    }
}

#[derive(Clone, Debug)]
pub struct FronthaulOutcome {
    pub solution: SolutionVector,
    pub report: DetectionReport,
    pub bits: BitAccount,
}

/// One network realization as seen by the BSs.
#[derive(Clone, Copy, Debug)]
pub struct FronthaulInstance<'a> {
    pub cov: &'a CovarianceSet,
    pub sigs: &'a SignatureSet,
    pub net: &'a NetworkInstance,
    pub truth: &'a ActivityPattern,
    /// Preliminary detection only covers devices within this distance of
    /// the BS; all devices when `None`.
    pub neighbor_radius_m: Option<f64>,
}

/// Preliminary known-fading detection of all `B·N` devices at every BS from
/// its own covariance.
pub fn local_estimates(inst: &FronthaulInstance, opts: &SolverOptions) -> Result<Vec<Vec<f64>>> {
    (0..inst.net.cells())
        .into_par_iter()
        .map(|b| {
            let o = opts.with_seed(opts.seed ^ (0x9e37_79b9 * (b as u64 + 1)));
            let sol = detect::local_detect_within(
                &inst.cov.mats[b],
                inst.sigs,
                inst.net,
                b,
                inst.cov.noise_var,
                inst.neighbor_radius_m,
                &o,
            )?;
            Ok(sol.values)
        })
        .collect()
}

/// What the CU receives and detects from, for one scheme and bit width.
/// `local` is required for the indicator scheme (see [`local_estimates`]).
pub fn fronthaul_covariances(
    scheme: Scheme,
    bits: Option<u8>,
    inst: &FronthaulInstance,
    local: Option<&[Vec<f64>]>,
) -> Result<(CovarianceSet, BitAccount)> {
    let mut account = BitAccount::default();
    let set = match scheme {
        Scheme::Covariance => {
            let mats = match bits {
                None => inst.cov.mats.clone(),
                Some(r) => {
                    let payloads = inst.cov.mats.iter().map(|m| quantize_covariance(m, r)).collect::<Result<Vec<_>>>()?;
                    payloads.iter().for_each(|p| account.add(p));
                    payloads.iter().map(dequantize_covariance).collect::<Result<_>>()?
                }
            };
            CovarianceSet { kind: inst.cov.kind, noise_var: inst.cov.noise_var, mats }
        }
        Scheme::Indicators => {
            let local = local.ok_or_else(|| Error::Config("indicator scheme needs local estimates".into()))?;
            let sent = match bits {
                None => local.to_vec(),
                Some(r) => {
                    let payloads = local.iter().map(|a| quantize_indicators(a, r)).collect::<Result<Vec<_>>>()?;
                    payloads.iter().for_each(|p| account.add(p));
                    payloads.iter().map(dequantize_indicators).collect::<Result<_>>()?
                }
            };
            reconstruct_covariances(&sent, inst.sigs, inst.net, inst.cov.noise_var)?
        }
    };
    Ok((set, account))
}

/// Full pipeline for one scheme. `bits = None` skips quantization.
pub fn detect_with_fronthaul(
    scheme: Scheme,
    bits: Option<u8>,
    inst: &FronthaulInstance,
    opts: &SolverOptions,
) -> Result<FronthaulOutcome> {
    let local = match scheme {
        Scheme::Indicators => Some(local_estimates(inst, opts)?),
        Scheme::Covariance => None,
    };
    let (cu_input, bits) = fronthaul_covariances(scheme, bits, inst, local.as_deref())?;
    let solution = detect::solve_multicell_coop(&cu_input, inst.sigs, inst.net, opts)?;
    let report = detect::equal_error_threshold(&solution.values, &inst.truth.flat())?;
    Ok(FronthaulOutcome { solution, report, bits })
}

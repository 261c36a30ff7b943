//! Canonical Huffman coding over `u32` symbols, MSB-first bitstreams.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanCode {
    /// Symbols in canonical order: by code length, then by value.
    pub symbols: Vec<u32>,
    pub lengths: Vec<u8>,
    pub codes: Vec<u64>,
    /// Empirical count of each symbol, in the same order (zero when the code
    /// was rebuilt from a table).
    pub counts: Vec<u64>,
}

/// A bit sequence packed MSB-first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitStream {
    pub bytes: Vec<u8>,
    pub len: u64,
}

impl BitStream {
    pub fn push(&mut self, code: u64, width: u8) {
        for k in (0..width).rev() {
            let bit = (code >> k) & 1 == 1;
            if self.len % 8 == 0 {
                self.bytes.push(0);
            }
            if bit {
                *self.bytes.last_mut().expect("pushed above") |= 0x80 >> (self.len % 8);
            }
            self.len += 1;
        }
    }

    pub fn bit(&self, i: u64) -> bool {
        self.bytes[(i / 8) as usize] & (0x80 >> (i % 8)) != 0
    }
}

/// Code lengths for the given histogram. A single symbol gets length 1.
fn code_lengths(hist: &BTreeMap<u32, u64>) -> Vec<(u32, u8)> {
    if hist.len() == 1 {
        return vec![(*hist.keys().next().expect("one symbol"), 1)];
    }
    // nodes: leaves 0..n in symbol order, then internal nodes in creation order
    let leaves: Vec<u32> = hist.keys().copied().collect();
    let mut parent: Vec<usize> = vec![usize::MAX; leaves.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        hist.values().enumerate().map(|(i, &c)| Reverse((c, i))).collect();
    while heap.len() > 1 {
        let Reverse((ca, a)) = heap.pop().expect("len > 1");
        let Reverse((cb, b)) = heap.pop().expect("len > 1");
        let id = parent.len();
        parent.push(usize::MAX);
        parent[a] = id;
        parent[b] = id;
        heap.push(Reverse((ca + cb, id)));
    }
    leaves
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut depth = 0u8;
            let mut node = i;
            while parent[node] != usize::MAX {
                node = parent[node];
                depth += 1;
            }
            (s, depth)
        })
        .collect()
}

impl HuffmanCode {
    pub fn from_histogram(hist: &BTreeMap<u32, u64>) -> Result<Self> {
        if hist.is_empty() {
            return Err(Error::Payload("empty alphabet".into()));
        }
        let lengths = code_lengths(hist);
        let mut code = Self::from_lengths(&lengths)?;
        code.counts = code.symbols.iter().map(|s| hist[s]).collect();
        Ok(code)
    }

    pub fn from_symbols(symbols: &[u32]) -> Result<Self> {
        let mut hist = BTreeMap::new();
        for &s in symbols {
            *hist.entry(s).or_insert(0u64) += 1;
        }
        Self::from_histogram(&hist)
    }

    /// Canonical code from `(symbol, length)` pairs.
    pub fn from_lengths(pairs: &[(u32, u8)]) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_by_key(|&(s, l)| (l, s));
        if sorted.iter().any(|&(_, l)| l == 0 || l > 64) {
            return Err(Error::Payload("code length outside 1..=64".into()));
        }
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Payload("duplicate symbol in code table".into()));
        }
        let kraft: f64 = sorted.iter().map(|&(_, l)| 0.5f64.powi(l as i32)).sum();
        if kraft > 1.0 + 1e-12 {
            return Err(Error::Payload(format!("code lengths violate Kraft: {kraft}")));
        }
        let mut codes = Vec::with_capacity(sorted.len());
        let mut next = 0u64;
        let mut prev_len = sorted[0].1;
        for (k, &(_, l)) in sorted.iter().enumerate() {
            if k > 0 {
                next = (next + 1) << (l - prev_len);
            }
            codes.push(next);
            prev_len = l;
        }
        Ok(Self {
            symbols: sorted.iter().map(|p| p.0).collect(),
            lengths: sorted.iter().map(|p| p.1).collect(),
            codes,
            counts: vec![0; sorted.len()],
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum()
    }

    pub fn length_of(&self, symbol: u32) -> Option<u8> {
        self.symbols.iter().position(|&s| s == symbol).map(|i| self.lengths[i])
    }

    /// Total encoded length of the histogram the code was built from.
    pub fn coded_bits(&self) -> u64 {
        self.counts.iter().zip(&self.lengths).map(|(&c, &l)| c * l as u64).sum()
    }

    pub fn encode(&self, symbols: &[u32]) -> Result<BitStream> {
        let index: BTreeMap<u32, usize> = self.symbols.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut out = BitStream::default();
        for s in symbols {
            let &i = index.get(s).ok_or_else(|| Error::Payload(format!("symbol {s} not in code")))?;
            out.push(self.codes[i], self.lengths[i]);
        }
        Ok(out)
    }

    pub fn decode(&self, bits: &BitStream) -> Result<Vec<u32>> {
        let lookup: BTreeMap<(u8, u64), u32> =
            (0..self.symbols.len()).map(|i| ((self.lengths[i], self.codes[i]), self.symbols[i])).collect();
        let max_len = self.lengths.iter().copied().max().unwrap_or(0);
        let mut out = Vec::new();
        let (mut acc, mut width) = (0u64, 0u8);
        for i in 0..bits.len {
            acc = (acc << 1) | u64::from(bits.bit(i));
            width += 1;
            if let Some(&s) = lookup.get(&(width, acc)) {
                out.push(s);
                acc = 0;
                width = 0;
            } else if width >= max_len {
                return Err(Error::Payload(format!("invalid codeword at bit {i}")));
            }
        }
        if width != 0 {
            return Err(Error::Payload("bitstream ends inside a codeword".into()));
        }
        Ok(out)
    }
}

/// Build the code for `symbols` and encode them.
pub fn huffman_build_encode(symbols: &[u32]) -> Result<(HuffmanCode, BitStream)> {
    let code = HuffmanCode::from_symbols(symbols)?;
    let bits = code.encode(symbols)?;
    Ok((code, bits))
}

pub fn huffman_decode(code: &HuffmanCode, bits: &BitStream) -> Result<Vec<u32>> {
    code.decode(bits)
}

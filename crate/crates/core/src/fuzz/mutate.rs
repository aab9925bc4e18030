//! Deterministic and havoc mutation stages.

use rand::Rng;

/// Largest delta used by the arithmetic stages.
pub const ARITH_MAX: u8 = 35;
pub const MAX_INPUT_LEN: usize = 4096;
/// Values substituted by the interesting-value stages, at every width that
/// can represent them.
pub const INTERESTING: [i64; 17] =
    [0, 1, -1, 16, 32, 64, 100, 127, -128, 255, 256, 512, 1000, 1024, 4096, 32767, -32768];

fn fits(v: i64, width: usize) -> bool {
    match width {
        1 => (-128..=255).contains(&v),
        2 => (-32768..=65535).contains(&v),
        _ => true,
    }
}

fn interesting(width: usize) -> impl Iterator<Item = i64> {
    INTERESTING.into_iter().filter(move |&v| fits(v, width))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetStage {
    Flip1,
    Flip2,
    Flip4,
    ByteFlip1,
    ByteFlip2,
    ByteFlip4,
    Arith8,
    Arith16,
    Arith32,
    Interest8,
    Interest16,
    Interest32,
}

impl DetStage {
    pub const ORDER: [DetStage; 12] = [
        DetStage::Flip1,
        DetStage::Flip2,
        DetStage::Flip4,
        DetStage::ByteFlip1,
        DetStage::ByteFlip2,
        DetStage::ByteFlip4,
        DetStage::Arith8,
        DetStage::Arith16,
        DetStage::Arith32,
        DetStage::Interest8,
        DetStage::Interest16,
        DetStage::Interest32,
    ];

    /// Bytes touched by one mutation (bit stages: bits).
    pub fn width(self) -> usize {
        match self {
            DetStage::Flip1 | DetStage::ByteFlip1 | DetStage::Arith8 | DetStage::Interest8 => 1,
            DetStage::Flip2 | DetStage::ByteFlip2 | DetStage::Arith16 | DetStage::Interest16 => 2,
            DetStage::Flip4 | DetStage::ByteFlip4 | DetStage::Arith32 | DetStage::Interest32 => 4,
        }
    }

    /// Mutations per position for the multi-byte stages.
    fn variants(self) -> usize {
        let w = self.width();
        match self {
            DetStage::Arith8 => 2 * ARITH_MAX as usize,
            DetStage::Arith16 | DetStage::Arith32 => 4 * ARITH_MAX as usize,
            DetStage::Interest8 => interesting(1).count(),
            DetStage::Interest16 | DetStage::Interest32 => 2 * interesting(w).count(),
            _ => 1,
        }
    }

    /// Number of outputs this stage yields for an input of `len` bytes.
    pub fn count(self, len: usize) -> usize {
        let w = self.width();
        match self {
            DetStage::Flip1 | DetStage::Flip2 | DetStage::Flip4 => (8 * len + 1).saturating_sub(w),
            _ => (len + 1).saturating_sub(w) * self.variants(),
        }
    }

    /// First byte touched by output `index`.
    pub fn position(self, index: usize) -> usize {
        match self {
            DetStage::Flip1 | DetStage::Flip2 | DetStage::Flip4 => index / 8,
            _ => index / self.variants(),
        }
    }

    /// Output `index` of this stage applied to `input`.
    pub fn mutate(self, input: &[u8], index: usize) -> Vec<u8> {
        let mut out = input.to_vec();
        self.apply(&mut out, index);
        out
    }

    fn apply(self, buf: &mut [u8], i: usize) {
        let w = self.width();
        match self {
            DetStage::Flip1 | DetStage::Flip2 | DetStage::Flip4 => {
                for bit in i..i + w {
                    buf[bit / 8] ^= 0x80 >> (bit % 8);
                }
            }
            DetStage::ByteFlip1 | DetStage::ByteFlip2 | DetStage::ByteFlip4 => {
                buf[i..i + w].iter_mut().for_each(|b| *b ^= 0xff);
            }
            DetStage::Arith8 => {
                let (pos, v) = (i / self.variants(), i % self.variants());
                let delta = (v / 2) as u8 + 1;
                buf[pos] = if v % 2 == 0 { buf[pos].wrapping_add(delta) } else { buf[pos].wrapping_sub(delta) };
            }
            DetStage::Arith16 | DetStage::Arith32 => {
                let (pos, v) = (i / self.variants(), i % self.variants());
                let delta = (v / 4) as u64 + 1;
                let sub = v % 2 == 1;
                let big = (v / 2) % 2 == 1;
                let cur = read(&buf[pos..pos + w], big);
                let next = if sub { cur.wrapping_sub(delta) } else { cur.wrapping_add(delta) };
                write(&mut buf[pos..pos + w], next, big);
            }
            DetStage::Interest8 => {
                let (pos, v) = (i / self.variants(), i % self.variants());
                buf[pos] = interesting(1).nth(v).expect("index within stage") as u8;
            }
            DetStage::Interest16 | DetStage::Interest32 => {
                let (pos, v) = (i / self.variants(), i % self.variants());
                let value = interesting(w).nth(v / 2).expect("index within stage");
                write(&mut buf[pos..pos + w], value as u64, v % 2 == 1);
            }
        }
    }
}

fn read(bytes: &[u8], big_endian: bool) -> u64 {
    let it = bytes.iter().map(|&b| b as u64);
    if big_endian {
        it.fold(0, |acc, b| (acc << 8) | b)
    } else {
        it.rev().fold(0, |acc, b| (acc << 8) | b)
    }
}

fn write(bytes: &mut [u8], value: u64, big_endian: bool) {
    let n = bytes.len();
    for (k, b) in bytes.iter_mut().enumerate() {
        let shift = if big_endian { 8 * (n - 1 - k) } else { 8 * k };
        *b = (value >> shift) as u8;
    }
}

/// Iterator over every deterministic mutation of an input, stage by stage.
#[derive(Debug, Clone)]
pub struct Deterministic {
    input: Vec<u8>,
    stage: usize,
    index: usize,
}

impl Iterator for Deterministic {
    type Item = (DetStage, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(&stage) = DetStage::ORDER.get(self.stage) {
            if self.index < stage.count(self.input.len()) {
                let out = stage.mutate(&self.input, self.index);
                self.index += 1;
                return Some((stage, out));
            }
            self.stage += 1;
            self.index = 0;
        }
        None
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let len = self.input.len();
        let rest: usize = DetStage::ORDER.iter().skip(self.stage).map(|s| s.count(len)).sum();
        let n = rest.saturating_sub(self.index);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Deterministic {}

pub fn mutate_deterministic(input: &[u8]) -> Deterministic {
    Deterministic { input: input.to_vec(), stage: 0, index: 0 }
}

/// One havoc output: 2^k stacked random edits, k uniform in 1..=6.
pub fn havoc_one<R: Rng + ?Sized>(input: &[u8], rng: &mut R) -> Vec<u8> {
    let mut buf = input.to_vec();
    if buf.is_empty() {
        buf.push(rng.random());
    }
    buf.truncate(MAX_INPUT_LEN);
    let stack = 1usize << rng.random_range(1..=6);
    for _ in 0..stack {
        let len = buf.len();
        match rng.random_range(0..7) {
            0 => {
                let bit = rng.random_range(0..len * 8);
                buf[bit / 8] ^= 0x80 >> (bit % 8);
            }
            1 => {
                let pos = rng.random_range(0..len);
                buf[pos] = rng.random();
            }
            2 => {
                let pos = rng.random_range(0..len);
                let delta = rng.random_range(1..=ARITH_MAX);
                buf[pos] = if rng.random() { buf[pos].wrapping_add(delta) } else { buf[pos].wrapping_sub(delta) };
            }
            3 => {
                let pos = rng.random_range(0..len);
                let n = interesting(1).count();
                buf[pos] = interesting(1).nth(rng.random_range(0..n)).expect("in range") as u8;
            }
            4 => {
                if len > 1 {
                    let n = rng.random_range(1..=(len - 1).min(16));
                    let start = rng.random_range(0..=len - n);
                    buf.drain(start..start + n);
                }
            }
            5 => {
                let n = rng.random_range(1..=len.min(16));
                if len + n <= MAX_INPUT_LEN {
                    let from = rng.random_range(0..=len - n);
                    let to = rng.random_range(0..=len);
                    let mut chunk = [0u8; 16];
                    chunk[..n].copy_from_slice(&buf[from..from + n]);
                    buf.splice(to..to, chunk[..n].iter().copied());
                }
            }
            _ => {
                let n = rng.random_range(1..=8usize);
                if len + n <= MAX_INPUT_LEN {
                    let to = rng.random_range(0..=len);
                    let mut chunk = [0u8; 8];
                    chunk[..n].iter_mut().for_each(|c| *c = rng.random());
                    buf.splice(to..to, chunk[..n].iter().copied());
                }
            }
        }
    }
    buf
}

pub fn mutate_havoc<R: Rng + ?Sized>(input: &[u8], iterations: usize, rng: &mut R) -> Vec<Vec<u8>> {
    (0..iterations).map(|_| havoc_one(input, rng)).collect()
}

//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, domain, major, minor)`, so
//! generation can run in any order or in parallel and still reproduce the
//! same values bit-for-bit. The 128-bit Philox counter is laid out as
//! `[minor, major_lo, major_hi, domain]` and the 64-bit key is the seed.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Draw domains. Distinct domains never share counters.
pub mod domain {
    pub const THICKNESS: u32 = 1;
    pub const SPLIT: u32 = 2;
    pub const INIT: u32 = 3;
    pub const SHUFFLE: u32 = 4;
    pub const GA_INIT: u32 = 5;
    pub const GA_BREED: u32 = 6;
    pub const TEST: u32 = 0xFFFF;
}

/// One Philox4x32 block with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(ctr[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(ctr[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: [seed as u32, (seed >> 32) as u32] }
    }

    pub fn block(&self, domain: u32, major: u64, minor: u32) -> [u32; 4] {
        philox4x32_10([minor, major as u32, (major >> 32) as u32, domain], self.key)
    }

    pub fn u64_at(&self, domain: u32, major: u64, minor: u32) -> u64 {
        let b = self.block(domain, major, minor);
        u64::from(b[0]) | (u64::from(b[1]) << 32)
    }

    /// Uniform integer in `0..n` by 64x64 -> 128 multiply-shift; the bias is
    /// below `n / 2^64`.
    pub fn below_at(&self, domain: u32, major: u64, minor: u32, n: u64) -> u64 {
        below(self.u64_at(domain, major, minor), n)
    }

    /// A sequential stream over `minor = 0, 1, 2, ...` for a fixed
    /// `(domain, major)`, rolling into the next major every 2^32 draws.
    pub fn stream(&self, domain: u32, major: u64) -> RngStream {
        RngStream { rng: *self, domain, major, minor: 0 }
    }
}

fn below(x: u64, n: u64) -> u64 {
    ((u128::from(x) * u128::from(n)) >> 64) as u64
}

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: CounterRng,
    domain: u32,
    major: u64,
    minor: u32,
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        let v = self.rng.u64_at(self.domain, self.major, self.minor);
        self.minor = self.minor.wrapping_add(1);
        if self.minor == 0 {
            self.major = self.major.wrapping_add(1 << 40);
        }
        v
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        below(self.next_u64(), n)
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}

/// Seeded permutation of `0..n`.
pub fn permutation(seed: u64, domain: u32, major: u64, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    CounterRng::new(seed).stream(domain, major).shuffle(&mut idx);
    idx
}

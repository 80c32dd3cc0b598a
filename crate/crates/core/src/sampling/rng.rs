//! Counter-based random numbers.
//!
//! Every uniform is a pure function of a seed and a label tuple
//! `(purpose, draw, row, counter)`, computed with the Philox4x32-10 block
//! function. Results do not depend on evaluation order, so any (draw, row)
//! cell can be evaluated on any worker.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 block function with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// 32-bit FNV-1a; maps a purpose label to its counter word.
pub fn purpose_tag(label: &str) -> u32 {
    let mut h: u32 = 0x811C_9DC5;
    for b in label.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngKey {
    pub seed: u64,
    pub purpose: u32,
    pub draw: u32,
    pub row: u32,
    pub counter: u32,
}

impl RngKey {
    pub fn new(seed: u64, purpose: &str, draw: u32, row: u32) -> Self {
        RngKey { seed, purpose: purpose_tag(purpose), draw, row, counter: 0 }
    }

    pub fn with_counter(self, counter: u32) -> Self {
        RngKey { counter, ..self }
    }

    fn block(&self) -> [u32; 4] {
        philox4x32_10([self.counter, self.row, self.draw, self.purpose], [self.seed as u32, (self.seed >> 32) as u32])
    }

    /// A stream of uniforms starting at this key's counter.
    pub fn stream(self) -> RngStream {
        RngStream { key: self }
    }
}

/// Uniform in `[0, 1)` with 53 random bits.
pub fn rng_uniform(key: RngKey) -> f64 {
    let out = key.block();
    let bits = ((u64::from(out[0]) << 32) | u64::from(out[1])) >> 11;
    bits as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Successive uniforms obtained by bumping the counter word.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: RngKey,
}

impl RngStream {
    pub fn next_uniform(&mut self) -> f64 {
        let u = rng_uniform(self.key);
        self.key.counter = self.key.counter.wrapping_add(1);
        u
    }

    /// Uniform in `(0, 1]`, safe as a logarithm argument.
    pub fn next_open_uniform(&mut self) -> f64 {
        1.0 - self.next_uniform()
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_open_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn key(&self) -> RngKey {
        self.key
    }
}

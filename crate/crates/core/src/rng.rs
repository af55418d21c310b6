//! Counter-based random numbers.
//!
//! Every random draw in the simulator is a pure function of
//! `(master seed, purpose, patient id, decision index)`. The generator is
//! Philox4x32-10: the 128-bit counter carries the patient id and the decision
//! index, the 64-bit key carries the seed mixed with the purpose tag. Adding
//! patients, or adding draws for one decision, never shifts another draw.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
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

/// SplitMix64 finalizer, used for seed derivation only.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for replicate `index` of a run with `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Independent families of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    Allocation = 1,
    Outcome = 2,
}

/// A keyed counter-based stream. Cheap to copy; holds no mutable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        let k = splitmix64(seed ^ (u64::from(purpose as u32) << 56));
        Self {
            key: [k as u32, (k >> 32) as u32],
        }
    }

    /// Raw 128 bits for `(id, decision, block)`.
    #[inline]
    pub fn block(&self, id: u64, decision: u32, block: u32) -> [u32; 4] {
        philox4x32_10([id as u32, (id >> 32) as u32, decision, block], self.key)
    }

    /// Two uniforms in `[0, 1)` with 53 bits of resolution each.
    #[inline]
    pub fn uniforms(&self, id: u64, decision: u32, block: u32) -> [f64; 2] {
        let b = self.block(id, decision, block);
        let a = (u64::from(b[0]) << 32) | u64::from(b[1]);
        let c = (u64::from(b[2]) << 32) | u64::from(b[3]);
        [to_unit(a), to_unit(c)]
    }

    #[inline]
    pub fn uniform(&self, id: u64, decision: u32) -> f64 {
        self.uniforms(id, decision, 0)[0]
    }

    /// `true` with probability `p`; exact at `p = 0` and `p = 1`.
    #[inline]
    pub fn bernoulli(&self, id: u64, decision: u32, p: f64) -> bool {
        self.uniform(id, decision) < p
    }

    /// Standard normal draw via Box-Muller on one 128-bit block.
    #[inline]
    pub fn standard_normal(&self, id: u64, decision: u32) -> f64 {
        let [u1, u2] = self.uniforms(id, decision, 0);
        // 1 - u1 lies in (0, 1], so the log is finite.
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        r * (std::f64::consts::TAU * u2).cos()
    }
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

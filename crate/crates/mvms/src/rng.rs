//! Counter-based random streams for reproducible parallel Monte Carlo.
//!
//! Every random draw in the toolkit is addressed, not sequenced: a draw is a
//! pure function of `(master seed, channel, particle, slot, block)`. This is
//! what makes simulations bit-identical across thread counts and lets a seed
//! ledger regenerate any increment after the fact.
//!
//! The block function is Philox4x64-10 (verified against the NumPy
//! implementation), mapped to normals with a fixed-consumption Box-Muller
//! transform: one block yields exactly four standard normals.

/// Philox4x64 multipliers and Weyl constants.
const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// One 10-round Philox4x64 block: (key, counter) -> 4 pseudo-random words.
#[inline]
pub fn philox4x64(key: [u64; 2], counter: [u64; 4]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// u64 -> uniform in (0, 1]; the +1 keeps ln(u) finite in Box-Muller.
#[inline(always)]
fn to_open_unit(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// u64 -> uniform in [0, 1).
#[inline(always)]
fn to_half_open_unit(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Four standard normals from one Philox block via Box-Muller.
#[inline]
pub fn block_normals(key: [u64; 2], counter: [u64; 4]) -> [f64; 4] {
    let w = philox4x64(key, counter);
    let (z0, z1) = box_muller(w[0], w[1]);
    let (z2, z3) = box_muller(w[2], w[3]);
    [z0, z1, z2, z3]
}

#[inline(always)]
fn box_muller(wa: u64, wb: u64) -> (f64, f64) {
    let u1 = to_open_unit(wa);
    let u2 = to_half_open_unit(wb);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Logical noise channels. The channel id is baked into the stream key, so
/// channels never collide even for the same (particle, slot).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Channel {
    /// Brownian motion driving the slow equations (B).
    SlowB,
    /// Brownian motion shared by the two fast equations (W).
    FastW,
    /// Extra Brownian motion of the fluctuation limit equation (V).
    LimitV,
    /// Initial draws for the slow process.
    InitRho,
    /// Initial draws for the fast process.
    InitXi,
    /// Assumption-audit probe stream.
    Probe,
    /// Bootstrap resampling stream.
    Bootstrap,
    /// Scratch stream for tests and oracles.
    Scratch,
}

impl Channel {
    fn id(self) -> u64 {
        match self {
            Channel::SlowB => 1,
            Channel::FastW => 2,
            Channel::LimitV => 3,
            Channel::InitRho => 4,
            Channel::InitXi => 5,
            Channel::Probe => 6,
            Channel::Bootstrap => 7,
            Channel::Scratch => 8,
        }
    }
}

/// Addressed source of standard normals for one (seed, channel) stream.
///
/// `fill_normals(particle, slot, out)` is pure: any caller holding the same
/// key regenerates the same values in any order, from any thread.
#[derive(Clone, Copy, Debug)]
pub struct NoiseStream {
    key: [u64; 2],
}

impl NoiseStream {
    pub fn new(master_seed: u64, channel: Channel) -> Self {
        // Key lane 1 mixes the channel so streams are independent blocks.
        NoiseStream {
            key: [master_seed, channel.id().wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5851_F42D_4C95_7F2D],
        }
    }

    /// Standard normals addressed by (particle, slot), filling `out`.
    /// Consecutive blocks of four normals use counter lane 3.
    #[inline]
    pub fn fill_normals(&self, particle: u64, slot: u64, out: &mut [f64]) {
        let mut i = 0;
        let mut block = 0u64;
        while i < out.len() {
            let z = block_normals(self.key, [particle, slot, 0, block]);
            let take = (out.len() - i).min(4);
            out[i..i + take].copy_from_slice(&z[..take]);
            i += take;
            block += 1;
        }
    }

    /// Single standard normal at (particle, slot, lane). Lanes 0..4 address
    /// within one block; higher lanes spill into further blocks.
    #[inline]
    pub fn normal(&self, particle: u64, slot: u64, lane: u64) -> f64 {
        let z = block_normals(self.key, [particle, slot, 0, lane / 4]);
        z[(lane % 4) as usize]
    }

    /// Uniform in [0, 1) at (particle, slot, lane 0..4).
    #[inline]
    pub fn uniform(&self, particle: u64, slot: u64, lane: u64) -> f64 {
        let w = philox4x64(self.key, [particle, slot, 1, lane / 4]);
        to_half_open_unit(w[(lane % 4) as usize])
    }

    /// Uniform integer in [0, n) at (particle, slot, lane); n > 0.
    #[inline]
    pub fn below(&self, particle: u64, slot: u64, lane: u64, n: u64) -> u64 {
        let w = philox4x64(self.key, [particle, slot, 2, lane / 4]);
        // Multiply-shift reduction; bias is ~n/2^64, irrelevant at these sizes.
        ((w[(lane % 4) as usize] as u128 * n as u128) >> 64) as u64
    }
}

/// Sequential convenience wrapper over one (stream, particle) lane, for
/// samplers that consume a variable number of draws.
pub struct SubRng {
    stream: NoiseStream,
    particle: u64,
    lane: u64,
}

impl SubRng {
    pub fn new(stream: NoiseStream, particle: u64) -> Self {
        SubRng { stream, particle, lane: 0 }
    }

    pub fn normal(&mut self) -> f64 {
        let z = self.stream.normal(self.particle, 0, self.lane);
        self.lane += 1;
        z
    }

    pub fn uniform(&mut self) -> f64 {
        let u = self.stream.uniform(self.particle, 0, self.lane);
        self.lane += 1;
        u
    }
}

/// Stable 64-bit FNV-1a, used to derive sub-seeds and hash configs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Derive a sub-seed from a master seed and a purpose tag. Deterministic and
/// platform-independent; used so that independent runs inside one experiment
/// own disjoint stream families.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + tag.len());
    buf.extend_from_slice(&master.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    fnv1a64(&buf)
}

//! Counter-based random numbers.
//!
//! Every Gaussian draw used by the simulator is a pure function of
//! `(master seed, l1, l2, step)`, so coordinate streams are independent of
//! evaluation order and thread schedule. The block function is Philox4x32-10;
//! normals come from a 128-layer ziggurat driven by the block outputs.

use std::sync::LazyLock;

const PHILOX_M0: u64 = 0xD251_1F53;
const PHILOX_M1: u64 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Serde format for 64-bit seeds: written as decimal strings, read from
/// strings or integers, since text formats such as TOML cap integers at `i64`.
pub mod seed_format {
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&seed.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = u64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a non-negative integer or decimal string")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
                u64::try_from(v).map_err(|_| E::custom("seed must be non-negative"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
                v.trim().parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Seed of replication `rep` under `master`.
pub fn rep_seed(master: u64, rep: u64) -> u64 {
    mix64(master ^ mix64(rep))
}

#[inline(always)]
fn philox4x32(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (mut c, mut k) = (ctr, key);
    for _ in 0..10 {
        let p0 = c[0] as u64 * PHILOX_M0;
        let p1 = c[2] as u64 * PHILOX_M1;
        c = [
            ((p1 >> 32) as u32) ^ c[1] ^ k[0],
            p1 as u32,
            ((p0 >> 32) as u32) ^ c[3] ^ k[1],
            p0 as u32,
        ];
        k = [k[0].wrapping_add(PHILOX_W0), k[1].wrapping_add(PHILOX_W1)];
    }
    c
}

#[inline(always)]
fn halves(o: [u32; 4]) -> (u64, u64) {
    (
        ((o[0] as u64) << 32) | o[1] as u64,
        ((o[2] as u64) << 32) | o[3] as u64,
    )
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
#[inline(always)]
pub fn open01(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Keyed counter-based generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Philox {
    key: [u32; 2],
}

impl Philox {
    pub fn new(seed: u64) -> Self {
        let k = mix64(seed);
        Self {
            key: [k as u32, (k >> 32) as u32],
        }
    }

    pub fn block(&self, ctr: [u32; 4]) -> [u32; 4] {
        philox4x32(ctr, self.key)
    }

    pub fn u64_pair(&self, ctr: [u32; 4]) -> (u64, u64) {
        halves(self.block(ctr))
    }

    /// Standard normal for stream `(l1, l2)` at counter `step`.
    ///
    /// Streams `2q + 1` and `2q + 2` share the block at counter
    /// `[l1, q, step, 0]`, taking its high and low 64 bits respectively.
    /// Rejections draw further blocks at `[l1, l2, step, attempt]`, attempt >= 1.
    pub fn normal(&self, l1: u32, l2: u32, step: u32) -> f64 {
        let (hi, lo) = self.u64_pair([l1, (l2 - 1) / 2, step, 0]);
        let a = if l2 % 2 == 1 { hi } else { lo };
        let zig = &*ZIG;
        match zig.fast(a) {
            Some(g) => g,
            None => self.normal_slow(zig, a, [l1, l2, step]),
        }
    }

    /// Normals for streams `(l1, 1..=out.len())` at one counter value.
    ///
    /// Bit-identical to calling [`Philox::normal`] per entry; the block
    /// function runs over lanes of counters so the compiler vectorizes it.
    pub fn fill_row(&self, l1: u32, step: u32, out: &mut [f64]) {
        let zig = &*ZIG;
        let len = out.len();
        let blocks = len.div_ceil(2);
        let mut words = [0u64; 2 * LANES];
        let mut q = 0usize;
        while q < blocks {
            let mut c1 = [0u32; LANES];
            for (i, c) in c1.iter_mut().enumerate() {
                *c = (q + i) as u32;
            }
            let o = philox_dispatch([l1; LANES], c1, [step; LANES], self.key);
            for i in 0..LANES {
                let (hi, lo) = halves([o[0][i], o[1][i], o[2][i], o[3][i]]);
                words[2 * i] = hi;
                words[2 * i + 1] = lo;
            }
            let base = 2 * q;
            let chunk = &mut out[base..(base + 2 * LANES).min(len)];
            // fast path for the whole chunk, rejections patched afterwards
            let mut rejected = 0u32;
            for (k, slot) in chunk.iter_mut().enumerate() {
                let (i, u) = Ziggurat::split(words[k]);
                *slot = u * zig.x[i];
                rejected |= ((u.abs() >= zig.ratio[i]) as u32) << k;
            }
            while rejected != 0 {
                let k = rejected.trailing_zeros() as usize;
                chunk[k] = self.normal_slow(zig, words[k], [l1, (base + k) as u32 + 1, step]);
                rejected &= rejected - 1;
            }
            q += LANES;
        }
    }

    #[cold]
    fn normal_slow(&self, zig: &Ziggurat, a: u64, ctr: [u32; 3]) -> f64 {
        let mut a = a;
        let mut attempt = 0u32;
        let mut more = || {
            attempt += 1;
            self.u64_pair([ctr[0], ctr[1], ctr[2], attempt])
        };
        loop {
            if let Some(g) = zig.slow(a, &mut more) {
                return g;
            }
            a = more().0;
            if let Some(g) = zig.fast(a) {
                return g;
            }
        }
    }
}

const LANES: usize = 16;

fn philox_dispatch(c0: [u32; LANES], c1: [u32; LANES], c2: [u32; LANES], key: [u32; 2]) -> [[u32; LANES]; 4] {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { philox_lanes_avx2(c0, c1, c2, [0; LANES], key) };
        }
    }
    philox_lanes(c0, c1, c2, [0; LANES], key)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn philox_lanes_avx2(
    c0: [u32; LANES],
    c1: [u32; LANES],
    c2: [u32; LANES],
    c3: [u32; LANES],
    key: [u32; 2],
) -> [[u32; LANES]; 4] {
    philox_lanes(c0, c1, c2, c3, key)
}

#[inline(always)]
fn philox_lanes(
    mut c0: [u32; LANES],
    mut c1: [u32; LANES],
    mut c2: [u32; LANES],
    mut c3: [u32; LANES],
    key: [u32; 2],
) -> [[u32; LANES]; 4] {
    let (mut k0, mut k1) = (key[0], key[1]);
    for _ in 0..10 {
        for i in 0..LANES {
            let p0 = c0[i] as u64 * PHILOX_M0;
            let p1 = c2[i] as u64 * PHILOX_M1;
            let n0 = ((p1 >> 32) as u32) ^ c1[i] ^ k0;
            let n2 = ((p0 >> 32) as u32) ^ c3[i] ^ k1;
            c1[i] = p1 as u32;
            c3[i] = p0 as u32;
            c0[i] = n0;
            c2[i] = n2;
        }
        k0 = k0.wrapping_add(PHILOX_W0);
        k1 = k1.wrapping_add(PHILOX_W1);
    }
    [c0, c1, c2, c3]
}

const ZIG_LAYERS: usize = 128;
const ZIG_R: f64 = 3.442_619_855_899;
const ZIG_V: f64 = 9.912_563_035_262_17e-3;

struct Ziggurat {
    x: [f64; ZIG_LAYERS + 1],
    ratio: [f64; ZIG_LAYERS],
}

static ZIG: LazyLock<Ziggurat> = LazyLock::new(Ziggurat::build);

impl Ziggurat {
    fn build() -> Self {
        let mut x = [0.0; ZIG_LAYERS + 1];
        let mut f = (-0.5 * ZIG_R * ZIG_R).exp();
        x[0] = ZIG_V / f;
        x[1] = ZIG_R;
        for i in 2..ZIG_LAYERS {
            x[i] = (-2.0 * (ZIG_V / x[i - 1] + f).ln()).sqrt();
            f = (-0.5 * x[i] * x[i]).exp();
        }
        x[ZIG_LAYERS] = 0.0;
        let mut ratio = [0.0; ZIG_LAYERS];
        for i in 0..ZIG_LAYERS {
            ratio[i] = x[i + 1] / x[i];
        }
        Self { x, ratio }
    }

    #[inline(always)]
    fn split(a: u64) -> (usize, f64) {
        ((a & 0x7f) as usize, 2.0 * open01(a) - 1.0)
    }

    #[inline(always)]
    fn fast(&self, a: u64) -> Option<f64> {
        let (i, u) = Self::split(a);
        (u.abs() < self.ratio[i]).then(|| u * self.x[i])
    }

    fn slow(&self, a: u64, more: &mut impl FnMut() -> (u64, u64)) -> Option<f64> {
        let (i, u) = Self::split(a);
        if i == 0 {
            // Marsaglia tail beyond R
            loop {
                let (c, d) = more();
                let xt = open01(c).ln() / ZIG_R;
                let yt = open01(d).ln();
                if -2.0 * yt >= xt * xt {
                    return Some(if u < 0.0 { xt - ZIG_R } else { ZIG_R - xt });
                }
            }
        }
        let x = u * self.x[i];
        let f0 = (-0.5 * (self.x[i] * self.x[i] - x * x)).exp();
        let f1 = (-0.5 * (self.x[i + 1] * self.x[i + 1] - x * x)).exp();
        let w = open01(more().0);
        (f1 + w * (f0 - f1) < 1.0).then_some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answer() {
        // Random123 known-answer vectors for philox4x32-10
        let zero = philox4x32([0, 0, 0, 0], [0, 0]);
        assert_eq!(zero, [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        let ones = philox4x32([u32::MAX; 4], [u32::MAX; 2]);
        assert_eq!(ones, [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]);
        let pi = philox4x32(
            [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
            [0xa409_3822, 0x299f_31d0],
        );
        assert_eq!(pi, [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]);
    }

    #[test]
    fn lanes_match_scalar_block() {
        let key = [0xdead_beef, 0x0123_4567];
        let c1: [u32; LANES] = std::array::from_fn(|i| i as u32 * 7);
        let o = philox_lanes([3; LANES], c1, [9; LANES], [0; LANES], key);
        for i in 0..LANES {
            assert_eq!(philox4x32([3, c1[i], 9, 0], key), [o[0][i], o[1][i], o[2][i], o[3][i]]);
        }
    }

    #[test]
    fn row_fill_matches_scalar_draws() {
        let g = Philox::new(42);
        let mut row = vec![0.0; 3000];
        g.fill_row(7, 11, &mut row);
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v.to_bits(), g.normal(7, j as u32 + 1, 11).to_bits());
        }
    }

    #[test]
    fn normals_have_standard_moments() {
        let g = Philox::new(2024);
        let n = 400_000u32;
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        let mut tail = 0usize;
        for i in 0..n {
            let x = g.normal(i % 977, i / 977 + 1, 3);
            s1 += x;
            s2 += x * x;
            s3 += x * x * x;
            s4 += x * x * x * x;
            if x.abs() > ZIG_R {
                tail += 1;
            }
        }
        let nf = n as f64;
        assert!((s1 / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!((s3 / nf).abs() < 4.0 * (15.0 / nf).sqrt());
        assert!((s4 / nf - 3.0).abs() < 4.0 * (96.0 / nf).sqrt());
        // P(|Z| > R) = 5.76e-4
        let expect = 5.76e-4 * nf;
        assert!((tail as f64 - expect).abs() < 5.0 * expect.sqrt(), "tail {tail}");
    }

    #[test]
    fn normal_cdf_kolmogorov_smirnov() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let g = Philox::new(9);
        let n = 100_000usize;
        let mut xs: Vec<f64> = (0..n).map(|i| g.normal(1, 1, i as u32)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let norm = Normal::new(0.0, 1.0).unwrap();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = norm.cdf(x);
                (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value 1.63 / sqrt(n)
        assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn streams_are_uncorrelated() {
        let g = Philox::new(5);
        let n = 200_000u32;
        let mut c = 0.0;
        for t in 0..n {
            c += g.normal(1, 1, t) * g.normal(1, 2, t);
        }
        assert!((c / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn rep_seeds_differ() {
        let mut seen: Vec<u64> = (0..1000).map(|r| rep_seed(12345, r)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1000);
    }
}

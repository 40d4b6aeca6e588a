//! Deterministic counter-based random numbers for the simulation engine.
//!
//! Every variate is a pure function of (key, index): the key is folded from
//! the run seed, a hash of the generation-relevant cell fields, the
//! replication number, and a stream domain; the index is the coordinate. Any
//! coordinate of any replication can therefore be generated independently,
//! in any order, on any worker — parallel schedules cannot change results,
//! and two cells that share (n, s, signal layout) but differ in prior or
//! procedure see identical noise (common random numbers).
//!
//! The generator is the splitmix64 output permutation applied to a Weyl
//! sequence: z = mix64(key + (j+1)·GOLDEN). Uniforms map the top 53 bits
//! into (0, 1) strictly (offset by half an ulp so 0 and 1 are unreachable);
//! normals invert the exact tail function (a rational quantile start
//! polished by safeguarded Newton on log Φ̄), keeping the simulated tail
//! consistent with the analysis code to full precision.

use crate::stdnorm::upper_tail_inv_unchecked;

pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stream domain for the noise coordinates of a replication.
pub const DOMAIN_NOISE: u64 = 0;
/// Stream domain for signal draws (slab sampling, random signs).
pub const DOMAIN_SIGNAL: u64 = 1;

/// splitmix64 finalizer: a bijective 64-bit mix with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold an ordered list of parts into one stream key.
pub fn derive_key(parts: &[u64]) -> u64 {
    let mut k = 0x243f_6a88_85a3_08d3; // π fraction: fixed, arbitrary
    for &p in parts {
        k = mix64(k ^ mix64(p.wrapping_add(GOLDEN)));
    }
    k
}

/// Raw 64-bit value at position `index` of the stream `key`.
#[inline]
pub fn bits_at(key: u64, index: u64) -> u64 {
    mix64(key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform variate in the open interval (0, 1).
#[inline]
pub fn uniform_at(key: u64, index: u64) -> f64 {
    ((bits_at(key, index) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal variate at position `index` of the stream `key`.
#[inline]
pub fn normal_at(key: u64, index: u64) -> f64 {
    -upper_tail_inv_unchecked(uniform_at(key, index))
}

/// Endless standard normal stream for a bare seed (test and example use).
pub fn normal_stream(seed: u64) -> impl Iterator<Item = f64> {
    let key = derive_key(&[seed]);
    (0u64..).map(move |j| normal_at(key, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix64_known_values() {
        // splitmix64 sequence from seed 0 advances by GOLDEN then mixes;
        // first three outputs are fixed by the reference algorithm.
        let mut state = 0u64;
        let expect = [
            0xe220_a839_7b1d_cdafu64,
            0x6e78_9e6a_a1b9_65f4,
            0x06c4_5d18_8009_454f,
        ];
        for e in expect {
            state = state.wrapping_add(GOLDEN);
            assert_eq!(mix64(state), e);
        }
    }

    #[test]
    fn uniform_bounds_and_determinism() {
        let key = derive_key(&[7, 3, 0]);
        for j in 0..10_000 {
            let u = uniform_at(key, j);
            assert!(u > 0.0 && u < 1.0);
            assert_eq!(u, uniform_at(key, j));
        }
    }

    #[test]
    fn distinct_keys_decorrelate() {
        let a = derive_key(&[1, 2, 3]);
        let b = derive_key(&[1, 2, 4]);
        assert_ne!(a, b);
        let matches = (0..1000).filter(|&j| bits_at(a, j) == bits_at(b, j)).count();
        assert_eq!(matches, 0);
    }

    #[test]
    fn key_folding_is_order_sensitive() {
        assert_ne!(derive_key(&[1, 2]), derive_key(&[2, 1]));
        assert_ne!(derive_key(&[0]), derive_key(&[0, 0]));
    }

    #[test]
    fn normals_have_sane_moments() {
        let key = derive_key(&[99]);
        let n = 200_000u64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for j in 0..n {
            let z = normal_at(key, j);
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // 3.5σ bands: sd(mean) = 1/√n, sd(var) ≈ √(2/n).
        assert!(mean.abs() < 3.5 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.5 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn normal_tail_frequencies() {
        let key = derive_key(&[4242]);
        let n = 400_000u64;
        let over2 = (0..n).filter(|&j| normal_at(key, j) > 2.0).count() as f64;
        let p = over2 / n as f64;
        let expect = crate::stdnorm::upper_tail(2.0);
        let sd = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * sd, "{p} vs {expect}");
    }

    #[test]
    fn stream_matches_indexed_access() {
        let got: Vec<f64> = normal_stream(5).take(8).collect();
        let key = derive_key(&[5]);
        for (j, v) in got.iter().enumerate() {
            assert_eq!(*v, normal_at(key, j as u64));
        }
    }

    #[test]
    #[ignore = "timing probe; run with --release -- --ignored --nocapture"]
    fn draw_cost_breakdown() {
        // Splits the per-draw cost into hashing, quantile inversion, and a
        // bare erfc baseline, so regressions in the hot generation path show
        // up as numbers rather than as mysteriously slow simulations.
        const N: u64 = 10_000_000;
        let key = derive_key(&[1234]);

        let t0 = std::time::Instant::now();
        let mut acc = 0.0f64;
        for j in 0..N {
            acc += uniform_at(key, j);
        }
        let uniform = t0.elapsed();

        let t0 = std::time::Instant::now();
        let mut acc2 = 0.0f64;
        for j in 0..N {
            acc2 += normal_at(key, j);
        }
        let normal = t0.elapsed();

        let t0 = std::time::Instant::now();
        let mut acc3 = 0.0f64;
        for j in 0..N {
            acc3 += libm::erfc(1.0e-7 * j as f64);
        }
        let erfc = t0.elapsed();

        println!("10^7 uniform_at: {uniform:?} (sum {acc})");
        println!("10^7 normal_at:  {normal:?} (sum {acc2})");
        println!("10^7 erfc:       {erfc:?} (sum {acc3})");
    }
}

//! Counter-based random streams.
//!
//! A stream is keyed by `(master_seed, task_id)` and addressed by a draw
//! counter, so any draw can be replayed from its position alone. ChaCha8 is
//! used as the block function: the seed is the key and the task id the
//! 64-bit stream selector.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    task_id: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, task_id: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(master_seed);
        core.set_stream(task_id);
        Self {
            master_seed,
            task_id,
            core,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn task_id(&self) -> u64 {
        self.task_id
    }

    /// Number of 64-bit draws consumed so far.
    pub fn draw_counter(&self) -> u64 {
        (self.core.get_word_pos() / 2) as u64
    }

    /// Repositions the stream so the next draw is draw number `counter`.
    pub fn seek(&mut self, counter: u64) {
        self.core.set_word_pos(counter as u128 * 2);
    }

    /// Independent stream for a sub-task, derived from this stream's key.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(self.master_seed, mix64(self.task_id ^ mix64(index.wrapping_add(1))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    /// Exponential with unit rate.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Quantile of the standard normal distribution, Wichura's AS241 (PPND16).
///
/// Relative accuracy about 1e-16 over (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        133.141_667_891_784_38,
        1971.590_950_306_551_3,
        13731.693_765_509_461,
        45921.953_931_549_87,
        67265.770_927_008_7,
        33430.575_583_588_128,
        2509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5394.196_021_424_751,
        21213.794_301_586_597,
        39307.895_800_092_71,
        28729.085_735_721_943,
        5226.495_278_852_545,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_08,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_9,
        0.026_532_189_526_576_124,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_888,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    let poly = |c: &[f64; 8], r: f64| c.iter().rev().fold(0.0, |acc, &v| acc * r + v);

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = (-(if q < 0.0 { p } else { 1.0 - p }).ln()).sqrt();
    let val = if r <= 5.0 {
        poly(&C, r - 1.6) / poly(&D, r - 1.6)
    } else {
        poly(&E, r - 5.0) / poly(&F, r - 5.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert!(inverse_normal_cdf(0.5).abs() < 1e-15);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.025) + 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inverse_normal_cdf(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    }

    #[test]
    fn replay_from_cursor() {
        let mut a = RngStream::new(7, 3);
        for _ in 0..17 {
            a.next_u64();
        }
        let cursor = a.draw_counter();
        assert_eq!(cursor, 17);
        let ahead: Vec<f64> = (0..5).map(|_| a.normal()).collect();
        let mut b = RngStream::new(7, 3);
        b.seek(cursor);
        let replay: Vec<f64> = (0..5).map(|_| b.normal()).collect();
        assert_eq!(ahead, replay);
    }

    #[test]
    fn distinct_tasks_differ() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        assert_ne!(a.next_u64(), b.next_u64());
        let s = a.substream(0);
        assert_ne!(s.task_id(), a.substream(1).task_id());
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(1, 0);
        let n = 200_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}

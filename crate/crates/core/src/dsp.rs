//! Small numeric helpers shared by the receiver chains.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward FFT plan of length `n`, cached per thread.
pub fn forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// Inverse FFT plan of length `n` (unnormalized), cached per thread.
pub fn inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Signed frequency index of DFT bin `k` for a transform of length `n`.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// `e^{j·phase}`.
#[inline]
pub fn cis(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}

pub fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        energy(x) / x.len() as f64
    }
}

/// Inner product `Σ a·conj(b)`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Wrap a frequency into `[-fs/2, fs/2)`.
pub fn wrap_frequency(f: f64, fs: f64) -> f64 {
    let w = (f + fs / 2.0).rem_euclid(fs) - fs / 2.0;
    if w >= fs / 2.0 {
        w - fs
    } else {
        w
    }
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Round `x` to the nearest integer when it lies within `1e-9` of it; protects
/// floor() on sample-grid boundaries against accumulated rounding.
#[inline]
pub fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Standard normal tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_bins_split_at_half() {
        assert_eq!(signed_bin(0, 8), 0.0);
        assert_eq!(signed_bin(3, 8), 3.0);
        assert_eq!(signed_bin(4, 8), -4.0);
        assert_eq!(signed_bin(7, 8), -1.0);
        assert_eq!(signed_bin(2, 5), 2.0);
        assert_eq!(signed_bin(3, 5), -2.0);
    }

    #[test]
    fn wrap_is_periodic() {
        assert!((wrap_frequency(7705.0, 9523.8) - (7705.0 - 9523.8)).abs() < 1e-9);
        assert!((wrap_frequency(-300.0, 1000.0) + 300.0).abs() < 1e-12);
    }

    #[test]
    fn q_function_reference_points() {
        // Q(0) = 0.5, Q(1) = 0.158655, Q(3) = 1.3499e-3
        assert!((q_function(0.0) - 0.5).abs() < 1e-7);
        assert!((q_function(1.0) - 0.158_655_25).abs() < 1e-6);
        assert!((q_function(3.0) - 1.349_898e-3).abs() < 1e-8);
    }
}

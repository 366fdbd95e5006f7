//! FFT helpers shared by the DAQ spectrum metrics and the mixer leakage
//! measurements.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place forward FFT.
pub fn fft_forward(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

/// 4-term Blackman-Harris window (−92 dB sidelobes).
pub fn blackman_harris4(n: usize) -> Vec<f64> {
    const A: [f64; 4] = [0.35875, 0.48829, 0.14128, 0.01168];
    (0..n)
        .map(|i| {
            let x = std::f64::consts::TAU * i as f64 / n as f64;
            A[0] - A[1] * x.cos() + A[2] * (2.0 * x).cos() - A[3] * (3.0 * x).cos()
        })
        .collect()
}

/// Single DFT bin of a complex signal, evaluated directly.
///
/// Equivalent to `FFT(x)[bin]` but O(n) for one bin; used where only a known
/// tone bin is needed (trigger-jitter phase extraction, leakage probes).
pub fn dft_bin(x: &[Complex64], bin: usize) -> Complex64 {
    let n = x.len() as f64;
    let w = -std::f64::consts::TAU * bin as f64 / n;
    x.iter()
        .enumerate()
        .map(|(i, &v)| v * Complex64::from_polar(1.0, w * i as f64))
        .sum()
}

/// `dft_bin` for a real-valued signal.
pub fn dft_bin_real(x: &[f64], bin: usize) -> Complex64 {
    let n = x.len() as f64;
    let w = -std::f64::consts::TAU * bin as f64 / n;
    x.iter()
        .enumerate()
        .map(|(i, &v)| Complex64::from_polar(v, w * i as f64))
        .sum()
}

/// Power ratio in dB; `p_ref` and `p` are linear powers.
pub fn db_ratio(p: f64, p_ref: f64) -> f64 {
    10.0 * (p / p_ref).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_bin_matches_full_fft() {
        let n = 256;
        let x: Vec<Complex64> = (0..n)
            .map(|i| {
                Complex64::from_polar(1.0, std::f64::consts::TAU * 13.0 * i as f64 / n as f64)
            })
            .collect();
        let mut y = x.clone();
        fft_forward(&mut y);
        for bin in [0usize, 13, 100] {
            let d = dft_bin(&x, bin);
            assert!((d - y[bin]).norm() < 1e-9 * n as f64);
        }
    }

    #[test]
    fn window_is_positive_and_symmetric() {
        let w = blackman_harris4(1024);
        assert!(w.iter().all(|&v| v >= 0.0));
        for i in 1..512 {
            assert!((w[i] - w[1024 - i]).abs() < 1e-12);
        }
    }
}

//! Zero-padded DFT peak picking used to seed oscillatory fits.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Frequencies (cycles per x unit) of the strongest local maxima of the
/// amplitude spectrum of `y − mean(y)`, strongest first. `x` must be uniform.
pub fn dominant_frequencies(x: &[f64], y: &[f64], max_peaks: usize) -> Vec<f64> {
    let n = y.len();
    if n < 4 || x.len() != n {
        return Vec::new();
    }
    let dt = (x[n - 1] - x[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Vec::new();
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let len = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = y.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let mag: Vec<f64> = buf[..=len / 2].iter().map(|c| c.norm()).collect();
    let mut peaks: Vec<(usize, f64)> =
        (1..mag.len() - 1).filter(|&i| mag[i] > mag[i - 1] && mag[i] >= mag[i + 1]).map(|i| (i, mag[i])).collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.truncate(max_peaks);
    peaks.into_iter().map(|(i, _)| i as f64 / (len as f64 * dt)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_a_pure_tone() {
        let x: Vec<f64> = (0..376).map(|i| 0.004 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| (2.0 * std::f64::consts::PI * 5.5 * t).cos()).collect();
        let f = dominant_frequencies(&x, &y, 1)[0];
        assert!((f - 5.5).abs() < 0.1, "{f}");
    }

    #[test]
    fn short_input_gives_nothing() {
        assert!(dominant_frequencies(&[0.0, 1.0], &[1.0, 2.0], 3).is_empty());
    }
}

//! Classic STOI: 10 kHz resampling, silent-frame removal, one-third-octave
//! band envelopes and clipped short-time correlations. Numerics follow the
//! widely used Python port (`pystoi`) so scores agree to float precision.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::SAMPLE_RATE;
use crate::error::{Error, Result};

const FS: usize = 10_000;
const N_FRAME: usize = 256;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const N_SEG: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;
const MIN_LENGTH: usize = SAMPLE_RATE as usize / 2;

/// Short-time objective intelligibility of `estimate` given clean `reference`
/// (16 kHz, equal lengths of at least 0.5 s).
pub fn stoi(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "STOI length mismatch: {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.len() < MIN_LENGTH {
        return Err(Error::Length(format!(
            "STOI needs at least {MIN_LENGTH} samples, got {}",
            reference.len()
        )));
    }
    let x = resample_16k_to_10k(reference);
    let y = resample_16k_to_10k(estimate);
    let (x, y) = remove_silent_frames(&x, &y);
    let x_spec = band_envelopes(&x);
    let y_spec = band_envelopes(&y);
    let frames = x_spec.len();
    if frames < N_SEG {
        // too little active speech for a single segment
        return Ok(1e-5);
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - N_SEG + 1;
    for m in N_SEG..=frames {
        for b in 0..NUM_BANDS {
            let xs: Vec<f64> = (m - N_SEG..m).map(|t| x_spec[t][b]).collect();
            let ys: Vec<f64> = (m - N_SEG..m).map(|t| y_spec[t][b]).collect();
            let alpha = norm(&xs) / (norm(&ys) + EPS);
            let yp: Vec<f64> = ys.iter().zip(&xs).map(|(yv, xv)| (yv * alpha).min(xv * (1.0 + clip))).collect();
            let yc = center(&yp);
            let xc = center(&xs);
            let (ny, nx) = (norm(&yc) + EPS, norm(&xc) + EPS);
            total += yc.iter().zip(&xc).map(|(a, b)| (a / ny) * (b / nx)).sum::<f64>();
        }
    }
    Ok(total / (segments * NUM_BANDS) as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn center(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// `np.hanning(n + 2)[1:-1]`
fn hanning_inner(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n + 1) as f64).cos()).collect()
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Octave-compatible Kaiser-windowed sinc, normalized to unit sum.
fn resample_filter(p: usize, q: usize) -> Vec<f64> {
    let stopband = 1.0 / (2.0 * p.max(q) as f64);
    let roll_off = stopband / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let m = (2 * half + 1) as f64;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (-half..=half)
        .enumerate()
        .map(|(n, t)| {
            let arg = 2.0 * stopband * t as f64;
            let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
            let r = 2.0 * n as f64 / (m - 1.0) - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            kaiser * 2.0 * p as f64 * stopband * sinc
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Polyphase 5/8 resampling with zero padding, aligned like `resample_poly`.
fn resample_16k_to_10k(x: &[f64]) -> Vec<f64> {
    const UP: usize = 5;
    const DOWN: usize = 8;
    debug_assert_eq!(SAMPLE_RATE as usize * UP / DOWN, FS);
    static FILTER: OnceLock<Vec<f64>> = OnceLock::new();
    let h = FILTER.get_or_init(|| resample_filter(UP, DOWN));
    let half = (h.len() - 1) / 2;
    let pre_pad = DOWN - half % DOWN;
    let pre_remove = (half + pre_pad) / DOWN;
    let n_out = (x.len() * UP).div_ceil(DOWN);
    (0..n_out)
        .map(|n| {
            // output n reads upsampled position (n + pre_remove) * DOWN - pre_pad
            let pos = ((n + pre_remove) * DOWN) as i64 - pre_pad as i64;
            let j_hi = (pos / UP as i64).min(x.len() as i64 - 1);
            let j_lo = ((pos - h.len() as i64 + 1).max(0) + UP as i64 - 1) / UP as i64;
            (j_lo..=j_hi)
                .map(|j| h[(pos - j * UP as i64) as usize] * UP as f64 * x[j as usize])
                .sum()
        })
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(N_FRAME)).step_by(N_FRAME / 2)
}

fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hanning_inner(N_FRAME);
    let hop = N_FRAME / 2;
    let window = |s: &[f64], i: usize| -> Vec<f64> { (0..N_FRAME).map(|k| w[k] * s[i + k]).collect() };
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energies: Vec<f64> = starts.iter().map(|&i| 20.0 * (norm(&window(x, i)) + EPS).log10()).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&i, _)| i)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * hop + N_FRAME;
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (f, &i) in kept.iter().enumerate() {
        let (xf, yf) = (window(x, i), window(y, i));
        for k in 0..N_FRAME {
            xo[f * hop + k] += xf[k];
            yo[f * hop + k] += yf[k];
        }
    }
    (xo, yo)
}

/// Per-frame one-third-octave band magnitudes, `frames x 15`.
fn band_envelopes(x: &[f64]) -> Vec<[f64; NUM_BANDS]> {
    static PLAN: OnceLock<std::sync::Arc<dyn Fft<f64>>> = OnceLock::new();
    let fft = PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(NFFT));
    let bands = band_edges();
    let w = hanning_inner(N_FRAME);
    frame_starts(x.len())
        .map(|i| {
            let mut buf: Vec<Complex<f64>> = (0..NFFT)
                .map(|k| Complex::new(if k < N_FRAME { w[k] * x[i + k] } else { 0.0 }, 0.0))
                .collect();
            fft.process(&mut buf);
            let mut out = [0.0; NUM_BANDS];
            for (b, &(lo, hi)) in bands.iter().enumerate() {
                out[b] = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            }
            out
        })
        .collect()
}

/// `[lo, hi)` FFT-bin ranges of the bands, snapped to the nearest bins.
fn band_edges() -> [(usize, usize); NUM_BANDS] {
    let nearest = |f: f64| -> usize {
        let mut best = (0, f64::INFINITY);
        for k in 0..=NFFT / 2 {
            let d = (k as f64 * FS as f64 / NFFT as f64 - f).powi(2);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    };
    let mut out = [(0, 0); NUM_BANDS];
    for (i, e) in out.iter_mut().enumerate() {
        let k = i as f64;
        *e = (
            nearest(MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0)),
            nearest(MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0)),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 24_000;

    /// Gliding-f0 harmonic source with moving formants and irregular syllables.
    fn speech() -> Vec<f64> {
        let fs = SAMPLE_RATE as f64;
        let mut phase = 0.0;
        let mut x: Vec<f64> = (0..N)
            .map(|i| {
                let t = i as f64 / fs;
                let f0 = 130.0 * (1.0 + 0.1 * (2.0 * PI * 1.3 * t).sin());
                phase += 2.0 * PI * f0 / fs;
                let f1 = 500.0 + 200.0 * (2.0 * PI * 2.1 * t).sin();
                let f2 = 1500.0 + 400.0 * (2.0 * PI * 1.7 * t + 1.0).sin();
                let mut v = 0.0;
                for k in 1..50 {
                    let fk = k as f64 * f0;
                    if fk < 7000.0 {
                        let a = (0.2 + 2.0 * (-((fk - f1) / 150.0).powi(2)).exp() + (-((fk - f2) / 250.0).powi(2)).exp())
                            / k as f64;
                        v += a * (k as f64 * phase).sin();
                    }
                }
                let env = ((2.0 * PI * 2.3 * t).sin() * (2.0 * PI * 0.9 * t + 0.5).sin()).max(0.0).sqrt();
                v * env
            })
            .collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x.iter_mut().for_each(|v| *v *= 0.5 / peak);
        x
    }

    fn lcg_noise(seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..N)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect()
    }

    // scores of the same signals from the reference Python implementation
    const SELF: f64 = 0.9999999999999999;
    const NOISE_ONLY: f64 = 0.19064994955389572;
    const AT_SNR: [(f64, f64); 4] = [
        (20.0, 0.9641344199867714),
        (10.0, 0.851206084124553),
        (0.0, 0.7316301708128033),
        (-10.0, 0.546092317427396),
    ];

    #[test]
    fn matches_reference_scores() {
        let x = speech();
        let w = lcg_noise(12345);
        assert!((stoi(&x, &x).unwrap() - SELF).abs() < 1e-9);
        let s = stoi(&w, &x).unwrap();
        assert!((s - NOISE_ONLY).abs() < 1e-6 && s.abs() <= 0.25, "{s}");
        let (ex, ew) = (norm(&x).powi(2), norm(&w).powi(2));
        let mut last = f64::INFINITY;
        for (snr, expect) in AT_SNR {
            let g = (ex / ew / 10f64.powf(snr / 10.0)).sqrt();
            let y: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a + g * b).collect();
            let v = stoi(&y, &x).unwrap();
            assert!((v - expect).abs() < 1e-6, "snr {snr}: {v} vs {expect}");
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn band_edges_match_reference_bins() {
        let e = band_edges();
        assert_eq!(e[0], (7, 9));
        assert_eq!(e[14], (174, 219));
    }

    #[test]
    fn short_input_is_length_error() {
        let x = vec![0.1; 4000];
        assert!(matches!(stoi(&x, &x), Err(Error::Length(_))));
    }
}

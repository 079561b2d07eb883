use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FFT_SIZE, HOP, N_BINS};
use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::nn::{Graph, Mat, Var};

const PAD: usize = FFT_SIZE / 2;
const WSS_FLOOR: f64 = 1e-10;

/// One-sided complex spectrogram, `T x 513`, stored as real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub re: Mat,
    pub im: Mat,
    pub hop: usize,
    pub original_length: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.re.nrows()
    }

    pub fn magnitude(&self) -> Mat {
        let mut m = self.re.mapv(|v| v * v);
        m.zip_mut_with(&self.im, |m, &i| *m = (*m + i * i).sqrt());
        m
    }

    pub fn zeros(frames: usize, original_length: usize) -> Self {
        Self {
            re: Array2::zeros((frames, N_BINS)),
            im: Array2::zeros((frames, N_BINS)),
            hop: HOP,
            original_length,
        }
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

fn plans() -> &'static Plans {
    static PLANS: OnceLock<Plans> = OnceLock::new();
    PLANS.get_or_init(|| {
        let mut planner = FftPlanner::new();
        Plans {
            forward: planner.plan_fft_forward(FFT_SIZE),
            inverse: planner.plan_fft_inverse(FFT_SIZE),
            // periodic Hann
            window: (0..FFT_SIZE)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / FFT_SIZE as f64).cos())
                .collect(),
        }
    })
}

/// Centered frame count, `ceil(length / 320)`.
pub fn stft_frame_count(length: usize) -> usize {
    length.div_ceil(HOP)
}

fn reflect_pad(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * PAD);
    out.extend((1..=PAD).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..PAD).map(|j| x[n - 2 - j]));
    out
}

/// Hann-windowed STFT, window/FFT 1024, hop 320, centered reflection-padded framing.
pub fn stft_encode(signal: &AudioSignal) -> Result<Spectrogram> {
    let x = signal.samples();
    if x.len() < FFT_SIZE {
        return Err(Error::Length(format!(
            "stft needs at least {FFT_SIZE} samples, got {}",
            x.len()
        )));
    }
    let p = plans();
    let padded = reflect_pad(x);
    let frames = stft_frame_count(x.len());
    let mut spec = Spectrogram::zeros(frames, x.len());
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    for t in 0..frames {
        let start = t * HOP;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + k] * p.window[k], 0.0);
        }
        p.forward.process(&mut buf);
        for f in 0..N_BINS {
            spec.re[[t, f]] = buf[f].re;
            spec.im[[t, f]] = buf[f].im;
        }
    }
    Ok(spec)
}

fn window_square_sum(frames: usize) -> Vec<f64> {
    let w = &plans().window;
    let mut wss = vec![0.0; (frames.max(1) - 1) * HOP + FFT_SIZE];
    for t in 0..frames {
        for k in 0..FFT_SIZE {
            wss[t * HOP + k] += w[k] * w[k];
        }
    }
    wss
}

fn check_length(frames: usize, length: usize) -> Result<()> {
    let limit = frames * HOP + FFT_SIZE;
    if length > limit {
        return Err(Error::Length(format!(
            "requested length {length} exceeds {limit} for {frames} frames"
        )));
    }
    Ok(())
}

/// Weighted overlap-add inverse of [`stft_encode`] on raw real/imag parts.
pub fn istft_frames(re: &Mat, im: &Mat, length: usize) -> Result<Vec<f64>> {
    if re.dim() != im.dim() || re.ncols() != N_BINS {
        return Err(Error::Shape(format!(
            "spectrogram parts {:?} / {:?}, expected T x {N_BINS}",
            re.dim(),
            im.dim()
        )));
    }
    let frames = re.nrows();
    check_length(frames, length)?;
    let p = plans();
    let wss = window_square_sum(frames);
    let mut full = vec![0.0; wss.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let scale = 1.0 / FFT_SIZE as f64;
    for t in 0..frames {
        buf[0] = Complex::new(re[[t, 0]], 0.0);
        buf[FFT_SIZE / 2] = Complex::new(re[[t, N_BINS - 1]], 0.0);
        for f in 1..FFT_SIZE / 2 {
            let c = Complex::new(re[[t, f]], im[[t, f]]);
            buf[f] = c;
            buf[FFT_SIZE - f] = c.conj();
        }
        p.inverse.process(&mut buf);
        for k in 0..FFT_SIZE {
            full[t * HOP + k] += buf[k].re * scale * p.window[k];
        }
    }
    let mut out = vec![0.0; length];
    for (n, o) in out.iter_mut().enumerate() {
        let i = n + PAD;
        if i < full.len() && wss[i] > WSS_FLOOR {
            *o = full[i] / wss[i];
        }
    }
    Ok(out)
}

pub fn istft_decode(spec: &Spectrogram, length: usize) -> Result<AudioSignal> {
    AudioSignal::new(istft_frames(&spec.re, &spec.im, length)?)
}

/// Adjoint of [`istft_frames`]: maps a gradient on the output samples to
/// gradients on the real and imaginary parts.
fn istft_adjoint(g: &[f64], frames: usize) -> (Mat, Mat) {
    let p = plans();
    let wss = window_square_sum(frames);
    let mut g_norm = vec![0.0; wss.len()];
    for (n, &gv) in g.iter().enumerate() {
        let i = n + PAD;
        if i < wss.len() && wss[i] > WSS_FLOOR {
            g_norm[i] = gv / wss[i];
        }
    }
    let mut d_re = Array2::zeros((frames, N_BINS));
    let mut d_im = Array2::zeros((frames, N_BINS));
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    let n = FFT_SIZE as f64;
    for t in 0..frames {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(g_norm[t * HOP + k] * p.window[k], 0.0);
        }
        p.forward.process(&mut buf);
        d_re[[t, 0]] = buf[0].re / n;
        d_re[[t, N_BINS - 1]] = buf[FFT_SIZE / 2].re / n;
        for f in 1..FFT_SIZE / 2 {
            d_re[[t, f]] = 2.0 * buf[f].re / n;
            d_im[[t, f]] = 2.0 * buf[f].im / n;
        }
    }
    (d_re, d_im)
}

impl Graph {
    /// Differentiable iSTFT of (re, im) parts to a 1 x `length` signal.
    pub fn istft(&mut self, re: Var, im: Var, length: usize) -> Result<Var> {
        let out = istft_frames(self.value(re), self.value(im), length)?;
        let frames = self.value(re).nrows();
        let out = Array2::from_shape_vec((1, length), out).expect("length matches");
        Ok(self.custom(
            out,
            &[re, im],
            Box::new(move |g, _, _| {
                let (d_re, d_im) = istft_adjoint(g.as_slice().expect("row vector"), frames);
                vec![Some(d_re), Some(d_im)]
            }),
        ))
    }
}

use serde::{Deserialize, Serialize};

use super::{EncodedFeatures, Spectrogram};
use crate::error::{Error, Result};
use crate::nn::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Magnitude,
    Complex,
    Encoder,
}

/// Multiplicative mask. `imag` is present only for the complex kind.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTensor {
    pub kind: MaskKind,
    pub real: Mat,
    pub imag: Option<Mat>,
}

impl MaskTensor {
    pub fn frames(&self) -> usize {
        self.real.nrows()
    }

    pub fn width(&self) -> usize {
        self.real.ncols()
    }

    pub fn ones(kind: MaskKind, frames: usize, width: usize) -> Self {
        Self {
            kind,
            real: Mat::ones((frames, width)),
            imag: (kind == MaskKind::Complex).then(|| Mat::zeros((frames, width))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainFeatures {
    Spectrogram(Spectrogram),
    Encoded(EncodedFeatures),
}

/// Hadamard masking. A magnitude mask scales `|Z|` and keeps the mixture
/// phase, which is the real elementwise product on both parts.
pub fn apply_mask(features: &DomainFeatures, mask: &MaskTensor) -> Result<DomainFeatures> {
    let shape_err = |have: (usize, usize)| {
        Error::Shape(format!("mask {:?} is {:?}, features are {have:?}", mask.kind, mask.real.dim()))
    };
    match (features, mask.kind) {
        (DomainFeatures::Spectrogram(spec), MaskKind::Magnitude) => {
            if spec.re.dim() != mask.real.dim() {
                return Err(shape_err(spec.re.dim()));
            }
            Ok(DomainFeatures::Spectrogram(Spectrogram {
                re: &spec.re * &mask.real,
                im: &spec.im * &mask.real,
                ..spec.clone()
            }))
        }
        (DomainFeatures::Spectrogram(spec), MaskKind::Complex) => {
            let mi = mask
                .imag
                .as_ref()
                .ok_or_else(|| Error::Shape("complex mask without imaginary part".into()))?;
            if spec.re.dim() != mask.real.dim() || mi.dim() != mask.real.dim() {
                return Err(shape_err(spec.re.dim()));
            }
            let mr = &mask.real;
            Ok(DomainFeatures::Spectrogram(Spectrogram {
                re: &(mr * &spec.re) - &(mi * &spec.im),
                im: &(mr * &spec.im) + &(mi * &spec.re),
                ..spec.clone()
            }))
        }
        (DomainFeatures::Encoded(enc), MaskKind::Encoder) => {
            if enc.frames.dim() != mask.real.dim() {
                return Err(shape_err(enc.frames.dim()));
            }
            Ok(DomainFeatures::Encoded(EncodedFeatures {
                frames: &enc.frames * &mask.real,
                ..enc.clone()
            }))
        }
        (DomainFeatures::Spectrogram(_), MaskKind::Encoder) => {
            Err(Error::Shape("encoder-domain mask applied to a spectrogram".into()))
        }
        (DomainFeatures::Encoded(_), kind) => {
            Err(Error::Shape(format!("{kind:?} mask applied to encoder features")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioSignal;
    use crate::frontend::{stft_encode, N_BINS};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        stft_encode(&AudioSignal::new(x).unwrap()).unwrap()
    }

    #[test]
    fn ones_is_identity_in_every_domain() {
        let s = spec();
        let t = s.frames();
        for kind in [MaskKind::Magnitude, MaskKind::Complex] {
            let out = apply_mask(&DomainFeatures::Spectrogram(s.clone()), &MaskTensor::ones(kind, t, N_BINS)).unwrap();
            assert_eq!(out, DomainFeatures::Spectrogram(s.clone()));
        }
        let enc = EncodedFeatures {
            frames: Array2::from_shape_fn((7, 16), |(i, j)| (i * j) as f64),
            hop: 320,
            original_length: 3000,
        };
        let out = apply_mask(&DomainFeatures::Encoded(enc.clone()), &MaskTensor::ones(MaskKind::Encoder, 7, 16)).unwrap();
        assert_eq!(out, DomainFeatures::Encoded(enc));
    }

    #[test]
    fn zero_mask_zeroes() {
        let s = spec();
        let mut m = MaskTensor::ones(MaskKind::Magnitude, s.frames(), N_BINS);
        m.real.fill(0.0);
        let DomainFeatures::Spectrogram(out) = apply_mask(&DomainFeatures::Spectrogram(s), &m).unwrap() else {
            unreachable!()
        };
        assert!(out.re.iter().chain(out.im.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn magnitude_mask_scales_magnitude_and_keeps_phase() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MaskTensor {
            kind: MaskKind::Magnitude,
            real: Array2::from_shape_fn(s.re.dim(), |_| rng.gen_range(0.0..2.0)),
            imag: None,
        };
        let DomainFeatures::Spectrogram(out) = apply_mask(&DomainFeatures::Spectrogram(s.clone()), &m).unwrap() else {
            unreachable!()
        };
        for ((t, f), &mv) in m.real.indexed_iter() {
            let (a, b) = (s.re[[t, f]], s.im[[t, f]]);
            let (c, d) = (out.re[[t, f]], out.im[[t, f]]);
            let in_mag = a.hypot(b);
            let out_mag = c.hypot(d);
            assert!((out_mag - mv * in_mag).abs() <= 1e-6 * (1.0 + in_mag));
            if in_mag > 1e-9 && mv > 1e-9 {
                let dphi = (d.atan2(c) - b.atan2(a) + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                    - std::f64::consts::PI;
                assert!(dphi.abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn mismatches_are_shape_errors() {
        let s = spec();
        let m = MaskTensor::ones(MaskKind::Magnitude, s.frames() + 1, N_BINS);
        assert!(matches!(apply_mask(&DomainFeatures::Spectrogram(s.clone()), &m), Err(Error::Shape(_))));
        let e = MaskTensor::ones(MaskKind::Encoder, s.frames(), N_BINS);
        assert!(matches!(apply_mask(&DomainFeatures::Spectrogram(s), &e), Err(Error::Shape(_))));
    }
}

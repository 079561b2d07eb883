use ndarray::Array2;
use rand::Rng;

use super::{HOP, KERNEL, N_FILTERS};
use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::nn::{init_uniform, ops_overlap_add, Graph, Mat, ParamStore, Var};

/// Nonnegative learnable-encoder output, `T x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeatures {
    pub frames: Mat,
    pub hop: usize,
    pub original_length: usize,
}

/// `floor((length - kernel) / stride) + 1` valid frames.
pub fn conv_frame_count(length: usize, kernel: usize, stride: usize) -> Option<usize> {
    (length >= kernel).then(|| (length - kernel) / stride + 1)
}

/// Uncentered frames `x[t*stride .. t*stride + kernel]` as rows.
pub fn frame_signal(x: &[f64], kernel: usize, stride: usize) -> Result<Mat> {
    let frames = conv_frame_count(x.len(), kernel, stride).ok_or_else(|| {
        Error::Length(format!("conv encoder needs at least {kernel} samples, got {}", x.len()))
    })?;
    Ok(Array2::from_shape_fn((frames, kernel), |(t, k)| x[t * stride + k]))
}

/// Learnable Conv1D encoder / transposed-Conv1D decoder pair.
///
/// Parameters: `encoder.filters` (kernel x filters) and `decoder.filters`
/// (filters x kernel), both without bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnableFrontend {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Default for LearnableFrontend {
    fn default() -> Self {
        Self {
            filters: N_FILTERS,
            kernel: KERNEL,
            stride: HOP,
        }
    }
}

impl LearnableFrontend {
    pub const ENCODER: &'static str = "encoder.filters";
    pub const DECODER: &'static str = "decoder.filters";

    /// Uniform(-1/sqrt(kernel), 1/sqrt(kernel)).
    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) {
        let bound = 1.0 / (self.kernel as f64).sqrt();
        store.insert(Self::ENCODER, init_uniform(rng, self.kernel, self.filters, bound));
        store.insert(Self::DECODER, init_uniform(rng, self.filters, self.kernel, bound));
    }

    /// Data-driven start: encoder filters are `+u` / `-u` pairs of the
    /// leading principal directions of calibration frames (so ReLU keeps
    /// the linear information), and the decoder is the ridge least-squares
    /// map from encoder features back to synthesis-windowed frames. The
    /// pair is then close to a pass-through and training moves on from
    /// there.
    pub fn init_paired<R: Rng>(&self, store: &mut ParamStore, rng: &mut R, calibration: &[&[f64]]) -> Result<()> {
        let frames: Vec<Mat> = calibration
            .iter()
            .filter(|x| x.len() >= self.kernel)
            .map(|x| frame_signal(x, self.kernel, self.stride))
            .collect::<Result<_>>()?;
        let x = ndarray::concatenate(ndarray::Axis(0), &frames.iter().map(|f| f.view()).collect::<Vec<_>>())
            .map_err(|e| Error::Shape(e.to_string()))?;
        if x.nrows() < self.kernel.min(self.filters) {
            return Err(Error::Degenerate(format!(
                "paired init needs at least {} calibration frames, got {}",
                self.kernel.min(self.filters),
                x.nrows()
            )));
        }
        let k = self.kernel;
        let cov = x.t().dot(&x) / x.nrows() as f64;
        let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(k, k, |i, j| cov[[i, j]]));
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let pairs = self.filters / 2;
        let bound = 1.0 / (k as f64).sqrt();
        let mut enc = init_uniform(rng, k, self.filters, bound);
        for (j, &idx) in order.iter().take(pairs).enumerate() {
            for n in 0..k {
                let v = eig.eigenvectors[(n, idx)];
                enc[[n, j]] = v;
                enc[[n, j + pairs]] = -v;
            }
        }
        let feats = x.dot(&enc).mapv(|v| v.max(0.0));
        let window = synthesis_window(k, self.stride);
        let target = &x * &window.view().insert_axis(ndarray::Axis(0));
        let n = self.filters;
        let mut gram = feats.t().dot(&feats);
        let ridge = 1e-6 * (0..n).map(|i| gram[[i, i]]).sum::<f64>() / n as f64 + 1e-12;
        for i in 0..n {
            gram[[i, i]] += ridge;
        }
        let rhs = feats.t().dot(&target);
        let chol = nalgebra::Cholesky::new(nalgebra::DMatrix::from_fn(n, n, |i, j| gram[[i, j]]))
            .ok_or_else(|| Error::Degenerate("calibration features are rank deficient".into()))?;
        let sol = chol.solve(&nalgebra::DMatrix::from_fn(n, k, |i, j| rhs[[i, j]]));
        let dec = Array2::from_shape_fn((n, k), |(i, j)| sol[(i, j)]);
        store.insert(Self::ENCODER, enc);
        store.insert(Self::DECODER, dec);
        Ok(())
    }

    pub fn frame_count(&self, length: usize) -> Option<usize> {
        conv_frame_count(length, self.kernel, self.stride)
    }

    fn check(&self, store: &ParamStore) -> Result<()> {
        for (name, want) in [
            (Self::ENCODER, (self.kernel, self.filters)),
            (Self::DECODER, (self.filters, self.kernel)),
        ] {
            match store.get(name) {
                Some(t) if t.dim() == want => {}
                Some(t) => {
                    return Err(Error::Shape(format!("{name} is {:?}, expected {want:?}", t.dim())))
                }
                None => return Err(Error::Shape(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }

    /// ReLU(frames . W_enc) on the graph.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, signal: &[f64]) -> Result<Var> {
        self.check(store)?;
        let frames = frame_signal(signal, self.kernel, self.stride)?;
        let x = g.constant(frames);
        let w = store.var(g, Self::ENCODER);
        let y = g.matmul(x, w);
        Ok(g.relu(y))
    }

    /// Overlap-add of `features . W_dec`, cut or zero-padded to `length`.
    pub fn decode(&self, g: &mut Graph, store: &ParamStore, features: Var, length: usize) -> Result<Var> {
        self.check(store)?;
        if g.value(features).ncols() != self.filters {
            return Err(Error::Shape(format!(
                "features have {} channels, decoder expects {}",
                g.value(features).ncols(),
                self.filters
            )));
        }
        let w = store.var(g, Self::DECODER);
        let frames = g.matmul(features, w);
        Ok(g.overlap_add(frames, self.stride, length))
    }
}

/// Hann window divided by its own overlap-add sum at `stride`, so that
/// overlapping copies add up to one away from the signal edges.
fn synthesis_window(kernel: usize, stride: usize) -> ndarray::Array1<f64> {
    let hann: Vec<f64> = (0..kernel)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / kernel as f64).cos())
        .collect();
    let cover: Vec<f64> = (0..stride)
        .map(|m| (m..kernel).step_by(stride).map(|i| hann[i]).sum())
        .collect();
    (0..kernel).map(|n| hann[n] / cover[n % stride].max(1e-12)).collect()
}

pub fn conv_encode(signal: &AudioSignal, frontend: &LearnableFrontend, store: &ParamStore) -> Result<EncodedFeatures> {
    frontend.check(store)?;
    let frames = frame_signal(signal.samples(), frontend.kernel, frontend.stride)?;
    let w = store.get(LearnableFrontend::ENCODER).expect("checked");
    Ok(EncodedFeatures {
        frames: frames.dot(w).mapv(|v| v.max(0.0)),
        hop: frontend.stride,
        original_length: signal.len(),
    })
}

pub fn deconv_decode(
    features: &EncodedFeatures,
    frontend: &LearnableFrontend,
    store: &ParamStore,
    length: usize,
) -> Result<AudioSignal> {
    frontend.check(store)?;
    if features.frames.ncols() != frontend.filters {
        return Err(Error::Shape(format!(
            "features have {} channels, decoder expects {}",
            features.frames.ncols(),
            frontend.filters
        )));
    }
    let w = store.get(LearnableFrontend::DECODER).expect("checked");
    let out = ops_overlap_add(&features.frames.dot(w), frontend.stride, length);
    AudioSignal::new(out.into_raw_vec_and_offset().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (LearnableFrontend, ParamStore) {
        let fe = LearnableFrontend::default();
        let mut store = ParamStore::new();
        fe.init(&mut store, &mut ChaCha8Rng::seed_from_u64(0));
        (fe, store)
    }

    #[test]
    fn paired_init_is_close_to_pass_through() {
        use crate::audio::{synth_utterance, SpeakerProfile};
        let fe = LearnableFrontend {
            filters: 128,
            kernel: 256,
            stride: 80,
        };
        let calib: Vec<Vec<f64>> = (0..6)
            .map(|i| synth_utterance(&SpeakerProfile::random(format!("c{i}"), i), 1.0, i).unwrap().into_samples())
            .collect();
        let refs: Vec<&[f64]> = calib.iter().map(|v| v.as_slice()).collect();
        let mut store = ParamStore::new();
        fe.init_paired(&mut store, &mut ChaCha8Rng::seed_from_u64(0), &refs).unwrap();
        let x = synth_utterance(&SpeakerProfile::random("held", 99), 1.0, 7).unwrap();
        let y = deconv_decode(&conv_encode(&x, &fe, &store).unwrap(), &fe, &store, x.len()).unwrap();
        let sdr = crate::metrics::si_sdr(y.samples(), x.samples()).unwrap();
        assert!(sdr > 10.0, "pass-through SI-SDR {sdr}");
    }

    #[test]
    fn synthesis_window_overlap_adds_to_one() {
        let w = synthesis_window(1024, 320);
        for n in 1024..2000 {
            let total: f64 = (0..8).filter(|t| n >= t * 320 && n - t * 320 < 1024).map(|t| w[n - t * 320]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_formula_and_relu() {
        let (fe, store) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..16000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let enc = conv_encode(&AudioSignal::new(x).unwrap(), &fe, &store).unwrap();
        assert_eq!(enc.frames.dim(), (47, 512));
        assert!(enc.frames.iter().all(|&v| v >= 0.0));
        for len in [1024, 1025, 1343, 1344, 5000] {
            assert_eq!(fe.frame_count(len), Some((len - 1024) / 320 + 1));
        }
        assert!(conv_encode(&AudioSignal::zeros(1000), &fe, &store).is_err());
    }

    #[test]
    fn zero_features_decode_to_zero_of_requested_length() {
        let (fe, store) = setup();
        let f = EncodedFeatures {
            frames: Array2::zeros((10, 512)),
            hop: 320,
            original_length: 4000,
        };
        for len in [3000, 4000, 5000] {
            let y = deconv_decode(&f, &fe, &store, len).unwrap();
            assert_eq!(y.len(), len);
            assert!(y.samples().iter().all(|&v| v == 0.0));
        }
        let bad = EncodedFeatures {
            frames: Array2::zeros((10, 100)),
            hop: 320,
            original_length: 4000,
        };
        assert!(matches!(deconv_decode(&bad, &fe, &store, 4000), Err(Error::Shape(_))));
    }
}

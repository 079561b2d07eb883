//! Encoder/decoder pairs: fixed STFT/iSTFT or a learnable filterbank, and
//! mask application in each feature domain.

mod conv;
mod mask;
mod stft;

pub use conv::{
    conv_encode, conv_frame_count, deconv_decode, frame_signal, EncodedFeatures, LearnableFrontend,
};
pub use mask::{apply_mask, DomainFeatures, MaskKind, MaskTensor};
pub use stft::{istft_decode, istft_frames, stft_encode, stft_frame_count, Spectrogram};

pub const FFT_SIZE: usize = 1024;
pub const HOP: usize = 320;
pub const N_BINS: usize = FFT_SIZE / 2 + 1;
pub const KERNEL: usize = 1024;
pub const N_FILTERS: usize = 512;

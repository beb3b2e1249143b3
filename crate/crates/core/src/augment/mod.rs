//! Multi-style training (MTR) augmentation and blind SNR estimation.

mod mix;
mod mtr;
mod noise;
mod rir;
mod wada;

pub use mix::{apply_reverb, convolve_direct, mix_noise, noise_gain, MixedSignal};
pub use mtr::{
    draw_plan, loop_noise, mtr_augment, mtr_augment_utterance, MtrConfig, MtrCopy, MtrPlan,
    MtrResources,
};
pub use noise::{NoiseCategory, NoiseClip, NoiseRecord};
pub use rir::{synth_rir, RoomImpulseResponse};
pub use wada::{wada_snr, wada_statistic, WADA_TABLE, WADA_TABLE_DB_MAX, WADA_TABLE_DB_MIN};

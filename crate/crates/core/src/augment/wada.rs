//! Blind SNR estimation from the waveform amplitude distribution.
//!
//! Clean speech amplitudes are modelled as gamma distributed (shape 0.4) and
//! noise as Gaussian. The statistic `G = ln E|x| - E ln|x|` is scale free and
//! increases monotonically with SNR, so a precomputed `SNR -> G` table can be
//! inverted by interpolation. The table was produced by nested quadrature
//! over that model (`scripts/wada_table.py`).

use crate::audio::Waveform;
use crate::error::{Error, Result};

pub const WADA_TABLE_DB_MIN: f64 = -20.0;
pub const WADA_TABLE_DB_MAX: f64 = 100.0;

/// `G` at SNR = -20, -19, ..., 100 dB.
#[rustfmt::skip]
pub const WADA_TABLE: [f64; 121] = [
    0.40943470, 0.40945950, 0.40949762, 0.40955585, 0.40964412, 0.40977680,
    0.40997422, 0.41026473, 0.41068699, 0.41129251, 0.41214827, 0.41333908,
    0.41496934, 0.41716371, 0.42006640, 0.42383855, 0.42865366, 0.43469103,
    0.44212755, 0.45112839, 0.46183732, 0.47436773, 0.48879504, 0.50515144,
    0.52342326, 0.54355138, 0.56543434, 0.58893370, 0.61388120, 0.64008667,
    0.66734632, 0.69545050, 0.72419070, 0.75336533, 0.78278429, 0.81227220,
    0.84167053, 0.87083865, 0.89965408, 0.92801212, 0.95582492, 0.98302037,
    1.00954067, 1.03534094, 1.06038765, 1.08465732, 1.10813505, 1.13081336,
    1.15269102, 1.17377204, 1.19406475, 1.21358106, 1.23233570, 1.25034569,
    1.26762978, 1.28420806, 1.30010156, 1.31533194, 1.32992126, 1.34389172,
    1.35726554, 1.37006476, 1.38231115, 1.39402611, 1.40523061, 1.41594510,
    1.42618950, 1.43598315, 1.44534479, 1.45429254, 1.46284393, 1.47101584,
    1.47882453, 1.48628568, 1.49341434, 1.50022498, 1.50673149, 1.51294719,
    1.51888488, 1.52455681, 1.52997471, 1.53514984, 1.54009295, 1.54481436,
    1.54932393, 1.55363110, 1.55774489, 1.56167393, 1.56542647, 1.56901042,
    1.57243332, 1.57570237, 1.57882447, 1.58180620, 1.58465387, 1.58737348,
    1.58997078, 1.59245127, 1.59482018, 1.59708253, 1.59924311, 1.60130649,
    1.60327704, 1.60515893, 1.60695615, 1.60867250, 1.61031172, 1.61187699,
    1.61337191, 1.61479957, 1.61616298, 1.61746503, 1.61870849, 1.61989599,
    1.62103005, 1.62211307, 1.62314735, 1.62413509, 1.62507838, 1.62597920,
    1.62683949,
];

/// `ln(mean |x|) - mean(ln |x|)` over the nonzero samples.
pub fn wada_statistic(samples: &[f64]) -> Result<f64> {
    let mut n = 0usize;
    let mut sum_abs = 0.0;
    let mut sum_log = 0.0;
    for &s in samples {
        let a = s.abs();
        if a > 0.0 {
            n += 1;
            sum_abs += a;
            sum_log += a.ln();
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("all-zero signal has no amplitude distribution".into()));
    }
    Ok((sum_abs / n as f64).ln() - sum_log / n as f64)
}

fn invert_table(g: f64) -> f64 {
    let Some(idx) = WADA_TABLE.iter().rposition(|&t| t < g) else {
        return WADA_TABLE_DB_MIN;
    };
    if idx == WADA_TABLE.len() - 1 {
        return WADA_TABLE_DB_MAX;
    }
    let (g0, g1) = (WADA_TABLE[idx], WADA_TABLE[idx + 1]);
    WADA_TABLE_DB_MIN + idx as f64 + (g - g0) / (g1 - g0)
}

/// Estimated SNR in dB, clamped to the table range `[-20, 100]`.
///
/// Needs at least half a second of audio.
pub fn wada_snr(w: &Waveform) -> Result<f64> {
    if w.len() * 2 < w.sample_rate as usize {
        return Err(Error::TooShort(format!(
            "{:.3} s of audio, WADA needs at least 0.5 s",
            w.duration_s()
        )));
    }
    let g = wada_statistic(&w.samples)?;
    Ok(invert_table(g).clamp(WADA_TABLE_DB_MIN, WADA_TABLE_DB_MAX))
}

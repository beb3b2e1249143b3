use super::FeatureSequence;

/// Mean separation (in nats of log energy) below which the two-component
/// fit is considered degenerate and every frame is kept.
pub const MIN_MEAN_SEPARATION: f64 = 1.0;

const EM_ITERATIONS: usize = 20;
const VARIANCE_FLOOR: f64 = 1e-4;

/// Energy-GMM voice activity detection over a feature sequence.
///
/// See [`vad_mask_from_energies`].
pub fn vad_mask(features: &FeatureSequence) -> Vec<bool> {
    vad_mask_from_energies(&features.frame_energies())
}

#[derive(Debug, Clone, Copy)]
struct Component {
    weight: f64,
    mean: f64,
    var: f64,
}

impl Component {
    fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        self.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * self.var).ln() - 0.5 * d * d / self.var
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

/// Fits a two-component 1-D Gaussian mixture to per-frame log energies and
/// marks frames that belong to the higher-mean component as speech.
///
/// EM starts from the 10th/90th energy percentiles and runs a fixed 20
/// iterations. The fit is done on sorted energies, so the mask is exactly
/// covariant under reordering of the frames. If the fitted means are less
/// than [`MIN_MEAN_SEPARATION`] apart every frame is speech.
pub fn vad_mask_from_energies(energies: &[f64]) -> Vec<bool> {
    if energies.len() < 2 {
        return vec![true; energies.len()];
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);

    let mut comps = [
        Component {
            weight: 0.5,
            mean: percentile(&sorted, 0.1),
            var,
        },
        Component {
            weight: 0.5,
            mean: percentile(&sorted, 0.9),
            var,
        },
    ];

    let mut resp = vec![0.0; sorted.len()];
    for _ in 0..EM_ITERATIONS {
        for (r, &x) in resp.iter_mut().zip(&sorted) {
            *r = posterior_high(&comps, x);
        }
        let n_hi: f64 = resp.iter().sum();
        let n_lo = n - n_hi;
        if n_hi < 1e-9 || n_lo < 1e-9 {
            break;
        }
        let mu_hi = resp.iter().zip(&sorted).map(|(r, x)| r * x).sum::<f64>() / n_hi;
        let mu_lo = resp.iter().zip(&sorted).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n_lo;
        let var_hi = resp
            .iter()
            .zip(&sorted)
            .map(|(r, x)| r * (x - mu_hi).powi(2))
            .sum::<f64>()
            / n_hi;
        let var_lo = resp
            .iter()
            .zip(&sorted)
            .map(|(r, x)| (1.0 - r) * (x - mu_lo).powi(2))
            .sum::<f64>()
            / n_lo;
        comps = [
            Component {
                weight: n_lo / n,
                mean: mu_lo,
                var: var_lo.max(VARIANCE_FLOOR),
            },
            Component {
                weight: n_hi / n,
                mean: mu_hi,
                var: var_hi.max(VARIANCE_FLOOR),
            },
        ];
    }

    let (lo, hi) = if comps[0].mean <= comps[1].mean {
        (comps[0], comps[1])
    } else {
        (comps[1], comps[0])
    };
    if hi.mean - lo.mean < MIN_MEAN_SEPARATION {
        return vec![true; energies.len()];
    }
    energies
        .iter()
        .map(|&x| hi.log_density(x) >= lo.log_density(x))
        .collect()
}

fn posterior_high(comps: &[Component; 2], x: f64) -> f64 {
    let a = comps[0].log_density(x);
    let b = comps[1].log_density(x);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    eb / (ea + eb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{extract_features, Waveform, FRAME_SHIFT, FRAME_WIDTH, SAMPLE_RATE};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn silence_is_all_speech() {
        let w = Waveform::new(vec![0.0; 16000], SAMPLE_RATE).unwrap();
        let f = extract_features(&w).unwrap();
        assert!(f.vad_mask.iter().all(|&b| b));
    }

    #[test]
    fn bursts_and_digital_silence() {
        let mut rng = crate::seed::rng(11);
        // 0.2 s bursts alternating with 0.3 s of digital silence
        let mut samples = vec![0.0; 32000];
        let mut burst = vec![false; samples.len()];
        for (i, s) in samples.iter_mut().enumerate() {
            if (i % 8000) < 3200 {
                *s = rng.random_range(-1.0..1.0);
                burst[i] = true;
            }
        }
        let w = Waveform::new(samples, SAMPLE_RATE).unwrap();
        let f = extract_features(&w).unwrap();
        let expected: Vec<bool> = (0..f.len())
            .map(|k| burst[k * FRAME_SHIFT..k * FRAME_SHIFT + FRAME_WIDTH].iter().any(|&b| b))
            .collect();
        assert_eq!(f.vad_mask, expected);
        assert!(expected.iter().any(|&b| !b));
    }

    #[test]
    fn stationary_noise_is_all_speech() {
        let mut rng = crate::seed::rng(5);
        let samples: Vec<f64> = (0..48000)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                (0.1 * v).clamp(-1.0, 1.0)
            })
            .collect();
        let f = extract_features(&Waveform::new(samples, SAMPLE_RATE).unwrap()).unwrap();
        assert!(f.vad_mask.iter().all(|&b| b));
    }

    proptest! {
        #[test]
        fn permutation_covariant(
            energies in prop::collection::vec(-23.0f64..5.0, 2..80),
            seed in any::<u64>(),
        ) {
            let mask = vad_mask_from_energies(&energies);
            let mut idx: Vec<usize> = (0..energies.len()).collect();
            let mut rng = crate::seed::rng(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<f64> = idx.iter().map(|&i| energies[i]).collect();
            let pmask = vad_mask_from_energies(&permuted);
            for (j, &i) in idx.iter().enumerate() {
                prop_assert_eq!(pmask[j], mask[i]);
            }
        }
    }
}

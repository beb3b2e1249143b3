use ndarray::{s, Array2};

use super::{FeatureSequence, N_MELS};
use crate::error::{Error, Result};

pub const STACKED_DIM: usize = 2 * N_MELS;

/// 80-d model input: pairs of consecutive VAD-retained 40-d frames.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedFeatures {
    /// `S x 80`
    pub frames: Array2<f64>,
    pub source_frame_count: usize,
}

impl StackedFeatures {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

/// Concatenates retained frames pairwise (1st+2nd, 3rd+4th, ...). A trailing
/// unpaired frame is dropped, so the output has `floor(T_voiced / 2)` rows.
pub fn stack_frames(features: &FeatureSequence) -> Result<StackedFeatures> {
    let retained: Vec<usize> = features
        .vad_mask
        .iter()
        .enumerate()
        .filter_map(|(i, &keep)| keep.then_some(i))
        .collect();
    if retained.len() < 2 {
        return Err(Error::TooShort(format!(
            "{} voiced frames, need at least 2",
            retained.len()
        )));
    }
    let rows = retained.len() / 2;
    let mut out = Array2::zeros((rows, STACKED_DIM));
    for (s, pair) in retained.chunks_exact(2).enumerate() {
        out.slice_mut(s![s, ..N_MELS])
            .assign(&features.frames.row(pair[0]));
        out.slice_mut(s![s, N_MELS..])
            .assign(&features.frames.row(pair[1]));
    }
    Ok(StackedFeatures {
        frames: out,
        source_frame_count: features.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(t: usize, mask: Vec<bool>) -> FeatureSequence {
        let frames = Array2::from_shape_fn((t, N_MELS), |(i, j)| (i * 100 + j) as f64);
        FeatureSequence {
            frames,
            vad_mask: mask,
        }
    }

    #[test]
    fn counts() {
        assert_eq!(stack_frames(&seq(98, vec![true; 98])).unwrap().len(), 49);
        assert_eq!(stack_frames(&seq(99, vec![true; 99])).unwrap().len(), 49);
        let mut m = vec![false; 5];
        m[3] = true;
        assert!(matches!(stack_frames(&seq(5, m)), Err(Error::TooShort(_))));
    }

    proptest! {
        #[test]
        fn rows_are_concatenated_retained_pairs(mask in prop::collection::vec(any::<bool>(), 2..60)) {
            let f = seq(mask.len(), mask.clone());
            let retained: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            match stack_frames(&f) {
                Err(_) => prop_assert!(retained.len() < 2),
                Ok(st) => {
                    prop_assert_eq!(st.len(), retained.len() / 2);
                    prop_assert_eq!(st.source_frame_count, mask.len());
                    for s in 0..st.len() {
                        let a = f.frames.row(retained[2 * s]);
                        let b = f.frames.row(retained[2 * s + 1]);
                        let row = st.frames.row(s);
                        for j in 0..N_MELS {
                            prop_assert_eq!(row[j].to_bits(), a[j].to_bits());
                            prop_assert_eq!(row[N_MELS + j].to_bits(), b[j].to_bits());
                        }
                    }
                }
            }
        }
    }
}

//! Enrollment, cosine trial scoring, trial lists and equal error rate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dvector::DVector;
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct EnrollmentModel {
    pub speaker_id: String,
    pub embedding: DVector,
    pub n_enroll_utts: usize,
}

/// Mean of the enrollment d-vectors, L2-normalized again.
pub fn enroll(speaker_id: &str, dvectors: &[DVector]) -> Result<EnrollmentModel> {
    let first = dvectors
        .first()
        .ok_or_else(|| Error::Parameter(format!("no enrollment utterances for '{speaker_id}'")))?;
    let dim = first.dim();
    let mut mean = vec![0.0; dim];
    for d in dvectors {
        if d.dim() != dim {
            return Err(Error::Parameter(format!(
                "enrollment d-vectors of dimension {} and {dim}",
                d.dim()
            )));
        }
        for (m, v) in mean.iter_mut().zip(d.values()) {
            *m += v;
        }
    }
    let n = dvectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    // a mean this short is cancellation noise, not a direction
    if norm < 1e-12 {
        return Err(Error::DegenerateEnrollment);
    }
    Ok(EnrollmentModel {
        speaker_id: speaker_id.to_string(),
        embedding: DVector::from_raw(mean),
        n_enroll_utts: dvectors.len(),
    })
}

/// Dot product of unit vectors, i.e. their cosine.
pub fn score_trial(model: &EnrollmentModel, test: &DVector) -> f64 {
    model.embedding.dot(test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Target,
    Nontarget,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll_speaker: String,
    pub test_utterance: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    /// Parallel to `trials` once scored.
    pub scores: Option<Vec<f64>>,
}

impl TrialSet {
    pub fn count(&self, label: Label) -> usize {
        self.trials.iter().filter(|t| t.label == label).count()
    }

    /// `"<enroll_spk> <test_utt_id> <target|nontarget>"` per line, with the
    /// score appended when present.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.trials.iter().enumerate() {
            s.push_str(&format!("{} {} {}", t.enroll_speaker, t.test_utterance, t.label));
            if let Some(sc) = &self.scores {
                s.push_str(&format!(" {}", sc[i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        let mut scores = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 3 && fields.len() != 4 {
                return Err(Error::Format(format!("trial line {}: '{line}'", n + 1)));
            }
            let label = match fields[2] {
                "target" => Label::Target,
                "nontarget" => Label::Nontarget,
                other => return Err(Error::Format(format!("trial line {}: label '{other}'", n + 1))),
            };
            trials.push(Trial {
                enroll_speaker: fields[0].to_string(),
                test_utterance: fields[1].to_string(),
                label,
            });
            if fields.len() == 4 {
                let s: f64 = fields[3]
                    .parse()
                    .map_err(|_| Error::Format(format!("trial line {}: score '{}'", n + 1, fields[3])))?;
                scores.push(s);
            }
        }
        let scores = match scores.len() {
            0 => None,
            k if k == trials.len() => Some(scores),
            _ => return Err(Error::Format("some trial lines lack scores".into())),
        };
        Ok(Self { trials, scores })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// `(utterance id, speaker id)` pairs.
pub type UttList<'a> = [(&'a str, &'a str)];

/// Target trials pair each enrolled speaker with its own test utterances,
/// nontarget trials with other speakers' test utterances. `None` takes
/// every available pair; otherwise pairs are sampled uniformly without
/// replacement. Output lists targets then nontargets, each in canonical
/// (speaker, utterance) order.
pub fn build_trials(
    enroll: &UttList,
    test: &UttList,
    n_target: Option<usize>,
    n_nontarget: Option<usize>,
    rng: &mut Rng,
) -> Result<TrialSet> {
    let enroll_ids: BTreeSet<&str> = enroll.iter().map(|(u, _)| *u).collect();
    if let Some((u, _)) = test.iter().find(|(u, _)| enroll_ids.contains(u)) {
        return Err(Error::Config(format!(
            "utterance '{u}' is in both the enrollment and the test list"
        )));
    }
    let speakers: Vec<&str> = enroll
        .iter()
        .map(|(_, s)| *s)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tests: Vec<(&str, &str)> = test.iter().map(|(u, s)| (*s, *u)).collect();
    tests.sort();
    tests.dedup();
    // contiguous block of each speaker's tests
    let mut blocks: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (i, (s, _)) in tests.iter().enumerate() {
        blocks.entry(s).and_modify(|b| b.1 = i + 1).or_insert((i, i + 1));
    }
    let own = |s: &str| blocks.get(s).copied().unwrap_or((0, 0));

    let target_counts: Vec<usize> = speakers.iter().map(|s| own(s).1 - own(s).0).collect();
    let non_counts: Vec<usize> = target_counts.iter().map(|c| tests.len() - c).collect();
    let total_t: usize = target_counts.iter().sum();
    let total_n: usize = non_counts.iter().sum();
    let want_t = n_target.unwrap_or(total_t);
    let want_n = n_nontarget.unwrap_or(total_n);
    if want_t > total_t || want_n > total_n {
        return Err(Error::Config(format!(
            "requested {want_t} target / {want_n} nontarget trials, only {total_t} / {total_n} available"
        )));
    }
    if total_t == 0 || total_n == 0 {
        return Err(Error::Config(format!(
            "trial list needs both classes: {total_t} target and {total_n} nontarget pairs available"
        )));
    }

    let pick = |total: usize, want: usize, rng: &mut Rng| -> Vec<usize> {
        let mut v = if want == total {
            (0..total).collect()
        } else {
            sample(rng, total, want).into_vec()
        };
        v.sort_unstable();
        v
    };
    // global index -> (speaker, k-th pair of that speaker)
    let locate = |counts: &[usize], mut idx: usize| -> (usize, usize) {
        for (s, &c) in counts.iter().enumerate() {
            if idx < c {
                return (s, idx);
            }
            idx -= c;
        }
        unreachable!("index within total")
    };

    let mut trials = Vec::with_capacity(want_t + want_n);
    for idx in pick(total_t, want_t, rng) {
        let (s, k) = locate(&target_counts, idx);
        let (a, _) = own(speakers[s]);
        trials.push(Trial {
            enroll_speaker: speakers[s].to_string(),
            test_utterance: tests[a + k].1.to_string(),
            label: Label::Target,
        });
    }
    for idx in pick(total_n, want_n, rng) {
        let (s, k) = locate(&non_counts, idx);
        let (a, b) = own(speakers[s]);
        let j = if k < a { k } else { k + (b - a) };
        trials.push(Trial {
            enroll_speaker: speakers[s].to_string(),
            test_utterance: tests[j].1.to_string(),
            label: Label::Nontarget,
        });
    }
    Ok(TrialSet {
        trials,
        scores: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    /// Fraction in `[0, 1]`.
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate with the decision rule "accept iff score >= t".
///
/// Sweeps every distinct score as a threshold, with
/// `FAR(t) = #{nontarget >= t} / N_non` and `FRR(t) = #{target < t} / N_tar`.
/// The first (lowest) threshold where `FAR - FRR <= 0` marks the crossing;
/// the EER is linearly interpolated between it and the previous threshold.
/// If the difference stays positive up to the highest score, the crossing
/// is taken against the point just above it, `(FAR, FRR) = (0, 1)`.
pub fn compute_eer(scores: &[f64], labels: &[Label]) -> Result<Eer> {
    if scores.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Parameter(format!("non-finite score {s}")));
    }
    let n_tar = labels.iter().filter(|l| **l == Label::Target).count();
    let n_non = labels.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::Config(format!(
            "EER needs both classes: {n_tar} target, {n_non} nontarget scores"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // walk thresholds upwards; before threshold t_k, everything below it has
    // been passed: targets below count as rejections, nontargets below no
    // longer count as acceptances
    let (nt, nn) = (n_tar as f64, n_non as f64);
    let mut tar_below = 0usize;
    let mut non_below = 0usize;
    let mut prev: Option<(f64, f64, f64)> = None; // (t, far, frr)
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let far = (n_non - non_below) as f64 / nn;
        let frr = tar_below as f64 / nt;
        if far - frr <= 0.0 {
            return Ok(interpolate(prev, (t, far, frr)));
        }
        prev = Some((t, far, frr));
        while i < order.len() && scores[order[i]] == t {
            match labels[order[i]] {
                Label::Target => tar_below += 1,
                Label::Nontarget => non_below += 1,
            }
            i += 1;
        }
    }
    let (t, ..) = prev.expect("at least two scores");
    Ok(interpolate(prev, (t, 0.0, 1.0)))
}

fn interpolate(prev: Option<(f64, f64, f64)>, cur: (f64, f64, f64)) -> Eer {
    let (t1, far1, frr1) = cur;
    let d1 = far1 - frr1;
    match prev {
        Some((t0, far0, frr0)) if d1 < 0.0 => {
            let d0 = far0 - frr0;
            let a = d0 / (d0 - d1);
            Eer {
                eer: far0 + a * (far1 - far0),
                threshold: t0 + a * (t1 - t0),
            }
        }
        _ => Eer {
            eer: far1,
            threshold: t1,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recipe: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub with_mtr: Option<bool>,
    pub eer_percent: f64,
    pub threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

/// Scores every trial and computes the EER. `models` maps enrolled speaker
/// ids, `tests` maps test utterance ids.
pub fn score_trials(
    trials: &mut TrialSet,
    models: &BTreeMap<String, EnrollmentModel>,
    tests: &BTreeMap<String, DVector>,
) -> Result<EerReport> {
    let mut scores = Vec::with_capacity(trials.trials.len());
    for t in &trials.trials {
        let m = models.get(&t.enroll_speaker).ok_or_else(|| {
            Error::Config(format!("trial references unknown speaker '{}'", t.enroll_speaker))
        })?;
        let d = tests.get(&t.test_utterance).ok_or_else(|| {
            Error::Config(format!("trial references unknown utterance '{}'", t.test_utterance))
        })?;
        scores.push(score_trial(m, d));
    }
    let labels: Vec<Label> = trials.trials.iter().map(|t| t.label).collect();
    let eer = compute_eer(&scores, &labels)?;
    trials.scores = Some(scores);
    Ok(EerReport {
        recipe: None,
        with_mtr: None,
        eer_percent: 100.0 * eer.eer,
        threshold: eer.threshold,
        n_target: trials.count(Label::Target),
        n_nontarget: trials.count(Label::Nontarget),
    })
}

//! Acceptance suite: one test per criterion, each writing a single
//! `criterion N: PASS|FAIL ...` line to stderr before asserting.
//!
//! Criteria 7 and 8 train many models on the generated desk task and take
//! tens of minutes on one core in release mode; they share one `DeskData`.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use synthvox::audio::Waveform;
use synthvox::augment::{mix_noise, mtr_augment_utterance, wada_snr, MtrConfig, MtrResources, NoiseClip, NoiseCategory};
use synthvox::dvector::{multireader_gradient, ModelConfig, ModelParams, SequenceBatch, SourceBatch};
use synthvox::eval::{compute_eer, Label};
use synthvox::experiment::{DeskConfig, DeskData};
use synthvox::pipeline::{self, BuildVoicesArgs, EvaluateArgs, TrainArgs, MANIFEST_FILE};
use synthvox::recipes::Recipe;
use synthvox::seed;
use synthvox::transcripts::{gen_digits, Condition};
use synthvox::voices::{fit_gmm, greedy_select, CandidateVoice, Origin, SpeakerEmbedding, VoiceBuildConfig};
use synthvox::world::WorldConfig;

/// Written to the stderr handle directly so the line shows even when the
/// harness captures test output.
fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n}: {} {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn max_pairwise(vs: &[CandidateVoice]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            worst = worst.max(cosine(&vs[i].mean_dvector, &vs[j].mean_dvector));
        }
    }
    worst
}

// ------------------------------------------------------------------ 1

#[test]
fn criterion_01_gradient_oracle() {
    let start = Instant::now();
    let cfg = ModelConfig {
        input_dim: 6,
        hidden: 8,
        projection: 4,
        layers: 3,
        embedding_dim: 4,
    };
    let mut rng = seed::rng(101);
    let mut params = ModelParams::init(cfg, &mut rng).unwrap();
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    params.ge2e_w = 3.0;
    params.ge2e_b = -1.0;
    let batch = |rng: &mut seed::Rng, n: usize, m: usize| {
        let seqs: Vec<Array2<f64>> = (0..n * m)
            .map(|_| Array2::from_shape_simple_fn((3, 6), || rng.random_range(-1.0..1.0)))
            .collect();
        let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
        SourceBatch {
            weight: 1.0,
            n,
            m,
            sequences: SequenceBatch::from_sequences(&views, 6).unwrap(),
        }
    };
    // two sources with unequal weights exercise the MultiReader sum
    let mut b2 = batch(&mut rng, 3, 2);
    b2.weight = 0.5;
    let batches = [batch(&mut rng, 2, 2), b2];
    let (_, grads) = multireader_gradient(&params, &batches).unwrap();
    let loss = |p: &ModelParams| multireader_gradient(p, &batches).unwrap().0;
    let eps = 1e-4;

    let mut worst: f64 = 0.0;
    for ti in 0..params.tensors().len() {
        let mut diff = 0.0;
        for k in 0..params.tensors()[ti].len() {
            let mut p = params.clone();
            p.tensors_mut()[ti][k] += eps;
            let mut q = params.clone();
            q.tensors_mut()[ti][k] -= eps;
            let num = (loss(&p) - loss(&q)) / (2.0 * eps);
            diff += (num - grads.tensors()[ti][k]).powi(2);
        }
        let norm: f64 = grads.tensors()[ti].iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(diff.sqrt() / norm);
    }
    let scalars: [fn(&mut ModelParams) -> &mut f64; 2] = [|p| &mut p.ge2e_w, |p| &mut p.ge2e_b];
    for field in scalars {
        let mut p = params.clone();
        *field(&mut p) += eps;
        let mut q = params.clone();
        *field(&mut q) -= eps;
        let num = (loss(&p) - loss(&q)) / (2.0 * eps);
        let ana = *field(&mut grads.clone());
        worst = worst.max((num - ana).abs() / ana.abs().max(1e-12));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst < 1e-4 && secs < 30.0,
        format!("max relative error {worst:.2e}, {secs:.1} s"),
    );
}

// ------------------------------------------------------------------ 2

/// Recounts FAR and FRR at every distinct score and interpolates the first
/// crossing, independently of the library's sorted sweep.
fn brute_force_eer(scores: &[f64], labels: &[Label]) -> f64 {
    let nt = labels.iter().filter(|l| **l == Label::Target).count() as f64;
    let nn = labels.len() as f64 - nt;
    let mut ts = scores.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let rates = |t: f64| {
        let fa = scores.iter().zip(labels).filter(|(s, l)| **l == Label::Nontarget && **s >= t).count();
        let fr = scores.iter().zip(labels).filter(|(s, l)| **l == Label::Target && **s < t).count();
        (fa as f64 / nn, fr as f64 / nt)
    };
    let mut pts: Vec<(f64, f64)> = ts.iter().map(|&t| rates(t)).collect();
    pts.push((0.0, 1.0));
    for k in 0..pts.len() {
        let (a1, r1) = pts[k];
        if a1 - r1 <= 0.0 {
            if k == 0 || a1 == r1 {
                return a1;
            }
            let (a0, r0) = pts[k - 1];
            let alpha = (a0 - r0) / ((a0 - r0) - (a1 - r1));
            return a0 + alpha * (a1 - a0);
        }
    }
    unreachable!("the appended (0, 1) point always crosses")
}

#[test]
fn criterion_02_eer_oracle() {
    let mut rng = seed::rng(202);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(2..80);
        let tied = case % 3 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random();
                if tied { (v * 6.0).floor() } else { v }
            })
            .collect();
        let mut labels: Vec<Label> =
            (0..n).map(|_| if rng.random::<bool>() { Label::Target } else { Label::Nontarget }).collect();
        labels[0] = Label::Target;
        labels[1] = Label::Nontarget;
        let e = compute_eer(&scores, &labels).unwrap().eer;
        worst = worst.max((e - brute_force_eer(&scores, &labels)).abs());
    }

    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Target } else { Label::Nontarget }).collect();
    let random = compute_eer(&scores, &labels).unwrap().eer;

    let sep_scores: Vec<f64> = (0..100).map(|i| if i < 50 { 1.0 + i as f64 } else { -(i as f64) }).collect();
    let sep_labels: Vec<Label> = (0..100).map(|i| if i < 50 { Label::Target } else { Label::Nontarget }).collect();
    let perfect = compute_eer(&sep_scores, &sep_labels).unwrap().eer;

    report(
        2,
        worst <= 1e-12 && (0.45..=0.55).contains(&random) && perfect == 0.0,
        format!("max |eer - brute force| {worst:.1e} over 1000 sets, random {random:.4}, separated {perfect}"),
    );
}

// ------------------------------------------------------------------ 3

fn random_candidates(rng: &mut seed::Rng, n: usize, dim: usize) -> Vec<CandidateVoice> {
    (0..n)
        .map(|i| {
            // a shared offset puts many pairs above the threshold
            let v: Vec<f64> = (0..dim)
                .map(|k| {
                    let g: f64 = StandardNormal.sample(rng);
                    g + if k == 0 { 1.5 } else { 0.0 }
                })
                .collect();
            CandidateVoice {
                embedding: SpeakerEmbedding {
                    speaker_id: format!("c{i}"),
                    values: vec![0.0; 32],
                    origin: Origin::Sampled,
                    source_model_dim: 32,
                },
                mean_dvector: v,
                n_utts_averaged: 1,
            }
        })
        .collect()
}

#[test]
fn criterion_03_selection_invariant() {
    let mut rng = seed::rng(303);
    let mut worst = f64::NEG_INFINITY;
    let mut accepted = 0;
    let mut rejected = 0;
    for run in 0..200 {
        let cands = random_candidates(&mut rng, 20 + run % 60, 3 + run % 8);
        let set = greedy_select(cands, 0.4);
        worst = worst.max(max_pairwise(&set.voices));
        accepted += set.voices.len();
        rejected += set.rejected;
    }
    // candidates profiled by a trained selection model on the desk task
    let d = desk();
    let desk_set = greedy_select(d.voice_build.candidates.clone(), 0.4);
    worst = worst.max(max_pairwise(&desk_set.voices));
    let calibrated = &d.voice_build.selected;
    let calibrated_ok = max_pairwise(&calibrated.voices) <= calibrated.threshold + 1e-9;
    report(
        3,
        worst <= 0.4 + 1e-9 && rejected > 0 && calibrated_ok,
        format!(
            "max pairwise cosine {worst:.4} at threshold 0.4 over 201 runs ({accepted} accepted, {rejected} \
             rejected; desk {} of {}); desk calibrated run ({:.3}) holds: {calibrated_ok}",
            desk_set.voices.len(),
            d.voice_build.candidates.len(),
            calibrated.threshold
        ),
    );
}

// ------------------------------------------------------------------ 4

fn gaussian_cloud(rng: &mut seed::Rng, n: usize, centre: &[f64], sd: f64) -> Vec<SpeakerEmbedding> {
    (0..n)
        .map(|_| {
            let values: Vec<f64> = centre
                .iter()
                .map(|c| {
                    let g: f64 = StandardNormal.sample(rng);
                    c + sd * g
                })
                .collect();
            SpeakerEmbedding {
                speaker_id: String::new(),
                source_model_dim: values.len(),
                values,
                origin: Origin::Real,
            }
        })
        .collect()
}

#[test]
fn criterion_04_gmm_suite() {
    let mut rng = seed::rng(404);
    let centres = [[0.0, 0.0, 0.0], [12.0, 0.0, 0.0], [0.0, 12.0, -12.0]];
    let sizes = [1500, 2500, 1000];
    let mut data = Vec::new();
    for (c, &s) in centres.iter().zip(&sizes) {
        data.extend(gaussian_cloud(&mut rng, s, c, 1.0));
    }
    let (g, trace) = fit_gmm(&data, 3, 9).unwrap();
    let monotone = trace.objective.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs());
    let ll_monotone = trace.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs());

    let total: f64 = sizes.iter().sum::<usize>() as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_weight: f64 = 0.0;
    for (c, &s) in centres.iter().zip(&sizes) {
        let dist = |j: usize| g.means[j].iter().zip(c).map(|(m, t)| (m - t).powi(2)).sum::<f64>().sqrt();
        let j = (0..3).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
        worst_mean = worst_mean.max(dist(j));
        worst_weight = worst_weight.max((g.weights[j] - s as f64 / total).abs());
    }

    let n = 40_000;
    let samples = g.sample(n, &mut seed::rng(405)).unwrap();
    let (m_true, c_true) = g.moments();
    let mean: Vec<f64> = (0..3).map(|k| samples.iter().map(|e| e.values[k]).sum::<f64>() / n as f64).collect();
    let tr_true = c_true.diag().sum();
    let var: f64 = samples
        .iter()
        .map(|e| e.values.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let mean_err = mean.iter().zip(m_true.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let moments_ok = mean_err < 0.05 * tr_true.sqrt() && (var - tr_true).abs() / tr_true < 0.05;

    report(
        4,
        monotone && ll_monotone && worst_mean < 0.1 && worst_weight < 0.05 && moments_ok,
        format!(
            "{} EM iterations monotone {monotone} (log-likelihood {ll_monotone}); mean error {worst_mean:.3}, \
             weight error {worst_weight:.3}; sample mean error {mean_err:.3}, trace {var:.2} vs {tr_true:.2}",
            trace.objective.len()
        ),
    );
}

// ------------------------------------------------------------------ 5

fn uniform_wave(rng: &mut seed::Rng, n: usize, amp: f64) -> Waveform {
    Waveform::new((0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect(), 16000).unwrap()
}

/// One-sample Kolmogorov-Smirnov statistic against `U[lo, hi]`.
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_05_snr_exactness() {
    let mut rng = seed::rng(505);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(400..4000);
        let signal = uniform_wave(&mut rng, n, 0.01);
        let (extra, amp) = (rng.random_range(0..500), rng.random_range(0.001..1.0));
        let noise = uniform_wave(&mut rng, n + extra, amp);
        let snr = rng.random_range(-20.0..40.0);
        let m = mix_noise(&signal, &noise, snr).unwrap();
        // amplitudes stay far below the clip level, so the mixture minus the
        // signal is the scaled noise
        assert!(m.mixture.samples.iter().all(|x| x.abs() < 1.0));
        let pn = m.mixture.samples.iter().zip(&signal.samples).map(|(y, s)| (y - s).powi(2)).sum::<f64>() / n as f64;
        let measured = 10.0 * (signal.power() / pn).log10();
        worst = worst.max((measured - snr).abs());
    }

    let cfg = MtrConfig {
        copies_per_utterance: 15,
        seed: 55,
        ..MtrConfig::default()
    };
    let res = MtrResources {
        noises: vec![NoiseClip {
            clip_id: "n".into(),
            category: NoiseCategory::ALL[0],
            waveform: uniform_wave(&mut rng, 8000, 0.1),
        }],
        rirs: vec![],
    };
    let utt = uniform_wave(&mut rng, 1600, 0.1);
    let mut draws = Vec::new();
    for i in 0..200 {
        for c in mtr_augment_utterance(&format!("u{i}"), &utt, &cfg, &res).unwrap() {
            draws.push(c.plan.snr_db);
        }
    }
    let n = draws.len();
    let d = ks_uniform(draws, 3.0, 15.0);
    // asymptotic critical value at alpha = 0.02: sqrt(-ln(0.01) / 2) / sqrt(n)
    let crit = (-(0.01f64).ln() / 2.0).sqrt() / (n as f64).sqrt();
    report(
        5,
        worst <= 1e-6 && d < crit && (cfg.snr_low_db, cfg.snr_high_db) == (3.0, 15.0),
        format!("max SNR error {worst:.2e} dB over 1000 mixes; KS D = {d:.4} < {crit:.4} on {n} MTR draws"),
    );
}

// ------------------------------------------------------------------ 6

fn gamma_speech(n: usize, seed_: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_);
    let gamma = Gamma::new(0.4, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let a: f64 = gamma.sample(&mut rng);
            if rng.random::<bool>() { 0.02 * a } else { -0.02 * a }
        })
        .collect()
}

fn gaussian_noise(n: usize, seed_: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_);
    (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g
        })
        .collect()
}

#[test]
fn criterion_06_wada_snr() {
    let mut worst: f64 = 0.0;
    let mut estimates = Vec::new();
    let mut scale_err: f64 = 0.0;
    for (i, snr) in [0.0, 5.0, 10.0, 15.0, 20.0].into_iter().enumerate() {
        let s = Waveform::new(gamma_speech(64_000, 60 + i as u64), 16000).unwrap();
        let n = Waveform::new(gaussian_noise(64_000, 70 + i as u64), 16000).unwrap();
        let m = mix_noise(&s, &n, snr).unwrap().mixture;
        let est = wada_snr(&m).unwrap();
        worst = worst.max((est - snr).abs());
        estimates.push(format!("{est:.2}"));
        // exact up to floating-point rounding of the log-amplitude sum
        for k in [0.5, 0.013, 3.7, 250.0] {
            let scaled = Waveform::new(m.samples.iter().map(|x| k * x).collect(), 16000).unwrap();
            scale_err = scale_err.max((wada_snr(&scaled).unwrap() - est).abs());
        }
    }
    report(
        6,
        worst <= 3.0 && scale_err <= 1e-9,
        format!("estimates [{}] dB at 0/5/10/15/20, max error {worst:.2} dB; largest change under rescaling {scale_err:.1e} dB", estimates.join(", ")),
    );
}

// ------------------------------------------------------------ 7 and 8

const SEEDS: [u64; 3] = [1, 2, 3];

fn desk_config() -> DeskConfig {
    let mut cfg = DeskConfig::default();
    cfg.world.selector_speakers = 64;
    cfg.selector_train.steps = 800;
    cfg.train.steps = 600;
    cfg.threshold_quantile = Some(0.9);
    cfg.voices.budget = 48;
    cfg
}

fn desk() -> &'static DeskData {
    static DESK: OnceLock<DeskData> = OnceLock::new();
    DESK.get_or_init(|| {
        let t = Instant::now();
        let d = DeskData::build(desk_config()).unwrap();
        eprintln!(
            "desk task built in {:.0} s: {} sampled voices at threshold {:.3}",
            t.elapsed().as_secs_f64(),
            d.voices.len(),
            d.voice_build.selected.threshold
        );
        d
    })
}

fn mean_eer(d: &DeskData, recipe: Recipe, sampled: &[synthvox::experiment::Utterance]) -> f64 {
    let eers: Vec<f64> = SEEDS
        .iter()
        .map(|&s| d.evaluate(&d.train(recipe, sampled, s).unwrap()).unwrap().eer_percent)
        .collect();
    eprintln!("{recipe}: EER {eers:.2?}");
    eers.iter().sum::<f64>() / eers.len() as f64
}

#[test]
fn criterion_07_trend_table2() {
    let d = desk();
    let base = mean_eer(d, Recipe::Baseline, &d.sampled);
    let sampled = mean_eer(d, Recipe::TtsSampled, &d.sampled);
    let base_mtr = mean_eer(d, Recipe::BaselineMtr, &d.sampled);
    let combined = mean_eer(d, Recipe::CombinedMtr, &d.sampled);
    report(
        7,
        sampled < base && combined <= base_mtr,
        format!(
            "mean EER over seeds {SEEDS:?}: TTS-Sampled {sampled:.2}% vs Baseline {base:.2}%, \
             Combined-MTR {combined:.2}% vs Baseline-MTR {base_mtr:.2}%"
        ),
    );
}

#[test]
fn criterion_08_trend_table3() {
    let d = desk();
    let mut eer = Vec::new();
    for c in [Condition::RandomWordsFull, Condition::RandomWords100, Condition::RandomDigits] {
        let sampled = d.synthesize_sampled(&d.transcripts(c).unwrap()).unwrap();
        eer.push(mean_eer(d, Recipe::TtsOnly, &sampled));
    }
    report(
        8,
        eer[0] <= eer[1] && eer[1] <= eer[2],
        format!(
            "TTS-only mean EER over seeds {SEEDS:?}: random-words-full {:.2}%, random-words-100 {:.2}%, \
             random-digits {:.2}%",
            eer[0], eer[1], eer[2]
        ),
    );
}

// ------------------------------------------------------------------ 9

#[test]
fn criterion_09_transcript_counts() {
    let set = gen_digits(5000, &mut seed::rng(909));
    let vocab = set.vocabulary().len();
    let (lo, hi) = set
        .utterances
        .iter()
        .map(|u| u.len())
        .fold((usize::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
    report(
        9,
        vocab == 11 && lo >= 3 && hi <= 7,
        format!("digits vocabulary {vocab}, lengths {lo}..={hi} over {} utterances", set.len()),
    );
}

// ----------------------------------------------------------------- 10

/// The file pipeline end to end: corpus, features, MTR, a selection model,
/// voice building, training and evaluation. Returns the produced artifacts.
fn run_pipeline(out: &Path, master_seed: u64) -> Vec<(String, Vec<u8>)> {
    let world = WorldConfig {
        seed: master_seed,
        real_speakers: 6,
        extra_tts_speakers: 24,
        selector_speakers: 6,
        eval_speakers: 4,
        real_utterances: 4,
        selector_utterances: 4,
        enroll_utterances: 2,
        test_utterances: 3,
        lexicon_size: 300,
        query_vocabulary: 100,
        noise_clips_per_category: 1,
        noise_clip_s: 1.0,
        rirs: 2,
        ..WorldConfig::default()
    };
    let corpus = out.join("corpus");
    pipeline::gen_corpus(&world, 50, &corpus).unwrap();
    let feats = |name: &str| {
        let dir = out.join(format!("feats-{name}"));
        let s = pipeline::featurize_manifest(&corpus.join(name).join(MANIFEST_FILE), &dir).unwrap();
        assert!(s.failed.is_empty());
        dir.join(MANIFEST_FILE)
    };
    let (real, selector, enroll, test) = (feats("real"), feats("selector"), feats("enroll"), feats("test"));
    let mtr = out.join("mtr");
    let mtr_cfg = MtrConfig {
        copies_per_utterance: 1,
        seed: seed::derive(master_seed, "mtr", ""),
        ..MtrConfig::default()
    };
    pipeline::augment_manifest(
        &real,
        &corpus.join("noise/noise.jsonl"),
        Some(corpus.join("rirs.json").as_path()),
        &mtr_cfg,
        &mtr,
    ).unwrap();

    let mut train = DeskConfig::default().train;
    train.speakers_per_batch = 3;
    train.utterances_per_speaker = 2;
    train.steps = 5;
    let train_run = |manifests: Vec<PathBuf>, recipe: Recipe, name: &str| {
        let ckpt = out.join(format!("{name}.ckpt"));
        pipeline::train_cmd(&TrainArgs {
            manifests,
            sources: recipe.sources(),
            train: train.clone(),
            seed: master_seed,
            out: ckpt.clone(),
            log: Some(out.join(format!("{name}.log"))),
        })
        .unwrap();
        ckpt
    };
    let selector_ckpt = train_run(vec![selector], Recipe::Baseline, "selector");

    let voices_dir = out.join("voices");
    pipeline::build_voices_cmd(&BuildVoicesArgs {
        embeddings: [32, 64, 128].map(|d| (d, corpus.join(format!("embeddings-{d}.jsonl")))).to_vec(),
        model: selector_ckpt,
        backend: corpus.join("backend.json"),
        probes: corpus.join("queries.txt"),
        transcripts: None,
        real_manifest: Some(real.clone()),
        voices: VoiceBuildConfig {
            budget: 1,
            probe_utterances: 2,
            ..VoiceBuildConfig::default()
        },
        threshold_quantile: Some(0.9),
        utterances_per_voice: 2,
        seed: master_seed,
        out: voices_dir.clone(),
    })
    .unwrap();

    let model = train_run(vec![real, mtr.join(MANIFEST_FILE), voices_dir.join(MANIFEST_FILE)], Recipe::BaselineMtr, "model");
    let eer = pipeline::evaluate_cmd(&EvaluateArgs {
        model,
        enroll,
        test,
        trials: None,
        n_target: None,
        n_nontarget: None,
        seed: master_seed,
        recipe: Some(Recipe::BaselineMtr.to_string()),
        with_mtr: None,
        scores_out: Some(out.join("scores.jsonl")),
    })
    .unwrap();
    std::fs::write(out.join("report.md"), pipeline::report_table(&[eer])).unwrap();

    [
        "selector.ckpt",
        "model.ckpt",
        "voices/selection.json",
        "voices/voices.jsonl",
        "scores.jsonl",
        "report.md",
    ]
    .iter()
    .map(|f| (f.to_string(), std::fs::read(out.join(f)).unwrap()))
    .collect()
}

#[test]
fn criterion_10_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path(), 10);
    let second = run_pipeline(b.path(), 10);
    // a different master seed must change the trained model
    let c = tempfile::tempdir().unwrap();
    let other = run_pipeline(c.path(), 11);
    let seed_matters = other[1].1 != first[1].1;
    let voices = String::from_utf8_lossy(&first[3].1).lines().count();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    report(
        10,
        differing.is_empty() && seed_matters && voices > 0,
        format!(
            "{} artifacts compared byte for byte ({voices} voices built), differing: {differing:?}; \
             another seed changes the model: {seed_matters}",
            first.len()
        ),
    );
}

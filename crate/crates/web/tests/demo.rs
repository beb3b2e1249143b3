use synthvox_web::{eer_of, mix_with_noise, parse_category, synthesize_voice};

#[test]
fn synthesis_is_deterministic_per_seed() {
    let a = synthesize_voice(7, "alpha bravo charlie").unwrap();
    let b = synthesize_voice(7, "alpha bravo charlie").unwrap();
    let c = synthesize_voice(8, "alpha bravo charlie").unwrap();
    assert_eq!(a.samples, b.samples);
    assert_ne!(a.samples, c.samples);
    assert!(a.samples.len() > 8000);
    assert!(a.samples.iter().all(|s| s.abs() <= 1.0));
    assert!(!synthesize_voice(7, "").unwrap().samples.is_empty());
}

#[test]
fn noisier_mixture_estimates_lower() {
    let s = synthesize_voice(3, "one two three four five six").unwrap();
    let quiet = mix_with_noise(&s.samples, "car", 25.0, 1).unwrap();
    let loud = mix_with_noise(&s.samples, "car", 0.0, 1).unwrap();
    assert_eq!(quiet.samples.len(), s.samples.len());
    assert!(loud.wada_mixed_db < quiet.wada_mixed_db);
    assert!(parse_category("Music").is_ok());
    assert!(mix_with_noise(&s.samples, "rain", 5.0, 1).is_err());
}

#[test]
fn eer_extremes() {
    let (e, _) = eer_of(&[0.9, 0.8, 0.7], &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(e, 0.0);
    assert!(eer_of(&[], &[0.1]).is_err());
}

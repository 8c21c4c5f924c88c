use byola_wasm::{align, augment, mix, voice};

#[test]
fn voice_is_seeded_and_standardized() {
    let a = voice(1, 0.0, 1.0, 3).unwrap();
    assert_eq!(a, voice(1, 0.0, 1.0, 3).unwrap());
    assert_ne!(a, voice(1, 0.0, 1.0, 4).unwrap());
    assert_eq!(a.bins(), 64);
    assert_eq!(a.data().len(), a.frames() * a.bins());
    let n = a.data().len() as f64;
    let mean = a.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    assert!(mean.abs() < 1e-4);
    assert!(voice(4, 0.0, 1.0, 0).is_err());
    assert!(voice(0, 20.0, 1.0, 0).is_err());
}

#[test]
fn stretch_lengthens_the_spectrogram() {
    let a = voice(0, 0.0, 1.0, 1).unwrap();
    let b = voice(0, 2.0, 1.2, 1).unwrap();
    let ratio = b.frames() as f64 / a.frames() as f64;
    assert!((ratio - 1.2).abs() < 0.03, "{ratio}");
}

#[test]
fn augmentations_keep_shape() {
    let a = voice(2, 0.0, 1.0, 5).unwrap();
    for kind in ["rrc", "gaussian"] {
        let y = augment(&a, kind, 9).unwrap();
        assert_eq!((y.frames(), y.bins()), (a.frames(), a.bins()));
        assert_ne!(y, a);
        assert_eq!(y, augment(&a, kind, 9).unwrap());
    }
    assert!(augment(&a, "reverb", 0).is_err());
}

#[test]
fn mix_at_zero_is_identity_up_to_cropping() {
    let a = voice(0, 0.0, 1.0, 1).unwrap();
    let b = voice(3, 0.0, 0.9, 1).unwrap();
    let m = mix(&a, &b, 0.0).unwrap();
    assert_eq!(m.frames(), b.frames().min(a.frames()));
    for (x, y) in m.data().iter().zip(a.data()) {
        assert!((x - y).abs() < 1e-5);
    }
    assert!(mix(&a, &b, 1.5).is_err());
}

#[test]
fn self_alignment_is_diagonal_with_zero_distortion() {
    let a = voice(1, 0.0, 1.0, 2).unwrap();
    let al = align(&a, &a).unwrap();
    assert_eq!(al.mcd(), 0.0);
    assert_eq!(al.path_a(), al.path_b());
    assert_eq!(al.path_a().len(), a.frames());
    let other = align(&a, &voice(3, 0.0, 1.1, 2).unwrap()).unwrap();
    assert!(other.mcd() > 0.0);
    assert_eq!(other.path_a().first(), Some(&0));
}

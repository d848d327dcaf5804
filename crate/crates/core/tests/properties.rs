use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qal_core::data::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, preprocess, AngleScale, RawImages, Sample,
};
use qal_core::encoding::{ClassicalEncoderConfig, Encoder, LabelScheme, Payload};
use qal_core::eval::{k_accuracy, Votes};
use qal_core::linalg::{eigh, max_abs_diff};
use qal_core::measure::partial_trace;
use qal_core::models::sample_hamiltonian;
use qal_core::noise::{depolarize, DepolarizingConvention};
use qal_core::random::random_density;
use qal_core::trainer::train_step_exact;
use qal_core::{DensityState, PureState, C64};

fn toy_sample(n: usize, seed: u64, label: usize) -> (Sample, Encoder, LabelScheme) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..3 * n).map(|_| rand::Rng::random::<f64>(&mut rng) * 3.0).collect();
    let enc = Encoder::Classical(ClassicalEncoderConfig::new(n, 3 * n).unwrap());
    (Sample { payload: Payload::Classical(x), label }, enc, LabelScheme::new(n, 2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn depolarizing_is_cptp(seed in any::<u64>(), p in 0.0f64..=1.0, pair in any::<bool>(), pauli in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rho = DensityState::new(3, random_density(8, &mut rng)).unwrap();
        let before = rho.trace();
        let qubits: &[usize] = if pair { &[2, 0] } else { &[1] };
        let conv = if pauli { DepolarizingConvention::PauliMixing } else { DepolarizingConvention::ReplaceWithIdentity };
        depolarize(&mut rho, qubits, p, conv).unwrap();
        prop_assert!((rho.trace() - before).abs() < 1e-12);
        let m = rho.matrix();
        prop_assert!(max_abs_diff(m, &m.adjoint()) < 1e-12);
        prop_assert!(eigh(m).unwrap().values[0] >= -1e-9);
    }

    #[test]
    fn exact_step_is_normalized_contraction(seed in any::<u64>(), eta in 0.01f64..=1.0, label in 0usize..2) {
        let (sample, enc, scheme) = toy_sample(3, seed, label);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let psi = PureState::haar_random(3, &mut rng);
        let u = enc.encode(&sample.payload).unwrap();
        let h = sample_hamiltonian(&u, &scheme.label_projector(label).unwrap()).unwrap();
        let hv = h.apply(psi.amplitudes()).unwrap();
        let target: Vec<C64> = psi.amplitudes().iter().zip(&hv).map(|(a, b)| a - b * eta).collect();
        let norm_sq: f64 = target.iter().map(|a| a.norm_sqr()).sum();
        let step = train_step_exact(&psi, &sample, &enc, &scheme, eta);
        if norm_sq < 1e-20 {
            prop_assert!(step.is_err());
        } else {
            let step = step.unwrap();
            prop_assert!((step.success_prob - norm_sq).abs() < 1e-10);
            let s = norm_sq.sqrt();
            for (a, b) in step.state.amplitudes().iter().zip(&target) {
                prop_assert!((a - b / s).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn majority_vote_helps_below_one_half(h in 0.0f64..0.49, k in 0usize..20) {
        let k = 2 * k + 1;
        let a = k_accuracy(h, Votes::new(k).unwrap()).unwrap();
        let b = k_accuracy(h, Votes::new(k + 2).unwrap()).unwrap();
        prop_assert!(b >= a - 1e-12);
        prop_assert!(k_accuracy(h, Votes::Infinite).unwrap() >= b - 1e-12);
    }

    #[test]
    fn partial_trace_keeps_trace(seed in any::<u64>(), keep in prop::sample::subsequence(vec![0usize, 1, 2, 3], 1..=4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = DensityState::new(4, random_density(16, &mut rng)).unwrap();
        let r = partial_trace(&rho, &keep).unwrap();
        prop_assert!((r.trace() - rho.trace()).abs() < 1e-10);
        prop_assert_eq!(r.n_qubits(), keep.len());
    }

    #[test]
    fn idx_round_trip(rows in 1usize..6, cols in 1usize..6, count in 0usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<Vec<u8>> = (0..count).map(|_| (0..rows * cols).map(|_| rand::Rng::random(&mut rng)).collect()).collect();
        let labels: Vec<u8> = (0..count).map(|_| rand::Rng::random_range(&mut rng, 0..10)).collect();
        let raw = RawImages { rows, cols, pixels: pixels.clone(), labels: labels.clone() };
        let (r, c, back) = parse_idx_images(&encode_idx_images(&raw)).unwrap();
        prop_assert_eq!((r, c), (rows, cols));
        prop_assert_eq!(back, pixels);
        prop_assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn preprocessed_angles_stay_in_range(seed in any::<u64>(), side in 1usize..=4, factor in 0.1f64..7.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<Vec<u8>> = (0..6).map(|_| (0..64).map(|_| rand::Rng::random(&mut rng)).collect()).collect();
        let raw = RawImages { rows: 8, cols: 8, pixels, labels: vec![0, 1, 0, 1, 2, 2] };
        let ds = preprocess(&raw, side, &[0, 1], AngleScale::Factor(factor)).unwrap();
        prop_assert_eq!(ds.len(), 4);
        for s in &ds.samples {
            let Payload::Classical(x) = &s.payload else { unreachable!() };
            prop_assert_eq!(x.len(), side * side);
            prop_assert!(x.iter().all(|&a| (0.0..=factor + 1e-12).contains(&a)));
        }
    }
}

mod common;

use common::{oracle_probability, random_gram, random_state, random_unitary};
use nalgebra::DMatrix;
use num_complex::Complex64;
use polymode::circuit::Circuit;
use polymode::elements::{
    bs_matrix, bs_matrix_with, grating_coupler_matrix, mode_converter_matrix, mode_mux_matrix, pbs_matrix,
    phase_shifter_matrix, propagation_matrix, unitarity_defect, BsConvention, ElementSpec, TransferMatrix,
};
use polymode::experiments::{default_n_eff, preset, SampleId};
use polymode::focksim::{
    enumerate_patterns, evolve_probability, pattern_probability, DetectionPattern, Photon, PhotonState,
    WavepacketBasis,
};
use polymode::modespace::{ModeLabel, Polarization, TransverseMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pattern<R: Rng>(rng: &mut R, n: usize, modes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..modes)).collect()
}

#[test]
fn matches_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n = rng.random_range(1..=3);
        let modes = rng.random_range(2..=6);
        let d = rng.random_range(1..=3);
        let u = random_unitary(&mut rng, modes);
        let basis = WavepacketBasis::new(random_gram(&mut rng, n, d)).unwrap();
        let state = random_state(&mut rng, n, modes, &basis);
        let pattern = random_pattern(&mut rng, n, modes);
        let tm = TransferMatrix::from_entries(u.clone());
        let got = evolve_probability(&state, &tm, &DetectionPattern::from_modes(&pattern), &basis).unwrap();
        let want = oracle_probability(&state, &u, &basis, &pattern);
        assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn oracle_agrees_on_textbook_hom() {
    let u = bs_matrix(0.5).unwrap();
    for (s, want) in [(1.0, 0.0), (0.0, 0.5), (0.5f64.sqrt(), 0.25)] {
        let basis = WavepacketBasis::pair(s).unwrap();
        let state = PhotonState::product(&[Photon::new(0, 0), Photon::new(1, 1)], &basis).unwrap();
        assert!((oracle_probability(&state, &u, &basis, &[0, 1]) - want).abs() < 1e-12);
    }
}

fn builders() -> Vec<(&'static str, DMatrix<polymode::C64>)> {
    let mut out = vec![
        ("pbs", pbs_matrix()),
        ("phase", phase_shifter_matrix(3, 1.234)),
        ("propagation", propagation_matrix(&[TransverseMode::TE0, TransverseMode::TE1, TransverseMode::TM0], 870.0, 1558.0, &default_n_eff()).unwrap()),
        ("grating", grating_coupler_matrix(0.3).unwrap()),
    ];
    for r in [0.0, 0.1, 0.5, 0.77, 1.0] {
        out.push(("bs", bs_matrix_with(r, BsConvention::Symmetric).unwrap()));
        out.push(("bs-real", bs_matrix_with(r, BsConvention::Real).unwrap()));
    }
    for x in [0.0, 0.05, 0.3] {
        out.push(("converter", mode_converter_matrix(x).unwrap()));
        out.push(("mux", mode_mux_matrix(x).unwrap()));
    }
    out
}

#[test]
fn every_builder_is_unitary() {
    for (name, m) in builders() {
        assert!(unitarity_defect(&m) <= 1e-10, "{name}: {}", unitarity_defect(&m));
    }
}

#[test]
fn compiled_presets_are_unitary_and_conserve_probability() {
    for id in SampleId::ALL {
        let exp = preset(id);
        for phase in [0.0, 0.7, 2.0] {
            let u = exp.circuit.compile_with_heater(phase).unwrap();
            assert!(u.unitarity_defect() <= 1e-10, "{id}");
            let inputs = exp.circuit.input_indices().unwrap();
            let all: Vec<usize> = (0..u.dim()).collect();
            for s in [0.0, 0.6, 1.0] {
                let basis = WavepacketBasis::pair(s).unwrap();
                let state = PhotonState::product(&[Photon::new(inputs[0], 0), Photon::new(inputs[1], 1)], &basis).unwrap();
                let total: f64 = enumerate_patterns(2, &all)
                    .iter()
                    .map(|p| pattern_probability(&state, &u, p, &basis).unwrap())
                    .sum();
                assert!((total - 1.0).abs() <= 1e-9, "{id} phase {phase} s {s}: {total}");
            }
        }
    }
}

#[test]
fn lossy_circuit_sums_to_one_over_loss_modes() {
    let mut c = Circuit::new();
    for p in ["a", "b"] {
        c.register(ModeLabel::te0(p)).unwrap();
    }
    c.push(ElementSpec::grating("a", Polarization::TE, 0.4));
    c.push(ElementSpec::beam_splitter(ModeLabel::te0("a"), ModeLabel::te0("b"), 0.3));
    c.push(ElementSpec::grating("b", Polarization::TE, 0.8));
    let u = c.compile().unwrap();
    assert!(u.couples_to_loss());
    let basis = WavepacketBasis::identical(2);
    let state = PhotonState::product(&[Photon::new(0, 0), Photon::new(1, 0)], &basis).unwrap();
    let all: Vec<usize> = (0..u.dim()).collect();
    let total: f64 = enumerate_patterns(2, &all).iter().map(|p| pattern_probability(&state, &u, p, &basis).unwrap()).sum();
    assert!((total - 1.0).abs() <= 1e-9);
    let guided: f64 = enumerate_patterns(2, &[0, 1]).iter().map(|p| evolve_probability(&state, &u, p, &basis).unwrap()).sum();
    assert!(guided < 1.0 && guided > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>(), n in 1usize..=3, modes in 2usize..=5, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = TransferMatrix::from_entries(random_unitary(&mut rng, modes));
        let basis = WavepacketBasis::new(random_gram(&mut rng, n, d)).unwrap();
        let state = random_state(&mut rng, n, modes, &basis);
        let all: Vec<usize> = (0..modes).collect();
        let mut total = 0.0;
        for p in enumerate_patterns(n, &all) {
            let prob = evolve_probability(&state, &u, &p, &basis).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&prob));
            total += prob;
        }
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn hom_coincidence_falls_with_overlap(s1 in 0.0f64..1.0, s2 in 0.0f64..1.0) {
        let u = TransferMatrix::from_entries(bs_matrix(0.5).unwrap());
        let coinc = |s: f64| {
            let basis = WavepacketBasis::pair(s).unwrap();
            let state = PhotonState::product(&[Photon::new(0, 0), Photon::new(1, 1)], &basis).unwrap();
            evolve_probability(&state, &u, &DetectionPattern::coincidence(0, 1), &basis).unwrap()
        };
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(coinc(hi) <= coinc(lo) + 1e-12);
        prop_assert!((coinc(s1) - (1.0 - s1 * s1) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn global_phase_on_overlaps_is_irrelevant(theta in -3.0f64..3.0, s in 0.0f64..1.0) {
        let u = TransferMatrix::from_entries(bs_matrix(0.5).unwrap());
        let state_for = |b: &WavepacketBasis| PhotonState::product(&[Photon::new(0, 0), Photon::new(1, 1)], b).unwrap();
        let real = WavepacketBasis::pair(s).unwrap();
        let cplx = WavepacketBasis::pair_complex(Complex64::from_polar(s, theta)).unwrap();
        let p = DetectionPattern::coincidence(0, 1);
        let a = evolve_probability(&state_for(&real), &u, &p, &real).unwrap();
        let b = evolve_probability(&state_for(&cplx), &u, &p, &cplx).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

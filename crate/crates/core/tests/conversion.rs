use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use polymode::circuit::Circuit;
use polymode::elements::{BsConvention, ElementSpec, TransferMatrix};
use polymode::experiments::{default_n_eff, preset, Execution, SampleId, ScanPoints};
use polymode::focksim::{
    evolve_probability, noon_fringe_probability, output_state, DetectionPattern, Photon, PhotonState, WavepacketBasis,
};
use polymode::modespace::ModeLabel;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn noon(circuit: &Circuit, a: &ModeLabel, b: &ModeLabel, sign: f64) -> PhotonState {
    let r = circuit.registry();
    let (ia, ib) = (r.mode_index(a).unwrap(), r.mode_index(b).unwrap());
    let basis = WavepacketBasis::identical(1);
    PhotonState::new(
        vec![
            (vec![Photon::new(ia, 0), Photon::new(ia, 0)], c(FRAC_1_SQRT_2, 0.0)),
            (vec![Photon::new(ib, 0), Photon::new(ib, 0)], c(sign * FRAC_1_SQRT_2, 0.0)),
        ],
        &basis,
    )
    .unwrap()
}

fn chain(modes: &[ModeLabel], stages: Vec<ElementSpec>) -> Circuit {
    let mut c = Circuit::new();
    for m in modes {
        c.register(m.clone()).unwrap();
    }
    for s in stages {
        c.push(s);
    }
    c
}

fn mux() -> ElementSpec {
    ElementSpec::ModeMux { access: "path0".into(), bus: "path1".into(), crosstalk: 0.0 }
}

fn sample3_modes() -> Vec<ModeLabel> {
    vec![ModeLabel::te0("path0"), ModeLabel::te0("path1"), ModeLabel::te1("path1")]
}

fn sample4_modes() -> Vec<ModeLabel> {
    vec![
        ModeLabel::te0("path0"),
        ModeLabel::tm0("path0"),
        ModeLabel::te0("path1"),
        ModeLabel::te1("path1"),
        ModeLabel::tm0("path1"),
    ]
}

#[test]
fn path_noon_becomes_transverse_mode_noon() {
    let c = chain(&sample3_modes(), vec![mux()]);
    let input = noon(&c, &ModeLabel::te0("path0"), &ModeLabel::te0("path1"), -1.0);
    let out = output_state(&input, &c.compile().unwrap()).unwrap();
    let want = noon(&c, &ModeLabel::te1("path1"), &ModeLabel::te0("path1"), -1.0);
    let basis = WavepacketBasis::identical(1);
    assert!(out.same_up_to_phase(&want, &basis, 1e-9));
    // the + superposition is orthogonal, so the check is not vacuous
    let wrong = noon(&c, &ModeLabel::te1("path1"), &ModeLabel::te0("path1"), 1.0);
    assert!(out.fidelity(&wrong, &basis) < 1e-12);
}

#[test]
fn path_noon_becomes_polarization_noon() {
    let c = chain(
        &sample4_modes(),
        vec![mux(), ElementSpec::ModeConverter { port: "path1".into(), crosstalk: 0.0 }],
    );
    let input = noon(&c, &ModeLabel::te0("path0"), &ModeLabel::te0("path1"), -1.0);
    let out = output_state(&input, &c.compile().unwrap()).unwrap();
    let want = noon(&c, &ModeLabel::tm0("path1"), &ModeLabel::te0("path1"), -1.0);
    assert!(out.same_up_to_phase(&want, &WavepacketBasis::identical(1), 1e-9));
}

#[test]
fn propagation_puts_twice_the_phase_difference_on_the_noon_state() {
    let length = 30.0;
    let c = chain(
        &sample3_modes(),
        vec![
            mux(),
            ElementSpec::Propagation { port: "path1".into(), length_um: length, wavelength_nm: 1558.0, n_eff: default_n_eff() },
        ],
    );
    let input = noon(&c, &ModeLabel::te0("path0"), &ModeLabel::te0("path1"), -1.0);
    let out = output_state(&input, &c.compile().unwrap()).unwrap();
    let n = default_n_eff();
    let k = 2.0 * std::f64::consts::PI * length / 1.558;
    let dphi = k * (n[&ModeLabel::te1("x").mode()] - n[&ModeLabel::te0("x").mode()]);
    let r = c.registry();
    let (te1, te0) = (r.mode_index(&ModeLabel::te1("path1")).unwrap(), r.mode_index(&ModeLabel::te0("path1")).unwrap());
    let a1 = out.amplitude(&[Photon::new(te1, 0), Photon::new(te1, 0)]);
    let a0 = out.amplitude(&[Photon::new(te0, 0), Photon::new(te0, 0)]);
    let rel = a1 / a0;
    assert!((rel - Complex64::from_polar(1.0, 2.0 * dphi) * -1.0).norm() < 1e-9);
}

#[test]
fn beam_splitter_output_phase_depends_on_convention() {
    let modes = [ModeLabel::te0("a"), ModeLabel::te0("b")];
    let basis = WavepacketBasis::identical(1);
    for (conv, sign) in [(BsConvention::Symmetric, 1.0), (BsConvention::Real, -1.0)] {
        let mut ch = chain(&modes, vec![ElementSpec::beam_splitter(modes[0].clone(), modes[1].clone(), 0.5)]);
        ch = ch.with_bs_convention(conv);
        let input = PhotonState::product(&[Photon::new(0, 0), Photon::new(1, 0)], &basis).unwrap();
        let out = output_state(&input, &ch.compile().unwrap()).unwrap();
        assert!(out.same_up_to_phase(&noon(&ch, &modes[0], &modes[1], sign), &basis, 1e-12), "{conv}");
    }
}

fn hom_probability(u: &TransferMatrix, s: f64) -> f64 {
    let basis = WavepacketBasis::pair(s).unwrap();
    let state = PhotonState::product(&[Photon::new(0, 0), Photon::new(1, 1)], &basis).unwrap();
    evolve_probability(&state, u, &DetectionPattern::coincidence(0, 1), &basis).unwrap()
}

#[test]
fn ideal_hom_in_both_conventions() {
    let modes = [ModeLabel::te0("a"), ModeLabel::te0("b")];
    let base = chain(&modes, vec![ElementSpec::beam_splitter(modes[0].clone(), modes[1].clone(), 0.5)]);
    for conv in [BsConvention::Symmetric, BsConvention::Real] {
        let u = base.with_bs_convention(conv).compile().unwrap();
        assert!(hom_probability(&u, 1.0).abs() <= 1e-12);
        assert!((hom_probability(&u, 0.0) - 0.5).abs() <= 1e-12);
    }
}

#[test]
fn preset_two_photon_rates_do_not_depend_on_convention() {
    for id in SampleId::ALL {
        let mut exp = preset(id);
        exp.scan.points = match exp.scan.points {
            ScanPoints::Range { start, stop, .. } => ScanPoints::Range { start, stop, step: (stop - start) / 16.0 },
            p => p,
        };
        let base = exp.run(Execution::Serial).unwrap();
        exp.circuit = exp.circuit.with_bs_convention(BsConvention::Real);
        let alt = exp.run(Execution::Serial).unwrap();
        for ((name, a), (_, b)) in base.iter().zip(&alt) {
            if exp.trace(name).unwrap().probe.photon_number() != 2 {
                continue;
            }
            for (x, y) in a.expected_rate.iter().zip(&b.expected_rate) {
                let (px, py) = (x / exp.source.pair_rate_hz, y / exp.source.pair_rate_hz);
                assert!((px - py).abs() <= 1e-12, "{id}/{name}: {px} vs {py}");
            }
        }
    }
}

#[test]
fn classical_fringe_shifts_by_half_a_period_under_real_convention() {
    let mut exp = preset(SampleId::Sample3);
    let base = exp.run(Execution::Serial).unwrap();
    exp.circuit = exp.circuit.with_bs_convention(BsConvention::Real);
    let alt = exp.run(Execution::Serial).unwrap();
    let (a, b) = (&base[1].1, &alt[1].1);
    assert_eq!(base[1].0, "classical");
    let eff = 0.3f64.powi(2) * exp.source.pair_rate_hz;
    for (x, y) in a.expected_rate.iter().zip(&b.expected_rate) {
        assert!(((x + y) - eff).abs() <= 1e-12 * eff);
    }
}

#[test]
fn noon_fringe_matches_simulated_mzi() {
    let modes = [ModeLabel::te0("a"), ModeLabel::te0("b")];
    let mut ch = chain(&modes, vec![ElementSpec::PhaseShifter { port: "a".into(), phase: polymode::elements::PhaseSetting::Heater { offset_rad: 0.0 } }]);
    ch.push(ElementSpec::beam_splitter(modes[0].clone(), modes[1].clone(), 0.5));
    let basis = WavepacketBasis::identical(1);
    for phase in [0.0, 0.3, 1.1, 2.5] {
        let u = ch.compile_with_heater(phase).unwrap();
        let state = noon(&ch, &modes[0], &modes[1], -1.0);
        let p = evolve_probability(&state, &u, &DetectionPattern::coincidence(0, 1), &basis).unwrap();
        assert!((p - noon_fringe_probability(phase)).abs() < 1e-12);
    }
}

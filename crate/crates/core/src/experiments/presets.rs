//! The four conversion chips as ready-to-run experiments.
//!
//! Per-sample overlaps `s₀` are back-derived from the reported raw
//! visibilities: `V = s₀²` for the dips and peaks, and
//! `V = (1 + s₀²)/(3 − s₀²)` for the two-photon fringe of sample 3.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{Experiment, Probe, ScanConfig, ScanPoints, ScanVariable, SourceModel, Trace};
use crate::circuit::Circuit;
use crate::elements::{ElementSpec, PhaseSetting};
use crate::modespace::{ModeLabel, Polarization, TransverseMode};

pub const SOURCE_COHERENCE_LENGTH_UM: f64 = 448.7;
pub const DEFAULT_WAVELENGTH_NM: f64 = 1558.0;
const GRATING_EFFICIENCY: f64 = 0.3;
const PAIR_RATE_HZ: f64 = 1e6;
const P_PI_MW: f64 = 33.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleId {
    Sample1,
    Sample2,
    Sample3,
    Sample4,
}

impl SampleId {
    pub const ALL: [SampleId; 4] = [SampleId::Sample1, SampleId::Sample2, SampleId::Sample3, SampleId::Sample4];

    /// Source overlap at zero delay.
    pub fn base_overlap(self) -> f64 {
        match self {
            SampleId::Sample1 => 0.923f64.sqrt(),
            SampleId::Sample2 => 0.960f64.sqrt(),
            SampleId::Sample3 => ((3.0 * 0.903 - 1.0) / 1.903f64).sqrt(),
            SampleId::Sample4 => 0.9675f64.sqrt(),
        }
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleId::Sample1 => "sample1",
            SampleId::Sample2 => "sample2",
            SampleId::Sample3 => "sample3",
            SampleId::Sample4 => "sample4",
        })
    }
}

impl FromStr for SampleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SampleId::ALL
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| format!("unknown preset `{s}` (expected sample1, sample2, sample3 or sample4)"))
    }
}

/// Placeholder effective indices at the default wavelength, not measured values.
pub fn default_n_eff() -> BTreeMap<TransverseMode, f64> {
    BTreeMap::from([(TransverseMode::TE0, 2.40), (TransverseMode::TE1, 1.80), (TransverseMode::TM0, 1.70)])
}

fn propagation(port: &str, length_um: f64) -> ElementSpec {
    ElementSpec::Propagation {
        port: port.into(),
        length_um,
        wavelength_nm: DEFAULT_WAVELENGTH_NM,
        n_eff: default_n_eff(),
    }
}

fn grating(port: &str, pol: Polarization) -> ElementSpec {
    ElementSpec::grating(port, pol, GRATING_EFFICIENCY)
}

fn mux(access: &str, bus: &str) -> ElementSpec {
    ElementSpec::ModeMux { access: access.into(), bus: bus.into(), crosstalk: 0.0 }
}

fn demux(access: &str, bus: &str) -> ElementSpec {
    ElementSpec::ModeDemux { access: access.into(), bus: bus.into(), crosstalk: 0.0 }
}

fn chip_bs() -> ElementSpec {
    ElementSpec::beam_splitter(ModeLabel::te0("path0"), ModeLabel::te0("path1"), 0.5)
}

fn circuit(modes: &[ModeLabel], inputs: &[ModeLabel]) -> Circuit {
    let mut c = Circuit::new();
    for m in modes {
        c.register(m.clone()).expect("preset modes are supported");
    }
    for i in inputs {
        c.add_input(i.clone());
    }
    c
}

fn delay_scan(integration_s: f64) -> ScanConfig {
    ScanConfig {
        variable: ScanVariable::DelayUm,
        points: ScanPoints::Range { start: -800.0, stop: 800.0, step: 10.0 },
        integration_s,
        seed: 1,
        p_pi_mw: None,
    }
}

fn source(id: SampleId) -> SourceModel {
    SourceModel {
        base_overlap: id.base_overlap(),
        coherence_length_um: SOURCE_COHERENCE_LENGTH_UM,
        pair_rate_hz: PAIR_RATE_HZ,
        accidental_hz: 0.0,
    }
}

/// A fully configured experiment for one of the four chips.
pub fn preset(id: SampleId) -> Experiment {
    let (te0, te1, tm0) = (ModeLabel::te0, ModeLabel::te1, ModeLabel::tm0);
    let (mut circuit, scan, traces) = match id {
        // polarization → transverse mode → polarization, fiber HOM
        SampleId::Sample1 => {
            let mut c = circuit(
                &[te0("path0"), tm0("path0"), te1("path0"), te0("path1"), tm0("path1")],
                &[te0("path0"), tm0("path1")],
            );
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TM));
            c.push(ElementSpec::Pbs { ports: ["path0".into(), "path1".into()] });
            c.push(ElementSpec::ModeConverter { port: "path0".into(), crosstalk: 0.0 });
            c.push(propagation("path0", 870.0));
            c.push(ElementSpec::ModeConverter { port: "path0".into(), crosstalk: 0.0 });
            c.push(ElementSpec::Pbs { ports: ["path0".into(), "path1".into()] });
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TM));
            let traces = vec![Trace::new("hom", Probe::FiberHom(te0("path0"), Some(tm0("path1"))))];
            (c, delay_scan(0.5), traces)
        }
        // path → transverse mode → path, on-chip BS
        SampleId::Sample2 => {
            let mut c = circuit(&[te0("path0"), te0("path1"), te1("path1")], &[te0("path0"), te0("path1")]);
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TE));
            c.push(mux("path0", "path1"));
            c.push(propagation("path1", 30.0));
            c.push(demux("path0", "path1"));
            c.push(chip_bs());
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TE));
            let traces = vec![Trace::new("hom", Probe::Coincidence(te0("path0"), te0("path1")))];
            (c, delay_scan(0.5), traces)
        }
        // path NOON → transverse-mode NOON → path, heater and second BS
        SampleId::Sample3 => {
            let mut c = circuit(&[te0("path0"), te0("path1"), te1("path1")], &[te0("path0"), te0("path1")]);
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TE));
            c.push(chip_bs());
            c.push(mux("path0", "path1"));
            c.push(propagation("path1", 30.0));
            c.push(demux("path0", "path1"));
            c.push(ElementSpec::PhaseShifter { port: "path0".into(), phase: PhaseSetting::Heater { offset_rad: 0.0 } });
            c.push(chip_bs());
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TE));
            let scan = ScanConfig {
                variable: ScanVariable::HeaterMw,
                points: ScanPoints::Range { start: 0.0, stop: 140.0, step: 2.0 },
                integration_s: 0.25,
                seed: 1,
                p_pi_mw: Some(P_PI_MW),
            };
            let traces = vec![
                Trace::new("quantum", Probe::Coincidence(te0("path0"), te0("path1"))),
                Trace::new("classical", Probe::Single(te0("path0"))),
            ];
            (c, scan, traces)
        }
        // path NOON → transverse-mode NOON → polarization NOON, fiber HOM per output
        SampleId::Sample4 => {
            let mut c = circuit(
                &[te0("path0"), tm0("path0"), te0("path1"), te1("path1"), tm0("path1")],
                &[te0("path0"), te0("path1")],
            );
            c.push(grating("path0", Polarization::TE));
            c.push(grating("path1", Polarization::TE));
            c.push(chip_bs());
            c.push(mux("path0", "path1"));
            c.push(propagation("path1", 30.0));
            c.push(ElementSpec::ModeConverter { port: "path1".into(), crosstalk: 0.0 });
            c.push(ElementSpec::Pbs { ports: ["path1".into(), "path0".into()] });
            c.push(grating("path1", Polarization::TE));
            c.push(grating("path0", Polarization::TM));
            let traces = vec![
                Trace::new("te", Probe::FiberHom(te0("path1"), None)),
                Trace::new("tm", Probe::FiberHom(tm0("path0"), None)),
            ];
            (c, delay_scan(2.0), traces)
        }
    };
    for t in &traces {
        for m in t.probe.modes() {
            circuit.add_detector(m.clone());
        }
    }
    Experiment { name: id.to_string(), circuit, source: source(id), scan, traces }
}

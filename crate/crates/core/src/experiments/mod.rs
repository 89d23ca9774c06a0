//! Delay and heater-power sweeps over compiled circuits, producing expected
//! rates and Poisson-sampled counts.

mod presets;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::poisson_sigma;
use crate::circuit::{Circuit, CircuitError, Diagnostic};
use crate::elements::{bs_matrix, PlacedElement, TransferMatrix};
use crate::focksim::{evolve_probability, DetectionPattern, Photon, PhotonState, SimError, WavepacketBasis};
use crate::modespace::{ModeError, ModeLabel};

pub use presets::{default_n_eff, preset, SampleId, DEFAULT_WAVELENGTH_NM, SOURCE_COHERENCE_LENGTH_UM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("scan variable is {found}, this operation needs {expected}")]
    WrongVariable { expected: ScanVariable, found: ScanVariable },
    #[error("trace `{trace}`: {reason}")]
    InvalidProbe { trace: String, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mode(#[from] ModeError),
}

/// Two-photon source: overlap at zero delay, coherence length and rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    pub base_overlap: f64,
    pub coherence_length_um: f64,
    pub pair_rate_hz: f64,
    pub accidental_hz: f64,
}

impl SourceModel {
    /// `|s(δ)|² = s₀²·max(0, 1 − |δ|/L_c)`: the interference term of a
    /// coincidence scan falls off linearly with delay, so dips and peaks are
    /// triangles of half-base `L_c`.
    pub fn indistinguishability_at_delay(&self, delay_um: f64) -> f64 {
        let tri = (1.0 - delay_um.abs() / self.coherence_length_um).max(0.0);
        self.base_overlap * self.base_overlap * tri
    }

    /// Wavepacket overlap `s(δ) = √|s(δ)|²`.
    pub fn overlap_at_delay(&self, delay_um: f64) -> f64 {
        self.indistinguishability_at_delay(delay_um).sqrt()
    }

    pub fn check(&self) -> Result<(), String> {
        let s = self.base_overlap;
        if !(0.0..=1.0).contains(&s) {
            return Err(format!("s0 = {s} must lie in [0, 1]"));
        }
        if !(self.coherence_length_um > 0.0 && self.coherence_length_um.is_finite()) {
            return Err(format!("Lc_um = {} must be positive", self.coherence_length_um));
        }
        if !(self.pair_rate_hz >= 0.0 && self.pair_rate_hz.is_finite()) {
            return Err(format!("pair_rate_hz = {} must be non-negative", self.pair_rate_hz));
        }
        if !(self.accidental_hz >= 0.0 && self.accidental_hz.is_finite()) {
            return Err(format!("accidental_hz = {} must be non-negative", self.accidental_hz));
        }
        Ok(())
    }
}

/// `overlap_at_delay` as a free function.
pub fn overlap_at_delay(delay_um: f64, source: &SourceModel) -> f64 {
    source.overlap_at_delay(delay_um)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanVariable {
    DelayUm,
    HeaterMw,
}

impl fmt::Display for ScanVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanVariable::DelayUm => "delay_um",
            ScanVariable::HeaterMw => "heater_mW",
        })
    }
}

impl FromStr for ScanVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delay_um" => Ok(ScanVariable::DelayUm),
            "heater_mW" => Ok(ScanVariable::HeaterMw),
            other => Err(format!("unknown scan variable `{other}` (expected delay_um or heater_mW)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanPoints {
    /// `start, start+step, …` up to and including `stop` (within rounding).
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

const MAX_POINTS: usize = 1_000_000;

impl ScanPoints {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ScanPoints::Range { start, stop, step } => {
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|i| start + i as f64 * step).collect()
            }
            ScanPoints::List(v) => v.clone(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match self {
            ScanPoints::Range { start, stop, step } => {
                if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
                    return Err("scan range must be finite".into());
                }
                if *step <= 0.0 {
                    return Err(format!("step = {step} must be positive"));
                }
                if stop < start {
                    return Err(format!("stop = {stop} is below start = {start}"));
                }
                if (stop - start) / step > MAX_POINTS as f64 {
                    return Err("scan has too many points".into());
                }
                Ok(())
            }
            ScanPoints::List(v) if v.is_empty() => Err("scan has no points".into()),
            ScanPoints::List(v) if v.iter().any(|x| !x.is_finite()) => Err("scan points must be finite".into()),
            ScanPoints::List(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub variable: ScanVariable,
    pub points: ScanPoints,
    pub integration_s: f64,
    pub seed: u64,
    /// Heater power for a π phase; heater sweeps only.
    pub p_pi_mw: Option<f64>,
}

impl ScanConfig {
    pub fn check(&self) -> Result<(), String> {
        self.points.check()?;
        if !(self.integration_s > 0.0 && self.integration_s.is_finite()) {
            return Err(format!("integration_s = {} must be positive", self.integration_s));
        }
        match (self.variable, self.p_pi_mw) {
            (ScanVariable::HeaterMw, None) => Err("heater sweep needs P_pi_mW".into()),
            (_, Some(p)) if !(p > 0.0 && p.is_finite()) => Err(format!("P_pi_mW = {p} must be positive")),
            _ => Ok(()),
        }
    }

    /// Heater phase `φ = π·P/P_π`.
    pub fn heater_phase(&self, power_mw: f64) -> f64 {
        PI * power_mw / self.p_pi_mw.unwrap_or(f64::INFINITY)
    }
}

/// Swept data with Poisson errors. `counts` hold whole numbers for sampled
/// scans; background subtraction may leave fractional values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub variable: ScanVariable,
    pub points: Vec<f64>,
    pub expected_rate: Vec<f64>,
    pub counts: Vec<f64>,
    pub sigma: Vec<f64>,
    pub integration_time_s: f64,
}

impl ScanResult {
    pub fn expected_counts(&self) -> Vec<f64> {
        self.expected_rate.iter().map(|r| r * self.integration_time_s).collect()
    }

    /// Copy whose counts are the noiseless expectations.
    pub fn noiseless(&self) -> ScanResult {
        let counts = self.expected_counts();
        let sigma = counts.iter().map(|c| poisson_sigma(*c)).collect();
        ScanResult { counts, sigma, ..self.clone() }
    }
}

/// What a trace detects.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    /// One photon on each of two chip outputs.
    Coincidence(ModeLabel, ModeLabel),
    /// Off-chip balanced fiber splitter on two outputs, or on one output and
    /// vacuum, followed by a coincidence between its two ports.
    FiberHom(ModeLabel, Option<ModeLabel>),
    /// Single-photon detection on one output, launching one photon into the
    /// first input (classical interference reference).
    Single(ModeLabel),
}

impl Probe {
    pub fn modes(&self) -> Vec<&ModeLabel> {
        match self {
            Probe::Coincidence(a, b) | Probe::FiberHom(a, Some(b)) => vec![a, b],
            Probe::FiberHom(a, None) | Probe::Single(a) => vec![a],
        }
    }

    pub fn photon_number(&self) -> usize {
        match self {
            Probe::Single(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub probe: Probe,
    /// Added to the heater phase of every heater while this trace runs.
    pub phase_offset_rad: f64,
}

impl Trace {
    pub fn new(name: impl Into<String>, probe: Probe) -> Self {
        Trace { name: name.into(), probe, phase_offset_rad: 0.0 }
    }
}

/// Whether scan points are evaluated on the rayon pool. Results are
/// identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub circuit: Circuit,
    pub source: SourceModel,
    pub scan: ScanConfig,
    pub traces: Vec<Trace>,
}

/// A validation finding for a whole experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    Circuit(Diagnostic),
    Trace { trace: String, reason: String },
    Config(String),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Circuit(d) => d.fmt(f),
            Issue::Trace { trace, reason } => write!(f, "trace `{trace}`: {reason}"),
            Issue::Config(msg) => f.write_str(msg),
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Vec<Issue> {
        let mut out: Vec<Issue> = self.circuit.validate().into_iter().map(Issue::Circuit).collect();
        if let Err(e) = self.source.check() {
            out.push(Issue::Config(format!("[source] {e}")));
        }
        if let Err(e) = self.scan.check() {
            out.push(Issue::Config(format!("[scan] {e}")));
        }
        if self.scan.variable == ScanVariable::HeaterMw && !self.circuit.has_heater() {
            out.push(Issue::Config("heater sweep on a circuit without a heater".into()));
        }
        if self.traces.is_empty() {
            out.push(Issue::Config("no detection traces".into()));
        }
        for (i, t) in self.traces.iter().enumerate() {
            if self.traces[..i].iter().any(|u| u.name == t.name) {
                out.push(Issue::Trace { trace: t.name.clone(), reason: "duplicate trace name".into() });
            }
            if let Err(reason) = check_probe(&self.circuit, &t.probe) {
                out.push(Issue::Trace { trace: t.name.clone(), reason });
            }
        }
        out
    }

    /// Runs every trace. Trace `k` draws its noise from stream block `k`.
    pub fn run(&self, execution: Execution) -> Result<Vec<(String, ScanResult)>, ExperimentError> {
        self.traces
            .iter()
            .enumerate()
            .map(|(k, t)| run_trace(&self.circuit, t, &self.source, &self.scan, k as u32, execution).map(|r| (t.name.clone(), r)))
            .collect()
    }

    pub fn trace(&self, name: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.name == name)
    }
}

fn check_probe(circuit: &Circuit, probe: &Probe) -> Result<(), String> {
    let reg = circuit.registry();
    for label in probe.modes() {
        match reg.mode_index(label) {
            Ok(i) if reg.is_loss(i) => return Err(format!("detector `{label}` is a loss mode")),
            Ok(_) => {}
            Err(_) => return Err(format!("detector `{label}` is not a registered mode")),
        }
    }
    if let Probe::Coincidence(a, b) | Probe::FiberHom(a, Some(b)) = probe {
        if a == b {
            return Err(format!("both detectors on `{a}`"));
        }
    }
    let needed = probe.photon_number();
    if circuit.inputs().len() < needed || (needed == 2 && circuit.inputs().len() != 2) {
        return Err(format!(
            "needs {} input mode{}, circuit declares {}",
            needed,
            if needed == 1 { "" } else { "s" },
            circuit.inputs().len()
        ));
    }
    Ok(())
}

/// Probe resolved to indices, with its analyzer appended to the transfer
/// matrix.
struct Detector {
    pattern: DetectionPattern,
    analyzer: Option<(usize, Option<usize>)>,
}

impl Detector {
    fn resolve(circuit: &Circuit, probe: &Probe) -> Result<Detector, ExperimentError> {
        let idx = |l: &ModeLabel| circuit.registry().mode_index(l);
        let dim = circuit.registry().len();
        Ok(match probe {
            Probe::Coincidence(a, b) => Detector { pattern: DetectionPattern::coincidence(idx(a)?, idx(b)?), analyzer: None },
            Probe::FiberHom(a, Some(b)) => {
                let (a, b) = (idx(a)?, idx(b)?);
                Detector { pattern: DetectionPattern::coincidence(a, b), analyzer: Some((a, Some(b))) }
            }
            Probe::FiberHom(a, None) => {
                let a = idx(a)?;
                Detector { pattern: DetectionPattern::coincidence(a, dim), analyzer: Some((a, None)) }
            }
            Probe::Single(a) => Detector { pattern: DetectionPattern::new([(idx(a)?, 1)]), analyzer: None },
        })
    }

    fn full_matrix(&self, chip: TransferMatrix) -> TransferMatrix {
        match self.analyzer {
            None => chip,
            Some((a, partner)) => {
                let (mut u, b) = match partner {
                    Some(b) => (chip, b),
                    None => {
                        let u = chip.with_extra_mode();
                        let b = u.dim() - 1;
                        (u, b)
                    }
                };
                u.apply(&PlacedElement { modes: vec![a, b], local: bs_matrix(0.5).expect("balanced splitter") });
                u
            }
        }
    }
}

/// Probability of one detection event per emitted pair (or per launched
/// photon for single-photon probes).
fn event_probability(
    u: &TransferMatrix,
    detector: &Detector,
    inputs: &[usize],
    photons: usize,
    indistinguishability: f64,
) -> Result<f64, SimError> {
    if photons == 1 {
        let basis = WavepacketBasis::identical(1);
        let state = PhotonState::product(&[Photon::new(inputs[0], 0)], &basis)?;
        return evolve_probability(&state, u, &detector.pattern, &basis);
    }
    let basis = WavepacketBasis::pair(indistinguishability.clamp(0.0, 1.0).sqrt())?;
    let state = PhotonState::product(&[Photon::new(inputs[0], 0), Photon::new(inputs[1], 1)], &basis)?;
    evolve_probability(&state, u, &detector.pattern, &basis)
}

/// Counter-based stream: trace block in the high bits, point index in the
/// low bits.
fn sample_counts(mean: f64, seed: u64, trace: u32, point: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trace as u64) << 32) | point as u64);
    Poisson::new(mean).expect("positive finite mean").sample(&mut rng)
}

/// Evaluates one trace over the scan. Expected rates are deterministic;
/// counts are Poisson draws from the `(seed, trace, point)` stream.
pub fn run_trace(
    circuit: &Circuit,
    trace: &Trace,
    source: &SourceModel,
    scan: &ScanConfig,
    trace_index: u32,
    execution: Execution,
) -> Result<ScanResult, ExperimentError> {
    scan.check().map_err(ExperimentError::InvalidConfig)?;
    source.check().map_err(ExperimentError::InvalidConfig)?;
    check_probe(circuit, &trace.probe).map_err(|reason| ExperimentError::InvalidProbe { trace: trace.name.clone(), reason })?;

    let detector = Detector::resolve(circuit, &trace.probe)?;
    let inputs = circuit.input_indices()?;
    let photons = trace.probe.photon_number();
    let points = scan.points.values();
    let fixed = match scan.variable {
        ScanVariable::DelayUm => Some(detector.full_matrix(circuit.compile_with_heater(trace.phase_offset_rad)?)),
        ScanVariable::HeaterMw => None,
    };

    let rate_at = |x: f64| -> Result<f64, ExperimentError> {
        let (u, s2) = match &fixed {
            Some(u) => (u.clone(), source.indistinguishability_at_delay(x)),
            None => {
                let chip = circuit.compile_with_heater(scan.heater_phase(x) + trace.phase_offset_rad)?;
                (detector.full_matrix(chip), source.indistinguishability_at_delay(0.0))
            }
        };
        let p = event_probability(&u, &detector, &inputs, photons, s2)?;
        let accidental = if photons == 2 { source.accidental_hz } else { 0.0 };
        Ok(source.pair_rate_hz * p.max(0.0) + accidental)
    };
    let point = |(i, &x): (usize, &f64)| -> Result<(f64, f64), ExperimentError> {
        let rate = rate_at(x)?;
        let counts = sample_counts(rate * scan.integration_s, scan.seed, trace_index, i);
        Ok((rate, counts))
    };
    let evaluated: Vec<(f64, f64)> = match execution {
        Execution::Serial => points.iter().enumerate().map(point).collect::<Result<_, _>>()?,
        Execution::Parallel => points.par_iter().enumerate().map(point).collect::<Result<_, _>>()?,
    };
    let (expected_rate, counts): (Vec<f64>, Vec<f64>) = evaluated.into_iter().unzip();
    let sigma = counts.iter().map(|c| poisson_sigma(*c)).collect();
    Ok(ScanResult { variable: scan.variable, points, expected_rate, counts, sigma, integration_time_s: scan.integration_s })
}

/// Delay sweep of a two-photon probe.
pub fn hom_scan(
    circuit: &Circuit,
    probe: &Probe,
    source: &SourceModel,
    scan: &ScanConfig,
    execution: Execution,
) -> Result<ScanResult, ExperimentError> {
    if scan.variable != ScanVariable::DelayUm {
        return Err(ExperimentError::WrongVariable { expected: ScanVariable::DelayUm, found: scan.variable });
    }
    if probe.photon_number() != 2 {
        return Err(ExperimentError::InvalidProbe { trace: "hom".into(), reason: "HOM scans need a two-detector probe".into() });
    }
    run_trace(circuit, &Trace::new("hom", probe.clone()), source, scan, 0, execution)
}

/// Heater sweep of a two-photon (quantum) and a single-photon (classical)
/// trace.
pub fn fringe_scan(
    circuit: &Circuit,
    quantum: &Trace,
    classical: &Trace,
    source: &SourceModel,
    scan: &ScanConfig,
    execution: Execution,
) -> Result<(ScanResult, ScanResult), ExperimentError> {
    if scan.variable != ScanVariable::HeaterMw {
        return Err(ExperimentError::WrongVariable { expected: ScanVariable::HeaterMw, found: scan.variable });
    }
    let q = run_trace(circuit, quantum, source, scan, 0, execution)?;
    let c = run_trace(circuit, classical, source, scan, 1, execution)?;
    Ok((q, c))
}

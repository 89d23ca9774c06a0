//! Sectioned plain-text experiment files.
//!
//! ```text
//! [experiment]
//! name = demo
//!
//! [modes]
//! a:TE0 input
//! b:TE0 input
//!
//! [stages]
//! bs a:TE0 b:TE0 r=0.5 convention=symmetric
//!
//! [source]
//! s0 = 1
//! Lc_um = 448.7
//! pair_rate_hz = 1000000
//! accidental_hz = 0
//!
//! [scan]
//! variable = delay_um
//! start = -800
//! stop = 800
//! step = 10
//! integration_s = 0.5
//! seed = 1
//!
//! [detect]
//! hom coincidence a:TE0 b:TE0
//! ```
//!
//! Stage kinds: `grating PORT pol=TE|TM efficiency=X`,
//! `bs LABEL LABEL r=X convention=symmetric|real`, `pbs PORT PORT`,
//! `converter PORT crosstalk=X`, `mux ACCESS BUS crosstalk=X`,
//! `demux ACCESS BUS crosstalk=X`,
//! `propagation PORT length_um=X wavelength_nm=X n_TE0=X n_TE1=X n_TM0=X`,
//! `phase PORT rad=X`, `heater PORT offset_rad=X`. Detection kinds:
//! `coincidence A B`, `fiber A [B]`, `single A`, each optionally followed by
//! `phase_offset_rad=X`. Lines starting with `#` are comments.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::circuit::Circuit;
use crate::elements::{BsConvention, ElementSpec, PhaseSetting};
use crate::experiments::{Experiment, Probe, ScanConfig, ScanPoints, ScanVariable, SourceModel, Trace, DEFAULT_WAVELENGTH_NM};
use crate::modespace::{check_port, ModeLabel, Polarization, TransverseMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Experiment,
    Modes,
    Stages,
    Source,
    Scan,
    Detect,
}

impl FromStr for Section {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "experiment" => Section::Experiment,
            "modes" => Section::Modes,
            "stages" => Section::Stages,
            "source" => Section::Source,
            "scan" => Section::Scan,
            "detect" => Section::Detect,
            _ => return Err(()),
        })
    }
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

/// `key=value` options of one stage or detect line. Every key must be taken.
struct Options {
    line: usize,
    values: BTreeMap<String, String>,
}

impl Options {
    fn parse(line: usize, tokens: &[&str]) -> Result<Options, ParseError> {
        let mut values = BTreeMap::new();
        for t in tokens {
            let (k, v) = t.split_once('=').ok_or_else(|| err(line, format!("expected key=value, found `{t}`")))?;
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(line, format!("duplicate key `{k}`")));
            }
        }
        Ok(Options { line, values })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>, ParseError> {
        self.take(key).map(|v| parse_float(self.line, key, &v)).transpose()
    }

    fn float_or(&mut self, key: &str, default: f64) -> Result<f64, ParseError> {
        Ok(self.float(key)?.unwrap_or(default))
    }

    fn required(&mut self, key: &str) -> Result<f64, ParseError> {
        self.float(key)?.ok_or_else(|| err(self.line, format!("missing `{key}=`")))
    }

    fn finish(self) -> Result<(), ParseError> {
        match self.values.keys().next() {
            Some(k) => Err(err(self.line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_float(line: usize, key: &str, v: &str) -> Result<f64, ParseError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| err(line, format!("`{key}` must be a finite number, found `{v}`")))
}

fn parse_label(line: usize, s: &str) -> Result<ModeLabel, ParseError> {
    s.parse().map_err(|e| err(line, format!("{e}")))
}

fn parse_port(line: usize, s: &str) -> Result<String, ParseError> {
    check_port(s).map_err(|e| err(line, format!("{e}")))?;
    Ok(s.to_string())
}

fn positional<'a>(line: usize, kind: &str, tokens: &[&'a str], count: usize) -> Result<(Vec<&'a str>, Vec<&'a str>), ParseError> {
    let split = tokens.iter().position(|t| t.contains('=')).unwrap_or(tokens.len());
    if split != count {
        return Err(err(line, format!("`{kind}` takes {count} positional argument(s), found {split}")));
    }
    Ok((tokens[..split].to_vec(), tokens[split..].to_vec()))
}

fn parse_stage(line: usize, text: &str) -> Result<ElementSpec, ParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let (kind, rest) = tokens.split_first().expect("non-empty line");
    let arity = match *kind {
        "grating" | "converter" | "propagation" | "phase" | "heater" => 1,
        "bs" | "pbs" | "mux" | "demux" => 2,
        other => return Err(err(line, format!("unknown element kind `{other}`"))),
    };
    let (pos, opts) = positional(line, kind, rest, arity)?;
    let mut o = Options::parse(line, &opts)?;
    let spec = match *kind {
        "grating" => {
            let pol = o.take("pol").ok_or_else(|| err(line, "missing `pol=`"))?;
            let polarization: Polarization = pol.parse().map_err(|_| err(line, format!("`pol` must be TE or TM, found `{pol}`")))?;
            ElementSpec::GratingCoupler { port: parse_port(line, pos[0])?, polarization, efficiency: o.required("efficiency")? }
        }
        "bs" => {
            let convention = match o.take("convention").as_deref() {
                None | Some("symmetric") => BsConvention::Symmetric,
                Some("real") => BsConvention::Real,
                Some(other) => return Err(err(line, format!("unknown convention `{other}`"))),
            };
            ElementSpec::BeamSplitter {
                modes: [parse_label(line, pos[0])?, parse_label(line, pos[1])?],
                reflectivity: o.float_or("r", 0.5)?,
                convention,
            }
        }
        "pbs" => ElementSpec::Pbs { ports: [parse_port(line, pos[0])?, parse_port(line, pos[1])?] },
        "converter" => ElementSpec::ModeConverter { port: parse_port(line, pos[0])?, crosstalk: o.float_or("crosstalk", 0.0)? },
        "mux" => ElementSpec::ModeMux {
            access: parse_port(line, pos[0])?,
            bus: parse_port(line, pos[1])?,
            crosstalk: o.float_or("crosstalk", 0.0)?,
        },
        "demux" => ElementSpec::ModeDemux {
            access: parse_port(line, pos[0])?,
            bus: parse_port(line, pos[1])?,
            crosstalk: o.float_or("crosstalk", 0.0)?,
        },
        "propagation" => {
            let length_um = o.required("length_um")?;
            let wavelength_nm = o.float_or("wavelength_nm", DEFAULT_WAVELENGTH_NM)?;
            let keys: Vec<String> = o.values.keys().filter(|k| k.starts_with("n_")).cloned().collect();
            let mut n_eff = BTreeMap::new();
            for k in keys {
                let mode: TransverseMode = k[2..].parse().map_err(|_| err(line, format!("unknown key `{k}`")))?;
                n_eff.insert(mode, o.required(&k)?);
            }
            if n_eff.is_empty() {
                n_eff = crate::experiments::default_n_eff();
            }
            ElementSpec::Propagation { port: parse_port(line, pos[0])?, length_um, wavelength_nm, n_eff }
        }
        "phase" => ElementSpec::PhaseShifter { port: parse_port(line, pos[0])?, phase: PhaseSetting::Fixed(o.required("rad")?) },
        "heater" => ElementSpec::PhaseShifter {
            port: parse_port(line, pos[0])?,
            phase: PhaseSetting::Heater { offset_rad: o.float_or("offset_rad", 0.0)? },
        },
        _ => unreachable!(),
    };
    o.finish()?;
    Ok(spec)
}

fn parse_trace(line: usize, text: &str) -> Result<Trace, ParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < 3 {
        return Err(err(line, "expected `NAME KIND MODE [MODE] [phase_offset_rad=X]`"));
    }
    let name = tokens[0];
    if name.contains('=') || name.starts_with('[') {
        return Err(err(line, format!("invalid trace name `{name}`")));
    }
    let kind = tokens[1];
    let split = tokens[2..].iter().position(|t| t.contains('=')).map_or(tokens.len(), |p| p + 2);
    let labels = tokens[2..split].iter().map(|s| parse_label(line, s)).collect::<Result<Vec<_>, _>>()?;
    let mut o = Options::parse(line, &tokens[split..])?;
    let probe = match (kind, labels.as_slice()) {
        ("coincidence", [a, b]) => Probe::Coincidence(a.clone(), b.clone()),
        ("fiber", [a]) => Probe::FiberHom(a.clone(), None),
        ("fiber", [a, b]) => Probe::FiberHom(a.clone(), Some(b.clone())),
        ("single", [a]) => Probe::Single(a.clone()),
        ("coincidence" | "fiber" | "single", _) => {
            return Err(err(line, format!("wrong number of modes for `{kind}`")));
        }
        (other, _) => return Err(err(line, format!("unknown detection kind `{other}`"))),
    };
    let phase_offset_rad = o.float_or("phase_offset_rad", 0.0)?;
    o.finish()?;
    Ok(Trace { name: name.to_string(), probe, phase_offset_rad })
}

/// `key = value` lines of a scalar section.
fn key_values(lines: &[Line], errors: &mut Vec<ParseError>) -> HashMap<String, (usize, String)> {
    let mut out = HashMap::new();
    for l in lines {
        match l.text.split_once('=') {
            Some((k, v)) => {
                let k = k.trim().to_string();
                if out.insert(k.clone(), (l.number, v.trim().to_string())).is_some() {
                    errors.push(err(l.number, format!("duplicate key `{k}`")));
                }
            }
            None => errors.push(err(l.number, format!("expected key = value, found `{}`", l.text))),
        }
    }
    out
}

struct Scalars {
    header: usize,
    section: &'static str,
    values: HashMap<String, (usize, String)>,
}

impl Scalars {
    fn float(&mut self, key: &str) -> Result<Option<f64>, ParseError> {
        self.values.remove(key).map(|(line, v)| parse_float(line, key, &v)).transpose()
    }

    fn required(&mut self, key: &str) -> Result<f64, ParseError> {
        self.float(key)?.ok_or_else(|| err(self.header, format!("[{}] is missing `{key}`", self.section)))
    }

    fn text(&mut self, key: &str) -> Option<(usize, String)> {
        self.values.remove(key)
    }

    fn finish(self, errors: &mut Vec<ParseError>) {
        let mut rest: Vec<_> = self.values.into_iter().collect();
        rest.sort_by_key(|(_, (line, _))| *line);
        for (k, (line, _)) in rest {
            errors.push(err(line, format!("unknown key `{k}` in [{}]", self.section)));
        }
    }
}

fn collect<T>(r: Result<T, ParseError>, errors: &mut Vec<ParseError>) -> Option<T> {
    r.map_err(|e| errors.push(e)).ok()
}

pub fn parse(text: &str) -> Result<Experiment, ParseErrors> {
    let mut errors = Vec::new();
    let mut sections: HashMap<Section, (usize, Vec<Line>)> = HashMap::new();
    let mut current: Option<Section> = None;
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            match name.trim().parse::<Section>() {
                Ok(s) if sections.contains_key(&s) => {
                    errors.push(err(number, format!("duplicate section [{name}]")));
                    current = None;
                }
                Ok(s) => {
                    sections.insert(s, (number, Vec::new()));
                    current = Some(s);
                }
                Err(()) => {
                    errors.push(err(number, format!("unknown section [{name}]")));
                    current = None;
                }
            }
            continue;
        }
        match current {
            Some(s) => sections.get_mut(&s).expect("open section").1.push(Line { number, text: t }),
            None => errors.push(err(number, "content outside a section")),
        }
    }

    let mut take = |s: Section| sections.remove(&s);
    let experiment = take(Section::Experiment);
    let modes = take(Section::Modes);
    let stages = take(Section::Stages);
    let source = take(Section::Source);
    let scan = take(Section::Scan);
    let detect = take(Section::Detect);

    let mut name = "custom".to_string();
    if let Some((header, lines)) = experiment {
        let values = key_values(&lines, &mut errors);
        let mut sc = Scalars { header, section: "experiment", values };
        if let Some((line, v)) = sc.text("name") {
            if v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == ',') {
                errors.push(err(line, format!("invalid name `{v}`")));
            } else {
                name = v;
            }
        }
        sc.finish(&mut errors);
    }

    let mut circuit = Circuit::new();
    match modes {
        Some((_, lines)) => {
            for l in lines {
                let mut tokens = l.text.split_whitespace();
                let label = tokens.next().expect("non-empty");
                let flags: Vec<&str> = tokens.collect();
                let Some(label) = collect(parse_label(l.number, label), &mut errors) else { continue };
                if let Err(e) = circuit.register(label.clone()) {
                    errors.push(err(l.number, e.to_string()));
                    continue;
                }
                match flags.as_slice() {
                    [] => {}
                    ["input"] => circuit.add_input(label),
                    other => errors.push(err(l.number, format!("unknown mode flag `{}`", other.join(" ")))),
                }
            }
        }
        None => errors.push(err(0, "missing [modes] section")),
    }
    match stages {
        Some((_, lines)) => {
            for l in lines {
                if let Some(spec) = collect(parse_stage(l.number, l.text), &mut errors) {
                    circuit.push(spec);
                }
            }
        }
        None => errors.push(err(0, "missing [stages] section")),
    }

    let source = match source {
        Some((header, lines)) => {
            let values = key_values(&lines, &mut errors);
            let mut sc = Scalars { header, section: "source", values };
            let s0 = collect(sc.required("s0"), &mut errors);
            let lc = collect(sc.required("Lc_um"), &mut errors);
            let rate = collect(sc.required("pair_rate_hz"), &mut errors);
            let acc = collect(sc.float("accidental_hz"), &mut errors).flatten().unwrap_or(0.0);
            sc.finish(&mut errors);
            match (s0, lc, rate) {
                (Some(base_overlap), Some(coherence_length_um), Some(pair_rate_hz)) => {
                    Some(SourceModel { base_overlap, coherence_length_um, pair_rate_hz, accidental_hz: acc })
                }
                _ => None,
            }
        }
        None => {
            errors.push(err(0, "missing [source] section"));
            None
        }
    };

    let scan = match scan {
        Some((header, lines)) => {
            let values = key_values(&lines, &mut errors);
            let mut sc = Scalars { header, section: "scan", values };
            let variable = match sc.text("variable") {
                Some((line, v)) => collect(v.parse::<ScanVariable>().map_err(|e| err(line, e)), &mut errors),
                None => {
                    errors.push(err(header, "[scan] is missing `variable`"));
                    None
                }
            };
            let points = match sc.text("points") {
                Some((line, v)) => {
                    let parsed: Result<Vec<f64>, _> = v.split(',').map(|p| parse_float(line, "points", p.trim())).collect();
                    collect(parsed, &mut errors).map(ScanPoints::List)
                }
                None => {
                    let start = collect(sc.required("start"), &mut errors);
                    let stop = collect(sc.required("stop"), &mut errors);
                    let step = collect(sc.required("step"), &mut errors);
                    match (start, stop, step) {
                        (Some(start), Some(stop), Some(step)) => Some(ScanPoints::Range { start, stop, step }),
                        _ => None,
                    }
                }
            };
            let integration = collect(sc.required("integration_s"), &mut errors);
            let seed = match sc.text("seed") {
                Some((line, v)) => collect(v.parse::<u64>().map_err(|_| err(line, format!("`seed` must be a non-negative integer, found `{v}`"))), &mut errors),
                None => Some(0),
            };
            let p_pi = collect(sc.float("P_pi_mW"), &mut errors).flatten();
            sc.finish(&mut errors);
            match (variable, points, integration, seed) {
                (Some(variable), Some(points), Some(integration_s), Some(seed)) => {
                    Some(ScanConfig { variable, points, integration_s, seed, p_pi_mw: p_pi })
                }
                _ => None,
            }
        }
        None => {
            errors.push(err(0, "missing [scan] section"));
            None
        }
    };

    let mut traces = Vec::new();
    match detect {
        Some((_, lines)) => {
            for l in lines {
                if let Some(t) = collect(parse_trace(l.number, l.text), &mut errors) {
                    traces.push(t);
                }
            }
        }
        None => errors.push(err(0, "missing [detect] section")),
    }
    for t in &traces {
        for m in t.probe.modes() {
            circuit.add_detector(m.clone());
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(ParseErrors(errors));
    }
    Ok(Experiment {
        name,
        circuit,
        source: source.expect("checked"),
        scan: scan.expect("checked"),
        traces,
    })
}

fn write_stage(out: &mut String, spec: &ElementSpec) {
    let _ = match spec {
        ElementSpec::GratingCoupler { port, polarization, efficiency } => {
            writeln!(out, "grating {port} pol={polarization} efficiency={efficiency}")
        }
        ElementSpec::BeamSplitter { modes, reflectivity, convention } => {
            writeln!(out, "bs {} {} r={reflectivity} convention={convention}", modes[0], modes[1])
        }
        ElementSpec::Pbs { ports } => writeln!(out, "pbs {} {}", ports[0], ports[1]),
        ElementSpec::ModeConverter { port, crosstalk } => writeln!(out, "converter {port} crosstalk={crosstalk}"),
        ElementSpec::ModeMux { access, bus, crosstalk } => writeln!(out, "mux {access} {bus} crosstalk={crosstalk}"),
        ElementSpec::ModeDemux { access, bus, crosstalk } => writeln!(out, "demux {access} {bus} crosstalk={crosstalk}"),
        ElementSpec::Propagation { port, length_um, wavelength_nm, n_eff } => {
            let _ = write!(out, "propagation {port} length_um={length_um} wavelength_nm={wavelength_nm}");
            for (mode, n) in n_eff {
                let _ = write!(out, " n_{mode}={n}");
            }
            writeln!(out)
        }
        ElementSpec::PhaseShifter { port, phase: PhaseSetting::Fixed(rad) } => writeln!(out, "phase {port} rad={rad}"),
        ElementSpec::PhaseShifter { port, phase: PhaseSetting::Heater { offset_rad } } => {
            writeln!(out, "heater {port} offset_rad={offset_rad}")
        }
    };
}

/// Text form of an experiment; [`parse`] reads it back unchanged.
pub fn serialize(exp: &Experiment) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[experiment]\nname = {}\n", exp.name);

    out.push_str("[modes]\n");
    let reg = exp.circuit.registry();
    for (i, label) in reg.labels().iter().enumerate() {
        if reg.is_loss(i) {
            continue;
        }
        if exp.circuit.inputs().contains(label) {
            let _ = writeln!(out, "{label} input");
        } else {
            let _ = writeln!(out, "{label}");
        }
    }

    out.push_str("\n[stages]\n");
    for spec in exp.circuit.stages() {
        write_stage(&mut out, spec);
    }

    let s = &exp.source;
    let _ = writeln!(
        out,
        "\n[source]\ns0 = {}\nLc_um = {}\npair_rate_hz = {}\naccidental_hz = {}",
        s.base_overlap, s.coherence_length_um, s.pair_rate_hz, s.accidental_hz
    );

    let sc = &exp.scan;
    let _ = writeln!(out, "\n[scan]\nvariable = {}", sc.variable);
    match &sc.points {
        ScanPoints::Range { start, stop, step } => {
            let _ = writeln!(out, "start = {start}\nstop = {stop}\nstep = {step}");
        }
        ScanPoints::List(v) => {
            let joined: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "points = {}", joined.join(","));
        }
    }
    let _ = writeln!(out, "integration_s = {}\nseed = {}", sc.integration_s, sc.seed);
    if let Some(p) = sc.p_pi_mw {
        let _ = writeln!(out, "P_pi_mW = {p}");
    }

    out.push_str("\n[detect]\n");
    for t in &exp.traces {
        let probe = match &t.probe {
            Probe::Coincidence(a, b) => format!("coincidence {a} {b}"),
            Probe::FiberHom(a, Some(b)) => format!("fiber {a} {b}"),
            Probe::FiberHom(a, None) => format!("fiber {a}"),
            Probe::Single(a) => format!("single {a}"),
        };
        let _ = write!(out, "{} {probe}", t.name);
        if t.phase_offset_rad != 0.0 {
            let _ = write!(out, " phase_offset_rad={}", t.phase_offset_rad);
        }
        out.push('\n');
    }
    out
}

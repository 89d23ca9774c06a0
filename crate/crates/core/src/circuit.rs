//! Ordered element chains over a shared mode registry.

use std::fmt;

use thiserror::Error;

use crate::elements::{BsConvention, ElementError, ElementKind, ElementSpec, TransferMatrix};
use crate::modespace::{ModeError, ModeLabel, ModeRegistry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("stage {} ({kind}): {source}", stage + 1)]
    Stage { stage: usize, kind: ElementKind, source: ElementError },
    #[error(transparent)]
    Mode(#[from] ModeError),
}

/// A problem found by [`Circuit::validate`]. Stage numbers are 1-based in
/// the rendered text.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    Stage { stage: usize, kind: ElementKind, error: ElementError },
    IllegalMode { stage: Option<usize>, label: ModeLabel },
    NonUnitaryStage { stage: usize, kind: ElementKind, defect: f64 },
    UnregisteredInput(ModeLabel),
    InputOnLossMode(ModeLabel),
    UnregisteredDetector(ModeLabel),
    DetectorOnLossMode(ModeLabel),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Stage { stage, kind, error } => write!(f, "stage {} ({kind}): {error}", stage + 1),
            Diagnostic::IllegalMode { stage: Some(s), label } => {
                write!(f, "stage {}: illegal mode `{label}` (TM supports only order 0)", s + 1)
            }
            Diagnostic::IllegalMode { stage: None, label } => {
                write!(f, "illegal mode `{label}` (TM supports only order 0)")
            }
            Diagnostic::NonUnitaryStage { stage, kind, defect } => {
                write!(f, "stage {} ({kind}): matrix is not unitary (defect {defect:.3e})", stage + 1)
            }
            Diagnostic::UnregisteredInput(l) => write!(f, "input `{l}` is not a registered mode"),
            Diagnostic::InputOnLossMode(l) => write!(f, "input `{l}` is a loss mode"),
            Diagnostic::UnregisteredDetector(l) => write!(f, "detector `{l}` is not a registered mode"),
            Diagnostic::DetectorOnLossMode(l) => write!(f, "detector `{l}` is a loss mode"),
        }
    }
}

const STAGE_UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Circuit {
    registry: ModeRegistry,
    stages: Vec<ElementSpec>,
    inputs: Vec<ModeLabel>,
    detectors: Vec<ModeLabel>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, label: ModeLabel) -> Result<usize, ModeError> {
        self.registry.register_mode(label)
    }

    /// Appends a stage. Grating couplers get their private loss mode here;
    /// everything else is checked by [`validate`](Self::validate) or
    /// [`compile`](Self::compile).
    pub fn push(&mut self, spec: ElementSpec) -> usize {
        let stage = self.stages.len();
        if let Some(mode) = spec.grating_mode() {
            self.registry.register_loss_mode(&mode, stage);
        }
        self.stages.push(spec);
        stage
    }

    pub fn add_input(&mut self, label: ModeLabel) {
        self.inputs.push(label);
    }

    pub fn add_detector(&mut self, label: ModeLabel) {
        if !self.detectors.contains(&label) {
            self.detectors.push(label);
        }
    }

    pub fn registry(&self) -> &ModeRegistry {
        &self.registry
    }

    pub fn stages(&self) -> &[ElementSpec] {
        &self.stages
    }

    pub fn inputs(&self) -> &[ModeLabel] {
        &self.inputs
    }

    pub fn detectors(&self) -> &[ModeLabel] {
        &self.detectors
    }

    pub fn input_indices(&self) -> Result<Vec<usize>, ModeError> {
        self.inputs.iter().map(|l| self.registry.mode_index(l)).collect()
    }

    pub fn has_heater(&self) -> bool {
        self.stages.iter().any(ElementSpec::is_heater)
    }

    /// `U = U_n ··· U_1` with heater phase shifters at zero power.
    pub fn compile(&self) -> Result<TransferMatrix, CircuitError> {
        self.compile_with_heater(0.0)
    }

    /// Like [`compile`](Self::compile), adding `heater_phase` to every heater.
    pub fn compile_with_heater(&self, heater_phase: f64) -> Result<TransferMatrix, CircuitError> {
        let mut u = TransferMatrix::identity(&self.registry);
        for (stage, spec) in self.stages.iter().enumerate() {
            let placed = spec
                .place(&self.registry, stage, heater_phase)
                .map_err(|source| CircuitError::Stage { stage, kind: spec.kind(), source })?;
            u.apply(&placed);
        }
        Ok(u)
    }

    /// Reports every problem that would stop compilation or make detection
    /// meaningless. Never mutates the circuit.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (stage, spec) in self.stages.iter().enumerate() {
            if let ElementSpec::BeamSplitter { modes, .. } = spec {
                let illegal: Vec<_> = modes.iter().filter(|l| !l.mode().is_supported()).collect();
                if !illegal.is_empty() {
                    out.extend(illegal.into_iter().map(|l| Diagnostic::IllegalMode { stage: Some(stage), label: l.clone() }));
                    continue;
                }
            }
            match spec.place(&self.registry, stage, 0.0) {
                Ok(placed) => {
                    let defect = crate::elements::unitarity_defect(&placed.local);
                    if defect > STAGE_UNITARITY_TOL {
                        out.push(Diagnostic::NonUnitaryStage { stage, kind: spec.kind(), defect });
                    }
                }
                Err(error) => out.push(Diagnostic::Stage { stage, kind: spec.kind(), error }),
            }
        }
        for label in &self.inputs {
            match self.registry.mode_index(label) {
                Ok(i) if self.registry.is_loss(i) => out.push(Diagnostic::InputOnLossMode(label.clone())),
                Ok(_) => {}
                Err(_) if !label.mode().is_supported() => {
                    out.push(Diagnostic::IllegalMode { stage: None, label: label.clone() })
                }
                Err(_) => out.push(Diagnostic::UnregisteredInput(label.clone())),
            }
        }
        for label in &self.detectors {
            match self.registry.mode_index(label) {
                Ok(i) if self.registry.is_loss(i) => out.push(Diagnostic::DetectorOnLossMode(label.clone())),
                Ok(_) => {}
                Err(_) if !label.mode().is_supported() => {
                    out.push(Diagnostic::IllegalMode { stage: None, label: label.clone() })
                }
                Err(_) => out.push(Diagnostic::UnregisteredDetector(label.clone())),
            }
        }
        out
    }

    /// Copy with every beam splitter switched to `convention`.
    pub fn with_bs_convention(&self, convention: BsConvention) -> Circuit {
        let mut c = self.clone();
        for spec in &mut c.stages {
            if let ElementSpec::BeamSplitter { convention: conv, .. } = spec {
                *conv = convention;
            }
        }
        c
    }
}

//! Mode labels over the path, polarization and transverse-mode degrees of
//! freedom, and the registry that maps them onto contiguous indices.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModeError {
    #[error("unknown mode `{0}`")]
    UnknownLabel(ModeLabel),
    #[error("unsupported mode `{0}`: higher-order transverse modes exist only for TE")]
    Unsupported(ModeLabel),
    #[error("invalid port name `{0}`")]
    InvalidPort(String),
    #[error("cannot parse mode label `{0}` (expected port:TE0, port:TE1 or port:TM0)")]
    BadLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    TE,
    TM,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::TE => f.write_str("TE"),
            Polarization::TM => f.write_str("TM"),
        }
    }
}

impl FromStr for Polarization {
    type Err = ModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TE" => Ok(Polarization::TE),
            "TM" => Ok(Polarization::TM),
            _ => Err(ModeError::BadLabel(s.to_string())),
        }
    }
}

/// Polarization plus transverse order, e.g. `TE1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransverseMode {
    pub polarization: Polarization,
    pub order: u8,
}

impl TransverseMode {
    pub const TE0: TransverseMode = TransverseMode { polarization: Polarization::TE, order: 0 };
    pub const TE1: TransverseMode = TransverseMode { polarization: Polarization::TE, order: 1 };
    pub const TM0: TransverseMode = TransverseMode { polarization: Polarization::TM, order: 0 };

    pub fn fundamental(polarization: Polarization) -> Self {
        TransverseMode { polarization, order: 0 }
    }

    pub fn is_supported(&self) -> bool {
        self.polarization == Polarization::TE || self.order == 0
    }
}

impl fmt::Display for TransverseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.polarization, self.order)
    }
}

impl FromStr for TransverseMode {
    type Err = ModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModeError::BadLabel(s.to_string());
        if s.len() < 3 || !s.is_char_boundary(2) {
            return Err(bad());
        }
        let (pol, order) = s.split_at(2);
        let polarization = pol.parse().map_err(|_| bad())?;
        let order = order.parse().map_err(|_| bad())?;
        Ok(TransverseMode { polarization, order })
    }
}

/// A guided mode: spatial port, polarization and transverse order.
///
/// Written as `port:TE0` in circuit files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel {
    port: String,
    mode: TransverseMode,
}

impl ModeLabel {
    pub fn new(port: impl Into<String>, polarization: Polarization, transverse_order: u8) -> Self {
        ModeLabel {
            port: port.into(),
            mode: TransverseMode { polarization, order: transverse_order },
        }
    }

    pub fn with_mode(port: impl Into<String>, mode: TransverseMode) -> Self {
        ModeLabel { port: port.into(), mode }
    }

    pub fn te0(port: impl Into<String>) -> Self {
        Self::with_mode(port, TransverseMode::TE0)
    }

    pub fn te1(port: impl Into<String>) -> Self {
        Self::with_mode(port, TransverseMode::TE1)
    }

    pub fn tm0(port: impl Into<String>) -> Self {
        Self::with_mode(port, TransverseMode::TM0)
    }

    pub fn port(&self) -> &str {
        &self.port
    }

    pub fn polarization(&self) -> Polarization {
        self.mode.polarization
    }

    pub fn transverse_order(&self) -> u8 {
        self.mode.order
    }

    pub fn mode(&self) -> TransverseMode {
        self.mode
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.port, self.mode)
    }
}

impl FromStr for ModeLabel {
    type Err = ModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (port, mode) = s.rsplit_once(':').ok_or_else(|| ModeError::BadLabel(s.to_string()))?;
        check_port(port)?;
        let mode = mode.parse().map_err(|_| ModeError::BadLabel(s.to_string()))?;
        Ok(ModeLabel::with_mode(port, mode))
    }
}

/// Port names are single tokens; `#` is reserved for loss modes.
pub fn check_port(port: &str) -> Result<(), ModeError> {
    let ok = !port.is_empty()
        && port
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, ':' | '#' | '=' | ',' | '[' | ']'));
    if ok {
        Ok(())
    } else {
        Err(ModeError::InvalidPort(port.to_string()))
    }
}

/// Ordered set of distinct mode labels. Indices follow insertion order and
/// never change once assigned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeRegistry {
    labels: Vec<ModeLabel>,
    loss: Vec<bool>,
    index: HashMap<ModeLabel, usize>,
}

impl ModeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent: a label that is already present keeps its index.
    pub fn register_mode(&mut self, label: ModeLabel) -> Result<usize, ModeError> {
        if let Some(&i) = self.index.get(&label) {
            return Ok(i);
        }
        check_port(label.port())?;
        if !label.mode().is_supported() {
            return Err(ModeError::Unsupported(label));
        }
        Ok(self.insert(label, false))
    }

    /// Registers the dedicated loss mode of stage `stage` acting on `owner`.
    pub fn register_loss_mode(&mut self, owner: &ModeLabel, stage: usize) -> usize {
        let label = loss_label(owner, stage);
        if let Some(&i) = self.index.get(&label) {
            return i;
        }
        self.insert(label, true)
    }

    fn insert(&mut self, label: ModeLabel, loss: bool) -> usize {
        let i = self.labels.len();
        self.index.insert(label.clone(), i);
        self.labels.push(label);
        self.loss.push(loss);
        i
    }

    pub fn mode_index(&self, label: &ModeLabel) -> Result<usize, ModeError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| ModeError::UnknownLabel(label.clone()))
    }

    pub fn contains(&self, label: &ModeLabel) -> bool {
        self.index.contains_key(label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &ModeLabel {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn is_loss(&self, index: usize) -> bool {
        self.loss[index]
    }

    pub fn loss_mask(&self) -> &[bool] {
        &self.loss
    }

    /// Guided (non-loss) modes registered on `port`, in index order.
    pub fn modes_on_port(&self, port: &str) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(i, l)| !self.loss[*i] && l.port() == port)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_port(&self, port: &str) -> bool {
        !self.modes_on_port(port).is_empty()
    }
}

pub(crate) fn loss_label(owner: &ModeLabel, stage: usize) -> ModeLabel {
    ModeLabel::with_mode(format!("{}#loss{}", owner.port(), stage), owner.mode())
}

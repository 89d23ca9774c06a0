//! Transfer matrices of the on-chip elements.
//!
//! Every element acts in place on mode labels: a port names one physical
//! waveguide, and an element redistributes amplitude among the modes it
//! touches. Local matrices are indexed in the order documented on each
//! builder; [`ElementSpec::place`] resolves that order against a registry.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::modespace::{loss_label, ModeError, ModeLabel, ModeRegistry, Polarization, TransverseMode};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("{param} = {value} is out of range ({range})")]
    OutOfRange { param: &'static str, value: f64, range: &'static str },
    #[error("element uses port `{0}` twice")]
    PortCollision(String),
    #[error("unknown port `{0}`")]
    UnknownPort(String),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error("no effective index given for `{0}`")]
    MissingIndex(ModeLabel),
    #[error("loss mode for `{0}` was never registered")]
    MissingLossMode(ModeLabel),
    #[error("transfer matrix dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Phase convention of a beam splitter. The measurable two-photon
/// statistics do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BsConvention {
    /// `[[√r, i√(1−r)], [i√(1−r), √r]]`
    #[default]
    Symmetric,
    /// `[[√r, √(1−r)], [√(1−r), −√r]]`
    Real,
}

impl fmt::Display for BsConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BsConvention::Symmetric => f.write_str("symmetric"),
            BsConvention::Real => f.write_str("real"),
        }
    }
}

fn check_range(param: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), ElementError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ElementError::OutOfRange { param, value, range })
    }
}

fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

pub fn bs_matrix(reflectivity: f64) -> Result<DMatrix<C64>, ElementError> {
    bs_matrix_with(reflectivity, BsConvention::Symmetric)
}

pub fn bs_matrix_with(reflectivity: f64, convention: BsConvention) -> Result<DMatrix<C64>, ElementError> {
    check_range("reflectivity", reflectivity, (0.0..=1.0).contains(&reflectivity), "[0, 1]")?;
    let r = reflectivity.sqrt();
    let t = (1.0 - reflectivity).sqrt();
    Ok(match convention {
        BsConvention::Symmetric => DMatrix::from_row_slice(2, 2, &[c(r, 0.0), c(0.0, t), c(0.0, t), c(r, 0.0)]),
        BsConvention::Real => DMatrix::from_row_slice(2, 2, &[c(r, 0.0), c(t, 0.0), c(t, 0.0), c(-r, 0.0)]),
    })
}

/// Polarization beam splitter on two waveguides `a`, `b`. Local order:
/// `(a,TE0), (b,TE0), (a,TM0), (b,TM0)`. TE passes straight through, TM
/// crosses to the other waveguide.
pub fn pbs_matrix() -> DMatrix<C64> {
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = C64::new(1.0, 0.0);
    m[(1, 1)] = C64::new(1.0, 0.0);
    m[(2, 3)] = C64::new(1.0, 0.0);
    m[(3, 2)] = C64::new(1.0, 0.0);
    m
}

/// Symmetric 2×2 exchange with optional crosstalk angle; `crosstalk = 0`
/// is the ideal swap. Self-inverse for every angle.
fn exchange(crosstalk: f64) -> DMatrix<C64> {
    let (s, co) = crosstalk.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(co, 0.0), c(co, 0.0), c(-s, 0.0)])
}

/// Polarization-dependent mode converter on one port. Local order:
/// `(port,TM0), (port,TE1)`; `(port,TE0)` is untouched.
pub fn mode_converter_matrix(crosstalk: f64) -> Result<DMatrix<C64>, ElementError> {
    check_range("crosstalk", crosstalk, true, "finite")?;
    Ok(exchange(crosstalk))
}

/// Asymmetric-coupler mode (de)multiplexer. Local order:
/// `(access,TE0), (bus,TE1)`; `(bus,TE0)` is untouched. The matrix is its own
/// transpose, so the demultiplexer uses the same builder.
pub fn mode_mux_matrix(crosstalk: f64) -> Result<DMatrix<C64>, ElementError> {
    check_range("crosstalk", crosstalk, true, "finite")?;
    Ok(exchange(crosstalk))
}

/// `exp(i·2π·n_eff·L/λ)` with L in µm and λ in nm.
pub fn propagation_phase(n_eff: f64, length_um: f64, wavelength_nm: f64) -> C64 {
    let phase = 2.0 * PI * n_eff * (length_um * 1.0e3) / wavelength_nm;
    Complex64::from_polar(1.0, phase)
}

/// Diagonal propagation factors for `modes` (in the given order).
pub fn propagation_matrix(
    modes: &[TransverseMode],
    length_um: f64,
    wavelength_nm: f64,
    n_eff: &BTreeMap<TransverseMode, f64>,
) -> Result<DMatrix<C64>, ElementError> {
    check_range("length_um", length_um, length_um >= 0.0, ">= 0")?;
    check_range("wavelength_nm", wavelength_nm, wavelength_nm > 0.0, "> 0")?;
    let mut m = DMatrix::zeros(modes.len(), modes.len());
    for (i, mode) in modes.iter().enumerate() {
        let n = n_eff
            .get(mode)
            .ok_or_else(|| ElementError::MissingIndex(ModeLabel::with_mode("?", *mode)))?;
        m[(i, i)] = propagation_phase(*n, length_um, wavelength_nm);
    }
    Ok(m)
}

pub fn phase_shifter_matrix(n_modes: usize, phase_rad: f64) -> DMatrix<C64> {
    DMatrix::from_diagonal_element(n_modes, n_modes, Complex64::from_polar(1.0, phase_rad))
}

/// Grating coupler as a beam splitter into a loss mode. Local order:
/// `(port, pol, 0), loss`.
pub fn grating_coupler_matrix(efficiency: f64) -> Result<DMatrix<C64>, ElementError> {
    check_range("efficiency", efficiency, efficiency > 0.0 && efficiency <= 1.0, "(0, 1]")?;
    let t = efficiency.sqrt();
    let l = (1.0 - efficiency).sqrt();
    Ok(DMatrix::from_row_slice(2, 2, &[c(t, 0.0), c(-l, 0.0), c(l, 0.0), c(t, 0.0)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseSetting {
    Fixed(f64),
    /// Thermally tuned; the swept heater phase is added to `offset_rad`.
    Heater { offset_rad: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    BeamSplitter,
    Pbs,
    ModeConverter,
    ModeMux,
    ModeDemux,
    Propagation,
    PhaseShifter,
    GratingCoupler,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementSpec {
    BeamSplitter { modes: [ModeLabel; 2], reflectivity: f64, convention: BsConvention },
    Pbs { ports: [String; 2] },
    ModeConverter { port: String, crosstalk: f64 },
    ModeMux { access: String, bus: String, crosstalk: f64 },
    ModeDemux { access: String, bus: String, crosstalk: f64 },
    Propagation { port: String, length_um: f64, wavelength_nm: f64, n_eff: BTreeMap<TransverseMode, f64> },
    PhaseShifter { port: String, phase: PhaseSetting },
    GratingCoupler { port: String, polarization: Polarization, efficiency: f64 },
}

/// An element resolved against a registry: the global indices it touches and
/// its local matrix in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedElement {
    pub modes: Vec<usize>,
    pub local: DMatrix<C64>,
}

impl ElementSpec {
    pub fn beam_splitter(a: ModeLabel, b: ModeLabel, reflectivity: f64) -> Self {
        ElementSpec::BeamSplitter { modes: [a, b], reflectivity, convention: BsConvention::Symmetric }
    }

    pub fn grating(port: impl Into<String>, polarization: Polarization, efficiency: f64) -> Self {
        ElementSpec::GratingCoupler { port: port.into(), polarization, efficiency }
    }

    pub fn kind(&self) -> ElementKind {
        match self {
            ElementSpec::BeamSplitter { .. } => ElementKind::BeamSplitter,
            ElementSpec::Pbs { .. } => ElementKind::Pbs,
            ElementSpec::ModeConverter { .. } => ElementKind::ModeConverter,
            ElementSpec::ModeMux { .. } => ElementKind::ModeMux,
            ElementSpec::ModeDemux { .. } => ElementKind::ModeDemux,
            ElementSpec::Propagation { .. } => ElementKind::Propagation,
            ElementSpec::PhaseShifter { .. } => ElementKind::PhaseShifter,
            ElementSpec::GratingCoupler { .. } => ElementKind::GratingCoupler,
        }
    }

    /// The guided mode a grating coupler transmits, which owns its loss mode.
    pub fn grating_mode(&self) -> Option<ModeLabel> {
        match self {
            ElementSpec::GratingCoupler { port, polarization, .. } => {
                Some(ModeLabel::with_mode(port.clone(), TransverseMode::fundamental(*polarization)))
            }
            _ => None,
        }
    }

    pub fn is_heater(&self) -> bool {
        matches!(self, ElementSpec::PhaseShifter { phase: PhaseSetting::Heater { .. }, .. })
    }

    /// Ports the element refers to by name (labels included).
    pub fn ports(&self) -> Vec<&str> {
        match self {
            ElementSpec::BeamSplitter { modes, .. } => vec![modes[0].port(), modes[1].port()],
            ElementSpec::Pbs { ports } => vec![&ports[0], &ports[1]],
            ElementSpec::ModeMux { access, bus, .. } | ElementSpec::ModeDemux { access, bus, .. } => {
                vec![access, bus]
            }
            ElementSpec::ModeConverter { port, .. }
            | ElementSpec::Propagation { port, .. }
            | ElementSpec::PhaseShifter { port, .. }
            | ElementSpec::GratingCoupler { port, .. } => vec![port],
        }
    }

    /// Checks kind-specific parameter ranges without touching a registry.
    pub fn check_params(&self) -> Result<(), ElementError> {
        match self {
            ElementSpec::BeamSplitter { modes, reflectivity, convention } => {
                if modes[0] == modes[1] {
                    return Err(ElementError::PortCollision(modes[0].to_string()));
                }
                bs_matrix_with(*reflectivity, *convention).map(|_| ())
            }
            ElementSpec::Pbs { ports } => {
                if ports[0] == ports[1] {
                    Err(ElementError::PortCollision(ports[0].clone()))
                } else {
                    Ok(())
                }
            }
            ElementSpec::ModeConverter { crosstalk, .. } => mode_converter_matrix(*crosstalk).map(|_| ()),
            ElementSpec::ModeMux { access, bus, crosstalk } | ElementSpec::ModeDemux { access, bus, crosstalk } => {
                if access == bus {
                    return Err(ElementError::PortCollision(access.clone()));
                }
                mode_mux_matrix(*crosstalk).map(|_| ())
            }
            ElementSpec::Propagation { length_um, wavelength_nm, n_eff, .. } => {
                propagation_matrix(&[], *length_um, *wavelength_nm, n_eff)?;
                for (mode, n) in n_eff {
                    if !n.is_finite() || *n <= 0.0 {
                        let _ = mode;
                        return Err(ElementError::OutOfRange { param: "n_eff", value: *n, range: "> 0" });
                    }
                }
                Ok(())
            }
            ElementSpec::PhaseShifter { phase, .. } => {
                let v = match phase {
                    PhaseSetting::Fixed(v) => *v,
                    PhaseSetting::Heater { offset_rad } => *offset_rad,
                };
                check_range("phase_rad", v, true, "finite")
            }
            ElementSpec::GratingCoupler { efficiency, .. } => grating_coupler_matrix(*efficiency).map(|_| ()),
        }
    }

    /// Resolves the element against `registry`. `stage` identifies the
    /// element's loss mode; `heater_phase` is added to heater phase shifters.
    pub fn place(&self, registry: &ModeRegistry, stage: usize, heater_phase: f64) -> Result<PlacedElement, ElementError> {
        self.check_params()?;
        for port in self.ports() {
            if !registry.has_port(port) {
                return Err(ElementError::UnknownPort(port.to_string()));
            }
        }
        let idx = |label: ModeLabel| registry.mode_index(&label).map_err(ElementError::from);
        let placed = match self {
            ElementSpec::BeamSplitter { modes, reflectivity, convention } => PlacedElement {
                modes: vec![idx(modes[0].clone())?, idx(modes[1].clone())?],
                local: bs_matrix_with(*reflectivity, *convention)?,
            },
            ElementSpec::Pbs { ports: [a, b] } => PlacedElement {
                modes: vec![
                    idx(ModeLabel::te0(a.as_str()))?,
                    idx(ModeLabel::te0(b.as_str()))?,
                    idx(ModeLabel::tm0(a.as_str()))?,
                    idx(ModeLabel::tm0(b.as_str()))?,
                ],
                local: pbs_matrix(),
            },
            ElementSpec::ModeConverter { port, crosstalk } => PlacedElement {
                modes: vec![idx(ModeLabel::tm0(port.as_str()))?, idx(ModeLabel::te1(port.as_str()))?],
                local: mode_converter_matrix(*crosstalk)?,
            },
            ElementSpec::ModeMux { access, bus, crosstalk } | ElementSpec::ModeDemux { access, bus, crosstalk } => {
                idx(ModeLabel::te0(bus.as_str()))?;
                PlacedElement {
                    modes: vec![idx(ModeLabel::te0(access.as_str()))?, idx(ModeLabel::te1(bus.as_str()))?],
                    local: mode_mux_matrix(*crosstalk)?,
                }
            }
            ElementSpec::Propagation { port, length_um, wavelength_nm, n_eff } => {
                let modes = registry.modes_on_port(port);
                let kinds: Vec<TransverseMode> = modes.iter().map(|&i| registry.label(i).mode()).collect();
                let local = propagation_matrix(&kinds, *length_um, *wavelength_nm, n_eff).map_err(|e| match e {
                    ElementError::MissingIndex(l) => ElementError::MissingIndex(ModeLabel::with_mode(port.clone(), l.mode())),
                    other => other,
                })?;
                PlacedElement { modes, local }
            }
            ElementSpec::PhaseShifter { port, phase } => {
                let modes = registry.modes_on_port(port);
                let rad = match phase {
                    PhaseSetting::Fixed(v) => *v,
                    PhaseSetting::Heater { offset_rad } => offset_rad + heater_phase,
                };
                let local = phase_shifter_matrix(modes.len(), rad);
                PlacedElement { modes, local }
            }
            ElementSpec::GratingCoupler { efficiency, .. } => {
                let mode = self.grating_mode().expect("grating");
                let guided = idx(mode.clone())?;
                let loss = registry
                    .mode_index(&loss_label(&mode, stage))
                    .map_err(|_| ElementError::MissingLossMode(mode.clone()))?;
                PlacedElement { modes: vec![guided, loss], local: grating_coupler_matrix(*efficiency)? }
            }
        };
        Ok(placed)
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ElementKind::BeamSplitter => "bs",
            ElementKind::Pbs => "pbs",
            ElementKind::ModeConverter => "converter",
            ElementKind::ModeMux => "mux",
            ElementKind::ModeDemux => "demux",
            ElementKind::Propagation => "propagation",
            ElementKind::PhaseShifter => "phase",
            ElementKind::GratingCoupler => "grating",
        };
        f.write_str(s)
    }
}

/// A square matrix on the full registered mode space, with the registry's
/// loss-mode mask attached.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    entries: DMatrix<C64>,
    loss: Vec<bool>,
}

impl TransferMatrix {
    pub fn identity(registry: &ModeRegistry) -> Self {
        let n = registry.len();
        TransferMatrix { entries: DMatrix::identity(n, n), loss: registry.loss_mask().to_vec() }
    }

    /// Wraps a bare matrix with no loss modes.
    pub fn from_entries(entries: DMatrix<C64>) -> Self {
        assert!(entries.is_square(), "transfer matrix must be square");
        let loss = vec![false; entries.nrows()];
        TransferMatrix { entries, loss }
    }

    pub fn from_placed(registry: &ModeRegistry, placed: &PlacedElement) -> Self {
        let mut m = Self::identity(registry);
        m.apply(placed);
        m
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn get(&self, out_mode: usize, in_mode: usize) -> C64 {
        self.entries[(out_mode, in_mode)]
    }

    pub fn loss_mask(&self) -> &[bool] {
        &self.loss
    }

    pub fn is_loss(&self, mode: usize) -> bool {
        self.loss[mode]
    }

    /// Left-multiplies by the embedded element: `U ← E·U`.
    pub fn apply(&mut self, placed: &PlacedElement) {
        let k = placed.modes.len();
        let cols = self.entries.ncols();
        let mut rows = DMatrix::<C64>::zeros(k, cols);
        for (r, &m) in placed.modes.iter().enumerate() {
            rows.row_mut(r).copy_from(&self.entries.row(m));
        }
        let updated = &placed.local * rows;
        for (r, &m) in placed.modes.iter().enumerate() {
            self.entries.row_mut(m).copy_from(&updated.row(r));
        }
    }

    /// `later · self`: this matrix acts first.
    pub fn then(&self, later: &TransferMatrix) -> Result<TransferMatrix, ElementError> {
        if later.dim() != self.dim() {
            return Err(ElementError::DimensionMismatch { expected: self.dim(), found: later.dim() });
        }
        let loss = self.loss.iter().zip(&later.loss).map(|(a, b)| *a || *b).collect();
        Ok(TransferMatrix { entries: &later.entries * &self.entries, loss })
    }

    /// `max |(U†U − I)_{jk}|`.
    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.entries)
    }

    /// True when some guided mode leaks amplitude into a loss mode.
    pub fn couples_to_loss(&self) -> bool {
        let n = self.dim();
        (0..n).any(|r| self.loss[r] && (0..n).any(|c| !self.loss[c] && self.entries[(r, c)].norm() > 1e-12))
    }

    /// Exactly one unit-magnitude entry per row and column within `modes`,
    /// and no coupling between `modes` and the rest.
    pub fn is_permutation_on(&self, modes: &[usize], tol: f64) -> bool {
        is_permutation(&self.entries, modes, tol)
    }

    /// Appends one guided mode (index `dim()`) that this matrix leaves alone.
    pub fn with_extra_mode(&self) -> TransferMatrix {
        let n = self.dim();
        let mut entries = DMatrix::identity(n + 1, n + 1);
        entries.view_mut((0, 0), (n, n)).copy_from(&self.entries);
        let mut loss = self.loss.clone();
        loss.push(false);
        TransferMatrix { entries, loss }
    }

    /// Same matrix with every row/column reindexed into a registry that
    /// extends the original one (new modes get identity).
    pub fn extended_to(&self, registry: &ModeRegistry) -> Result<TransferMatrix, ElementError> {
        if registry.len() < self.dim() {
            return Err(ElementError::DimensionMismatch { expected: self.dim(), found: registry.len() });
        }
        let mut m = Self::identity(registry);
        let n = self.dim();
        m.entries.view_mut((0, 0), (n, n)).copy_from(&self.entries);
        Ok(m)
    }
}

pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let n = u.ncols();
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((g[(j, k)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn is_permutation(u: &DMatrix<C64>, modes: &[usize], tol: f64) -> bool {
    let n = u.nrows();
    let inside = |i: usize| modes.contains(&i);
    for &r in modes {
        let units = modes.iter().filter(|&&c| (u[(r, c)].norm() - 1.0).abs() <= tol).count();
        let zeros = modes.iter().filter(|&&c| u[(r, c)].norm() <= tol).count();
        if units != 1 || units + zeros != modes.len() {
            return false;
        }
        let col_units = modes.iter().filter(|&&x| (u[(x, r)].norm() - 1.0).abs() <= tol).count();
        if col_units != 1 {
            return false;
        }
        if (0..n).filter(|&x| !inside(x)).any(|x| u[(r, x)].norm() > tol || u[(x, r)].norm() > tol) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < TOL
    }

    #[test]
    fn bs_fully_reflective_is_identity() {
        let m = bs_matrix(1.0).unwrap();
        assert!((m - DMatrix::<C64>::identity(2, 2)).camax() < TOL);
    }

    #[test]
    fn bs_balanced_amplitudes() {
        let m = bs_matrix(0.5).unwrap();
        let out = &m * nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(out[0], c(h, 0.0)));
        assert!(close(out[1], c(0.0, h)));
        assert!(unitarity_defect(&m) < TOL);
    }

    #[test]
    fn bs_rejects_bad_reflectivity() {
        assert!(matches!(bs_matrix(1.2), Err(ElementError::OutOfRange { .. })));
        assert!(bs_matrix(-0.1).is_err());
        assert!(bs_matrix(f64::NAN).is_err());
    }

    fn registry(labels: &[ModeLabel]) -> ModeRegistry {
        let mut reg = ModeRegistry::new();
        for l in labels {
            reg.register_mode(l.clone()).unwrap();
        }
        reg
    }

    #[test]
    fn pbs_routes_te_bar_and_tm_cross() {
        let reg = registry(&[ModeLabel::te0("in0"), ModeLabel::te0("in1"), ModeLabel::tm0("in0"), ModeLabel::tm0("in1")]);
        let spec = ElementSpec::Pbs { ports: ["in0".into(), "in1".into()] };
        let u = TransferMatrix::from_placed(&reg, &spec.place(&reg, 0, 0.0).unwrap());
        assert!(close(u.get(0, 0), c(1.0, 0.0)));
        assert!(close(u.get(3, 2), c(1.0, 0.0)));
        assert!(u.is_permutation_on(&[0, 1, 2, 3], TOL));
        let same = ElementSpec::Pbs { ports: ["in0".into(), "in0".into()] };
        assert!(matches!(same.place(&reg, 0, 0.0), Err(ElementError::PortCollision(_))));
    }

    #[test]
    fn converter_swaps_tm0_and_te1() {
        let reg = registry(&[ModeLabel::te0("w"), ModeLabel::tm0("w"), ModeLabel::te1("w")]);
        let spec = ElementSpec::ModeConverter { port: "w".into(), crosstalk: 0.0 };
        let u = TransferMatrix::from_placed(&reg, &spec.place(&reg, 0, 0.0).unwrap());
        assert!(close(u.get(2, 1), c(1.0, 0.0)));
        assert!(close(u.get(0, 0), c(1.0, 0.0)));
        let twice = u.then(&u).unwrap();
        assert!((twice.entries() - DMatrix::<C64>::identity(3, 3)).camax() < TOL);
        assert!(u.is_permutation_on(&[1, 2], TOL));
    }

    #[test]
    fn converter_needs_its_modes() {
        let reg = registry(&[ModeLabel::te0("w")]);
        let spec = ElementSpec::ModeConverter { port: "w".into(), crosstalk: 0.0 };
        assert!(matches!(spec.place(&reg, 0, 0.0), Err(ElementError::Mode(ModeError::UnknownLabel(_)))));
    }

    #[test]
    fn mux_then_demux_is_identity() {
        let reg = registry(&[ModeLabel::te0("acc"), ModeLabel::te0("bus"), ModeLabel::te1("bus")]);
        let mux = ElementSpec::ModeMux { access: "acc".into(), bus: "bus".into(), crosstalk: 0.0 };
        let demux = ElementSpec::ModeDemux { access: "acc".into(), bus: "bus".into(), crosstalk: 0.0 };
        let m = TransferMatrix::from_placed(&reg, &mux.place(&reg, 0, 0.0).unwrap());
        assert!(close(m.get(2, 0), c(1.0, 0.0)));
        assert!(close(m.get(1, 1), c(1.0, 0.0)));
        let d = TransferMatrix::from_placed(&reg, &demux.place(&reg, 1, 0.0).unwrap());
        let both = m.then(&d).unwrap();
        assert!((both.entries() - DMatrix::<C64>::identity(3, 3)).camax() < TOL);
    }

    #[test]
    fn crosstalk_keeps_unitarity() {
        for eps in [0.0, 0.01, 0.3] {
            assert!(unitarity_defect(&mode_mux_matrix(eps).unwrap()) < TOL);
        }
    }

    fn n_eff() -> BTreeMap<TransverseMode, f64> {
        BTreeMap::from([(TransverseMode::TE0, 2.40), (TransverseMode::TE1, 1.80)])
    }

    #[test]
    fn propagation_zero_length_is_identity() {
        let m = propagation_matrix(&[TransverseMode::TE0, TransverseMode::TE1], 0.0, 1550.0, &n_eff()).unwrap();
        assert!((m - DMatrix::<C64>::identity(2, 2)).camax() < TOL);
    }

    #[test]
    fn propagation_full_beat_length_restores_relative_phase() {
        let dn = 0.6;
        let l = 1550.0 / dn / 1e3;
        let m = propagation_matrix(&[TransverseMode::TE0, TransverseMode::TE1], l, 1550.0, &n_eff()).unwrap();
        let rel = m[(0, 0)] / m[(1, 1)];
        assert!(close(rel, c(1.0, 0.0)));
    }

    #[test]
    fn propagation_relative_phase_value() {
        // 2π·0.6·387.5/1550 = 0.3π
        let m = propagation_matrix(&[TransverseMode::TE0, TransverseMode::TE1], 0.3875, 1550.0, &n_eff()).unwrap();
        let rel = (m[(0, 0)] / m[(1, 1)]).arg();
        assert!((rel - 0.3 * PI).abs() < TOL);
    }

    #[test]
    fn propagation_requires_index_for_every_mode_on_port() {
        let reg = registry(&[ModeLabel::te0("w"), ModeLabel::tm0("w")]);
        let spec = ElementSpec::Propagation { port: "w".into(), length_um: 1.0, wavelength_nm: 1550.0, n_eff: n_eff() };
        let err = spec.place(&reg, 0, 0.0).unwrap_err();
        assert_eq!(err, ElementError::MissingIndex(ModeLabel::tm0("w")));
    }

    #[test]
    fn phase_shifter_periodicity() {
        assert!((phase_shifter_matrix(2, 0.0) - DMatrix::<C64>::identity(2, 2)).camax() < TOL);
        let pi = phase_shifter_matrix(2, PI);
        assert!((&pi * &pi - DMatrix::<C64>::identity(2, 2)).camax() < TOL);
    }

    #[test]
    fn quarter_wave_arm_in_balanced_interferometer_splits_evenly() {
        let bs = bs_matrix(0.5).unwrap();
        let mut p = DMatrix::<C64>::identity(2, 2);
        p[(0, 0)] = Complex64::from_polar(1.0, PI / 2.0);
        let u = &bs * p * &bs;
        assert!((u[(0, 0)].norm_sqr() - 0.5).abs() < TOL);
        assert!((u[(1, 0)].norm_sqr() - 0.5).abs() < TOL);
    }

    #[test]
    fn grating_transmission() {
        let full = grating_coupler_matrix(1.0).unwrap();
        assert!((full - DMatrix::<C64>::identity(2, 2)).camax() < TOL);
        let g = grating_coupler_matrix(0.3).unwrap();
        assert!((g[(0, 0)].norm_sqr() - 0.3).abs() < TOL);
        assert!(unitarity_defect(&g) < TOL);
        assert!(grating_coupler_matrix(0.0).is_err());
        assert!(grating_coupler_matrix(1.5).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = TransferMatrix::from_entries(DMatrix::identity(2, 2));
        let b = TransferMatrix::from_entries(DMatrix::identity(3, 3));
        assert!(matches!(a.then(&b), Err(ElementError::DimensionMismatch { expected: 2, found: 3 })));
    }

    proptest! {
        #[test]
        fn builders_are_unitary(r in 0.0f64..=1.0, eta in 0.001f64..=1.0, eps in -1.0f64..1.0, phase in -10.0f64..10.0) {
            prop_assert!(unitarity_defect(&bs_matrix(r).unwrap()) <= 1e-10);
            prop_assert!(unitarity_defect(&bs_matrix_with(r, BsConvention::Real).unwrap()) <= 1e-10);
            prop_assert!(unitarity_defect(&grating_coupler_matrix(eta).unwrap()) <= 1e-10);
            prop_assert!(unitarity_defect(&mode_converter_matrix(eps).unwrap()) <= 1e-10);
            prop_assert!(unitarity_defect(&pbs_matrix()) <= 1e-10);
            prop_assert!(unitarity_defect(&phase_shifter_matrix(3, phase)) <= 1e-10);
        }

        #[test]
        fn propagation_lengths_add(l1 in 0.0f64..50.0, l2 in 0.0f64..50.0) {
            let modes = [TransverseMode::TE0, TransverseMode::TE1];
            let a = propagation_matrix(&modes, l1, 1558.0, &n_eff()).unwrap();
            let b = propagation_matrix(&modes, l2, 1558.0, &n_eff()).unwrap();
            let ab = propagation_matrix(&modes, l1 + l2, 1558.0, &n_eff()).unwrap();
            prop_assert!((&a * &b - ab).camax() <= 1e-12);
        }

        #[test]
        fn propagation_lengths_add_long(l1 in 0.0f64..2000.0, l2 in 0.0f64..2000.0) {
            let modes = [TransverseMode::TE0, TransverseMode::TE1];
            let a = propagation_matrix(&modes, l1, 1558.0, &n_eff()).unwrap();
            let b = propagation_matrix(&modes, l2, 1558.0, &n_eff()).unwrap();
            let ab = propagation_matrix(&modes, l1 + l2, 1558.0, &n_eff()).unwrap();
            // phases reach ~2e4 rad, so the argument itself carries ~1e-12 rounding
            prop_assert!((&a * &b - ab).camax() <= 1e-10);
        }
    }
}

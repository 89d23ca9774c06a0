//! Few-photon Fock-state evolution through a linear transfer matrix, with
//! partial distinguishability carried by a wavepacket Gram matrix.

mod permanent;
mod state;

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::elements::{bs_matrix, TransferMatrix};
use crate::C64;

pub use permanent::{permanent, permanent_naive, MAX_PERMANENT_DIM};
pub use state::{Configuration, Photon, PhotonState, WavepacketBasis};

use permanent::ryser;
use state::ket_factor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("permanent needs a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{n} photons exceeds the supported maximum of {max}")]
    TooManyPhotons { n: usize, max: usize },
    #[error("state has {state} photons but the pattern counts {pattern}")]
    PhotonNumberMismatch { state: usize, pattern: usize },
    #[error("detection pattern references loss mode {0}")]
    PatternOnLossMode(usize),
    #[error("mode {mode} is outside the {dim}-mode transfer matrix")]
    ModeOutOfRange { mode: usize, dim: usize },
    #[error("state norm is {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("wavepacket tag {tag} is outside the {basis}-element basis")]
    TagOutOfRange { tag: usize, basis: usize },
    #[error("transfer matrix couples guided modes into loss modes; use pattern probabilities instead")]
    LossyEvolution,
    #[error("invalid wavepacket Gram matrix: {0}")]
    InvalidGram(String),
    #[error("state has no terms")]
    EmptyState,
}

/// Photon counts per output mode. Modes with zero counts are omitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectionPattern {
    counts: BTreeMap<usize, u32>,
}

impl DetectionPattern {
    pub fn new(counts: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut map = BTreeMap::new();
        for (mode, n) in counts {
            if n > 0 {
                *map.entry(mode).or_insert(0) += n;
            }
        }
        DetectionPattern { counts: map }
    }

    /// One photon in each of `a` and `b` (two in `a` if they coincide).
    pub fn coincidence(a: usize, b: usize) -> Self {
        Self::new([(a, 1), (b, 1)])
    }

    pub fn from_modes(modes: &[usize]) -> Self {
        Self::new(modes.iter().map(|&m| (m, 1)))
    }

    pub fn photon_number(&self) -> usize {
        self.counts.values().map(|&n| n as usize).sum()
    }

    pub fn count(&self, mode: usize) -> u32 {
        self.counts.get(&mode).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<usize, u32> {
        &self.counts
    }

    /// Output modes repeated by multiplicity, ascending.
    pub fn output_modes(&self) -> Vec<usize> {
        self.counts.iter().flat_map(|(&m, &n)| std::iter::repeat_n(m, n as usize)).collect()
    }

    fn factorial_product(&self) -> f64 {
        self.counts.values().map(|&n| factorial(n as usize)).product()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Probability of `pattern` on guided output modes. Patterns that touch a
/// loss mode are rejected; use [`pattern_probability`] for those.
pub fn evolve_probability(
    state: &PhotonState,
    u: &TransferMatrix,
    pattern: &DetectionPattern,
    basis: &WavepacketBasis,
) -> Result<f64, SimError> {
    if let Some(&m) = pattern.counts.keys().find(|&&m| m < u.dim() && u.is_loss(m)) {
        return Err(SimError::PatternOnLossMode(m));
    }
    pattern_probability(state, u, pattern, basis)
}

/// Probability of `pattern` over any output modes, loss modes included.
///
/// Expands `|⟨pattern|U|ψ⟩|²` over both bra and ket configurations; the
/// wavepacket overlaps enter through a sum over photon re-pairings `τ`,
/// each weighted by `∏ G[t'_{τ(j)}, t_j]` times the permanent of
/// `A ∘ conj(B_τ)`.
pub fn pattern_probability(
    state: &PhotonState,
    u: &TransferMatrix,
    pattern: &DetectionPattern,
    basis: &WavepacketBasis,
) -> Result<f64, SimError> {
    let n = state.photon_number();
    if pattern.photon_number() != n {
        return Err(SimError::PhotonNumberMismatch { state: n, pattern: pattern.photon_number() });
    }
    if n > MAX_PERMANENT_DIM {
        return Err(SimError::TooManyPhotons { n, max: MAX_PERMANENT_DIM });
    }
    check_modes(state, u, Some(pattern))?;
    if let Some(t) = state.max_tag() {
        if t >= basis.len() {
            return Err(SimError::TagOutOfRange { tag: t, basis: basis.len() });
        }
    }
    let outs = pattern.output_modes();
    let m = u.entries();
    let zero = Complex64::new(0.0, 0.0);
    let repairings: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let blocks: Vec<DMatrix<C64>> = state
        .terms()
        .iter()
        .map(|(c, _)| DMatrix::from_fn(n, n, |k, j| m[(outs[k], c[j].mode)]))
        .collect();

    let mut total = zero;
    for (ci, (c, alpha)) in state.terms().iter().enumerate() {
        let a = &blocks[ci];
        for (cj, (c2, beta)) in state.terms().iter().enumerate() {
            let b = &blocks[cj];
            let mut sum = zero;
            for tau in &repairings {
                let weight: C64 = (0..n).map(|j| basis.overlap(c2[tau[j]].tag, c[j].tag)).product();
                if weight == zero {
                    continue;
                }
                let w = DMatrix::from_fn(n, n, |k, j| a[(k, j)] * b[(k, tau[j])].conj());
                sum += weight * ryser(&w);
            }
            total += alpha * beta.conj() * ket_factor(c) * ket_factor(c2) * sum;
        }
    }
    Ok(total.re / pattern.factorial_product())
}

fn check_modes(state: &PhotonState, u: &TransferMatrix, pattern: Option<&DetectionPattern>) -> Result<(), SimError> {
    let dim = u.dim();
    let max_in = state.max_mode();
    let max_out = pattern.and_then(|p| p.counts.keys().next_back().copied());
    for m in max_in.into_iter().chain(max_out) {
        if m >= dim {
            return Err(SimError::ModeOutOfRange { mode: m, dim });
        }
    }
    Ok(())
}

/// Every way to place `n` photons in `modes`, in lexicographic order.
pub fn enumerate_patterns(n: usize, modes: &[usize]) -> Vec<DetectionPattern> {
    modes
        .iter()
        .copied()
        .combinations_with_replacement(n)
        .map(|ms| DetectionPattern::from_modes(&ms))
        .collect()
}

/// Full output state `U|ψ⟩`. Photons keep their wavepacket tag, so each tag
/// group evolves by its own permanents. Requires `U` to keep guided modes
/// out of loss modes, otherwise the result would not be normalized.
pub fn output_state(state: &PhotonState, u: &TransferMatrix) -> Result<PhotonState, SimError> {
    if u.couples_to_loss() {
        return Err(SimError::LossyEvolution);
    }
    if state.photon_number() > MAX_PERMANENT_DIM {
        return Err(SimError::TooManyPhotons { n: state.photon_number(), max: MAX_PERMANENT_DIM });
    }
    check_modes(state, u, None)?;
    let dim = u.dim();
    let m = u.entries();
    let mut acc: BTreeMap<Configuration, C64> = BTreeMap::new();

    for (config, alpha) in state.terms() {
        let mut by_tag: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for p in config {
            by_tag.entry(p.tag).or_default().push(p.mode);
        }
        // Per tag: every output multiset with its permanent over that group.
        let groups: Vec<Vec<(Vec<Photon>, C64)>> = by_tag
            .iter()
            .map(|(&tag, ins)| {
                (0..dim)
                    .combinations_with_replacement(ins.len())
                    .filter_map(|outs| {
                        let sub = DMatrix::from_fn(ins.len(), ins.len(), |k, j| m[(outs[k], ins[j])]);
                        let amp = ryser(&sub);
                        (amp.norm() > 1e-15).then(|| (outs.iter().map(|&o| Photon::new(o, tag)).collect(), amp))
                    })
                    .collect()
            })
            .collect();
        let scale = alpha * ket_factor(config);
        for combo in groups.iter().multi_cartesian_product() {
            let mut photons: Vec<Photon> = combo.iter().flat_map(|(p, _)| p.iter().copied()).collect();
            photons.sort_unstable();
            let amp: C64 = combo.iter().map(|(_, a)| *a).product();
            // divide by ∏ n_{o,t}! and multiply by √∏ n_{o,t}! to land on the normalized ket
            let out = scale * amp * ket_factor(&photons);
            *acc.entry(photons).or_insert(Complex64::new(0.0, 0.0)) += out;
        }
        if by_tag.is_empty() {
            *acc.entry(Vec::new()).or_insert(Complex64::new(0.0, 0.0)) += alpha;
        }
    }
    let terms: Vec<_> = acc.into_iter().filter(|(_, a)| a.norm() > 1e-14).collect();
    Ok(PhotonState::from_canonical(terms, state.photon_number()))
}

/// Coincidence probability after a two-path NOON state `(|2,0⟩ − |0,2⟩)/√2`
/// picks up relative phase `phase` on the first path and recombines on a
/// balanced symmetric beam splitter: `(1 − cos 2φ)/2`.
pub fn noon_fringe_probability(phase: f64) -> f64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let basis = WavepacketBasis::identical(1);
    let state = PhotonState::new(
        vec![
            (vec![Photon::new(0, 0), Photon::new(0, 0)], Complex64::new(h, 0.0)),
            (vec![Photon::new(1, 0), Photon::new(1, 0)], Complex64::new(-h, 0.0)),
        ],
        &basis,
    )
    .expect("NOON state is normalized");
    let mut shift = DMatrix::<C64>::identity(2, 2);
    shift[(0, 0)] = Complex64::from_polar(1.0, phase);
    let bs = bs_matrix(0.5).expect("balanced splitter");
    let u = TransferMatrix::from_entries(bs * shift);
    evolve_probability(&state, &u, &DetectionPattern::coincidence(0, 1), &basis).expect("two-mode evolution")
}

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::permanent::ryser;
use super::SimError;
use crate::C64;

/// One photon: the mode it occupies and the index of its wavepacket in a
/// [`WavepacketBasis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Photon {
    pub mode: usize,
    pub tag: usize,
}

impl Photon {
    pub fn new(mode: usize, tag: usize) -> Self {
        Photon { mode, tag }
    }
}

/// Gram matrix of wavepacket inner products `s_jk = ⟨φ_j|φ_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketBasis {
    overlap: DMatrix<C64>,
}

const GRAM_TOL: f64 = 1e-10;

impl WavepacketBasis {
    pub fn new(overlap: DMatrix<C64>) -> Result<Self, SimError> {
        let bad = |why: &str| Err(SimError::InvalidGram(why.to_string()));
        if !overlap.is_square() {
            return bad("not square");
        }
        let n = overlap.nrows();
        for j in 0..n {
            if (overlap[(j, j)] - Complex64::new(1.0, 0.0)).norm() > GRAM_TOL {
                return bad("diagonal must be 1");
            }
            for k in 0..n {
                let s = overlap[(j, k)];
                if !(s.re.is_finite() && s.im.is_finite()) {
                    return bad("non-finite entry");
                }
                if (s - overlap[(k, j)].conj()).norm() > GRAM_TOL {
                    return bad("not Hermitian");
                }
                if s.norm() > 1.0 + GRAM_TOL {
                    return bad("overlap magnitude exceeds 1");
                }
            }
        }
        if n > 0 {
            let min_eig = overlap.clone().symmetric_eigenvalues().min();
            if min_eig < -GRAM_TOL {
                return bad("not positive semidefinite");
            }
        }
        Ok(WavepacketBasis { overlap })
    }

    /// `n` mutually identical wavepackets.
    pub fn identical(n: usize) -> Self {
        WavepacketBasis { overlap: DMatrix::from_element(n, n, Complex64::new(1.0, 0.0)) }
    }

    /// `n` mutually orthogonal (fully distinguishable) wavepackets.
    pub fn orthogonal(n: usize) -> Self {
        WavepacketBasis { overlap: DMatrix::identity(n, n) }
    }

    /// Two wavepackets with real overlap `s ∈ [-1, 1]`.
    pub fn pair(s: f64) -> Result<Self, SimError> {
        Self::pair_complex(Complex64::new(s, 0.0))
    }

    pub fn pair_complex(s: C64) -> Result<Self, SimError> {
        let one = Complex64::new(1.0, 0.0);
        Self::new(DMatrix::from_row_slice(2, 2, &[one, s, s.conj(), one]))
    }

    pub fn len(&self) -> usize {
        self.overlap.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlap(&self, j: usize, k: usize) -> C64 {
        self.overlap[(j, k)]
    }

    pub fn gram(&self) -> &DMatrix<C64> {
        &self.overlap
    }
}

/// Sorted photon list; the Fock ket it denotes is
/// `∏ A†_{mode}(φ_tag)|0⟩ / √(∏ n_{mode,tag}!)`.
pub type Configuration = Vec<Photon>;

/// `1/√(∏ n_{mode,tag}!)` for a sorted configuration.
pub(crate) fn ket_factor(config: &[Photon]) -> f64 {
    let mut denom: f64 = 1.0;
    let mut run: f64 = 1.0;
    for w in config.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
            denom *= run;
        } else {
            run = 1.0;
        }
    }
    1.0 / denom.sqrt()
}

/// Superposition of few-photon configurations with fixed photon number.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonState {
    terms: Vec<(Configuration, C64)>,
    n_photons: usize,
}

const NORM_TOL: f64 = 1e-10;

impl PhotonState {
    /// Builds a state whose total probability, including wavepacket overlaps,
    /// must already be 1.
    pub fn new(terms: Vec<(Configuration, C64)>, basis: &WavepacketBasis) -> Result<Self, SimError> {
        let state = Self::canonical(terms, basis)?;
        let norm = state.norm_sqr(basis);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SimError::NotNormalized { norm });
        }
        Ok(state)
    }

    /// Builds a state and rescales it to unit norm.
    pub fn normalized(terms: Vec<(Configuration, C64)>, basis: &WavepacketBasis) -> Result<Self, SimError> {
        let mut state = Self::canonical(terms, basis)?;
        let norm = state.norm_sqr(basis);
        if norm <= 0.0 || !norm.is_finite() {
            return Err(SimError::NotNormalized { norm });
        }
        let scale = 1.0 / norm.sqrt();
        for (_, a) in &mut state.terms {
            *a *= scale;
        }
        Ok(state)
    }

    /// Single product term, normalized.
    pub fn product(photons: &[Photon], basis: &WavepacketBasis) -> Result<Self, SimError> {
        Self::normalized(vec![(photons.to_vec(), Complex64::new(1.0, 0.0))], basis)
    }

    fn canonical(terms: Vec<(Configuration, C64)>, basis: &WavepacketBasis) -> Result<Self, SimError> {
        let n_photons = terms.first().map(|(c, _)| c.len()).ok_or(SimError::EmptyState)?;
        let mut merged: BTreeMap<Configuration, C64> = BTreeMap::new();
        for (mut config, amp) in terms {
            if config.len() != n_photons {
                return Err(SimError::PhotonNumberMismatch { state: n_photons, pattern: config.len() });
            }
            if let Some(p) = config.iter().find(|p| p.tag >= basis.len()) {
                return Err(SimError::TagOutOfRange { tag: p.tag, basis: basis.len() });
            }
            config.sort_unstable();
            *merged.entry(config).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        Ok(Self::from_canonical(merged.into_iter().collect(), n_photons))
    }

    pub(crate) fn from_canonical(terms: Vec<(Configuration, C64)>, n_photons: usize) -> Self {
        PhotonState { terms, n_photons }
    }

    pub fn terms(&self) -> &[(Configuration, C64)] {
        &self.terms
    }

    pub fn photon_number(&self) -> usize {
        self.n_photons
    }

    /// Amplitude of one configuration (zero if absent).
    pub fn amplitude(&self, config: &[Photon]) -> C64 {
        let mut key = config.to_vec();
        key.sort_unstable();
        self.terms
            .iter()
            .find(|(c, _)| *c == key)
            .map(|(_, a)| *a)
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn max_mode(&self) -> Option<usize> {
        self.terms.iter().flat_map(|(c, _)| c.iter().map(|p| p.mode)).max()
    }

    pub fn max_tag(&self) -> Option<usize> {
        self.terms.iter().flat_map(|(c, _)| c.iter().map(|p| p.tag)).max()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PhotonState, basis: &WavepacketBasis) -> C64 {
        if self.n_photons != other.n_photons {
            return Complex64::new(0.0, 0.0);
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (a, alpha) in &self.terms {
            for (b, beta) in &other.terms {
                let overlap = config_overlap(a, b, basis);
                if overlap != Complex64::new(0.0, 0.0) {
                    total += alpha.conj() * beta * overlap;
                }
            }
        }
        total
    }

    pub fn norm_sqr(&self, basis: &WavepacketBasis) -> f64 {
        self.inner(self, basis).re
    }

    /// `|⟨self|other⟩|`, the global-phase-free closeness of two unit states.
    pub fn fidelity(&self, other: &PhotonState, basis: &WavepacketBasis) -> f64 {
        self.inner(other, basis).norm()
    }

    /// Equal up to a global phase within `tol`.
    pub fn same_up_to_phase(&self, other: &PhotonState, basis: &WavepacketBasis, tol: f64) -> bool {
        (1.0 - self.fidelity(other, basis)).abs() <= tol
    }
}

/// `⟨a|b⟩` for two configuration kets.
fn config_overlap(a: &[Photon], b: &[Photon], basis: &WavepacketBasis) -> C64 {
    let n = a.len();
    let mut same_modes = a.iter().map(|p| p.mode).collect::<Vec<_>>();
    let mut other_modes = b.iter().map(|p| p.mode).collect::<Vec<_>>();
    same_modes.sort_unstable();
    other_modes.sort_unstable();
    if same_modes != other_modes {
        return Complex64::new(0.0, 0.0);
    }
    let g = DMatrix::from_fn(n, n, |k, l| {
        if a[k].mode == b[l].mode {
            basis.overlap(a[k].tag, b[l].tag)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    ryser(&g) * ket_factor(a) * ket_factor(b)
}

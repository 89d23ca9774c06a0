//! Independent reference for few-photon evolution: expands products of
//! creation operators over an explicit mode ⊗ internal space, with no
//! permanents involved.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use polymode::focksim::{Photon, PhotonState, WavepacketBasis};
use polymode::C64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Internal vectors `v_t` with `v_jᴴ v_k = G[j, k]`.
pub fn internal_vectors(gram: &DMatrix<C64>) -> Vec<Vec<C64>> {
    let eig = gram.clone().symmetric_eigen();
    let n = gram.nrows();
    (0..n)
        .map(|t| {
            (0..n)
                .map(|k| {
                    let lam = eig.eigenvalues[k].max(0.0).sqrt();
                    // row k of sqrt(Λ)·Qᴴ, column t
                    eig.eigenvectors[(t, k)].conj() * lam
                })
                .collect()
        })
        .collect()
}

type Monomial = Vec<(usize, usize)>;

/// Fock-space amplitudes over (output mode, internal index) after `u`.
pub fn evolve_polynomial(state: &PhotonState, u: &DMatrix<C64>, basis: &WavepacketBasis) -> BTreeMap<Monomial, C64> {
    let vecs = internal_vectors(basis.gram());
    let d = vecs.first().map_or(0, Vec::len);
    let dim = u.nrows();
    let mut poly: BTreeMap<Monomial, C64> = BTreeMap::new();
    for (config, alpha) in state.terms() {
        let norm = ket_norm(config);
        let mut partial: BTreeMap<Monomial, C64> = BTreeMap::from([(Vec::new(), *alpha * norm)]);
        for p in config {
            let mut next = BTreeMap::new();
            for (mono, coeff) in &partial {
                for o in 0..dim {
                    let uo = u[(o, p.mode)];
                    if uo == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for k in 0..d {
                        let c = coeff * uo * vecs[p.tag][k];
                        if c == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut m = mono.clone();
                        m.push((o, k));
                        m.sort_unstable();
                        *next.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c;
                    }
                }
            }
            partial = next;
        }
        for (m, c) in partial {
            *poly.entry(m).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
    }
    // monomial coefficient → normalized Fock amplitude: multiply by √∏n!
    poly.into_iter().map(|(m, c)| {
        let f = multiplicity_factorials(&m).sqrt();
        (m, c * f)
    }).collect()
}

fn multiplicity_factorials<T: PartialEq>(sorted: &[T]) -> f64 {
    let mut total = 1.0;
    let mut run = 1.0;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
            total *= run;
        } else {
            run = 1.0;
        }
    }
    total
}

fn ket_norm(config: &[Photon]) -> f64 {
    let mut sorted = config.to_vec();
    sorted.sort_unstable();
    1.0 / multiplicity_factorials(&sorted).sqrt()
}

/// Probability that the output-mode counts equal `pattern` (sorted list of
/// output modes with multiplicity).
pub fn oracle_probability(state: &PhotonState, u: &DMatrix<C64>, basis: &WavepacketBasis, pattern: &[usize]) -> f64 {
    let mut want = pattern.to_vec();
    want.sort_unstable();
    evolve_polynomial(state, u, basis)
        .into_iter()
        .filter(|(m, _)| m.iter().map(|(o, _)| *o).collect::<Vec<_>>() == want)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column phases so the distribution is Haar
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Gram matrix of `n` random unit vectors in `C^d`.
pub fn random_gram<R: Rng>(rng: &mut R, n: usize, d: usize) -> DMatrix<C64> {
    let vs: Vec<Vec<C64>> = (0..n)
        .map(|_| {
            let v: Vec<C64> = (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|c| c / norm).collect()
        })
        .collect();
    let mut g = DMatrix::from_fn(n, n, |j, k| vs[j].iter().zip(&vs[k]).map(|(a, b)| a.conj() * b).sum());
    for j in 0..n {
        g[(j, j)] = Complex64::new(1.0, 0.0);
    }
    g
}

/// Random state of `n` photons on `modes` modes: one or two configurations,
/// each photon with its own wavepacket tag.
pub fn random_state<R: Rng>(rng: &mut R, n: usize, modes: usize, basis: &WavepacketBasis) -> PhotonState {
    let terms = rng.random_range(1..=2);
    let mut list = Vec::new();
    for _ in 0..terms {
        let config: Vec<Photon> = (0..n).map(|t| Photon::new(rng.random_range(0..modes), t)).collect();
        let amp = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        list.push((config, amp));
    }
    PhotonState::normalized(list, basis).expect("random state normalizes")
}

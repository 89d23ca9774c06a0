//! Sinusoidal fringe fits: `C(P) = offset + A·cos(2πP/T + φ)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::lm::{self, Model};
use super::{check_series, FitError, FitModel, FitParam, FitResult};

pub(crate) const MIN_POINTS: usize = 8;
const OVERSAMPLE: usize = 20;

/// Parameters `[offset, A, T, φ]`.
struct FringeModel;

impl Model for FringeModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64 {
        let (offset, amp, period, phase) = (p[0], p[1], p[2], p[3]);
        let theta = 2.0 * PI * x / period + phase;
        let (s, c) = theta.sin_cos();
        grad[0] = 1.0;
        grad[1] = c;
        grad[2] = amp * s * 2.0 * PI * x / (period * period);
        grad[3] = -amp * s;
        offset + amp * c
    }

    fn admissible(&self, p: &[f64]) -> bool {
        p[2] > 0.0
    }
}

/// Frequency with the largest weighted-periodogram power of the
/// mean-subtracted data, searched from one cycle per span up to the
/// Nyquist frequency of the median spacing.
fn periodogram_peak(x: &[f64], y: &[f64], span: f64, spacing: f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let f_lo = 1.0 / span;
    let f_hi = 0.5 / spacing;
    let df = f_lo / OVERSAMPLE as f64;
    let steps = ((f_hi - f_lo) / df).floor().max(0.0) as usize;
    let mut best = (f64::NEG_INFINITY, f_lo);
    for k in 0..=steps {
        let f = f_lo + k as f64 * df;
        let (mut re, mut im) = (0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let (s, c) = (2.0 * PI * f * xi).sin_cos();
            re += (yi - mean) * c;
            im += (yi - mean) * s;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, f);
        }
    }
    best.1
}

/// Weighted linear fit of offset and quadrature amplitudes at fixed period.
fn quadrature_start(x: &[f64], y: &[f64], w: &[f64], period: f64) -> Option<[f64; 4]> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        let (s, c) = (2.0 * PI * xi / period).sin_cos();
        let row = Vector3::new(1.0, c, s);
        ata += wi * row * row.transpose();
        aty += wi * yi * row;
    }
    let sol = ata.cholesky()?.solve(&aty);
    let (offset, a, b) = (sol[0], sol[1], sol[2]);
    Some([offset, a.hypot(b), period, (-b).atan2(a)])
}

fn wrap_phase(phi: f64) -> f64 {
    let wrapped = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

pub fn fit_fringe_points(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitResult, FitError> {
    check_series(x, y, sigma, MIN_POINTS)?;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = sorted.windows(2).map(|p| p[1] - p[0]).filter(|g| *g > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let spacing = *gaps.get(gaps.len() / 2).ok_or(FitError::NoFeature)?;
    if y.iter().all(|v| *v == y[0]) {
        return Err(FitError::NoFeature);
    }

    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let f0 = periodogram_peak(x, y, span, spacing);
    let p0 = quadrature_start(x, y, &w, 1.0 / f0).ok_or(FitError::NoFeature)?;
    let out = lm::minimize(&FringeModel, x, y, sigma, &p0)?;

    let mut p = out.params.clone();
    let mut cov = out.covariance.clone();
    if p[1] < 0.0 {
        // A·cos(θ) = (−A)·cos(θ + π); flip sign, which negates A's correlations.
        p[1] = -p[1];
        p[3] += PI;
        for j in 0..4 {
            if j != 1 {
                cov[(1, j)] = -cov[(1, j)];
                cov[(j, 1)] = -cov[(j, 1)];
            }
        }
    }
    p[3] = wrap_phase(p[3]);
    if p[2] > span {
        return Err(FitError::InsufficientCoverage { period: p[2], span });
    }

    let (offset, amp) = (p[0], p[1]);
    let visibility = amp / offset;
    let dv_da = 1.0 / offset;
    let dv_do = -amp / (offset * offset);
    let var_v = dv_da * dv_da * cov[(1, 1)] + dv_do * dv_do * cov[(0, 0)] + 2.0 * dv_da * dv_do * cov[(0, 1)];

    let dof = x.len().saturating_sub(4).max(1);
    let names = ["offset", "amplitude", "period", "phase"];
    let mut params: Vec<FitParam> = names
        .iter()
        .enumerate()
        .map(|(j, name)| FitParam { name, value: p[j], sigma: cov[(j, j)].sqrt() })
        .collect();
    params.push(FitParam { name: "visibility", value: visibility, sigma: var_v.max(0.0).sqrt() });
    Ok(FitResult {
        model: FitModel::Fringe,
        orientation: None,
        params,
        chi2_reduced: out.chi2 / dof as f64,
        iterations: out.iterations,
    })
}

pub fn fringe_curve(fit: &FitResult, x: f64) -> f64 {
    fit.value("offset") + fit.value("amplitude") * (2.0 * PI * x / fit.value("period") + fit.value("phase")).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(offset: f64, amp: f64, period: f64, phase: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..=70).map(|k| k as f64 * 2.0).collect();
        let y: Vec<f64> = x.iter().map(|&x| offset + amp * (2.0 * PI * x / period + phase).cos()).collect();
        let s = y.iter().map(|v| v.sqrt().max(1.0)).collect();
        (x, y, s)
    }

    #[test]
    fn noiseless_fringe_recovered() {
        let (x, y, s) = synth(500.0, 450.0, 33.4, 0.4);
        let fit = fit_fringe_points(&x, &y, &s).unwrap();
        for (name, truth) in [("offset", 500.0), ("amplitude", 450.0), ("period", 33.4), ("phase", 0.4)] {
            assert!((fit.value(name) - truth).abs() <= 1e-6 * truth, "{name}: {}", fit.value(name));
        }
        assert!((fit.value("visibility") - 0.9).abs() < 1e-9);
        for (&xi, &yi) in x.iter().zip(&y) {
            assert!((fringe_curve(&fit, xi) - yi).abs() <= 1e-8 * 500.0);
        }
    }

    #[test]
    fn negative_start_phase_is_normalized() {
        let (x, y, s) = synth(300.0, 100.0, 66.8, -2.9);
        let fit = fit_fringe_points(&x, &y, &s).unwrap();
        assert!(fit.value("amplitude") > 0.0);
        assert!((fit.value("phase") + 2.9).abs() < 1e-6);
        assert!((fit.value("period") - 66.8).abs() < 1e-6 * 66.8);
    }

    #[test]
    fn period_longer_than_span_is_rejected() {
        let x: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 100.0 + 50.0 * (2.0 * PI * x / 60.0).cos()).collect();
        let s = vec![1.0; x.len()];
        assert!(fit_fringe_points(&x, &y, &s).is_err());
    }

    #[test]
    fn wrap_phase_range() {
        for k in -20..20 {
            let w = wrap_phase(k as f64 * 0.77);
            assert!(w > -PI && w <= PI);
            assert!(((k as f64 * 0.77 - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((k as f64 * 0.77 - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}

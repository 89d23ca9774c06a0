//! Triangle dip/peak fits: `C(δ) = C0·(1 ∓ V·max(0, 1 − |δ−δ0|/L))`.

use rayon::prelude::*;

use super::lm::{self, Model};
use super::{check_series, FitError, FitModel, FitParam, FitResult, Orientation};

pub(crate) const MIN_POINTS: usize = 6;

pub fn triangle(x: f64, center: f64, half_base: f64) -> f64 {
    (1.0 - (x - center).abs() / half_base).max(0.0)
}

/// Parameters `[C0, V, L, δ0]`; the orientation is fixed for the fit.
struct TriangleModel {
    sign: f64,
}

impl Model for TriangleModel {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, p: &[f64], x: f64, grad: &mut [f64]) -> f64 {
        let (c0, v, l, d0) = (p[0], p[1], p[2], p[3]);
        let dx = x - d0;
        let tri = triangle(x, d0, l);
        grad[0] = 1.0 + self.sign * v * tri;
        grad[1] = c0 * self.sign * tri;
        if tri > 0.0 {
            let k = c0 * self.sign * v;
            grad[2] = k * dx.abs() / (l * l);
            grad[3] = k * dx.signum() / l;
        } else {
            grad[2] = 0.0;
            grad[3] = 0.0;
        }
        c0 * (1.0 + self.sign * v * tri)
    }

    fn admissible(&self, p: &[f64]) -> bool {
        p[0] > 0.0 && p[2] > 0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    objective: f64,
    half_base: f64,
    center: f64,
    baseline: f64,
    slope: f64,
}

/// Weighted linear fit `y ≈ a + b·tri` for one break placement.
fn linear_candidate(x: &[f64], y: &[f64], w: &[f64], center: f64, half_base: f64) -> Option<Candidate> {
    let (mut sw, mut st, mut stt, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        let t = triangle(xi, center, half_base);
        sw += wi;
        st += wi * t;
        stt += wi * t * t;
        sy += wi * yi;
        sty += wi * t * yi;
    }
    let det = sw * stt - st * st;
    if det.abs() <= 1e-12 * sw * stt.max(f64::MIN_POSITIVE) {
        return None;
    }
    let slope = (sw * sty - st * sy) / det;
    let baseline = (sy - slope * st) / sw;
    let objective: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = yi - baseline - slope * triangle(xi, center, half_base);
            wi * r * r
        })
        .sum();
    Some(Candidate { objective, half_base, center, baseline, slope })
}

fn better(a: Candidate, b: Candidate) -> Candidate {
    let key = |c: &Candidate| (c.objective, c.half_base, c.center);
    let (ka, kb) = (key(&a), key(&b));
    match ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2)) {
        std::cmp::Ordering::Greater => b,
        _ => a,
    }
}

/// Grid search over break placements: centers at the sample positions,
/// half-bases at multiples of the median sample spacing up to the span.
fn grid_start(x: &[f64], y: &[f64], w: &[f64]) -> Option<Candidate> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let span = sorted[sorted.len() - 1] - sorted[0];
    let mut gaps: Vec<f64> = sorted.windows(2).map(|p| p[1] - p[0]).filter(|g| *g > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let h = *gaps.get(gaps.len() / 2)?;
    let n_half = ((span / h).round() as usize).max(1);
    let half_bases: Vec<f64> = (1..=n_half).map(|k| k as f64 * h).collect();
    sorted.dedup();
    sorted
        .par_iter()
        .filter_map(|&center| {
            half_bases
                .iter()
                .filter_map(|&l| linear_candidate(x, y, w, center, l))
                .reduce(better)
        })
        .reduce_with(better)
}

/// Fits a triangle dip or peak. The orientation follows the sign of the
/// best linear contrast on the break grid.
pub fn fit_triangle_points(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitResult, FitError> {
    check_series(x, y, sigma, MIN_POINTS)?;
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Err(FitError::NoFeature);
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let start = grid_start(x, y, &w).ok_or(FitError::NoFeature)?;
    if start.baseline <= 0.0 || start.slope == 0.0 {
        return Err(FitError::NoFeature);
    }
    let orientation = if start.slope < 0.0 { Orientation::Dip } else { Orientation::Peak };
    let model = TriangleModel { sign: if start.slope < 0.0 { -1.0 } else { 1.0 } };
    let p0 = [start.baseline, start.slope.abs() / start.baseline, start.half_base, start.center];
    let out = lm::minimize(&model, x, y, sigma, &p0)?;

    let dof = x.len().saturating_sub(4).max(1);
    let names = ["C0", "V", "Lc_um", "delta0_um"];
    let params = names
        .iter()
        .enumerate()
        .map(|(j, name)| FitParam { name, value: out.params[j], sigma: out.covariance[(j, j)].sqrt() })
        .collect();
    Ok(FitResult {
        model: FitModel::Triangle,
        orientation: Some(orientation),
        params,
        chi2_reduced: out.chi2 / dof as f64,
        iterations: out.iterations,
    })
}

/// Evaluates a fitted triangle at `x`.
pub fn triangle_curve(fit: &FitResult, x: f64) -> f64 {
    let sign = match fit.orientation {
        Some(Orientation::Peak) => 1.0,
        _ => -1.0,
    };
    let p = [fit.value("C0"), fit.value("V"), fit.value("Lc_um"), fit.value("delta0_um")];
    let mut g = [0.0; 4];
    TriangleModel { sign }.eval(&p, x, &mut g)
}

//! Visibility estimators, background subtraction and weighted fits of
//! coincidence scans.

mod fringe;
mod lm;
mod triangle;

use std::fmt;

use thiserror::Error;

use crate::experiments::ScanResult;

pub use fringe::{fit_fringe_points, fringe_curve};
pub use triangle::{fit_triangle_points, triangle, triangle_curve};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("reference count must be positive, got {0}")]
    NonPositive(f64),
    #[error("c_min = {c_min} exceeds c_max = {c_max}")]
    Inverted { c_max: f64, c_min: f64 },
    #[error("negative count {0}")]
    Negative(f64),
    #[error("background of {background} counts is implausible: minimum count {min} (sigma {sigma})")]
    BackgroundTooLarge { background: f64, min: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("x, y and sigma have different lengths")]
    LengthMismatch,
    #[error("data contain non-finite values or non-positive sigmas")]
    NonFinite,
    #[error("data show no feature to fit")]
    NoFeature,
    #[error("fit did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("fitted period {period} exceeds the scanned range {span}; less than one period covered")]
    InsufficientCoverage { period: f64, span: f64 },
}

/// `V1 = (C_max − C_min)/C_max`.
pub fn visibility_dip(c_max: f64, c_min: f64) -> Result<f64, AnalysisError> {
    if !(c_max > 0.0) {
        return Err(AnalysisError::NonPositive(c_max));
    }
    if c_min < 0.0 {
        return Err(AnalysisError::Negative(c_min));
    }
    if c_min > c_max {
        return Err(AnalysisError::Inverted { c_max, c_min });
    }
    Ok((c_max - c_min) / c_max)
}

/// `V2 = (C_max − C_min)/C_min`.
pub fn visibility_peak(c_max: f64, c_min: f64) -> Result<f64, AnalysisError> {
    if !(c_min > 0.0) {
        return Err(AnalysisError::NonPositive(c_min));
    }
    if c_min > c_max {
        return Err(AnalysisError::Inverted { c_max, c_min });
    }
    Ok((c_max - c_min) / c_min)
}

/// `√count`, floored at 1 so zero-count points keep a finite weight.
pub fn poisson_sigma(count: f64) -> f64 {
    if count <= 0.0 {
        1.0
    } else {
        count.sqrt()
    }
}

/// Removes a flat accidental rate. Counts are clamped at zero; the error is
/// `√(raw + background)`, the raw Poisson variance plus the variance of a
/// Poisson-estimated background of the same mean.
pub fn subtract_background(scan: &ScanResult, accidental_rate: f64) -> Result<ScanResult, AnalysisError> {
    if accidental_rate < 0.0 || !accidental_rate.is_finite() {
        return Err(AnalysisError::Negative(accidental_rate));
    }
    if accidental_rate == 0.0 {
        return Ok(scan.clone());
    }
    let background = accidental_rate * scan.integration_time_s;
    if let Some(i) = (0..scan.counts.len()).min_by(|&a, &b| scan.counts[a].total_cmp(&scan.counts[b])) {
        let (min, sigma) = (scan.counts[i], scan.sigma[i]);
        if background > min + 5.0 * sigma {
            return Err(AnalysisError::BackgroundTooLarge { background, min, sigma });
        }
    }
    let mut out = scan.clone();
    for (c, s) in out.counts.iter_mut().zip(out.sigma.iter_mut()) {
        *s = poisson_sigma(*c + background);
        *c = (*c - background).max(0.0);
    }
    for r in &mut out.expected_rate {
        *r = (*r - accidental_rate).max(0.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    Triangle,
    Fringe,
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitModel::Triangle => "triangle",
            FitModel::Fringe => "fringe",
        })
    }
}

impl std::str::FromStr for FitModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangle" => Ok(FitModel::Triangle),
            "fringe" => Ok(FitModel::Fringe),
            other => Err(format!("unknown model `{other}` (expected triangle or fringe)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Dip,
    Peak,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Dip => "dip",
            Orientation::Peak => "peak",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitParam {
    pub name: &'static str,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    /// Set for triangle fits.
    pub orientation: Option<Orientation>,
    pub params: Vec<FitParam>,
    pub chi2_reduced: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter. Panics on an unknown name.
    pub fn value(&self, name: &str) -> f64 {
        self.param(name).unwrap_or_else(|| panic!("no parameter `{name}`")).value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name).unwrap_or_else(|| panic!("no parameter `{name}`")).sigma
    }

    /// V1 for dips, V2 for peaks, amplitude/offset for fringes.
    pub fn visibility(&self) -> (f64, f64) {
        let name = match self.model {
            FitModel::Triangle => "V",
            FitModel::Fringe => "visibility",
        };
        (self.value(name), self.sigma(name))
    }
}

pub fn fit_triangle(scan: &ScanResult) -> Result<FitResult, FitError> {
    fit_triangle_points(&scan.points, &scan.counts, &scan.sigma)
}

pub fn fit_fringe(scan: &ScanResult) -> Result<FitResult, FitError> {
    fit_fringe_points(&scan.points, &scan.counts, &scan.sigma)
}

pub fn fit(scan: &ScanResult, model: FitModel) -> Result<FitResult, FitError> {
    match model {
        FitModel::Triangle => fit_triangle(scan),
        FitModel::Fringe => fit_fringe(scan),
    }
}

fn check_series(x: &[f64], y: &[f64], sigma: &[f64], needed: usize) -> Result<(), FitError> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(FitError::LengthMismatch);
    }
    if x.len() < needed {
        return Err(FitError::TooFewPoints { needed, found: x.len() });
    }
    let finite = x.iter().chain(y).all(|v| v.is_finite());
    if !finite || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(FitError::NonFinite);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ScanVariable;

    fn scan(counts: Vec<f64>) -> ScanResult {
        let n = counts.len();
        ScanResult {
            variable: ScanVariable::DelayUm,
            points: (0..n).map(|i| i as f64).collect(),
            expected_rate: counts.clone(),
            sigma: counts.iter().map(|c| poisson_sigma(*c)).collect(),
            counts,
            integration_time_s: 1.0,
        }
    }

    #[test]
    fn dip_visibility_examples() {
        assert_eq!(visibility_dip(100.0, 0.0).unwrap(), 1.0);
        assert!((visibility_dip(200.0, 10.0).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(visibility_dip(100.0, 100.0).unwrap(), 0.0);
        assert!(visibility_dip(0.0, 0.0).is_err());
        assert!(visibility_dip(10.0, 20.0).is_err());
    }

    #[test]
    fn peak_visibility_examples() {
        assert_eq!(visibility_peak(200.0, 100.0).unwrap(), 1.0);
        assert_eq!(visibility_peak(150.0, 100.0).unwrap(), 0.5);
        assert_eq!(visibility_peak(100.0, 100.0).unwrap(), 0.0);
        assert!(visibility_peak(100.0, 0.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(poisson_sigma(100.0), 10.0);
        assert_eq!(poisson_sigma(0.0), 1.0);
        assert!((poisson_sigma(448.0) - 21.166_010_488_516_726).abs() < 1e-12);
    }

    #[test]
    fn background_examples() {
        let s = scan(vec![110.0; 5]);
        assert_eq!(subtract_background(&s, 0.0).unwrap(), s);
        let flat = subtract_background(&s, 10.0).unwrap();
        assert!(flat.counts.iter().all(|c| *c == 100.0));
        assert!(flat.sigma.iter().all(|v| (*v - 120f64.sqrt()).abs() < 1e-12));

        let dip = scan(vec![110.0, 11.0, 110.0]);
        assert!((visibility_dip(110.0, 11.0).unwrap() - 0.9).abs() < 1e-12);
        let sub = subtract_background(&dip, 10.0).unwrap();
        assert!((visibility_dip(sub.counts[0], sub.counts[1]).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn implausible_background_rejected() {
        let s = scan(vec![100.0, 4.0, 100.0]);
        assert!(matches!(subtract_background(&s, 50.0), Err(AnalysisError::BackgroundTooLarge { .. })));
    }

    #[test]
    fn background_commutes_with_scaling() {
        let s = scan(vec![300.0, 120.0, 60.0, 300.0]);
        let mut scaled = s.clone();
        scaled.counts.iter_mut().for_each(|c| *c *= 3.0);
        let a = subtract_background(&scaled, 30.0).unwrap();
        let b = subtract_background(&s, 10.0).unwrap();
        for (x, y) in a.counts.iter().zip(&b.counts) {
            assert!((x - 3.0 * y).abs() < 1e-12);
        }
    }
}

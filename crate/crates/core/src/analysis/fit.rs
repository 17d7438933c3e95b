//! HOM scans and the sinc² dip fit.

use std::io::Write;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::units::{sinc, MM_PER_PS};
use crate::{Error, Result};

/// Half-maximum point of sinc²: sinc²(x) = ½.
const SINC2_HALF_MAX: f64 = 1.391_557_378_251_47;
const MIN_POINTS: usize = 5;
/// Relative parameter change between restarts that counts as converged.
const STEP_TOLERANCE: f64 = 1e-9;
const MAX_RESTARTS: usize = 60;
const ITERS_PER_RESTART: u64 = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Delay in ps or voltage in V.
    pub control: f64,
    pub count: u64,
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    /// Points with Poisson error bars `√count`.
    pub fn from_counts(controls: &[f64], counts: &[u64]) -> Self {
        ScanResult {
            points: controls
                .iter()
                .zip(counts)
                .map(|(&control, &count)| ScanPoint {
                    control,
                    count,
                    error: (count as f64).sqrt(),
                })
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "control,count")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.control, p.count)?;
        }
        Ok(())
    }
}

/// Coincidences against delay: `A · (1 − V · sinc²(π Δν (τ − τ₀)))`.
pub fn sinc2_dip(
    tau_ps: f64,
    amplitude: f64,
    visibility: f64,
    bandwidth_ghz: f64,
    center_ps: f64,
) -> f64 {
    let s = sinc(std::f64::consts::PI * bandwidth_ghz * 1e-3 * (tau_ps - center_ps));
    amplitude * (1.0 - visibility * s * s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Starting (or fixed) filter bandwidth Δν.
    pub bandwidth_ghz: f64,
    pub fit_bandwidth: bool,
    /// Starting (or fixed) dip centre.
    pub center_ps: f64,
    pub fit_center: bool,
}

impl FitOptions {
    /// Visibility and amplitude free, bandwidth and centre held.
    pub fn two_parameter(bandwidth_ghz: f64) -> Self {
        FitOptions {
            bandwidth_ghz,
            fit_bandwidth: false,
            center_ps: 0.0,
            fit_center: false,
        }
    }

    pub fn all_free(bandwidth_ghz: f64) -> Self {
        FitOptions {
            fit_bandwidth: true,
            fit_center: true,
            ..Self::two_parameter(bandwidth_ghz)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub visibility: f64,
    pub amplitude: f64,
    pub bandwidth_ghz: f64,
    pub center_ps: f64,
    /// Sinc² scale 1/Δν.
    pub width_param_ps: f64,
    /// √(Σ wᵢ rᵢ²) with weights 1/max(count, 1).
    pub residual_norm: f64,
    /// Names of the free parameters, matching `covariance_diag`.
    pub parameters: Vec<String>,
    pub covariance_diag: Vec<f64>,
    pub iterations: u64,
}

impl FitResult {
    pub fn stderr(&self, parameter: &str) -> Option<f64> {
        self.parameters
            .iter()
            .position(|p| p == parameter)
            .map(|i| self.covariance_diag[i].max(0.0).sqrt())
    }
}

/// Weighted least squares in normalized coordinates
/// `[V, A/A₀, Δν/Δν₀, τ₀·Δν₀]` (free ones only).
#[derive(Clone, Copy)]
struct Problem<'a> {
    /// (control, count) pairs.
    points: &'a [(f64, f64)],
    opts: FitOptions,
    a0: f64,
}

impl Problem<'_> {
    /// Physical (V, A, Δν, τ₀) from a normalized vector.
    fn unpack(&self, x: &[f64]) -> [f64; 4] {
        let mut it = x.iter().copied();
        let v = it.next().unwrap_or(0.0);
        let a = it.next().unwrap_or(1.0) * self.a0;
        let bw = if self.opts.fit_bandwidth {
            it.next().unwrap_or(1.0) * self.opts.bandwidth_ghz
        } else {
            self.opts.bandwidth_ghz
        };
        let tau0 = if self.opts.fit_center {
            it.next().unwrap_or(0.0) * 1e3 / self.opts.bandwidth_ghz
        } else {
            self.opts.center_ps
        };
        [v, a, bw, tau0]
    }

    fn chi2(&self, [v, a, bw, tau0]: [f64; 4]) -> f64 {
        self.points
            .iter()
            .map(|&(tau, y)| {
                let r = y - sinc2_dip(tau, a, v, bw, tau0);
                r * r / y.max(1.0)
            })
            .sum()
    }
}

impl CostFunction for Problem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let p = self.unpack(x);
        if p[1] <= 0.0 || p[2] <= 0.0 {
            return Ok(f64::MAX);
        }
        Ok(self.chi2(p))
    }
}

fn initial_simplex(x: &[f64], scale: f64) -> Vec<Vec<f64>> {
    let mut simplex = vec![x.to_vec()];
    for i in 0..x.len() {
        let mut v = x.to_vec();
        v[i] += scale * x[i].abs().max(0.1);
        simplex.push(v);
    }
    simplex
}

fn result_from(problem: &Problem, x: &[f64], iterations: u64) -> FitResult {
    let [v, a, bw, tau0] = problem.unpack(x);
    let mut parameters = vec!["visibility".to_string(), "amplitude".to_string()];
    if problem.opts.fit_bandwidth {
        parameters.push("bandwidth_ghz".into());
    }
    if problem.opts.fit_center {
        parameters.push("center_ps".into());
    }
    FitResult {
        visibility: v,
        amplitude: a,
        bandwidth_ghz: bw,
        center_ps: tau0,
        width_param_ps: 1e3 / bw,
        residual_norm: problem.chi2([v, a, bw, tau0]).sqrt(),
        covariance_diag: covariance_diag(problem, [v, a, bw, tau0], parameters.len()),
        parameters,
        iterations,
    }
}

/// Diagonal of (JᵀWJ)⁻¹ for the free parameters.
fn covariance_diag(problem: &Problem, p: [f64; 4], free: usize) -> Vec<f64> {
    let index = [0usize, 1, 2, 3];
    let active: Vec<usize> = index
        .into_iter()
        .filter(|&i| {
            i < 2 || (i == 2 && problem.opts.fit_bandwidth) || (i == 3 && problem.opts.fit_center)
        })
        .collect();
    debug_assert_eq!(active.len(), free);
    let n = problem.points.len();
    let model = |q: [f64; 4], tau: f64| sinc2_dip(tau, q[1], q[0], q[2], q[3]);
    let j = DMatrix::from_fn(n, free, |r, c| {
        let k = active[c];
        let h = 1e-6 * p[k].abs().max(1e-3);
        let (mut up, mut down) = (p, p);
        up[k] += h;
        down[k] -= h;
        let tau = problem.points[r].0;
        (model(up, tau) - model(down, tau)) / (2.0 * h)
    });
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        problem.points.iter().map(|pt| 1.0 / pt.1.max(1.0)),
    ));
    let info = j.transpose() * w * &j;
    match info.try_inverse() {
        Some(cov) => (0..free).map(|i| cov[(i, i)]).collect(),
        None => vec![f64::INFINITY; free],
    }
}

/// Least-squares sinc² fit by restarted Nelder–Mead simplex descent;
/// converged once a restart moves no parameter by more than 1e-9
/// relative.
pub fn fit_sinc2(scan: &ScanResult, opts: FitOptions) -> Result<FitResult> {
    let points: Vec<(f64, f64)> = scan
        .points
        .iter()
        .map(|p| (p.control, p.count as f64))
        .collect();
    fit_sinc2_points(&points, opts)
}

/// [`fit_sinc2`] on real-valued `(control, value)` data.
pub fn fit_sinc2_points(points: &[(f64, f64)], opts: FitOptions) -> Result<FitResult> {
    if points.len() < MIN_POINTS {
        return Err(Error::domain(format!(
            "fit needs at least {MIN_POINTS} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::domain("scan data must be finite"));
    }
    if !(opts.bandwidth_ghz > 0.0) || !opts.center_ps.is_finite() {
        return Err(Error::domain("bandwidth hint must be positive"));
    }
    let max = points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    if max <= 0.0 {
        return Err(Error::Undefined(
            "scan has no counts; visibility is undefined".into(),
        ));
    }
    let a0 = max.max(1.0);
    let problem = Problem { points, opts, a0 };
    let mut x = vec![(1.0 - min / a0).clamp(0.0, 1.0), 1.0];
    if opts.fit_bandwidth {
        x.push(1.0);
    }
    if opts.fit_center {
        x.push(opts.center_ps * opts.bandwidth_ghz * 1e-3);
    }

    let mut iterations = 0;
    let mut scale = 0.1;
    for _ in 0..MAX_RESTARTS {
        let solver = NelderMead::new(initial_simplex(&x, scale))
            .with_sd_tolerance(0.0)
            .map_err(|e| Error::domain(e.to_string()))?;
        let res = Executor::new(problem, solver)
            .configure(|s| s.max_iters(ITERS_PER_RESTART))
            .run()
            .map_err(|e| Error::domain(e.to_string()))?;
        iterations += res.state().get_iter();
        let best = res
            .state()
            .get_best_param()
            .cloned()
            .unwrap_or_else(|| x.clone());
        let step = best
            .iter()
            .zip(&x)
            .map(|(b, o)| (b - o).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        x = best;
        if step < STEP_TOLERANCE {
            return Ok(result_from(&problem, &x, iterations));
        }
        scale = (step * 10.0).clamp(1e-7, 0.1);
    }
    Err(Error::NonConvergence {
        iterations: iterations as usize,
        best: Box::new(result_from(&problem, &x, iterations)),
    })
}

/// Raw dip visibility, without background subtraction.
pub fn visibility(fit: &FitResult) -> f64 {
    fit.visibility
}

/// Visibility after removing a flat accidental floor (counts per scan
/// point) from the fitted amplitude.
pub fn corrected_visibility(fit: &FitResult, accidentals_per_point: f64) -> Result<f64> {
    let signal = fit.amplitude - accidentals_per_point;
    if !(signal > 0.0) {
        return Err(Error::Undefined(
            "accidental floor exceeds the fitted amplitude".into(),
        ));
    }
    Ok(fit.visibility * fit.amplitude / signal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipWidth {
    /// Delay from the dip centre to the first zero of sinc², 1/Δν.
    pub first_zero_ps: f64,
    pub first_zero_mm: f64,
    /// Full width at half depth, 2·1.3916/(πΔν).
    pub fwhm_ps: f64,
    pub fwhm_mm: f64,
}

pub fn dip_width(fit: &FitResult) -> DipWidth {
    dip_width_for_bandwidth(fit.bandwidth_ghz)
}

pub fn dip_width_for_bandwidth(bandwidth_ghz: f64) -> DipWidth {
    let first_zero_ps = 1e3 / bandwidth_ghz;
    let fwhm_ps = 2.0 * SINC2_HALF_MAX / std::f64::consts::PI * first_zero_ps;
    DipWidth {
        first_zero_ps,
        first_zero_mm: first_zero_ps * MM_PER_PS,
        fwhm_ps,
        fwhm_mm: fwhm_ps * MM_PER_PS,
    }
}

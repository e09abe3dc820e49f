//! Decay-curve fits by damped Gauss-Newton (Levenberg-Marquardt).
//!
//! Decay constants are fitted as rates `k = 1/T`, so flat data converge to
//! `k = 0` instead of running off to infinity; such fits are flagged
//! `unbounded`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `eta(T) = eta_o exp(-4 T / T2)`.
    Exp4,
    /// `I(tau) = I0 exp(-2 (2 tau / T2)^chi)`.
    Mims,
    /// `C(t) = C0 exp(-t / T1)`, optionally plus a constant background.
    ExpT1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub params: Vec<FitParam>,
    /// Root of the (weighted) sum of squared residuals.
    pub residual_norm: f64,
    /// Condition number of the normal matrix after diagonal scaling.
    pub condition_number: f64,
    /// The time constant is not determined by the data: the rate is not
    /// positive, not one sigma away from zero, negligible over the sampled
    /// range, or its covariance is singular.
    pub unbounded: bool,
    pub iterations: usize,
}

impl DecayFit {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.param(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name).map_or(f64::NAN, |p| p.sigma)
    }

    /// Model prediction at `x` from the reported parameters.
    pub fn predict(&self, x: f64) -> f64 {
        let rate = |t: f64| if t.is_finite() { 1.0 / t } else { 0.0 };
        match self.model {
            DecayModel::Exp4 => self.value("eta_o") * (-4.0 * x * rate(self.value("T2"))).exp(),
            DecayModel::Mims => {
                let u = (2.0 * x * rate(self.value("T2"))).powf(self.value("chi"));
                self.value("I0") * (-2.0 * u).exp()
            }
            DecayModel::ExpT1 => {
                let b = self.param("B").map_or(0.0, |p| p.value);
                self.value("C0") * (-x * rate(self.value("T1"))).exp() + b
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonWeighting {
    /// Poisson weights when any ordinate is below 25 counts.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Known 1-sigma errors per point; the covariance is then absolute.
    pub sigma: Option<Vec<f64>>,
    /// Add a constant background (T1 fits only).
    pub background: bool,
    /// Count weighting for T1 fits.
    pub poisson: PoissonWeighting,
}

const MAX_ITERATIONS: usize = 500;
const POISSON_THRESHOLD: f64 = 25.0;

/// Model residual function: parameters in internal form, returns values
/// and the Jacobian rows.
trait Curve {
    fn eval(&self, p: &[f64], x: f64) -> (f64, Vec<f64>);
    fn admissible(&self, _p: &[f64]) -> bool {
        true
    }
}

struct Exp4Curve;
impl Curve for Exp4Curve {
    fn eval(&self, p: &[f64], x: f64) -> (f64, Vec<f64>) {
        let e = (-4.0 * x * p[1]).exp();
        (p[0] * e, vec![e, -4.0 * x * p[0] * e])
    }
}

struct MimsCurve;
impl Curve for MimsCurve {
    fn eval(&self, p: &[f64], x: f64) -> (f64, Vec<f64>) {
        let (i0, k, chi) = (p[0], p[1], p[2]);
        let z = 2.0 * x * k;
        if z <= 0.0 {
            return (i0, vec![1.0, 0.0, 0.0]);
        }
        let u = z.powf(chi);
        let e = (-2.0 * u).exp();
        let f = i0 * e;
        (f, vec![e, -2.0 * chi * u / k * f, -2.0 * u * z.ln() * f])
    }

    fn admissible(&self, p: &[f64]) -> bool {
        p[1] > 0.0 && p[2] > 0.0 && p[2] < 20.0
    }
}

struct ExpT1Curve {
    background: bool,
}
impl Curve for ExpT1Curve {
    fn eval(&self, p: &[f64], x: f64) -> (f64, Vec<f64>) {
        let e = (-x * p[1]).exp();
        if self.background {
            (p[0] * e + p[2], vec![e, -x * p[0] * e, 1.0])
        } else {
            (p[0] * e, vec![e, -x * p[0] * e])
        }
    }
}

struct Solution {
    params: Vec<f64>,
    covariance: Option<DMatrix<f64>>,
    residual_norm: f64,
    condition_number: f64,
    iterations: usize,
}

fn check_points(points: &[(f64, f64)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(invalid("points", format!("need at least {min} points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid("points", "points must be finite"));
    }
    Ok(())
}

/// Initial rate from the log-slope between the first and last points
/// (sorted by abscissa), for a model decaying as `exp(-scale * k * x)`.
fn initial_rate(points: &[(f64, f64)], scale: f64) -> f64 {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x0, y0) = sorted[0];
    let (x1, y1) = sorted[sorted.len() - 1];
    let span = x1 - x0;
    let k = if y0 > 0.0 && y1 > 0.0 && span > 0.0 {
        (y0 / y1).ln() / (scale * span)
    } else {
        f64::NAN
    };
    if k.is_finite() && k > 0.0 {
        k
    } else if span > 0.0 {
        1.0 / (scale * span)
    } else {
        1.0
    }
}

fn first_point(points: &[(f64, f64)]) -> (f64, f64) {
    *points
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty")
}

/// Weighted residuals and Jacobian.
fn linearize(curve: &dyn Curve, p: &[f64], points: &[(f64, f64)], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len();
    let m = p.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, m);
    for (i, &(x, y)) in points.iter().enumerate() {
        let (f, g) = curve.eval(p, x);
        r[i] = (y - f) * w[i];
        for c in 0..m {
            j[(i, c)] = g[c] * w[i];
        }
    }
    (r, j)
}

fn cost(curve: &dyn Curve, p: &[f64], points: &[(f64, f64)], w: &[f64]) -> f64 {
    points
        .iter()
        .zip(w)
        .map(|(&(x, y), wi)| ((y - curve.eval(p, x).0) * wi).powi(2))
        .sum()
}

fn levenberg_marquardt(
    curve: &dyn Curve,
    init: Vec<f64>,
    points: &[(f64, f64)],
    weights: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    absolute: bool,
) -> Result<Solution> {
    let mut p = init;
    let mut w = weights(&p);
    let mut c = cost(curve, &p, points, &w);
    if !c.is_finite() {
        return Err(Error::FitFailure {
            iterations: 0,
            cost: c,
            params: p,
        });
    }
    let scale: f64 = points.iter().zip(&w).map(|(&(_, y), wi)| (y * wi).powi(2)).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (r, j) = linearize(curve, &p, points, &w);
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * &r;
        let diag: Vec<f64> = (0..p.len()).map(|i| a[(i, i)]).collect();
        let dmax = diag.iter().copied().fold(0.0, f64::max);
        if dmax == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for i in 0..p.len() {
                damped[(i, i)] += lambda * diag[i].max(1e-12 * dmax);
            }
            let Some(step) = damped.lu().solve(&g) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if !curve.admissible(&trial) {
                lambda *= 4.0;
                continue;
            }
            let tc = cost(curve, &trial, points, &w);
            if tc.is_finite() && tc <= c {
                let small_step = p
                    .iter()
                    .zip(&trial)
                    .all(|(a, b)| (b - a).abs() <= 1e-12 * a.abs().max(1e-300));
                let small_gain = c - tc <= 1e-15 * c.max(1e-300 * scale);
                p = trial;
                c = tc;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain || c <= 1e-30 * scale {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at working precision.
            converged = true;
        }
        let new_w = weights(&p);
        if new_w != w {
            w = new_w;
            c = cost(curve, &p, points, &w);
            if converged {
                converged = false;
                lambda = 1e-3;
                continue;
            }
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitFailure {
            iterations,
            cost: c,
            params: p,
        });
    }
    let (r, j) = linearize(curve, &p, points, &w);
    let a = j.transpose() * &j;
    let n = points.len();
    let m = p.len();
    let d: Vec<f64> = (0..m).map(|i| a[(i, i)].sqrt()).collect();
    let scaled = DMatrix::from_fn(m, m, |i, k| {
        if d[i] > 0.0 && d[k] > 0.0 {
            a[(i, k)] / (d[i] * d[k])
        } else {
            0.0
        }
    });
    let sv = scaled.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let covariance = if condition_number < 1e14 && d.iter().all(|&x| x > 0.0) {
        scaled.try_inverse().map(|inv| {
            let s2 = if absolute {
                1.0
            } else if n > m {
                r.norm_squared() / (n - m) as f64
            } else {
                0.0
            };
            DMatrix::from_fn(m, m, |i, k| inv[(i, k)] / (d[i] * d[k]) * s2)
        })
    } else {
        None
    };
    Ok(Solution {
        params: p,
        covariance,
        residual_norm: r.norm(),
        condition_number,
        iterations,
    })
}

fn sigma_of(sol: &Solution, i: usize) -> f64 {
    sol.covariance
        .as_ref()
        .map_or(f64::INFINITY, |c| c[(i, i)].max(0.0).sqrt())
}

/// Converts a fitted rate into a time constant. The rate counts as
/// unresolved when it is not positive, not one sigma away from zero, or
/// too slow to change the curve over the sampled range.
fn time_constant(name: &str, k: f64, sigma_k: f64, span: f64) -> (FitParam, bool) {
    if k > 0.0 && sigma_k.is_finite() && k > sigma_k && k * span > 1e-9 {
        (
            FitParam {
                name: name.into(),
                value: 1.0 / k,
                sigma: sigma_k / (k * k),
            },
            false,
        )
    } else {
        (
            FitParam {
                name: name.into(),
                value: f64::INFINITY,
                sigma: f64::INFINITY,
            },
            true,
        )
    }
}

fn x_span(points: &[(f64, f64)]) -> f64 {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    hi - lo
}

fn fixed_weights(points: &[(f64, f64)], sigma: &Option<Vec<f64>>) -> Result<(Vec<f64>, bool)> {
    match sigma {
        None => Ok((vec![1.0; points.len()], false)),
        Some(s) => {
            if s.len() != points.len() {
                return Err(invalid("sigma", "one sigma per point required"));
            }
            if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(invalid("sigma", "sigmas must be positive and finite"));
            }
            Ok((s.iter().map(|v| 1.0 / v).collect(), true))
        }
    }
}

/// Fits `eta(T_s) = eta_o exp(-4 T_s / T2)`.
pub fn fit_efficiency_decay(points: &[(f64, f64)], options: &FitOptions) -> Result<DecayFit> {
    check_points(points, 3)?;
    if points.iter().any(|&(x, _)| x < 0.0) {
        return Err(invalid("points", "storage times must be >= 0"));
    }
    let (w, absolute) = fixed_weights(points, &options.sigma)?;
    let k0 = initial_rate(points, 4.0);
    let (x0, y0) = first_point(points);
    let init = vec![y0 * (4.0 * x0 * k0).exp(), k0];
    let sol = levenberg_marquardt(&Exp4Curve, init, points, &mut |_| w.clone(), absolute)?;
    let (t2, unbounded) = time_constant("T2", sol.params[1], sigma_of(&sol, 1), x_span(points));
    Ok(DecayFit {
        model: DecayModel::Exp4,
        params: vec![
            FitParam {
                name: "eta_o".into(),
                value: sol.params[0],
                sigma: sigma_of(&sol, 0),
            },
            t2,
        ],
        residual_norm: sol.residual_norm,
        condition_number: sol.condition_number,
        unbounded,
        iterations: sol.iterations,
    })
}

/// Fits `I(tau12) = I0 exp(-2 (2 tau12 / T2)^chi)`, starting from `chi = 1`.
pub fn fit_mims(points: &[(f64, f64)], options: &FitOptions) -> Result<DecayFit> {
    check_points(points, 4)?;
    if points.iter().any(|&(x, _)| !(x > 0.0)) {
        return Err(invalid("points", "pulse separations must be > 0"));
    }
    if points.iter().all(|&(_, y)| y == 0.0) {
        return Err(Error::DegenerateFit("all intensities are zero".into()));
    }
    let (w, absolute) = fixed_weights(points, &options.sigma)?;
    let k0 = initial_rate(points, 4.0);
    let (x0, y0) = first_point(points);
    let init = vec![y0 * (4.0 * x0 * k0).exp(), k0, 1.0];
    let sol = levenberg_marquardt(&MimsCurve, init, points, &mut |_| w.clone(), absolute)?;
    if sol.params[0] == 0.0 {
        return Err(Error::DegenerateFit("fitted amplitude is zero".into()));
    }
    let (t2, unbounded) = time_constant("T2", sol.params[1], sigma_of(&sol, 1), x_span(points));
    Ok(DecayFit {
        model: DecayModel::Mims,
        params: vec![
            FitParam {
                name: "I0".into(),
                value: sol.params[0],
                sigma: sigma_of(&sol, 0),
            },
            t2,
            FitParam {
                name: "chi".into(),
                value: sol.params[2],
                sigma: sigma_of(&sol, 2),
            },
        ],
        residual_norm: sol.residual_norm,
        condition_number: sol.condition_number,
        unbounded,
        iterations: sol.iterations,
    })
}

/// Fits `C(t) = C0 exp(-t / T1) (+ B)`. Count data below 25 per point use
/// Poisson weights re-evaluated at the current model (unless overridden).
pub fn fit_t1(points: &[(f64, f64)], options: &FitOptions) -> Result<DecayFit> {
    check_points(points, 3)?;
    let background = options.background;
    if background && points.len() < 4 {
        return Err(invalid("points", "a fit with background needs at least 4 points"));
    }
    let poisson = options.sigma.is_none()
        && match options.poisson {
            PoissonWeighting::Always => true,
            PoissonWeighting::Never => false,
            PoissonWeighting::Auto => points.iter().any(|&(_, y)| y < POISSON_THRESHOLD),
        };
    let curve = ExpT1Curve { background };
    let k0 = initial_rate(points, 1.0);
    let (x0, y0) = first_point(points);
    let mut init = vec![y0 * (x0 * k0).exp(), k0];
    if background {
        init.push(0.0);
    }
    let sol = if poisson {
        let mut weights = |p: &[f64]| -> Vec<f64> {
            points
                .iter()
                .map(|&(x, _)| 1.0 / curve.eval(p, x).0.max(1.0).sqrt())
                .collect()
        };
        levenberg_marquardt(&curve, init, points, &mut weights, true)?
    } else {
        let (w, absolute) = fixed_weights(points, &options.sigma)?;
        levenberg_marquardt(&curve, init, points, &mut |_| w.clone(), absolute)?
    };
    let (t1, mut unbounded) = time_constant("T1", sol.params[1], sigma_of(&sol, 1), x_span(points));
    if sol.covariance.is_none() {
        unbounded = true;
    }
    let mut params = vec![
        FitParam {
            name: "C0".into(),
            value: sol.params[0],
            sigma: sigma_of(&sol, 0),
        },
        t1,
    ];
    if background {
        params.push(FitParam {
            name: "B".into(),
            value: sol.params[2],
            sigma: sigma_of(&sol, 2),
        });
    }
    Ok(DecayFit {
        model: DecayModel::ExpT1,
        params,
        residual_norm: sol.residual_norm,
        condition_number: sol.condition_number,
        unbounded,
        iterations: sol.iterations,
    })
}

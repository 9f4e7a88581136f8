//! Small nonlinear least-squares front end over `levenberg-marquardt`.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};

use crate::{Error, Result};

/// A model evaluated at `x` with parameters `params`; writes the gradient with
/// respect to the parameters into `grad` and returns the value.
pub trait Model {
    fn eval(&self, x: f64, params: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: Fn(f64, &[f64], &mut [f64]) -> f64> Model for F {
    fn eval(&self, x: f64, params: &[f64], grad: &mut [f64]) -> f64 {
        self(x, params, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Root mean square residual.
    pub rms: f64,
    pub evaluations: usize,
}

struct Problem<'a, M> {
    model: &'a M,
    x: &'a [f64],
    y: &'a [f64],
    params: DVector<f64>,
}

impl<M: Model> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.params.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let p = self.params.as_slice();
        let mut g = vec![0.0; p.len()];
        let r = DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .map(|(&x, &y)| self.model.eval(x, p, &mut g) - y),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let p = self.params.as_slice();
        let mut jac = DMatrix::zeros(self.x.len(), p.len());
        let mut g = vec![0.0; p.len()];
        for (i, &x) in self.x.iter().enumerate() {
            self.model.eval(x, p, &mut g);
            for (k, &gk) in g.iter().enumerate() {
                jac[(i, k)] = gk;
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

fn rms_of<M: Model>(model: &M, x: &[f64], y: &[f64], p: &[f64]) -> f64 {
    let mut g = vec![0.0; p.len()];
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&x, &y)| (model.eval(x, p, &mut g) - y).powi(2))
        .sum();
    (sse / x.len() as f64).sqrt()
}

/// Levenberg-Marquardt from a single starting point.
pub fn least_squares<M: Model>(
    model: &M,
    x: &[f64],
    y: &[f64],
    initial: &[f64],
) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} abscissae for {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < initial.len() {
        return Err(Error::InsufficientData(format!(
            "{} points for {} parameters",
            x.len(),
            initial.len()
        )));
    }
    let problem = Problem {
        model,
        x,
        y,
        params: DVector::from_column_slice(initial),
    };
    let (solved, report) = LevenbergMarquardt::new()
        .with_patience(200)
        .minimize(problem);
    let params: Vec<f64> = solved.params.iter().copied().collect();
    if report.termination.was_usage_issue() || params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(format!(
            "{:?} after {} evaluations from {initial:?}",
            report.termination, report.number_of_evaluations
        )));
    }
    Ok(FitResult {
        rms: rms_of(model, x, y, &params),
        params,
        evaluations: report.number_of_evaluations,
    })
}

/// Runs [`least_squares`] from every start and keeps the lowest residual.
pub fn multi_start<M: Model>(
    model: &M,
    x: &[f64],
    y: &[f64],
    starts: &[Vec<f64>],
) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for s in starts {
        match least_squares(model, x, y, s) {
            Ok(f) if best.as_ref().is_none_or(|b| f.rms < b.rms) => best = Some(f),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("no starting points".into())))
}

/// Fitted `amplitude * exp(-t / tau) + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecay {
    pub amplitude: f64,
    pub tau: f64,
    pub offset: f64,
    pub rms: f64,
}

impl ExpDecay {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-t / self.tau).exp() + self.offset
    }
}

/// Linear least squares for amplitude and offset at fixed `tau`.
fn linear_for_tau(t: &[f64], y: &[f64], tau: f64) -> Option<(f64, f64, f64)> {
    let n = t.len() as f64;
    let e: Vec<f64> = t.iter().map(|&t| (-t / tau).exp()).collect();
    let (se, sy) = (e.iter().sum::<f64>(), y.iter().sum::<f64>());
    let see: f64 = e.iter().map(|v| v * v).sum();
    let sey: f64 = e.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * see - se * se;
    if det.abs() < 1e-14 * n * see.max(1.0) {
        return None;
    }
    let a = (n * sey - se * sy) / det;
    let b = (sy - a * se) / n;
    let sse = e
        .iter()
        .zip(y)
        .map(|(&e, &y)| (a * e + b - y).powi(2))
        .sum();
    Some((a, b, sse))
}

/// Fits `a * exp(-t / tau) + b`. Starting points come from a log grid over
/// `tau`, with amplitude and offset solved linearly at each grid value.
pub fn fit_exp_decay(t: &[f64], y: &[f64]) -> Result<ExpDecay> {
    if t.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} times for {} values",
            t.len(),
            y.len()
        )));
    }
    if t.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} points; need at least 4",
            t.len()
        )));
    }
    let (tmin, tmax) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = tmax - tmin;
    if span <= 0.0 || !span.is_finite() {
        return Err(Error::InvalidArgument(
            "times must span a nonzero interval".into(),
        ));
    }
    let ymean = y.iter().sum::<f64>() / y.len() as f64;
    let yvar = y.iter().map(|v| (v - ymean).powi(2)).sum::<f64>() / y.len() as f64;
    if yvar < 1e-24 {
        return Ok(ExpDecay {
            amplitude: 0.0,
            tau: span,
            offset: ymean,
            rms: 0.0,
        });
    }

    // Times are shifted to start at zero so the grid solve stays well scaled.
    let shifted: Vec<f64> = t.iter().map(|&v| v - tmin).collect();
    let mut grid: Vec<(f64, f64, f64, f64)> = (0..40)
        .map(|i| span * 10f64.powf(-2.0 + 3.0 * i as f64 / 39.0))
        .filter_map(|tau| linear_for_tau(&shifted, y, tau).map(|(a, b, sse)| (sse, tau, a, b)))
        .collect();
    grid.sort_by(|p, q| p.0.total_cmp(&q.0));
    // ln(tau) keeps tau positive.
    let starts: Vec<Vec<f64>> = grid
        .iter()
        .take(4)
        .map(|&(_, tau, a, b)| vec![a, tau.ln(), b])
        .collect();
    let model = |t: f64, p: &[f64], g: &mut [f64]| {
        let tau = p[1].exp();
        let e = (-t / tau).exp();
        g[0] = e;
        g[1] = p[0] * e * t / tau;
        g[2] = 1.0;
        p[0] * e + p[2]
    };
    let fit = multi_start(&model, &shifted, y, &starts)?;
    let tau = fit.params[1].exp();
    Ok(ExpDecay {
        amplitude: fit.params[0] * (tmin / tau).exp(),
        tau,
        offset: fit.params[2],
        rms: fit.rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_recovered() {
        let t: Vec<f64> = (0..12).map(|i| i as f64 * 2.5).collect();
        let y: Vec<f64> = t.iter().map(|&t| 0.87 * (-t / 13.0).exp() + 0.08).collect();
        let f = fit_exp_decay(&t, &y).unwrap();
        assert!((f.amplitude - 0.87).abs() < 1e-8);
        assert!((f.tau - 13.0).abs() < 1e-6);
        assert!((f.offset - 0.08).abs() < 1e-8);
        assert!(f.rms < 1e-9);
    }

    #[test]
    fn shifted_window_recovered() {
        let t: Vec<f64> = (0..10).map(|i| 40.0 + i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&t| 5.0 * (-t / 4.0).exp() + 0.1).collect();
        let f = fit_exp_decay(&t, &y).unwrap();
        assert!((f.tau - 4.0).abs() < 1e-5, "{f:?}");
        assert!((f.eval(45.0) - (5.0 * (-45.0f64 / 4.0).exp() + 0.1)).abs() < 1e-9);
    }

    #[test]
    fn constant_data_has_no_amplitude() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let f = fit_exp_decay(&t, &[0.3; 5]).unwrap();
        assert_eq!(f.amplitude, 0.0);
        assert!((f.offset - 0.3).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            fit_exp_decay(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.2]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn general_model_line() {
        let line = |x: f64, p: &[f64], g: &mut [f64]| {
            g[0] = x;
            g[1] = 1.0;
            p[0] * x + p[1]
        };
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = least_squares(&line, &x, &y, &[0.0, 0.0]).unwrap();
        assert!((f.params[0] - 2.0).abs() < 1e-9 && (f.params[1] - 1.0).abs() < 1e-9);
    }
}

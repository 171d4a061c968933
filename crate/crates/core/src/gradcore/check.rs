// SPDX-License-Identifier: Apache-2.0

//! Central-difference gradient verification.

use std::fmt;

use crate::error::{Error, Result};
use crate::gradcore::tape::{record, Graph};
use crate::linalg::Mat;

/// Central differences `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε` for every coordinate.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so that gradients near
    /// zero are compared absolutely instead of amplifying rounding noise.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose perturbation changed a max-pool argmax.
    pub skipped: Vec<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub eps: f64,
    pub tol: f64,
    pub params: Vec<ParamReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped.len()).sum()
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "eps = {:e}, tol = {:e}", self.eps, self.tol)?;
        writeln!(
            f,
            "{:<16} {:>12} {:>12} {:>8} {:>8}  status",
            "param", "max_rel", "mean_rel", "checked", "skipped"
        )?;
        for p in &self.params {
            writeln!(
                f,
                "{:<16} {:>12.3e} {:>12.3e} {:>8} {:>8}  {}",
                p.name,
                p.max_rel_err,
                p.mean_rel_err,
                p.checked,
                p.skipped.len(),
                if p.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

fn evaluate<G: Graph + ?Sized>(graph: &G, params: &[Mat]) -> Result<(f64, Vec<Vec<usize>>)> {
    let (tape, loss) = record(graph, params)?;
    let choices = tape.pool_choices().into_iter().map(<[usize]>::to_vec).collect();
    Ok((tape.scalar(loss), choices))
}

/// Compares reverse-mode gradients against central differences for every
/// coordinate of every parameter. Coordinates whose ±ε perturbation changes
/// a max-pool argmax sit on a non-differentiable point and are skipped.
/// Evaluation failures at a perturbed point are reported as a failed
/// coordinate rather than returned.
pub fn grad_check<G: Graph + ?Sized>(
    graph: &G,
    params: &[Mat],
    names: &[&str],
    config: &GradCheckConfig,
) -> GradReport {
    let mut report = GradReport {
        eps: config.eps,
        tol: config.tol,
        params: Vec::with_capacity(params.len()),
    };
    let name_of = |i: usize| names.get(i).map_or_else(|| format!("param{i}"), |s| s.to_string());

    let base = record(graph, params).and_then(|(tape, loss)| {
        let grads = tape.backward(loss)?;
        let choices: Vec<Vec<usize>> =
            tape.pool_choices().into_iter().map(<[usize]>::to_vec).collect();
        Ok((grads, choices))
    });
    let (analytic, base_choices) = match base {
        Ok(v) => v,
        Err(_) => {
            report.params = (0..params.len())
                .map(|i| ParamReport {
                    name: name_of(i),
                    max_rel_err: f64::INFINITY,
                    mean_rel_err: f64::INFINITY,
                    checked: 0,
                    skipped: Vec::new(),
                    passed: false,
                })
                .collect();
            return report;
        }
    };

    let mut probe: Vec<Mat> = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        let mut errs = Vec::new();
        let mut skipped = Vec::new();
        let mut failed = false;
        for k in 0..params[pi].data().len() {
            let x = params[pi].data()[k];
            probe[pi].data_mut()[k] = x + config.eps;
            let plus = evaluate(graph, &probe);
            probe[pi].data_mut()[k] = x - config.eps;
            let minus = evaluate(graph, &probe);
            probe[pi].data_mut()[k] = x;
            let (Ok((fp, cp)), Ok((fm, cm))) = (plus, minus) else {
                failed = true;
                continue;
            };
            if cp != base_choices || cm != base_choices {
                skipped.push(k);
                continue;
            }
            let numeric = (fp - fm) / (2.0 * config.eps);
            let a = grad.data()[k];
            let denom = a.abs().max(numeric.abs()).max(config.abs_floor);
            errs.push((a - numeric).abs() / denom);
        }
        let max = errs.iter().copied().fold(0.0, f64::max);
        let mean = if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        };
        report.params.push(ParamReport {
            name: name_of(pi),
            max_rel_err: max,
            mean_rel_err: mean,
            checked: errs.len(),
            skipped,
            passed: !failed && max <= config.tol,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::{forward_backward, NodeId, Tape};
    use crate::losses::{overuse_penalty, BatchLexical};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_and_linear_functions() {
        let g = finite_diff(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
        for &eps in &[1e-1, 1e-3, 0.5] {
            let g = finite_diff(|x| 2.0 * x[0] - 3.0 * x[1] + 1.0, &[0.25, -0.5], eps).unwrap();
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        }
        assert!(finite_diff(|x| x[0], &[1.0], 0.0).is_err());
        assert!(finite_diff(|x| x[0].ln(), &[0.0], 1e-3).is_err());
    }

    #[test]
    fn overuse_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = Mat::from_vec(3, 5, (0..15).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap();
        let g = |t: &mut Tape, p: &[NodeId]| t.overuse(p[0]);
        let (_, grads) = forward_backward(&g, &[s.clone()]).unwrap();
        let f = |x: &[f64]| {
            overuse_penalty(&BatchLexical::new(Mat::from_vec(3, 5, x.to_vec()).unwrap()).unwrap())
                .unwrap()
        };
        let numeric = finite_diff(f, s.data(), 1e-5).unwrap();
        for (a, n) in grads[0].data().iter().zip(&numeric) {
            assert!((a - n).abs() <= 1e-4 * a.abs().max(n.abs()), "{a} vs {n}");
        }
        let report = grad_check(&g, &[s], &["S"], &GradCheckConfig::default());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn identity_loss_has_zero_error() {
        let g = |t: &mut Tape, p: &[NodeId]| t.combine(&[(1.0, p[0])]);
        let report = grad_check(&g, &[Mat::scalar(0.75)], &["x"], &GradCheckConfig::default());
        assert!(report.passed());
        assert!(report.max_rel_err() < 1e-9);
    }

    #[test]
    fn exact_ties_are_skipped() {
        let x = Mat::from_rows(&[vec![0.5, 0.2], vec![0.5, 0.9]]).unwrap();
        let g = |t: &mut Tape, p: &[NodeId]| {
            let m = t.max_pool(p[0], 2)?;
            t.sum_squares(m)
        };
        let report = grad_check(&g, &[x], &["x"], &GradCheckConfig::default());
        // Column 0 is tied between rows 0 and 1 (flat indices 0 and 2).
        assert_eq!(report.params[0].skipped, vec![0, 2]);
        assert!(report.passed());
    }

    #[test]
    fn probe_failures_are_reported_not_thrown() {
        // x - ε lands exactly on the zero vector, which the normalizer rejects.
        let g = |t: &mut Tape, p: &[NodeId]| {
            let n = t.normalize_rows(p[0])?;
            t.sum_squares(n)
        };
        let report = grad_check(&g, &[Mat::row_vector(vec![1e-5, 0.0])], &["x"], &GradCheckConfig::default());
        assert!(!report.passed());
    }

    #[test]
    fn report_renders_a_table() {
        let g = |t: &mut Tape, p: &[NodeId]| t.sum_squares(p[0]);
        let report = grad_check(&g, &[Mat::row_vector(vec![1.0, -2.0])], &["w"], &GradCheckConfig::default());
        let text = report.to_string();
        assert!(text.contains("w") && text.contains("ok"));
    }
}

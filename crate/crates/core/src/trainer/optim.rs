// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::config::TrainConfig;

/// Peak rate reached linearly over `warmup` steps, then cosine decay that
/// lands exactly on zero at the final step.
pub fn lr_at(peak: f64, warmup: u64, total: u64, step: u64) -> f64 {
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).saturating_sub(1);
    let progress = if span == 0 {
        1.0
    } else {
        ((step - warmup) as f64 / span as f64).min(1.0)
    };
    peak * 0.5 * (1.0 + (PI * progress).cos())
}

/// Adam moments for every parameter, plus the update count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl AdamState {
    pub fn new(params: &[Mat]) -> Self {
        let zeros: Vec<Mat> = params.iter().map(|p| Mat::zeros(p.rows(), p.cols())).collect();
        Self {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected step on the parameters flagged in `trainable`.
    pub fn step(
        &mut self,
        config: &TrainConfig,
        lr: f64,
        params: &mut [Mat],
        grads: &[Mat],
        trainable: &[bool],
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() || trainable.len() != params.len() {
            return Err(Error::invalid("optimizer state does not match parameter list"));
        }
        self.t += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        for i in 0..params.len() {
            if !trainable[i] {
                continue;
            }
            if grads[i].shape() != params[i].shape() {
                return Err(Error::invalid("gradient shape does not match parameter"));
            }
            let p = params[i].data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(grads[i].data()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + config.adam_eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear_and_decay_ends_at_zero() {
        assert!((lr_at(1.0, 10, 100, 0) - 0.1).abs() < 1e-15);
        assert!((lr_at(1.0, 10, 100, 4) - 0.5).abs() < 1e-15);
        assert_eq!(lr_at(1.0, 10, 100, 10), 1.0);
        assert!(lr_at(1.0, 10, 100, 99).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for s in 10..100 {
            let lr = lr_at(1.0, 10, 100, s);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr_times_sign() {
        let mut params = vec![Mat::row_vector(vec![1.0, -2.0]), Mat::scalar(3.0)];
        let grads = vec![Mat::row_vector(vec![0.5, -4.0]), Mat::scalar(9.0)];
        let mut st = AdamState::new(&params);
        let mut cfg = TrainConfig::desk();
        cfg.adam_eps = 1e-12;
        st.step(&cfg, 0.1, &mut params, &grads, &[true, false]).unwrap();
        assert!((params[0].get(0, 0) - 0.9).abs() < 1e-9);
        assert!((params[0].get(0, 1) + 1.9).abs() < 1e-9);
        assert_eq!(params[1].get(0, 0), 3.0);
        assert_eq!(st.m[1].get(0, 0), 0.0);
    }

    #[test]
    fn adam_matches_reference_recurrence() {
        let cfg = TrainConfig::desk();
        let mut params = vec![Mat::scalar(0.0)];
        let mut st = AdamState::new(&params);
        let gs = [1.0, -0.5, 2.0, 0.25];
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            st.step(&cfg, 0.01, &mut params, &[Mat::scalar(*g)], &[true]).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let k = (t + 1) as i32;
            p -= 0.01 * (m / (1.0 - 0.9f64.powi(k))) / ((v / (1.0 - 0.999f64.powi(k))).sqrt() + 1e-6);
            assert!((params[0].get(0, 0) - p).abs() < 1e-15);
        }
    }
}

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const EPS: f32 = 1e-8;

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

/// Bias-corrected Adam with default moments. Only trainable parameters that
/// received a gradient are touched.
#[derive(Clone, Debug, Default)]
pub struct Adam {
    step: u64,
    state: IndexMap<String, Moments>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Shape of the moment buffer kept for `name`, if any.
    pub fn buffer_len(&self, name: &str) -> Option<usize> {
        self.state.get(name).map(|s| s.m.len())
    }

    pub fn step(&mut self, params: &mut ParamStore, lr: f32) -> Result<()> {
        for (name, p) in params.iter() {
            if let Some(g) = &p.grad {
                if p.trainable && !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {name}")));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = (1.0 - f64::from(BETA1).powi(t)) as f32;
        let c2 = (1.0 - f64::from(BETA2).powi(t)) as f32;
        for (name, p) in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let Some(g) = &p.grad else { continue };
            let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
            });
            for (((w, &gv), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(st.m.iter_mut())
                .zip(st.v.iter_mut())
            {
                *m = BETA1 * *m + (1.0 - BETA1) * gv;
                *v = BETA2 * *v + (1.0 - BETA2) * gv * gv;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(value: f32, grad: f32) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::full(&[1], value), true);
        p.get_mut("w").unwrap().grad = Some(Tensor::full(&[1], grad));
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(1.0, 1.0);
        Adam::new().step(&mut p, 0.01).unwrap();
        let moved = 1.0 - p.value("w").unwrap().item();
        let expected = 0.01 / (1.0 + 1e-8);
        assert!((moved - expected).abs() < 1e-7, "{moved}");
    }

    #[test]
    fn zero_grad_is_identity() {
        let mut p = store(0.25, 0.0);
        Adam::new().step(&mut p, 0.1).unwrap();
        assert_eq!(p.value("w").unwrap().item(), 0.25);
    }

    #[test]
    fn frozen_params_untouched_and_nan_rejected() {
        let mut p = store(2.0, 1.0);
        p.get_mut("w").unwrap().trainable = false;
        Adam::new().step(&mut p, 0.1).unwrap();
        assert_eq!(p.value("w").unwrap().item(), 2.0);

        let mut p = store(2.0, f32::NAN);
        let err = Adam::new().step(&mut p, 0.1).unwrap_err();
        assert!(err.to_string().contains("gradient of w"));
    }

    #[test]
    fn identical_optimizers_follow_identical_paths() {
        let mut a = store(1.0, 0.3);
        let mut b = store(1.0, 0.3);
        let (mut oa, mut ob) = (Adam::new(), Adam::new());
        for _ in 0..5 {
            oa.step(&mut a, 0.05).unwrap();
            ob.step(&mut b, 0.05).unwrap();
        }
        assert_eq!(a.value("w").unwrap().bits(), b.value("w").unwrap().bits());
        assert_eq!(oa.buffer_len("w"), Some(1));
    }
}

//! Adam parameter updates with the bias correction folded into the learning
//! rate:
//!
//! ```text
//! z <- w1 z + (1 - w1) g
//! v <- w2 v + (1 - w2) g (.) g
//! lr_eff = base_lr * sqrt(1 - w2^t) / (1 - w1^t)
//! p <- p - lr_eff * z / (sqrt(v) + eps)
//! ```
//!
//! `t` counts global update steps (actor epochs, critic minibatches) and is
//! one-based; the moments live inside the [`ParameterStore`] entries so they
//! persist across trainer iterations.

use crate::error::{Error, Result};
use crate::store::{AdamMoments, Gradients, ParameterStore};

/// Hyper-parameters of the optimiser.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub omega1: f64,
    pub omega2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            omega1: 0.9,
            omega2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Effective learning rate at the given one-based step.
pub fn effective_lr(base_lr: f64, step_index: u64, p: AdamParams) -> Result<f64> {
    if step_index == 0 {
        return Err(Error::Contract(
            "adam step_index must be >= 1 (bias correction divides by 1 - w1^t)".into(),
        ));
    }
    let t = step_index as f64;
    Ok(base_lr * (1.0 - p.omega2.powf(t)).sqrt() / (1.0 - p.omega1.powf(t)))
}

/// Applies one Adam step to every entry of `store`.
pub fn adam_step(
    store: &mut ParameterStore,
    grads: &Gradients,
    base_lr: f64,
    step_index: u64,
    p: AdamParams,
) -> Result<()> {
    if grads.by_slot.len() != store.len() {
        return Err(Error::dimension("adam gradients", store.len(), grads.by_slot.len()));
    }
    let lr_eff = effective_lr(base_lr, step_index, p)?;
    for slot in 0..store.len() {
        let entry = store.entry_mut(slot);
        let g = &grads.by_slot[slot];
        if g.len() != entry.len() {
            return Err(Error::dimension(
                format!("adam gradient for {}", entry.name),
                entry.len(),
                g.len(),
            ));
        }
        let n = entry.len();
        let moments = entry.moments.get_or_insert_with(|| AdamMoments {
            z: vec![0.0; n],
            v: vec![0.0; n],
        });
        for i in 0..n {
            moments.z[i] = p.omega1 * moments.z[i] + (1.0 - p.omega1) * g[i];
            moments.v[i] = p.omega2 * moments.v[i] + (1.0 - p.omega2) * g[i] * g[i];
            entry.data[i] -= lr_eff * moments.z[i] / (moments.v[i].sqrt() + p.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", vec![1], vec![value]).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = scalar_store(0.7);
        let g = Gradients { by_slot: vec![vec![0.0]] };
        adam_step(&mut s, &g, 1e-3, 1, AdamParams::default()).unwrap();
        assert_eq!(s.entry(0).data[0], 0.7);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // g = 1, fresh moments, w1 = 0.9, w2 = 0.999, step 1, base_lr = a.
        let a = 2e-4;
        let p = AdamParams::default();
        let mut s = scalar_store(0.0);
        let g = Gradients { by_slot: vec![vec![1.0]] };
        adam_step(&mut s, &g, a, 1, p).unwrap();

        let m = s.entry(0).moments.as_ref().unwrap();
        assert!((m.z[0] - 0.1).abs() < 1e-15);
        assert!((m.v[0] - 0.001).abs() < 1e-15);
        let lr_eff = a * 0.001f64.sqrt() / 0.1;
        let expected = -lr_eff * 0.1 / (0.001f64.sqrt() + p.epsilon);
        assert!((s.entry(0).data[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn step_zero_is_a_contract_error() {
        let mut s = scalar_store(0.0);
        let g = Gradients { by_slot: vec![vec![1.0]] };
        assert!(adam_step(&mut s, &g, 1e-3, 0, AdamParams::default()).is_err());
    }

    #[test]
    fn identical_calls_are_bitwise_identical() {
        let run = || {
            let mut s = scalar_store(0.25);
            let g = Gradients { by_slot: vec![vec![-0.3]] };
            for t in 1..=5 {
                adam_step(&mut s, &g, 1e-2, t, AdamParams::default()).unwrap();
            }
            s.entry(0).data[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn constant_gradient_update_magnitude_approaches_lr_eff() {
        // With g constant, z -> g and v -> g^2, so |delta| -> lr_eff.
        let p = AdamParams::default();
        let mut s = scalar_store(0.0);
        let g = Gradients { by_slot: vec![vec![0.5]] };
        let mut prev = 0.0;
        let mut delta = 0.0;
        for t in 1..=5000u64 {
            adam_step(&mut s, &g, 1e-3, t, p).unwrap();
            delta = (s.entry(0).data[0] - prev).abs();
            prev = s.entry(0).data[0];
        }
        let lr_eff = effective_lr(1e-3, 5000, p).unwrap();
        assert!((delta - lr_eff).abs() / lr_eff < 1e-2, "delta {delta} vs lr_eff {lr_eff}");
    }

    #[test]
    fn loss_scaling_preserves_update_direction() {
        let p = AdamParams::default();
        for &c in &[0.5, 2.0, 17.0] {
            let mut s1 = scalar_store(0.0);
            let mut s2 = scalar_store(0.0);
            let g1 = Gradients { by_slot: vec![vec![-0.7]] };
            let g2 = Gradients { by_slot: vec![vec![-0.7 * c]] };
            adam_step(&mut s1, &g1, 1e-3, 1, p).unwrap();
            adam_step(&mut s2, &g2, 1e-3, 1, p).unwrap();
            assert_eq!(
                s1.entry(0).data[0].signum(),
                s2.entry(0).data[0].signum()
            );
        }
    }
}

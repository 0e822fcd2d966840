use std::collections::HashMap;

use transvnet::{Bound, ParamStore};

/// Optimizer family and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    /// SGD with momentum 0.9 at lr 0.01, the lineage default.
    fn default() -> Self {
        OptimizerKind::Sgd {
            lr: 0.01,
            momentum: 0.9,
        }
    }
}

/// Parameter updater with per-tensor state buffers. Norm parameters,
/// biases (rank-1 tensors) and the embedding tables are exempt from any
/// L2 penalty.
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    velocity: HashMap<String, Vec<f32>>,
    adam_m: HashMap<String, Vec<f32>>,
    adam_v: HashMap<String, Vec<f32>>,
    t: u64,
}

fn weight_decay_exempt(name: &str, rank: usize) -> bool {
    rank <= 1 || name == "pos_embed" || name == "time_embed.weight"
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Self {
            kind,
            weight_decay,
            velocity: HashMap::new(),
            adam_m: HashMap::new(),
            adam_v: HashMap::new(),
            t: 0,
        }
    }

    /// Applies one update from the gradients accumulated in `bound`.
    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, bound: &Bound<f32>) {
        self.t += 1;
        let mut grads: Vec<(String, Vec<f32>)> = bound
            .gradients()
            .filter_map(|(name, g)| g.map(|g| (name.to_string(), g)))
            .collect();
        // Deterministic update order regardless of map iteration.
        grads.sort_by(|a, b| a.0.cmp(&b.0));

        for (name, mut grad) in grads {
            let entry = store
                .get_mut(&name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            debug_assert!(entry.learnable);
            if self.weight_decay > 0.0 && !weight_decay_exempt(&name, entry.shape.len()) {
                let wd = self.weight_decay as f32;
                for (g, &w) in grad.iter_mut().zip(entry.values.iter()) {
                    *g += wd * w;
                }
            }
            match self.kind {
                OptimizerKind::Sgd { lr, momentum } => {
                    let v = self
                        .velocity
                        .entry(name)
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    let (lr, mom) = (lr as f32, momentum as f32);
                    for ((w, g), v) in entry.values.iter_mut().zip(&grad).zip(v.iter_mut()) {
                        *v = mom * *v + g;
                        *w -= lr * *v;
                    }
                }
                OptimizerKind::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let m = self
                        .adam_m
                        .entry(name.clone())
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    let v = self
                        .adam_v
                        .entry(name)
                        .or_insert_with(|| vec![0.0; grad.len()]);
                    let (b1, b2) = (beta1 as f32, beta2 as f32);
                    let bc1 = 1.0 - (beta1 as f32).powi(self.t as i32);
                    let bc2 = 1.0 - (beta2 as f32).powi(self.t as i32);
                    let (lr, eps) = (lr as f32, eps as f32);
                    for (((w, g), m), v) in entry
                        .values
                        .iter_mut()
                        .zip(&grad)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        *w -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

//! First-order optimizers over a [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::nn::params::{Gradients, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, lr: f64, params: &ParamSet) -> Self {
        let zeros = || params.entries().iter().map(|p| vec![0.0; p.values.len()]).collect();
        Self {
            config,
            lr,
            step: 0,
            first: zeros(),
            second: match config {
                OptimizerConfig::Adam { .. } => zeros(),
                OptimizerConfig::Sgd { .. } => vec![],
            },
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) {
        self.step += 1;
        let lr = self.lr;
        match self.config {
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .entries_mut()
                    .iter_mut()
                    .zip(grads.arrays())
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.values.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mhat = m[i] / c1;
                        let vhat = v[i] / c2;
                        p.values[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            OptimizerConfig::Sgd { momentum } => {
                for ((p, g), m) in params
                    .entries_mut()
                    .iter_mut()
                    .zip(grads.arrays())
                    .zip(&mut self.first)
                {
                    for i in 0..p.values.len() {
                        m[i] = momentum * m[i] + g[i];
                        p.values[i] -= lr * m[i];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grad(ps: &ParamSet) -> Gradients {
        let mut g = Gradients::zeros_like(ps);
        let id = ps.find("x").unwrap();
        for (gi, x) in g.get_mut(id).iter_mut().zip(ps.get(id)) {
            *gi = 2.0 * (x - 3.0);
        }
        g
    }

    #[test]
    fn both_optimizers_descend_a_quadratic() {
        for cfg in [OptimizerConfig::default(), OptimizerConfig::Sgd { momentum: 0.5 }] {
            let mut ps = ParamSet::new();
            ps.push("x", vec![2], vec![0.0, 10.0]);
            let mut opt = Optimizer::new(cfg, 0.05, &ps);
            for _ in 0..2000 {
                let g = quadratic_grad(&ps);
                opt.step(&mut ps, &g);
            }
            for v in ps.entries()[0].values.iter() {
                assert!((v - 3.0).abs() < 1e-3, "{cfg:?}: {v}");
            }
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut ps = ParamSet::new();
        ps.push("x", vec![3], vec![0.25, -1.5, 7.0]);
        let before = ps.clone();
        let mut opt = Optimizer::new(OptimizerConfig::default(), 0.0, &ps);
        for _ in 0..5 {
            let g = quadratic_grad(&ps);
            opt.step(&mut ps, &g);
        }
        assert_eq!(ps, before);
    }
}

//! Parameter update rules.

use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Mlp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    moments: Option<Moments>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, moments: None }
    }

    /// Takes one descent step along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        match self.kind {
            OptimizerKind::Sgd => net.apply(grads, -self.lr),
            OptimizerKind::Adam => {
                let g = grads.flatten();
                let mo = self.moments.get_or_insert_with(|| Moments {
                    m: vec![0.0; g.len()],
                    v: vec![0.0; g.len()],
                    t: 0,
                });
                mo.t += 1;
                let c1 = 1.0 - BETA1.powi(mo.t as i32);
                let c2 = 1.0 - BETA2.powi(mo.t as i32);
                let mut params = net.flat_params();
                for i in 0..g.len() {
                    mo.m[i] = BETA1 * mo.m[i] + (1.0 - BETA1) * g[i];
                    mo.v[i] = BETA2 * mo.v[i] + (1.0 - BETA2) * g[i] * g[i];
                    params[i] -= self.lr * (mo.m[i] / c1) / ((mo.v[i] / c2).sqrt() + EPS);
                }
                net.set_flat_params(&params).expect("gradient layout matches network");
            }
        }
    }
}

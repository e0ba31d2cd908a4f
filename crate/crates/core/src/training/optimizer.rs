use std::collections::HashSet;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::network::{FusionNet, ParamGroup};

use super::{TrainConfig, TrainError};

/// Variables sharing one learning rate, momentum and weight decay.
#[derive(Debug)]
pub struct SgdGroup {
    pub name: String,
    pub vars: Vec<Var>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Option<Tensor>>,
}

impl SgdGroup {
    pub fn new(name: &str, vars: Vec<Var>, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        let velocity = vec![None; vars.len()];
        Self {
            name: name.to_string(),
            vars,
            lr,
            momentum,
            weight_decay,
            velocity,
        }
    }
}

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay:
/// `g = ∇w + λw`, `v ← μv + g`, `w ← w − η·v`, with `v` starting at zero.
#[derive(Debug)]
pub struct Sgd {
    groups: Vec<SgdGroup>,
}

impl Sgd {
    pub fn new(groups: Vec<SgdGroup>) -> Result<Self, TrainError> {
        let mut seen = HashSet::new();
        for group in &groups {
            for (i, var) in group.vars.iter().enumerate() {
                if !seen.insert(var.id()) {
                    return Err(TrainError::OverlappingGroups(format!("{}[{i}]", group.name)));
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[SgdGroup] {
        &self.groups
    }

    /// Applies one update to every variable that has a gradient in `grads`.
    pub fn step(&mut self, grads: &GradStore) -> Result<(), TrainError> {
        for group in &mut self.groups {
            for (var, velocity) in group.vars.iter().zip(group.velocity.iter_mut()) {
                let Some(grad) = grads.get(var.as_tensor()) else {
                    continue;
                };
                let w = var.as_tensor().detach();
                let mut g = grad.detach();
                if group.weight_decay != 0.0 {
                    g = (g + (&w * group.weight_decay)?)?;
                }
                let v = match velocity.take() {
                    Some(prev) if group.momentum != 0.0 => ((prev * group.momentum)? + g)?,
                    _ => g,
                };
                var.set(&(w - (&v * group.lr)?)?)?;
                *velocity = Some(v);
            }
        }
        Ok(())
    }
}

/// Two-group optimizer for an encoder/decoder network.
pub fn make_optimizer(encoder: Vec<Var>, decoder: Vec<Var>, config: &TrainConfig) -> Result<Sgd, TrainError> {
    Sgd::new(vec![
        SgdGroup::new("encoder", encoder, config.lr_encoder, config.momentum, config.weight_decay),
        SgdGroup::new("decoder", decoder, config.lr_decoder, config.momentum, config.weight_decay),
    ])
}

/// [`make_optimizer`] over the trainable parameters of `net`.
pub fn optimizer_for(net: &FusionNet, config: &TrainConfig) -> Result<Sgd, TrainError> {
    make_optimizer(
        net.store().trainable(ParamGroup::Encoder),
        net.store().trainable(ParamGroup::Decoder),
        config,
    )
}

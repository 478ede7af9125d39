use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which part of the network a parameter belongs to.
///
/// `Seg` is the segmentation network; everything else (completion decoder,
/// point-voxel interaction, loss weights) is `Aux`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Seg,
    Aux,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub group: ParamGroup,
    /// Multiplier applied to the optimizer learning rate.
    pub lr_mult: f64,
    pub(crate) m: Matrix,
    pub(crate) v: Matrix,
}

impl Param {
    pub fn first_moment(&self) -> &Matrix {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.v
    }
}

/// Every trainable tensor, each registered exactly once, with Adam state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix, group: ParamGroup, lr_mult: f64) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::contract(format!("parameter {name} registered twice")));
        }
        let (r, c) = value.shape();
        self.params.push(Param {
            name,
            value,
            group,
            lr_mult,
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub(crate) fn push_raw(&mut self, p: Param) {
        self.params.push(p);
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.params[id.0].group
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.as_slice().len()).sum()
    }

    /// One Adam update with bias correction. Parameters without a gradient still
    /// decay their moments as if the gradient were zero.
    pub fn adam_step(&mut self, grads: &ParamGrads, lr: f64, cfg: &AdamConfig) -> Result<()> {
        if grads.grads.len() != self.params.len() {
            return Err(Error::structure("gradient set does not match the parameter store"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            let rate = lr * p.lr_mult;
            let gs = g.as_ref().map(|m| m.as_slice());
            let (val, m, v) = (p.value.as_mut_slice(), p.m.as_mut_slice(), p.v.as_mut_slice());
            for k in 0..val.len() {
                let gk = gs.map_or(0.0, |s| s[k]);
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                val[k] -= rate * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Gradients keyed by parameter; supports accumulation across samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Option<Matrix>>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }

    pub fn set(&mut self, id: ParamId, g: Matrix) {
        self.grads[id.0] = Some(g);
    }

    pub(crate) fn accumulate_one(&mut self, id: ParamId, g: &Matrix) {
        match &mut self.grads[id.0] {
            Some(e) => e.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate_one(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(k);
        }
    }

    /// True when every parameter of `group` has no or an all-zero gradient.
    pub fn group_is_zero(&self, store: &ParamStore, group: ParamGroup) -> bool {
        store.ids().filter(|&id| store.group(id) == group).all(|id| {
            self.grads[id.0]
                .as_ref()
                .map_or(true, |g| g.as_slice().iter().all(|v| *v == 0.0))
        })
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Matrix::is_finite)
    }
}

/// Step decay: `base · factor^⌊epoch / every⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub base: f64,
    pub factor: f64,
    pub every: usize,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self {
            base: 1e-3,
            factor: 0.7,
            every: 5,
        }
    }
}

impl StepDecay {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.base * self.factor.powi((epoch / self.every) as i32)
    }
}

/// Learning rate for `epoch`: 0.001, cut by 30% every 5 epochs.
pub fn lr_schedule(epoch: usize) -> f64 {
    StepDecay::default().lr(epoch)
}

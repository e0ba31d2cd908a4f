//! Named parameter storage with seeded initialisation.

use std::collections::HashMap;

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetworkError;

/// Which optimizer group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoder,
    Decoder,
}

/// Trainable weights receive gradients; buffers (BN running statistics) do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    Buffer,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// He-normal with the given fan-in.
    KaimingNormal { fan_in: usize },
    /// Zero-mean normal with a fixed standard deviation.
    Normal { std: f64 },
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub var: Var,
    pub group: ParamGroup,
    pub kind: ParamKind,
}

#[derive(Debug)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    dtype: DType,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &Device::Cpu
    }

    /// Registers a parameter and returns a tensor handle sharing its storage.
    pub fn add(
        &mut self,
        name: String,
        shape: impl Into<Shape>,
        init: Init,
        group: ParamGroup,
        kind: ParamKind,
    ) -> Result<Tensor, NetworkError> {
        if self.index.contains_key(&name) {
            return Err(NetworkError::InvalidConfig(format!("duplicate parameter `{name}`")));
        }
        let shape: Shape = shape.into();
        let n = shape.elem_count();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::KaimingNormal { fan_in } => self.sample_normal(n, (2.0 / fan_in.max(1) as f64).sqrt()),
            Init::Normal { std } => self.sample_normal(n, std),
        };
        let tensor = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&tensor)?;
        let handle = var.as_tensor().clone();
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            var,
            group,
            kind,
        });
        Ok(handle)
    }

    fn sample_normal(&mut self, n: usize, std: f64) -> Vec<f64> {
        let normal = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| normal.sample(&mut self.rng)).collect()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    /// Trainable variables of one group, in registration order.
    pub fn trainable(&self, group: ParamGroup) -> Vec<Var> {
        self.entries
            .iter()
            .filter(|e| e.group == group && e.kind == ParamKind::Trainable)
            .map(|e| e.var.clone())
            .collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Trainable)
            .map(|e| e.var.elem_count())
            .sum()
    }

    /// Overwrites a parameter in place, checking shape and converting dtype.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<(), NetworkError> {
        let entry = self
            .get(name)
            .ok_or_else(|| NetworkError::MissingTensor(name.to_string()))?;
        if entry.var.shape() != value.shape() {
            return Err(NetworkError::ShapeMismatch(format!(
                "`{name}`: expected {:?}, found {:?}",
                entry.var.shape().dims(),
                value.shape().dims()
            )));
        }
        entry.var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }
}

/// Hierarchical name prefix plus the group new parameters join.
#[derive(Debug, Clone)]
pub struct Scope {
    prefix: String,
    group: ParamGroup,
}

impl Scope {
    pub fn root(prefix: &str, group: ParamGroup) -> Self {
        Self {
            prefix: prefix.to_string(),
            group,
        }
    }

    pub fn pp(&self, part: impl std::fmt::Display) -> Self {
        let prefix = if self.prefix.is_empty() {
            part.to_string()
        } else {
            format!("{}.{part}", self.prefix)
        };
        Self {
            prefix,
            group: self.group,
        }
    }

    pub fn name(&self, leaf: &str) -> String {
        if self.prefix.is_empty() {
            leaf.to_string()
        } else {
            format!("{}.{leaf}", self.prefix)
        }
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    pub fn trainable(
        &self,
        store: &mut ParamStore,
        leaf: &str,
        shape: impl Into<Shape>,
        init: Init,
    ) -> Result<Tensor, NetworkError> {
        store.add(self.name(leaf), shape, init, self.group, ParamKind::Trainable)
    }

    pub fn buffer(
        &self,
        store: &mut ParamStore,
        leaf: &str,
        shape: impl Into<Shape>,
        init: Init,
    ) -> Result<Tensor, NetworkError> {
        store.add(self.name(leaf), shape, init, self.group, ParamKind::Buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let make = || {
            let mut s = ParamStore::new(DType::F32, 9);
            let t = Scope::root("x", ParamGroup::Decoder)
                .trainable(&mut s, "w", (4, 3), Init::KaimingNormal { fan_in: 3 })
                .unwrap();
            t.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn assign_checks_shape() {
        let mut s = ParamStore::new(DType::F64, 0);
        Scope::root("a", ParamGroup::Encoder)
            .trainable(&mut s, "w", (2, 2), Init::Zeros)
            .unwrap();
        let bad = Tensor::zeros((3,), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(s.assign("a.w", &bad), Err(NetworkError::ShapeMismatch(_))));
        let good = Tensor::ones((2, 2), DType::F32, &Device::Cpu).unwrap();
        s.assign("a.w", &good).unwrap();
        let v = s.get("a.w").unwrap().var.as_tensor().sum_all().unwrap().to_scalar::<f64>().unwrap();
        assert_eq!(v, 4.0);
        assert!(matches!(s.assign("nope", &good), Err(NetworkError::MissingTensor(_))));
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut s = ParamStore::new(DType::F32, 0);
        let scope = Scope::root("a", ParamGroup::Encoder);
        scope.trainable(&mut s, "w", (1,), Init::Zeros).unwrap();
        assert!(scope.trainable(&mut s, "w", (1,), Init::Zeros).is_err());
    }
}

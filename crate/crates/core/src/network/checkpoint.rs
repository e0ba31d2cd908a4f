//! Checkpoints and pretrained encoder weights.
//!
//! A checkpoint is a safetensors file holding every named parameter and
//! buffer of a [`FusionNet`]. Its `__metadata__` entry `roadfuse` holds a
//! JSON [`CheckpointManifest`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::model::{FusionNet, Precision};
use super::params::ParamGroup;
use super::{Backbone, NetworkError};

type Result<T> = std::result::Result<T, NetworkError>;

const MANIFEST_KEY: &str = "roadfuse";
const FORMAT_VERSION: u32 = 1;
const ENCODER_PREFIX: &str = "encoder.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub backbone: Backbone,
    pub n_rfu: usize,
    pub fusion_channels: usize,
    pub crp_stages: usize,
    pub crp_pool_window: usize,
    pub lidar_block_layers: usize,
    pub precision: Precision,
    pub step: u64,
}

impl CheckpointManifest {
    pub fn for_model(net: &FusionNet, step: u64) -> Self {
        let c = net.config();
        Self {
            format_version: FORMAT_VERSION,
            backbone: c.backbone,
            n_rfu: c.n_rfu,
            fusion_channels: c.rfu.fusion_channels,
            crp_stages: c.rfu.crp_stages,
            crp_pool_window: c.rfu.crp_pool_window,
            lidar_block_layers: c.rfu.lidar_block_layers,
            precision: c.precision,
            step,
        }
    }

    /// Architecture fields that must agree for weights to be interchangeable.
    fn architecture(&self) -> (Backbone, usize, usize, usize, usize, usize) {
        (
            self.backbone,
            self.n_rfu,
            self.fusion_channels,
            self.crp_stages,
            self.crp_pool_window,
            self.lidar_block_layers,
        )
    }
}

fn io_err(path: &Path, source: std::io::Error) -> NetworkError {
    NetworkError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(e: impl std::fmt::Display) -> NetworkError {
    NetworkError::Format(e.to_string())
}

pub fn save_checkpoint(net: &FusionNet, step: u64, path: &Path) -> Result<()> {
    let manifest = CheckpointManifest::for_model(net, step);
    let mut metadata = HashMap::new();
    metadata.insert(MANIFEST_KEY.to_string(), serde_json::to_string(&manifest).map_err(format_err)?);
    let tensors: BTreeMap<String, Tensor> = net
        .store()
        .entries()
        .iter()
        .map(|e| (e.name.clone(), e.var.as_tensor().clone()))
        .collect();
    let bytes = safetensors::serialize(tensors, Some(metadata)).map_err(format_err)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads only the manifest of a checkpoint.
pub fn read_manifest(bytes: &[u8]) -> Result<CheckpointManifest> {
    let (_, metadata) = SafeTensors::read_metadata(bytes).map_err(format_err)?;
    let json = metadata
        .metadata()
        .as_ref()
        .and_then(|m| m.get(MANIFEST_KEY))
        .ok_or_else(|| NetworkError::Format("checkpoint has no manifest".into()))?;
    serde_json::from_str(json).map_err(format_err)
}

/// Restores every parameter of `net` from `path`, returning the manifest.
/// The checkpoint's architecture must match the network's.
pub fn load_checkpoint(net: &FusionNet, path: &Path) -> Result<CheckpointManifest> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let manifest = read_manifest(&bytes)?;
    let expected = CheckpointManifest::for_model(net, manifest.step);
    if manifest.architecture() != expected.architecture() {
        return Err(NetworkError::CheckpointMismatch(format!(
            "checkpoint is {} n_rfu={} D={} crp={}x{} lidar_layers={}, model is {} n_rfu={} D={} crp={}x{} lidar_layers={}",
            manifest.backbone,
            manifest.n_rfu,
            manifest.fusion_channels,
            manifest.crp_stages,
            manifest.crp_pool_window,
            manifest.lidar_block_layers,
            expected.backbone,
            expected.n_rfu,
            expected.fusion_channels,
            expected.crp_stages,
            expected.crp_pool_window,
            expected.lidar_block_layers,
        )));
    }
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
    for entry in net.store().entries() {
        let value = tensors
            .get(&entry.name)
            .ok_or_else(|| NetworkError::MissingTensor(entry.name.clone()))?;
        net.store().assign(&entry.name, value)?;
    }
    Ok(manifest)
}

/// Reads a named-tensor safetensors file.
pub fn read_weight_store(path: &Path) -> Result<HashMap<String, Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?)
}

pub fn write_weight_store(weights: &HashMap<String, Tensor>, path: &Path) -> Result<()> {
    let sorted: BTreeMap<&String, &Tensor> = weights.iter().collect();
    let bytes = safetensors::serialize(sorted, None).map_err(format_err)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainedReport {
    /// Encoder tensors overwritten.
    pub loaded: usize,
    /// Store entries that matched no encoder parameter, sorted.
    pub unmatched: Vec<String>,
}

/// Overwrites every encoder parameter and buffer from `weights`, which uses
/// backbone-local names (`layer1.0.conv1.weight`); an `encoder.` prefix is
/// also accepted. Decoder parameters are never touched.
pub fn load_pretrained_backbone(net: &FusionNet, weights: &HashMap<String, Tensor>) -> Result<PretrainedReport> {
    let encoder: Vec<_> = net
        .store()
        .entries()
        .iter()
        .filter(|e| e.group == ParamGroup::Encoder)
        .collect();
    let mut used = std::collections::HashSet::new();
    let mut staged = Vec::with_capacity(encoder.len());
    for entry in &encoder {
        let local = entry.name.strip_prefix(ENCODER_PREFIX).unwrap_or(&entry.name);
        let (key, value) = weights
            .get_key_value(local)
            .or_else(|| weights.get_key_value(&entry.name))
            .ok_or_else(|| NetworkError::MissingTensor(local.to_string()))?;
        if value.shape() != entry.var.shape() {
            return Err(NetworkError::ShapeMismatch(format!(
                "`{local}`: expected {:?}, found {:?}",
                entry.var.dims(),
                value.dims()
            )));
        }
        used.insert(key.clone());
        staged.push((entry.name.as_str(), value));
    }
    for (name, value) in staged {
        net.store().assign(name, value)?;
    }
    let mut unmatched: Vec<String> = weights.keys().filter(|k| !used.contains(*k)).cloned().collect();
    unmatched.sort();
    Ok(PretrainedReport {
        loaded: encoder.len(),
        unmatched,
    })
}

/// Encoder parameters and buffers under backbone-local names.
pub fn encoder_weights(net: &FusionNet) -> HashMap<String, Tensor> {
    net.store()
        .entries()
        .iter()
        .filter(|e| e.group == ParamGroup::Encoder)
        .map(|e| {
            let local = e.name.strip_prefix(ENCODER_PREFIX).unwrap_or(&e.name).to_string();
            (local, e.var.as_tensor().copy().expect("cpu copy"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ModelConfig, RfuConfig};

    fn tiny(seed: u64, n_rfu: usize) -> FusionNet {
        let cfg = ModelConfig {
            n_rfu,
            rfu: RfuConfig {
                fusion_channels: 4,
                ..RfuConfig::default()
            },
            ..ModelConfig::toy()
        };
        FusionNet::new(cfg, seed).unwrap()
    }

    fn flat(net: &FusionNet, name: &str) -> Vec<f32> {
        net.store().get(name).unwrap().var.flatten_all().unwrap().to_vec1::<f32>().unwrap()
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        let a = tiny(1, 2);
        save_checkpoint(&a, 17, &path).unwrap();
        let b = tiny(2, 2);
        assert_ne!(flat(&a, "decoder.classifier.weight"), flat(&b, "decoder.classifier.weight"));
        let manifest = load_checkpoint(&b, &path).unwrap();
        assert_eq!(manifest.step, 17);
        for e in a.store().entries() {
            assert_eq!(flat(&a, &e.name), flat(&b, &e.name), "{}", e.name);
        }
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        save_checkpoint(&tiny(1, 2), 0, &path).unwrap();
        assert!(matches!(
            load_checkpoint(&tiny(1, 3), &path),
            Err(NetworkError::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn pretrained_encoder_leaves_decoder_alone() {
        let source = tiny(1, 3);
        let target = tiny(2, 3);
        let decoder_before = flat(&target, "decoder.rfu0.crp.conv0.weight");
        let report = load_pretrained_backbone(&target, &encoder_weights(&source)).unwrap();
        assert!(report.unmatched.is_empty());
        assert_eq!(report.loaded, encoder_weights(&source).len());
        assert_eq!(flat(&target, "encoder.layer2.0.conv1.weight"), flat(&source, "encoder.layer2.0.conv1.weight"));
        assert_eq!(flat(&target, "decoder.rfu0.crp.conv0.weight"), decoder_before);
    }

    #[test]
    fn pretrained_missing_tensor_is_named() {
        let mut weights = encoder_weights(&tiny(1, 1));
        weights.remove("layer3.0.bn2.running_mean");
        weights.insert("fc.weight".into(), Tensor::zeros(1, candle_core::DType::F32, &Device::Cpu).unwrap());
        match load_pretrained_backbone(&tiny(2, 1), &weights) {
            Err(NetworkError::MissingTensor(name)) => assert_eq!(name, "layer3.0.bn2.running_mean"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pretrained_extra_tensors_are_reported() {
        let mut weights = encoder_weights(&tiny(1, 1));
        weights.insert("fc.bias".into(), Tensor::zeros(1, candle_core::DType::F32, &Device::Cpu).unwrap());
        let report = load_pretrained_backbone(&tiny(2, 1), &weights).unwrap();
        assert_eq!(report.unmatched, vec!["fc.bias".to_string()]);
    }

    #[test]
    fn weight_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        let w = encoder_weights(&tiny(4, 1));
        write_weight_store(&w, &path).unwrap();
        let back = read_weight_store(&path).unwrap();
        assert_eq!(back.len(), w.len());
    }
}

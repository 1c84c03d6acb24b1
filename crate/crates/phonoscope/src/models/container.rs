//! Versioned binary container for trained models.
//!
//! Layout: 8-byte magic, u32 format version, length-prefixed JSON header
//! (kind, input shape, full config or kernel facts), then the raw parameter
//! buffers in the network's fixed traversal order, followed by the
//! standardizer's mean and spread vectors. Round trips are bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{read_tensor, write_tensor, ByteReader, Tensor};
use crate::spectral::Standardizer;
use crate::util::Mat;

use super::{ModelConfig, ModelError, ModelKind, Network, Result, SvmKernel, SvmModel, TrainedModel};

const MAGIC: &[u8; 8] = b"PHSCMDL\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    input_t: usize,
    input_f: usize,
    config: Option<ModelConfig>,
    svm: Option<SvmHeader>,
}

#[derive(Serialize, Deserialize)]
struct SvmHeader {
    kernel: SvmKernel,
    gamma: f64,
    bias: f64,
}

pub fn model_to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (header, tensors, standardizer) = match model {
        TrainedModel::Neural { network, standardizer } => {
            let header = Header {
                kind: network.kind,
                input_t: network.input_t,
                input_f: network.input_f,
                config: Some(network.config().clone()),
                svm: None,
            };
            let tensors: Vec<Tensor> =
                network.state_tensors().into_iter().cloned().collect();
            (header, tensors, standardizer)
        }
        TrainedModel::Svm { model, standardizer } => {
            let header = Header {
                kind: ModelKind::Svm,
                input_t: 0,
                input_f: model.support_vectors.cols(),
                config: None,
                svm: Some(SvmHeader {
                    kernel: model.kernel,
                    gamma: model.gamma,
                    bias: model.bias,
                }),
            };
            let sv = Tensor::from_vec(
                &[model.support_vectors.rows(), model.support_vectors.cols()],
                model.support_vectors.data().to_vec(),
            );
            let ay = Tensor::from_vec(&[model.alpha_y.len()], model.alpha_y.clone());
            (header, vec![sv, ay], standardizer)
        }
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| ModelError::Container(format!("header encode: {e}")))?;
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);

    let n_tensors = tensors.len() + 2;
    out.extend_from_slice(&(n_tensors as u32).to_le_bytes());
    for t in &tensors {
        write_tensor(&mut out, t);
    }
    write_tensor(&mut out, &Tensor::from_vec(&[standardizer.mean.len()], standardizer.mean.clone()));
    write_tensor(&mut out, &Tensor::from_vec(&[standardizer.sd.len()], standardizer.sd.clone()));
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(8).map_err(|e| ModelError::Container(e.to_string()))?;
    if magic != MAGIC {
        return Err(ModelError::Container("bad magic".into()));
    }
    let version = r.u32().map_err(|e| ModelError::Container(e.to_string()))?;
    if version != VERSION {
        return Err(ModelError::Container(format!("unsupported version {version}")));
    }
    let header_len = r.u32().map_err(|e| ModelError::Container(e.to_string()))? as usize;
    let header_bytes = r.take(header_len).map_err(|e| ModelError::Container(e.to_string()))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| ModelError::Container(format!("header decode: {e}")))?;
    let n_tensors = r.u32().map_err(|e| ModelError::Container(e.to_string()))? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        tensors.push(read_tensor(&mut r).map_err(|e| ModelError::Container(e.to_string()))?);
    }
    if !r.is_done() {
        return Err(ModelError::Container("trailing bytes after tensors".into()));
    }
    if tensors.len() < 2 {
        return Err(ModelError::Container("missing standardizer tensors".into()));
    }
    let sd_t = tensors.pop().unwrap();
    let mean_t = tensors.pop().unwrap();
    let standardizer =
        Standardizer { mean: mean_t.data().to_vec(), sd: sd_t.data().to_vec() };

    match header.kind {
        ModelKind::Svm => {
            let svm = header
                .svm
                .ok_or_else(|| ModelError::Container("svm header missing".into()))?;
            if tensors.len() != 2 {
                return Err(ModelError::Container(format!(
                    "svm container holds {} tensors, expected 2",
                    tensors.len()
                )));
            }
            let ay = tensors.pop().unwrap();
            let sv = tensors.pop().unwrap();
            let shape = sv.shape().to_vec();
            if shape.len() != 2 {
                return Err(ModelError::Container("support vectors must be 2-D".into()));
            }
            Ok(TrainedModel::Svm {
                model: SvmModel {
                    support_vectors: Mat::from_flat(shape[0], shape[1], sv.data().to_vec()),
                    alpha_y: ay.data().to_vec(),
                    bias: svm.bias,
                    kernel: svm.kernel,
                    gamma: svm.gamma,
                },
                standardizer,
            })
        }
        _ => {
            let config = header
                .config
                .ok_or_else(|| ModelError::Container("network config missing".into()))?;
            let mut network = Network::build(&config, (header.input_t, header.input_f))?;
            let slots = network.state_tensors_mut();
            if slots.len() != tensors.len() {
                return Err(ModelError::Container(format!(
                    "container holds {} tensors, network expects {}",
                    tensors.len(),
                    slots.len()
                )));
            }
            for (slot, t) in slots.into_iter().zip(tensors) {
                if slot.shape() != t.shape() {
                    return Err(ModelError::Container(format!(
                        "tensor shape {:?} does not match expected {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *slot = t;
            }
            Ok(TrainedModel::Neural { network, standardizer })
        }
    }
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    let bytes = model_to_bytes(model)?;
    std::fs::write(path, bytes)
        .map_err(|e| ModelError::Container(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path)
        .map_err(|e| ModelError::Container(format!("{}: {e}", path.display())))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::svm_train;
    use crate::models::SvmParams;

    #[test]
    fn neural_container_round_trips_bit_exactly() {
        let mut config = ModelConfig::new(ModelKind::LstmAttention).with_seed(8);
        config.hidden_units = 6;
        config.attention_dim = 4;
        let network = Network::build(&config, (12, 7)).unwrap();
        let model = TrainedModel::Neural {
            network,
            standardizer: Standardizer { mean: vec![0.5; 7], sd: vec![2.0; 7] },
        };
        let bytes = model_to_bytes(&model).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        let bytes2 = model_to_bytes(&back).unwrap();
        assert_eq!(bytes, bytes2);
        assert_eq!(back.kind(), ModelKind::LstmAttention);
    }

    #[test]
    fn svm_container_round_trips_bit_exactly() {
        let x = Mat::from_rows(vec![
            vec![-2.0, 0.1],
            vec![-1.5, -0.2],
            vec![2.0, 0.3],
            vec![1.5, -0.1],
        ]);
        let labels = [0u8, 0, 1, 1];
        let params = SvmParams { kernel: SvmKernel::Linear, ..SvmParams::default() };
        let svm = svm_train(&x, &labels, &params).unwrap();
        let model = TrainedModel::Svm {
            model: svm,
            standardizer: Standardizer { mean: vec![0.0; 2], sd: vec![1.0; 2] },
        };
        let bytes = model_to_bytes(&model).unwrap();
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(model_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupted_container_is_rejected() {
        let mut config = ModelConfig::new(ModelKind::SimpleRnn).with_seed(1);
        config.hidden_units = 3;
        let network = Network::build(&config, (6, 4)).unwrap();
        let model = TrainedModel::Neural {
            network,
            standardizer: Standardizer { mean: vec![0.0; 4], sd: vec![1.0; 4] },
        };
        let mut bytes = model_to_bytes(&model).unwrap();
        bytes[0] = b'X';
        assert!(model_from_bytes(&bytes).is_err());
        let bytes = model_to_bytes(&model).unwrap();
        assert!(model_from_bytes(&bytes[..bytes.len() - 4]).is_err());
    }
}

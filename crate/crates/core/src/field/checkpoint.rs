//! Checkpoint container: a JSON header with shape metadata followed by raw
//! little-endian `f64` tensor data. Loading reproduces bitwise-identical
//! parameters.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Activation, FieldConfig, FieldError, FieldParams, LinearLayer, MlpParams, NeuralSdf,
    RadianceField,
};
use crate::tape::Tensor;

const MAGIC: &[u8; 8] = b"SRCKPT01";

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    seed: u64,
    iteration: u64,
    config: FieldConfig,
    tensors: Vec<TensorMeta>,
    /// Extra named tensors (optimizer state etc.) stored after the params.
    aux_tensors: Vec<TensorMeta>,
}

/// A deserialized checkpoint: reconstructed fields plus any auxiliary
/// tensors (optimizer moments, step counters) stored alongside.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub seed: u64,
    pub iteration: u64,
    pub config: FieldConfig,
    pub params: FieldParams,
    pub aux: Vec<(String, Tensor)>,
}

pub fn save_checkpoint(
    path: &Path,
    seed: u64,
    iteration: u64,
    config: &FieldConfig,
    params: &FieldParams,
    aux: &[(String, Tensor)],
) -> Result<(), FieldError> {
    let named = params.named_tensors();
    let header = Header {
        seed,
        iteration,
        config: *config,
        tensors: named
            .iter()
            .map(|(n, t)| TensorMeta {
                name: n.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
        aux_tensors: aux
            .iter()
            .map(|(n, t)| TensorMeta {
                name: n.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| FieldError::CheckpointFormat(e.to_string()))?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    let mut write_tensor = |t: &Tensor| -> std::io::Result<()> {
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    for (_, t) in &named {
        write_tensor(t)?;
    }
    for (_, t) in aux {
        write_tensor(t)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, FieldError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FieldError::CheckpointFormat("bad magic".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| FieldError::CheckpointFormat(e.to_string()))?;

    let mut read_tensor = |meta: &TensorMeta| -> Result<Tensor, FieldError> {
        let n = meta.rows * meta.cols;
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor::new(meta.rows, meta.cols, data))
    };

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for meta in &header.tensors {
        tensors.push((meta.name.clone(), read_tensor(meta)?));
    }
    let mut aux = Vec::with_capacity(header.aux_tensors.len());
    for meta in &header.aux_tensors {
        aux.push((meta.name.clone(), read_tensor(meta)?));
    }

    let params = rebuild_params(&header.config, &tensors)?;
    Ok(Checkpoint {
        seed: header.seed,
        iteration: header.iteration,
        config: header.config,
        params,
        aux,
    })
}

fn rebuild_params(
    cfg: &FieldConfig,
    tensors: &[(String, Tensor)],
) -> Result<FieldParams, FieldError> {
    let find = |name: &str| -> Result<Tensor, FieldError> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| FieldError::CheckpointFormat(format!("missing tensor {name}")))
    };

    let skip_at = if cfg.sdf_layers >= 4 {
        Some(cfg.sdf_layers / 2)
    } else {
        None
    };
    let mut sdf_layers = Vec::new();
    for i in 0..cfg.sdf_layers {
        let is_last = i + 1 == cfg.sdf_layers;
        sdf_layers.push(LinearLayer {
            weight: find(&format!("sdf.l{i}.w"))?,
            bias: find(&format!("sdf.l{i}.b"))?,
            activation: if is_last {
                Activation::Identity
            } else {
                Activation::Softplus {
                    beta: cfg.softplus_beta,
                }
            },
        });
    }
    let mut rad_layers = Vec::new();
    for i in 0..cfg.radiance_layers {
        let is_last = i + 1 == cfg.radiance_layers;
        rad_layers.push(LinearLayer {
            weight: find(&format!("rad.l{i}.w"))?,
            bias: find(&format!("rad.l{i}.b"))?,
            activation: if is_last {
                Activation::Identity
            } else {
                Activation::Relu
            },
        });
    }
    Ok(FieldParams {
        sdf: NeuralSdf {
            encoding: cfg.encoding,
            mlp: MlpParams {
                layers: sdf_layers,
                skip_at,
            },
            feature_width: cfg.feature_width,
        },
        radiance: RadianceField {
            mlp: MlpParams {
                layers: rad_layers,
                skip_at: None,
            },
            encoding: cfg.encoding,
            feature_width: cfg.feature_width,
        },
        log_s: find("log_s")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::init::init_field_params;
    use crate::math::Vec3;

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let cfg = FieldConfig::default();
        let params = init_field_params(&cfg, 77);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let aux = vec![("adam.step".to_string(), Tensor::scalar(42.0))];
        save_checkpoint(&path, 77, 500, &cfg, &params, &aux).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.seed, 77);
        assert_eq!(loaded.iteration, 500);
        assert_eq!(loaded.aux.len(), 1);
        assert_eq!(loaded.aux[0].1.data[0], 42.0);

        for ((na, ta), (nb, tb)) in params
            .named_tensors()
            .iter()
            .zip(loaded.params.named_tensors().iter())
        {
            assert_eq!(na, nb);
            for (a, b) in ta.data.iter().zip(tb.data.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        // Evaluations agree bitwise.
        let p = Vec3::new(0.21, -0.33, 0.48);
        let a = params.sdf.eval(p);
        let b = loaded.params.sdf.eval(p);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "PPMCKPT\0"
//! version      u32       currently 1
//! config_len   u32
//! config       config_len bytes of UTF-8 TOML (the ModelConfig)
//! seed         u64
//! step         u64       optimizer steps taken
//! n_tensors    u32
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   ndim       u32
//!   dims       ndim × u64
//!   data       prod(dims) × f64 (IEEE-754 binary64)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PpmError, Result};
use crate::numerics::Tensor;

use super::config::ModelConfig;
use super::network::PpmModel;
use super::params::ParamStore;

pub const MAGIC: &[u8; 8] = b"PPMCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn from_model(model: &PpmModel, seed: u64, step: u64) -> Self {
        Checkpoint {
            config: model.config.clone(),
            seed,
            step,
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Result<PpmModel> {
        PpmModel::from_params(self.config, self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = toml::to_string(&self.config)
            .map_err(|e| PpmError::Checkpoint(format!("serializing config: {e}")))?;
        let mut out = Vec::with_capacity(64 + self.params.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &config);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.values()) {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(PpmError::Checkpoint("bad magic".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(PpmError::Checkpoint(format!("unsupported version {version}")));
        }
        let config_text = get_str(&mut r)?;
        let config: ModelConfig = toml::from_str(&config_text)
            .map_err(|e| PpmError::Checkpoint(format!("config block: {e}")))?;
        let seed = get_u64(&mut r)?;
        let step = get_u64(&mut r)?;
        let n = get_u32(&mut r)? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = get_str(&mut r)?;
            let ndim = get_u32(&mut r)? as usize;
            let shape = (0..ndim)
                .map(|_| get_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            if count.saturating_mul(8) > r.len() {
                return Err(PpmError::Checkpoint(format!("truncated tensor {name}")));
            }
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            params.push(name, Tensor::new(shape, data)?);
        }
        if !r.is_empty() {
            return Err(PpmError::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        // validates names and shapes against the config
        PpmModel::from_params(config.clone(), params.clone())
            .map_err(|e| PpmError::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            config,
            seed,
            step,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| PpmError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| PpmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| PpmError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| PpmError::Checkpoint("unexpected end of file".into()))
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str(r: &mut &[u8]) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > r.len() {
        return Err(PpmError::Checkpoint("truncated string".into()));
    }
    let mut buf = vec![0u8; n];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| PpmError::Checkpoint("invalid UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(seed: u64) -> PpmModel {
        let cfg = ModelConfig {
            hidden: 6,
            latent_dim: 2,
            ..ModelConfig::new(5, 3, 2)
        };
        PpmModel::new(cfg, seed).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = Checkpoint::from_model(&model(1), 42, 7).to_bytes().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = Checkpoint::from_model(&model(1), 42, 7).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_exact(seed in any::<u64>(), step in any::<u64>()) {
            let m = model(seed);
            let ck = Checkpoint::from_model(&m, seed, step);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.seed, seed);
            prop_assert_eq!(back.step, step);
            prop_assert_eq!(&back.config, &m.config);
            prop_assert_eq!(&back.params, &m.params);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }
}

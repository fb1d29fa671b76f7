//! Versioned binary checkpoints with an embedded config hash.
//!
//! Layout (little endian): magic, format version, config hash (64 hex bytes),
//! config text, progress counters, parameters, Adam moments.

use sha2::{Digest, Sha256};

use crate::numerics::{AdamConfig, AdamState, ParamSet, Tensor};

use super::config::TrainConfig;
use super::net::PolicyValueNet;
use super::PpoError;

pub const MAGIC: &[u8; 8] = b"SDVECKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to evaluate a policy or continue training it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub config_hash: String,
    pub update: u64,
    pub env_steps: u64,
    pub boost_latched: bool,
    pub length_history: Vec<f64>,
    pub params: ParamSet,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn new(
        config: &TrainConfig,
        update: u64,
        env_steps: u64,
        boost_latched: bool,
        length_history: &[f64],
        params: &ParamSet,
        adam: &AdamState,
    ) -> Self {
        Self {
            config_text: config.to_text(),
            config_hash: config.hash(),
            update,
            env_steps,
            boost_latched,
            length_history: length_history.to_vec(),
            params: params.clone(),
            adam: adam.clone(),
        }
    }

    pub fn config(&self) -> Result<TrainConfig, PpoError> {
        TrainConfig::from_text(&self.config_text).map_err(PpoError::Config)
    }

    /// Rebuilds the network for this checkpoint's config and loads its weights.
    pub fn network(&self) -> Result<PolicyValueNet, PpoError> {
        let cfg = self.config()?;
        let mut net = super::build_network(&cfg);
        if net.params.len() != self.params.len()
            || net.params.tensors().iter().zip(self.params.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(PpoError::Checkpoint("parameter layout does not match the stored config".into()));
        }
        net.params = self.params.clone();
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.extend_from_slice(self.config_hash.as_bytes());
        put_bytes(&mut w, self.config_text.as_bytes());
        w.extend_from_slice(&self.update.to_le_bytes());
        w.extend_from_slice(&self.env_steps.to_le_bytes());
        w.push(self.boost_latched as u8);
        put_f64s(&mut w, &self.length_history);
        w.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            put_bytes(&mut w, name.as_bytes());
            w.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                w.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            put_f64s(&mut w, t.data());
        }
        let c = self.adam.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            w.extend_from_slice(&v.to_le_bytes());
        }
        w.extend_from_slice(&self.adam.step_count().to_le_bytes());
        let (first, second) = self.adam.moments();
        for t in first.iter().chain(second) {
            put_f64s(&mut w, t.data());
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PpoError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(PpoError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(PpoError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let config_hash = String::from_utf8(r.take(64)?.to_vec()).map_err(|_| bad("hash"))?;
        let config_text = String::from_utf8(r.bytes_field()?.to_vec()).map_err(|_| bad("config text"))?;
        let actual = hex::encode(Sha256::digest(config_text.as_bytes()));
        if actual != config_hash {
            return Err(PpoError::Checkpoint("config hash does not match the embedded config".into()));
        }
        let update = r.u64()?;
        let env_steps = r.u64()?;
        let boost_latched = r.take(1)?[0] != 0;
        let length_history = r.f64s()?;
        let n = r.u32()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..n {
            let name = String::from_utf8(r.bytes_field()?.to_vec()).map_err(|_| bad("name"))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let data = r.f64s()?;
            params.push(name, Tensor::new(shape, data).map_err(|_| bad("tensor shape"))?);
        }
        let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
        let step = r.u64()?;
        let mut moments = Vec::with_capacity(2 * n);
        for i in 0..2 * n {
            let shape = params.get(i % n).shape().to_vec();
            moments.push(Tensor::new(shape, r.f64s()?).map_err(|_| bad("moment shape"))?);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let second = moments.split_off(n);
        let adam = AdamState::from_parts(config, step, moments, second);
        Ok(Self { config_text, config_hash, update, env_steps, boost_latched, length_history, params, adam })
    }
}

fn bad(what: &str) -> PpoError {
    PpoError::Checkpoint(format!("corrupt checkpoint: {what}"))
}

fn put_bytes(w: &mut Vec<u8>, b: &[u8]) {
    w.extend_from_slice(&(b.len() as u32).to_le_bytes());
    w.extend_from_slice(b);
}

fn put_f64s(w: &mut Vec<u8>, v: &[f64]) {
    w.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        w.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PpoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, PpoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, PpoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, PpoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes_field(&mut self) -> Result<&'a [u8], PpoError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn f64s(&mut self) -> Result<Vec<f64>, PpoError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(bad("truncated"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = TrainConfig { hidden: 3, encoder_width: 2, ..TrainConfig::default() };
        let net = super::super::build_network(&cfg);
        let adam = AdamState::new(&net.params, AdamConfig::default());
        Checkpoint::new(&cfg, 7, 1792, true, &[1.0, 2.5], &net.params, &adam)
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(c, back);
        assert_eq!(back.network().unwrap().params, c.params);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(Checkpoint::from_bytes(&bad_version).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        // flip a character of the embedded config text
        let mut tampered = bytes.clone();
        tampered[8 + 4 + 64 + 4] ^= 1;
        assert!(Checkpoint::from_bytes(&tampered).is_err());
    }
}

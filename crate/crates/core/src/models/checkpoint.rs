//! Checkpoint files: `"FMFG"`, version u32, config text (u32 length +
//! UTF-8 `key=value` lines, sorted), tensor count u32, then per tensor a
//! u16-length name, u8 rank, u32 dims and f32 payload. Little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::fm::FmFogModel;
use super::trigger::TriggerModel;
use super::{FmFogConfig, TriggerConfig};
use crate::error::{Error, Result};
use crate::tensor_nn::{Float, Parameterized, Tensor};

pub const CKPT_MAGIC: &[u8; 4] = b"FMFG";
pub const CKPT_VERSION: u32 = 1;
/// Keys under this prefix are carried along but never compared.
pub const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn kind(&self) -> Option<&str> {
        self.config.get("kind").map(String::as_str)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.config.get(&format!("{META_PREFIX}{key}")).map(String::as_str)
    }

    pub fn config_text(&self) -> String {
        self.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let text = self.config_text();
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * 4 + 64).sum();
        let mut out = Vec::with_capacity(16 + text.len() + payload);
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4, "magic")? != CKPT_MAGIC {
            return Err(Error::Load("not a checkpoint (bad magic)".into()));
        }
        let version = cur.u32("version")?;
        if version != CKPT_VERSION {
            return Err(Error::Load(format!("unsupported checkpoint version {version}")));
        }
        let len = cur.u32("config length")? as usize;
        let text = std::str::from_utf8(cur.take(len, "config")?)
            .map_err(|e| Error::Load(format!("config text is not UTF-8: {e}")))?;
        let mut config = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Load(format!("config line without '=': {line:?}")))?;
            config.insert(k.to_string(), v.to_string());
        }
        let count = cur.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let n = u16::from_le_bytes(cur.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(cur.take(n, "name")?)
                .map_err(|e| Error::Load(format!("tensor name: {e}")))?
                .to_string();
            let rank = cur.take(1, "rank")?[0] as usize;
            let shape = (0..rank)
                .map(|_| cur.u32("dim").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = cur.take(numel * 4, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Load(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(Checkpoint { config, tensors })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Load(format!("checkpoint truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn config_entries<T: Serialize>(kind: &str, cfg: &T) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert("kind".to_string(), kind.to_string());
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(cfg) {
        for (k, v) in map {
            out.insert(k, v.to_string());
        }
    }
    out
}

fn config_from_entries<T: DeserializeOwned>(entries: &BTreeMap<String, String>) -> Result<T> {
    let mut map = serde_json::Map::new();
    for (k, v) in entries {
        if k == "kind" || k.starts_with(META_PREFIX) {
            continue;
        }
        let value = serde_json::from_str(v).map_err(|e| Error::Load(format!("config {k}={v}: {e}")))?;
        map.insert(k.clone(), value);
    }
    serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| Error::Load(format!("config: {e}")))
}

/// A model that can be rebuilt from its checkpoint header.
pub trait Checkpointable<F: Float>: Parameterized<F> + Sized {
    const KIND: &'static str;
    type Config: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug;

    fn config(&self) -> Self::Config;
    fn build(config: Self::Config, meta: &BTreeMap<String, String>) -> Result<Self>;
    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

impl<F: Float> Checkpointable<F> for FmFogModel<F> {
    const KIND: &'static str = "fmfog";
    type Config = FmFogConfig;

    fn config(&self) -> FmFogConfig {
        self.config
    }

    fn build(config: FmFogConfig, meta: &BTreeMap<String, String>) -> Result<Self> {
        let mut m = FmFogModel::new(config, 0)?;
        m.context_enabled = meta.get("meta.context_enabled").is_none_or(|v| v == "true");
        Ok(m)
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([(format!("{META_PREFIX}context_enabled"), self.context_enabled.to_string())])
    }
}

impl<F: Float> Checkpointable<F> for TriggerModel<F> {
    const KIND: &'static str = "trigger";
    type Config = TriggerConfig;

    fn config(&self) -> TriggerConfig {
        self.config
    }

    fn build(config: TriggerConfig, _meta: &BTreeMap<String, String>) -> Result<Self> {
        TriggerModel::new(config, 0)
    }
}

/// Snapshot a model. `provenance` (e.g. a run-config hash) is stored as
/// metadata and ignored when configs are compared.
pub fn to_checkpoint<F: Float, M: Checkpointable<F>>(model: &M, provenance: Option<&str>) -> Checkpoint {
    let mut config = config_entries(M::KIND, &model.config());
    config.extend(model.meta());
    if let Some(p) = provenance {
        config.insert(format!("{META_PREFIX}provenance"), p.to_string());
    }
    let tensors = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.value.cast::<f32>()))
        .collect();
    Checkpoint { config, tensors }
}

pub fn from_checkpoint<F: Float, M: Checkpointable<F>>(ckpt: &Checkpoint) -> Result<M> {
    match ckpt.kind() {
        Some(k) if k == M::KIND => {}
        other => {
            return Err(Error::Load(format!("checkpoint kind {other:?}, expected {:?}", M::KIND)));
        }
    }
    let cfg: M::Config = config_from_entries(&ckpt.config)?;
    let mut model = M::build(cfg, &ckpt.config).map_err(|e| Error::Load(format!("config rejected: {e}")))?;
    let mut stored: BTreeMap<&str, &Tensor<f32>> = ckpt.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    for (name, p) in model.params_mut() {
        let t = stored
            .remove(name.as_str())
            .ok_or_else(|| Error::Load(format!("checkpoint lacks tensor {name}")))?;
        if t.shape() != p.value.shape() {
            return Err(Error::Load(format!(
                "tensor {name}: stored shape {:?}, config implies {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.cast();
        p.zero_grad();
    }
    if let Some(extra) = stored.keys().next() {
        return Err(Error::Load(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

/// Like [`from_checkpoint`] but also rejects any architecture that differs
/// from `expected`.
pub fn from_checkpoint_expect<F: Float, M: Checkpointable<F>>(ckpt: &Checkpoint, expected: &M::Config) -> Result<M> {
    let model: M = from_checkpoint(ckpt)?;
    if &model.config() != expected {
        return Err(Error::Load(format!(
            "checkpoint config {:?} does not match expected {:?}",
            model.config(),
            expected
        )));
    }
    Ok(model)
}

pub fn save_checkpoint<F: Float, M: Checkpointable<F>>(
    model: &M,
    path: impl AsRef<Path>,
    provenance: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_checkpoint(model, provenance).to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    Checkpoint::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_checkpoint<F: Float, M: Checkpointable<F>>(path: impl AsRef<Path>) -> Result<M> {
    from_checkpoint(&read_checkpoint(path)?)
}

/// Either model, as found in a checkpoint file.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Fm(FmFogModel<f32>),
    Trigger(TriggerModel<f32>),
}

pub fn load_any(path: impl AsRef<Path>) -> Result<AnyModel> {
    let ckpt = read_checkpoint(path)?;
    match ckpt.kind() {
        Some("fmfog") => Ok(AnyModel::Fm(from_checkpoint(&ckpt)?)),
        Some("trigger") => Ok(AnyModel::Trigger(from_checkpoint(&ckpt)?)),
        other => Err(Error::Load(format!("unknown checkpoint kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FmFogConfig {
        FmFogConfig {
            d_model: 8,
            n_blocks: 1,
            n_heads: 2,
            d_ff: 16,
            seq_len: 8,
            ..FmFogConfig::default()
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut m = FmFogModel::<f32>::new(tiny(), 3).unwrap();
        m.context_enabled = false;
        let a = to_checkpoint(&m, Some("abc123")).to_bytes();
        let ck = Checkpoint::from_bytes(&a).unwrap();
        let back: FmFogModel<f32> = from_checkpoint(&ck).unwrap();
        assert!(!back.context_enabled);
        let b = to_checkpoint(&back, Some("abc123")).to_bytes();
        assert_eq!(a, b);
        assert_eq!(&a[..4], b"FMFG");
    }

    #[test]
    fn mismatches_are_load_errors() {
        let m = FmFogModel::<f32>::new(tiny(), 3).unwrap();
        let mut ck = to_checkpoint(&m, None);
        let other = FmFogConfig { d_model: 16, ..tiny() };
        assert!(matches!(
            from_checkpoint_expect::<f32, FmFogModel<f32>>(&ck, &other),
            Err(Error::Load(_))
        ));
        assert!(matches!(from_checkpoint::<f32, TriggerModel<f32>>(&ck), Err(Error::Load(_))));
        ck.config.insert("d_ff".into(), "32".into());
        assert!(matches!(from_checkpoint::<f32, FmFogModel<f32>>(&ck), Err(Error::Load(_))));
        let bytes = to_checkpoint(&m, None).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Load(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Load(_))));
    }

    #[test]
    fn trigger_checkpoint_is_small() {
        let m = TriggerModel::<f32>::new(TriggerConfig::default(), 1).unwrap();
        let bytes = to_checkpoint(&m, None).to_bytes();
        assert!(bytes.len() < 5 * 1024 * 1024);
        let back: TriggerModel<f32> = from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.conv1.weight.value, m.conv1.weight.value);
    }
}

use std::path::{Path, PathBuf};

use fmfog::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// Effective configuration plus artifact plumbing for one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub command: &'static str,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    artifact: &'a str,
    command: &'a str,
    config_sha256: &'a str,
    version: &'a str,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    command: &'a str,
    config_sha256: &'a str,
    result: &'a T,
}

impl Ctx {
    pub fn new(cfg: RunConfig, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        let hash = cfg.hash();
        let ctx = Ctx { cfg, hash, command };
        ctx.write_json("run_config.json", &ctx.cfg)?;
        Ok(ctx)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    /// Value embedded in checkpoint metadata.
    pub fn provenance(&self) -> String {
        format!("command={};config_sha256={}", self.command, self.hash)
    }

    fn sidecar(&self, path: &Path) -> Result<()> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let meta = Sidecar {
            artifact: name,
            command: self.command,
            config_sha256: &self.hash,
            version: env!("CARGO_PKG_VERSION"),
        };
        let p = path.with_file_name(format!("{name}.meta.json"));
        let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
        std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    }

    /// Marks an artifact written by a library call.
    pub fn register(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        self.sidecar(&p)?;
        println!("wrote {}", p.display());
        Ok(p)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        self.register(name)
    }

    /// JSON document wrapped with the command and config hash.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let env = Envelope {
            command: self.command,
            config_sha256: &self.hash,
            result: value,
        };
        let text = serde_json::to_string_pretty(&env).map_err(|e| Error::Config(e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }
}

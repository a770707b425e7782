use crate::config::{FileConfig, OutputArgs};
use anyhow::Context;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::PathBuf;

pub const CONFIG_FILE: &str = "config.toml";

/// `--out` if given, else a new `<runs_root>/<config hash>-<UTC timestamp>`
/// directory. Generated names never reuse an existing directory.
pub fn run_dir(out: &OutputArgs, command: &str, cfg: &FileConfig) -> anyhow::Result<PathBuf> {
    let dir = match &out.dir {
        Some(d) => d.clone(),
        None => {
            let root = out.runs_root.clone().unwrap_or_else(|| PathBuf::from("runs"));
            let mut h = Sha256::new();
            h.update(command.as_bytes());
            h.update(b"\n");
            h.update(cfg.canonical().as_bytes());
            let hash = hex::encode(h.finalize());
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
            let base = format!("{}-{stamp}", &hash[..12]);
            let mut candidate = root.join(&base);
            let mut i = 2;
            while candidate.exists() {
                candidate = root.join(format!("{base}-{i}"));
                i += 1;
            }
            candidate
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = format!("# lcgnn {command}\n{}", cfg.canonical());
    fs::write(dir.join(CONFIG_FILE), text).with_context(|| format!("writing {}", dir.join(CONFIG_FILE).display()))?;
    Ok(dir)
}

pub fn write(dir: &std::path::Path, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

//! Run manifests: every command that writes artifacts also writes a
//! line-oriented `manifest v1` file declaring the exact config hash, seeds,
//! tool version, and each output path. The file is deterministic, so two runs
//! of the same command on the same config produce byte-identical manifests.

use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub struct Manifest {
    command: &'static str,
    entries: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    /// `config_path` and its bytes pin the run to one config revision.
    pub fn new(command: &'static str, config_path: &Path, config_bytes: &[u8]) -> Self {
        let mut m = Self {
            command,
            entries: Vec::new(),
            outputs: Vec::new(),
        };
        m.push("app", format!("waldo-cli {}", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m.push("config_path", config_path.display());
        m.push("config_hash", format!("sha256:{}", sha256_hex(config_bytes)));
        m
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_seeds(&mut self, seeds: &[u64]) {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        self.push("seeds", list.join(","));
    }

    /// Declares one produced artifact, relative to the manifest's directory.
    pub fn output(&mut self, rel: impl Into<PathBuf>) {
        self.outputs.push(rel.into());
    }

    /// Writes `manifest-<command>.txt` under `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("manifest-{}.txt", self.command));
        let mut buf = String::from("manifest v1\n");
        for (k, v) in &self.entries {
            buf.push_str(&format!("{k}={v}\n"));
        }
        self.outputs.sort();
        for out in &self.outputs {
            buf.push_str(&format!("output={}\n", out.display()));
        }
        let mut f =
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(buf.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        // Standard test vector for the empty string.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_is_deterministic_and_declares_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let write = || {
            let mut m = Manifest::new("train", Path::new("exp.toml"), b"method = \"waldo\"");
            m.push_seeds(&[3, 1]);
            m.output("seed-3/history.csv");
            m.output("seed-1/history.csv");
            m.write(dir.path()).unwrap()
        };
        let p1 = write();
        let first = fs::read_to_string(&p1).unwrap();
        let p2 = write();
        let second = fs::read_to_string(&p2).unwrap();
        assert_eq!(first, second);
        assert!(first.starts_with("manifest v1\n"));
        assert!(first.contains("command=train\n"));
        assert!(first.contains("config_hash=sha256:"));
        assert!(first.contains("seeds=3,1\n"));
        // Outputs are path-sorted regardless of declaration order.
        let o1 = first.find("output=seed-1").unwrap();
        let o3 = first.find("output=seed-3").unwrap();
        assert!(o1 < o3);
    }
}

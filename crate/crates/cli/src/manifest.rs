//! Run manifests: content hashes of every input and output artifact, per
//! stage, plus the config hash and seed. Reruns with identical config and
//! seed produce byte-identical manifests (no timestamps).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub name: String,
    /// Artifact name -> sha256 of the file consumed.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name -> sha256 of the file produced.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn new(seed: u64, canonical_config: &str) -> Self {
        Self {
            tool: "sigsurv".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            stages: Vec::new(),
        }
    }

    pub fn stage(&mut self, name: &str) -> StageBuilder<'_> {
        self.stages.push(StageRecord {
            name: name.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        });
        StageBuilder {
            record: self.stages.last_mut().expect("just pushed"),
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        sigsurv::ingest::write_atomic(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Manifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub struct StageBuilder<'a> {
    record: &'a mut StageRecord,
}

impl StageBuilder<'_> {
    pub fn input(self, name: &str, path: &Path) -> anyhow::Result<Self> {
        let h = hash_file(path)?;
        self.record.inputs.insert(name.to_string(), h);
        Ok(self)
    }

    pub fn output(self, name: &str, path: &Path) -> anyhow::Result<Self> {
        let h = hash_file(path)?;
        self.record.outputs.insert(name.to_string(), h);
        Ok(self)
    }
}

pub fn hash_file(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| anyhow::anyhow!("hashing {}: {e}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("a.txt");
        std::fs::write(&artifact, "payload").unwrap();

        let build = || {
            let mut m = Manifest::new(7, "seed = 7\n");
            m.stage("fit")
                .input("features_train", &artifact)
                .unwrap()
                .output("model", &artifact)
                .unwrap();
            m
        };
        let m1 = build();
        let m2 = build();
        assert_eq!(m1, m2);

        let path = dir.path().join("manifest.json");
        m1.save(&path).unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(m1, loaded);
        assert_eq!(loaded.stages[0].inputs["features_train"].len(), 64);
    }
}

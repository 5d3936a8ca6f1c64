//! Versioned, checksummed memory snapshots.
//!
//! Layout: 4-byte magic, little-endian u32 format version, 32-byte
//! SHA-256 of the payload, little-endian u64 payload length, then the
//! payload itself — a self-describing JSON document carrying the
//! config, run mode, and the full memory state (forest node map and
//! root order included losslessly).

use crate::config::EngineConfig;
use crate::engine::MemoryState;
use crate::modes::RunMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"SMSS";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {found} (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotDoc {
    config: EngineConfig,
    mode: RunMode,
    state: MemoryState,
}

/// Serialize a quiescent engine state to `path`.
pub fn snapshot_save(
    path: &Path,
    config: &EngineConfig,
    mode: RunMode,
    state: &MemoryState,
) -> Result<(), SnapshotError> {
    let doc = SnapshotDoc {
        config: config.clone(),
        mode,
        state: state.clone(),
    };
    let payload = serde_json::to_vec(&doc).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(payload.len() + 48);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

/// Load a snapshot written by [`snapshot_save`], verifying the checksum
/// and rebuilding derived forest state.
pub fn snapshot_load(path: &Path) -> Result<(EngineConfig, RunMode, MemoryState), SnapshotError> {
    let mut file = fs::File::open(path)?;
    let mut header = [0u8; 48];
    file.read_exact(&mut header)
        .map_err(|_| SnapshotError::Corrupt("truncated header".to_string()))?;
    if header[0..4] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(SnapshotError::VersionMismatch { found: version });
    }
    let expected_digest = &header[8..40];
    let len = u64::from_le_bytes(header[40..48].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; len];
    file.read_exact(&mut payload)
        .map_err(|_| SnapshotError::Corrupt("truncated payload".to_string()))?;
    let digest = Sha256::digest(&payload);
    if digest.as_slice() != expected_digest {
        return Err(SnapshotError::Corrupt("checksum mismatch".to_string()));
    }
    let doc: SnapshotDoc =
        serde_json::from_slice(&payload).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    let mut state = doc.state;
    state.forest.rebuild_parents();
    Ok((doc.config, doc.mode, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::engine::Engine;
    use crate::frame::FrameRef;
    use crate::time::Timestamp;
    use std::sync::Arc;

    fn built_engine() -> Engine {
        let cfg = EngineConfig {
            embed_dim: 32,
            n_f: 4,
            ..EngineConfig::default()
        };
        let mut e = Engine::new(
            cfg.clone(),
            RunMode::Oasis,
            Arc::new(MockBackend::new(cfg.embed_dim)),
        )
        .unwrap();
        for i in 0..400u64 {
            e.push_frame(FrameRef::new(
                Timestamp::from_secs(i as f64 * 0.5),
                format!("scene {i}"),
                i,
            ))
            .unwrap();
        }
        e.answer_query("seed", Some("!answer:ok"), Timestamp::from_secs(199.5))
            .unwrap();
        e
    }

    #[test]
    fn round_trip_preserves_retrieval() {
        let engine = built_engine();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        snapshot_save(&path, engine.config(), engine.mode(), engine.state()).unwrap();
        let (cfg, mode, state) = snapshot_load(&path).unwrap();
        assert_eq!(&cfg, engine.config());
        assert_eq!(mode, engine.mode());
        assert_eq!(state.qa.len(), 1);

        let be = MockBackend::new(cfg.embed_dim);
        use crate::backend::Backend as _;
        for probe in ["scene 3", "scene 120", "nothing here"] {
            let q = be.embed(probe).unwrap();
            let a: Vec<u64> = engine
                .state()
                .forest
                .retrieve_pruned(&q, 3)
                .iter()
                .map(|n| n.id)
                .collect();
            let b: Vec<u64> = state.forest.retrieve_pruned(&q, 3).iter().map(|n| n.id).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn tampered_byte_is_detected() {
        let engine = built_engine();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        snapshot_save(&path, engine.config(), engine.mode(), engine.state()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            snapshot_load(&path).unwrap_err(),
            SnapshotError::Corrupt(_)
        ));
    }

    #[test]
    fn wrong_version_and_magic_are_rejected() {
        let engine = built_engine();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        snapshot_save(&path, engine.config(), engine.mode(), engine.state()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 99;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            snapshot_load(&path).unwrap_err(),
            SnapshotError::VersionMismatch { found: 99 }
        ));
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            snapshot_load(&path).unwrap_err(),
            SnapshotError::BadMagic
        ));
    }
}

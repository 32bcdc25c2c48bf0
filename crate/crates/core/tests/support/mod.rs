#![allow(dead_code)]

pub mod docs;
pub mod models;
pub mod naive;
pub mod pipeline;
pub mod toy;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tempfile::TempDir;
use vpweave::derivation::Platform;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The bundled Blog platform, written to a fresh directory.
pub fn blog() -> (TempDir, Platform) {
    let dir = tempfile::tempdir().unwrap();
    vpweave::sample::write_sample(dir.path()).unwrap();
    let p = Platform::load(dir.path()).unwrap();
    (dir, p)
}

/// Every regular file under `root`, keyed by `/`-separated relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.unwrap();
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, std::fs::read(e.path()).unwrap());
        }
    }
    out
}

/// SHA-256 over every path and its contents, in path order.
pub fn hash_tree(root: &Path) -> String {
    let mut h = Sha256::new();
    for (path, bytes) in read_tree(root) {
        h.update((path.len() as u64).to_le_bytes());
        h.update(path.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

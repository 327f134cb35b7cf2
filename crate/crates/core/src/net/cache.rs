//! JSON persistence for word nets.
//!
//! One file per key. The header carries the key, the validation record and a SHA-256
//! digest of the serialized entry array, checked on every load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Ball, NetEntry, NetFlags, ValidationRecord, WordNet};
use crate::error::{CacheError, LieError, Result};
use crate::lie::{GroupElement, GroupKind};
use crate::words::{Tuple, Word};

pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub group: GroupKind,
    pub tuple_hash: String,
    pub max_len: usize,
    pub region_center: Vec<f64>,
    pub region_radius: f64,
    pub seed: u64,
}

impl CacheKey {
    pub fn new(tuple: &Tuple, max_len: usize, region: &Ball, seed: u64) -> Self {
        CacheKey {
            group: tuple.kind(),
            tuple_hash: tuple.hash_hex(),
            max_len,
            region_center: region.center.entries(),
            region_radius: region.radius,
            seed,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{}/{}/len{}/r{}/seed{}",
            self.group, self.tuple_hash, self.max_len, self.region_radius, self.seed
        )
    }

    pub fn file_name(&self) -> String {
        let json = serde_json::to_vec(self).expect("key serializes");
        let h = hex::encode(Sha256::digest(&json));
        format!("net-{}-{}.json", self.group, &h[..16])
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    key: CacheKey,
    claimed_radius: f64,
    max_word_length: usize,
    target_delta: f64,
    dedup_radius: f64,
    validation: ValidationRecord,
    flags: NetFlags,
    entry_count: usize,
    entries_digest: String,
}

#[derive(Serialize, Deserialize)]
struct StoredEntry {
    word: Word,
    matrix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    header: Header,
    generators: Vec<Vec<f64>>,
    entries: Vec<StoredEntry>,
}

fn digest_entries(entries: &[StoredEntry]) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(entries).expect("entries serialize")))
}

/// Write `net` under `dir` and return the file path.
pub fn save(net: &WordNet, dir: &Path, key: &CacheKey) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let entries: Vec<StoredEntry> = net
        .entries()
        .iter()
        .map(|e| StoredEntry { word: e.word.clone(), matrix: e.element.entries() })
        .collect();
    let file = CacheFile {
        header: Header {
            version: CACHE_VERSION,
            key: key.clone(),
            claimed_radius: net.claimed_radius,
            max_word_length: net.max_word_length,
            target_delta: net.target_delta,
            dedup_radius: net.dedup_radius,
            validation: net.validation.clone(),
            flags: net.flags,
            entry_count: entries.len(),
            entries_digest: digest_entries(&entries),
        },
        generators: net.tuple.elements().iter().map(|g| g.entries()).collect(),
        entries,
    };
    let path = dir.join(key.file_name());
    let mut text = serde_json::to_string(&file).map_err(|e| CacheError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Load the net stored for `key` under `dir`.
pub fn load(dir: &Path, key: &CacheKey) -> Result<WordNet> {
    load_file(&dir.join(key.file_name()), key)
}

/// Load a cache file and check that it was built for `key`.
pub fn load_file(path: &Path, key: &CacheKey) -> Result<WordNet> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CacheError::Format(e.to_string()))?;
    let version = value
        .get("header")
        .and_then(|h| h.get("version"))
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CacheError::Format("missing header.version".into()))? as u32;
    if version != CACHE_VERSION {
        return Err(CacheError::Version { found: version, expected: CACHE_VERSION }.into());
    }
    let file: CacheFile = serde_json::from_value(value).map_err(|e| CacheError::Format(e.to_string()))?;
    let h = &file.header;
    if h.key != *key {
        return Err(CacheError::KeyMismatch { found: h.key.describe(), requested: key.describe() }.into());
    }
    let computed = digest_entries(&file.entries);
    if computed != h.entries_digest || file.entries.len() != h.entry_count {
        return Err(CacheError::Integrity { stored: h.entries_digest.clone(), computed }.into());
    }
    let kind = key.group;
    let gens = file
        .generators
        .iter()
        .map(|g| GroupElement::from_entries(kind, g))
        .collect::<Result<Vec<_>>>()?;
    let tuple = Tuple::new(gens)?;
    if tuple.hash_hex() != key.tuple_hash {
        return Err(CacheError::KeyMismatch {
            found: format!("generators hashing to {}", tuple.hash_hex()),
            requested: key.describe(),
        }
        .into());
    }
    let center = GroupElement::from_entries(kind, &key.region_center)?;
    let region = Ball { center: center.clone(), radius: key.region_radius };
    let center_inv = center.inverse();
    let entries = file
        .entries
        .into_iter()
        .map(|e| {
            let element = GroupElement::from_entries(kind, &e.matrix)?;
            let coords = center_inv.mul(&element).log().ok();
            Ok(NetEntry { word: e.word, element, coords })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: LieError| CacheError::Format(format!("bad entry: {e}")))?;
    let mut net = WordNet::assemble(tuple, entries, region, h.max_word_length, h.target_delta, h.dedup_radius);
    net.claimed_radius = h.claimed_radius;
    net.validation = h.validation.clone();
    net.flags = h.flags;
    if net.is_empty() {
        net.flags.degenerate = true;
    }
    Ok(net)
}

/// Save then load through `dir`.
pub fn roundtrip(net: &WordNet, dir: &Path, key: &CacheKey) -> Result<WordNet> {
    save(net, dir, key)?;
    load(dir, key)
}

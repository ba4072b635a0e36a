//! Per-domain operator store.
//!
//! ```text
//! <root>/<domain_id>/operator.dred   DRED1, binary64, d × d
//! <root>/<domain_id>/meta.json       OperatorMeta + domain_id + delta_norm
//! ```
//!
//! `meta.json` is written last and acts as the commit marker: an entry
//! without it is invisible, and an entry whose payload CRC disagrees with
//! `payload_checksum` fails to load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::dred::{self, write_atomic, Dtype};
use crate::solver::{weights_payload, EditOperator, OperatorMeta};

pub const OPERATOR_FILE: &str = "operator.dred";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStoreEntry {
    pub domain_id: String,
    pub operator_path: PathBuf,
    pub delta_norm: f64,
    pub meta: OperatorMeta,
}

#[derive(Serialize, Deserialize)]
struct StoredMeta {
    domain_id: String,
    delta_norm: f64,
    #[serde(flatten)]
    meta: OperatorMeta,
}

fn validate_domain(domain_id: &str) -> Result<()> {
    let ok = !domain_id.is_empty()
        && !domain_id.starts_with('.')
        && domain_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidDomain(domain_id.to_string()))
    }
}

fn domain_dir(root: &Path, domain_id: &str) -> Result<PathBuf> {
    validate_domain(domain_id)?;
    Ok(root.join(domain_id))
}

pub fn save_operator(root: &Path, domain_id: &str, op: &EditOperator, force: bool) -> Result<()> {
    let dir = domain_dir(root, domain_id)?;
    let meta_path = dir.join(META_FILE);
    if !force && meta_path.exists() {
        return Err(Error::AlreadyExists(domain_id.to_string()));
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let payload = weights_payload(op.weights());
    let bytes = dred::encode(Dtype::F64, op.dim(), op.dim(), &payload);
    write_atomic(&dir.join(OPERATOR_FILE), &bytes)?;
    let stored = StoredMeta {
        domain_id: domain_id.to_string(),
        delta_norm: op.delta_norm(),
        meta: op.meta().clone(),
    };
    let json = serde_json::to_vec_pretty(&stored).expect("metadata serializes");
    write_atomic(&meta_path, &json)
}

fn read_meta(path: &Path) -> Result<StoredMeta> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|source| Error::Meta {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_operator(root: &Path, domain_id: &str) -> Result<EditOperator> {
    let dir = domain_dir(root, domain_id)?;
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(Error::NotFound(domain_id.to_string()));
    }
    let stored = read_meta(&meta_path)?;
    let (w, checksum) = dred::read_weights(&dir.join(OPERATOR_FILE))?;
    if checksum != stored.meta.payload_checksum {
        return Err(Error::ChecksumMismatch {
            path: meta_path,
            stored: stored.meta.payload_checksum,
            computed: checksum,
        });
    }
    if w.nrows() != stored.meta.d {
        return Err(Error::DimensionMismatch {
            context: "operator file vs meta.json d",
            expected: stored.meta.d,
            found: w.nrows(),
        });
    }
    EditOperator::from_weights(w, stored.meta)
}

/// Committed entries, sorted by domain id. A missing root is an empty store.
pub fn list_operators(root: &Path) -> Result<Vec<OperatorStoreEntry>> {
    let dir = match fs::read_dir(root) {
        Ok(d) => d,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(root, e)),
    };
    let mut entries = Vec::new();
    for item in dir {
        let item = item.map_err(|e| Error::io(root, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        if validate_domain(&name).is_err() {
            continue;
        }
        let meta_path = item.path().join(META_FILE);
        if !meta_path.is_file() {
            continue;
        }
        let stored = read_meta(&meta_path)?;
        entries.push(OperatorStoreEntry {
            domain_id: name,
            operator_path: item.path().join(OPERATOR_FILE),
            delta_norm: stored.delta_norm,
            meta: stored.meta,
        });
    }
    entries.sort_by(|a, b| a.domain_id.cmp(&b.domain_id));
    Ok(entries)
}

/// Removes a domain's entry; the commit marker goes first.
pub fn remove_operator(root: &Path, domain_id: &str) -> Result<()> {
    let dir = domain_dir(root, domain_id)?;
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(Error::NotFound(domain_id.to_string()));
    }
    fs::remove_file(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    fn sample(d: usize, seed: f64) -> EditOperator {
        let w = DMatrix::from_fn(d, d, |r, c| seed * (r as f64 + 1.0) - 0.37 * c as f64);
        EditOperator::from_weights(w, EditOperator::identity(d).meta().clone()).unwrap()
    }

    #[test]
    fn save_load_list_remove() {
        let root = tempfile::tempdir().unwrap();
        assert!(list_operators(root.path()).unwrap().is_empty());
        assert!(list_operators(&root.path().join("absent"))
            .unwrap()
            .is_empty());

        let a = sample(3, 0.1);
        let b = sample(2, 0.7)
            .with_source(Some("wiki".into()))
            .with_created_at(Some(7));
        save_operator(root.path(), "finance", &a, false).unwrap();
        save_operator(root.path(), "bio", &b, false).unwrap();

        assert_eq!(load_operator(root.path(), "finance").unwrap(), a);
        assert_eq!(load_operator(root.path(), "bio").unwrap(), b);

        let listed = list_operators(root.path()).unwrap();
        let names: Vec<_> = listed.iter().map(|e| e.domain_id.as_str()).collect();
        assert_eq!(names, ["bio", "finance"]);
        assert_eq!(listed[0].meta.source_dataset_id.as_deref(), Some("wiki"));

        assert!(matches!(
            save_operator(root.path(), "bio", &a, false),
            Err(Error::AlreadyExists(_))
        ));
        save_operator(root.path(), "bio", &a, true).unwrap();
        assert_eq!(load_operator(root.path(), "bio").unwrap(), a);

        remove_operator(root.path(), "bio").unwrap();
        assert!(matches!(
            load_operator(root.path(), "bio"),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            remove_operator(root.path(), "bio"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn missing_domain() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_operator(root.path(), "nope"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn rejects_path_like_domains() {
        let root = tempfile::tempdir().unwrap();
        let op = sample(2, 1.0);
        for bad in ["", "../x", "a/b", ".hidden"] {
            assert!(matches!(
                save_operator(root.path(), bad, &op, false),
                Err(Error::InvalidDomain(_))
            ));
        }
    }

    #[test]
    fn edited_checksum_detected() {
        let root = tempfile::tempdir().unwrap();
        save_operator(root.path(), "d", &sample(2, 0.3), false).unwrap();
        let meta_path = root.path().join("d").join(META_FILE);
        let mut meta: serde_json::Value =
            serde_json::from_slice(&fs::read(&meta_path).unwrap()).unwrap();
        let old = meta["payload_checksum"].as_u64().unwrap();
        meta["payload_checksum"] = (old ^ 1).into();
        fs::write(&meta_path, serde_json::to_vec(&meta).unwrap()).unwrap();
        assert!(matches!(
            load_operator(root.path(), "d"),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn uncommitted_entry_is_invisible() {
        let root = tempfile::tempdir().unwrap();
        save_operator(root.path(), "d", &sample(2, 0.3), false).unwrap();
        fs::remove_file(root.path().join("d").join(META_FILE)).unwrap();
        assert!(list_operators(root.path()).unwrap().is_empty());
        assert!(matches!(
            load_operator(root.path(), "d"),
            Err(Error::NotFound(_))
        ));
        // and a fresh save is allowed without force
        save_operator(root.path(), "d", &sample(2, 0.3), false).unwrap();
    }
}

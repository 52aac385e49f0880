//! Holds the live policy and swaps it atomically.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::policy::{apply_mutation, parse_policy, PolicyDocument, PolicyError, PolicyMutation};

/// Directory searched when no policy directory is configured.
pub const DEFAULT_POLICY_DIR: &str = "./policy/";
pub const POLICY_FILE_NAME: &str = "mac_permissions.xml";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Policy {
        path: PathBuf,
        #[source]
        source: PolicyError,
    },
}

pub fn policy_path(dir: impl AsRef<Path>) -> PathBuf {
    dir.as_ref().join(POLICY_FILE_NAME)
}

pub fn load_policy_file(path: impl AsRef<Path>) -> Result<PolicyDocument, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_policy(&text).map_err(|source| StoreError::Policy {
        path: path.to_path_buf(),
        source,
    })
}

/// Readers take an `Arc` snapshot; writers replace the whole document, so a
/// reader never observes a partially applied change.
#[derive(Debug, Default)]
pub struct PolicyStore {
    current: RwLock<Arc<PolicyDocument>>,
}

impl PolicyStore {
    pub fn new(doc: PolicyDocument) -> Self {
        Self {
            current: RwLock::new(Arc::new(doc)),
        }
    }

    /// Loads `mac_permissions.xml` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        load_policy_file(policy_path(dir)).map(Self::new)
    }

    pub fn snapshot(&self) -> Arc<PolicyDocument> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Replaces the document, returning the previous snapshot.
    pub fn replace(&self, doc: PolicyDocument) -> Arc<PolicyDocument> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, Arc::new(doc))
    }

    /// Re-reads the policy file; the old document stays live on error.
    pub fn reload(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let doc = load_policy_file(path)?;
        self.replace(doc);
        Ok(())
    }

    pub fn apply(&self, mutation: &PolicyMutation) -> Arc<PolicyDocument> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        let next = Arc::new(apply_mutation(&guard, mutation));
        *guard = Arc::clone(&next);
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{evaluate_request, PermissionRequest};
    use crate::policy::{serialize, Signature};
    use std::thread;

    #[test]
    fn snapshots_survive_replacement() {
        let store = PolicyStore::default();
        let before = store.snapshot();
        let sig = Signature::parse("ab").unwrap();
        store.apply(&PolicyMutation::grant_signer(sig.clone(), "P"));
        assert!(before.is_empty());
        assert!(store.snapshot().signers.contains_key(&sig));
    }

    #[test]
    fn concurrent_readers_see_whole_documents() {
        let store = Arc::new(PolicyStore::default());
        let sig = Signature::parse("ab").unwrap();
        let req = PermissionRequest::new("pkg", "ab", "P0").unwrap();
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let store = Arc::clone(&store);
                let req = req.clone();
                thread::spawn(move || {
                    for _ in 0..2_000 {
                        let snap = store.snapshot();
                        // Each write grants P{i} and P0 together.
                        let granted = snap
                            .signers
                            .values()
                            .map(|s| s.global_rules.allows.len())
                            .sum::<usize>();
                        let allowed = evaluate_request(&snap, &req).is_allow();
                        assert_eq!(allowed, granted > 0);
                    }
                })
            })
            .collect();
        for i in 1..200 {
            let mut doc = (*store.snapshot()).clone();
            let s = doc
                .signers
                .entry(sig.clone())
                .or_insert_with(|| crate::policy::SignerPolicy::new(sig.clone()));
            s.global_rules.allows.insert(format!("P{i}"));
            s.global_rules.allows.insert("P0".into());
            store.replace(doc);
        }
        for r in readers {
            r.join().unwrap();
        }
    }

    #[test]
    fn load_and_reload_from_dir() {
        let dir = std::env::temp_dir().join(format!("permctl-store-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = policy_path(&dir);
        std::fs::write(&path, "<policy><package name=\"a\"><allow-all/></package></policy>").unwrap();
        let store = PolicyStore::load_dir(&dir).unwrap();
        assert_eq!(store.snapshot().global_packages.len(), 1);

        std::fs::write(&path, "<policy><broken").unwrap();
        assert!(matches!(store.reload(&path), Err(StoreError::Policy { .. })));
        assert_eq!(store.snapshot().global_packages.len(), 1);

        std::fs::write(&path, serialize(&PolicyDocument::default())).unwrap();
        store.reload(&path).unwrap();
        assert!(store.snapshot().is_empty());
        std::fs::remove_dir_all(&dir).unwrap();
        assert!(matches!(PolicyStore::load_dir(&dir), Err(StoreError::Io { .. })));
    }
}

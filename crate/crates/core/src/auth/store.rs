//! Directory-backed user store: `users.json` and `embeddings.json`.
//!
//! Both files are rewritten atomically on every change; embeddings are
//! written first so a persisted user always has its embeddings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::crypto::EncryptedCode;
use crate::dataset::Sample;
use crate::embedder::Embedding;

const USERS_FILE: &str = "users.json";
const EMBEDDINGS_FILE: &str = "embeddings.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store file {path} is malformed: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("email already enrolled")]
    AlreadyEnrolled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub email: String,
    pub encrypted_code: EncryptedCode,
    pub class_label: String,
    /// Seconds since the Unix epoch.
    pub enrolled_at: u64,
    pub embedding_count: usize,
}

#[derive(Debug)]
pub struct UserStore {
    dir: PathBuf,
    users: BTreeMap<String, UserRecord>,
    embeddings: BTreeMap<String, Vec<Embedding>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: &Path) -> Result<T, StoreError> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::Malformed {
            path: path.to_path_buf(),
            detail: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let bytes = serde_json::to_vec_pretty(value).expect("store types serialize");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(&bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

impl UserStore {
    /// Opens (creating if needed) the store in `dir`.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let users: Vec<UserRecord> = read_json(&dir.join(USERS_FILE))?;
        let embeddings: BTreeMap<String, Vec<Embedding>> = read_json(&dir.join(EMBEDDINGS_FILE))?;
        let mut by_email = BTreeMap::new();
        for u in users {
            let malformed = |detail: String| StoreError::Malformed {
                path: dir.join(USERS_FILE),
                detail,
            };
            match embeddings.get(&u.class_label) {
                Some(e) if e.len() == u.embedding_count && !e.is_empty() => {}
                _ => return Err(malformed(format!("embeddings of {} do not match its record", u.class_label))),
            }
            if by_email.insert(u.email.clone(), u).is_some() {
                return Err(malformed("duplicate email".into()));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            users: by_email,
            embeddings,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn get(&self, email: &str) -> Option<&UserRecord> {
        self.users.get(email)
    }

    pub fn find_by_label(&self, label: &str) -> Option<&UserRecord> {
        self.users.values().find(|u| u.class_label == label)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    /// Label for the next enrollment: `u0001`, `u0002`, ...
    pub fn next_label(&self) -> String {
        let used = self
            .users
            .values()
            .filter_map(|u| u.class_label.strip_prefix('u')?.parse::<u64>().ok())
            .max()
            .unwrap_or(0);
        format!("u{:04}", used + 1)
    }

    pub fn insert(&mut self, record: UserRecord, embeddings: Vec<Embedding>) -> Result<(), StoreError> {
        if self.users.contains_key(&record.email) {
            return Err(StoreError::AlreadyEnrolled);
        }
        let mut next_embeddings = self.embeddings.clone();
        next_embeddings.insert(record.class_label.clone(), embeddings);
        let mut next_users = self.users.clone();
        next_users.insert(record.email.clone(), record);

        write_json(&self.dir.join(EMBEDDINGS_FILE), &next_embeddings)?;
        let list: Vec<&UserRecord> = next_users.values().collect();
        write_json(&self.dir.join(USERS_FILE), &list)?;
        self.embeddings = next_embeddings;
        self.users = next_users;
        Ok(())
    }

    /// One sample per stored embedding, labelled by class label, ordered by
    /// label then insertion.
    pub fn training_samples(&self) -> Vec<Sample> {
        self.users
            .values()
            .filter_map(|u| self.embeddings.get(&u.class_label).map(|e| (&u.class_label, e)))
            .collect::<BTreeMap<_, _>>()
            .into_iter()
            .flat_map(|(label, es)| es.iter().map(move |e| Sample::new(e.as_slice().to_vec(), label.clone())))
            .collect()
    }
}

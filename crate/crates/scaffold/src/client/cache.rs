//! Content-addressed response cache: `<root>/<first2>/<digest>.json`.
//!
//! Entries are written to a temp file in the target directory and renamed
//! into place, so readers never observe a partially written record; an
//! unparseable entry is treated as a miss and rewritten.

use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, ChatResponse, TokenUsage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub model_id: String,
    pub request_text: String,
    pub image_hashes: Vec<String>,
    pub text: String,
    pub usage: Option<TokenUsage>,
    pub provider_meta: serde_json::Value,
    pub created_unix: u64,
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: PathBuf) -> Self {
        DiskCache { root }
    }

    pub fn root(&self) -> &std::path::Path {
        &self.root
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root
            .join(&key.digest[..2])
            .join(format!("{}.json", key.digest))
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(
        &self,
        key: &CacheKey,
        request: &ChatRequest,
        response: &ChatResponse,
    ) -> std::io::Result<()> {
        let entry = CacheEntry {
            digest: key.digest.clone(),
            model_id: request.settings.model_id.clone(),
            request_text: request.text_concat(),
            image_hashes: request.image_hashes(),
            text: response.text.clone(),
            usage: response.usage,
            provider_meta: response.provider_meta.clone(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.path_for(key);
        let dir = path.parent().expect("cache path has parent");
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&serde_json::to_vec_pretty(&entry)?)?;
        tmp.flush()?;
        match tmp.persist(&path) {
            Ok(_) => Ok(()),
            // A concurrent writer beat us to the rename; its entry is
            // equivalent, so losing the race is fine.
            Err(e) if path.exists() => {
                drop(e);
                Ok(())
            }
            Err(e) => Err(e.error),
        }
    }
}

//! Plumbing shared by the three model seams: errors, request fingerprints,
//! the persistent response cache and the HTTP client for a remote sidecar.

mod cache;
pub mod http;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheStats, ResponseCache};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Timeouts, 429/503 and the like. Worth retrying.
    #[error("backend `{backend}` unavailable: {message}")]
    Transient { backend: String, message: String },
    /// Bad request, malformed response, or anything a retry will not fix.
    #[error("backend `{backend}` failed: {message}")]
    Permanent { backend: String, message: String },
}

impl BackendError {
    pub fn transient(backend: &str, message: impl Into<String>) -> Self {
        BackendError::Transient {
            backend: backend.to_string(),
            message: message.into(),
        }
    }

    pub fn permanent(backend: &str, message: impl Into<String>) -> Self {
        BackendError::Permanent {
            backend: backend.to_string(),
            message: message.into(),
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transient { .. })
    }
}

/// Hex SHA-256 over `(backend id, canonical JSON request, seed)`.
pub fn fingerprint<T: Serialize + ?Sized>(backend: &str, request: &T, seed: Option<u64>) -> String {
    let mut h = Sha256::new();
    h.update(backend.as_bytes());
    h.update([0u8]);
    // serde_json output for our request structs is field-ordered, so this is
    // a canonical encoding.
    h.update(serde_json::to_vec(request).expect("request types serialize"));
    h.update([0u8]);
    match seed {
        Some(s) => h.update(s.to_le_bytes()),
        None => h.update(b"-"),
    }
    hex::encode(h.finalize())
}

/// Stable 64-bit seed derived from a parent seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

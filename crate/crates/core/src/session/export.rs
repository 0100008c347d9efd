//! Versioned session documents.
//!
//! The session itself is stored without image bytes; every asset is listed
//! once in a sidecar `blobs` map from content hash to base64 PNG. On import
//! each blob is re-hashed, so a tampered or truncated image is caught.

use std::collections::BTreeMap;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{AssetStore, Session};
use crate::card::AssetId;
use crate::instruments::imaging;

pub const EXPORT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExportError {
    #[error("document is not valid JSON: {0}")]
    Parse(String),
    #[error("unsupported document version {found:?}; expected {EXPORT_VERSION}")]
    SchemaVersionMismatch { found: Option<u64> },
    #[error("document does not match the session schema: {0}")]
    Schema(String),
    #[error("asset `{0}` does not match its content hash or is not a PNG")]
    CorruptAsset(AssetId),
    #[error("session state is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub v: u64,
    pub session: Session,
    /// Asset id to standard base64 of the PNG bytes.
    pub blobs: BTreeMap<AssetId, String>,
}

pub fn export_session(session: &Session) -> ExportDocument {
    let engine = base64::engine::general_purpose::STANDARD;
    ExportDocument {
        v: EXPORT_VERSION,
        session: session.clone(),
        blobs: session.assets.iter().map(|(id, bytes)| (id.clone(), engine.encode(bytes))).collect(),
    }
}

/// Parses a document produced by [`export_session`], verifying the version
/// first, then every blob, then the session invariants.
pub fn import_session(document: &str) -> Result<Session, ExportError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ExportError::Parse(e.to_string()))?;
    let found = value.get("v").and_then(Value::as_u64);
    if found != Some(EXPORT_VERSION) {
        return Err(ExportError::SchemaVersionMismatch { found });
    }
    let doc: ExportDocument = serde_json::from_value(value).map_err(|e| ExportError::Schema(e.to_string()))?;

    let engine = base64::engine::general_purpose::STANDARD;
    let mut assets = AssetStore::new();
    for (id, encoded) in doc.blobs {
        let bytes = engine.decode(encoded.as_bytes()).map_err(|_| ExportError::CorruptAsset(id.clone()))?;
        if imaging::asset_id_for(&bytes) != id || imaging::describe_png(&bytes).is_err() {
            return Err(ExportError::CorruptAsset(id));
        }
        assets.insert_png(bytes).map_err(|_| ExportError::CorruptAsset(id))?;
    }

    let mut session = doc.session;
    session.assets = assets;
    session.check_invariants().map_err(ExportError::Inconsistent)?;
    session.rebuild_derived();
    Ok(session)
}

impl ExportDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("export document serializes")
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Content-addressed asset store for evidence uploads.

use crate::error::{Error, Result};
use crate::model::AssetRef;
use crate::service::{Olympus, Tx};

pub const DEFAULT_MAX_ASSET_BYTES: u64 = 50 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssetPolicy {
    pub max_bytes: u64,
}

impl Default for AssetPolicy {
    fn default() -> Self {
        AssetPolicy {
            max_bytes: DEFAULT_MAX_ASSET_BYTES,
        }
    }
}

impl AssetPolicy {
    pub fn with_max_mb(mb: u64) -> Self {
        AssetPolicy {
            max_bytes: mb.saturating_mul(1024 * 1024),
        }
    }

    /// Normalizes a declared media type and checks it is accepted:
    /// PDF, any image, MP4 or WebM video, HTML snapshots.
    pub fn accept_media(&self, declared: &str) -> Result<String> {
        let essence = declared
            .split(';')
            .next()
            .unwrap_or_default()
            .trim()
            .to_ascii_lowercase();
        let accepted = match essence.split_once('/') {
            Some(("image", sub)) => !sub.is_empty(),
            Some(_) => matches!(
                essence.as_str(),
                "application/pdf" | "video/mp4" | "video/webm" | "text/html"
            ),
            None => false,
        };
        if accepted {
            Ok(essence)
        } else {
            Err(Error::UnsupportedMedia {
                media_type: declared.to_owned(),
            })
        }
    }

    pub fn check_size(&self, size: u64) -> Result<()> {
        if size > self.max_bytes {
            return Err(Error::OversizeAsset {
                size,
                limit: self.max_bytes,
            });
        }
        Ok(())
    }
}

impl Tx<'_> {
    /// Stores bytes and records them in the asset manifest. Identical
    /// bytes resolve to the ref recorded first.
    pub fn store_asset(&mut self, bytes: &[u8], media_type: &str) -> Result<AssetRef> {
        let media_type = self.assets.accept_media(media_type)?;
        self.assets.check_size(bytes.len() as u64)?;
        let candidate = AssetRef::for_bytes(bytes, &media_type);
        if let Some(existing) = self.state.assets.get(&candidate.content_hash) {
            return Ok(existing.clone());
        }
        self.storage.put_asset(&candidate.content_hash, bytes)?;
        self.state
            .assets
            .insert(candidate.content_hash.clone(), candidate.clone());
        Ok(candidate)
    }
}

impl Olympus {
    pub fn store_asset(&self, bytes: &[u8], media_type: &str) -> Result<AssetRef> {
        self.write(|tx| tx.store_asset(bytes, media_type))
    }

    /// Returns the stored bytes and their media type. The bytes are
    /// re-hashed on read; a mismatch is reported as a storage failure.
    pub fn fetch_asset(&self, content_hash: &str) -> Result<(Vec<u8>, AssetRef)> {
        let state = self.snapshot();
        let asset = state
            .assets
            .get(content_hash)
            .cloned()
            .ok_or_else(|| Error::not_found("asset", content_hash))?;
        let bytes = self
            .storage()
            .get_asset(content_hash)?
            .ok_or_else(|| Error::not_found("asset", content_hash))?;
        if crate::model::content_hash(&bytes) != asset.content_hash {
            return Err(Error::Storage(format!(
                "asset {content_hash} failed its integrity check"
            )));
        }
        Ok((bytes, asset))
    }
}

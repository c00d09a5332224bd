// SPDX-License-Identifier: Apache-2.0

//! Classification of content identifiers: URLs, CCN-style names, BitTorrent
//! info-hashes, and anything else as opaque text.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContentRef {
    Url {
        scheme: String,
        authority: String,
        /// Everything after the authority, leading `/` included.
        path: String,
    },
    CcnName { components: Vec<String> },
    InfoHash {
        #[serde(with = "hex_bytes")]
        hash: [u8; 20],
    },
    Opaque { text: String },
}

impl ContentRef {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ContentRef::Url { .. } => "url",
            ContentRef::CcnName { .. } => "ccn_name",
            ContentRef::InfoHash { .. } => "info_hash",
            ContentRef::Opaque { .. } => "opaque",
        }
    }
}

/// Precedence: `://` makes a URL, then exactly 40 hex digits make an
/// info-hash, then a `/`-separated name whose first component is dotted makes
/// a CCN name. Everything else is opaque.
pub fn classify(raw: &str) -> ContentRef {
    if let Some((scheme, rest)) = raw.split_once("://") {
        let (authority, path) = match rest.find('/') {
            Some(i) => rest.split_at(i),
            None => (rest, ""),
        };
        return ContentRef::Url {
            scheme: scheme.to_string(),
            authority: authority.to_string(),
            path: path.to_string(),
        };
    }
    if raw.len() == 40 && raw.bytes().all(|b| b.is_ascii_hexdigit()) {
        let mut hash = [0u8; 20];
        hex::decode_to_slice(raw, &mut hash).expect("40 hex digits");
        return ContentRef::InfoHash { hash };
    }
    if raw.contains('/') {
        let components: Vec<&str> = raw.split('/').collect();
        let first = components[0];
        let dotted = first.contains('.') && !first.starts_with('.') && !first.ends_with('.');
        if dotted && components.iter().all(|c| !c.is_empty()) {
            return ContentRef::CcnName {
                components: components.into_iter().map(String::from).collect(),
            };
        }
    }
    ContentRef::Opaque {
        text: raw.to_string(),
    }
}

pub fn normalize(content: &ContentRef) -> String {
    content.to_string()
}

impl fmt::Display for ContentRef {
    /// Canonical text: lower-case scheme, authority and info-hash; paths and
    /// names are kept verbatim.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContentRef::Url {
                scheme,
                authority,
                path,
            } => write!(
                f,
                "{}://{}{}",
                scheme.to_ascii_lowercase(),
                authority.to_ascii_lowercase(),
                path
            ),
            ContentRef::CcnName { components } => f.write_str(&components.join("/")),
            ContentRef::InfoHash { hash } => f.write_str(&hex::encode(hash)),
            ContentRef::Opaque { text } => f.write_str(text),
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 20], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 20], D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 20];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

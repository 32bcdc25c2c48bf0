//! The base model: the on-disk platform, split into components of
//! artifacts, plus named fragments, inter-component links and slots.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::value::{is_identifier, is_token, Value, ValueType};

pub const MANIFEST_FILE: &str = "basemodel.json";

/// Engine input files that live at the platform root but are never part of
/// a product.
pub const RESERVED_FILES: [&str; 4] = [
    "basemodel.json",
    "delimiters.json",
    "features.json",
    "variability.json",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub id: String,
    /// Sorted platform-relative paths.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fragment {
    pub id: String,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Link {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BaseSlot {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ValueType,
    pub value: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(default = "dot")]
    root: String,
    #[serde(default)]
    components: Vec<RawComponent>,
    #[serde(default)]
    fragments: Vec<RawFragment>,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default)]
    slots: Vec<RawSlot>,
}

fn dot() -> String {
    ".".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    id: String,
    artifacts: Vec<String>,
    #[serde(default)]
    description: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFragment {
    id: String,
    artifacts: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    id: String,
    from: String,
    to: String,
    #[serde(default)]
    kind: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlot {
    name: String,
    #[serde(rename = "type")]
    ty: ValueType,
    value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("artifact `{0}` does not exist under the platform root")]
    MissingArtifact(String),
    #[error("`{path}` is claimed by both `{first}` and `{second}`")]
    OverlappingComponents {
        path: String,
        first: String,
        second: String,
    },
    #[error("{context} refers to unknown `{name}`")]
    DanglingReference { context: String, name: String },
    #[error("path `{0}` escapes the platform root or is not a relative `/`-separated path")]
    PathEscape(String),
    #[error("{kind} `{id}` declared more than once")]
    DuplicateId { kind: &'static str, id: String },
    #[error("`{0}` is not a valid identifier")]
    InvalidIdentifier(String),
    #[error("link `{0}` connects a component to itself")]
    SelfLink(String),
    #[error("{kind} `{id}` has no artifacts")]
    Empty { kind: &'static str, id: String },
    #[error("slot `{name}`: value is a {found}, declared {declared}")]
    SlotTypeMismatch {
        name: String,
        declared: ValueType,
        found: ValueType,
    },
}

#[derive(Debug, Clone)]
pub struct BaseModelManifest {
    root: PathBuf,
    components: Vec<Component>,
    fragments: Vec<Fragment>,
    links: Vec<Link>,
    slots: Vec<BaseSlot>,
    owner: BTreeMap<String, String>,
    common: Vec<String>,
}

/// Checks a manifest path and returns it normalised (`.` segments dropped).
pub fn normalize_path(p: &str) -> Result<String, ManifestError> {
    let escape = || ManifestError::PathEscape(p.to_owned());
    if p.is_empty() || p.starts_with('/') || p.contains('\\') || p.contains(':') {
        return Err(escape());
    }
    let mut parts = Vec::new();
    for seg in p.split('/') {
        match seg {
            "." => {}
            "" | ".." => return Err(escape()),
            s => parts.push(s),
        }
    }
    if parts.is_empty() {
        return Err(escape());
    }
    Ok(parts.join("/"))
}

impl BaseModelManifest {
    /// Reads `basemodel.json` from the platform directory.
    pub fn load_dir(platform: &Path) -> Result<Self, ManifestError> {
        let path = platform.join(MANIFEST_FILE);
        let src = std::fs::read_to_string(&path).map_err(|e| ManifestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::load(&src, platform)
    }

    /// Parses a manifest and checks it against the files under `platform_root`.
    pub fn load(manifest_source: &str, platform_root: &Path) -> Result<Self, ManifestError> {
        let raw: RawManifest =
            serde_json::from_str(manifest_source).map_err(|e| ManifestError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let root = if raw.root == "." {
            platform_root.to_path_buf()
        } else {
            platform_root.join(normalize_path(&raw.root)?)
        };

        let mut owner: BTreeMap<String, String> = BTreeMap::new();
        let mut components = Vec::with_capacity(raw.components.len());
        let mut seen = BTreeSet::new();
        for c in raw.components {
            if !is_token(&c.id) {
                return Err(ManifestError::InvalidIdentifier(c.id));
            }
            if !seen.insert(c.id.clone()) {
                return Err(ManifestError::DuplicateId { kind: "component", id: c.id });
            }
            if c.artifacts.is_empty() {
                return Err(ManifestError::Empty { kind: "component", id: c.id });
            }
            let mut paths = Vec::with_capacity(c.artifacts.len());
            for a in &c.artifacts {
                let p = normalize_path(a)?;
                if let Some(first) = owner.get(&p) {
                    return Err(ManifestError::OverlappingComponents {
                        path: p,
                        first: first.clone(),
                        second: c.id.clone(),
                    });
                }
                if !root.join(&p).is_file() {
                    return Err(ManifestError::MissingArtifact(p));
                }
                owner.insert(p.clone(), c.id.clone());
                paths.push(p);
            }
            paths.sort();
            components.push(Component {
                id: c.id,
                artifacts: paths,
                description: c.description,
            });
        }
        components.sort_by(|a, b| a.id.cmp(&b.id));

        let mut fragments = Vec::with_capacity(raw.fragments.len());
        let mut seen = BTreeSet::new();
        for f in raw.fragments {
            if !is_token(&f.id) {
                return Err(ManifestError::InvalidIdentifier(f.id));
            }
            if !seen.insert(f.id.clone()) {
                return Err(ManifestError::DuplicateId { kind: "fragment", id: f.id });
            }
            let mut paths = BTreeSet::new();
            for a in &f.artifacts {
                let p = normalize_path(a)?;
                if !owner.contains_key(&p) {
                    return Err(ManifestError::DanglingReference {
                        context: format!("fragment `{}`", f.id),
                        name: p,
                    });
                }
                paths.insert(p);
            }
            fragments.push(Fragment {
                id: f.id,
                artifacts: paths.into_iter().collect(),
            });
        }
        fragments.sort_by(|a, b| a.id.cmp(&b.id));

        let mut links = Vec::with_capacity(raw.links.len());
        let mut seen = BTreeSet::new();
        for l in raw.links {
            if !is_token(&l.id) {
                return Err(ManifestError::InvalidIdentifier(l.id));
            }
            if !seen.insert(l.id.clone()) {
                return Err(ManifestError::DuplicateId { kind: "link", id: l.id });
            }
            for end in [&l.from, &l.to] {
                if components.binary_search_by(|c| c.id.as_str().cmp(end)).is_err() {
                    return Err(ManifestError::DanglingReference {
                        context: format!("link `{}`", l.id),
                        name: end.clone(),
                    });
                }
            }
            if l.from == l.to {
                return Err(ManifestError::SelfLink(l.id));
            }
            links.push(Link {
                id: l.id,
                from: l.from,
                to: l.to,
                kind: l.kind.unwrap_or_else(|| "uses".into()),
            });
        }
        links.sort_by(|a, b| a.id.cmp(&b.id));

        let mut slots = Vec::with_capacity(raw.slots.len());
        let mut seen = BTreeSet::new();
        for s in raw.slots {
            if !is_identifier(&s.name) {
                return Err(ManifestError::InvalidIdentifier(s.name));
            }
            if !seen.insert(s.name.clone()) {
                return Err(ManifestError::DuplicateId { kind: "slot", id: s.name });
            }
            if s.value.value_type() != s.ty {
                return Err(ManifestError::SlotTypeMismatch {
                    name: s.name,
                    declared: s.ty,
                    found: s.value.value_type(),
                });
            }
            slots.push(BaseSlot {
                name: s.name,
                ty: s.ty,
                value: s.value,
            });
        }
        slots.sort_by(|a, b| a.name.cmp(&b.name));

        let common = scan_unclaimed(&root, &owner)?;
        Ok(BaseModelManifest {
            root,
            components,
            fragments,
            links,
            slots,
            owner,
            common,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Sorted by id.
    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn slots(&self) -> &[BaseSlot] {
        &self.slots
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.components[i])
    }

    pub fn fragment(&self, id: &str) -> Option<&Fragment> {
        self.fragments.iter().find(|f| f.id == id)
    }

    pub fn link(&self, id: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn slot(&self, name: &str) -> Option<&BaseSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Component owning a declared artifact.
    pub fn owner_of(&self, path: &str) -> Option<&str> {
        self.owner.get(path).map(String::as_str)
    }

    /// Every declared artifact path, sorted.
    pub fn declared_artifacts(&self) -> impl Iterator<Item = &str> {
        self.owner.keys().map(String::as_str)
    }

    /// Files under the root that no component claims, sorted. Derivation
    /// copies these into every product.
    pub fn unclaimed_files(&self) -> &[String] {
        &self.common
    }

    /// Declared artifacts and unclaimed files together, sorted.
    pub fn all_files(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .declared_artifacts()
            .chain(self.common.iter().map(String::as_str))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn read(&self, path: &str) -> std::io::Result<Vec<u8>> {
        std::fs::read(self.root.join(path))
    }
}

fn scan_unclaimed(root: &Path, owner: &BTreeMap<String, String>) -> Result<Vec<String>, ManifestError> {
    if !root.is_dir() {
        return Err(ManifestError::Io {
            path: root.display().to_string(),
            message: "platform root is not a directory".into(),
        });
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| ManifestError::Io {
            path: root.display().to_string(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        let rel: Vec<String> = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        let rel = rel.join("/");
        if RESERVED_FILES.contains(&rel.as_str()) || owner.contains_key(&rel) {
            continue;
        }
        out.push(rel);
    }
    out.sort();
    Ok(out)
}

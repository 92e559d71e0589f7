//! Hierarchical event taxonomy.
//!
//! The taxonomy file is record-per-line JSON, one node per line:
//!
//! ```text
//! {"id":0,"name":"music","parent":null}
//! {"id":4,"name":"other events","parent":null,"catalog_label":"other interesting events"}
//! {"id":40,"name":"alcohol and beverages","parent":4}
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shipped first-level taxonomy (ids 0..=6).
pub const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.default");

/// Identifier of a taxonomic category. Ids are assigned by the taxonomy file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("taxonomy document is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate category id {0}")]
    DuplicateId(CategoryId),
    #[error("category {child} references missing parent {parent}")]
    DanglingParent { child: CategoryId, parent: CategoryId },
    #[error("cycle in taxonomy through category {0}")]
    Cycle(CategoryId),
    #[error("name {name:?} is used twice at level {level}")]
    DuplicateName { name: String, level: usize },
    #[error("unknown category {0:?}")]
    UnknownKey(String),
    #[error("ambiguous category name {name:?} matches ids {ids:?}")]
    Ambiguous { name: String, ids: Vec<CategoryId> },
    #[error("reading taxonomy: {0}")]
    Io(String),
}

/// One record as it appears in the taxonomy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeRecord {
    id: CategoryId,
    name: String,
    #[serde(default)]
    parent: Option<CategoryId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    catalog_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: CategoryId,
    pub name: String,
    pub parent: Option<CategoryId>,
    /// Depth in the tree, 0 for first-level categories.
    pub level: usize,
    pub aliases: Vec<String>,
    /// Wording shown in catalogs when it differs from `name`.
    pub catalog_label: Option<String>,
}

impl TaxonomyNode {
    pub fn catalog_label(&self) -> &str {
        self.catalog_label.as_deref().unwrap_or(&self.name)
    }
}

/// Key accepted by [`Taxonomy::resolve`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CategoryKey {
    Id(CategoryId),
    Name(String),
}

impl From<CategoryId> for CategoryKey {
    fn from(id: CategoryId) -> Self {
        CategoryKey::Id(id)
    }
}

impl From<&str> for CategoryKey {
    fn from(name: &str) -> Self {
        CategoryKey::Name(name.to_string())
    }
}

impl CategoryKey {
    /// Interprets a CLI token: an integer is an id, anything else a name.
    pub fn parse(token: &str) -> Self {
        match token.trim().parse::<u32>() {
            Ok(id) => CategoryKey::Id(CategoryId(id)),
            Err(_) => CategoryKey::Name(token.trim().to_string()),
        }
    }
}

/// Immutable, validated category forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    nodes: BTreeMap<CategoryId, TaxonomyNode>,
    /// lowercase name or alias -> ids carrying it (possibly at several levels)
    by_name: HashMap<String, Vec<CategoryId>>,
}

impl Taxonomy {
    pub fn load_str(source: &str) -> Result<Self, TaxonomyError> {
        let mut records = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let record: NodeRecord = serde_json::from_str(trimmed)
                .map_err(|e| TaxonomyError::Parse { line: idx + 1, message: e.to_string() })?;
            records.push(record);
        }
        Self::from_records(records)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io(format!("{}: {e}", path.display())))?;
        Self::load_str(&text)
    }

    /// The shipped seven-category taxonomy.
    pub fn default_taxonomy() -> Self {
        Self::load_str(DEFAULT_TAXONOMY).expect("shipped taxonomy is valid")
    }

    fn from_records(records: Vec<NodeRecord>) -> Result<Self, TaxonomyError> {
        if records.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut raw: BTreeMap<CategoryId, NodeRecord> = BTreeMap::new();
        for rec in records {
            if raw.contains_key(&rec.id) {
                return Err(TaxonomyError::DuplicateId(rec.id));
            }
            raw.insert(rec.id, rec);
        }
        for rec in raw.values() {
            if let Some(parent) = rec.parent {
                if !raw.contains_key(&parent) {
                    return Err(TaxonomyError::DanglingParent { child: rec.id, parent });
                }
            }
        }

        // Walk each ancestor chain; a chain longer than the node count is a cycle.
        let mut nodes = BTreeMap::new();
        for rec in raw.values() {
            let mut level = 0;
            let mut cursor = rec.parent;
            while let Some(p) = cursor {
                if p == rec.id || level >= raw.len() {
                    return Err(TaxonomyError::Cycle(rec.id));
                }
                level += 1;
                cursor = raw[&p].parent;
            }
            nodes.insert(
                rec.id,
                TaxonomyNode {
                    id: rec.id,
                    name: rec.name.clone(),
                    parent: rec.parent,
                    level,
                    aliases: rec.aliases.clone(),
                    catalog_label: rec.catalog_label.clone(),
                },
            );
        }

        let mut by_name: HashMap<String, Vec<CategoryId>> = HashMap::new();
        let mut per_level: HashMap<(usize, String), CategoryId> = HashMap::new();
        for node in nodes.values() {
            for label in std::iter::once(&node.name).chain(&node.aliases).chain(&node.catalog_label) {
                let key = label.trim().to_lowercase();
                if let Some(prev) = per_level.insert((node.level, key.clone()), node.id) {
                    if prev != node.id {
                        return Err(TaxonomyError::DuplicateName { name: label.clone(), level: node.level });
                    }
                    continue;
                }
                by_name.entry(key).or_default().push(node.id);
            }
        }

        Ok(Taxonomy { nodes, by_name })
    }

    /// Serializes back to the record-per-line file format, ordered by id.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for node in self.nodes.values() {
            let rec = NodeRecord {
                id: node.id,
                name: node.name.clone(),
                parent: node.parent,
                aliases: node.aliases.clone(),
                catalog_label: node.catalog_label.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values()
    }

    pub fn get(&self, id: CategoryId) -> Option<&TaxonomyNode> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Level-0 category ids in ascending order.
    pub fn first_level_ids(&self) -> Vec<CategoryId> {
        self.nodes.values().filter(|n| n.level == 0).map(|n| n.id).collect()
    }

    pub fn resolve(&self, key: impl Into<CategoryKey>) -> Result<&TaxonomyNode, TaxonomyError> {
        match key.into() {
            CategoryKey::Id(id) => self.nodes.get(&id).ok_or_else(|| TaxonomyError::UnknownKey(id.to_string())),
            CategoryKey::Name(name) => {
                let ids = self
                    .by_name
                    .get(&name.trim().to_lowercase())
                    .ok_or_else(|| TaxonomyError::UnknownKey(name.clone()))?;
                match ids.as_slice() {
                    [single] => Ok(&self.nodes[single]),
                    many => Err(TaxonomyError::Ambiguous { name, ids: many.to_vec() }),
                }
            }
        }
    }

    pub fn first_level_of(&self, id: CategoryId) -> Result<CategoryId, TaxonomyError> {
        let mut node = self.resolve(id)?;
        while let Some(parent) = node.parent {
            node = &self.nodes[&parent];
        }
        Ok(node.id)
    }

    /// Ancestor chain from the root down to `id`, inclusive.
    pub fn path(&self, id: CategoryId) -> Result<Vec<&TaxonomyNode>, TaxonomyError> {
        let mut chain = vec![self.resolve(id)?];
        while let Some(parent) = chain.last().and_then(|n| n.parent) {
            chain.push(&self.nodes[&parent]);
        }
        chain.reverse();
        Ok(chain)
    }

    /// True when `id` is `ancestor` or lies below it.
    pub fn is_descendant_or_self(&self, id: CategoryId, ancestor: CategoryId) -> bool {
        let mut cursor = Some(id);
        while let Some(c) = cursor {
            if c == ancestor {
                return true;
            }
            cursor = self.nodes.get(&c).and_then(|n| n.parent);
        }
        false
    }
}

//! Entity data model and CSV-backed collection loading.
//!
//! A collection is a named table of entities. Every attribute value is an
//! optional string; empty CSV cells load as absent values. The id column is
//! itself an attribute, but it is excluded from blocking and similarity.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Index of an entity within its owning collection.
pub type EntityRef = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    /// Parallel to the collection's `attribute_names`.
    pub values: Vec<Option<String>>,
}

impl Entity {
    pub fn value(&self, attr: usize) -> Option<&str> {
        self.values.get(attr).and_then(|v| v.as_deref())
    }
}

#[derive(Debug, Clone)]
pub struct EntityCollection {
    pub name: String,
    pub attribute_names: Vec<String>,
    pub id_index: usize,
    entities: Vec<Entity>,
    by_id: HashMap<String, EntityRef>,
}

impl EntityCollection {
    pub fn new(
        name: impl Into<String>,
        attribute_names: Vec<String>,
        id_index: usize,
    ) -> EntityCollection {
        assert!(id_index < attribute_names.len());
        EntityCollection {
            name: name.into(),
            attribute_names,
            id_index,
            entities: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn push(&mut self, entity: Entity) -> Result<EntityRef, CatalogError> {
        if entity.id.is_empty() {
            return Err(CatalogError::EmptyId {
                row: self.entities.len() + 2,
            });
        }
        if self.by_id.contains_key(&entity.id) {
            return Err(CatalogError::DuplicateId { id: entity.id });
        }
        let r = self.entities.len() as EntityRef;
        self.by_id.insert(entity.id.clone(), r);
        self.entities.push(entity);
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, r: EntityRef) -> &Entity {
        &self.entities[r as usize]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn refs(&self) -> impl Iterator<Item = EntityRef> {
        0..self.entities.len() as EntityRef
    }

    pub fn lookup(&self, id: &str) -> Option<EntityRef> {
        self.by_id.get(id).copied()
    }

    /// Resolves an attribute name, exact match first, then case-insensitive.
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.attribute_names.iter().position(|a| a == name) {
            return Some(i);
        }
        self.attribute_names
            .iter()
            .position(|a| a.eq_ignore_ascii_case(name))
    }

    /// Attribute indices that take part in blocking and similarity.
    pub fn value_attrs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.attribute_names.len()).filter(move |&i| i != self.id_index)
    }
}

#[derive(Debug)]
pub enum CatalogError {
    Io(io::Error),
    Csv(csv::Error),
    EmptyHeader,
    MissingIdColumn { column: String },
    EmptyId { row: usize },
    DuplicateId { id: String },
    Ragged { row: usize, expected: usize, got: usize },
}

impl fmt::Display for CatalogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogError::Io(e) => write!(f, "io error: {e}"),
            CatalogError::Csv(e) => write!(f, "csv error: {e}"),
            CatalogError::EmptyHeader => write!(f, "header row is empty"),
            CatalogError::MissingIdColumn { column } => {
                write!(f, "id column {column:?} not found in header")
            }
            CatalogError::EmptyId { row } => write!(f, "row {row}: empty id"),
            CatalogError::DuplicateId { id } => write!(f, "duplicate id {id:?}"),
            CatalogError::Ragged { row, expected, got } => {
                write!(f, "row {row}: expected {expected} fields, got {got}")
            }
        }
    }
}

impl std::error::Error for CatalogError {}

impl From<io::Error> for CatalogError {
    fn from(e: io::Error) -> Self {
        CatalogError::Io(e)
    }
}

impl From<csv::Error> for CatalogError {
    fn from(e: csv::Error) -> Self {
        CatalogError::Csv(e)
    }
}

/// Loads a CSV file (RFC 4180, UTF-8, first row = header) as a collection.
/// `name` is the collection's registered name, `id_column` the header cell
/// holding the unique id.
pub fn load_collection(
    path: &Path,
    name: &str,
    id_column: &str,
) -> Result<EntityCollection, CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.is_empty() {
        return Err(CatalogError::EmptyHeader);
    }
    let id_index = headers
        .iter()
        .position(|h| h == id_column)
        .or_else(|| headers.iter().position(|h| h.eq_ignore_ascii_case(id_column)))
        .ok_or_else(|| CatalogError::MissingIdColumn {
            column: id_column.to_string(),
        })?;

    let mut collection = EntityCollection::new(name, headers.clone(), id_index);
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, after the header
        if record.len() != headers.len() {
            return Err(CatalogError::Ragged {
                row,
                expected: headers.len(),
                got: record.len(),
            });
        }
        let values: Vec<Option<String>> = record
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    None
                } else {
                    Some(cell.to_string())
                }
            })
            .collect();
        let id = match &values[id_index] {
            Some(id) => id.clone(),
            None => return Err(CatalogError::EmptyId { row }),
        };
        collection.push(Entity { id, values })?;
    }
    Ok(collection)
}

/// Writes a collection back to CSV; absent values serialize as empty cells.
pub fn write_collection(collection: &EntityCollection, path: &Path) -> Result<(), CatalogError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(&collection.attribute_names)?;
    for e in collection.entities() {
        let record: Vec<&str> = e.values.iter().map(|v| v.as_deref().unwrap_or("")).collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Offline sample statistics for one collection, used by the planner to
/// predict deduplicated result sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionStats {
    pub sample_size: usize,
    /// Distinct entities the sample collapses to after deduplication.
    pub sample_dedup_size: usize,
    /// (sample_size - sample_dedup_size) / sample_size: the share of sampled
    /// entities that turned out to duplicate another one.
    pub duplication_factor: f64,
}

impl CollectionStats {
    pub fn from_sizes(sample_size: usize, sample_dedup_size: usize) -> CollectionStats {
        let df = if sample_size == 0 {
            0.0
        } else {
            (sample_size.saturating_sub(sample_dedup_size)) as f64 / sample_size as f64
        };
        CollectionStats {
            sample_size,
            sample_dedup_size,
            duplication_factor: df,
        }
    }
}

/// Share of sampled entities on each side with at least one equality join
/// partner on the other side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinStats {
    pub left_join_fraction: f64,
    pub right_join_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairStatsEntry {
    pub other: String,
    pub on: (String, String),
    pub left_fraction: f64,
    pub right_fraction: f64,
}

/// Persisted form of per-collection statistics (`<collection>.stats.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsSidecar {
    pub sample_size: usize,
    pub sample_dedup_size: usize,
    pub duplication_factor: f64,
    #[serde(default)]
    pub pairs: Vec<PairStatsEntry>,
}

impl StatsSidecar {
    pub fn stats(&self) -> CollectionStats {
        CollectionStats {
            sample_size: self.sample_size,
            sample_dedup_size: self.sample_dedup_size,
            duplication_factor: self.duplication_factor,
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("stats.json")
}

pub fn load_sidecar(path: &Path) -> Result<Option<StatsSidecar>, CatalogError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    let sidecar = serde_json::from_str(&text)
        .map_err(|e| CatalogError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))?;
    Ok(Some(sidecar))
}

pub fn save_sidecar(path: &Path, sidecar: &StatsSidecar) -> Result<(), CatalogError> {
    let text = serde_json::to_string_pretty(sidecar)
        .map_err(|e| CatalogError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))?;
    fs::write(path, text)?;
    Ok(())
}

//! Procedural "digital embryo" objects.
//!
//! Objects descend from a regular icosahedron over two generations. The
//! three generation-1 parents define the categories; every generation-2
//! object belongs to the category of its parent.

mod growth;
mod mesh;
mod taxonomy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use growth::{grow, GrowthParams, MAX_EVENT_RETRIES, PATCH_RADIUS_FRACTION};
pub use mesh::{icosahedron, Mesh, DUPLICATE_TOLERANCE};
pub use taxonomy::{
    read_off, spawn_taxonomy, spawn_taxonomy_with, write_off, write_taxonomy, TaxonomyEntry, CHILDREN_PER_PARENT,
};

/// Object category, named after the generation-1 ancestor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Lauz,
    Puns,
    Eulf,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Lauz, Category::Puns, Category::Eulf];

    pub fn index(self) -> usize {
        match self {
            Category::Lauz => 0,
            Category::Puns => 1,
            Category::Eulf => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Lauz => "Lauz",
            Category::Puns => "Puns",
            Category::Eulf => "Eulf",
        }
    }

    /// Lower-case slug used in object ids and directory names.
    pub fn slug(self) -> &'static str {
        match self {
            Category::Lauz => "lauz",
            Category::Puns => "puns",
            Category::Eulf => "eulf",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageTag {
    pub generation: u8,
    pub parent_id: Option<String>,
    pub object_id: String,
    /// `None` only for the generation-0 ancestor.
    pub category: Option<Category>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {vertex} out of range")]
    BadIndex { face: usize, vertex: u32 },
    #[error("face {0} repeats a vertex")]
    RepeatedIndex(usize),
    #[error("edge ({0}, {1}) is not shared by exactly two consistently wound faces")]
    NonManifoldEdge(u32, u32),
    #[error("vertex {0} has a non-disk neighbourhood")]
    NonManifoldVertex(u32),
    #[error("face {face} is degenerate (area {area:e})")]
    Degenerate { face: usize, area: f64 },
    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(u32, u32),
    #[error("signed volume {0:e} is not positive")]
    NonPositiveVolume(f64),
    #[error("non-finite vertex coordinate at {0}")]
    NonFinite(u32),
}

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error("parent mesh is invalid: {0}")]
    InvalidParent(#[source] MeshError),
    #[error("invalid growth parameters: {0}")]
    InvalidParams(String),
    #[error("event {event} ({kind}) failed after {attempts} attempts: {last}")]
    EventFailed {
        event: usize,
        kind: &'static str,
        attempts: usize,
        last: String,
    },
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("growing {position}: {source}")]
    Growth {
        position: String,
        #[source]
        source: GrowthError,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed OFF file: {0}")]
    Off(String),
}

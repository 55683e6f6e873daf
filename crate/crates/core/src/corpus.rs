//! Labeled sample containers and line-delimited JSON persistence for
//! graph corpora and representation sets.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::Fcg;

/// A class label: a known class id, or the reserved unknown marker used
/// for test-time samples from classes the model never saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelTag {
    Known(usize),
    Unknown,
}

impl LabelTag {
    pub fn is_unknown(&self) -> bool {
        matches!(self, LabelTag::Unknown)
    }

    pub fn known_id(&self) -> Option<usize> {
        match self {
            LabelTag::Known(id) => Some(*id),
            LabelTag::Unknown => None,
        }
    }
}

impl fmt::Display for LabelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelTag::Known(id) => write!(f, "{id}"),
            LabelTag::Unknown => write!(f, "unknown"),
        }
    }
}

impl std::str::FromStr for LabelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "unknown" {
            return Ok(LabelTag::Unknown);
        }
        s.parse::<usize>()
            .map(LabelTag::Known)
            .map_err(|_| Error::UnknownLabel(s.to_string()))
    }
}

// Known classes serialize as their numeric id, the unknown marker as the
// string "unknown", so JSONL rows stay compact and self-describing.
impl Serialize for LabelTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LabelTag::Known(id) => serializer.serialize_u64(*id as u64),
            LabelTag::Unknown => serializer.serialize_str("unknown"),
        }
    }
}

impl<'de> Deserialize<'de> for LabelTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TagVisitor;
        impl Visitor<'_> for TagVisitor {
            type Value = LabelTag;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a class id or the string \"unknown\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<LabelTag, E> {
                Ok(LabelTag::Known(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<LabelTag, E> {
                if v < 0 {
                    return Err(E::custom("class ids are non-negative"));
                }
                Ok(LabelTag::Known(v as usize))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<LabelTag, E> {
                if v == "unknown" {
                    Ok(LabelTag::Unknown)
                } else {
                    v.parse::<usize>()
                        .map(LabelTag::Known)
                        .map_err(|_| E::custom(format!("unrecognized label `{v}`")))
                }
            }
        }
        deserializer.deserialize_any(TagVisitor)
    }
}

/// One embedded sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub id: String,
    pub label: LabelTag,
    pub z: Vec<f64>,
}

/// A set of embedded samples with a uniform dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RepresentationSet {
    pub items: Vec<Representation>,
}

impl RepresentationSet {
    pub fn new(items: Vec<Representation>) -> Result<Self> {
        let set = RepresentationSet { items };
        set.check_uniform()?;
        Ok(set)
    }

    fn check_uniform(&self) -> Result<()> {
        if let Some(first) = self.items.first() {
            let d = first.z.len();
            for item in &self.items {
                if item.z.len() != d {
                    return Err(Error::shape(
                        format!("representation `{}`", item.id),
                        &[d],
                        &[item.z.len()],
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.items.first().map_or(0, |r| r.z.len())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Known class ids present, ascending.
    pub fn known_classes(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .items
            .iter()
            .filter_map(|r| r.label.known_id())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// A labeled graph corpus in memory.
pub type GraphCorpus = Vec<Fcg>;

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Write one graph per line.
pub fn save_corpus(path: &Path, corpus: &[Fcg]) -> Result<()> {
    write_jsonl(path, corpus)
}

/// Read a one-graph-per-line corpus, validating each graph.
pub fn load_corpus(path: &Path) -> Result<GraphCorpus> {
    let raw: Vec<Fcg> = read_jsonl(path)?;
    raw.into_iter()
        .map(|g| {
            let mut rebuilt = Fcg::new(g.num_vertices, g.cluster_ids, g.edges)?;
            rebuilt.label = g.label;
            Ok(rebuilt)
        })
        .collect()
}

/// Write one representation per line.
pub fn save_representations(path: &Path, reps: &RepresentationSet) -> Result<()> {
    write_jsonl(path, &reps.items)
}

/// Read a one-representation-per-line set.
pub fn load_representations(path: &Path) -> Result<RepresentationSet> {
    RepresentationSet::new(read_jsonl(path)?)
}

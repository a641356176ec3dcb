//! Triple ingestion, entity/relation dictionaries and per-relation positive sets.

mod cache;
mod sampler;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};

pub use cache::{read_cache, write_cache, write_stats_csv, CACHE_MAGIC};
pub use sampler::{max_attempts, sample_positive, sample_unlinked_object};
pub use split::{split_dataset, split_dataset_with, SplitConfig, SplitDataset, SplitStrategy};

/// Dense index of an entity in the global entity dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EntityId(pub u32);

/// Dense index of a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A positive (or, in future, graded) observation `(subject, relation, object)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub subject: EntityId,
    pub object: EntityId,
    pub relation: RelationId,
    pub value: f64,
}

/// Which positive sets a membership query or negative draw must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// Training positives only; used for training negatives.
    TrainOnly,
    /// Train, validation and test positives; used for evaluation negatives.
    AllSplits,
}

/// Supported triple file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TripleFormat {
    /// `subject<TAB>relation<TAB>object`, no header, `#` comments.
    #[default]
    Tsv,
}

/// Bidirectional string <-> dense id map, ids assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[inline]
fn pair_key(s: EntityId, o: EntityId) -> u64 {
    ((s.0 as u64) << 32) | o.0 as u64
}

/// Positive pairs of one relation with hashed membership and subject degrees.
#[derive(Debug, Clone, Default)]
pub struct RelationTriples {
    pairs: Vec<(EntityId, EntityId)>,
    members: FxHashSet<u64>,
    degree: FxHashMap<u32, u32>,
}

impl RelationTriples {
    /// Returns false if the pair was already present.
    pub fn insert(&mut self, s: EntityId, o: EntityId) -> bool {
        if !self.members.insert(pair_key(s, o)) {
            return false;
        }
        self.pairs.push((s, o));
        *self.degree.entry(s.0).or_insert(0) += 1;
        true
    }

    #[inline]
    pub fn contains(&self, s: EntityId, o: EntityId) -> bool {
        self.members.contains(&pair_key(s, o))
    }

    /// Number of objects linked to `s`.
    #[inline]
    pub fn degree(&self, s: EntityId) -> usize {
        self.degree.get(&s.0).copied().unwrap_or(0) as usize
    }

    pub fn pairs(&self) -> &[(EntityId, EntityId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Entity and relation dictionaries plus the positive triple set of every relation.
#[derive(Debug, Clone)]
pub struct MultiRelationalDataset {
    entities: Arc<Dictionary>,
    relations: Arc<Dictionary>,
    per_relation: Vec<RelationTriples>,
    order: Vec<Triple>,
}

impl MultiRelationalDataset {
    /// Builds a dataset over existing dictionaries, dropping duplicate triples.
    ///
    /// Panics if a triple references an id outside the dictionaries.
    pub fn from_triples(
        entities: Arc<Dictionary>,
        relations: Arc<Dictionary>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Self {
        let mut per_relation = vec![RelationTriples::default(); relations.len()];
        let mut order = Vec::new();
        for t in triples {
            assert!(
                t.subject.index() < entities.len() && t.object.index() < entities.len(),
                "entity id out of range"
            );
            if per_relation[t.relation.index()].insert(t.subject, t.object) {
                order.push(t);
            }
        }
        Self {
            entities,
            relations,
            per_relation,
            order,
        }
    }

    /// Builds a dataset from string triples, assigning ids in first-appearance order.
    pub fn from_named<'a>(triples: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let mut entities = Dictionary::new();
        let mut relations = Dictionary::new();
        let ids: Vec<Triple> = triples
            .into_iter()
            .map(|(s, r, o)| {
                let subject = EntityId(entities.get_or_insert(s));
                let relation = RelationId(relations.get_or_insert(r));
                let object = EntityId(entities.get_or_insert(o));
                Triple {
                    subject,
                    object,
                    relation,
                    value: 1.0,
                }
            })
            .collect();
        Self::from_triples(Arc::new(entities), Arc::new(relations), ids)
    }

    pub fn entities(&self) -> &Arc<Dictionary> {
        &self.entities
    }

    pub fn relations(&self) -> &Arc<Dictionary> {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn n_triples(&self) -> usize {
        self.order.len()
    }

    pub fn relation(&self, r: RelationId) -> &RelationTriples {
        &self.per_relation[r.index()]
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.n_relations() as u32).map(RelationId)
    }

    /// Triples in insertion order.
    pub fn triples(&self) -> &[Triple] {
        &self.order
    }

    #[inline]
    pub fn contains(&self, s: EntityId, r: RelationId, o: EntityId) -> bool {
        self.per_relation[r.index()].contains(s, o)
    }

    /// Writes the triples back out as TSV in insertion order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.order {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.subject.0),
                self.relations.name(t.relation.0),
                self.entities.name(t.object.0)
            )?;
        }
        Ok(())
    }
}

impl PartialEq for MultiRelationalDataset {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.relations == other.relations
            && self.order == other.order
    }
}

/// Reads `subject<TAB>relation<TAB>object` lines. Blank lines and `#` comments are skipped.
pub fn parse_tsv<R: BufRead>(reader: R) -> Result<MultiRelationalDataset> {
    let mut entities = Dictionary::new();
    let mut relations = Dictionary::new();
    let mut triples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                found: fields.len(),
            });
        }
        let subject = EntityId(entities.get_or_insert(fields[0]));
        let relation = RelationId(relations.get_or_insert(fields[1]));
        let object = EntityId(entities.get_or_insert(fields[2]));
        triples.push(Triple {
            subject,
            object,
            relation,
            value: 1.0,
        });
    }
    if triples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(MultiRelationalDataset::from_triples(
        Arc::new(entities),
        Arc::new(relations),
        triples,
    ))
}

pub fn parse_triples(path: impl AsRef<Path>, format: TripleFormat) -> Result<MultiRelationalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        TripleFormat::Tsv => parse_tsv(BufReader::new(file)),
    }
}

/// Membership view over one dataset or a train/valid/test split.
pub trait Scope: Sync {
    fn n_entities(&self) -> usize;

    fn contains(&self, s: EntityId, r: RelationId, o: EntityId, which: Which) -> bool;

    /// Number of objects linked to `s` through `r` in the requested scope.
    fn degree(&self, s: EntityId, r: RelationId, which: Which) -> usize;
}

impl Scope for MultiRelationalDataset {
    fn n_entities(&self) -> usize {
        self.entities.len()
    }

    #[inline]
    fn contains(&self, s: EntityId, r: RelationId, o: EntityId, _which: Which) -> bool {
        MultiRelationalDataset::contains(self, s, r, o)
    }

    fn degree(&self, s: EntityId, r: RelationId, _which: Which) -> usize {
        self.per_relation[r.index()].degree(s)
    }
}

/// Free-function form of [`Scope::contains`].
pub fn contains<S: Scope + ?Sized>(scope: &S, s: EntityId, r: RelationId, o: EntityId, which: Which) -> bool {
    scope.contains(s, r, o, which)
}

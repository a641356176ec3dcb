//! Line-oriented dataset cache and the CSV stats summary.
//!
//! ```text
//! consmrf-dataset v1
//! entities <n>
//! <name>            (n lines)
//! relations <n>
//! <name>            (n lines)
//! triples <n>
//! <s>\t<r>\t<o>     (n lines, dense ids, insertion order)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Dictionary, EntityId, MultiRelationalDataset, RelationId, Triple};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &str = "consmrf-dataset v1";

pub fn write_cache(ds: &MultiRelationalDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{CACHE_MAGIC}")?;
        writeln!(out, "entities {}", ds.n_entities())?;
        for name in ds.entities().names() {
            writeln!(out, "{name}")?;
        }
        writeln!(out, "relations {}", ds.n_relations())?;
        for name in ds.relations().names() {
            writeln!(out, "{name}")?;
        }
        writeln!(out, "triples {}", ds.n_triples())?;
        for t in ds.triples() {
            writeln!(out, "{}\t{}\t{}", t.subject, t.relation, t.object)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

struct Lines<B> {
    inner: std::io::Lines<B>,
    line: usize,
}

impl<B: BufRead> Lines<B> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::io("<cache>", e)),
            None => Err(Error::Cache(format!("unexpected end of file at line {}", self.line))),
        }
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let l = self.next()?;
        l.strip_prefix(name)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| Error::Cache(format!("line {}: expected `{name} <count>`", self.line)))
    }

    fn dictionary(&mut self, name: &str) -> Result<Dictionary> {
        let n = self.section(name)?;
        let mut dict = Dictionary::new();
        for _ in 0..n {
            let l = self.next()?;
            if dict.get_or_insert(&l) as usize != dict.len() - 1 {
                return Err(Error::Cache(format!("line {}: duplicate {name} name", self.line)));
            }
        }
        Ok(dict)
    }
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<MultiRelationalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines {
        inner: BufReader::new(file).lines(),
        line: 0,
    };
    if lines.next()? != CACHE_MAGIC {
        return Err(Error::Cache(format!("missing `{CACHE_MAGIC}` header")));
    }
    let entities = lines.dictionary("entities")?;
    let relations = lines.dictionary("relations")?;
    let n = lines.section("triples")?;
    let mut triples = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.next()?;
        let ids: Vec<u32> = l.split('\t').filter_map(|f| f.parse().ok()).collect();
        let bad = || Error::Cache(format!("line {}: malformed triple", lines.line));
        let [s, r, o] = ids[..] else { return Err(bad()) };
        if s as usize >= entities.len() || o as usize >= entities.len() || r as usize >= relations.len() {
            return Err(bad());
        }
        triples.push(Triple {
            subject: EntityId(s),
            object: EntityId(o),
            relation: RelationId(r),
            value: 1.0,
        });
    }
    Ok(MultiRelationalDataset::from_triples(
        Arc::new(entities),
        Arc::new(relations),
        triples,
    ))
}

/// Writes `scope,name,count` rows: dataset totals followed by per-relation counts.
pub fn write_stats_csv<W: Write>(ds: &MultiRelationalDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scope", "name", "count"])?;
    let totals = [
        ("entities", ds.n_entities()),
        ("relations", ds.n_relations()),
        ("triples", ds.n_triples()),
    ];
    for (name, n) in totals {
        w.write_record(["dataset", name, &n.to_string()])?;
    }
    for r in ds.relation_ids() {
        w.write_record(["relation", ds.relations().name(r.0), &ds.relation(r).len().to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<stats>", e))
}

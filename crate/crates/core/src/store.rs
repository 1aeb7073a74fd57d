//! Quadruple ingestion, reciprocal augmentation, time-based splitting and
//! the per-entity temporal adjacency index.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type PredicateId = u32;
/// Dense integer time units (days for ICEWS-style data, years for YAGO).
pub type Timestamp = i64;

/// One timestamped fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
    pub timestamp: Timestamp,
}

impl Quadruple {
    pub fn new(subject: EntityId, predicate: PredicateId, object: EntityId, timestamp: Timestamp) -> Self {
        Self {
            subject,
            predicate,
            object,
            timestamp,
        }
    }
}

/// Bijective name <-> dense id map. Ids are assigned in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for n in names {
            v.get_or_insert(&n.into());
        }
        v
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Two-column `name\tid` TSV.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, name) in self.names.iter().enumerate() {
            out.push_str(name);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let (name, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected name<TAB>id".into()))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad id `{id}`")))?;
            pairs.push((id, name.to_string()));
        }
        pairs.sort();
        let mut v = Vocab::new();
        for (expected, (id, name)) in pairs.into_iter().enumerate() {
            if id != expected || v.get(&name).is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: expected + 1,
                    message: format!("vocabulary ids must be a dense bijection (id {id}, name `{name}`)"),
                });
            }
            v.get_or_insert(&name);
        }
        Ok(v)
    }
}

/// Entity and predicate vocabularies plus the time epoch shared by every split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Vocab,
    pub predicates: Vocab,
    /// Day zero for ISO-dated input.
    pub epoch: Option<NaiveDate>,
    /// When set, ids at or beyond these lengths are unseen names.
    frozen: Option<(usize, usize)>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freeze(&mut self) {
        self.frozen = Some((self.entities.len(), self.predicates.len()));
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen.is_some()
    }

    pub fn is_unseen_entity(&self, id: EntityId) -> bool {
        matches!(self.frozen, Some((n, _)) if id as usize >= n)
    }

    pub fn is_unseen_predicate(&self, id: PredicateId) -> bool {
        matches!(self.frozen, Some((_, n)) if id as usize >= n)
    }

    /// Name of a (possibly reciprocal) predicate id given the base predicate count.
    pub fn predicate_name(&self, id: PredicateId, base: usize) -> String {
        let id = id as usize;
        if id < base {
            self.predicates.name(id as u32).unwrap_or("?").to_string()
        } else {
            format!("{}^-1", self.predicates.name((id - base) as u32).unwrap_or("?"))
        }
    }

    /// Parses an integer timestamp or a `YYYY-MM-DD` date relative to the epoch.
    pub fn timestamp(&self, raw: &str) -> Result<Timestamp> {
        let bad = |message: String| Error::Config(message);
        match parse_timestamp(raw).map_err(bad)? {
            RawTime::Units(v) => Ok(v),
            RawTime::Date(d) => {
                let epoch = self
                    .epoch
                    .ok_or_else(|| bad(format!("date `{raw}` given but the dataset uses integer timestamps")))?;
                Ok((d - epoch).num_days())
            }
        }
    }

    /// Resolves a predicate name, accepting the `^-1` suffix for reciprocals.
    pub fn predicate_id(&self, name: &str, base: usize) -> Option<PredicateId> {
        if let Some(id) = self.predicates.get(name) {
            return Some(id);
        }
        let stripped = name.strip_suffix("^-1")?;
        self.predicates.get(stripped).map(|id| id + base as u32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub quadruples: Vec<Quadruple>,
    pub vocab: Vocabulary,
    pub split: Split,
    /// Per record: true if any name in it was unknown to a frozen vocabulary.
    pub unseen: Vec<bool>,
    base_predicates: Option<usize>,
}

impl Dataset {
    pub fn new(quadruples: Vec<Quadruple>, vocab: Vocabulary, split: Split) -> Self {
        let unseen = vec![false; quadruples.len()];
        Self {
            quadruples,
            vocab,
            split,
            unseen,
            base_predicates: None,
        }
    }

    pub fn len(&self) -> usize {
        self.quadruples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quadruples.is_empty()
    }

    pub fn is_augmented(&self) -> bool {
        self.base_predicates.is_some()
    }

    /// Number of base (non-reciprocal) predicates.
    pub fn base_predicates(&self) -> usize {
        self.base_predicates.unwrap_or(self.vocab.predicates.len())
    }

    /// Size of the predicate id space (doubled after augmentation).
    pub fn num_predicates(&self) -> usize {
        match self.base_predicates {
            Some(b) => 2 * b,
            None => self.vocab.predicates.len(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.entities.len()
    }

    pub fn max_timestamp(&self) -> Option<Timestamp> {
        self.quadruples.iter().map(|q| q.timestamp).max()
    }

    pub(crate) fn with_base_predicates(mut self, base: Option<usize>) -> Self {
        self.base_predicates = base;
        self
    }
}

/// Inverse predicate id; an involution on `[0, 2·base)`.
pub fn reciprocal(p: PredicateId, base: usize) -> PredicateId {
    let b = base as u32;
    if p < b {
        p + b
    } else {
        p - b
    }
}

fn parse_timestamp(raw: &str) -> std::result::Result<RawTime, String> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        if v < 0 {
            return Err(format!("negative timestamp {v}"));
        }
        return Ok(RawTime::Units(v));
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map(RawTime::Date)
        .map_err(|_| format!("timestamp `{raw}` is neither an integer nor YYYY-MM-DD"))
}

enum RawTime {
    Units(i64),
    Date(NaiveDate),
}

/// Reads a `subject\tpredicate\tobject\ttimestamp` file.
///
/// With `vocab = None` a fresh vocabulary is built. An existing vocabulary is
/// extended with new names unless frozen, in which case records mentioning
/// unknown names are kept and flagged in [`Dataset::unseen`].
pub fn load_quadruples(path: &Path, vocab: Option<Vocabulary>) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vocab = vocab.unwrap_or_default();

    let mut rows = Vec::new();
    let mut min_date: Option<NaiveDate> = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 tab-separated columns, found {}",
                fields.len()
            )));
        }
        if fields[..3].iter().any(|f| f.trim().is_empty()) {
            return Err(parse_err("empty name".into()));
        }
        let t = parse_timestamp(fields[3]).map_err(parse_err)?;
        if let RawTime::Date(d) = t {
            min_date = Some(min_date.map_or(d, |m| m.min(d)));
        }
        rows.push((lineno + 1, [fields[0].trim().to_string(), fields[1].trim().to_string(), fields[2].trim().to_string()], t));
    }

    if vocab.epoch.is_none() {
        vocab.epoch = min_date;
    }

    let mut quads = Vec::with_capacity(rows.len());
    let mut unseen = Vec::with_capacity(rows.len());
    for (lineno, [s, p, o], t) in rows {
        let timestamp = match t {
            RawTime::Units(v) => v,
            RawTime::Date(d) => {
                let epoch = vocab.epoch.expect("epoch set when any date parsed");
                let days = (d - epoch).num_days();
                if days < 0 {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        message: format!("date {d} precedes dataset epoch {epoch}"),
                    });
                }
                days
            }
        };
        let subject = vocab.entities.get_or_insert(&s);
        let predicate = vocab.predicates.get_or_insert(&p);
        let object = vocab.entities.get_or_insert(&o);
        unseen.push(
            vocab.is_unseen_entity(subject)
                || vocab.is_unseen_entity(object)
                || vocab.is_unseen_predicate(predicate),
        );
        quads.push(Quadruple::new(subject, predicate, object, timestamp));
    }

    let mut ds = Dataset::new(quads, vocab, Split::All);
    ds.unseen = unseen;
    Ok(ds)
}

/// Appends `(o, p + |P_base|, s, t)` for every `(s, p, o, t)`.
pub fn augment_reciprocal(mut d: Dataset) -> Result<Dataset> {
    if d.is_augmented() {
        return Err(Error::AlreadyAugmented);
    }
    let base = d.vocab.predicates.len();
    let n = d.quadruples.len();
    d.quadruples.reserve(n);
    for i in 0..n {
        let q = d.quadruples[i];
        d.quadruples.push(Quadruple::new(
            q.object,
            reciprocal(q.predicate, base),
            q.subject,
            q.timestamp,
        ));
    }
    let flags = d.unseen.clone();
    d.unseen.extend(flags);
    d.base_predicates = Some(base);
    Ok(d)
}

/// Partitions by timestamp: `t < t_valid`, `t_valid <= t < t_test`, `t >= t_test`.
pub fn time_split(d: &Dataset, t_valid: Timestamp, t_test: Timestamp) -> Result<(Dataset, Dataset, Dataset)> {
    if t_valid >= t_test {
        return Err(Error::InvalidSplit { t_valid, t_test });
    }
    let mut parts: [(Vec<Quadruple>, Vec<bool>); 3] = Default::default();
    for (q, &u) in d.quadruples.iter().zip(&d.unseen) {
        let k = if q.timestamp < t_valid {
            0
        } else if q.timestamp < t_test {
            1
        } else {
            2
        };
        parts[k].0.push(*q);
        parts[k].1.push(u);
    }
    let [train, valid, test] = parts;
    let build = |(quads, unseen): (Vec<Quadruple>, Vec<bool>), split: Split| {
        if quads.is_empty() {
            log::warn!("time split produced an empty {split:?} set");
        }
        let mut ds = Dataset::new(quads, d.vocab.clone(), split).with_base_predicates(d.base_predicates);
        ds.unseen = unseen;
        ds
    };
    Ok((
        build(train, Split::Train),
        build(valid, Split::Valid),
        build(test, Split::Test),
    ))
}

/// Train/valid/test sharing one vocabulary, each augmented with reciprocals.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl SplitData {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load_files(&dir.join("train.txt"), &dir.join("valid.txt"), &dir.join("test.txt"))
    }

    pub fn load_files(train: &Path, valid: &Path, test: &Path) -> Result<Self> {
        let epoch = earliest_date(&[train, valid, test])?;
        let vocab = Vocabulary {
            epoch,
            ..Vocabulary::default()
        };
        let train = load_quadruples(train, Some(vocab))?;
        let valid = load_quadruples(valid, Some(train.vocab.clone()))?;
        let test = load_quadruples(test, Some(valid.vocab.clone()))?;
        Ok(Self::from_raw(train, valid, test))
    }

    /// Assigns the final vocabulary to every split and augments each one.
    pub fn from_raw(train: Dataset, valid: Dataset, test: Dataset) -> Self {
        let vocab = test.vocab.clone();
        let fix = |mut d: Dataset, split: Split| {
            d.vocab = vocab.clone();
            d.split = split;
            augment_reciprocal(d).expect("fresh split is not augmented")
        };
        Self {
            train: fix(train, Split::Train),
            valid: fix(valid, Split::Valid),
            test: fix(test, Split::Test),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.test.vocab
    }

    pub fn num_entities(&self) -> usize {
        self.vocab().entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.test.num_predicates()
    }

    pub fn base_predicates(&self) -> usize {
        self.test.base_predicates()
    }

    pub fn all_quadruples(&self) -> impl Iterator<Item = &Quadruple> {
        self.train
            .quadruples
            .iter()
            .chain(&self.valid.quadruples)
            .chain(&self.test.quadruples)
    }

    /// Adjacency over every split; causality is enforced at query time.
    pub fn adjacency(&self) -> TemporalAdjacency {
        TemporalAdjacency::build(self.num_entities(), self.all_quadruples().copied())
    }
}

fn earliest_date(paths: &[&Path]) -> Result<Option<NaiveDate>> {
    let mut min: Option<NaiveDate> = None;
    for path in paths {
        let file = fs::File::open(path).map_err(|e| Error::io(*path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(*path, e))?;
            if let Some(raw) = line.trim_end_matches('\r').split('\t').nth(3) {
                if let Ok(RawTime::Date(d)) = parse_timestamp(raw) {
                    min = Some(min.map_or(d, |m| m.min(d)));
                }
            }
        }
    }
    Ok(min)
}

pub fn write_quadruples(path: &Path, quads: &[Quadruple], vocab: &Vocabulary) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for q in quads {
        let s = vocab.entities.name(q.subject).ok_or(Error::UnknownEntity(q.subject))?;
        let p = vocab.predicates.name(q.predicate).ok_or(Error::UnknownPredicate(q.predicate))?;
        let o = vocab.entities.name(q.object).ok_or(Error::UnknownEntity(q.object))?;
        writeln!(w, "{s}\t{p}\t{o}\t{}", q.timestamp).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One entry of an entity's time-sorted edge list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdjEntry {
    pub predicate: PredicateId,
    pub neighbor: EntityId,
    pub timestamp: Timestamp,
}

/// CSR index of outgoing edges per entity, each list sorted by timestamp.
#[derive(Clone, Debug)]
pub struct TemporalAdjacency {
    offsets: Vec<usize>,
    entries: Vec<AdjEntry>,
}

impl TemporalAdjacency {
    pub fn build(num_entities: usize, quads: impl IntoIterator<Item = Quadruple>) -> Self {
        let quads: Vec<Quadruple> = quads.into_iter().collect();
        let n = num_entities.max(
            quads
                .iter()
                .map(|q| q.subject.max(q.object) as usize + 1)
                .max()
                .unwrap_or(0),
        );
        let mut offsets = vec![0usize; n + 1];
        for q in &quads {
            offsets[q.subject as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![
            AdjEntry {
                predicate: 0,
                neighbor: 0,
                timestamp: 0
            };
            quads.len()
        ];
        for q in &quads {
            let slot = &mut cursor[q.subject as usize];
            entries[*slot] = AdjEntry {
                predicate: q.predicate,
                neighbor: q.object,
                timestamp: q.timestamp,
            };
            *slot += 1;
        }
        for e in 0..n {
            entries[offsets[e]..offsets[e + 1]].sort_by_key(|a| a.timestamp);
        }
        Self { offsets, entries }
    }

    pub fn num_entities(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Full time-sorted list for `entity`.
    pub fn edges(&self, entity: EntityId) -> &[AdjEntry] {
        let e = entity as usize;
        if e + 1 >= self.offsets.len() {
            return &[];
        }
        &self.entries[self.offsets[e]..self.offsets[e + 1]]
    }

    /// Edges of `entity` with timestamp strictly before `t`, ascending by time.
    pub fn prior_edges(&self, entity: EntityId, t: Timestamp) -> &[AdjEntry] {
        let list = self.edges(entity);
        let end = list.partition_point(|a| a.timestamp < t);
        &list[..end]
    }

    /// Flattens back to quadruples (subject-major order).
    pub fn quadruples(&self) -> impl Iterator<Item = Quadruple> + '_ {
        (0..self.num_entities()).flat_map(move |e| {
            self.edges(e as EntityId)
                .iter()
                .map(move |a| Quadruple::new(e as EntityId, a.predicate, a.neighbor, a.timestamp))
        })
    }
}

/// Counts reported by `ingest`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetStats {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub entities: usize,
    pub base_predicates: usize,
    pub predicates: usize,
    pub timestamps: usize,
}

impl SplitData {
    /// Counts of base (non-reciprocal) quadruples per split.
    pub fn stats(&self) -> DatasetStats {
        let mut ts: Vec<Timestamp> = self.all_quadruples().map(|q| q.timestamp).collect();
        ts.sort_unstable();
        ts.dedup();
        DatasetStats {
            train: self.train.len() / 2,
            valid: self.valid.len() / 2,
            test: self.test.len() / 2,
            entities: self.num_entities(),
            base_predicates: self.base_predicates(),
            predicates: self.num_predicates(),
            timestamps: ts.len(),
        }
    }
}

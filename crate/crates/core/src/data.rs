//! Dataset loading, reciprocal augmentation, filter indexes, entity frequency
//! weights and relation-cardinality labels.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{KgeError, Result};

/// Label used for facts that carry no timestamp in a temporal corpus.
pub const NO_TIME_LABEL: &str = "<NO_TIME>";

/// One fact: a triple, or a quadruple when `time` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
    pub time: Option<u32>,
}

impl Fact {
    pub fn triple(head: u32, relation: u32, tail: u32) -> Self {
        Fact {
            head,
            relation,
            tail,
            time: None,
        }
    }

    pub fn quad(head: u32, relation: u32, tail: u32, time: u32) -> Self {
        Fact {
            head,
            relation,
            tail,
            time: Some(time),
        }
    }
}

/// Bijection between labels and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `label`, assigning the next free id if unseen.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, label) in self.labels.iter().enumerate() {
            out.push_str(&format!("{id}\t{label}\n"));
        }
        fs::write(path, out).map_err(|e| KgeError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub entities: Vocab,
    /// Raw relation labels; reciprocal ids are `raw + num_raw_relations()`.
    pub relations: Vocab,
    pub timestamps: Vocab,
    pub train: Vec<Fact>,
    pub valid: Vec<Fact>,
    pub test: Vec<Fact>,
    pub temporal: bool,
    pub reciprocal_applied: bool,
    /// Id of the reserved untimed slot, when the corpus has untimed facts.
    pub no_time: Option<u32>,
}

/// Corpus size summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities\t{}", self.entities)?;
        writeln!(f, "relations\t{}", self.relations)?;
        if self.timestamps > 0 {
            writeln!(f, "timestamps\t{}", self.timestamps)?;
        }
        writeln!(f, "train\t{}", self.train)?;
        writeln!(f, "valid\t{}", self.valid)?;
        write!(f, "test\t{}", self.test)
    }
}

struct RawFact<'a> {
    head: &'a str,
    relation: &'a str,
    tail: &'a str,
    time: Option<&'a str>,
}

fn parse_lines<'a>(path: &Path, text: &'a str, temporal: bool) -> Result<Vec<RawFact<'a>>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let fact = match (fields.len(), temporal) {
            (3, _) => RawFact {
                head: fields[0],
                relation: fields[1],
                tail: fields[2],
                time: None,
            },
            (4, true) => RawFact {
                head: fields[0],
                relation: fields[1],
                tail: fields[2],
                time: Some(fields[3]).filter(|t| !t.trim().is_empty()),
            },
            (n, _) => {
                return Err(KgeError::Parse {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: format!(
                        "expected {} tab-separated fields, found {n}",
                        if temporal { "3 or 4" } else { "3" }
                    ),
                })
            }
        };
        out.push(fact);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| KgeError::io(path, e))
}

impl Dataset {
    /// Loads a corpus from three TSV files of raw labels.
    ///
    /// Entity and relation ids follow first-seen order over train, valid,
    /// test. Timestamp ids follow sorted label order so consecutive ids are
    /// chronologically adjacent; untimed facts in a temporal corpus map to a
    /// reserved id after every real timestamp.
    pub fn load(train: &Path, valid: &Path, test: &Path, temporal: bool) -> Result<Self> {
        let texts = [read(train)?, read(valid)?, read(test)?];
        let paths = [train, valid, test];
        let mut raw = Vec::with_capacity(3);
        for (text, path) in texts.iter().zip(paths) {
            raw.push(parse_lines(path, text, temporal)?);
        }
        if raw[0].is_empty() {
            return Err(KgeError::Data(format!(
                "training split {} is empty",
                train.display()
            )));
        }

        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        for split in &raw {
            for f in split {
                entities.intern(f.head);
                relations.intern(f.relation);
                entities.intern(f.tail);
            }
        }

        let mut timestamps = Vocab::new();
        let mut no_time = None;
        if temporal {
            let stamps: BTreeSet<&str> = raw.iter().flatten().filter_map(|f| f.time).collect();
            for s in stamps {
                timestamps.intern(s);
            }
            if raw.iter().flatten().any(|f| f.time.is_none()) {
                no_time = Some(timestamps.intern(NO_TIME_LABEL));
            }
        }

        let convert = |split: &Vec<RawFact<'_>>| -> Vec<Fact> {
            split
                .iter()
                .map(|f| Fact {
                    head: entities.id(f.head).unwrap(),
                    relation: relations.id(f.relation).unwrap(),
                    tail: entities.id(f.tail).unwrap(),
                    time: if temporal {
                        Some(match f.time {
                            Some(t) => timestamps.id(t).unwrap(),
                            None => no_time.unwrap(),
                        })
                    } else {
                        None
                    },
                })
                .collect()
        };
        let (train_f, valid_f, test_f) = (convert(&raw[0]), convert(&raw[1]), convert(&raw[2]));

        Ok(Dataset {
            entities,
            relations,
            timestamps,
            train: train_f,
            valid: valid_f,
            test: test_f,
            temporal,
            reciprocal_applied: false,
            no_time,
        })
    }

    /// Loads `train.txt`, `valid.txt` and `test.txt` from a directory.
    pub fn load_dir(dir: &Path, temporal: bool) -> Result<Self> {
        let p = |name: &str| -> PathBuf { dir.join(name) };
        Self::load(&p("train.txt"), &p("valid.txt"), &p("test.txt"), temporal)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_raw_relations(&self) -> usize {
        self.relations.len()
    }

    /// Relation count seen by models: doubled once reciprocals are added.
    pub fn num_relations(&self) -> usize {
        if self.reciprocal_applied {
            2 * self.relations.len()
        } else {
            self.relations.len()
        }
    }

    pub fn num_timestamps(&self) -> usize {
        self.timestamps.len()
    }

    /// Appends `(v, r + |R|, u[, t])` for every fact in every split.
    pub fn add_reciprocals(mut self) -> Result<Self> {
        if self.reciprocal_applied {
            return Err(KgeError::Protocol(
                "reciprocal relations were already added".into(),
            ));
        }
        let offset = self.relations.len() as u32;
        for split in [&mut self.train, &mut self.valid, &mut self.test] {
            let inverse: Vec<Fact> = split.iter().map(|f| reciprocal_of(f, offset)).collect();
            split.extend(inverse);
        }
        self.reciprocal_applied = true;
        Ok(self)
    }

    /// Counts of the raw corpus, regardless of augmentation.
    pub fn stats(&self) -> DatasetStats {
        let div = if self.reciprocal_applied { 2 } else { 1 };
        DatasetStats {
            entities: self.entities.len(),
            relations: self.relations.len(),
            timestamps: self.timestamps.len(),
            train: self.train.len() / div,
            valid: self.valid.len() / div,
            test: self.test.len() / div,
        }
    }

    /// Writes `entities.tsv`, `relations.tsv` and, for temporal corpora,
    /// `timestamps.tsv` into `dir`.
    pub fn write_vocab(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| KgeError::io(dir, e))?;
        self.entities.write_tsv(&dir.join("entities.tsv"))?;
        self.relations.write_tsv(&dir.join("relations.tsv"))?;
        if self.temporal {
            self.timestamps.write_tsv(&dir.join("timestamps.tsv"))?;
        }
        Ok(())
    }

    /// Content hashes of the three vocabularies, for checkpoint sidecars.
    pub fn vocab_hashes(&self) -> [(&'static str, String); 3] {
        use sha2::{Digest, Sha256};
        let h = |v: &Vocab| {
            let mut hasher = Sha256::new();
            for l in v.labels() {
                hasher.update(l.as_bytes());
                hasher.update(b"\n");
            }
            hex::encode(hasher.finalize())
        };
        [
            ("entities", h(&self.entities)),
            ("relations", h(&self.relations)),
            ("timestamps", h(&self.timestamps)),
        ]
    }

    pub fn write_vocab_sidecar(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| KgeError::io(path, e))?;
        for (name, hash) in self.vocab_hashes() {
            writeln!(f, "{name}\t{hash}").map_err(|e| KgeError::io(path, e))?;
        }
        Ok(())
    }
}

/// The reciprocal of a fact given the raw relation count.
pub fn reciprocal_of(f: &Fact, num_raw_relations: u32) -> Fact {
    let relation = if f.relation >= num_raw_relations {
        f.relation - num_raw_relations
    } else {
        f.relation + num_raw_relations
    };
    Fact {
        head: f.tail,
        relation,
        tail: f.head,
        time: f.time,
    }
}

type FilterKey = (u32, u32, u32);

fn filter_key(head: u32, relation: u32, time: Option<u32>) -> FilterKey {
    (head, relation, time.unwrap_or(u32::MAX))
}

/// Known-true tails for every `(head, relation[, time])` query over all splits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterIndex {
    answers: HashMap<FilterKey, Vec<u32>>,
}

impl FilterIndex {
    pub fn build(dataset: &Dataset) -> Result<Self> {
        if !dataset.reciprocal_applied {
            return Err(KgeError::Protocol(
                "filter index requires reciprocal augmentation".into(),
            ));
        }
        Ok(Self::from_facts(
            dataset
                .train
                .iter()
                .chain(&dataset.valid)
                .chain(&dataset.test),
        ))
    }

    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a Fact>) -> Self {
        let mut answers: HashMap<FilterKey, Vec<u32>> = HashMap::new();
        for f in facts {
            answers
                .entry(filter_key(f.head, f.relation, f.time))
                .or_default()
                .push(f.tail);
        }
        for v in answers.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        FilterIndex { answers }
    }

    /// Sorted known-true tails for a query; empty when the key is absent.
    pub fn answers(&self, head: u32, relation: u32, time: Option<u32>) -> &[u32] {
        self.answers
            .get(&filter_key(head, relation, time))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, head: u32, relation: u32, time: Option<u32>, tail: u32) -> bool {
        self.answers(head, relation, time).binary_search(&tail).is_ok()
    }

    pub fn num_keys(&self) -> usize {
        self.answers.len()
    }
}

/// How often each entity appears as the answer of a training query.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    max: u64,
}

impl FrequencyTable {
    pub fn from_train(train: &[Fact], num_entities: usize) -> Self {
        let mut counts = vec![0u64; num_entities];
        for f in train {
            counts[f.tail as usize] += 1;
        }
        let max = counts.iter().copied().max().unwrap_or(0);
        FrequencyTable { counts, max }
    }

    pub fn count(&self, entity: u32) -> u64 {
        self.counts[entity as usize]
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    /// `w(v) = w0 · #v / max #v + (1 − w0)`.
    pub fn weight(&self, entity: u32, w0: f64) -> Result<f64> {
        entity_weight(self, entity, w0)
    }
}

pub fn entity_weight(freq: &FrequencyTable, entity: u32, w0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w0) {
        return Err(KgeError::Config(format!("w0 must lie in [0, 1], got {w0}")));
    }
    if freq.max == 0 {
        return Err(KgeError::Data("frequency table has no counts".into()));
    }
    let ratio = freq.count(entity) as f64 / freq.max as f64;
    Ok(w0 * ratio + (1.0 - w0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl RelationType {
    /// Type seen by the reciprocal query of a relation of this type.
    pub fn reversed(self) -> Self {
        match self {
            RelationType::OneToMany => RelationType::ManyToOne,
            RelationType::ManyToOne => RelationType::OneToMany,
            t => t,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::OneToOne => "1-1",
            RelationType::OneToMany => "1-N",
            RelationType::ManyToOne => "N-1",
            RelationType::ManyToMany => "N-N",
        }
    }

    pub const ALL: [RelationType; 4] = [
        RelationType::OneToOne,
        RelationType::OneToMany,
        RelationType::ManyToOne,
        RelationType::ManyToMany,
    ];
}

pub const RELATION_TYPE_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationStats {
    pub kind: RelationType,
    /// Mean number of distinct tails per distinct head.
    pub tails_per_head: f64,
    /// Mean number of distinct heads per distinct tail.
    pub heads_per_tail: f64,
}

#[derive(Debug, Clone)]
pub struct RelationTypeMap {
    stats: Vec<RelationStats>,
}

impl RelationTypeMap {
    pub fn get(&self, raw_relation: u32) -> &RelationStats {
        &self.stats[raw_relation as usize]
    }

    /// Type attributed to a query on a possibly-reciprocal relation id.
    pub fn query_type(&self, relation: u32) -> RelationType {
        let n = self.stats.len() as u32;
        if relation >= n {
            self.stats[(relation - n) as usize].kind.reversed()
        } else {
            self.stats[relation as usize].kind
        }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationStats> {
        self.stats.iter()
    }
}

fn label(tph: f64, hpt: f64) -> RelationType {
    let many_tails = tph >= RELATION_TYPE_THRESHOLD;
    let many_heads = hpt >= RELATION_TYPE_THRESHOLD;
    match (many_heads, many_tails) {
        (false, false) => RelationType::OneToOne,
        (false, true) => RelationType::OneToMany,
        (true, false) => RelationType::ManyToOne,
        (true, true) => RelationType::ManyToMany,
    }
}

/// Labels every raw relation by its head/tail cardinality in `train`.
/// Facts on reciprocal relation ids are ignored.
pub fn classify_relations(train: &[Fact], num_raw_relations: usize) -> RelationTypeMap {
    let mut pairs: Vec<HashSet<(u32, u32)>> = vec![HashSet::new(); num_raw_relations];
    for f in train {
        if (f.relation as usize) < num_raw_relations {
            pairs[f.relation as usize].insert((f.head, f.tail));
        }
    }
    let stats = pairs
        .iter()
        .enumerate()
        .map(|(r, set)| {
            if set.is_empty() {
                log::warn!("relation {r} has no training facts; labelled 1-1");
                return RelationStats {
                    kind: RelationType::OneToOne,
                    tails_per_head: 0.0,
                    heads_per_tail: 0.0,
                };
            }
            let heads: HashSet<u32> = set.iter().map(|p| p.0).collect();
            let tails: HashSet<u32> = set.iter().map(|p| p.1).collect();
            let tph = set.len() as f64 / heads.len() as f64;
            let hpt = set.len() as f64 / tails.len() as f64;
            RelationStats {
                kind: label(tph, hpt),
                tails_per_head: tph,
                heads_per_tail: hpt,
            }
        })
        .collect();
    RelationTypeMap { stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_tiny_static_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "a\tr\tb\nb\tr\ta\na\tr\ta\n");
        let va = write(dir.path(), "valid.txt", "");
        let te = write(dir.path(), "test.txt", "");
        let ds = Dataset::load(&tr, &va, &te, false).unwrap();
        assert_eq!(ds.num_entities(), 2);
        assert_eq!(ds.num_raw_relations(), 1);
        assert_eq!(ds.train.len(), 3);
        assert_eq!(ds.entities.id("a"), Some(0));
        assert_eq!(ds.entities.id("b"), Some(1));
        assert_eq!(ds.train[0], Fact::triple(0, 0, 1));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "a\tr\tb\na\tr\n");
        let va = write(dir.path(), "valid.txt", "");
        let te = write(dir.path(), "test.txt", "");
        match Dataset::load(&tr, &va, &te, false) {
            Err(KgeError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_train_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "\n");
        let va = write(dir.path(), "valid.txt", "a\tr\tb\n");
        let te = write(dir.path(), "test.txt", "");
        assert!(matches!(
            Dataset::load(&tr, &va, &te, false),
            Err(KgeError::Data(_))
        ));
    }

    #[test]
    fn temporal_ids_are_chronological_with_no_time_last() {
        let dir = tempfile::tempdir().unwrap();
        let tr = write(
            dir.path(),
            "train.txt",
            "a\tr\tb\t2014-03-01\nb\tr\tc\t2014-01-01\nc\tr\ta\n",
        );
        let va = write(dir.path(), "valid.txt", "a\tr\tc\t2014-02-01\n");
        let te = write(dir.path(), "test.txt", "");
        let ds = Dataset::load(&tr, &va, &te, true).unwrap();
        assert_eq!(ds.timestamps.labels(), &[
            "2014-01-01",
            "2014-02-01",
            "2014-03-01",
            NO_TIME_LABEL
        ]);
        assert_eq!(ds.no_time, Some(3));
        assert_eq!(ds.train[0].time, Some(2));
        assert_eq!(ds.train[2].time, Some(3));
    }

    #[test]
    fn reciprocal_of_single_triple() {
        let mut ds = toy(vec![Fact::triple(0, 0, 1)], 2, 1);
        ds = ds.add_reciprocals().unwrap();
        assert_eq!(ds.train, vec![Fact::triple(0, 0, 1), Fact::triple(1, 1, 0)]);
        assert_eq!(ds.num_relations(), 2);
        assert!(ds.clone().add_reciprocals().is_err());
    }

    #[test]
    fn reciprocal_of_empty_split_doubles_relations() {
        let mut ds = toy(vec![Fact::triple(0, 0, 1)], 2, 3);
        ds.valid.clear();
        let ds = ds.add_reciprocals().unwrap();
        assert!(ds.valid.is_empty());
        assert_eq!(ds.num_relations(), 6);
    }

    #[test]
    fn filter_index_groups_tails() {
        let idx = FilterIndex::from_facts(&[Fact::triple(0, 0, 2), Fact::triple(0, 0, 1)]);
        assert_eq!(idx.answers(0, 0, None), &[1, 2]);
        assert!(idx.answers(1, 0, None).is_empty());
    }

    #[test]
    fn filter_index_requires_reciprocals() {
        let ds = toy(vec![Fact::triple(0, 0, 1)], 2, 1);
        assert!(FilterIndex::build(&ds).is_err());
    }

    #[test]
    fn entity_weight_examples() {
        let train = [
            Fact::triple(0, 0, 1),
            Fact::triple(0, 0, 1),
            Fact::triple(0, 0, 1),
            Fact::triple(0, 0, 1),
            Fact::triple(1, 0, 2),
            Fact::triple(1, 0, 2),
        ];
        let freq = FrequencyTable::from_train(&train, 3);
        assert_eq!(freq.max(), 4);
        assert_eq!(entity_weight(&freq, 1, 0.37).unwrap(), 1.0);
        assert!((entity_weight(&freq, 2, 0.1).unwrap() - 0.95).abs() < 1e-12);
        for e in 0..3 {
            assert_eq!(entity_weight(&freq, e, 0.0).unwrap(), 1.0);
        }
        assert!(entity_weight(&freq, 0, 1.5).is_err());
        assert!(entity_weight(&freq, 0, -0.1).is_err());
    }

    #[test]
    fn relation_type_examples() {
        // (a,x),(a,y),(b,z) -> tph 1.5, hpt 1.0
        let one_n = [
            Fact::triple(0, 0, 10),
            Fact::triple(0, 0, 11),
            Fact::triple(1, 0, 12),
        ];
        // bijection over 4 entities
        let one_one = [
            Fact::triple(0, 1, 1),
            Fact::triple(1, 1, 2),
            Fact::triple(2, 1, 3),
            Fact::triple(3, 1, 0),
        ];
        // complete bipartite 2x2
        let n_n = [
            Fact::triple(0, 2, 5),
            Fact::triple(0, 2, 6),
            Fact::triple(1, 2, 5),
            Fact::triple(1, 2, 6),
        ];
        let all: Vec<Fact> = one_n.iter().chain(&one_one).chain(&n_n).copied().collect();
        let map = classify_relations(&all, 4);
        let s0 = map.get(0);
        assert_eq!((s0.tails_per_head, s0.heads_per_tail), (1.5, 1.0));
        assert_eq!(s0.kind, RelationType::OneToMany);
        assert_eq!(map.get(1).kind, RelationType::OneToOne);
        assert_eq!(
            (map.get(1).tails_per_head, map.get(1).heads_per_tail),
            (1.0, 1.0)
        );
        assert_eq!(map.get(2).kind, RelationType::ManyToMany);
        assert_eq!(map.get(2).tails_per_head, 2.0);
        let empty = map.get(3);
        assert_eq!(empty.kind, RelationType::OneToOne);
        assert_eq!(empty.tails_per_head, 0.0);
        assert_eq!(map.query_type(4), RelationType::ManyToOne);
    }

    fn toy(train: Vec<Fact>, n_ent: usize, n_rel: usize) -> Dataset {
        let mut entities = Vocab::new();
        for i in 0..n_ent {
            entities.intern(&format!("e{i}"));
        }
        let mut relations = Vocab::new();
        for i in 0..n_rel {
            relations.intern(&format!("r{i}"));
        }
        Dataset {
            entities,
            relations,
            timestamps: Vocab::new(),
            valid: train.clone(),
            test: Vec::new(),
            train,
            temporal: false,
            reciprocal_applied: false,
            no_time: None,
        }
    }

    fn arb_facts() -> impl Strategy<Value = Vec<Fact>> {
        proptest::collection::vec((0u32..6, 0u32..3, 0u32..6), 0..50)
            .prop_map(|v| v.into_iter().map(|(h, r, t)| Fact::triple(h, r, t)).collect())
    }

    proptest! {
        #[test]
        fn filter_index_agrees_with_linear_scan(facts in arb_facts()) {
            let idx = FilterIndex::from_facts(&facts);
            for h in 0..6 {
                for r in 0..3 {
                    for c in 0..6 {
                        let scan = facts.iter().any(|f| f.head == h && f.relation == r && f.tail == c);
                        prop_assert_eq!(idx.contains(h, r, None, c), scan);
                    }
                }
            }
            for f in &facts {
                prop_assert!(idx.contains(f.head, f.relation, f.time, f.tail));
            }
        }

        #[test]
        fn reciprocals_double_and_invert(facts in arb_facts()) {
            let n = facts.len();
            let ds = toy(facts.clone(), 6, 3).add_reciprocals().unwrap();
            prop_assert_eq!(ds.train.len(), 2 * n);
            prop_assert_eq!(ds.num_relations(), 6);
            for f in &facts {
                prop_assert_eq!(reciprocal_of(&reciprocal_of(f, 3), 3), *f);
            }
        }

        #[test]
        fn entity_weight_is_monotone(counts in proptest::collection::vec(0usize..20, 2..8), w0 in 0.0f64..=1.0) {
            let mut train = Vec::new();
            for (e, &c) in counts.iter().enumerate() {
                for _ in 0..c { train.push(Fact::triple(0, 0, e as u32)); }
            }
            prop_assume!(!train.is_empty());
            let freq = FrequencyTable::from_train(&train, counts.len());
            let mut order: Vec<u32> = (0..counts.len() as u32).collect();
            order.sort_by_key(|&e| freq.count(e));
            let ws: Vec<f64> = order.iter().map(|&e| entity_weight(&freq, e, w0).unwrap()).collect();
            for pair in ws.windows(2) { prop_assert!(pair[0] <= pair[1]); }
            let top = *order.last().unwrap();
            prop_assert!((entity_weight(&freq, top, w0).unwrap() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn vocab_round_trip(labels in proptest::collection::vec("[a-z]{1,6}", 1..20)) {
            let mut v = Vocab::new();
            for l in &labels { v.intern(l); }
            for id in 0..v.len() as u32 {
                prop_assert_eq!(v.id(v.label(id).unwrap()), Some(id));
            }
        }
    }
}

//! Triple-file ingestion, vocabulary interning, split construction and
//! position-constrained negative generation for classification sets.
//!
//! Input files are TSV: `head<TAB>relation<TAB>tail` with an optional fourth
//! confidence column. Names are opaque strings; no normalization is applied.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Interned entity identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Interned relation identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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

/// One (head, relation, tail, confidence) record, the unit of training and
/// evaluation. Confidence lies in (0, 1]; 1.0 denotes ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub confidence: f64,
}

impl Belief {
    #[inline]
    pub fn triple(&self) -> (EntityId, RelationId, EntityId) {
        (self.head, self.relation, self.tail)
    }
}

/// A belief paired with a positive/negative label, as used by the
/// triplet-classification task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub belief: Belief,
    pub label: bool,
}

/// A raw, un-interned line from a triple file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: expected {expected} tab-separated fields, got {got}: {content:?}")]
    MalformedLine {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
        content: String,
    },
    #[error("{path}:{line}: cannot parse confidence {value:?}")]
    BadConfidence {
        path: String,
        line: usize,
        value: String,
    },
    #[error("confidence {value} outside (0, 1] for triple ({head}, {relation}, {tail})")]
    ConfidenceOutOfRange {
        head: String,
        relation: String,
        tail: String,
        value: f64,
    },
    #[error("no beliefs left after dropping confidence <= 0.5 ({input} input records)")]
    NoReservedBeliefs { input: usize },
    #[error(
        "insufficient ground-truth beliefs: {available} with confidence 1.0, \
         but valid ({valid_size}) + test ({test_size}) requested"
    )]
    InsufficientGroundTruth {
        available: usize,
        valid_size: usize,
        test_size: usize,
    },
    #[error(
        "could not corrupt ({head}, {relation}, {tail}): position set and fallback \
         exhausted after {attempts} attempts each"
    )]
    CorruptionExhausted {
        head: String,
        relation: String,
        tail: String,
        attempts: usize,
    },
    #[error("unknown {kind} name(s) in input: {offenders}")]
    UnknownNames { kind: String, offenders: String },
    #[error("{path}:{line}: label must be 0 or 1, got {value:?}")]
    BadLabel {
        path: String,
        line: usize,
        value: String,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Bidirectional name <-> id map. Ids are assigned in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
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
}

/// Which split a belief belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Interned corpus: vocabularies, split lists and lookup indexes.
///
/// Immutable after construction; evaluation workers may read it concurrently.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Belief>,
    valid: Vec<Belief>,
    test: Vec<Belief>,
    /// Distinct (h, r, t) keys over train ∪ valid ∪ test. Duplicate triples in
    /// the split lists are kept there but stored once here.
    all_triples: HashSet<(EntityId, RelationId, EntityId)>,
    /// Per relation: entities observed as head anywhere in the data, sorted.
    heads_of: Vec<Vec<EntityId>>,
    /// Per relation: entities observed as tail anywhere in the data, sorted.
    tails_of: Vec<Vec<EntityId>>,
}

impl KnowledgeBase {
    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, split: Split) -> &[Belief] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Belief] {
        &self.train
    }

    pub fn valid(&self) -> &[Belief] {
        &self.valid
    }

    pub fn test(&self) -> &[Belief] {
        &self.test
    }

    pub fn contains_triple(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.all_triples.contains(&(h, r, t))
    }

    pub fn all_triples(&self) -> &HashSet<(EntityId, RelationId, EntityId)> {
        &self.all_triples
    }

    pub fn heads_of(&self, r: RelationId) -> &[EntityId] {
        &self.heads_of[r.index()]
    }

    pub fn tails_of(&self, r: RelationId) -> &[EntityId] {
        &self.tails_of[r.index()]
    }

    /// Existence set restricted to training triples, for `--filter-split train`.
    pub fn train_triples(&self) -> HashSet<(EntityId, RelationId, EntityId)> {
        self.train.iter().map(Belief::triple).collect()
    }

    /// Fixed-key statistics table in split order.
    pub fn stats(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("entities", self.num_entities()),
            ("relations", self.num_relations()),
            ("train", self.train.len()),
            ("valid", self.valid.len()),
            ("test", self.test.len()),
        ]
    }
}

/// Parse a TSV triple file into raw records, in file order.
///
/// Lines have 3 fields, or 4 when `has_confidence_column` is set; the fourth
/// field must parse as a real. Empty lines are skipped; CRLF endings accepted.
/// Missing confidence is filled with `default_confidence`.
pub fn parse_triples(
    path: impl AsRef<Path>,
    default_confidence: f64,
    has_confidence_column: bool,
) -> Result<Vec<RawRecord>, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    parse_triples_str(&text, &display, default_confidence, has_confidence_column)
}

pub fn parse_triples_str(
    text: &str,
    path: &str,
    default_confidence: f64,
    has_confidence_column: bool,
) -> Result<Vec<RawRecord>, DataError> {
    let expected = if has_confidence_column { 4 } else { 3 };
    let mut records = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != expected {
            return Err(DataError::MalformedLine {
                path: path.to_owned(),
                line: idx + 1,
                expected,
                got: fields.len(),
                content: line.to_owned(),
            });
        }
        let confidence = if has_confidence_column {
            let value = fields[3].trim();
            value.parse::<f64>().ok().filter(|c| c.is_finite()).ok_or_else(|| {
                DataError::BadConfidence {
                    path: path.to_owned(),
                    line: idx + 1,
                    value: fields[3].to_owned(),
                }
            })?
        } else {
            default_confidence
        };
        records.push(RawRecord {
            head: fields[0].to_owned(),
            relation: fields[1].to_owned(),
            tail: fields[2].to_owned(),
            confidence,
        });
    }
    Ok(records)
}

/// Build a knowledge base from pre-split record lists (e.g. FB15K).
///
/// Ids are assigned in first-appearance order scanning train, then valid,
/// then test. Duplicate triples stay in the split lists but are stored once
/// in the existence set. Confidences must lie in (0, 1].
pub fn build_kb(
    train: &[RawRecord],
    valid: &[RawRecord],
    test: &[RawRecord],
) -> Result<KnowledgeBase, DataError> {
    let mut entities = Vocab::default();
    let mut relations = Vocab::default();
    let mut all_triples = HashSet::new();

    let mut intern_split = |records: &[RawRecord]| -> Result<Vec<Belief>, DataError> {
        let mut beliefs = Vec::with_capacity(records.len());
        for rec in records {
            if !(rec.confidence > 0.0 && rec.confidence <= 1.0) {
                return Err(DataError::ConfidenceOutOfRange {
                    head: rec.head.clone(),
                    relation: rec.relation.clone(),
                    tail: rec.tail.clone(),
                    value: rec.confidence,
                });
            }
            let head = EntityId(entities.intern(&rec.head));
            let relation = RelationId(relations.intern(&rec.relation));
            let tail = EntityId(entities.intern(&rec.tail));
            let belief = Belief {
                head,
                relation,
                tail,
                confidence: rec.confidence,
            };
            all_triples.insert(belief.triple());
            beliefs.push(belief);
        }
        Ok(beliefs)
    };

    let train = intern_split(train)?;
    let valid = intern_split(valid)?;
    let test = intern_split(test)?;

    let mut heads_of: Vec<HashSet<EntityId>> = vec![HashSet::new(); relations.len()];
    let mut tails_of: Vec<HashSet<EntityId>> = vec![HashSet::new(); relations.len()];
    for belief in train.iter().chain(&valid).chain(&test) {
        heads_of[belief.relation.index()].insert(belief.head);
        tails_of[belief.relation.index()].insert(belief.tail);
    }
    let sort_sets = |sets: Vec<HashSet<EntityId>>| -> Vec<Vec<EntityId>> {
        sets.into_iter()
            .map(|set| {
                let mut v: Vec<EntityId> = set.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect()
    };

    Ok(KnowledgeBase {
        entities,
        relations,
        train,
        valid,
        test,
        all_triples,
        heads_of: sort_sets(heads_of),
        tails_of: sort_sets(tails_of),
    })
}

/// Build a knowledge base from a single confidence-scored dump (e.g. NELL).
///
/// Records with confidence <= 0.5 are dropped. The confidence-1.0 subset is
/// shuffled under `seed`; the first `valid_size` become the validation split
/// and the next `test_size` the test split. Everything else that survived the
/// threshold, including leftover 1.0 beliefs, stays in train in input order.
pub fn build_nell_splits(
    records: &[RawRecord],
    seed: u64,
    valid_size: usize,
    test_size: usize,
) -> Result<KnowledgeBase, DataError> {
    for rec in records {
        if rec.confidence > 1.0 {
            return Err(DataError::ConfidenceOutOfRange {
                head: rec.head.clone(),
                relation: rec.relation.clone(),
                tail: rec.tail.clone(),
                value: rec.confidence,
            });
        }
    }
    let reserved: Vec<&RawRecord> = records.iter().filter(|r| r.confidence > 0.5).collect();
    if reserved.is_empty() {
        return Err(DataError::NoReservedBeliefs {
            input: records.len(),
        });
    }
    let ground_truth: Vec<usize> = reserved
        .iter()
        .enumerate()
        .filter(|(_, r)| r.confidence == 1.0)
        .map(|(i, _)| i)
        .collect();
    if valid_size + test_size > ground_truth.len() {
        return Err(DataError::InsufficientGroundTruth {
            available: ground_truth.len(),
            valid_size,
            test_size,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = ground_truth;
    // Fisher-Yates via rand's shuffle, fixed by the ChaCha stream.
    use rand::seq::SliceRandom;
    drawn.shuffle(&mut rng);

    let valid_idx: HashSet<usize> = drawn[..valid_size].iter().copied().collect();
    let test_idx: HashSet<usize> = drawn[valid_size..valid_size + test_size]
        .iter()
        .copied()
        .collect();

    let valid: Vec<RawRecord> = drawn[..valid_size]
        .iter()
        .map(|&i| reserved[i].clone())
        .collect();
    let test: Vec<RawRecord> = drawn[valid_size..valid_size + test_size]
        .iter()
        .map(|&i| reserved[i].clone())
        .collect();
    let train: Vec<RawRecord> = reserved
        .iter()
        .enumerate()
        .filter(|(i, _)| !valid_idx.contains(i) && !test_idx.contains(i))
        .map(|(_, r)| (*r).clone())
        .collect();

    build_kb(&train, &valid, &test)
}

/// Generate the labeled classification set for a split: each positive belief
/// followed by exactly one corrupted negative.
///
/// A fair coin picks head or tail; the replacement is drawn uniformly from the
/// entities observed at that position for the relation, excluding the original
/// entity and rejecting corruptions present anywhere in the data. After
/// `max_attempts` rejections the draw falls back to the full entity
/// vocabulary under the same existence check.
pub fn make_classification_set(
    kb: &KnowledgeBase,
    split: Split,
    seed: u64,
    max_attempts: usize,
) -> Result<Vec<LabeledExample>, DataError> {
    let beliefs = kb.split(split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(beliefs.len() * 2);
    let num_entities = kb.num_entities() as u32;

    for belief in beliefs {
        out.push(LabeledExample {
            belief: *belief,
            label: true,
        });

        let corrupt_head = rng.random_bool(0.5);
        let (original, pool) = if corrupt_head {
            (belief.head, kb.heads_of(belief.relation))
        } else {
            (belief.tail, kb.tails_of(belief.relation))
        };

        let mut replacement = None;
        for _ in 0..max_attempts {
            let candidate = pool[rng.random_range(0..pool.len())];
            if candidate == original {
                continue;
            }
            if corrupted_exists(kb, belief, corrupt_head, candidate) {
                continue;
            }
            replacement = Some(candidate);
            break;
        }
        if replacement.is_none() {
            // Position set exhausted; widen to the full entity vocabulary.
            for _ in 0..max_attempts {
                let candidate = EntityId(rng.random_range(0..num_entities));
                if candidate == original {
                    continue;
                }
                if corrupted_exists(kb, belief, corrupt_head, candidate) {
                    continue;
                }
                replacement = Some(candidate);
                break;
            }
        }
        let replacement = replacement.ok_or_else(|| DataError::CorruptionExhausted {
            head: kb.entities.name(belief.head.0).to_owned(),
            relation: kb.relations.name(belief.relation.0).to_owned(),
            tail: kb.entities.name(belief.tail.0).to_owned(),
            attempts: max_attempts,
        })?;

        let negative = if corrupt_head {
            Belief {
                head: replacement,
                ..*belief
            }
        } else {
            Belief {
                tail: replacement,
                ..*belief
            }
        };
        out.push(LabeledExample {
            belief: negative,
            label: false,
        });
    }
    Ok(out)
}

fn corrupted_exists(
    kb: &KnowledgeBase,
    belief: &Belief,
    corrupt_head: bool,
    candidate: EntityId,
) -> bool {
    if corrupt_head {
        kb.contains_triple(candidate, belief.relation, belief.tail)
    } else {
        kb.contains_triple(belief.head, belief.relation, candidate)
    }
}

/// Serialize labeled examples as 5-column TSV (`head rel tail confidence label`).
pub fn write_labeled_tsv(
    kb: &KnowledgeBase,
    examples: &[LabeledExample],
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    for ex in examples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            kb.entities.name(ex.belief.head.0),
            kb.relations.name(ex.belief.relation.0),
            kb.entities.name(ex.belief.tail.0),
            ex.belief.confidence,
            if ex.label { 1 } else { 0 },
        )?;
    }
    Ok(())
}

/// Read a 5-column labeled TSV back, resolving names against `kb`.
///
/// Unknown entity or relation names are an error listing every offender.
pub fn read_labeled_tsv(
    kb: &KnowledgeBase,
    path: impl AsRef<Path>,
) -> Result<Vec<LabeledExample>, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;

    let mut examples = Vec::new();
    let mut unknown_entities: Vec<String> = Vec::new();
    let mut unknown_relations: Vec<String> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(DataError::MalformedLine {
                path: display.clone(),
                line: idx + 1,
                expected: 5,
                got: fields.len(),
                content: line.to_owned(),
            });
        }
        let confidence =
            fields[3]
                .trim()
                .parse::<f64>()
                .map_err(|_| DataError::BadConfidence {
                    path: display.clone(),
                    line: idx + 1,
                    value: fields[3].to_owned(),
                })?;
        let label = match fields[4].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(DataError::BadLabel {
                    path: display.clone(),
                    line: idx + 1,
                    value: other.to_owned(),
                })
            }
        };
        let mut lookup_entity = |name: &str| -> Option<EntityId> {
            match kb.entities.id(name) {
                Some(id) => Some(EntityId(id)),
                None => {
                    if !unknown_entities.iter().any(|n| n == name) {
                        unknown_entities.push(name.to_owned());
                    }
                    None
                }
            }
        };
        let head = lookup_entity(fields[0]);
        let tail = lookup_entity(fields[2]);
        let relation = match kb.relations.id(fields[1]) {
            Some(id) => Some(RelationId(id)),
            None => {
                if !unknown_relations.iter().any(|n| n == fields[1]) {
                    unknown_relations.push(fields[1].to_owned());
                }
                None
            }
        };
        if let (Some(head), Some(relation), Some(tail)) = (head, relation, tail) {
            examples.push(LabeledExample {
                belief: Belief {
                    head,
                    relation,
                    tail,
                    confidence,
                },
                label,
            });
        }
    }
    if !unknown_entities.is_empty() || !unknown_relations.is_empty() {
        let mut kind = Vec::new();
        let mut offenders = Vec::new();
        if !unknown_entities.is_empty() {
            kind.push("entity");
            offenders.extend(unknown_entities);
        }
        if !unknown_relations.is_empty() {
            kind.push("relation");
            offenders.extend(unknown_relations);
        }
        return Err(DataError::UnknownNames {
            kind: kind.join("/"),
            offenders: offenders.join(", "),
        });
    }
    Ok(examples)
}

//! Embedding interchange format.
//!
//! A text file with a header line `<|E|> <|R|> <d> <b> <norm>` followed by
//! one line per entity (`name` then d reals) and one per relation. Values
//! are printed in the shortest form that parses back to the same f64, so a
//! write/read round trip is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::data::{EntityId, KnowledgeBase, RelationId};
use crate::model::{EmbeddingSpace, Norm, DEFAULT_EPSILON};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to access {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot export name containing whitespace: {name:?}")]
    UnencodableName { name: String },
    #[error("embedding vocabulary does not cover the dataset; missing {kind}s: {missing}")]
    VocabularyMismatch { kind: &'static str, missing: String },
}

/// An embedding space together with the entity and relation names its rows
/// belong to. The unit of export and import.
#[derive(Debug, Clone)]
pub struct NamedEmbeddings {
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    pub space: EmbeddingSpace,
}

impl NamedEmbeddings {
    /// Pair a trained space with the vocabulary of the base it was trained on.
    pub fn from_kb(kb: &KnowledgeBase, space: EmbeddingSpace) -> Self {
        assert_eq!(kb.num_entities(), space.num_entities());
        assert_eq!(kb.num_relations(), space.num_relations());
        NamedEmbeddings {
            entity_names: kb.entities().names().to_vec(),
            relation_names: kb.relations().names().to_vec(),
            space,
        }
    }

    /// Re-index the vectors to a knowledge base's id order. Every entity and
    /// relation of the base must be present; offenders are listed in the
    /// error rather than skipped.
    pub fn align_to(&self, kb: &KnowledgeBase) -> Result<EmbeddingSpace, IoError> {
        let dim = self.space.dim();
        let entity_rows: std::collections::HashMap<&str, usize> = self
            .entity_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let relation_rows: std::collections::HashMap<&str, usize> = self
            .relation_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();

        let mut missing = Vec::new();
        let mut entity_vecs = vec![0.0; kb.num_entities() * dim];
        for (id, name) in kb.entities().names().iter().enumerate() {
            match entity_rows.get(name.as_str()) {
                Some(&row) => {
                    entity_vecs[id * dim..(id + 1) * dim]
                        .copy_from_slice(self.space.entity(EntityId(row as u32)));
                }
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(IoError::VocabularyMismatch {
                kind: "entity",
                missing: join_limited(&missing),
            });
        }
        let mut relation_vecs = vec![0.0; kb.num_relations() * dim];
        for (id, name) in kb.relations().names().iter().enumerate() {
            match relation_rows.get(name.as_str()) {
                Some(&row) => {
                    relation_vecs[id * dim..(id + 1) * dim]
                        .copy_from_slice(self.space.relation(RelationId(row as u32)));
                }
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(IoError::VocabularyMismatch {
                kind: "relation",
                missing: join_limited(&missing),
            });
        }
        Ok(EmbeddingSpace::from_vectors(
            entity_vecs,
            relation_vecs,
            dim,
            self.space.bias(),
            self.space.norm(),
            self.space.epsilon(),
        ))
    }
}

fn join_limited(names: &[String]) -> String {
    const LIMIT: usize = 50;
    if names.len() <= LIMIT {
        names.join(", ")
    } else {
        format!(
            "{}, ... and {} more",
            names[..LIMIT].join(", "),
            names.len() - LIMIT
        )
    }
}

pub fn write_embeddings(embeddings: &NamedEmbeddings, mut w: impl Write) -> Result<(), IoError> {
    let space = &embeddings.space;
    let io_err = |source| IoError::File {
        path: "<writer>".into(),
        source,
    };
    writeln!(
        w,
        "{} {} {} {} {}",
        space.num_entities(),
        space.num_relations(),
        space.dim(),
        space.bias(),
        space.norm()
    )
    .map_err(io_err)?;

    let mut line = String::new();
    let mut write_row = |name: &str, row: &[f64], w: &mut dyn Write| -> Result<(), IoError> {
        if name.is_empty() || name.chars().any(|c| c.is_whitespace()) {
            return Err(IoError::UnencodableName { name: name.into() });
        }
        line.clear();
        line.push_str(name);
        for v in row {
            line.push(' ');
            line.push_str(&format!("{v}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err)
    };
    for (i, name) in embeddings.entity_names.iter().enumerate() {
        write_row(name, space.entity(EntityId(i as u32)), &mut w)?;
    }
    for (i, name) in embeddings.relation_names.iter().enumerate() {
        write_row(name, space.relation(RelationId(i as u32)), &mut w)?;
    }
    Ok(())
}

pub fn save_embeddings(
    embeddings: &NamedEmbeddings,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    write_embeddings(embeddings, &mut w)?;
    w.flush().map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<NamedEmbeddings, IoError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: display.clone(),
        source,
    })?;
    parse_embeddings(&text, &display)
}

pub fn parse_embeddings(text: &str, path: &str) -> Result<NamedEmbeddings, IoError> {
    let fmt_err = |line: usize, message: String| IoError::Format {
        path: path.to_owned(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| fmt_err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(fmt_err(
            1,
            format!("header needs 5 fields (|E| |R| d b norm), got {}", fields.len()),
        ));
    }
    let parse_count = |s: &str, what: &str| -> Result<usize, IoError> {
        s.parse()
            .map_err(|_| fmt_err(1, format!("cannot parse {what}: {s:?}")))
    };
    let num_entities = parse_count(fields[0], "entity count")?;
    let num_relations = parse_count(fields[1], "relation count")?;
    let dim = parse_count(fields[2], "dimension")?;
    if dim == 0 {
        return Err(fmt_err(1, "dimension must be >= 1".into()));
    }
    let bias: f64 = fields[3]
        .parse()
        .map_err(|_| fmt_err(1, format!("cannot parse bias: {:?}", fields[3])))?;
    let norm: Norm = fields[4]
        .parse()
        .map_err(|e: String| fmt_err(1, e))?;

    let mut read_rows = |count: usize,
                         names: &mut Vec<String>,
                         values: &mut Vec<f64>|
     -> Result<(), IoError> {
        for _ in 0..count {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| fmt_err(0, format!("expected {count} rows, file truncated")))?;
            let mut tokens = line.split_whitespace();
            let name = tokens
                .next()
                .ok_or_else(|| fmt_err(idx + 1, "blank row".into()))?;
            names.push(name.to_owned());
            let mut parsed = 0;
            for token in tokens {
                let v: f64 = token.parse().map_err(|_| {
                    fmt_err(idx + 1, format!("cannot parse component: {token:?}"))
                })?;
                if !v.is_finite() {
                    return Err(fmt_err(idx + 1, format!("non-finite component: {token}")));
                }
                values.push(v);
                parsed += 1;
            }
            if parsed != dim {
                return Err(fmt_err(
                    idx + 1,
                    format!("expected {dim} components, got {parsed}"),
                ));
            }
        }
        Ok(())
    };

    let mut entity_names = Vec::with_capacity(num_entities);
    let mut entity_vecs = Vec::with_capacity(num_entities * dim);
    read_rows(num_entities, &mut entity_names, &mut entity_vecs)?;
    let mut relation_names = Vec::with_capacity(num_relations);
    let mut relation_vecs = Vec::with_capacity(num_relations * dim);
    read_rows(num_relations, &mut relation_names, &mut relation_vecs)?;

    if let Some((idx, line)) = lines.next() {
        if !line.trim().is_empty() {
            return Err(fmt_err(idx + 1, "trailing content after last row".into()));
        }
    }

    Ok(NamedEmbeddings {
        entity_names,
        relation_names,
        space: EmbeddingSpace::from_vectors(
            entity_vecs,
            relation_vecs,
            dim,
            bias,
            norm,
            DEFAULT_EPSILON,
        ),
    })
}

//! Embeddings and scoring math.
//!
//! A belief ⟨h, r, t⟩ is scored by the translation dissimilarity
//! `D(h,r,t) = -||h + r - t|| + b`. Its probability decomposes into three
//! softmax conditionals over the entity and relation vocabularies, whose
//! geometric mean is the joint probability. Training replaces the exact
//! normalizers with a negative-sampling estimator built from the offset
//! logistic `σ(D) + ε`, and fits the resulting log-probability to the
//! belief's log-confidence with a squared loss.

use std::collections::HashMap;
use std::str::FromStr;

use crate::data::{Belief, EntityId, RelationId};

/// Vector norm used inside the dissimilarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Norm {
    L1,
    L2,
}

impl FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Norm::L1),
            "L2" => Ok(Norm::L2),
            other => Err(format!("unknown norm {other:?}, expected L1 or L2")),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Norm::L1 => write!(f, "L1"),
            Norm::L2 => write!(f, "L2"),
        }
    }
}

/// Default logistic offset ε. A pure numeric guard keeping log arguments
/// away from zero at saturation; not a tuned quantity.
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Default lower clamp for the L2 residual norm in gradients, guarding the
/// singularity at zero residual.
pub const DEFAULT_NORM_FLOOR: f64 = 1e-12;

/// Dense d-dimensional vectors for every entity and relation, plus the
/// scoring hyperparameters. One writer (the trainer) or many readers
/// (evaluation), never both at once.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    entity_vecs: Vec<f64>,
    relation_vecs: Vec<f64>,
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    bias: f64,
    norm: Norm,
    epsilon: f64,
    norm_floor: f64,
}

impl EmbeddingSpace {
    /// Allocate a zeroed space. Training code overwrites the vectors.
    pub fn zeroed(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        bias: f64,
        norm: Norm,
        epsilon: f64,
    ) -> Self {
        assert!(dim >= 1, "dim must be at least 1");
        assert!(
            (0.0..0.5).contains(&epsilon),
            "epsilon must satisfy 0 <= epsilon < 0.5"
        );
        EmbeddingSpace {
            entity_vecs: vec![0.0; num_entities * dim],
            relation_vecs: vec![0.0; num_relations * dim],
            num_entities,
            num_relations,
            dim,
            bias,
            norm,
            epsilon,
            norm_floor: DEFAULT_NORM_FLOOR,
        }
    }

    pub fn from_vectors(
        entity_vecs: Vec<f64>,
        relation_vecs: Vec<f64>,
        dim: usize,
        bias: f64,
        norm: Norm,
        epsilon: f64,
    ) -> Self {
        assert!(dim >= 1);
        assert_eq!(entity_vecs.len() % dim, 0);
        assert_eq!(relation_vecs.len() % dim, 0);
        let num_entities = entity_vecs.len() / dim;
        let num_relations = relation_vecs.len() / dim;
        EmbeddingSpace {
            entity_vecs,
            relation_vecs,
            num_entities,
            num_relations,
            dim,
            bias,
            norm,
            epsilon,
            norm_floor: DEFAULT_NORM_FLOOR,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn norm_floor(&self) -> f64 {
        self.norm_floor
    }

    #[inline]
    pub fn entity(&self, id: EntityId) -> &[f64] {
        let i = id.index() * self.dim;
        &self.entity_vecs[i..i + self.dim]
    }

    #[inline]
    pub fn relation(&self, id: RelationId) -> &[f64] {
        let i = id.index() * self.dim;
        &self.relation_vecs[i..i + self.dim]
    }

    #[inline]
    pub fn entity_mut(&mut self, id: EntityId) -> &mut [f64] {
        let i = id.index() * self.dim;
        &mut self.entity_vecs[i..i + self.dim]
    }

    #[inline]
    pub fn relation_mut(&mut self, id: RelationId) -> &mut [f64] {
        let i = id.index() * self.dim;
        &mut self.relation_vecs[i..i + self.dim]
    }

    #[inline]
    pub fn vector(&self, key: VecKey) -> &[f64] {
        match key {
            VecKey::Entity(id) => self.entity(id),
            VecKey::Relation(id) => self.relation(id),
        }
    }

    #[inline]
    pub fn vector_mut(&mut self, key: VecKey) -> &mut [f64] {
        match key {
            VecKey::Entity(id) => self.entity_mut(id),
            VecKey::Relation(id) => self.relation_mut(id),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entity_vecs.iter().chain(&self.relation_vecs).all(|v| v.is_finite())
    }

    /// Dissimilarity `D(h,r,t) = -||h + r - t|| + b`. Larger is more plausible.
    pub fn dissimilarity(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        self.bias - self.distance(h, r, t)
    }

    /// Raw translation distance `||h + r - t||` under the configured norm.
    pub fn distance(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let (h, r, t) = (self.entity(h), self.relation(r), self.entity(t));
        match self.norm {
            Norm::L1 => h
                .iter()
                .zip(r)
                .zip(t)
                .map(|((h, r), t)| (h + r - t).abs())
                .sum(),
            Norm::L2 => h
                .iter()
                .zip(r)
                .zip(t)
                .map(|((h, r), t)| {
                    let d = h + r - t;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    #[inline]
    fn norm_of(&self, residual: &[f64]) -> f64 {
        match self.norm {
            Norm::L1 => residual.iter().map(|v| v.abs()).sum(),
            Norm::L2 => residual.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Probability that the belief holds: `σ(D) + ε`, in (ε, 1 + ε).
    pub fn prob_true(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        sigmoid(self.dissimilarity(h, r, t)) + self.epsilon
    }

    #[inline]
    fn log_prob_true(&self, sig: f64) -> f64 {
        (sig + self.epsilon).ln()
    }

    /// The complement used for negatives is `1 - σ(D) + 2ε`, strictly positive
    /// for all D even at ε-saturated positives.
    #[inline]
    fn log_prob_false(&self, sig: f64) -> f64 {
        (1.0 - sig + 2.0 * self.epsilon).ln()
    }

    /// Exact log conditionals `(log Pr(h|r,t), log Pr(r|h,t), log Pr(t|h,r))`,
    /// each a log-softmax of D over the full entity (resp. relation)
    /// vocabulary. Enumerates the whole vocabulary; intended for small spaces
    /// and oracle checks.
    pub fn exact_log_conditionals(&self, h: EntityId, r: RelationId, t: EntityId) -> [f64; 3] {
        let d_true = self.dissimilarity(h, r, t);
        let dim = self.dim;

        // Pr(h'|r,t): vary the head. Residual is h' + w with w = r - t.
        let w: Vec<f64> = self
            .relation(r)
            .iter()
            .zip(self.entity(t))
            .map(|(r, t)| r - t)
            .collect();
        let head_scores = (0..self.num_entities).map(|e| {
            let cand = self.entity(EntityId(e as u32));
            let norm = match self.norm {
                Norm::L1 => cand.iter().zip(&w).map(|(c, w)| (c + w).abs()).sum(),
                Norm::L2 => cand
                    .iter()
                    .zip(&w)
                    .map(|(c, w)| (c + w) * (c + w))
                    .sum::<f64>()
                    .sqrt(),
            };
            self.bias - norm
        });
        let log_p_head = d_true - log_sum_exp(head_scores);

        // Pr(r'|h,t): vary the relation. Residual is r' + w with w = h - t.
        let w: Vec<f64> = self
            .entity(h)
            .iter()
            .zip(self.entity(t))
            .map(|(h, t)| h - t)
            .collect();
        let rel_scores = (0..self.num_relations).map(|rel| {
            let cand = self.relation(RelationId(rel as u32));
            let norm = match self.norm {
                Norm::L1 => cand.iter().zip(&w).map(|(c, w)| (c + w).abs()).sum(),
                Norm::L2 => cand
                    .iter()
                    .zip(&w)
                    .map(|(c, w)| (c + w) * (c + w))
                    .sum::<f64>()
                    .sqrt(),
            };
            self.bias - norm
        });
        let log_p_rel = d_true - log_sum_exp(rel_scores);

        // Pr(t'|h,r): vary the tail. Residual is w - t' with w = h + r.
        let w: Vec<f64> = self
            .entity(h)
            .iter()
            .zip(self.relation(r))
            .map(|(h, r)| h + r)
            .collect();
        let tail_scores = (0..self.num_entities).map(|e| {
            let cand = self.entity(EntityId(e as u32));
            let norm = match self.norm {
                Norm::L1 => w.iter().zip(cand).map(|(w, c)| (w - c).abs()).sum(),
                Norm::L2 => w
                    .iter()
                    .zip(cand)
                    .map(|(w, c)| (w - c) * (w - c))
                    .sum::<f64>()
                    .sqrt(),
            };
            self.bias - norm
        });
        let log_p_tail = d_true - log_sum_exp(tail_scores);

        debug_assert!(dim >= 1);
        [log_p_head, log_p_rel, log_p_tail]
    }

    /// Exact joint log-probability: the mean of the three log conditionals
    /// (the log of their geometric mean). Always <= 0.
    pub fn exact_joint_log_prob(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let [a, b, c] = self.exact_log_conditionals(h, r, t);
        (a + b + c) / 3.0
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-sum-exp with max subtraction.
fn log_sum_exp(scores: impl Iterator<Item = f64>) -> f64 {
    let scores: Vec<f64> = scores.collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Per-belief squared log-loss against the confidence: `½ (value - log c)²`.
pub fn belief_loss(value: f64, confidence: f64) -> f64 {
    debug_assert!(confidence > 0.0 && confidence <= 1.0);
    let diff = value - confidence.ln();
    0.5 * diff * diff
}

/// The corruptions drawn for one belief: k replacement ids per position.
/// Keeping one typed list per position guarantees each replacement matches
/// the position it corrupts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NegativeSamples {
    pub heads: Vec<EntityId>,
    pub relations: Vec<RelationId>,
    pub tails: Vec<EntityId>,
}

impl NegativeSamples {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn k(&self) -> usize {
        debug_assert_eq!(self.heads.len(), self.relations.len());
        debug_assert_eq!(self.heads.len(), self.tails.len());
        self.heads.len()
    }
}

/// One scored term of the sampled estimator: its dissimilarity and plain
/// logistic value, cached for gradient reuse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermScore {
    pub d: f64,
    pub sigma: f64,
}

/// Negative-sampling estimate of the joint log-probability, with every
/// logistic value retained.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLogProb {
    pub value: f64,
    pub positive: TermScore,
    pub neg_heads: Vec<TermScore>,
    pub neg_relations: Vec<TermScore>,
    pub neg_tails: Vec<TermScore>,
}

/// Estimate the joint log-probability from one positive and its corruptions:
///
/// `value = (1/3) Σ_pos [ log(σ(D⁺)+ε) + Σ_j log(1-σ(D⁻_j)+2ε) ]`
///
/// where the positive term is shared by all three positions.
pub fn sampled_log_prob(
    space: &EmbeddingSpace,
    belief: &Belief,
    negatives: &NegativeSamples,
) -> SampledLogProb {
    let score = |h: EntityId, r: RelationId, t: EntityId| -> TermScore {
        let d = space.dissimilarity(h, r, t);
        TermScore {
            d,
            sigma: sigmoid(d),
        }
    };

    let positive = score(belief.head, belief.relation, belief.tail);
    let neg_heads: Vec<TermScore> = negatives
        .heads
        .iter()
        .map(|&h| score(h, belief.relation, belief.tail))
        .collect();
    let neg_relations: Vec<TermScore> = negatives
        .relations
        .iter()
        .map(|&r| score(belief.head, r, belief.tail))
        .collect();
    let neg_tails: Vec<TermScore> = negatives
        .tails
        .iter()
        .map(|&t| score(belief.head, belief.relation, t))
        .collect();

    let mut value = space.log_prob_true(positive.sigma);
    let mut neg_sum = 0.0;
    for term in neg_heads.iter().chain(&neg_relations).chain(&neg_tails) {
        neg_sum += space.log_prob_false(term.sigma);
    }
    value += neg_sum / 3.0;

    SampledLogProb {
        value,
        positive,
        neg_heads,
        neg_relations,
        neg_tails,
    }
}

/// Identifies one embedding vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VecKey {
    Entity(EntityId),
    Relation(RelationId),
}

/// Accumulated loss gradients keyed by the vectors they touch. Contributions
/// for the same vector id are summed, never overwritten; the buffers are
/// reused across beliefs by the trainer.
#[derive(Debug, Default)]
pub struct GradientSet {
    dim: usize,
    keys: Vec<VecKey>,
    buf: Vec<f64>,
    index: HashMap<VecKey, usize>,
}

impl GradientSet {
    pub fn new(dim: usize) -> Self {
        GradientSet {
            dim,
            keys: Vec::new(),
            buf: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn clear(&mut self) {
        self.keys.clear();
        self.buf.clear();
        self.index.clear();
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn slot(&mut self, key: VecKey) -> &mut [f64] {
        let dim = self.dim;
        let slot = *self.index.entry(key).or_insert_with(|| {
            let s = self.keys.len();
            self.keys.push(key);
            self.buf.resize(self.buf.len() + dim, 0.0);
            s
        });
        &mut self.buf[slot * dim..(slot + 1) * dim]
    }

    pub fn get(&self, key: VecKey) -> Option<&[f64]> {
        self.index
            .get(&key)
            .map(|&s| &self.buf[s * self.dim..(s + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (VecKey, &[f64])> {
        self.keys
            .iter()
            .enumerate()
            .map(move |(s, &k)| (k, &self.buf[s * self.dim..(s + 1) * self.dim]))
    }

    /// grad[key] += scale * direction
    fn add_scaled(&mut self, key: VecKey, scale: f64, direction: &[f64]) {
        for (g, &u) in self.slot(key).iter_mut().zip(direction) {
            *g += scale * u;
        }
    }
}

/// Outcome of one gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefFit {
    /// Sampled joint log-probability S.
    pub log_prob: f64,
    /// The belief's loss ½ (S - log c)².
    pub loss: f64,
}

/// Accumulate the loss gradients of one belief bundle into `grads`.
///
/// Writing S for the sampled log-probability, c for the confidence and
/// g = S - log c, each term contributes g · ∂S/∂D · ∂D/∂v to every vector v
/// of its triple:
///
/// * positive (three identical copies): ∂S/∂D = σ(D)(1-σ(D)) / (σ(D)+ε)
/// * each negative: ∂S/∂D = -(1/3) · σ(D)(1-σ(D)) / (1-σ(D)+2ε)
/// * ∂D/∂h = ∂D/∂r = -u and ∂D/∂t = +u, with u the residual direction:
///   (h+r-t)/max(‖h+r-t‖₂, δ) under L2, componentwise sign (sign(0)=0)
///   under L1.
///
/// Negatives share two vectors with the positive triple, so their
/// contributions accumulate onto those vectors as well.
pub fn accumulate_gradients(
    space: &EmbeddingSpace,
    belief: &Belief,
    negatives: &NegativeSamples,
    confidence: f64,
    grads: &mut GradientSet,
    residual_scratch: &mut Vec<f64>,
) -> BeliefFit {
    debug_assert_eq!(grads.dim, space.dim());
    let sampled = sampled_log_prob(space, belief, negatives);
    let g = sampled.value - confidence.ln();
    let loss = 0.5 * g * g;

    let positive_coef = {
        let s = sampled.positive.sigma;
        g * s * (1.0 - s) / (s + space.epsilon())
    };
    accumulate_triple(
        space,
        belief.head,
        belief.relation,
        belief.tail,
        positive_coef,
        grads,
        residual_scratch,
    );

    let neg_coef = |sigma: f64| -> f64 {
        -g / 3.0 * sigma * (1.0 - sigma) / (1.0 - sigma + 2.0 * space.epsilon())
    };
    for (j, term) in sampled.neg_heads.iter().enumerate() {
        accumulate_triple(
            space,
            negatives.heads[j],
            belief.relation,
            belief.tail,
            neg_coef(term.sigma),
            grads,
            residual_scratch,
        );
    }
    for (j, term) in sampled.neg_relations.iter().enumerate() {
        accumulate_triple(
            space,
            belief.head,
            negatives.relations[j],
            belief.tail,
            neg_coef(term.sigma),
            grads,
            residual_scratch,
        );
    }
    for (j, term) in sampled.neg_tails.iter().enumerate() {
        accumulate_triple(
            space,
            belief.head,
            belief.relation,
            negatives.tails[j],
            neg_coef(term.sigma),
            grads,
            residual_scratch,
        );
    }

    BeliefFit {
        log_prob: sampled.value,
        loss,
    }
}

/// Convenience wrapper returning a fresh gradient set.
pub fn gradient_step_terms(
    space: &EmbeddingSpace,
    belief: &Belief,
    negatives: &NegativeSamples,
    confidence: f64,
) -> (GradientSet, BeliefFit) {
    let mut grads = GradientSet::new(space.dim());
    let mut scratch = Vec::new();
    let fit = accumulate_gradients(space, belief, negatives, confidence, &mut grads, &mut scratch);
    (grads, fit)
}

/// Add `coef * ∂D/∂v` for the three vectors of one triple.
fn accumulate_triple(
    space: &EmbeddingSpace,
    h: EntityId,
    r: RelationId,
    t: EntityId,
    coef: f64,
    grads: &mut GradientSet,
    residual: &mut Vec<f64>,
) {
    if coef == 0.0 {
        return;
    }
    residual.clear();
    residual.extend(
        space
            .entity(h)
            .iter()
            .zip(space.relation(r))
            .zip(space.entity(t))
            .map(|((h, r), t)| h + r - t),
    );
    // u = residual direction; ∂D/∂h = ∂D/∂r = -u, ∂D/∂t = +u.
    match space.norm() {
        Norm::L1 => {
            for v in residual.iter_mut() {
                *v = if *v > 0.0 {
                    1.0
                } else if *v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        Norm::L2 => {
            let n = space.norm_of(residual).max(space.norm_floor());
            for v in residual.iter_mut() {
                *v /= n;
            }
        }
    }
    grads.add_scaled(VecKey::Entity(h), -coef, residual);
    grads.add_scaled(VecKey::Relation(r), -coef, residual);
    grads.add_scaled(VecKey::Entity(t), coef, residual);
}

/// Total exact loss Σ ½ (log Pr(h,r,t) - log c)² over a belief list, via the
/// full softmax normalizers. Enumerates the vocabularies per belief; meant
/// for small spaces.
pub fn exact_total_loss(space: &EmbeddingSpace, beliefs: &[Belief]) -> f64 {
    beliefs
        .iter()
        .map(|b| belief_loss(space.exact_joint_log_prob(b.head, b.relation, b.tail), b.confidence))
        .sum()
}

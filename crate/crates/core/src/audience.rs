//! Target audiences, their disjoint partition, and context probabilities.
//!
//! A target audience (TA) is a conjunction of clauses over named user
//! features. Overlapping TAs are split into disjoint audiences (DAs), one per
//! nonempty TA-membership signature. With `K` audiences the signature is a
//! `K`-bit mask (bit `k - 1` set when the user is in TA `k`), and DAs are
//! enumerated by mask ascending so `da_id == mask`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Maximum number of target audiences in one experiment.
pub const MAX_AUDIENCES: usize = 5;

/// Probability closure tolerance for `p_hat` tables.
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudienceError {
    #[error("no target audiences given")]
    EmptyInput,
    #[error("too many target audiences: {0} > {MAX_AUDIENCES}")]
    TooManyAudiences(usize),
    #[error("duplicate target audience id {0}")]
    DuplicateId(u32),
    #[error("target audience id {id} outside 1..={count}")]
    InvalidId { id: u32, count: usize },
    #[error("feature `{0}` referenced by a predicate is missing")]
    MissingFeature(String),
    #[error("feature `{0}` is a label but the clause needs a number")]
    FeatureTypeMismatch(String),
    #[error("range clause on `{feature}` has lo {lo} > hi {hi}")]
    InvalidRange { feature: String, lo: f64, hi: f64 },
    #[error("partition was built for {partition} audiences, got {given}")]
    PartitionMismatch { partition: usize, given: usize },
    #[error("target audience {0} matches no sampled user")]
    EmptyTargetAudience(u32),
    #[error("population sample is empty")]
    EmptySample,
    #[error("context probability table: {0}")]
    InvalidTable(String),
}

/// A categorical label or a bounded numeric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Label(String),
}

impl From<f64> for FeatureValue {
    fn from(v: f64) -> Self {
        FeatureValue::Number(v)
    }
}

impl From<&str> for FeatureValue {
    fn from(v: &str) -> Self {
        FeatureValue::Label(v.to_owned())
    }
}

/// A user's feature vector, keyed by feature name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserFeatures(pub BTreeMap<String, FeatureValue>);

impl UserFeatures {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<FeatureValue>) -> Self {
        self.0.insert(name.to_owned(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&FeatureValue> {
        self.0.get(name)
    }
}

/// One atomic predicate clause.
///
/// Wire form: `{"feature": name, "in": [values]}` or
/// `{"feature": name, "range": [lo, hi]}` with inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Clause {
    In {
        feature: String,
        #[serde(rename = "in")]
        values: Vec<FeatureValue>,
    },
    Range {
        feature: String,
        range: [f64; 2],
    },
}

impl Clause {
    pub fn one_of(feature: &str, values: impl IntoIterator<Item = FeatureValue>) -> Self {
        Clause::In {
            feature: feature.to_owned(),
            values: values.into_iter().collect(),
        }
    }

    pub fn between(feature: &str, lo: f64, hi: f64) -> Self {
        Clause::Range {
            feature: feature.to_owned(),
            range: [lo, hi],
        }
    }

    pub fn feature(&self) -> &str {
        match self {
            Clause::In { feature, .. } | Clause::Range { feature, .. } => feature,
        }
    }

    fn eval(&self, user: &UserFeatures) -> Result<bool, AudienceError> {
        let value = user
            .get(self.feature())
            .ok_or_else(|| AudienceError::MissingFeature(self.feature().to_owned()))?;
        match self {
            Clause::In { values, .. } => Ok(values.iter().any(|v| v == value)),
            Clause::Range { feature, range } => match value {
                FeatureValue::Number(x) => Ok(range[0] <= *x && *x <= range[1]),
                FeatureValue::Label(_) => Err(AudienceError::FeatureTypeMismatch(feature.clone())),
            },
        }
    }
}

/// A target audience: a named conjunction of clauses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAudienceDef {
    pub id: u32,
    pub name: String,
    pub predicate: Vec<Clause>,
}

impl TargetAudienceDef {
    pub fn new(id: u32, name: &str, predicate: Vec<Clause>) -> Self {
        Self {
            id,
            name: name.to_owned(),
            predicate,
        }
    }

    /// Evaluates the conjunction. Every clause's feature must be present,
    /// even when an earlier clause already failed.
    pub fn matches(&self, user: &UserFeatures) -> Result<bool, AudienceError> {
        let mut all = true;
        for clause in &self.predicate {
            all &= clause.eval(user)?;
        }
        Ok(all)
    }

    pub fn validate(&self) -> Result<(), AudienceError> {
        for clause in &self.predicate {
            if let Clause::Range { feature, range } = clause {
                if !(range[0] <= range[1]) {
                    return Err(AudienceError::InvalidRange {
                        feature: feature.clone(),
                        lo: range[0],
                        hi: range[1],
                    });
                }
            }
        }
        Ok(())
    }
}

/// TA-membership signature as a bitmask over TA ids (bit `id - 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(u32);

impl Signature {
    pub fn from_mask(mask: u32) -> Self {
        Signature(mask)
    }

    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        Signature(ids.into_iter().fold(0, |m, id| m | (1 << (id - 1))))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, ta_id: u32) -> bool {
        ta_id >= 1 && self.0 & (1 << (ta_id - 1)) != 0
    }

    pub fn ta_ids(self) -> Vec<u32> {
        (1..=32).filter(|&id| self.contains(id)).collect()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.ta_ids().iter().map(u32::to_string).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

impl Serialize for Signature {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        self.ta_ids().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ids = Vec::<u32>::deserialize(d)?;
        if ids.iter().any(|&id| id == 0 || id > 32) {
            return Err(serde::de::Error::custom("signature ids must be in 1..=32"));
        }
        Ok(Signature::from_ids(ids))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointAudience {
    pub da_id: u32,
    pub signature: Signature,
}

/// The DAs spanning a set of `K` TAs, in canonical (mask-ascending) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    audiences: usize,
    das: Vec<DisjointAudience>,
}

impl Partition {
    /// Number of TAs (`K`).
    pub fn audience_count(&self) -> usize {
        self.audiences
    }

    /// Number of DAs (`J`).
    pub fn len(&self) -> usize {
        self.das.len()
    }

    pub fn is_empty(&self) -> bool {
        self.das.is_empty()
    }

    pub fn das(&self) -> &[DisjointAudience] {
        &self.das
    }

    /// Zero-based context index of a DA id.
    pub fn context_index(&self, da_id: u32) -> Option<usize> {
        self.das.iter().position(|d| d.da_id == da_id)
    }

    /// `O(k)` as zero-based context indices, for zero-based audience index `k`.
    pub fn overlap(&self, k: usize) -> Vec<usize> {
        let id = k as u32 + 1;
        self.das
            .iter()
            .enumerate()
            .filter(|(_, d)| d.signature.contains(id))
            .map(|(j, _)| j)
            .collect()
    }
}

/// Splits `tas` into one DA per nonempty membership signature.
pub fn partition(tas: &[TargetAudienceDef]) -> Result<Partition, AudienceError> {
    check_ids(tas)?;
    let k = tas.len();
    let das = (1u32..(1u32 << k))
        .map(|mask| DisjointAudience {
            da_id: mask,
            signature: Signature(mask),
        })
        .collect();
    Ok(Partition { audiences: k, das })
}

fn check_ids(tas: &[TargetAudienceDef]) -> Result<(), AudienceError> {
    if tas.is_empty() {
        return Err(AudienceError::EmptyInput);
    }
    if tas.len() > MAX_AUDIENCES {
        return Err(AudienceError::TooManyAudiences(tas.len()));
    }
    let mut seen = HashSet::new();
    for ta in tas {
        if !seen.insert(ta.id) {
            return Err(AudienceError::DuplicateId(ta.id));
        }
    }
    for ta in tas {
        if ta.id == 0 || ta.id as usize > tas.len() {
            return Err(AudienceError::InvalidId {
                id: ta.id,
                count: tas.len(),
            });
        }
        ta.validate()?;
    }
    Ok(())
}

/// Membership signature of a user across all TAs.
pub fn signature_of(
    user: &UserFeatures,
    tas: &[TargetAudienceDef],
) -> Result<Signature, AudienceError> {
    let mut mask = 0u32;
    for ta in tas {
        if ta.matches(user)? {
            mask |= 1 << (ta.id - 1);
        }
    }
    Ok(Signature(mask))
}

/// The DA a user falls in, or `None` when the user is in no TA.
pub fn assign_context(
    user: &UserFeatures,
    tas: &[TargetAudienceDef],
    partition: &Partition,
) -> Result<Option<u32>, AudienceError> {
    if partition.audience_count() != tas.len() {
        return Err(AudienceError::PartitionMismatch {
            partition: partition.audience_count(),
            given: tas.len(),
        });
    }
    let sig = signature_of(user, tas)?;
    if sig.mask() == 0 {
        return Ok(None);
    }
    Ok(partition
        .das()
        .iter()
        .find(|d| d.signature == sig)
        .map(|d| d.da_id))
}

/// `p_hat(j | k)` with the overlap map `O(k)`.
///
/// Stored context-major: `p_hat[j * K + k]`, zero-based `j` and `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextProbabilities<S> {
    contexts: usize,
    audiences: usize,
    p_hat: Vec<S>,
    overlap: Vec<Vec<usize>>,
}

impl<S: Scalar> ContextProbabilities<S> {
    /// Builds from a `J x K` table (`table[j][k]`), checking support and closure.
    pub fn from_table(partition: &Partition, table: &[Vec<S>]) -> Result<Self, AudienceError> {
        let contexts = partition.len();
        let audiences = partition.audience_count();
        if table.len() != contexts || table.iter().any(|row| row.len() != audiences) {
            return Err(AudienceError::InvalidTable(format!(
                "expected {contexts} rows of {audiences} columns"
            )));
        }
        let overlap: Vec<Vec<usize>> = (0..audiences).map(|k| partition.overlap(k)).collect();
        let mut p_hat = Vec::with_capacity(contexts * audiences);
        for (j, row) in table.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                if !(p >= S::zero() && p <= S::one()) {
                    return Err(AudienceError::InvalidTable(format!(
                        "p_hat[{j}][{k}] = {p} outside [0, 1]"
                    )));
                }
                if !overlap[k].contains(&j) && p != S::zero() {
                    return Err(AudienceError::InvalidTable(format!(
                        "p_hat[{j}][{k}] must be 0: context {j} is outside audience {k}"
                    )));
                }
                p_hat.push(p);
            }
        }
        let probs = Self {
            contexts,
            audiences,
            p_hat,
            overlap,
        };
        for k in 0..audiences {
            let total: f64 = probs.overlap[k].iter().map(|&j| probs.get(j, k).as_f64()).sum();
            if (total - 1.0).abs() > CLOSURE_TOLERANCE {
                return Err(AudienceError::InvalidTable(format!(
                    "column {k} sums to {total}, expected 1"
                )));
            }
        }
        Ok(probs)
    }

    /// Normalizes per-context population mass within each TA.
    pub fn from_weights(partition: &Partition, weights: &[S]) -> Result<Self, AudienceError> {
        if weights.len() != partition.len() {
            return Err(AudienceError::InvalidTable(format!(
                "expected {} context weights, got {}",
                partition.len(),
                weights.len()
            )));
        }
        let audiences = partition.audience_count();
        let mut table = vec![vec![S::zero(); audiences]; partition.len()];
        for k in 0..audiences {
            let members = partition.overlap(k);
            let mass = members.iter().fold(S::zero(), |acc, &j| acc + weights[j]);
            if mass <= S::zero() {
                return Err(AudienceError::EmptyTargetAudience(k as u32 + 1));
            }
            for &j in &members {
                table[j][k] = weights[j] / mass;
            }
        }
        Self::from_table(partition, &table)
    }

    pub fn context_count(&self) -> usize {
        self.contexts
    }

    pub fn audience_count(&self) -> usize {
        self.audiences
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> S {
        self.p_hat[j * self.audiences + k]
    }

    /// `O(k)`: contexts whose DA lies inside TA `k`.
    pub fn overlap(&self, k: usize) -> &[usize] {
        &self.overlap[k]
    }

    /// Dense `J x K` table.
    pub fn table(&self) -> Vec<Vec<S>> {
        self.p_hat.chunks(self.audiences).map(<[S]>::to_vec).collect()
    }

    /// Weighted TA-level aggregate of a per-context quantity.
    pub fn aggregate(&self, per_context: &[S], k: usize) -> S {
        self.overlap[k]
            .iter()
            .fold(S::zero(), |acc, &j| acc + per_context[j] * self.get(j, k))
    }
}

/// Bin estimator: `p_hat(j|k) = #users in DA(j) / #users in TA(k)`.
///
/// Users outside every TA are counted in the sample but excluded from all
/// conditionals.
pub fn estimate_context_probs<S: Scalar>(
    sample: &[UserFeatures],
    tas: &[TargetAudienceDef],
    partition: &Partition,
) -> Result<ContextProbabilities<S>, AudienceError> {
    if sample.is_empty() {
        return Err(AudienceError::EmptySample);
    }
    let mut counts = vec![0u64; partition.len()];
    for user in sample {
        if let Some(da) = assign_context(user, tas, partition)? {
            let j = partition.context_index(da).expect("assigned DA is in partition");
            counts[j] += 1;
        }
    }
    let audiences = partition.audience_count();
    let mut table = vec![vec![S::zero(); audiences]; partition.len()];
    for k in 0..audiences {
        let members = partition.overlap(k);
        let in_ta: u64 = members.iter().map(|&j| counts[j]).sum();
        if in_ta == 0 {
            return Err(AudienceError::EmptyTargetAudience(k as u32 + 1));
        }
        for &j in &members {
            table[j][k] = S::count(counts[j]) / S::count(in_ta);
        }
    }
    ContextProbabilities::from_table(partition, &table)
}

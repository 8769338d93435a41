use serde::{Deserialize, Serialize};

use super::BanditError;
use crate::scalar::Scalar;

/// Maximum number of creatives in one experiment.
pub const MAX_CREATIVES: usize = 5;

/// Default cap on decision-level arms (creative x audience combinations).
pub const MAX_ARMS: usize = 25;

/// `R x J` grid of Beta posteriors over per-cell CTRs, cell `(r, j)` stored
/// at `r * J + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid<S> {
    creatives: usize,
    contexts: usize,
    alpha: Vec<S>,
    beta: Vec<S>,
    batch: u64,
}

impl<S: Scalar> PosteriorGrid<S> {
    /// Diffuse `Beta(1, 1)` priors with `R * J` capped at [`MAX_ARMS`].
    pub fn new(creatives: usize, contexts: usize) -> Result<Self, BanditError> {
        Self::with_cap(creatives, contexts, MAX_ARMS)
    }

    /// Diffuse priors with an explicit cell cap.
    pub fn with_cap(creatives: usize, contexts: usize, max_cells: usize) -> Result<Self, BanditError> {
        if creatives == 0 || contexts == 0 {
            return Err(BanditError::EmptyGrid);
        }
        let cells = creatives * contexts;
        if cells > max_cells {
            return Err(BanditError::TooManyArms {
                cells,
                cap: max_cells,
            });
        }
        Ok(Self {
            creatives,
            contexts,
            alpha: vec![S::one(); cells],
            beta: vec![S::one(); cells],
            batch: 1,
        })
    }

    /// Grid with explicit parameters; each must be finite and positive.
    pub fn from_parts(
        creatives: usize,
        contexts: usize,
        alpha: Vec<S>,
        beta: Vec<S>,
        batch: u64,
    ) -> Result<Self, BanditError> {
        if creatives == 0 || contexts == 0 {
            return Err(BanditError::EmptyGrid);
        }
        let cells = creatives * contexts;
        if alpha.len() != cells || beta.len() != cells {
            return Err(BanditError::ShapeMismatch {
                expected: (creatives, contexts),
            });
        }
        if alpha
            .iter()
            .chain(&beta)
            .any(|&x| !(x.is_finite() && x > S::zero()))
        {
            return Err(BanditError::InvalidParameter);
        }
        Ok(Self {
            creatives,
            contexts,
            alpha,
            beta,
            batch,
        })
    }

    pub fn creatives(&self) -> usize {
        self.creatives
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    /// Index of the batch the grid is ready to serve (starts at 1).
    pub fn batch(&self) -> u64 {
        self.batch
    }

    #[inline]
    pub fn alpha(&self, r: usize, j: usize) -> S {
        self.alpha[r * self.contexts + j]
    }

    #[inline]
    pub fn beta(&self, r: usize, j: usize) -> S {
        self.beta[r * self.contexts + j]
    }

    /// Posterior mean `alpha / (alpha + beta)`.
    pub fn mean(&self, r: usize, j: usize) -> S {
        let a = self.alpha(r, j);
        a / (a + self.beta(r, j))
    }

    /// Posterior means, cell-major.
    pub fn means(&self) -> Vec<S> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(&a, &b)| a / (a + b))
            .collect()
    }

    /// Conjugate batch update. Cells with no impressions keep their
    /// parameters; the batch index always advances.
    pub fn update(&mut self, stats: &BatchStats) -> Result<(), BanditError> {
        stats.check_shape(self.creatives, self.contexts)?;
        stats.validate()?;
        for (cell, (&n, &s)) in stats.impressions.iter().zip(&stats.clicks).enumerate() {
            if n == 0 {
                continue;
            }
            self.alpha[cell] = self.alpha[cell] + S::count(s);
            self.beta[cell] = self.beta[cell] + S::count(n - s);
        }
        self.batch += 1;
        Ok(())
    }

    /// Cell records in `(r, j)` order for serialization.
    pub fn cells(&self) -> impl Iterator<Item = CellRecord<S>> + '_ {
        (0..self.creatives).flat_map(move |r| {
            (0..self.contexts).map(move |j| CellRecord {
                r,
                j,
                alpha: self.alpha(r, j),
                beta: self.beta(r, j),
            })
        })
    }

    pub fn snapshot(&self, experiment_id: &str, gamma: S) -> PosteriorSnapshot<S> {
        PosteriorSnapshot {
            header: PosteriorHeader {
                experiment_id: experiment_id.to_owned(),
                t: self.batch,
                creatives: self.creatives,
                contexts: self.contexts,
                gamma,
            },
            cells: self.cells().collect(),
        }
    }

    pub fn from_snapshot(snapshot: &PosteriorSnapshot<S>) -> Result<Self, BanditError> {
        let h = &snapshot.header;
        let cells = h.creatives * h.contexts;
        if snapshot.cells.len() != cells {
            return Err(BanditError::ShapeMismatch {
                expected: (h.creatives, h.contexts),
            });
        }
        let mut alpha = vec![S::zero(); cells];
        let mut beta = vec![S::zero(); cells];
        let mut seen = vec![false; cells];
        for c in &snapshot.cells {
            if c.r >= h.creatives || c.j >= h.contexts || seen[c.r * h.contexts + c.j] {
                return Err(BanditError::ShapeMismatch {
                    expected: (h.creatives, h.contexts),
                });
            }
            seen[c.r * h.contexts + c.j] = true;
            alpha[c.r * h.contexts + c.j] = c.alpha;
            beta[c.r * h.contexts + c.j] = c.beta;
        }
        Self::from_parts(h.creatives, h.contexts, alpha, beta, h.t)
    }
}

/// One serialized posterior cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord<S> {
    pub r: usize,
    pub j: usize,
    pub alpha: S,
    pub beta: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorHeader<S> {
    pub experiment_id: String,
    pub t: u64,
    #[serde(rename = "R")]
    pub creatives: usize,
    #[serde(rename = "J")]
    pub contexts: usize,
    pub gamma: S,
}

/// Header plus one record per `(r, j)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot<S> {
    pub header: PosteriorHeader<S>,
    pub cells: Vec<CellRecord<S>>,
}

/// Per-cell impressions and clicks collected during one batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    creatives: usize,
    contexts: usize,
    impressions: Vec<u64>,
    clicks: Vec<u64>,
    /// Total arrivals in the batch, in-context or not.
    pub arrivals: u64,
}

impl BatchStats {
    pub fn new(creatives: usize, contexts: usize) -> Self {
        Self {
            creatives,
            contexts,
            impressions: vec![0; creatives * contexts],
            clicks: vec![0; creatives * contexts],
            arrivals: 0,
        }
    }

    pub fn from_counts(
        creatives: usize,
        contexts: usize,
        impressions: Vec<u64>,
        clicks: Vec<u64>,
    ) -> Result<Self, BanditError> {
        if impressions.len() != creatives * contexts || clicks.len() != creatives * contexts {
            return Err(BanditError::ShapeMismatch {
                expected: (creatives, contexts),
            });
        }
        let arrivals = impressions.iter().sum();
        let stats = Self {
            creatives,
            contexts,
            impressions,
            clicks,
            arrivals,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn record(&mut self, r: usize, j: usize, clicked: bool) {
        let cell = r * self.contexts + j;
        self.impressions[cell] += 1;
        self.clicks[cell] += u64::from(clicked);
    }

    pub fn impressions(&self, r: usize, j: usize) -> u64 {
        self.impressions[r * self.contexts + j]
    }

    pub fn clicks(&self, r: usize, j: usize) -> u64 {
        self.clicks[r * self.contexts + j]
    }

    pub fn total_impressions(&self) -> u64 {
        self.impressions.iter().sum()
    }

    pub fn validate(&self) -> Result<(), BanditError> {
        for (cell, (&n, &s)) in self.impressions.iter().zip(&self.clicks).enumerate() {
            if s > n {
                return Err(BanditError::MalformedStats {
                    r: cell / self.contexts,
                    j: cell % self.contexts,
                    clicks: s,
                    impressions: n,
                });
            }
        }
        if self.total_impressions() > self.arrivals {
            return Err(BanditError::MoreImpressionsThanArrivals);
        }
        Ok(())
    }

    fn check_shape(&self, creatives: usize, contexts: usize) -> Result<(), BanditError> {
        if self.creatives != creatives || self.contexts != contexts {
            return Err(BanditError::ShapeMismatch {
                expected: (creatives, contexts),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell(n: u64, s: u64) -> BatchStats {
        BatchStats::from_counts(1, 1, vec![n], vec![s]).unwrap()
    }

    #[test]
    fn init_shapes_and_cap() {
        let g = PosteriorGrid::<f64>::new(3, 3).unwrap();
        assert_eq!(g.cells().count(), 9);
        assert!(g.cells().all(|c| c.alpha == 1.0 && c.beta == 1.0));
        assert_eq!(g.batch(), 1);
        let g = PosteriorGrid::<f64>::new(1, 1).unwrap();
        assert_eq!((g.alpha(0, 0), g.beta(0, 0)), (1.0, 1.0));
        assert_eq!(
            PosteriorGrid::<f64>::new(5, 31).unwrap_err(),
            BanditError::TooManyArms { cells: 155, cap: 25 }
        );
        assert!(PosteriorGrid::<f64>::with_cap(5, 31, 5 * 31).is_ok());
        assert_eq!(PosteriorGrid::<f32>::new(0, 2).unwrap_err(), BanditError::EmptyGrid);
    }

    #[test]
    fn conjugate_update() {
        let mut g = PosteriorGrid::<f64>::new(1, 1).unwrap();
        g.update(&one_cell(10, 3)).unwrap();
        assert_eq!((g.alpha(0, 0), g.beta(0, 0)), (4.0, 8.0));
        assert_eq!(g.batch(), 2);
    }

    #[test]
    fn empty_batch_only_advances_t() {
        let mut g = PosteriorGrid::<f64>::new(2, 3).unwrap();
        let before = g.clone();
        g.update(&BatchStats::new(2, 3)).unwrap();
        assert_eq!(g.batch(), 2);
        assert!(g.cells().zip(before.cells()).all(|(a, b)| a == b));
    }

    #[test]
    fn sufficient_statistics_are_additive() {
        let mut two = PosteriorGrid::<f64>::new(1, 1).unwrap();
        two.update(&one_cell(5, 2)).unwrap();
        two.update(&one_cell(7, 1)).unwrap();
        let mut one = PosteriorGrid::<f64>::new(1, 1).unwrap();
        one.update(&one_cell(12, 3)).unwrap();
        assert_eq!(two.alpha(0, 0), one.alpha(0, 0));
        assert_eq!(two.beta(0, 0), one.beta(0, 0));
    }

    #[test]
    fn clicks_above_impressions_rejected() {
        assert!(matches!(
            BatchStats::from_counts(1, 1, vec![2], vec![3]),
            Err(BanditError::MalformedStats { .. })
        ));
        let mut g = PosteriorGrid::<f64>::new(1, 1).unwrap();
        let bad = BatchStats {
            creatives: 1,
            contexts: 1,
            impressions: vec![1],
            clicks: vec![2],
            arrivals: 1,
        };
        assert!(g.update(&bad).is_err());
        assert_eq!(g.batch(), 1);
    }

    #[test]
    fn snapshot_roundtrip_and_field_order() {
        let mut g = PosteriorGrid::<f64>::new(2, 1).unwrap();
        g.update(&BatchStats::from_counts(2, 1, vec![3, 4], vec![1, 0]).unwrap())
            .unwrap();
        let snap = g.snapshot("exp", 1.0);
        let json = serde_json::to_string(&snap).unwrap();
        assert!(json.starts_with(r#"{"header":{"experiment_id":"exp","t":2,"R":2,"J":1,"gamma":1.0}"#));
        assert!(json.contains(r#"{"r":0,"j":0,"alpha":2.0,"beta":3.0}"#));
        let back: PosteriorSnapshot<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(PosteriorGrid::from_snapshot(&back).unwrap(), g);
    }
}

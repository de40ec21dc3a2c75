//! MAP-Elites grid archive with diversity-only insertion.
//!
//! There is no fitness here: a candidate landing on an occupied cell replaces
//! the occupant with probability one half.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::ParamVector;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchiveError {
    #[error("descriptor has {actual} dimensions, grid has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("descriptor contains a non-finite value")]
    NonFiniteDescriptor,
    #[error("archive is empty")]
    EmptyArchive,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridDim {
    /// Uniform bins over `[lower, upper)`; outside values clip to the end bins.
    Continuous { lower: f64, upper: f64, bins: usize },
    /// Raw value is a category index, rounded and clipped to `0..count`.
    Categorical { count: usize },
}

impl GridDim {
    pub fn continuous(lower: f64, upper: f64, bins: usize) -> Self {
        GridDim::Continuous { lower, upper, bins }
    }

    pub fn size(&self) -> usize {
        match self {
            GridDim::Continuous { bins, .. } => *bins,
            GridDim::Categorical { count } => *count,
        }
    }

    fn bin(&self, value: f64) -> usize {
        match *self {
            GridDim::Continuous { lower, upper, bins } => {
                let scaled = ((value - lower) / (upper - lower) * bins as f64).floor();
                if scaled <= 0.0 {
                    0
                } else {
                    (scaled as usize).min(bins - 1)
                }
            }
            GridDim::Categorical { count } => {
                let idx = value.round();
                if idx <= 0.0 {
                    0
                } else {
                    (idx as usize).min(count - 1)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridSpec {
    pub dims: Vec<GridDim>,
}

impl GridSpec {
    pub fn new(dims: Vec<GridDim>) -> Result<Self, ArchiveError> {
        let spec = Self { dims };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ArchiveError> {
        if self.dims.is_empty() {
            return Err(ArchiveError::InvalidGrid("grid needs at least one dimension".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            match *d {
                GridDim::Continuous { lower, upper, bins } => {
                    if bins == 0 {
                        return Err(ArchiveError::InvalidGrid(format!("dim {i}: bins must be >= 1")));
                    }
                    if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                        return Err(ArchiveError::InvalidGrid(format!(
                            "dim {i}: need finite lower < upper, got [{lower}, {upper}]"
                        )));
                    }
                }
                GridDim::Categorical { count } => {
                    if count == 0 {
                        return Err(ArchiveError::InvalidGrid(format!("dim {i}: count must be >= 1")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn total_cells(&self) -> usize {
        self.dims.iter().map(GridDim::size).product()
    }

    /// Row-major flattening, last dimension fastest.
    pub fn flat_index(&self, cell: &[usize]) -> usize {
        self.dims
            .iter()
            .zip(cell)
            .fold(0, |acc, (d, &i)| acc * d.size() + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d.size();
            flat /= d.size();
        }
        out
    }
}

/// Maps a raw descriptor to its grid cell, clipping out-of-range values.
pub fn bd_to_cell(bd_raw: &[f64], spec: &GridSpec) -> Result<Vec<usize>, ArchiveError> {
    if bd_raw.len() != spec.ndims() {
        return Err(ArchiveError::DimensionMismatch {
            expected: spec.ndims(),
            actual: bd_raw.len(),
        });
    }
    if bd_raw.iter().any(|v| !v.is_finite()) {
        return Err(ArchiveError::NonFiniteDescriptor);
    }
    Ok(spec.dims.iter().zip(bd_raw).map(|(d, &v)| d.bin(v)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourDescriptor {
    pub raw: Vec<f64>,
    pub cell: Vec<usize>,
}

impl BehaviourDescriptor {
    pub fn new(raw: Vec<f64>, spec: &GridSpec) -> Result<Self, ArchiveError> {
        let cell = bd_to_cell(&raw, spec)?;
        Ok(Self { raw, cell })
    }
}

/// Occupant of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub params: ParamVector,
    pub bd_raw: Vec<f64>,
    /// Which evaluation produced this occupant.
    pub insert_eval_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    ReplacedByCoinFlip,
    RejectedByCoinFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    spec: GridSpec,
    cells: Vec<Option<Elite>>,
    /// Flat indices of occupied cells, in first-occupation order.
    occupied: Vec<usize>,
}

impl Archive {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.total_cells();
        Self {
            spec,
            cells: vec![None; n],
            occupied: Vec::new(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    /// Fraction of cells holding an occupant.
    pub fn coverage(&self) -> f64 {
        self.occupied.len() as f64 / self.cells.len() as f64
    }

    pub fn get(&self, cell: &[usize]) -> Option<&Elite> {
        self.cells.get(self.spec.flat_index(cell))?.as_ref()
    }

    pub fn insert<R: Rng + ?Sized>(
        &mut self,
        params: ParamVector,
        bd: &BehaviourDescriptor,
        eval_index: u64,
        rng: &mut R,
    ) -> InsertOutcome {
        let flat = self.spec.flat_index(&bd.cell);
        let elite = Elite {
            params,
            bd_raw: bd.raw.clone(),
            insert_eval_index: eval_index,
        };
        match &mut self.cells[flat] {
            slot @ None => {
                *slot = Some(elite);
                self.occupied.push(flat);
                InsertOutcome::Inserted
            }
            Some(current) => {
                if rng.random_bool(0.5) {
                    *current = elite;
                    InsertOutcome::ReplacedByCoinFlip
                } else {
                    InsertOutcome::RejectedByCoinFlip
                }
            }
        }
    }

    /// `n` occupants drawn uniformly with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<ParamVector>, ArchiveError> {
        if self.occupied.is_empty() {
            return Err(ArchiveError::EmptyArchive);
        }
        Ok((0..n)
            .map(|_| {
                let flat = self.occupied[rng.random_range(0..self.occupied.len())];
                self.cells[flat].as_ref().expect("occupied").params.clone()
            })
            .collect())
    }

    /// Occupants in first-occupation order.
    pub fn elites(&self) -> impl Iterator<Item = (Vec<usize>, &Elite)> + '_ {
        self.occupied.iter().map(move |&flat| {
            (
                self.spec.multi_index(flat),
                self.cells[flat].as_ref().expect("occupied"),
            )
        })
    }

    pub fn params(&self) -> Vec<ParamVector> {
        self.elites().map(|(_, e)| e.params.clone()).collect()
    }

    pub fn snapshot(&self) -> ArchiveSnapshot {
        let mut flat: Vec<usize> = self.occupied.clone();
        flat.sort_unstable();
        ArchiveSnapshot {
            version: SNAPSHOT_VERSION,
            grid: self.spec.clone(),
            cells: flat
                .into_iter()
                .map(|f| {
                    let e = self.cells[f].as_ref().expect("occupied");
                    SnapshotCell {
                        index: self.spec.multi_index(f),
                        bd_raw: e.bd_raw.clone(),
                        eval_index: e.insert_eval_index,
                        params: e.params.as_slice().to_vec(),
                    }
                })
                .collect(),
        }
    }

    /// Rebuilds an archive from a snapshot. Occupation order becomes the
    /// snapshot's cell order.
    pub fn from_snapshot(snapshot: &ArchiveSnapshot) -> Result<Self, ArchiveError> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(ArchiveError::InvalidSnapshot(format!(
                "unsupported version {}",
                snapshot.version
            )));
        }
        snapshot.grid.validate()?;
        let mut archive = Archive::new(snapshot.grid.clone());
        for cell in &snapshot.cells {
            if cell.index.len() != archive.spec.ndims()
                || cell.index.iter().zip(&archive.spec.dims).any(|(i, d)| *i >= d.size())
            {
                return Err(ArchiveError::InvalidSnapshot(format!(
                    "cell index {:?} outside grid",
                    cell.index
                )));
            }
            let flat = archive.spec.flat_index(&cell.index);
            if archive.cells[flat].is_some() {
                return Err(ArchiveError::InvalidSnapshot(format!(
                    "duplicate cell {:?}",
                    cell.index
                )));
            }
            archive.cells[flat] = Some(Elite {
                params: ParamVector::from_values(cell.params.clone()),
                bd_raw: cell.bd_raw.clone(),
                insert_eval_index: cell.eval_index,
            });
            archive.occupied.push(flat);
        }
        Ok(archive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveSnapshot {
    pub version: u32,
    pub grid: GridSpec,
    pub cells: Vec<SnapshotCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCell {
    pub index: Vec<usize>,
    pub bd_raw: Vec<f64>,
    pub eval_index: u64,
    pub params: Vec<f64>,
}

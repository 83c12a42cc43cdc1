//! Spatial binning of point records into per-group empirical measures.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sinkdiv::{EmpiricalMeasure, FiniteSpace};

/// A rectangular cell grid over a bounding box. Grid points sit at integer
/// coordinates `[1, nx] x [1, ny]`, enumerated row-major with the x index
/// major: point `(i+1, j+1)` has flat index `i * ny + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// `[xmin, xmax, ymin, ymax]` in data coordinates.
    pub bbox: [f64; 4],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, bbox: [f64; 4]) -> anyhow::Result<Self> {
        if nx == 0 || ny == 0 {
            bail!("grid must have at least one cell per axis");
        }
        if !(bbox[0] < bbox[1] && bbox[2] < bbox[3]) {
            bail!("bounding box must satisfy xmin < xmax and ymin < ymax");
        }
        if bbox.iter().any(|v| !v.is_finite()) {
            bail!("bounding box must be finite");
        }
        Ok(Self { nx, ny, bbox })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The grid as a finite space with unit spacing.
    pub fn space(&self) -> FiniteSpace {
        let mut points = Vec::with_capacity(self.len());
        for i in 0..self.nx {
            for j in 0..self.ny {
                points.push(vec![(i + 1) as f64, (j + 1) as f64]);
            }
        }
        FiniteSpace::new(points).expect("grid points are distinct")
    }

    /// Flat cell index for a data point, or `None` when it falls outside the
    /// bounding box. Cells are half-open with boundary points assigned to
    /// the lower-index cell.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        let ix = axis_index(x, self.bbox[0], self.bbox[1], self.nx)?;
        let iy = axis_index(y, self.bbox[2], self.bbox[3], self.ny)?;
        Some(ix * self.ny + iy)
    }
}

fn axis_index(v: f64, lo: f64, hi: f64, cells: usize) -> Option<usize> {
    if !v.is_finite() || v < lo || v > hi {
        return None;
    }
    let t = (v - lo) / (hi - lo) * cells as f64;
    // Ties on interior edges go to the lower cell; the global minimum stays
    // in cell 0.
    let idx = (t.ceil() as isize - 1).max(0) as usize;
    Some(idx.min(cells - 1))
}

/// Per-group binned counts over a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDataset {
    pub grid: GridSpec,
    pub groups: BTreeMap<String, EmpiricalMeasure>,
    /// Rows that could not be parsed or fell outside the bounding box.
    pub skipped_rows: u64,
}

impl BinnedDataset {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read dataset {}", path.display()))?;
        let ds: BinnedDataset = serde_json::from_str(&text)
            .with_context(|| format!("invalid dataset JSON in {}", path.display()))?;
        let n = ds.grid.len();
        for (label, m) in &ds.groups {
            if m.len() != n {
                bail!("group {label} has {} cells, grid has {n}", m.len());
            }
        }
        Ok(ds)
    }

    pub fn group(&self, label: &str) -> anyhow::Result<&EmpiricalMeasure> {
        self.groups
            .get(label)
            .with_context(|| format!("dataset has no group named {label:?}"))
    }

    pub fn total_observations(&self) -> u64 {
        self.groups.values().map(|m| m.sample_size()).sum()
    }
}

/// Bins each CSV record to its grid cell and accumulates per-group counts.
///
/// Unparsable rows and rows outside the bounding box are counted and
/// skipped. A group label whose rows were all skipped is an error, as is an
/// input with no usable rows at all.
pub fn ingest_points(
    csv_path: &Path,
    grid: GridSpec,
    group_col: &str,
    x_col: &str,
    y_col: &str,
) -> anyhow::Result<BinnedDataset> {
    let mut reader = csv::Reader::from_path(csv_path)
        .with_context(|| format!("cannot open {}", csv_path.display()))?;
    let headers = reader.headers().context("input CSV needs a header row")?;
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column {name:?} not found in header"))
    };
    let gi = find(group_col)?;
    let xi = find(x_col)?;
    let yi = find(y_col)?;

    let n_cells = grid.len();
    let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut seen: BTreeMap<String, u64> = BTreeMap::new();
    let mut skipped = 0u64;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let group = match record.get(gi) {
            Some(g) if !g.is_empty() => g.to_string(),
            _ => {
                skipped += 1;
                continue;
            }
        };
        *seen.entry(group.clone()).or_insert(0) += 1;
        let parsed = record
            .get(xi)
            .and_then(|x| x.trim().parse::<f64>().ok())
            .zip(record.get(yi).and_then(|y| y.trim().parse::<f64>().ok()));
        let Some((x, y)) = parsed else {
            skipped += 1;
            continue;
        };
        let Some(cell) = grid.cell_index(x, y) else {
            skipped += 1;
            continue;
        };
        counts.entry(group).or_insert_with(|| vec![0; n_cells])[cell] += 1;
    }

    for label in seen.keys() {
        if !counts.contains_key(label) {
            bail!("group {label:?} has no usable rows");
        }
    }
    if counts.is_empty() {
        bail!("no usable rows in {}", csv_path.display());
    }
    let groups = counts
        .into_iter()
        .map(|(label, c)| {
            let m = EmpiricalMeasure::from_counts(c)?;
            Ok((label, m))
        })
        .collect::<Result<BTreeMap<_, _>, sinkdiv::Error>>()?;
    Ok(BinnedDataset {
        grid,
        groups,
        skipped_rows: skipped,
    })
}

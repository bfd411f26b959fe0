//! Persistence images: Gaussian rasterization of a diagram on a fixed grid,
//! weighted by `arctan(C · (d − b)^p)`.
//!
//! Flattened vectors are row-major over `(birth index, death index)` with the
//! birth index fastest: cell `(i, j)` lives at `j * nb + i`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce::PersistenceDiagram;

pub const ORDERING: &str = "row-major over (birth, death), birth index fastest: k = j * nb + i";

/// Rectangle `[b_min, b_max] × [d_min, d_max]` split into `nb × nd` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PIGrid {
    pub b_min: f64,
    pub b_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub nb: usize,
    pub nd: usize,
}

impl PIGrid {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.b_min, self.b_max, self.d_min, self.d_max].iter().all(|v| v.is_finite());
        if !finite || self.b_min >= self.b_max || self.d_min >= self.d_max {
            return Err(Error::invalid(format!("degenerate persistence image grid {self:?}")));
        }
        if self.nb == 0 || self.nd == 0 {
            return Err(Error::invalid("grid must have at least one cell per axis"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nb * self.nd
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self) -> f64 {
        (self.b_max - self.b_min) / self.nb as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.d_max - self.d_min) / self.nd as f64
    }

    pub fn birth_center(&self, i: usize) -> f64 {
        self.b_min + (i as f64 + 0.5) * self.cell_width()
    }

    pub fn death_center(&self, j: usize) -> f64 {
        self.d_min + (j as f64 + 0.5) * self.cell_height()
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        j * self.nb + i
    }

    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        (k % self.nb, k / self.nb)
    }

    /// `[b_lo, b_hi) × [d_lo, d_hi)` of cell `(i, j)`.
    pub fn cell_bounds(&self, i: usize, j: usize) -> [f64; 4] {
        let b = |i: usize| self.b_min + (self.b_max - self.b_min) * i as f64 / self.nb as f64;
        let d = |j: usize| self.d_min + (self.d_max - self.d_min) * j as f64 / self.nd as f64;
        [b(i), b(i + 1), d(j), d(j + 1)]
    }

    /// Cell containing `(b, d)` under half-open rectangles, if inside.
    pub fn locate(&self, b: f64, d: f64) -> Option<(usize, usize)> {
        let fi = ((b - self.b_min) / self.cell_width()).floor();
        let fj = ((d - self.d_min) / self.cell_height()).floor();
        if !(fi >= 0.0 && fj >= 0.0 && fi < self.nb as f64 && fj < self.nd as f64) {
            return None;
        }
        let (mut i, mut j) = (fi as usize, fj as usize);
        // Guard the floor against rounding at cell edges.
        let [b_lo, _, d_lo, _] = self.cell_bounds(i, j);
        if b < b_lo {
            i = i.checked_sub(1)?;
        } else if i + 1 < self.nb && b >= self.cell_bounds(i + 1, j)[0] {
            i += 1;
        }
        if d < d_lo {
            j = j.checked_sub(1)?;
        } else if j + 1 < self.nd && d >= self.cell_bounds(i, j + 1)[2] {
            j += 1;
        }
        Some((i, j))
    }

    /// Smallest grid with the given resolution covering all finite pairs of
    /// `degree`, padded by `margin` on every side. This is a convenience; the
    /// experiments use fixed ranges.
    pub fn fit_to(diagrams: &[PersistenceDiagram], degree: usize, nb: usize, nd: usize, margin: f64) -> Result<Self> {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in diagrams.iter().flat_map(|d| d.degree(degree)).filter(|p| !p.is_essential()) {
            lo = (lo.0.min(p.birth), lo.1.min(p.death));
            hi = (hi.0.max(p.birth), hi.1.max(p.death));
        }
        if !lo.0.is_finite() {
            return Err(Error::invalid(format!("no finite pairs in degree {degree} to fit a grid to")));
        }
        let grid =
            PIGrid { b_min: lo.0 - margin, b_max: hi.0 + margin, d_min: lo.1 - margin, d_max: hi.1 + margin, nb, nd };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PIParams {
    /// Gaussian bandwidth in birth/death units.
    pub sigma: f64,
    /// Weight scale `C`.
    pub c: f64,
    /// Weight exponent `p`.
    pub p: f64,
    pub grid: PIGrid,
}

impl PIParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("C", self.c), ("p", self.p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        self.grid.validate()
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }
}

/// `arctan(C · (d − b)^p)`.
pub fn weight(b: f64, d: f64, c: f64, p: f64) -> Result<f64> {
    if d < b {
        return Err(Error::invalid(format!("death {d} precedes birth {b}")));
    }
    Ok((c * (d - b).powf(p)).atan())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceImageVector {
    pub values: Vec<f64>,
    pub params: PIParams,
}

#[derive(Serialize, Deserialize)]
struct VectorSidecar {
    params: PIParams,
    ordering: String,
    len: usize,
}

impl PersistenceImageVector {
    /// Sidecar path next to a vector file: `foo.csv` → `foo.json`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::with_capacity(self.values.len() * 12);
        for v in &self.values {
            s.push_str(&format!("{v:?}\n"));
        }
        std::fs::write(path, s)?;
        let sidecar = VectorSidecar { params: self.params, ordering: ORDERING.to_string(), len: self.values.len() };
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let values = read_vector_csv(path)?;
        let sidecar_path = Self::sidecar_path(path);
        let sidecar: VectorSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar_path)?)
            .map_err(|e| Error::parse(&sidecar_path, e.to_string()))?;
        if values.len() != sidecar.params.dim() {
            return Err(Error::parse(
                path,
                format!("{} values but the grid has {} cells", values.len(), sidecar.params.dim()),
            ));
        }
        Ok(PersistenceImageVector { values, params: sidecar.params })
    }
}

/// One value per line.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| l.parse::<f64>().map_err(|e| Error::parse(path, format!("value {}: {e}", i + 1))))
        .collect()
}

/// Samples the persistence image of degree `degree` at every cell center.
pub fn vectorize(dg: &PersistenceDiagram, degree: usize, params: &PIParams) -> Result<PersistenceImageVector> {
    params.validate()?;
    let g = &params.grid;
    let mut values = vec![0.0; g.len()];
    let mut gb = vec![0.0; g.nb];
    let mut gd = vec![0.0; g.nd];
    let inv = 1.0 / (2.0 * params.sigma * params.sigma);
    for pair in dg.degree(degree) {
        if pair.is_essential() {
            return Err(Error::InfiniteDeath { degree });
        }
        let w = weight(pair.birth, pair.death, params.c, params.p)?;
        if w == 0.0 {
            continue;
        }
        for (i, slot) in gb.iter_mut().enumerate() {
            let dx = pair.birth - g.birth_center(i);
            *slot = (-dx * dx * inv).exp();
        }
        for (j, slot) in gd.iter_mut().enumerate() {
            let dy = pair.death - g.death_center(j);
            *slot = w * (-dy * dy * inv).exp();
        }
        for (j, &wy) in gd.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            let row = &mut values[j * g.nb..(j + 1) * g.nb];
            for (v, &wx) in row.iter_mut().zip(&gb) {
                *v += wy * wx;
            }
        }
    }
    Ok(PersistenceImageVector { values, params: *params })
}

/// A vector laid back onto the persistence-image grid, e.g. learned weights.
/// Values may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualDiagram {
    pub values: Vec<f64>,
    pub params: PIParams,
    #[serde(default)]
    pub provenance: String,
}

impl DualDiagram {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.params.grid.flat_index(i, j)]
    }

    pub fn grid(&self) -> &PIGrid {
        &self.params.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rows of the grid, death index outermost.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.params.grid.nb)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let dd: DualDiagram =
            serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::parse(path, e.to_string()))?;
        if dd.values.len() != dd.params.dim() {
            return Err(Error::parse(path, "value count does not match the grid"));
        }
        Ok(dd)
    }
}

/// Reshapes a flat vector onto the grid of `params`; values are untouched.
pub fn reconstruct(vec: &[f64], params: &PIParams) -> Result<DualDiagram> {
    params.validate()?;
    if vec.len() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), found: vec.len() });
    }
    Ok(DualDiagram { values: vec.to_vec(), params: *params, provenance: String::new() })
}

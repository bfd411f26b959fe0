//! Filtered cell complexes built from point clouds and images.
//!
//! A [`FilteredComplex`] stores its cells in filtration order. A cell's id is
//! its position in that order, and boundaries refer to earlier ids.

mod cubical;
mod simplicial;

pub use cubical::{cubical_filtration, signed_manhattan, CellFunction};
pub use simplicial::{cech_filtration, minimum_enclosing_radius, rips_filtration};

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::unionfind::UnionFind;

/// A finite set of points in ℝᴺ, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    /// Builds a cloud from a non-empty list of points of equal dimension.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match points.first() {
            Some(p) => p.len(),
            None => return Err(Error::invalid("point cloud may not be empty")),
        };
        Self::with_dim(dim, points)
    }

    /// Like [`PointCloud::new`] but with the dimension given up front, which
    /// also admits an empty cloud (a Poisson sample may have no points).
    pub fn with_dim(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(format!("point {i} has dimension {}, expected {dim}", p.len())));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(p);
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.point(i), self.point(j))
    }

    /// Rejects exactly coincident points.
    pub fn check_distinct(&self) -> Result<()> {
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                if self.point(i) == self.point(j) {
                    return Err(Error::DuplicatePoint(i, j));
                }
            }
        }
        Ok(())
    }

    /// One point per line, comma separated. Blank lines and lines starting
    /// with `#` are skipped; a non-numeric first line is treated as a header.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut points = Vec::new();
        for (lineno, line) in file.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match parsed {
                Ok(p) => points.push(p),
                Err(_) if points.is_empty() && lineno == 0 => continue,
                Err(e) => return Err(Error::parse(path, format!("line {}: {e}", lineno + 1))),
            }
        }
        if points.is_empty() {
            // An empty file is a valid empty planar sample.
            return PointCloud::with_dim(2, points);
        }
        PointCloud::new(points).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in self.iter() {
            let row: Vec<String> = p.iter().map(|c| format!("{c:?}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A binary image; `true` marks a white (foreground) pixel. Pixels are stored
/// row-major with `x` the column and `y` the row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, found: pixels.len() });
        }
        Ok(BinaryImage { width, height, pixels })
    }

    /// Parses rows of `0`/`1` characters (whitespace ignored), top row first.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<bool>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for ch in line.chars().filter(|c| !c.is_whitespace()) {
                match ch {
                    '0' => row.push(false),
                    '1' => row.push(true),
                    other => return Err(Error::invalid(format!("unexpected character {other:?} in image text"))),
                }
            }
            rows.push(row);
        }
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("image rows have different lengths"));
        }
        BinaryImage::new(width, height, rows.concat())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.get(x, y) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn white_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Number of connected components of pixels of colour `white`, with
    /// 4- or 8-neighbourhoods.
    pub fn component_count(&self, white: bool, connectivity: Connectivity) -> usize {
        let (w, h) = (self.width, self.height);
        let mut uf = UnionFind::new(w * h);
        let mut join = |a: usize, b: usize| {
            uf.union(a, b);
        };
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if self.pixels[i] != white {
                    continue;
                }
                let mut nbrs = [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)].as_slice();
                if connectivity == Connectivity::Four {
                    nbrs = &nbrs[..2];
                }
                for &(dx, dy) in nbrs {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0 && (nx as usize) < w && (ny as usize) < h {
                        let j = ny as usize * w + nx as usize;
                        if self.pixels[j] == white {
                            join(i, j);
                        }
                    }
                }
            }
        }
        (0..w * h).filter(|&i| self.pixels[i] == white && uf.find(i) == i).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexKind {
    Simplicial,
    /// Cubical complex over a `width × height` pixel grid.
    Cubical {
        width: usize,
        height: usize,
    },
    /// Assembled by hand through [`FilteredComplex::from_cells`].
    Generic,
}

/// One cell handed to [`FilteredComplex::from_cells`]. `boundary` holds
/// positions within the same input list.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub dim: usize,
    pub value: f64,
    pub boundary: Vec<usize>,
    pub points: Vec<Vec<f64>>,
}

/// Cells in filtration order with values, boundaries and geometry.
///
/// The geometry payload of a cell is a short list of points: the vertex
/// coordinates of a simplex, or the center of the pixel realizing a cube's
/// value.
#[derive(Debug, Clone)]
pub struct FilteredComplex {
    kind: ComplexKind,
    ambient_dim: usize,
    dims: Vec<u8>,
    values: Vec<f64>,
    boundary_offsets: Vec<u32>,
    boundary: Vec<u32>,
    geom_offsets: Vec<u32>,
    geom: Vec<f64>,
}

/// Borrowed view of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellRef<'a> {
    pub id: usize,
    pub dim: usize,
    pub value: f64,
    pub boundary: &'a [u32],
    complex: &'a FilteredComplex,
}

impl<'a> CellRef<'a> {
    pub fn points(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.complex.cell_points(self.id)
    }
}

/// Incremental construction in final order; used by the filtration builders.
pub(crate) struct ComplexBuilder {
    inner: FilteredComplex,
}

impl ComplexBuilder {
    pub(crate) fn new(kind: ComplexKind, ambient_dim: usize, capacity: usize) -> Self {
        let mut inner = FilteredComplex {
            kind,
            ambient_dim,
            dims: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            boundary_offsets: Vec::with_capacity(capacity + 1),
            boundary: Vec::new(),
            geom_offsets: Vec::with_capacity(capacity + 1),
            geom: Vec::new(),
        };
        inner.boundary_offsets.push(0);
        inner.geom_offsets.push(0);
        ComplexBuilder { inner }
    }

    pub(crate) fn push(&mut self, dim: usize, value: f64, boundary: impl IntoIterator<Item = u32>, geom: &[f64]) {
        let c = &mut self.inner;
        c.dims.push(dim as u8);
        c.values.push(value);
        c.boundary.extend(boundary);
        c.boundary_offsets.push(c.boundary.len() as u32);
        c.geom.extend_from_slice(geom);
        c.geom_offsets.push((c.geom.len() / c.ambient_dim) as u32);
    }

    pub(crate) fn finish(self) -> FilteredComplex {
        self.inner
    }
}

impl FilteredComplex {
    /// Builds a complex from cells given in their filtration order and
    /// validates it. Boundaries are sorted; duplicate boundary entries are
    /// rejected.
    pub fn from_cells(ambient_dim: usize, cells: &[Cell]) -> Result<Self> {
        let mut b = ComplexBuilder::new(ComplexKind::Generic, ambient_dim.max(1), cells.len());
        for (id, cell) in cells.iter().enumerate() {
            let mut bnd: Vec<u32> = cell.boundary.iter().map(|&f| f as u32).collect();
            bnd.sort_unstable();
            if bnd.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::MalformedComplex(format!("cell {id} repeats a boundary face")));
            }
            let mut geom = Vec::new();
            for p in &cell.points {
                if p.len() != ambient_dim {
                    return Err(Error::DimensionMismatch { expected: ambient_dim, found: p.len() });
                }
                geom.extend_from_slice(p);
            }
            b.push(cell.dim, cell.value, bnd, &geom);
        }
        let fc = b.finish();
        fc.validate()?;
        Ok(fc)
    }

    /// Checks the ordering invariants: faces precede cofaces, have dimension
    /// one lower, and carry values no larger than the coface; values are
    /// nondecreasing along the order.
    pub fn validate(&self) -> Result<()> {
        for id in 0..self.len() {
            let dim = self.dim(id);
            let value = self.value(id);
            if !value.is_finite() {
                return Err(Error::MalformedComplex(format!("cell {id} has a non-finite value")));
            }
            if id > 0 && self.value(id - 1) > value {
                return Err(Error::MalformedComplex(format!("filtration value decreases at cell {id}")));
            }
            let bnd = self.boundary(id);
            let expected = match self.kind {
                ComplexKind::Simplicial => Some(if dim == 0 { 0 } else { dim + 1 }),
                ComplexKind::Cubical { .. } => Some(2 * dim),
                ComplexKind::Generic => None,
            };
            if let Some(n) = expected {
                if bnd.len() != n {
                    return Err(Error::MalformedComplex(format!(
                        "cell {id} of dimension {dim} has {} boundary faces, expected {n}",
                        bnd.len()
                    )));
                }
            }
            if dim == 0 && !bnd.is_empty() {
                return Err(Error::MalformedComplex(format!("vertex {id} has a boundary")));
            }
            for &f in bnd {
                let f = f as usize;
                if f >= id {
                    return Err(Error::MalformedComplex(format!("face {f} does not precede its coface {id}")));
                }
                if self.dim(f) + 1 != dim {
                    return Err(Error::MalformedComplex(format!("face {f} of cell {id} has the wrong dimension")));
                }
                if self.value(f) > value {
                    return Err(Error::MalformedComplex(format!("face {f} enters after its coface {id}")));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ComplexKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self, id: usize) -> usize {
        self.dims[id] as usize
    }

    pub fn value(&self, id: usize) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_dim(&self) -> Option<usize> {
        self.dims.iter().max().map(|&d| d as usize)
    }

    pub fn boundary(&self, id: usize) -> &[u32] {
        &self.boundary[self.boundary_offsets[id] as usize..self.boundary_offsets[id + 1] as usize]
    }

    pub fn cell_points(&self, id: usize) -> impl Iterator<Item = &[f64]> + '_ {
        let lo = self.geom_offsets[id] as usize * self.ambient_dim;
        let hi = self.geom_offsets[id + 1] as usize * self.ambient_dim;
        self.geom[lo..hi].chunks_exact(self.ambient_dim)
    }

    pub fn cell(&self, id: usize) -> CellRef<'_> {
        CellRef { id, dim: self.dim(id), value: self.value(id), boundary: self.boundary(id), complex: self }
    }

    pub fn cells(&self) -> impl Iterator<Item = CellRef<'_>> + '_ {
        (0..self.len()).map(move |id| self.cell(id))
    }

    /// Number of cells per dimension.
    pub fn counts_by_dim(&self) -> Vec<usize> {
        let mut counts = vec![0; self.max_dim().map_or(0, |d| d + 1)];
        for &d in &self.dims {
            counts[d as usize] += 1;
        }
        counts
    }

    /// Debug dump: `id,dim,value,boundary` with boundary ids space separated.
    pub fn to_debug_csv(&self) -> String {
        let mut s = String::from("id,dim,value,boundary\n");
        for c in self.cells() {
            let bnd: Vec<String> = c.boundary.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "{},{},{:?},{}", c.id, c.dim, c.value, bnd.join(" "));
        }
        s
    }

    /// Owned copies of the cells, e.g. for reordering in tests.
    pub fn to_cells(&self) -> Vec<Cell> {
        self.cells()
            .map(|c| Cell {
                dim: c.dim,
                value: c.value,
                boundary: c.boundary.iter().map(|&f| f as usize).collect(),
                points: c.points().map(<[f64]>::to_vec).collect(),
            })
            .collect()
    }
}

//! Persistent homology over 𝔽₂ by boundary-matrix column reduction.
//!
//! Columns of each dimension are reduced from the top dimension down, so a
//! column known to be a pivot of the dimension above can be cleared without
//! being reduced. Degree 0 uses a union-find sweep, which pairs cells exactly
//! as reducing the edge columns would (the younger component dies).

use std::fmt::Write as _;
use std::path::Path;

use crate::complex::FilteredComplex;
use crate::error::{Error, Result};
use crate::unionfind::UnionFind;

/// A birth-death pair with the cells (and their geometry) that created and
/// destroyed the class.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistencePair {
    pub degree: usize,
    pub birth: f64,
    /// `f64::INFINITY` for an essential class.
    pub death: f64,
    pub birth_cell: Option<usize>,
    pub death_cell: Option<usize>,
    pub birth_pos: Vec<Vec<f64>>,
    pub death_pos: Vec<Vec<f64>>,
}

impl PersistencePair {
    pub fn new(degree: usize, birth: f64, death: f64) -> Self {
        PersistencePair {
            degree,
            birth,
            death,
            birth_cell: None,
            death_cell: None,
            birth_pos: Vec::new(),
            death_pos: Vec::new(),
        }
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }

    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }

    /// Barycenter of the birth position, if any.
    pub fn birth_point(&self) -> Option<Vec<f64>> {
        barycenter(&self.birth_pos)
    }

    pub fn death_point(&self) -> Option<Vec<f64>> {
        barycenter(&self.death_pos)
    }
}

fn barycenter(points: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = points.first()?;
    let mut c = vec![0.0; first.len()];
    for p in points {
        for (acc, x) in c.iter_mut().zip(p) {
            *acc += x;
        }
    }
    let n = points.len() as f64;
    c.iter_mut().for_each(|x| *x /= n);
    Some(c)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersistenceDiagram {
    pub pairs: Vec<PersistencePair>,
    pub source: String,
    pub reduced: bool,
}

impl PersistenceDiagram {
    pub fn degree(&self, q: usize) -> impl Iterator<Item = &PersistencePair> + '_ {
        self.pairs.iter().filter(move |p| p.degree == q)
    }

    /// `(birth, death)` of every pair in degree `q`, sorted.
    pub fn birth_death(&self, q: usize) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.degree(q).map(|p| (p.birth, p.death)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }

    /// Applies a nondecreasing map to every birth and death value, e.g. to
    /// square radii. Infinite deaths stay infinite.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> PersistenceDiagram {
        let mut out = self.clone();
        for p in &mut out.pairs {
            p.birth = f(p.birth);
            if !p.is_essential() {
                p.death = f(p.death);
            }
        }
        out
    }

    /// Number of classes of degree `q` alive at `t`, i.e. `birth ≤ t < death`.
    pub fn rank_at(&self, q: usize, t: f64) -> usize {
        self.degree(q).filter(|p| p.birth <= t && t < p.death).count()
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        if !self.source.is_empty() {
            let _ = writeln!(s, "# source={}", self.source.replace('\n', " "));
        }
        let _ = writeln!(s, "# reduced={}", self.reduced);
        s.push_str("degree,birth,death,birth_x,birth_y,death_vertices\n");
        for p in &self.pairs {
            let (bx, by) = match p.birth_point() {
                Some(c) => (fmt_f64(c[0]), c.get(1).map_or(String::new(), |&y| fmt_f64(y))),
                None => (String::new(), String::new()),
            };
            let death_vertices: Vec<String> =
                p.death_pos.iter().map(|v| v.iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(" ")).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.degree,
                fmt_f64(p.birth),
                fmt_f64(p.death),
                bx,
                by,
                death_vertices.join(";")
            );
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut dg = PersistenceDiagram::default();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(src) = meta.strip_prefix("source=") {
                    dg.source = src.to_string();
                } else if let Some(r) = meta.strip_prefix("reduced=") {
                    dg.reduced = r.trim() == "true";
                }
                continue;
            }
            if !saw_header {
                if !line.starts_with("degree") {
                    return Err(Error::invalid(format!("line {}: expected the diagram header", lineno + 1)));
                }
                saw_header = true;
                continue;
            }
            let bad = |what: &str| Error::invalid(format!("line {}: bad {what}", lineno + 1));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 3 {
                return Err(bad("row"));
            }
            let degree: usize = fields[0].trim().parse().map_err(|_| bad("degree"))?;
            let birth = parse_f64(fields[1]).ok_or_else(|| bad("birth"))?;
            let death = parse_f64(fields[2]).ok_or_else(|| bad("death"))?;
            let mut pair = PersistencePair::new(degree, birth, death);
            let opt = |i: usize| fields.get(i).map(|s| s.trim()).filter(|s| !s.is_empty());
            if let Some(bx) = opt(3) {
                let mut pt = vec![parse_f64(bx).ok_or_else(|| bad("birth_x"))?];
                if let Some(by) = opt(4) {
                    pt.push(parse_f64(by).ok_or_else(|| bad("birth_y"))?);
                }
                pair.birth_pos.push(pt);
            }
            if let Some(dv) = opt(5) {
                for vertex in dv.split(';') {
                    let coords: Option<Vec<f64>> = vertex.split_whitespace().map(parse_f64).collect();
                    pair.death_pos.push(coords.ok_or_else(|| bad("death_vertices"))?);
                }
            }
            dg.pairs.push(pair);
        }
        if !saw_header {
            return Err(Error::invalid("missing diagram header"));
        }
        Ok(dg)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        PersistenceDiagram::from_csv_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:?}")
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "Infinity" | "+inf" => Some(f64::INFINITY),
        other => other.parse().ok(),
    }
}

/// Switches for the reduction shortcuts. Both are output-equivalent to the
/// plain left-to-right column reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionOptions {
    pub clearing: bool,
    pub union_find_degree0: bool,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions { clearing: true, union_find_degree0: true }
    }
}

impl ReductionOptions {
    pub fn plain() -> Self {
        ReductionOptions { clearing: false, union_find_degree0: false }
    }
}

const NONE: u32 = u32::MAX;

/// Persistence diagram in degrees `0..=max_degree`.
///
/// Zero-lifetime pairs are dropped. With `reduced`, the essential degree-0
/// class born first is removed.
pub fn compute_persistence(fc: &FilteredComplex, max_degree: usize, reduced: bool) -> Result<PersistenceDiagram> {
    compute_persistence_with(fc, max_degree, reduced, ReductionOptions::default())
}

pub fn compute_persistence_with(
    fc: &FilteredComplex,
    max_degree: usize,
    reduced: bool,
    opts: ReductionOptions,
) -> Result<PersistenceDiagram> {
    let n = fc.len();
    if n >= NONE as usize {
        return Err(Error::Unsupported(format!("{n} cells exceed the supported size")));
    }
    for id in 0..n {
        if let Some(&f) = fc.boundary(id).iter().max() {
            if f as usize >= id {
                return Err(Error::MalformedComplex(format!("face {f} does not precede its coface {id}")));
            }
        }
    }

    let top = max_degree + 1;
    let mut partner = vec![NONE; n];
    let mut positive = vec![false; n];
    let mut cleared = vec![false; n];

    for d in (1..=top).rev() {
        if d == 1 && opts.union_find_degree0 {
            union_find_pass(fc, &mut partner, &mut positive);
            continue;
        }
        let mut pivot_owner: Vec<u32> = vec![NONE; n];
        let mut reduced_cols: Vec<Vec<u32>> = Vec::new();
        let mut col_slot: Vec<u32> = vec![NONE; n];
        let mut scratch = Vec::new();
        for j in 0..n {
            if fc.dim(j) != d {
                continue;
            }
            if opts.clearing && cleared[j] {
                positive[j] = true;
                continue;
            }
            let mut col: Vec<u32> = fc.boundary(j).to_vec();
            while let Some(&low) = col.last() {
                let owner = pivot_owner[low as usize];
                if owner == NONE {
                    break;
                }
                let other = &reduced_cols[col_slot[owner as usize] as usize];
                xor_sorted(&col, other, &mut scratch);
                std::mem::swap(&mut col, &mut scratch);
            }
            match col.last() {
                None => positive[j] = true,
                Some(&low) => {
                    pivot_owner[low as usize] = j as u32;
                    partner[low as usize] = j as u32;
                    partner[j] = low;
                    cleared[low as usize] = true;
                    col_slot[j] = reduced_cols.len() as u32;
                    reduced_cols.push(col);
                }
            }
        }
    }

    let mut pairs = Vec::new();
    let mut first_essential_vertex: Option<usize> = None;
    for id in 0..n {
        let dim = fc.dim(id);
        if dim > max_degree {
            continue;
        }
        if dim > 0 && !positive[id] {
            continue;
        }
        let birth = fc.value(id);
        let (death, death_cell) = match partner[id] {
            NONE => (f64::INFINITY, None),
            p => (fc.value(p as usize), Some(p as usize)),
        };
        if death_cell.is_none() && dim == 0 && first_essential_vertex.is_none() {
            first_essential_vertex = Some(id);
            if reduced {
                continue;
            }
        }
        if death <= birth {
            continue;
        }
        pairs.push(PersistencePair {
            degree: dim,
            birth,
            death,
            birth_cell: Some(id),
            death_cell,
            birth_pos: fc.cell_points(id).map(<[f64]>::to_vec).collect(),
            death_pos: death_cell.map_or_else(Vec::new, |c| fc.cell_points(c).map(<[f64]>::to_vec).collect()),
        });
    }
    Ok(PersistenceDiagram { pairs, source: String::new(), reduced })
}

/// Elder-rule sweep over vertices and edges.
fn union_find_pass(fc: &FilteredComplex, partner: &mut [u32], positive: &mut [bool]) {
    let n = fc.len();
    let mut uf = UnionFind::new(n);
    // Oldest vertex of each component, stored at its root.
    let mut oldest: Vec<u32> = (0..n as u32).collect();
    for id in 0..n {
        if fc.dim(id) != 1 {
            continue;
        }
        let bnd = fc.boundary(id);
        let (ra, rb) = (uf.find(bnd[0] as usize), uf.find(bnd[1] as usize));
        if ra == rb {
            positive[id] = true;
            continue;
        }
        let (oa, ob) = (oldest[ra], oldest[rb]);
        let (elder, younger) = if oa < ob { (oa, ob) } else { (ob, oa) };
        let root = uf.union(ra, rb).expect("distinct roots");
        oldest[root] = elder;
        partner[younger as usize] = id as u32;
        partner[id] = younger;
    }
}

/// Symmetric difference of two sorted index lists.
fn xor_sorted(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Largest complex accepted by [`betti_oracle`].
pub const ORACLE_CELL_LIMIT: usize = 256;

/// Rank of `H_q(X_t; 𝔽₂)` by dense Gaussian elimination on the boundary
/// matrices of the sublevel complex `{σ : value(σ) ≤ t}`.
pub fn betti_oracle(fc: &FilteredComplex, t: f64, q: usize) -> Result<usize> {
    if fc.len() > ORACLE_CELL_LIMIT {
        return Err(Error::TooLarge { cells: fc.len(), limit: ORACLE_CELL_LIMIT });
    }
    let alive: Vec<usize> = (0..fc.len()).filter(|&i| fc.value(i) <= t).collect();
    let count_q = alive.iter().filter(|&&i| fc.dim(i) == q).count();
    let rank_q = if q == 0 { 0 } else { boundary_rank(fc, &alive, q) };
    let rank_q1 = boundary_rank(fc, &alive, q + 1);
    Ok(count_q - rank_q - rank_q1)
}

fn boundary_rank(fc: &FilteredComplex, alive: &[usize], dim: usize) -> usize {
    let words = fc.len().div_ceil(64);
    let mut rows: Vec<Vec<u64>> = alive
        .iter()
        .filter(|&&i| fc.dim(i) == dim)
        .map(|&i| {
            let mut v = vec![0u64; words];
            for &f in fc.boundary(i) {
                v[f as usize / 64] ^= 1 << (f % 64);
            }
            v
        })
        .collect();
    let mut rank = 0;
    for bit in 0..fc.len() {
        let (w, m) = (bit / 64, 1u64 << (bit % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & m != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & m != 0 {
                for (x, y) in row.iter_mut().zip(&pivot) {
                    *x ^= y;
                }
            }
        }
        rank += 1;
    }
    rank
}

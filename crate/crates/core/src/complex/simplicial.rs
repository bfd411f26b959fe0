//! Čech and Rips filtrations on point clouds.
//!
//! Filtration values are ball radii: an edge `{x, y}` enters at `‖x − y‖ / 2`.

use std::collections::HashMap;

use super::{dist, ComplexBuilder, ComplexKind, FilteredComplex, PointCloud};
use crate::error::{Error, Result};

/// Radius of the smallest ball containing `points`.
///
/// Every minimum enclosing ball is determined by at most three of the
/// points when they lie in the plane, and any ball containing at most three
/// points in ℝᴺ is likewise determined by a support of size ≤ 3. The
/// candidates from all supports of size 1 to 3 are checked exhaustively.
pub fn minimum_enclosing_radius(points: &[&[f64]]) -> f64 {
    match points.len() {
        0 | 1 => return 0.0,
        2 => return dist(points[0], points[1]) / 2.0,
        _ => {}
    }
    let scale = points.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let encloses = |center: &[f64], r: f64| points.iter().all(|p| dist(p, center) <= r + tol);

    let mut best = f64::INFINITY;
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            let r = dist(points[i], points[j]) / 2.0;
            if r >= best {
                continue;
            }
            let center: Vec<f64> = points[i].iter().zip(points[j]).map(|(a, b)| 0.5 * (a + b)).collect();
            if encloses(&center, r) {
                best = r;
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if let Some((center, r)) = circumball(points[i], points[j], points[k]) {
                    if r < best && encloses(&center, r) {
                        best = r;
                    }
                }
            }
        }
    }
    // Only reachable when every point coincides.
    if best.is_infinite() {
        0.0
    } else {
        best
    }
}

/// Circumcenter and circumradius of a triangle in ℝᴺ, `None` if degenerate.
fn circumball(a: &[f64], b: &[f64], c: &[f64]) -> Option<(Vec<f64>, f64)> {
    let u: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let v: Vec<f64> = c.iter().zip(a).map(|(x, y)| x - y).collect();
    let uu: f64 = u.iter().map(|x| x * x).sum();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let uv: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
    let det = uu * vv - uv * uv;
    if det <= 1e-14 * uu * vv {
        return None;
    }
    // Solve [uu uv; uv vv] [α β]ᵀ = ½ [uu vv]ᵀ.
    let alpha = 0.5 * (uu * vv - uv * vv) / det;
    let beta = 0.5 * (vv * uu - uv * uu) / det;
    let center: Vec<f64> = (0..a.len()).map(|d| a[d] + alpha * u[d] + beta * v[d]).collect();
    let r = dist(&center, a);
    Some((center, r))
}

/// Čech filtration with simplices of dimension `0..=max_dim + 1`.
///
/// Any ambient dimension works up to triangles (`max_dim = 1`); higher
/// simplices are only supported in the plane.
pub fn cech_filtration(pc: &PointCloud, max_dim: usize) -> Result<FilteredComplex> {
    if max_dim < 1 {
        return Err(Error::invalid("max_dim must be at least 1"));
    }
    if pc.dim() != 2 && max_dim > 1 {
        return Err(Error::Unsupported(format!(
            "Čech values of simplices above dimension 2 are only implemented in the plane (got ℝ^{})",
            pc.dim()
        )));
    }
    pc.check_distinct()?;
    build(pc, max_dim + 1, |verts| {
        let pts: Vec<&[f64]> = verts.iter().map(|&v| pc.point(v as usize)).collect();
        minimum_enclosing_radius(&pts)
    })
}

/// Vietoris–Rips filtration with simplices of dimension `0..=max_dim + 1`.
pub fn rips_filtration(pc: &PointCloud, max_dim: usize) -> Result<FilteredComplex> {
    if max_dim < 1 {
        return Err(Error::invalid("max_dim must be at least 1"));
    }
    pc.check_distinct()?;
    build(pc, max_dim + 1, |verts| {
        let mut r = 0.0f64;
        for (i, &a) in verts.iter().enumerate() {
            for &b in &verts[i + 1..] {
                r = r.max(pc.distance(a as usize, b as usize) / 2.0);
            }
        }
        r
    })
}

struct Simplex {
    vertices: Vec<u32>,
    value: f64,
}

fn build(pc: &PointCloud, top_dim: usize, value_of: impl Fn(&[u32]) -> f64) -> Result<FilteredComplex> {
    let n = pc.len();
    let mut simplices: Vec<Simplex> = Vec::new();
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();

    for k in 0..=top_dim.min(n.saturating_sub(1)) {
        for verts in combinations(n, k + 1) {
            let mut value = value_of(&verts);
            // Keep value(face) ≤ value(coface) exact under rounding.
            if k > 0 {
                for skip in 0..verts.len() {
                    let face = face_without(&verts, skip);
                    value = value.max(simplices[index[&face]].value);
                }
            }
            index.insert(verts.clone(), simplices.len());
            simplices.push(Simplex { vertices: verts, value });
        }
    }

    // Order by (value, dimension, enumeration id).
    let mut order: Vec<usize> = (0..simplices.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&simplices[a], &simplices[b]);
        sa.value.total_cmp(&sb.value).then(sa.vertices.len().cmp(&sb.vertices.len())).then(a.cmp(&b))
    });
    let mut position = vec![0u32; simplices.len()];
    for (pos, &s) in order.iter().enumerate() {
        position[s] = pos as u32;
    }

    let mut builder = ComplexBuilder::new(ComplexKind::Simplicial, pc.dim(), simplices.len());
    let mut geom = Vec::new();
    for &s in &order {
        let simplex = &simplices[s];
        let verts = &simplex.vertices;
        let mut bnd: Vec<u32> = if verts.len() > 1 {
            (0..verts.len()).map(|skip| position[index[&face_without(verts, skip)]]).collect()
        } else {
            Vec::new()
        };
        bnd.sort_unstable();
        geom.clear();
        for &v in verts {
            geom.extend_from_slice(pc.point(v as usize));
        }
        builder.push(verts.len() - 1, simplex.value, bnd, &geom);
    }
    Ok(builder.finish())
}

fn face_without(verts: &[u32], skip: usize) -> Vec<u32> {
    verts.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect()
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<u32>> {
    let mut current: Option<Vec<u32>> = if k <= n && k > 0 { Some((0..k as u32).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let cur = current.as_mut().unwrap();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if (cur[i] as usize) < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PointCloud {
        PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()
    }

    /// Independent oracle: minimum enclosing circle by checking every
    /// candidate center from supports of size 1–3 without the early cutoffs.
    fn brute_meb(points: &[[f64; 2]]) -> f64 {
        let mut candidates: Vec<([f64; 2], f64)> = Vec::new();
        for a in points {
            candidates.push((*a, 0.0));
            for b in points {
                let c = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                candidates.push((c, ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() / 2.0));
                for p in points {
                    // Circumcenter via perpendicular bisector intersection.
                    let d = 2.0 * (a[0] * (b[1] - p[1]) + b[0] * (p[1] - a[1]) + p[0] * (a[1] - b[1]));
                    if d.abs() < 1e-12 {
                        continue;
                    }
                    let a2 = a[0] * a[0] + a[1] * a[1];
                    let b2 = b[0] * b[0] + b[1] * b[1];
                    let p2 = p[0] * p[0] + p[1] * p[1];
                    let ux = (a2 * (b[1] - p[1]) + b2 * (p[1] - a[1]) + p2 * (a[1] - b[1])) / d;
                    let uy = (a2 * (p[0] - b[0]) + b2 * (a[0] - p[0]) + p2 * (b[0] - a[0])) / d;
                    let r = ((a[0] - ux).powi(2) + (a[1] - uy).powi(2)).sqrt();
                    candidates.push(([ux, uy], r));
                }
            }
        }
        candidates
            .into_iter()
            .filter(|(c, r)| points.iter().all(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() <= r + 1e-9))
            .map(|(_, r)| r)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn combinations_enumerate_lexicographically() {
        let all: Vec<Vec<u32>> = combinations(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(5, 3).count(), 10);
        assert_eq!(combinations(2, 3).count(), 0);
    }

    #[test]
    fn square_cech_values() {
        let fc = cech_filtration(&square(), 1).unwrap();
        fc.validate().unwrap();
        assert_eq!(fc.counts_by_dim(), vec![4, 6, 4]);
        let h = std::f64::consts::SQRT_2 / 2.0;
        let edges: Vec<f64> = fc.cells().filter(|c| c.dim == 1).map(|c| c.value).collect();
        assert_eq!(edges.iter().filter(|&&v| v == 0.5).count(), 4);
        assert_eq!(edges.iter().filter(|&&v| (v - h).abs() < 1e-12).count(), 2);
        for tri in fc.cells().filter(|c| c.dim == 2) {
            assert!((tri.value - h).abs() < 1e-12);
            // Oracle agreement.
            let pts: Vec<[f64; 2]> = tri.points().map(|p| [p[0], p[1]]).collect();
            assert!((tri.value - brute_meb(&pts)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_is_one_vertex() {
        let pc = PointCloud::new(vec![vec![0.3, 0.7]]).unwrap();
        let fc = cech_filtration(&pc, 1).unwrap();
        assert_eq!(fc.len(), 1);
        assert_eq!(fc.value(0), 0.0);
    }

    #[test]
    fn rips_square_triangles_enter_at_half_diagonal() {
        let fc = rips_filtration(&square(), 2).unwrap();
        let h = std::f64::consts::SQRT_2 / 2.0;
        assert_eq!(fc.counts_by_dim(), vec![4, 6, 4, 1]);
        for c in fc.cells().filter(|c| c.dim >= 2) {
            assert!((c.value - h).abs() < 1e-15);
        }
    }

    #[test]
    fn two_points_edge_is_half_distance() {
        let pc = PointCloud::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let fc = rips_filtration(&pc, 1).unwrap();
        assert_eq!(fc.value(2), 2.5);
    }

    #[test]
    fn equilateral_cech_exceeds_rips() {
        let s3 = 3f64.sqrt();
        let pc = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, s3 / 2.0]]).unwrap();
        let cech = cech_filtration(&pc, 1).unwrap();
        let rips = rips_filtration(&pc, 2).unwrap();
        let tri = |fc: &FilteredComplex| fc.cells().find(|c| c.dim == 2).unwrap().value;
        assert!((tri(&cech) - 1.0 / s3).abs() < 1e-12);
        assert!((tri(&rips) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn obtuse_triangle_cech_equals_half_longest_edge() {
        let pc = PointCloud::new(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 0.2]]).unwrap();
        let cech = cech_filtration(&pc, 1).unwrap();
        let tri = cech.cells().find(|c| c.dim == 2).unwrap().value;
        assert_eq!(tri, 1.0);
    }

    #[test]
    fn duplicates_and_unsupported_dimensions_rejected() {
        let dup = PointCloud::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(cech_filtration(&dup, 1), Err(Error::DuplicatePoint(0, 1))));
        assert!(matches!(rips_filtration(&dup, 1), Err(Error::DuplicatePoint(0, 1))));
        let pc3 = PointCloud::new(vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(cech_filtration(&pc3, 2), Err(Error::Unsupported(_))));
        assert!(cech_filtration(&pc3, 1).is_ok());
        assert!(cech_filtration(&square(), 0).is_err());
    }

    #[test]
    fn meb_matches_brute_force_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(2..=5);
            let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
            let refs: Vec<&[f64]> = pts.iter().map(|p| &p[..]).collect();
            let got = minimum_enclosing_radius(&refs);
            assert!((got - brute_meb(&pts)).abs() < 1e-9, "{pts:?}");
        }
    }

    #[test]
    fn cech_triangles_dominate_rips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pts: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let pc = PointCloud::new(pts.clone()).unwrap();
            let c = cech_filtration(&pc, 1).unwrap();
            let r = rips_filtration(&pc, 1).unwrap();
            let tri = |fc: &FilteredComplex| fc.cells().find(|x| x.dim == 2).unwrap().value;
            // Vertices and edges agree.
            let low = |fc: &FilteredComplex| {
                let mut v: Vec<f64> = fc.cells().filter(|x| x.dim < 2).map(|x| x.value).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            assert_eq!(low(&c), low(&r));
            assert!(tri(&c) >= tri(&r) - 1e-15);
            // Equality exactly in the non-acute case.
            let d = |i: usize, j: usize| pc.distance(i, j).powi(2);
            let mut sq = [d(0, 1), d(1, 2), d(0, 2)];
            sq.sort_by(f64::total_cmp);
            let obtuse = sq[2] >= sq[0] + sq[1];
            assert_eq!(obtuse, (tri(&c) - tri(&r)).abs() < 1e-12, "{pts:?}");
        }
    }
}

//! Cubical sublevel-set filtrations of 2D images.
//!
//! Elementary cubes of a `width × height` pixel window are addressed on the
//! doubled grid `(2·width + 1) × (2·height + 1)`: a cube at `(gx, gy)` has
//! extent `[gx/2, (gx+1)/2] × [gy/2, (gy+1)/2]` in pixel units, so both
//! coordinates odd means a pixel, both even a vertex, and mixed an edge.

use super::{BinaryImage, ComplexBuilder, ComplexKind, FilteredComplex};
use crate::error::{Error, Result};

/// Filtration values on every elementary cube of a 2D window.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFunction {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl CellFunction {
    /// Extends pixel values to all cubes: a lower-dimensional cube takes the
    /// minimum over the pixels containing it, so the sublevel set at `t` is
    /// the union of closed pixels with value `≤ t`.
    pub fn from_pixel_values(width: usize, height: usize, pixels: &[f64]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("window dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, found: pixels.len() });
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pixel values must be finite"));
        }
        let gw = 2 * width + 1;
        let gh = 2 * height + 1;
        let mut values = vec![f64::INFINITY; gw * gh];
        for y in 0..height {
            for x in 0..width {
                let v = pixels[y * width + x];
                for gy in 2 * y..=2 * y + 2 {
                    for gx in 2 * x..=2 * x + 2 {
                        let slot = &mut values[gy * gw + gx];
                        if v < *slot {
                            *slot = v;
                        }
                    }
                }
            }
        }
        Ok(CellFunction { width, height, values })
    }

    /// Takes values for every cube on the doubled grid (row-major in `gy`)
    /// and checks that no face exceeds a coface.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let gw = 2 * width + 1;
        let gh = 2 * height + 1;
        if width == 0 || height == 0 {
            return Err(Error::invalid("window dimensions must be positive"));
        }
        if values.len() != gw * gh {
            return Err(Error::DimensionMismatch { expected: gw * gh, found: values.len() });
        }
        let f = CellFunction { width, height, values };
        for gy in 0..gh {
            for gx in 0..gw {
                let v = f.value_at(gx, gy);
                if !v.is_finite() {
                    return Err(Error::invalid(format!("cube ({gx}, {gy}) has a non-finite value")));
                }
                for (fx, fy) in faces(gx, gy) {
                    if f.value_at(fx, fy) > v {
                        return Err(Error::invalid(format!(
                            "face ({fx}, {fy}) has a larger value than its coface ({gx}, {gy})"
                        )));
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Value of the cube at doubled-grid coordinates.
    pub fn value_at(&self, gx: usize, gy: usize) -> f64 {
        self.values[gy * (2 * self.width + 1) + gx]
    }

    pub fn pixel_value(&self, x: usize, y: usize) -> f64 {
        self.value_at(2 * x + 1, 2 * y + 1)
    }

    pub fn pixel_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.pixel_value(x, y));
            }
        }
        out
    }
}

fn faces(gx: usize, gy: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut out = [(0, 0); 4];
    let mut n = 0;
    if gx % 2 == 1 {
        out[n] = (gx - 1, gy);
        out[n + 1] = (gx + 1, gy);
        n += 2;
    }
    if gy % 2 == 1 {
        out[n] = (gx, gy - 1);
        out[n + 1] = (gx, gy + 1);
        n += 2;
    }
    out.into_iter().take(n)
}

/// L1 distance on the 4-connected pixel grid to the nearest pixel of
/// `target` colour, by a forward and a backward sweep.
fn manhattan_distance_to(img: &BinaryImage, target: bool) -> Vec<u32> {
    let (w, h) = (img.width(), img.height());
    let inf = u32::MAX / 2;
    let mut d: Vec<u32> = img.pixels().iter().map(|&p| if p == target { 0 } else { inf }).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x > 0 {
                d[i] = d[i].min(d[i - 1] + 1);
            }
            if y > 0 {
                d[i] = d[i].min(d[i - w] + 1);
            }
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if x + 1 < w {
                d[i] = d[i].min(d[i + 1] + 1);
            }
            if y + 1 < h {
                d[i] = d[i].min(d[i + w] + 1);
            }
        }
    }
    d
}

/// Signed Manhattan distance: white pixels get minus the distance to the
/// nearest black pixel, black pixels plus the distance to the nearest white
/// one. Faces take the minimum of their incident pixels.
pub fn signed_manhattan(img: &BinaryImage) -> Result<CellFunction> {
    let white = img.white_count();
    if white == 0 || white == img.pixels().len() {
        return Err(Error::invalid("signed distance needs at least one white and one black pixel"));
    }
    let to_black = manhattan_distance_to(img, false);
    let to_white = manhattan_distance_to(img, true);
    let pixels: Vec<f64> = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &p)| if p { -(to_black[i] as f64) } else { to_white[i] as f64 })
        .collect();
    CellFunction::from_pixel_values(img.width(), img.height(), &pixels)
}

/// Orders all cubes by `(value, dimension, doubled-grid index)`. The
/// geometry payload of each cube is the center of the pixel that realizes
/// its value (first such pixel in scan order on ties).
pub fn cubical_filtration(f: &CellFunction) -> FilteredComplex {
    let (w, h) = (f.width, f.height);
    let gw = 2 * w + 1;
    let n = gw * (2 * h + 1);

    let order = filtration_order(f, gw, n);
    let mut position = vec![0u32; n];
    for (pos, &idx) in order.iter().enumerate() {
        position[idx as usize] = pos as u32;
    }

    let mut builder = ComplexBuilder::new(ComplexKind::Cubical { width: w, height: h }, 2, n);
    let mut bnd = [0u32; 4];
    for &idx in &order {
        let idx = idx as usize;
        let (gx, gy) = (idx % gw, idx / gw);
        let dim = gx % 2 + gy % 2;
        let mut k = 0;
        for (fx, fy) in faces(gx, gy) {
            bnd[k] = position[fy * gw + fx];
            k += 1;
        }
        bnd[..k].sort_unstable();
        let (px, py) = realizing_pixel(f, gx, gy);
        builder.push(dim, f.values[idx], bnd[..k].iter().copied(), &[px as f64 + 0.5, py as f64 + 0.5]);
    }
    builder.finish()
}

/// Grid indices sorted by `(value, dim, index)`. When every value is one of
/// few distinct pixel values (always true for integer-valued images) this is
/// a counting sort; otherwise a comparison sort.
fn filtration_order(f: &CellFunction, gw: usize, n: usize) -> Vec<u32> {
    let dim_of = |idx: usize| (idx % gw % 2 + idx / gw % 2) as u8;
    let mut levels: Vec<u64> = f.pixel_values().iter().map(|&v| ordered_key(v)).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() <= 1 << 16 {
        let ranks: Option<Vec<u32>> =
            f.values.iter().map(|&v| levels.binary_search(&ordered_key(v)).ok().map(|r| r as u32)).collect();
        if let Some(ranks) = ranks {
            let buckets = levels.len() * 3;
            let mut start = vec![0u32; buckets + 1];
            for (idx, &r) in ranks.iter().enumerate() {
                start[r as usize * 3 + dim_of(idx) as usize + 1] += 1;
            }
            for b in 0..buckets {
                start[b + 1] += start[b];
            }
            let mut order = vec![0u32; n];
            for (idx, &r) in ranks.iter().enumerate() {
                let slot = &mut start[r as usize * 3 + dim_of(idx) as usize];
                order[*slot as usize] = idx as u32;
                *slot += 1;
            }
            return order;
        }
    }
    let mut keyed: Vec<(u64, u8, u32)> =
        (0..n).map(|idx| (ordered_key(f.values[idx]), dim_of(idx), idx as u32)).collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, _, idx)| idx).collect()
}

fn realizing_pixel(f: &CellFunction, gx: usize, gy: usize) -> (usize, usize) {
    let xs = incident_pixels(gx, f.width);
    let ys = incident_pixels(gy, f.height);
    let mut best = (xs.0, ys.0);
    let mut best_v = f64::INFINITY;
    for py in ys.0..=ys.1 {
        for px in xs.0..=xs.1 {
            let v = f.pixel_value(px, py);
            if v < best_v {
                best_v = v;
                best = (px, py);
            }
        }
    }
    best
}

/// Inclusive range of pixel indices along one axis touching doubled
/// coordinate `g`.
fn incident_pixels(g: usize, extent: usize) -> (usize, usize) {
    if g % 2 == 1 {
        let p = g / 2;
        (p, p)
    } else {
        let hi = (g / 2).min(extent - 1);
        let lo = (g / 2).saturating_sub(1);
        (lo, hi)
    }
}

/// Order-preserving map from `f64` to `u64`.
fn ordered_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pattern: &str) -> BinaryImage {
        BinaryImage::new(pattern.len(), 1, pattern.chars().map(|c| c == 'W').collect()).unwrap()
    }

    /// O(P²) nearest opposite-colour search.
    fn brute_signed(img: &BinaryImage) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let me = img.get(x, y);
                let mut best = usize::MAX;
                for yy in 0..h {
                    for xx in 0..w {
                        if img.get(xx, yy) != me {
                            best = best.min(x.abs_diff(xx) + y.abs_diff(yy));
                        }
                    }
                }
                out.push(if me { -(best as f64) } else { best as f64 });
            }
        }
        out
    }

    #[test]
    fn ordered_key_is_monotone() {
        let vals = [-3.5, -1.0, -0.0, 0.0, 1e-300, 2.0, 7.25];
        for w in vals.windows(2) {
            assert!(ordered_key(w[0]) <= ordered_key(w[1]));
        }
    }

    #[test]
    fn signed_row_examples() {
        let f = signed_manhattan(&row("BWWB")).unwrap();
        assert_eq!(f.pixel_values(), vec![1.0, -1.0, -1.0, 1.0]);
        let f = signed_manhattan(&row("BWBWB")).unwrap();
        assert_eq!(f.pixel_values(), vec![1.0, -1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn single_colour_images_rejected() {
        assert!(signed_manhattan(&row("WWW")).is_err());
        assert!(signed_manhattan(&row("BBB")).is_err());
    }

    #[test]
    fn white_disk_bottoms_out_at_minus_radius() {
        let n = 11;
        let c = 5i64;
        let mut px = vec![false; n * n];
        for y in 0..n {
            for x in 0..n {
                if (x as i64 - c).abs() + (y as i64 - c).abs() <= 2 {
                    px[y * n + x] = true;
                }
            }
        }
        let img = BinaryImage::new(n, n, px).unwrap();
        let f = signed_manhattan(&img).unwrap();
        let min = f.pixel_values().into_iter().fold(f64::INFINITY, f64::min);
        assert_eq!(min, -3.0);
        assert_eq!(f.pixel_value(5, 5), -3.0);
    }

    #[test]
    fn matches_brute_force_on_random_images() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let px: Vec<bool> = (0..144).map(|_| rng.random_bool(0.45)).collect();
            let img = BinaryImage::new(12, 12, px).unwrap();
            if img.white_count() == 0 || img.white_count() == 144 {
                continue;
            }
            assert_eq!(signed_manhattan(&img).unwrap().pixel_values(), brute_signed(&img));
        }
    }

    #[test]
    fn faces_take_min_of_incident_pixels() {
        let f = CellFunction::from_pixel_values(2, 1, &[3.0, -2.0]).unwrap();
        // Shared edge between the two pixels.
        assert_eq!(f.value_at(2, 1), -2.0);
        assert_eq!(f.value_at(0, 0), 3.0);
        assert_eq!(f.value_at(4, 2), -2.0);
    }

    #[test]
    fn explicit_cell_values_validated() {
        // 1×1 window: 3×3 doubled grid. Make a vertex exceed the pixel.
        let mut vals = vec![0.0; 9];
        vals[0] = 5.0;
        assert!(CellFunction::new(1, 1, vals).is_err());
        assert!(CellFunction::new(1, 1, vec![0.0; 9]).is_ok());
    }

    #[test]
    fn cubical_complex_is_valid_and_ordered() {
        let f = signed_manhattan(&row("BWBWB")).unwrap();
        let fc = cubical_filtration(&f);
        fc.validate().unwrap();
        assert_eq!(fc.counts_by_dim(), vec![12, 16, 5]);
        assert_eq!(fc.value(0), -1.0);
        // Pixel cubes carry their own centers.
        for c in fc.cells().filter(|c| c.dim == 2) {
            let p: Vec<&[f64]> = c.points().collect();
            assert_eq!(p.len(), 1);
            assert_eq!(p[0][1], 0.5);
        }
    }

    #[test]
    fn single_white_pixel_enters_first() {
        let mut px = vec![false; 9];
        px[4] = true;
        let img = BinaryImage::new(3, 3, px).unwrap();
        let fc = cubical_filtration(&signed_manhattan(&img).unwrap());
        let first_square = fc.cells().find(|c| c.dim == 2).unwrap();
        assert_eq!(first_square.value, -1.0);
        assert_eq!(first_square.points().next().unwrap(), &[1.5, 1.5]);
        assert!(fc.cells().filter(|c| c.value == -1.0).all(|c| c.points().next().unwrap() == [1.5, 1.5]));
    }
}

//! PNG rendering of artifacts: heatmaps of grids, scatters of diagrams,
//! selected pairs and point clouds, and binary images.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use pdlearn::complex::{BinaryImage, PointCloud};
use pdlearn::inverse::PairsReport;
use pdlearn::pimage::PIGrid;
use pdlearn::reduce::PersistenceDiagram;

const CANVAS: u32 = 480;
const MARGIN: u32 = 24;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLUE: Rgb<u8> = Rgb([33, 102, 172]);
const RED: Rgb<u8> = Rgb([178, 24, 43]);
const GRAY: Rgb<u8> = Rgb([160, 160, 160]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);

fn lerp(a: Rgb<u8>, b: Rgb<u8>, t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    Rgb(std::array::from_fn(|k| (f64::from(a.0[k]) + (f64::from(b.0[k]) - f64::from(a.0[k])) * t).round() as u8))
}

/// Blue below zero, white at zero, red above, symmetric in `max|v|`. An
/// all-zero grid renders uniformly white.
pub fn diverging(v: f64, max_abs: f64) -> Rgb<u8> {
    if max_abs == 0.0 || v == 0.0 {
        return WHITE;
    }
    let t = v.abs() / max_abs;
    if v > 0.0 {
        lerp(WHITE, RED, t)
    } else {
        lerp(WHITE, BLUE, t)
    }
}

/// White at zero, red at the maximum.
pub fn sequential(v: f64, max: f64) -> Rgb<u8> {
    if max <= 0.0 {
        WHITE
    } else {
        lerp(WHITE, RED, v / max)
    }
}

/// One block per grid cell, birth to the right and death upward.
pub fn heatmap(values: &[f64], grid: &PIGrid, signed: bool) -> RgbImage {
    let scale = (CANVAS / grid.nb.max(grid.nd) as u32).max(1);
    let (w, h) = (grid.nb as u32 * scale, grid.nd as u32 * scale);
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    RgbImage::from_fn(w, h, |x, y| {
        let i = (x / scale) as usize;
        let j = grid.nd - 1 - (y / scale) as usize;
        let v = values[grid.flat_index(i, j)];
        if signed {
            diverging(v, max)
        } else {
            sequential(v, max)
        }
    })
}

struct Frame {
    lo: (f64, f64),
    hi: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, square: bool) -> Frame {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        if !lo.0.is_finite() {
            return Frame { lo: (0.0, 0.0), hi: (1.0, 1.0) };
        }
        if square {
            let (a, b) = (lo.0.min(lo.1), hi.0.max(hi.1));
            lo = (a, a);
            hi = (b, b);
        }
        let pad = |a: f64, b: f64| if b > a { (b - a) * 0.05 } else { 0.5 };
        let (px, py) = (pad(lo.0, hi.0), pad(lo.1, hi.1));
        Frame { lo: (lo.0 - px, lo.1 - py), hi: (hi.0 + px, hi.1 + py) }
    }

    fn pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let span = f64::from(CANVAS - 2 * MARGIN);
        let u = (x - self.lo.0) / (self.hi.0 - self.lo.0) * span;
        let v = (y - self.lo.1) / (self.hi.1 - self.lo.1) * span;
        (i64::from(MARGIN) + u.round() as i64, i64::from(CANVAS - MARGIN) - v.round() as i64)
    }
}

fn canvas() -> RgbImage {
    let mut img = RgbImage::from_pixel(CANVAS, CANVAS, WHITE);
    for t in MARGIN..=CANVAS - MARGIN {
        img.put_pixel(t, CANVAS - MARGIN, GRAY);
        img.put_pixel(MARGIN, t, GRAY);
    }
    img
}

fn dot(img: &mut RgbImage, (x, y): (i64, i64), color: Rgb<u8>) {
    for dy in -2..=2 {
        for dx in -2..=2 {
            let (px, py) = (x + dx, y + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

fn diagonal(img: &mut RgbImage, frame: &Frame) {
    let steps = CANVAS * 2;
    for s in 0..=steps {
        let t = frame.lo.0 + (frame.hi.0 - frame.lo.0) * f64::from(s) / f64::from(steps);
        let (x, y) = frame.pixel(t, t);
        if x >= 0 && y >= 0 && (x as u32) < CANVAS && (y as u32) < CANVAS {
            img.put_pixel(x as u32, y as u32, GRAY);
        }
    }
}

/// Birth against death, one color per degree; essential classes are skipped.
pub fn diagram_scatter(dg: &PersistenceDiagram) -> RgbImage {
    let finite: Vec<_> = dg.pairs.iter().filter(|p| !p.is_essential()).collect();
    let frame = Frame::fit(finite.iter().map(|p| (p.birth, p.death)), true);
    let mut img = canvas();
    diagonal(&mut img, &frame);
    for p in finite {
        let color = match p.degree {
            0 => BLUE,
            1 => RED,
            _ => BLACK,
        };
        dot(&mut img, frame.pixel(p.birth, p.death), color);
    }
    img
}

/// Selected pairs, red for the positive region and blue for the negative one.
pub fn pairs_scatter(report: &PairsReport) -> RgbImage {
    let all = report.positive.iter().chain(&report.negative);
    let frame = Frame::fit(all.map(|p| (p.birth, p.death)), true);
    let mut img = canvas();
    diagonal(&mut img, &frame);
    for (pairs, color) in [(&report.positive, RED), (&report.negative, BLUE)] {
        for p in pairs {
            dot(&mut img, frame.pixel(p.birth, p.death), color);
        }
    }
    img
}

/// First two coordinates of each point.
pub fn cloud_scatter(pc: &PointCloud) -> RgbImage {
    let xy = |p: &[f64]| (p[0], p.get(1).copied().unwrap_or(0.0));
    let frame = Frame::fit(pc.iter().map(xy), true);
    let mut img = canvas();
    for p in pc.iter() {
        let (x, y) = xy(p);
        dot(&mut img, frame.pixel(x, y), BLACK);
    }
    img
}

pub fn binary_image(img: &BinaryImage) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        if img.get(x as usize, y as usize) {
            WHITE
        } else {
            BLACK
        }
    })
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).with_context(|| crate::Located(path.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pdlearn::reduce::PersistencePair;

    fn grid() -> PIGrid {
        PIGrid { b_min: 0.0, b_max: 1.0, d_min: 0.0, d_max: 1.0, nb: 3, nd: 2 }
    }

    #[test]
    fn zero_grid_is_uniform() {
        let img = heatmap(&[0.0; 6], &grid(), true);
        assert!(img.pixels().all(|p| *p == WHITE));
    }

    #[test]
    fn diverging_signs() {
        assert_eq!(diverging(1.0, 1.0), RED);
        assert_eq!(diverging(-1.0, 1.0), BLUE);
        assert_eq!(diverging(0.0, 1.0), WHITE);
        let half = diverging(0.5, 1.0);
        assert!(half.0[0] > half.0[2]);
    }

    #[test]
    fn heatmap_orientation() {
        // Flat index j * nb + i: cell (2, 1) is the top-right block.
        let mut v = [0.0; 6];
        v[grid().flat_index(2, 1)] = 1.0;
        let img = heatmap(&v, &grid(), true);
        assert_eq!(*img.get_pixel(img.width() - 1, 0), RED);
        assert_eq!(*img.get_pixel(0, img.height() - 1), WHITE);
    }

    #[test]
    fn scatter_marks_pairs() {
        let dg = PersistenceDiagram { pairs: vec![PersistencePair::new(1, 0.2, 0.9)], ..Default::default() };
        let img = diagram_scatter(&dg);
        assert!(img.pixels().any(|p| *p == RED));
    }
}

//! File formats owned by the command line tool: the sample table and input
//! files (image text, PNG, point-cloud CSV).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdlearn::complex::{BinaryImage, PointCloud};
use pdlearn::pipeline::{Descriptors, Input};

use crate::Located;

pub const SAMPLES_HEADER: &str = "name,split,class,index,target,input,white_pixels,white_components,black_components";

/// One row of `samples.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub name: String,
    pub split: String,
    pub class: u32,
    pub index: u32,
    pub target: f64,
    /// Input file relative to the table.
    pub input: String,
    pub descriptors: Option<Descriptors>,
}

pub fn write_samples(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let mut s = String::from(SAMPLES_HEADER);
    s.push('\n');
    for r in rows {
        let d = match r.descriptors {
            Some(d) => format!("{:?},{:?},{:?}", d.white_pixels, d.white_components, d.black_components),
            None => ",,".into(),
        };
        s.push_str(&format!("{},{},{},{},{:?},{},{}\n", r.name, r.split, r.class, r.index, r.target, r.input, d));
    }
    std::fs::write(path, s).with_context(|| Located(path.to_path_buf()))
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>> {
    let text = std::fs::read_to_string(path).with_context(|| Located(path.to_path_buf()))?;
    parse_samples(&text).with_context(|| Located(path.to_path_buf()))
}

fn parse_samples(text: &str) -> Result<Vec<SampleRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SAMPLES_HEADER => {}
        _ => bail!("expected the header `{SAMPLES_HEADER}`"),
    }
    let mut rows = Vec::new();
    for (ln, line) in lines {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            bail!("line {}: expected 9 fields, found {}", ln + 1, f.len());
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse().with_context(|| format!("line {}: bad number {:?}", ln + 1, f[i]))
        };
        let descriptors = if f[6].is_empty() {
            None
        } else {
            Some(Descriptors { white_pixels: num(6)?, white_components: num(7)?, black_components: num(8)? })
        };
        rows.push(SampleRow {
            name: f[0].to_string(),
            split: f[1].to_string(),
            class: f[2].parse().with_context(|| format!("line {}: bad class", ln + 1))?,
            index: f[3].parse().with_context(|| format!("line {}: bad index", ln + 1))?,
            target: num(4)?,
            input: f[5].to_string(),
            descriptors,
        });
    }
    Ok(rows)
}

pub fn write_image_png(img: &BinaryImage, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let buf =
        image::GrayImage::from_fn(w, h, |x, y| image::Luma([if img.get(x as usize, y as usize) { 255 } else { 0 }]));
    buf.save(path).with_context(|| Located(path.to_path_buf()))
}

/// Pixels brighter than mid-gray are white.
pub fn read_image_png(path: &Path) -> Result<BinaryImage> {
    let img = image::open(path).with_context(|| Located(path.to_path_buf()))?.to_luma8();
    let pixels = img.pixels().map(|p| p.0[0] > 127).collect();
    Ok(BinaryImage::new(img.width() as usize, img.height() as usize, pixels)?)
}

/// Reads an input by extension: `.txt` or `.png` images, `.csv` point clouds.
pub fn read_input(path: &Path) -> Result<Input> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let input = match ext {
        "txt" => {
            let text = std::fs::read_to_string(path).with_context(|| Located(path.to_path_buf()))?;
            Input::Image(BinaryImage::from_text(&text).with_context(|| Located(path.to_path_buf()))?)
        }
        "png" => Input::Image(read_image_png(path).with_context(|| Located(path.to_path_buf()))?),
        "csv" => Input::Cloud(PointCloud::read_csv(path).with_context(|| Located(path.to_path_buf()))?),
        _ => {
            return Err(anyhow::anyhow!("unsupported input type {ext:?}; expected .txt, .png or .csv"))
                .with_context(|| Located(path.to_path_buf()))
        }
    };
    Ok(input)
}

pub fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("{} has no usable file name", path.display()))
}

/// Expands directories into their files with one of `exts`, sorted. When a
/// directory holds several files with the same stem, the extension listed
/// first wins, so `inputs/` yields each image once.
pub fn expand(paths: &[PathBuf], exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| Located(p.clone()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.is_file() && f.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e)));
            found.sort_by_key(|f| {
                let rank = exts.iter().position(|e| f.extension().is_some_and(|x| x == *e)).unwrap_or(usize::MAX);
                (f.file_stem().map(|s| s.to_owned()), rank)
            });
            found.dedup_by(|a, b| a.file_stem() == b.file_stem());
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(anyhow::anyhow!("no such file or directory")).with_context(|| Located(p.clone()));
        }
    }
    if out.is_empty() {
        bail!("no input files found");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_roundtrip() {
        let rows = vec![
            SampleRow {
                name: "c0_0000".into(),
                split: "train".into(),
                class: 0,
                index: 0,
                target: 23.0,
                input: "inputs/c0_0000.txt".into(),
                descriptors: Some(Descriptors { white_pixels: 410.0, white_components: 3.0, black_components: 1.0 }),
            },
            SampleRow {
                name: "c1_0001".into(),
                split: "test".into(),
                class: 1,
                index: 1,
                target: 1.0,
                input: "inputs/c1_0001.csv".into(),
                descriptors: None,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("samples.csv");
        write_samples(&p, &rows).unwrap();
        assert_eq!(read_samples(&p).unwrap(), rows);
    }

    #[test]
    fn png_roundtrip() {
        let img = BinaryImage::from_text("0110\n1001\n0000\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_image_png(&img, &p).unwrap();
        assert_eq!(read_image_png(&p).unwrap(), img);
    }

    #[test]
    fn expand_prefers_first_extension() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["b.txt", "b.png", "a.png", "c.md"] {
            std::fs::write(dir.path().join(f), "").unwrap();
        }
        let got = expand(&[dir.path().to_path_buf()], &["txt", "csv", "png"]).unwrap();
        let names: Vec<_> = got.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["a.png", "b.txt"]);
    }
}

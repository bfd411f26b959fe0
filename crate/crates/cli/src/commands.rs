use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pdlearn::inverse::{
    dual_diagram, prediction_decomposition, select_pairs, threshold_region, PairsReport, RegionReport,
    SignificantRegion,
};
use pdlearn::mlmodel::TrainedLinearModel;
use pdlearn::pimage::{read_vector_csv, vectorize, DualDiagram, PIGrid, PIParams, PersistenceImageVector};
use pdlearn::pipeline::{
    dataset, diagram_of, generate_input, main_features, run_experiment, train_model, Descriptors, ExperimentConfig,
    FeatureSet, GeneratedInput, Input, Sample, SampleDecomposition, SampleId, ValueScale,
};
use pdlearn::reduce::PersistenceDiagram;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::config::{self, LoadedConfig};
use crate::io::{self, SampleRow};
use crate::manifest::Manifest;
use crate::{plot, ConfigArgs, Failure, Located, Scale};

pub struct Globals {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// The config named on the command line, with `--seed` applied.
fn resolve(g: &Globals, args: &ConfigArgs) -> Result<Option<LoadedConfig>> {
    let mut loaded = match (&args.config, &args.preset) {
        (Some(path), _) => config::load(path).with_context(|| Located(path.clone()))?,
        (None, Some(name)) => LoadedConfig { experiment: config::preset(name, args.desk, 0)?, out: None },
        (None, None) => return Ok(None),
    };
    if let Some(seed) = g.seed {
        loaded.experiment.seed = seed;
    }
    Ok(Some(loaded))
}

fn require(g: &Globals, args: &ConfigArgs) -> Result<LoadedConfig> {
    resolve(g, args)?.ok_or_else(|| Failure::err("usage", "this command needs --config or --preset"))
}

fn out_dir(g: &Globals, loaded: Option<&LoadedConfig>) -> Result<PathBuf> {
    let dir = g
        .out
        .clone()
        .or_else(|| loaded.and_then(|c| c.out.clone()))
        .ok_or_else(|| Failure::err("usage", "no output directory: pass --out or set `out` in the config"))?;
    std::fs::create_dir_all(&dir).with_context(|| Located(dir.clone()))?;
    Ok(dir)
}

fn manifest(
    command: &str,
    out: &Path,
    args: &ConfigArgs,
    seed: Option<u64>,
    params: impl serde::Serialize,
) -> Result<Manifest> {
    let mut m = Manifest::new(command, out, seed, params)?;
    if let Some(path) = &args.config {
        m.input(path)?;
    }
    Ok(m)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| Located(path.to_path_buf()))
}

fn write_config(path: &Path, c: &ExperimentConfig) -> Result<()> {
    std::fs::write(path, config::to_toml(c)?).with_context(|| Located(path.to_path_buf()))
}

fn split_name(id: SampleId, train: usize) -> &'static str {
    if (id.index as usize) < train {
        "train"
    } else {
        "test"
    }
}

pub fn gen(g: &Globals, args: &ConfigArgs) -> Result<()> {
    let loaded = require(g, args)?;
    let c = &loaded.experiment;
    c.validate()?;
    let out = out_dir(g, Some(&loaded))?;
    let inputs_dir = out.join("inputs");
    std::fs::create_dir_all(&inputs_dir).with_context(|| Located(inputs_dir.clone()))?;
    let mut m = manifest("gen", &out, args, Some(c.seed), c)?;

    let (train, test) = c.sample_ids();
    let ids: Vec<SampleId> = train.into_iter().chain(test).collect();
    let generated: Vec<GeneratedInput> =
        ids.par_iter().map(|&id| generate_input(c, id)).collect::<pdlearn::Result<_>>()?;

    let mut rows = Vec::with_capacity(generated.len());
    for gi in &generated {
        let name = gi.id.name();
        let (rel, descriptors) = match &gi.input {
            Input::Image(img) => {
                let txt = inputs_dir.join(format!("{name}.txt"));
                std::fs::write(&txt, img.to_text()).with_context(|| Located(txt.clone()))?;
                let png = inputs_dir.join(format!("{name}.png"));
                io::write_image_png(img, &png)?;
                m.output(txt);
                m.output(png);
                (format!("inputs/{name}.txt"), Some(Descriptors::of(img)))
            }
            Input::Cloud(pc) => {
                let csv = inputs_dir.join(format!("{name}.csv"));
                pc.write_csv(&csv).with_context(|| Located(csv.clone()))?;
                m.output(csv);
                (format!("inputs/{name}.csv"), None)
            }
        };
        rows.push(SampleRow {
            name,
            split: split_name(gi.id, c.train).into(),
            class: gi.id.class,
            index: gi.id.index,
            target: gi.target,
            input: rel,
            descriptors,
        });
    }
    let samples = out.join("samples.csv");
    io::write_samples(&samples, &rows)?;
    let cfg = out.join("config.toml");
    write_config(&cfg, c)?;
    m.output(samples);
    m.output(cfg);
    m.finish()?;
    println!("generated {} samples in {}", rows.len(), out.display());
    Ok(())
}

fn value_scale(flag: Option<Scale>, loaded: Option<&LoadedConfig>) -> ValueScale {
    match flag {
        Some(Scale::Radius) => ValueScale::Radius,
        Some(Scale::SquaredRadius) => ValueScale::SquaredRadius,
        None => loaded.map_or(ValueScale::Radius, |c| c.experiment.value_scale),
    }
}

pub fn pd(
    g: &Globals,
    args: &ConfigArgs,
    degree: Option<usize>,
    scale: Option<Scale>,
    inputs: &[PathBuf],
) -> Result<()> {
    let loaded = resolve(g, args)?;
    let degree = degree.or(loaded.as_ref().map(|c| c.experiment.degree)).unwrap_or(1);
    let scale = value_scale(scale, loaded.as_ref());
    let out = out_dir(g, loaded.as_ref())?;
    let files = io::expand(inputs, &["txt", "csv", "png"])?;
    let mut m = manifest("pd", &out, args, g.seed, json!({ "degree": degree, "value_scale": scale }))?;

    let diagrams: Vec<(PathBuf, PersistenceDiagram)> = files
        .par_iter()
        .map(|f| -> Result<_> {
            let input = io::read_input(f)?;
            let dg = diagram_of(&input, degree, scale).with_context(|| Located(f.clone()))?;
            Ok((out.join(format!("{}.csv", io::stem(f)?)), dg))
        })
        .collect::<Result<_>>()?;
    for (f, (path, dg)) in files.iter().zip(&diagrams) {
        m.input(f)?;
        dg.write_csv(path).with_context(|| Located(path.clone()))?;
        m.output(path.clone());
    }
    m.finish()?;
    println!("wrote {} diagrams to {}", diagrams.len(), out.display());
    Ok(())
}

/// Either bare parameters or a vector sidecar holding them.
#[derive(Deserialize)]
#[serde(untagged)]
enum ParamsFile {
    Sidecar { params: PIParams },
    Bare(PIParams),
}

fn read_params(path: &Path) -> Result<PIParams> {
    let text = std::fs::read_to_string(path).with_context(|| Located(path.to_path_buf()))?;
    let p = match serde_json::from_str(&text).with_context(|| Located(path.to_path_buf()))? {
        ParamsFile::Sidecar { params } | ParamsFile::Bare(params) => params,
    };
    p.validate().with_context(|| Located(path.to_path_buf()))?;
    Ok(p)
}

fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || Failure::err("usage", format!("--fit-grid expects NBxND, e.g. 50x50, got {s:?}"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let nb = a.trim().parse().map_err(|_| bad())?;
    let nd = b.trim().parse().map_err(|_| bad())?;
    Ok((nb, nd))
}

pub fn pi(
    g: &Globals,
    args: &ConfigArgs,
    params: Option<&Path>,
    degree: Option<usize>,
    fit_grid: Option<&str>,
    diagrams: &[PathBuf],
) -> Result<()> {
    let loaded = resolve(g, args)?;
    let mut pi = match (params, &loaded) {
        (Some(p), _) => read_params(p)?,
        (None, Some(c)) => c.experiment.pi,
        (None, None) => {
            return Err(Failure::err("usage", "persistence-image parameters need --params, --config or --preset"))
        }
    };
    let degree = degree
        .or(loaded.as_ref().map(|c| c.experiment.degree))
        .ok_or_else(|| Failure::err("usage", "pass --degree or a config"))?;
    let out = out_dir(g, loaded.as_ref())?;
    let files = io::expand(diagrams, &["csv"])?;
    let read: Vec<PersistenceDiagram> = files
        .iter()
        .map(|f| PersistenceDiagram::read_csv(f).with_context(|| Located(f.clone())))
        .collect::<Result<_>>()?;
    if let Some(res) = fit_grid {
        let (nb, nd) = parse_resolution(res)?;
        pi.grid = PIGrid::fit_to(&read, degree, nb, nd, 3.0 * pi.sigma)?;
    }
    let mut m = manifest(
        "pi",
        &out,
        args,
        g.seed,
        json!({ "degree": degree, "params": pi, "grid_fitted": fit_grid.is_some() }),
    )?;
    if let Some(p) = params {
        m.input(p)?;
    }
    let vectors: Vec<PersistenceImageVector> = read
        .par_iter()
        .zip(&files)
        .map(|(dg, f)| vectorize(dg, degree, &pi).with_context(|| Located(f.clone())))
        .collect::<Result<_>>()?;
    for (f, v) in files.iter().zip(&vectors) {
        m.input(f)?;
        let path = out.join(format!("{}.csv", io::stem(f)?));
        v.write(&path).with_context(|| Located(path.clone()))?;
        m.output(PersistenceImageVector::sidecar_path(&path));
        m.output(path);
    }
    m.finish()?;
    println!("wrote {} vectors to {}", vectors.len(), out.display());
    Ok(())
}

/// Rows of `split` joined with their vectors, in table order.
fn load_samples(
    rows: &[SampleRow],
    split: &str,
    vectors: &Path,
    pi_dim: usize,
    m: &mut Manifest,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.split == split) {
        let path = vectors.join(format!("{}.csv", r.name));
        let pi = read_vector_csv(&path).with_context(|| Located(path.clone()))?;
        if pi.len() != pi_dim {
            return Err(Failure::err(
                "dimension_mismatch",
                format!("vector has {} values, the persistence-image grid has {pi_dim} cells", pi.len()),
            ))
            .with_context(|| Located(path.clone()));
        }
        m.input(&path)?;
        out.push(Sample {
            id: SampleId { class: r.class, index: r.index },
            target: r.target,
            diagram: PersistenceDiagram::default(),
            pi,
            descriptors: r.descriptors,
        });
    }
    Ok(out)
}

pub fn train(g: &Globals, args: &ConfigArgs, samples: &Path, vectors: &Path) -> Result<()> {
    let loaded = require(g, args)?;
    let c = &loaded.experiment;
    c.validate()?;
    let out = out_dir(g, Some(&loaded))?;
    let mut m = manifest("train", &out, args, Some(c.seed), json!({ "model": c.model, "pi_dim": c.pi.dim() }))?;
    m.input(samples)?;
    let rows = io::read_samples(samples)?;
    let train = load_samples(&rows, "train", vectors, c.pi.dim(), &mut m)?;
    let task = c.task();
    let ds = dataset(&train, main_features(task), c.pi.dim()).with_context(|| Located(samples.to_path_buf()))?;
    let trained = train_model(&ds, task, &c.model, c.seed)?;

    let model = out.join("model.json");
    trained.model.write_json(&model)?;
    m.output(model);
    if let Some(cv) = &trained.cv {
        let path = out.join("cv.json");
        write_json(&path, cv)?;
        m.output(path);
    }
    let data = out.join("dataset.csv");
    ds.write(&data)?;
    m.output(pdlearn::mlmodel::Dataset::sidecar_path(&data));
    m.output(data);
    m.finish()?;
    println!(
        "trained {:?} {:?} model on {} samples: lambda {}, {} nonzero weights",
        task,
        c.model.kind,
        ds.len(),
        trained.model.penalty.lambda,
        trained.model.nonzero_count()
    );
    Ok(())
}

fn write_region(out: &Path, region: &SignificantRegion, dual: &DualDiagram, m: &mut Manifest) -> Result<()> {
    let path = out.join("region.json");
    RegionReport::new(region, dual).write_json(&path)?;
    m.output(path);
    Ok(())
}

fn write_pairs(dir: &Path, name: &str, report: &PairsReport, m: &mut Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| Located(dir.to_path_buf()))?;
    let path = dir.join(format!("{name}.json"));
    write_json(&path, report)?;
    m.output(path.clone());
    Ok(path)
}

pub fn inverse(
    g: &Globals,
    args: &ConfigArgs,
    model_path: &Path,
    frac: Option<f64>,
    decomp: Option<(&Path, &Path)>,
    diagrams: &[PathBuf],
) -> Result<()> {
    let loaded = require(g, args)?;
    let c = &loaded.experiment;
    let frac = frac.unwrap_or(c.threshold_frac);
    let out = out_dir(g, Some(&loaded))?;
    let mut m = manifest(
        "inverse",
        &out,
        args,
        Some(c.seed),
        json!({ "pi": c.pi, "degree": c.degree, "threshold_frac": frac }),
    )?;
    m.input(model_path)?;
    let model = TrainedLinearModel::read_json(model_path).with_context(|| Located(model_path.to_path_buf()))?;

    let dual = dual_diagram(&model, &c.pi).with_context(|| Located(model_path.to_path_buf()))?;
    let dual_path = out.join("dual.json");
    dual.write_json(&dual_path)?;
    m.output(dual_path);

    let files = if diagrams.is_empty() { Vec::new() } else { io::expand(diagrams, &["csv"])? };
    if dual.max_abs() > 0.0 {
        let region = threshold_region(&dual, frac)?;
        write_region(&out, &region, &dual, &mut m)?;
        for f in &files {
            m.input(f)?;
            let dg = PersistenceDiagram::read_csv(f).with_context(|| Located(f.clone()))?;
            let name = io::stem(f)?;
            let sel = select_pairs(&dg, &region, c.degree);
            write_pairs(&out.join("pairs"), &name, &PairsReport::new(&name, &sel), &mut m)?;
        }
    } else {
        eprintln!("warning: learned persistence-image weights are all zero; no significant region");
    }

    if let Some((samples, vectors)) = decomp {
        m.input(samples)?;
        let rows = io::read_samples(samples)?;
        let test = load_samples(&rows, "test", vectors, c.pi.dim(), &mut m)?;
        let decompositions = decompose(&model, &test, c.inverse_samples)?;
        let path = out.join("decompositions.json");
        write_json(&path, &decompositions)?;
        m.output(path);
    }
    m.finish()?;
    println!("wrote the dual diagram and {} pair selections to {}", files.len(), out.display());
    Ok(())
}

fn decompose(model: &TrainedLinearModel, test: &[Sample], limit: usize) -> Result<Vec<SampleDecomposition>> {
    let with_white = model.feature_layout.extra_names.iter().any(|n| n == FeatureSet::WhitePixels.name());
    test.iter()
        .take(limit)
        .map(|s| {
            let extras: Vec<f64> =
                if with_white { vec![s.descriptors.map_or(0.0, |d| d.white_pixels)] } else { Vec::new() };
            Ok(SampleDecomposition {
                sample: s.id.name(),
                target: s.target,
                decomposition: prediction_decomposition(model, &s.pi, &extras)?,
            })
        })
        .collect()
}

fn is_diagram_csv(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| Located(path.to_path_buf()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("degree")))
}

fn render(path: &Path) -> Result<image::RgbImage> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let located = || Located(path.to_path_buf());
    Ok(match ext {
        "json" => {
            let text = std::fs::read_to_string(path).with_context(located)?;
            if let Ok(dd) = serde_json::from_str::<DualDiagram>(&text) {
                if dd.values.len() != dd.params.dim() {
                    return Err(Failure::err("parse", "value count does not match the grid")).with_context(located);
                }
                plot::heatmap(&dd.values, dd.grid(), true)
            } else if let Ok(pairs) = serde_json::from_str::<PairsReport>(&text) {
                plot::pairs_scatter(&pairs)
            } else {
                return Err(Failure::err("unsupported", "not a dual diagram or pair selection")).with_context(located);
            }
        }
        "csv" if is_diagram_csv(path)? => {
            plot::diagram_scatter(&PersistenceDiagram::read_csv(path).with_context(located)?)
        }
        "csv" if PersistenceImageVector::sidecar_path(path).is_file() => {
            let v = PersistenceImageVector::read(path).with_context(located)?;
            plot::heatmap(&v.values, &v.params.grid, false)
        }
        "csv" | "txt" | "png" => match io::read_input(path)? {
            Input::Image(img) => plot::binary_image(&img),
            Input::Cloud(pc) => plot::cloud_scatter(&pc),
        },
        _ => return Err(Failure::err("unsupported", format!("cannot plot {ext:?} files"))).with_context(located),
    })
}

pub fn plot(g: &Globals, artifacts: &[PathBuf]) -> Result<()> {
    let out = out_dir(g, None)?;
    let mut m = Manifest::new("plot", &out, g.seed, json!({}))?;
    let mut stems = std::collections::BTreeSet::new();
    for a in artifacts {
        if !stems.insert(io::stem(a)?) {
            return Err(Failure::err("usage", "two artifacts would both be written to the same plot file"))
                .with_context(|| Located(a.clone()));
        }
    }
    for a in artifacts {
        m.input(a)?;
        let img = render(a)?;
        let path = out.join(format!("{}.png", io::stem(a)?));
        plot::save(&img, &path)?;
        m.output(path);
    }
    m.finish()?;
    println!("wrote {} plots to {}", artifacts.len(), out.display());
    Ok(())
}

pub fn experiment(g: &Globals, args: &ConfigArgs) -> Result<()> {
    let loaded = require(g, args)?;
    let c = &loaded.experiment;
    let out = out_dir(g, Some(&loaded))?;
    let mut m = manifest("experiment", &out, args, Some(c.seed), c)?;
    let outcome = run_experiment(c)?;

    let cfg = out.join("config.toml");
    write_config(&cfg, c)?;
    m.output(cfg);
    let report = out.join("report.json");
    write_json(&report, &outcome.report)?;
    m.output(report);
    let model = out.join("model.json");
    outcome.model.write_json(&model)?;
    m.output(model);
    if let Some(cv) = &outcome.report.cv {
        let path = out.join("cv.json");
        write_json(&path, cv)?;
        m.output(path);
    }
    let dual = out.join("dual.json");
    outcome.dual.write_json(&dual)?;
    m.output(dual);

    let plots = out.join("plots");
    std::fs::create_dir_all(&plots).with_context(|| Located(plots.clone()))?;
    let heat = plots.join("dual.png");
    plot::save(&plot::heatmap(&outcome.dual.values, outcome.dual.grid(), true), &heat)?;
    m.output(heat);
    if let Some(region) = &outcome.region {
        write_region(&out, region, &outcome.dual, &mut m)?;
        for (id, sel) in &outcome.selections {
            let name = id.name();
            let report = PairsReport::new(&name, sel);
            write_pairs(&out.join("pairs"), &name, &report, &mut m)?;
            let png = plots.join(format!("pairs_{name}.png"));
            plot::save(&plot::pairs_scatter(&report), &png)?;
            m.output(png);
        }
    }
    let decompositions = out.join("decompositions.json");
    write_json(&decompositions, &outcome.report.decompositions)?;
    m.output(decompositions);
    m.finish()?;

    let r = &outcome.report;
    println!(
        "{} seed {}: test {} {:.4} (lambda {}, {} nonzero weights, {:.1}s)",
        r.experiment.name(),
        r.seed,
        r.score_name,
        r.test_score,
        r.lambda,
        r.nonzero_weights,
        r.runtimes.total_s
    );
    for v in &r.variants {
        println!("  {}: {:.4}", v.name, v.test_score);
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

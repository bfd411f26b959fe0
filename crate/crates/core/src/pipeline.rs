//! End-to-end experiments: generate inputs, compute diagrams, vectorize,
//! train with cross validation, evaluate, and run the inverse analysis.
//!
//! Every sample is generated from its own RNG stream, so a dataset depends
//! only on `(seed, class, index)` and not on evaluation order or thread count.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{cech_filtration, cubical_filtration, signed_manhattan, BinaryImage, Connectivity, PointCloud};
use crate::error::{Error, Result};
use crate::inverse::{
    dual_diagram, prediction_decomposition, select_pairs, threshold_region, Decomposition, SelectedPairs,
    SignificantRegion,
};
use crate::mlmodel::{
    cross_validate_with, default_lambda_grid, fit, score_accuracy, score_r2, CvResult, Dataset, FeatureLayout,
    FitOptions, LogisticSolver, Penalty, PenaltyKind, Task, TrainedLinearModel,
};
use crate::pimage::{vectorize, DualDiagram, PIGrid, PIParams};
use crate::reduce::{compute_persistence, PersistenceDiagram};
use crate::synth::{
    gen_gpp_disk, gen_image_with, gen_noisy_lattice, gen_ppp_disk, sample_rng, GenImageParams, HistogramScale,
    LatticeKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    EasyImages,
    HardImages,
    PppGpp,
    Lattices,
    LinregImages,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] =
        [Self::EasyImages, Self::HardImages, Self::PppGpp, Self::Lattices, Self::LinregImages];

    pub fn name(self) -> &'static str {
        match self {
            Self::EasyImages => "easy-images",
            Self::HardImages => "hard-images",
            Self::PppGpp => "ppp-gpp",
            Self::Lattices => "lattices",
            Self::LinregImages => "linreg-images",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageClass {
    /// Number of particles.
    pub n: usize,
    /// Walk length.
    pub s: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageShape {
    pub width: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub t: f64,
    #[serde(default)]
    pub scale: HistogramScale,
}

impl Default for ImageShape {
    fn default() -> Self {
        ImageShape { width: 300, sigma1: 4.0, sigma2: 2.0, t: 0.01, scale: HistogramScale::Counts }
    }
}

impl ImageShape {
    fn params(&self, n: usize, s: usize, seed: u64) -> GenImageParams {
        GenImageParams {
            w: self.width,
            n,
            s,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            t: self.t,
            seed,
            scale: self.scale,
        }
    }
}

/// What to generate. Class 0 comes first in every two-class spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSpec {
    Images {
        shape: ImageShape,
        classes: [ImageClass; 2],
    },
    /// Regression target `S`, drawn uniformly from `s_min..=s_max` per image.
    ImageRegression {
        shape: ImageShape,
        n: usize,
        s_min: usize,
        s_max: usize,
    },
    /// Class 0 is Poisson with mean `ppp_mean`, class 1 is Ginibre with `gpp_n` eigenvalues.
    PointProcesses {
        ppp_mean: f64,
        gpp_n: usize,
    },
    /// Class 0 square, class 1 hexagonal.
    Lattices {
        n_points: usize,
        noise: f64,
    },
}

impl DataSpec {
    pub fn task(&self) -> Task {
        match self {
            DataSpec::ImageRegression { .. } => Task::Regression,
            _ => Task::Classification,
        }
    }

    fn is_image(&self) -> bool {
        matches!(self, DataSpec::Images { .. } | DataSpec::ImageRegression { .. })
    }
}

/// Units of point-cloud filtration values fed to the persistence image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueScale {
    #[default]
    Radius,
    SquaredRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: PenaltyKind,
    /// Fixed λ; when absent λ is chosen by cross validation over `grid`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_lambda_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub solver: LogisticSolver,
}

fn default_folds() -> usize {
    5
}

impl ModelSpec {
    pub fn cv(kind: PenaltyKind) -> Self {
        ModelSpec {
            kind,
            lambda: None,
            grid: default_lambda_grid(),
            folds: default_folds(),
            standardize: false,
            solver: LogisticSolver::Newton,
        }
    }

    pub fn options(&self) -> FitOptions {
        FitOptions { standardize: self.standardize, solver: self.solver, ..FitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    /// Training samples per class (total for regression).
    pub train: usize,
    /// Test samples per class (total for regression).
    pub test: usize,
    pub data: DataSpec,
    /// Homology degree fed to the persistence image.
    pub degree: usize,
    #[serde(default)]
    pub value_scale: ValueScale,
    pub pi: PIParams,
    pub model: ModelSpec,
    #[serde(default = "default_frac")]
    pub threshold_frac: f64,
    /// Extra fits at fixed λ reported next to the main model.
    #[serde(default)]
    pub compare_lambdas: Vec<f64>,
    /// Score single-descriptor baselines (image classification only).
    #[serde(default)]
    pub baselines: bool,
    /// Test samples whose selected pairs are kept for plotting.
    #[serde(default = "default_inverse_samples")]
    pub inverse_samples: usize,
}

fn default_frac() -> f64 {
    crate::inverse::DEFAULT_THRESHOLD_FRAC
}

fn default_inverse_samples() -> usize {
    4
}

/// Persistence-image parameters for the image experiments.
pub fn image_pi_params() -> PIParams {
    PIParams {
        sigma: 2.0,
        c: 0.5,
        p: 1.0,
        grid: PIGrid { b_min: -40.5, b_max: 10.5, d_min: -30.5, d_max: 20.5, nb: 51, nd: 51 },
    }
}

/// Persistence-image parameters for the point-process experiment.
pub fn point_process_pi_params() -> PIParams {
    PIParams {
        sigma: 0.003,
        c: 80.0,
        p: 1.0,
        grid: PIGrid { b_min: 0.0, b_max: 0.15, d_min: 0.0, d_max: 0.15, nb: 150, nd: 150 },
    }
}

/// Persistence-image parameters for the lattice experiment.
pub fn lattice_pi_params() -> PIParams {
    PIParams {
        sigma: 0.05,
        c: 1.0,
        p: 1.0,
        grid: PIGrid { b_min: 0.0, b_max: 1.2, d_min: 0.0, d_max: 1.2, nb: 48, nd: 48 },
    }
}

impl ExperimentConfig {
    /// Full-size protocol.
    pub fn full(id: ExperimentId, seed: u64) -> Self {
        let shape = ImageShape::default();
        let base = |data: DataSpec, degree: usize, pi: PIParams, train: usize, test: usize| ExperimentConfig {
            experiment: id,
            seed,
            train,
            test,
            data,
            degree,
            value_scale: ValueScale::Radius,
            pi,
            model: ModelSpec::cv(PenaltyKind::L2),
            threshold_frac: default_frac(),
            compare_lambdas: Vec::new(),
            baselines: false,
            inverse_samples: default_inverse_samples(),
        };
        match id {
            ExperimentId::EasyImages => ExperimentConfig {
                baselines: true,
                ..base(
                    DataSpec::Images { shape, classes: [ImageClass { n: 100, s: 30 }, ImageClass { n: 250, s: 10 }] },
                    0,
                    image_pi_params(),
                    200,
                    100,
                )
            },
            ExperimentId::HardImages => ExperimentConfig {
                baselines: true,
                compare_lambdas: vec![1.0],
                ..base(
                    DataSpec::Images { shape, classes: [ImageClass { n: 160, s: 34 }, ImageClass { n: 270, s: 18 }] },
                    0,
                    image_pi_params(),
                    200,
                    100,
                )
            },
            ExperimentId::PppGpp => ExperimentConfig {
                value_scale: ValueScale::SquaredRadius,
                ..base(DataSpec::PointProcesses { ppp_mean: 30.0, gpp_n: 32 }, 1, point_process_pi_params(), 200, 100)
            },
            ExperimentId::Lattices => {
                base(DataSpec::Lattices { n_points: 20, noise: 0.1 }, 1, lattice_pi_params(), 100, 50)
            }
            ExperimentId::LinregImages => ExperimentConfig {
                model: ModelSpec::cv(PenaltyKind::L1),
                ..base(
                    DataSpec::ImageRegression { shape, n: 150, s_min: 20, s_max: 29 },
                    0,
                    image_pi_params(),
                    500,
                    100,
                )
            },
        }
    }

    /// Same protocol with fewer samples.
    pub fn desk(id: ExperimentId, seed: u64) -> Self {
        let mut c = Self::full(id, seed);
        (c.train, c.test) = match id {
            ExperimentId::LinregImages => (120, 60),
            _ => (50, 25),
        };
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.train == 0 || self.test == 0 {
            return Err(Error::invalid("train and test counts must be at least 1"));
        }
        self.pi.validate()?;
        if !(self.threshold_frac > 0.0 && self.threshold_frac <= 1.0) {
            return Err(Error::invalid(format!("threshold fraction must lie in (0, 1], got {}", self.threshold_frac)));
        }
        if let Some(l) = self.model.lambda {
            Penalty { kind: self.model.kind, lambda: l }.validate()?;
        } else if self.model.grid.is_empty() {
            return Err(Error::invalid("model needs a fixed lambda or a nonempty grid"));
        }
        for &l in &self.compare_lambdas {
            Penalty { kind: self.model.kind, lambda: l }.validate()?;
        }
        match &self.data {
            DataSpec::Images { shape, classes } => {
                for c in classes {
                    shape.params(c.n, c.s, 0).validate()?;
                }
            }
            DataSpec::ImageRegression { shape, n, s_min, s_max } => {
                shape.params(*n, *s_max, 0).validate()?;
                if s_min > s_max {
                    return Err(Error::invalid("s_min exceeds s_max"));
                }
            }
            DataSpec::PointProcesses { ppp_mean, gpp_n } => {
                if ppp_mean.is_nan() || *ppp_mean <= 0.0 || *gpp_n == 0 {
                    return Err(Error::invalid("point-process parameters must be positive"));
                }
            }
            DataSpec::Lattices { n_points, noise } => {
                crate::synth::lattice_points(LatticeKind::Square, *n_points)?;
                if noise.is_nan() || *noise < 0.0 {
                    return Err(Error::invalid("lattice noise must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        self.data.task()
    }

    /// `(class, index)` of every sample, training samples first. Regression uses class 0 only.
    pub fn sample_ids(&self) -> (Vec<SampleId>, Vec<SampleId>) {
        let classes: &[u32] = if self.task() == Task::Regression { &[0] } else { &[0, 1] };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &class in classes {
            for i in 0..self.train + self.test {
                let id = SampleId { class, index: i as u32 };
                if i < self.train {
                    train.push(id)
                } else {
                    test.push(id)
                }
            }
        }
        (train, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleId {
    pub class: u32,
    pub index: u32,
}

impl SampleId {
    pub fn stream(&self) -> u64 {
        (u64::from(self.class) << 32) | u64::from(self.index)
    }

    pub fn name(&self) -> String {
        format!("c{}_{:04}", self.class, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Image(BinaryImage),
    Cloud(PointCloud),
}

/// A generated input and its target.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInput {
    pub id: SampleId,
    pub target: f64,
    pub input: Input,
}

/// Draws one input from its own stream.
pub fn generate_input(config: &ExperimentConfig, id: SampleId) -> Result<GeneratedInput> {
    let mut rng = sample_rng(config.seed, id.stream());
    let class = id.class as usize;
    let (target, input) = match &config.data {
        DataSpec::Images { shape, classes } => {
            let c = classes.get(class).ok_or_else(|| Error::invalid("class index out of range"))?;
            let p = shape.params(c.n, c.s, config.seed);
            (class as f64, Input::Image(gen_image_with(&p, &mut rng)?))
        }
        DataSpec::ImageRegression { shape, n, s_min, s_max } => {
            let s = rng.random_range(*s_min..=*s_max);
            let p = shape.params(*n, s, config.seed);
            (s as f64, Input::Image(gen_image_with(&p, &mut rng)?))
        }
        DataSpec::PointProcesses { ppp_mean, gpp_n } => {
            let pc = if class == 0 { gen_ppp_disk(*ppp_mean, &mut rng)? } else { gen_gpp_disk(*gpp_n, &mut rng)? };
            (class as f64, Input::Cloud(pc))
        }
        DataSpec::Lattices { n_points, noise } => {
            let kind = if class == 0 { LatticeKind::Square } else { LatticeKind::Hexagonal };
            (class as f64, Input::Cloud(gen_noisy_lattice(kind, *n_points, *noise, &mut rng)?))
        }
    };
    Ok(GeneratedInput { id, target, input })
}

/// Reduced persistence diagram up to `degree`: cubical sublevel sets of the
/// signed Manhattan distance for images, Čech for point clouds.
pub fn diagram_of(input: &Input, degree: usize, scale: ValueScale) -> Result<PersistenceDiagram> {
    match input {
        Input::Image(img) => {
            let f = signed_manhattan(img)?;
            let mut dg = compute_persistence(&cubical_filtration(&f), degree, true)?;
            dg.source = format!("cubical {}x{}", img.width(), img.height());
            Ok(dg)
        }
        Input::Cloud(pc) => {
            if pc.is_empty() {
                return Ok(PersistenceDiagram {
                    source: "cech (empty cloud)".into(),
                    reduced: true,
                    ..Default::default()
                });
            }
            let mut dg = compute_persistence(&cech_filtration(pc, degree.max(1))?, degree, true)?;
            if scale == ValueScale::SquaredRadius {
                dg = dg.map_values(|v| v * v);
            }
            dg.source = format!("cech {} points {:?}", pc.len(), scale).to_lowercase();
            Ok(dg)
        }
    }
}

/// Image descriptors used by the baseline classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptors {
    pub white_pixels: f64,
    /// 8-connected components of white pixels.
    pub white_components: f64,
    /// 4-connected components of black pixels.
    pub black_components: f64,
}

impl Descriptors {
    pub fn of(img: &BinaryImage) -> Self {
        Descriptors {
            white_pixels: img.white_count() as f64,
            white_components: img.component_count(true, Connectivity::Eight) as f64,
            black_components: img.component_count(false, Connectivity::Four) as f64,
        }
    }
}

/// Everything the learning stages need from one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub target: f64,
    pub diagram: PersistenceDiagram,
    pub pi: Vec<f64>,
    pub descriptors: Option<Descriptors>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub generate_s: f64,
    pub diagrams_s: f64,
    pub vectorize_s: f64,
    pub train_s: f64,
    pub evaluate_s: f64,
    pub inverse_s: f64,
    pub total_s: f64,
}

/// Generates, computes diagrams for, and vectorizes the given samples.
pub fn build_samples(config: &ExperimentConfig, ids: &[SampleId], rt: &mut Runtimes) -> Result<Vec<Sample>> {
    let t = Instant::now();
    let inputs: Vec<GeneratedInput> = ids.par_iter().map(|&id| generate_input(config, id)).collect::<Result<_>>()?;
    rt.generate_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let diagrams: Vec<PersistenceDiagram> =
        inputs.par_iter().map(|g| diagram_of(&g.input, config.degree, config.value_scale)).collect::<Result<_>>()?;
    rt.diagrams_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let samples = inputs
        .par_iter()
        .zip(diagrams)
        .map(|(g, diagram)| {
            let pi = vectorize(&diagram, config.degree, &config.pi)?.values;
            let descriptors = match &g.input {
                Input::Image(img) if config.data.is_image() => Some(Descriptors::of(img)),
                _ => None,
            };
            Ok(Sample { id: g.id, target: g.target, diagram, pi, descriptors })
        })
        .collect::<Result<_>>()?;
    rt.vectorize_s += t.elapsed().as_secs_f64();
    Ok(samples)
}

/// Which columns make up a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Pi,
    WhitePixels,
    WhiteComponents,
    BlackComponents,
    PiAndWhitePixels,
}

impl FeatureSet {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Pi => "pi",
            FeatureSet::WhitePixels => "white_pixels",
            FeatureSet::WhiteComponents => "white_components",
            FeatureSet::BlackComponents => "black_components",
            FeatureSet::PiAndWhitePixels => "pi+white_pixels",
        }
    }
}

/// Features of the main model: the persistence image, plus the white-pixel
/// count for regression.
pub fn main_features(task: Task) -> FeatureSet {
    if task == Task::Regression {
        FeatureSet::PiAndWhitePixels
    } else {
        FeatureSet::Pi
    }
}

pub fn dataset(samples: &[Sample], features: FeatureSet, pi_dim: usize) -> Result<Dataset> {
    let need_desc = features != FeatureSet::Pi;
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let d = match (need_desc, s.descriptors) {
            (true, None) => return Err(Error::invalid(format!("{} is only defined for images", features.name()))),
            (_, d) => d,
        };
        let row = match features {
            FeatureSet::Pi => s.pi.clone(),
            FeatureSet::WhitePixels => vec![d.unwrap().white_pixels],
            FeatureSet::WhiteComponents => vec![d.unwrap().white_components],
            FeatureSet::BlackComponents => vec![d.unwrap().black_components],
            FeatureSet::PiAndWhitePixels => {
                let mut r = s.pi.clone();
                r.push(d.unwrap().white_pixels);
                r
            }
        };
        rows.push(row);
    }
    let layout = match features {
        FeatureSet::Pi => FeatureLayout::pi_only(pi_dim),
        FeatureSet::PiAndWhitePixels => FeatureLayout { pi_dim, extra_names: vec!["white_pixels".into()] },
        other => FeatureLayout { pi_dim: 0, extra_names: vec![other.name().into()] },
    };
    Dataset::from_rows(&rows, samples.iter().map(|s| s.target).collect(), layout)
}

/// A trained model with its λ selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: TrainedLinearModel,
    pub cv: Option<CvResult>,
}

/// Fits `spec` on `train`, choosing λ by cross validation unless fixed.
pub fn train_model(train: &Dataset, task: Task, spec: &ModelSpec, seed: u64) -> Result<Trained> {
    let opts = spec.options();
    let (lambda, cv) = match spec.lambda {
        Some(l) => (l, None),
        None => {
            let cv = cross_validate_with(train, task, spec.kind, &spec.grid, spec.folds, seed, &opts)?;
            (cv.best_lambda, Some(cv))
        }
    };
    let model = fit(train, task, &Penalty { kind: spec.kind, lambda }, &opts)?;
    Ok(Trained { model, cv })
}

pub fn score(model: &TrainedLinearModel, ds: &Dataset) -> Result<f64> {
    match model.task {
        Task::Regression => score_r2(model, ds),
        Task::Classification => score_accuracy(model, ds),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub name: String,
    pub features: FeatureSet,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub test_score: f64,
    pub nonzero_weights: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSummary {
    pub threshold: f64,
    pub threshold_frac: f64,
    pub positive_cells: usize,
    pub negative_cells: usize,
    /// Mean birth coordinate of the positive part of the dual diagram, weighted by value.
    pub positive_mean_birth: Option<f64>,
    pub negative_mean_birth: Option<f64>,
    pub selected_positive_pairs: usize,
    pub selected_negative_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDecomposition {
    pub sample: String,
    pub target: f64,
    #[serde(flatten)]
    pub decomposition: Decomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub task: Task,
    pub n_train: usize,
    pub n_test: usize,
    pub score_name: String,
    pub test_score: f64,
    pub train_score: f64,
    pub lambda: f64,
    pub cv: Option<CvResult>,
    pub pi_dim: usize,
    pub nonzero_weights: usize,
    /// Main model refit at the configured fixed λ values.
    pub fixed_lambda: Vec<VariantScore>,
    /// Single-descriptor baselines and feature ablations.
    pub variants: Vec<VariantScore>,
    pub inverse: Option<InverseSummary>,
    pub decompositions: Vec<SampleDecomposition>,
    pub warnings: Vec<String>,
    pub runtimes: Runtimes,
    pub tool_version: String,
}

/// Result of a full run: the report plus the artifacts it summarizes.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub report: ExperimentReport,
    pub model: TrainedLinearModel,
    pub dual: DualDiagram,
    pub region: Option<SignificantRegion>,
    /// Selected pairs for the first `inverse_samples` test samples.
    pub selections: Vec<(SampleId, SelectedPairs)>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Value-weighted mean birth coordinate of the cells with the given sign.
pub fn mean_birth(dd: &DualDiagram, positive: bool) -> Option<f64> {
    let g = dd.grid();
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &v) in dd.values.iter().enumerate() {
        if (positive && v > 0.0) || (!positive && v < 0.0) {
            let (i, _) = g.unflatten(k);
            num += v.abs() * g.birth_center(i);
            den += v.abs();
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut rt = Runtimes::default();
    let (train_ids, test_ids) = config.sample_ids();
    let train = build_samples(config, &train_ids, &mut rt)?;
    let test = build_samples(config, &test_ids, &mut rt)?;
    let mut out = analyze(config, train, test, rt)?;
    out.report.runtimes.total_s = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Learning and inverse stages on already-built samples.
pub fn analyze(
    config: &ExperimentConfig,
    train: Vec<Sample>,
    test: Vec<Sample>,
    mut rt: Runtimes,
) -> Result<ExperimentOutcome> {
    let task = config.task();
    let pi_dim = config.pi.dim();
    let mut warnings = Vec::new();

    let main_features = main_features(task);
    let t = Instant::now();
    let train_ds = dataset(&train, main_features, pi_dim)?;
    let test_ds = dataset(&test, main_features, pi_dim)?;
    let trained = train_model(&train_ds, task, &config.model, config.seed)?;
    rt.train_s += t.elapsed().as_secs_f64();
    let model = trained.model;
    if let Some(w) = &model.diagnostics.warning {
        warnings.push(format!("main model: {w}"));
    }

    let t = Instant::now();
    let test_score = score(&model, &test_ds)?;
    let train_score = score(&model, &train_ds)?;
    rt.evaluate_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut fixed_lambda = Vec::new();
    for &lambda in &config.compare_lambdas {
        let spec = ModelSpec { lambda: Some(lambda), ..config.model.clone() };
        let m = train_model(&train_ds, task, &spec, config.seed)?.model;
        fixed_lambda.push(VariantScore {
            name: format!("{} {:?} lambda={lambda}", main_features.name(), spec.kind).to_lowercase(),
            features: main_features,
            penalty: spec.kind,
            lambda,
            test_score: score(&m, &test_ds)?,
            nonzero_weights: m.nonzero_count(),
        });
    }

    let mut variants = Vec::new();
    let mut variant = |features: FeatureSet, kind: PenaltyKind| -> Result<()> {
        let tr = dataset(&train, features, pi_dim)?;
        let te = dataset(&test, features, pi_dim)?;
        let spec = ModelSpec { kind, ..config.model.clone() };
        let fitted = train_model(&tr, task, &spec, config.seed)?;
        variants.push(VariantScore {
            name: format!("{} {:?}", features.name(), kind).to_lowercase(),
            features,
            penalty: kind,
            lambda: fitted.model.penalty.lambda,
            test_score: score(&fitted.model, &te)?,
            nonzero_weights: fitted.model.nonzero_count(),
        });
        Ok(())
    };
    if task == Task::Regression {
        variant(FeatureSet::Pi, PenaltyKind::L2)?;
        variant(FeatureSet::Pi, PenaltyKind::L1)?;
        variant(FeatureSet::WhitePixels, PenaltyKind::L2)?;
        variant(FeatureSet::PiAndWhitePixels, PenaltyKind::L2)?;
        variant(FeatureSet::PiAndWhitePixels, PenaltyKind::L1)?;
    } else if config.baselines && config.data.is_image() {
        variant(FeatureSet::BlackComponents, config.model.kind)?;
        variant(FeatureSet::WhiteComponents, config.model.kind)?;
        variant(FeatureSet::WhitePixels, config.model.kind)?;
    }
    rt.train_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let dual = dual_diagram(&model, &config.pi)?;
    let (region, inverse, selections) = if dual.max_abs() > 0.0 {
        let region = threshold_region(&dual, config.threshold_frac)?;
        let selections: Vec<(SampleId, SelectedPairs)> =
            test.iter().map(|s| (s.id, select_pairs(&s.diagram, &region, config.degree))).collect();
        let summary = InverseSummary {
            threshold: region.threshold,
            threshold_frac: region.frac,
            positive_cells: region.positive_cells.len(),
            negative_cells: region.negative_cells.len(),
            positive_mean_birth: mean_birth(&dual, true),
            negative_mean_birth: mean_birth(&dual, false),
            selected_positive_pairs: selections.iter().map(|(_, s)| s.positive.len()).sum(),
            selected_negative_pairs: selections.iter().map(|(_, s)| s.negative.len()).sum(),
        };
        let kept = selections.into_iter().take(config.inverse_samples).collect();
        (Some(region), Some(summary), kept)
    } else {
        warnings.push("learned PI weights are all zero; inverse analysis skipped".into());
        (None, None, Vec::new())
    };
    let mut decompositions = Vec::new();
    for s in test.iter().take(config.inverse_samples) {
        let extras: Vec<f64> = match main_features {
            FeatureSet::PiAndWhitePixels => vec![s.descriptors.map_or(0.0, |d| d.white_pixels)],
            _ => Vec::new(),
        };
        decompositions.push(SampleDecomposition {
            sample: s.id.name(),
            target: s.target,
            decomposition: prediction_decomposition(&model, &s.pi, &extras)?,
        });
    }
    rt.inverse_s += t.elapsed().as_secs_f64();

    let report = ExperimentReport {
        experiment: config.experiment,
        seed: config.seed,
        task,
        n_train: train.len(),
        n_test: test.len(),
        score_name: if task == Task::Regression { "r2".into() } else { "accuracy".into() },
        test_score,
        train_score,
        lambda: model.penalty.lambda,
        cv: trained.cv,
        pi_dim,
        nonzero_weights: model.nonzero_count(),
        fixed_lambda,
        variants,
        inverse,
        decompositions,
        warnings,
        runtimes: rt,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(ExperimentOutcome { config: config.clone(), report, model, dual, region, selections, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pimage::reconstruct;

    fn tiny(id: ExperimentId) -> ExperimentConfig {
        let mut c = ExperimentConfig::full(id, 3);
        c.train = 12;
        c.test = 6;
        c.model.folds = 3;
        c
    }

    #[test]
    fn experiment_ids_parse_their_names() {
        for id in ExperimentId::ALL {
            assert_eq!(ExperimentId::parse(id.name()).unwrap(), id);
            assert_eq!(serde_json::to_value(id).unwrap(), id.name());
        }
        assert!(ExperimentId::parse("mnist").is_err());
    }

    #[test]
    fn presets_validate_and_roundtrip() {
        for id in ExperimentId::ALL {
            for c in [ExperimentConfig::full(id, 1), ExperimentConfig::desk(id, 1)] {
                c.validate().unwrap();
                let text = serde_json::to_string(&c).unwrap();
                assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
            }
        }
        let c = ExperimentConfig::full(ExperimentId::HardImages, 1);
        assert_eq!((c.train, c.test), (200, 100));
        assert_eq!(c.pi.dim(), 51 * 51);
        assert_eq!(ExperimentConfig::full(ExperimentId::PppGpp, 1).pi.dim(), 150 * 150);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let good = tiny(ExperimentId::Lattices);
        let mut c = good.clone();
        c.train = 0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.threshold_frac = 0.0;
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.model.lambda = Some(-1.0);
        assert!(c.validate().is_err());
        let mut c = good;
        c.data = DataSpec::Lattices { n_points: 20, noise: -0.1 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn sample_ids_split_per_class() {
        let c = tiny(ExperimentId::Lattices);
        let (train, test) = c.sample_ids();
        assert_eq!(train.len(), 24);
        assert_eq!(test.len(), 12);
        let mut streams: Vec<u64> = train.iter().chain(&test).map(SampleId::stream).collect();
        streams.sort_unstable();
        streams.dedup();
        assert_eq!(streams.len(), 36);
        let r = tiny(ExperimentId::LinregImages);
        let (train, test) = r.sample_ids();
        assert_eq!((train.len(), test.len()), (12, 6));
        assert!(train.iter().all(|id| id.class == 0));
        assert_eq!(SampleId { class: 1, index: 7 }.name(), "c1_0007");
    }

    #[test]
    fn generation_depends_only_on_seed_and_id() {
        let c = tiny(ExperimentId::EasyImages);
        let id = SampleId { class: 1, index: 4 };
        let a = generate_input(&c, id).unwrap();
        assert_eq!(a, generate_input(&c, id).unwrap());
        assert_ne!(a.input, generate_input(&c, SampleId { class: 1, index: 5 }).unwrap().input);
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(a.input, generate_input(&other, id).unwrap().input);
        assert_eq!(a.target, 1.0);
    }

    #[test]
    fn regression_targets_stay_in_range() {
        let c = tiny(ExperimentId::LinregImages);
        for index in 0..10 {
            let g = generate_input(&c, SampleId { class: 0, index }).unwrap();
            assert!((20.0..=29.0).contains(&g.target) && g.target.fract() == 0.0);
        }
    }

    #[test]
    fn squared_scale_squares_cloud_values() {
        let pc = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let input = Input::Cloud(pc);
        let r = diagram_of(&input, 1, ValueScale::Radius).unwrap();
        let s = diagram_of(&input, 1, ValueScale::SquaredRadius).unwrap();
        assert_eq!(r.birth_death(1), vec![(0.5, 0.5f64.sqrt())]);
        let (b, d) = s.birth_death(1)[0];
        assert!((b - 0.25).abs() < 1e-15 && (d - 0.5).abs() < 1e-15);
        let empty = diagram_of(&Input::Cloud(PointCloud::with_dim(2, vec![]).unwrap()), 1, ValueScale::Radius).unwrap();
        assert!(empty.pairs.is_empty());
    }

    #[test]
    fn descriptor_datasets_need_images() {
        let c = tiny(ExperimentId::Lattices);
        let mut rt = Runtimes::default();
        let samples = build_samples(&c, &c.sample_ids().1[..4], &mut rt).unwrap();
        assert!(samples.iter().all(|s| s.descriptors.is_none()));
        assert!(dataset(&samples, FeatureSet::WhitePixels, c.pi.dim()).is_err());
        let ds = dataset(&samples, FeatureSet::Pi, c.pi.dim()).unwrap();
        assert_eq!(ds.n_features(), c.pi.dim());
    }

    #[test]
    fn image_datasets_carry_descriptor_columns() {
        let c = tiny(ExperimentId::EasyImages);
        let mut rt = Runtimes::default();
        let samples = build_samples(&c, &c.sample_ids().0[..3], &mut rt).unwrap();
        let d = samples[0].descriptors.unwrap();
        let both = dataset(&samples, FeatureSet::PiAndWhitePixels, c.pi.dim()).unwrap();
        assert_eq!(both.n_features(), c.pi.dim() + 1);
        assert_eq!(both.inputs[(0, c.pi.dim())], d.white_pixels);
        assert_eq!(both.layout.extra_names, vec!["white_pixels".to_string()]);
        let black = dataset(&samples, FeatureSet::BlackComponents, c.pi.dim()).unwrap();
        assert_eq!(black.inputs[(0, 0)], d.black_components);
    }

    #[test]
    fn mean_birth_weights_by_magnitude() {
        let params = PIParams {
            sigma: 1.0,
            c: 1.0,
            p: 1.0,
            grid: PIGrid { b_min: 0.0, b_max: 4.0, d_min: 0.0, d_max: 1.0, nb: 4, nd: 1 },
        };
        let dd = reconstruct(&[1.0, 0.0, -2.0, 3.0], &params).unwrap();
        assert_eq!(mean_birth(&dd, true), Some((0.5 + 3.0 * 3.5) / 4.0));
        assert_eq!(mean_birth(&dd, false), Some(2.5));
        let zero = reconstruct(&[0.0; 4], &params).unwrap();
        assert_eq!(mean_birth(&zero, true), None);
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let c = tiny(ExperimentId::Lattices);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.report.test_score, b.report.test_score);
        assert_eq!(a.report.cv, b.report.cv);
        assert_eq!(a.report.n_train, 24);
        assert!(a.report.test_score >= 0.0 && a.report.test_score <= 1.0);
        for d in &a.report.decompositions {
            let parts = d.decomposition.pi_term + d.decomposition.intercept;
            assert!((parts - d.decomposition.total).abs() < 1e-10);
        }
    }

    #[test]
    fn image_experiment_reports_baselines() {
        let c = tiny(ExperimentId::HardImages);
        let out = run_experiment(&c).unwrap();
        let names: Vec<&str> = out.report.variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["black_components l2", "white_components l2", "white_pixels l2"]);
        assert_eq!(out.report.fixed_lambda.len(), 1);
        assert_eq!(out.report.fixed_lambda[0].lambda, 1.0);
    }

    #[test]
    fn regression_experiment_reports_ablation() {
        let c = tiny(ExperimentId::LinregImages);
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.report.score_name, "r2");
        assert_eq!(out.report.variants.len(), 5);
        assert_eq!(out.model.feature_layout.extra_names, vec!["white_pixels".to_string()]);
        for d in &out.report.decompositions {
            let extra: f64 = d.decomposition.extra_terms.iter().map(|(_, v)| v).sum();
            let parts = d.decomposition.pi_term + extra + d.decomposition.intercept;
            assert!((parts - d.decomposition.total).abs() < 1e-9 * d.decomposition.total.abs().max(1.0));
        }
    }
}

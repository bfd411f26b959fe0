//! Deterministic inputs shared by the benchmarks.

use pdlearn::complex::{BinaryImage, PointCloud};
use pdlearn::mlmodel::Dataset;
use pdlearn::pipeline::{build_samples, dataset, main_features, ExperimentConfig, ExperimentId, Runtimes};
use pdlearn::reduce::PersistenceDiagram;
use pdlearn::synth::{gen_image, gen_ppp_disk, sample_rng, GenImageParams};

/// A 300 x 300 image from the first easy class.
pub fn image(seed: u64) -> BinaryImage {
    gen_image(&GenImageParams::standard(100, 30, seed)).expect("valid parameters")
}

/// Poisson points on the unit disk.
pub fn cloud(mean_points: f64, seed: u64) -> PointCloud {
    gen_ppp_disk(mean_points, &mut sample_rng(seed, 0)).expect("valid mean")
}

/// Training set and diagrams of a reduced-size experiment.
pub fn experiment_data(
    id: ExperimentId,
    train: usize,
    seed: u64,
) -> (ExperimentConfig, Dataset, Vec<PersistenceDiagram>) {
    let mut config = ExperimentConfig::full(id, seed);
    config.train = train;
    config.test = 1;
    let (ids, _) = config.sample_ids();
    let samples = build_samples(&config, &ids, &mut Runtimes::default()).expect("generation succeeds");
    let ds = dataset(&samples, main_features(config.task()), config.pi.dim()).expect("consistent features");
    let diagrams = samples.into_iter().map(|s| s.diagram).collect();
    (config, ds, diagrams)
}

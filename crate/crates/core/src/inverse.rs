//! Inverse analysis: learned weights back onto the persistence-image grid,
//! thresholded into signed regions, and from there to the birth-death pairs
//! (and their positions in the input) that fall inside.
//!
//! A positive weight pushes the decision toward class 1 (or a larger response),
//! a negative one toward class 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlmodel::TrainedLinearModel;
use crate::pimage::{reconstruct, DualDiagram, PIGrid, PIParams, PersistenceImageVector};
use crate::reduce::{PersistenceDiagram, PersistencePair};

pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.5;

fn check_layout(model: &TrainedLinearModel, params: &PIParams) -> Result<()> {
    if model.feature_layout.pi_dim != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), found: model.feature_layout.pi_dim });
    }
    Ok(())
}

fn provenance(model: &TrainedLinearModel) -> String {
    format!("{:?} {:?} lambda={}", model.task, model.penalty.kind, model.penalty.lambda).to_lowercase()
}

/// The PI slice of `w` laid onto the grid.
pub fn dual_diagram(model: &TrainedLinearModel, params: &PIParams) -> Result<DualDiagram> {
    check_layout(model, params)?;
    let mut dd = reconstruct(model.pi_weights(), params)?;
    dd.provenance = provenance(model);
    Ok(dd)
}

/// Coefficients of the scalar features, by name.
pub fn extra_coefficients(model: &TrainedLinearModel) -> Vec<(String, f64)> {
    model.feature_layout.extra_names.iter().cloned().zip(model.extra_weights().iter().copied()).collect()
}

/// Cells whose magnitude reaches `frac · max|value|`, split by sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificantRegion {
    pub positive_cells: Vec<usize>,
    pub negative_cells: Vec<usize>,
    pub threshold: f64,
    pub frac: f64,
    pub grid: PIGrid,
}

pub fn threshold_region(dd: &DualDiagram, frac: f64) -> Result<SignificantRegion> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid(format!("threshold fraction must lie in (0, 1], got {frac}")));
    }
    let max = dd.max_abs();
    if max == 0.0 {
        return Err(Error::invalid("dual diagram is identically zero"));
    }
    let threshold = frac * max;
    let mut positive_cells = Vec::new();
    let mut negative_cells = Vec::new();
    for (k, &v) in dd.values.iter().enumerate() {
        if v != 0.0 && v.abs() >= threshold {
            if v > 0.0 {
                positive_cells.push(k);
            } else {
                negative_cells.push(k);
            }
        }
    }
    Ok(SignificantRegion { positive_cells, negative_cells, threshold, frac, grid: dd.params.grid })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectedPairs {
    pub positive: Vec<PersistencePair>,
    pub negative: Vec<PersistencePair>,
}

/// Pairs of `degree` whose `(birth, death)` lies in a region cell. Cells are
/// half-open, `[b_lo, b_hi) × [d_lo, d_hi)`; pairs outside every cell are dropped.
pub fn select_pairs(dg: &PersistenceDiagram, region: &SignificantRegion, degree: usize) -> SelectedPairs {
    let g = &region.grid;
    let mut sign = vec![0i8; g.len()];
    for &k in &region.positive_cells {
        sign[k] = 1;
    }
    for &k in &region.negative_cells {
        sign[k] = -1;
    }
    let mut out = SelectedPairs::default();
    for p in dg.degree(degree).filter(|p| !p.is_essential()) {
        let Some((i, j)) = g.locate(p.birth, p.death) else { continue };
        match sign[g.flat_index(i, j)] {
            1 => out.positive.push(p.clone()),
            -1 => out.negative.push(p.clone()),
            _ => {}
        }
    }
    out
}

/// Elementwise `w_i · x_i` over the PI slice.
pub fn weighted_diagram(model: &TrainedLinearModel, x: &PersistenceImageVector) -> Result<DualDiagram> {
    check_layout(model, &x.params)?;
    let values: Vec<f64> = model.pi_weights().iter().zip(&x.values).map(|(w, x)| w * x).collect();
    let mut dd = reconstruct(&values, &x.params)?;
    dd.provenance = format!("weighted {}", provenance(model));
    Ok(dd)
}

/// `total = pi_term + Σ extra_terms + intercept`, the model's decision value `w·x + b`.
/// For regression this is the prediction itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub pi_term: f64,
    pub extra_terms: Vec<(String, f64)>,
    pub intercept: f64,
    pub total: f64,
}

pub fn prediction_decomposition(model: &TrainedLinearModel, x_pi: &[f64], extras: &[f64]) -> Result<Decomposition> {
    if x_pi.len() != model.feature_layout.pi_dim {
        return Err(Error::DimensionMismatch { expected: model.feature_layout.pi_dim, found: x_pi.len() });
    }
    if extras.len() != model.feature_layout.extra_names.len() {
        return Err(Error::DimensionMismatch { expected: model.feature_layout.extra_names.len(), found: extras.len() });
    }
    let pi_term: f64 = model.pi_weights().iter().zip(x_pi).map(|(w, x)| w * x).sum();
    let extra_terms: Vec<(String, f64)> = model
        .feature_layout
        .extra_names
        .iter()
        .zip(model.extra_weights().iter().zip(extras))
        .map(|(name, (v, x))| (name.clone(), v * x))
        .collect();
    let total = pi_term + extra_terms.iter().map(|(_, t)| t).sum::<f64>() + model.b;
    Ok(Decomposition { pi_term, extra_terms, intercept: model.b, total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub index: usize,
    pub birth_index: usize,
    pub death_index: usize,
    /// `[b_lo, b_hi, d_lo, d_hi]`.
    pub bounds: [f64; 4],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub threshold: f64,
    pub frac: f64,
    pub positive: Vec<CellReport>,
    pub negative: Vec<CellReport>,
}

impl RegionReport {
    pub fn new(region: &SignificantRegion, dd: &DualDiagram) -> Self {
        let g = &region.grid;
        let cells = |ks: &[usize]| {
            ks.iter()
                .map(|&k| {
                    let (i, j) = g.unflatten(k);
                    CellReport {
                        index: k,
                        birth_index: i,
                        death_index: j,
                        bounds: g.cell_bounds(i, j),
                        value: dd.values[k],
                    }
                })
                .collect()
        };
        RegionReport {
            threshold: region.threshold,
            frac: region.frac,
            positive: cells(&region.positive_cells),
            negative: cells(&region.negative_cells),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub degree: usize,
    pub birth: f64,
    pub death: f64,
    pub birth_position: Option<Vec<f64>>,
    pub death_position: Option<Vec<f64>>,
    /// Vertex coordinates of the cell that kills the class.
    pub death_vertices: Vec<Vec<f64>>,
}

impl From<&PersistencePair> for PairRecord {
    fn from(p: &PersistencePair) -> Self {
        PairRecord {
            degree: p.degree,
            birth: p.birth,
            death: p.death,
            birth_position: p.birth_point(),
            death_position: p.death_point(),
            death_vertices: p.death_pos.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairsReport {
    pub source: String,
    pub positive: Vec<PairRecord>,
    pub negative: Vec<PairRecord>,
}

impl PairsReport {
    pub fn new(source: &str, sel: &SelectedPairs) -> Self {
        PairsReport {
            source: source.to_string(),
            positive: sel.positive.iter().map(PairRecord::from).collect(),
            negative: sel.negative.iter().map(PairRecord::from).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlmodel::{fit_logistic, Dataset, Diagnostics, FeatureLayout, Penalty, Task};
    use crate::pimage::vectorize;

    fn grid() -> PIGrid {
        PIGrid { b_min: 0.0, b_max: 2.0, d_min: 0.0, d_max: 2.0, nb: 2, nd: 2 }
    }

    fn params() -> PIParams {
        PIParams { sigma: 0.5, c: 1.0, p: 1.0, grid: grid() }
    }

    fn model(w: Vec<f64>, extras: Vec<String>, b: f64) -> TrainedLinearModel {
        TrainedLinearModel {
            task: Task::Regression,
            penalty: Penalty::l2(0.1),
            b,
            feature_layout: FeatureLayout { pi_dim: 4, extra_names: extras },
            w,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn dual_diagram_is_the_weight_slice() {
        let m = model(vec![0.0, 0.0, 3.0, 0.0, 7.0], vec!["white".into()], 1.0);
        let dd = dual_diagram(&m, &params()).unwrap();
        assert_eq!(dd.values, m.pi_weights());
        assert_eq!(dd.nonzero_count(), 1);
        assert_eq!(dd.get(0, 1), 3.0);
        assert_eq!(extra_coefficients(&m), vec![("white".to_string(), 7.0)]);
        let zero = dual_diagram(&model(vec![0.0; 4], vec![], 0.0), &params()).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let wrong = PIParams { grid: PIGrid { nb: 3, ..grid() }, ..params() };
        assert!(dual_diagram(&m, &wrong).is_err());
    }

    #[test]
    fn thresholds() {
        let dd = reconstruct(&[-2.0, 1.0, 0.0, 0.5], &params()).unwrap();
        let r = threshold_region(&dd, 0.5).unwrap();
        assert_eq!((r.positive_cells.clone(), r.negative_cells.clone()), (vec![1], vec![0]));
        let top = threshold_region(&dd, 1.0).unwrap();
        assert_eq!((top.positive_cells, top.negative_cells), (vec![], vec![0]));
        let all = threshold_region(&dd, 1e-12).unwrap();
        assert_eq!(all.positive_cells, vec![1, 3]);
        assert!(threshold_region(&dd, 0.0).is_err());
        assert!(threshold_region(&reconstruct(&[0.0; 4], &params()).unwrap(), 0.5).is_err());
    }

    #[test]
    fn pairs_land_in_half_open_cells() {
        let dd = reconstruct(&[1.0, -1.0, 0.0, 0.0], &params()).unwrap();
        let region = threshold_region(&dd, 0.5).unwrap();
        let dg = PersistenceDiagram {
            pairs: vec![
                PersistencePair::new(1, 0.5, 0.5), // center of cell (0, 0)
                PersistencePair::new(1, 1.0, 0.2), // boundary: belongs to cell (1, 0)
                PersistencePair::new(1, 0.5, 1.5), // cell (0, 1), not selected
                PersistencePair::new(1, 5.0, 6.0), // off the grid
                PersistencePair::new(0, 0.5, 0.5), // other degree
            ],
            ..Default::default()
        };
        let sel = select_pairs(&dg, &region, 1);
        assert_eq!(sel.positive.len(), 1);
        assert_eq!(sel.negative.len(), 1);
        assert_eq!(sel.negative[0].birth, 1.0);
        let empty = SignificantRegion { positive_cells: vec![], negative_cells: vec![], ..region };
        assert_eq!(select_pairs(&dg, &empty, 1), SelectedPairs::default());
    }

    #[test]
    fn weighted_diagram_examples() {
        let m = model(vec![0.0, 2.0, 0.0, 0.0], vec![], 0.0);
        let x = PersistenceImageVector { values: vec![5.0, 3.0, 1.0, 1.0], params: params() };
        let wd = weighted_diagram(&m, &x).unwrap();
        assert_eq!(wd.values, vec![0.0, 6.0, 0.0, 0.0]);
        let zero = PersistenceImageVector { values: vec![0.0; 4], params: params() };
        assert_eq!(weighted_diagram(&m, &zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn decomposition_sums_to_prediction() {
        let m = model(vec![0.5, -1.0, 2.0, 0.25, 0.01], vec!["white".into()], -3.0);
        let zero = prediction_decomposition(&m, &[0.0; 4], &[0.0]).unwrap();
        assert_eq!((zero.pi_term, zero.intercept, zero.total), (0.0, -3.0, -3.0));
        let x = [1.0, 2.0, 3.0, 4.0];
        let d = prediction_decomposition(&m, &x, &[1000.0]).unwrap();
        let full: Vec<f64> = x.iter().copied().chain([1000.0]).collect();
        assert!((d.total - m.predict(&full).unwrap()).abs() < 1e-12);
        let wd = weighted_diagram(&m, &PersistenceImageVector { values: x.to_vec(), params: params() }).unwrap();
        assert!((wd.sum() + d.extra_terms[0].1 + d.intercept - d.total).abs() < 1e-12);
        let pi_only = model(vec![1.0; 4], vec![], 0.0);
        assert!(prediction_decomposition(&pi_only, &x, &[]).unwrap().extra_terms.is_empty());
        assert!(prediction_decomposition(&pi_only, &x, &[1.0]).is_err());
    }

    #[test]
    fn sparse_model_gives_sparse_diagram() {
        let p = PIParams {
            sigma: 0.3,
            c: 1.0,
            p: 1.0,
            grid: PIGrid { b_min: 0.0, b_max: 3.0, d_min: 0.0, d_max: 3.0, nb: 6, nd: 6 },
        };
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            let shift = if class == 1 { 1.0 } else { 0.0 } + 0.02 * (i as f64);
            let dg = PersistenceDiagram {
                pairs: vec![PersistencePair::new(1, 0.4 + shift * 0.5, 1.5 + shift)],
                ..Default::default()
            };
            rows.push(vectorize(&dg, 1, &p).unwrap().values);
            y.push(class as f64);
        }
        let ds = Dataset::from_rows(&rows, y, FeatureLayout::pi_only(p.dim())).unwrap();
        let m = fit_logistic(&ds, &Penalty::l1(0.01)).unwrap();
        let dd = dual_diagram(&m, &p).unwrap();
        assert_eq!(dd.nonzero_count(), m.nonzero_count());
        assert!(m.nonzero_count() < p.dim());
    }
}

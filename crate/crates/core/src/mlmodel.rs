//! Regularized linear and logistic regression.
//!
//! Objectives are means over the `M` samples plus an unscaled penalty:
//!
//! * regression: `(1/2M) Σ (w·x_i + b − y_i)² + λ R(w)`
//! * classification: `(1/M) Σ [log(1 + e^{z_i}) − y_i z_i] + λ R(w)`, `z_i = w·x_i + b`
//!
//! with `R(w) = ½‖w‖₂²` (ℓ2) or `‖w‖₁` (ℓ1). The intercept is never penalized.

use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::sample_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
}

impl Penalty {
    pub fn l1(lambda: f64) -> Self {
        Penalty { kind: PenaltyKind::L1, lambda }
    }

    pub fn l2(lambda: f64) -> Self {
        Penalty { kind: PenaltyKind::L2, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        match self.kind {
            PenaltyKind::L1 => self.lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
            PenaltyKind::L2 => 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>(),
        }
    }
}

/// Column layout of a dataset: `pi_dim` persistence-image entries followed by
/// named scalar features.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub pi_dim: usize,
    #[serde(default)]
    pub extra_names: Vec<String>,
}

impl FeatureLayout {
    pub fn pi_only(pi_dim: usize) -> Self {
        FeatureLayout { pi_dim, extra_names: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.pi_dim + self.extra_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples as rows of `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub layout: FeatureLayout,
}

#[derive(Serialize, Deserialize)]
struct DatasetSidecar {
    layout: FeatureLayout,
    samples: usize,
    features: usize,
    columns: String,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: Vec<f64>, layout: FeatureLayout) -> Result<Self> {
        let ds = Dataset { inputs, targets, layout };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>, layout: FeatureLayout) -> Result<Self> {
        let n = layout.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::invalid(format!("row {i} has {} features, layout expects {n}", r.len())));
        }
        let inputs = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Self::new(inputs, targets, layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::invalid(format!("a dataset needs at least 2 samples, got {}", self.len())));
        }
        if self.targets.len() != self.inputs.nrows() {
            return Err(Error::DimensionMismatch { expected: self.inputs.nrows(), found: self.targets.len() });
        }
        if self.inputs.ncols() != self.layout.len() {
            return Err(Error::DimensionMismatch { expected: self.layout.len(), found: self.inputs.ncols() });
        }
        if self.inputs.iter().chain(&self.targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// Errors unless every target is 0 or 1 and both occur.
    pub fn check_classification(&self) -> Result<()> {
        if let Some(v) = self.targets.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!("classification targets must be 0 or 1, found {v}")));
        }
        let ones = self.targets.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == self.len() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }

    /// Rows at `idx`, in that order. May hold fewer than two samples.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Keeps the given columns, in order, under a new layout.
    pub fn select_columns(&self, cols: &[usize], layout: FeatureLayout) -> Result<Dataset> {
        if cols.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), found: cols.len() });
        }
        Dataset::new(self.inputs.select_columns(cols), self.targets.clone(), layout)
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// CSV with the target in the first column, then the features; JSON layout sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for i in 0..self.len() {
            s.push_str(&format!("{:?}", self.targets[i]));
            for v in self.inputs.row(i).iter() {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        std::fs::write(path, s)?;
        let sidecar = DatasetSidecar {
            layout: self.layout.clone(),
            samples: self.len(),
            features: self.n_features(),
            columns: "target, then features in layout order".into(),
        };
        std::fs::write(Self::sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let side_path = Self::sidecar_path(path);
        let sidecar: DatasetSidecar = serde_json::from_str(&std::fs::read_to_string(&side_path)?)
            .map_err(|e| Error::parse(&side_path, e.to_string()))?;
        let text = std::fs::read_to_string(path)?;
        let mut targets = Vec::new();
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, format!("line {}: {e}", ln + 1)))?;
            if vals.len() != sidecar.layout.len() + 1 {
                return Err(Error::parse(
                    path,
                    format!("line {}: {} columns, expected {}", ln + 1, vals.len(), sidecar.layout.len() + 1),
                ));
            }
            targets.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        Dataset::from_rows(&rows, targets, sidecar.layout).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Which optimizer to use for logistic fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogisticSolver {
    /// Damped Newton (ℓ2) or proximal Newton with coordinate descent (ℓ1).
    #[default]
    Newton,
    /// Gradient descent with backtracking (ℓ2) or accelerated proximal gradient (ℓ1).
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub solver: LogisticSolver,
    /// Standardize features before fitting; coefficients are mapped back to raw units.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: 1e-6, max_iter: 100_000, solver: LogisticSolver::Newton, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Objective value at the returned parameters (in the units the solver worked in).
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub solver: String,
    #[serde(default)]
    pub standardized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLinearModel {
    pub task: Task,
    pub penalty: Penalty,
    pub b: f64,
    pub feature_layout: FeatureLayout,
    pub w: Vec<f64>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl TrainedLinearModel {
    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch { expected: self.w.len(), found: x.len() });
        }
        Ok(())
    }

    /// `w·x + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(dot(&self.w, x) + self.b)
    }

    /// Regression value, or the probability of class 1.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let z = self.decision(x)?;
        Ok(match self.task {
            Task::Regression => z,
            Task::Classification => sigmoid(z),
        })
    }

    /// Class label at probability threshold 0.5.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict(x)? >= 0.5))
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.n_features() != self.w.len() {
            return Err(Error::DimensionMismatch { expected: self.w.len(), found: ds.n_features() });
        }
        let z = &ds.inputs * DVector::from_column_slice(&self.w);
        Ok(z.iter()
            .map(|&z| match self.task {
                Task::Regression => z + self.b,
                Task::Classification => sigmoid(z + self.b),
            })
            .collect())
    }

    pub fn pi_weights(&self) -> &[f64] {
        &self.w[..self.feature_layout.pi_dim]
    }

    /// Coefficients of the named scalar features (`v` in the mixed model).
    pub fn extra_weights(&self) -> &[f64] {
        &self.w[self.feature_layout.pi_dim..]
    }

    pub fn nonzero_count(&self) -> usize {
        self.w.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let m: TrainedLinearModel =
            serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::parse(path, e.to_string()))?;
        if m.w.len() != m.feature_layout.len() {
            return Err(Error::parse(
                path,
                format!("w has {} entries, layout has {}", m.w.len(), m.feature_layout.len()),
            ));
        }
        Ok(m)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn scores(x: &DMatrix<f64>, w: &[f64], b: f64) -> DVector<f64> {
    let mut z = x * DVector::from_column_slice(w);
    z.add_scalar_mut(b);
    z
}

/// Mean squared loss `E(w, b) = (1/2M) Σ (w·x_i + b − y_i)²`.
pub fn squared_loss(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64) -> f64 {
    let z = scores(x, w, b);
    z.iter().zip(y).map(|(z, y)| (z - y) * (z - y)).sum::<f64>() / (2.0 * y.len() as f64)
}

/// Gradient of [`squared_loss`] with respect to `(w, b)`.
pub fn squared_loss_gradient(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let m = y.len() as f64;
    let mut r = scores(x, w, b);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    let gw = x.tr_mul(&r) / m;
    (gw.iter().copied().collect(), r.sum() / m)
}

/// Mean cross entropy `L(w, b)` with `P(y = 1) = g(w·x + b)`.
pub fn cross_entropy_loss(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64) -> f64 {
    let z = scores(x, w, b);
    z.iter().zip(y).map(|(&z, &y)| log1pexp(z) - y * z).sum::<f64>() / y.len() as f64
}

/// Gradient of [`cross_entropy_loss`] with respect to `(w, b)`.
pub fn cross_entropy_gradient(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let m = y.len() as f64;
    let mut r = scores(x, w, b);
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri = sigmoid(*ri) - yi;
    }
    let gw = x.tr_mul(&r) / m;
    (gw.iter().copied().collect(), r.sum() / m)
}

/// Loss plus penalty for `task`.
pub fn objective(task: Task, pen: &Penalty, ds: &Dataset, w: &[f64], b: f64) -> f64 {
    let loss = match task {
        Task::Regression => squared_loss(&ds.inputs, &ds.targets, w, b),
        Task::Classification => cross_entropy_loss(&ds.inputs, &ds.targets, w, b),
    };
    loss + pen.value(w)
}

/// Largest KKT violation of an ℓ1 solution: `|∂_j| − λ` on zero coordinates,
/// `|∂_j + λ sign(w_j)|` on the rest, and `|∂_b|`.
pub fn l1_kkt_violation(task: Task, lambda: f64, ds: &Dataset, w: &[f64], b: f64) -> f64 {
    let (g, gb) = match task {
        Task::Regression => squared_loss_gradient(&ds.inputs, &ds.targets, w, b),
        Task::Classification => cross_entropy_gradient(&ds.inputs, &ds.targets, w, b),
    };
    g.iter()
        .zip(w)
        .map(|(&g, &w)| if w == 0.0 { (g.abs() - lambda).max(0.0) } else { (g + lambda * w.signum()).abs() })
        .fold(gb.abs(), f64::max)
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &DMatrix<f64>) -> Self {
        let m = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mu = col.sum() / m;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            mean.push(mu);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    fn unmap(&self, w: &mut [f64], b: &mut f64) {
        for (j, wj) in w.iter_mut().enumerate() {
            *wj /= self.scale[j];
            *b -= *wj * self.mean[j];
        }
    }
}

struct Fit {
    w: Vec<f64>,
    b: f64,
    diag: Diagnostics,
}

fn with_standardization(
    ds: &Dataset,
    opts: &FitOptions,
    fit: impl FnOnce(&DMatrix<f64>) -> Result<Fit>,
) -> Result<(Vec<f64>, f64, Diagnostics)> {
    if !opts.standardize {
        let f = fit(&ds.inputs)?;
        return Ok((f.w, f.b, f.diag));
    }
    let st = Standardizer::fit(&ds.inputs);
    let mut f = fit(&st.apply(&ds.inputs))?;
    st.unmap(&mut f.w, &mut f.b);
    f.diag.standardized = true;
    Ok((f.w, f.b, f.diag))
}

fn check_finite_inputs(ds: &Dataset) -> Result<()> {
    ds.validate()
}

pub fn fit_linear(ds: &Dataset, pen: &Penalty) -> Result<TrainedLinearModel> {
    fit_linear_with(ds, pen, &FitOptions::default())
}

/// Ridge in closed form, lasso by the exact homotopy path.
pub fn fit_linear_with(ds: &Dataset, pen: &Penalty, opts: &FitOptions) -> Result<TrainedLinearModel> {
    pen.validate()?;
    check_finite_inputs(ds)?;
    let y = &ds.targets;
    let (w, b, diagnostics) = with_standardization(ds, opts, |x| match pen.kind {
        PenaltyKind::L2 => {
            let (w, b) = ridge_closed_form(x, y, pen.lambda)?;
            let final_loss = squared_loss(x, y, &w, b) + pen.value(&w);
            Ok(Fit {
                w,
                b,
                diag: Diagnostics {
                    final_loss,
                    iterations: 1,
                    converged: true,
                    solver: "ridge-closed-form".into(),
                    ..Default::default()
                },
            })
        }
        PenaltyKind::L1 => {
            let (w, b, iterations, converged) =
                LassoPrep::new(x, y).path(&[pen.lambda], opts.tol, opts.max_iter).remove(0);
            let final_loss = squared_loss(x, y, &w, b) + pen.value(&w);
            let warning = (!converged).then(|| "lasso path hit the step cap".to_string());
            Ok(Fit {
                w,
                b,
                diag: Diagnostics {
                    final_loss,
                    iterations,
                    converged,
                    solver: "lasso-homotopy".into(),
                    warning,
                    ..Default::default()
                },
            })
        }
    })?;
    Ok(TrainedLinearModel {
        task: Task::Regression,
        penalty: *pen,
        b,
        feature_layout: ds.layout.clone(),
        w,
        diagnostics,
    })
}

fn center(x: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let m = x.nrows() as f64;
    let xm: Vec<f64> = x.column_iter().map(|c| c.sum() / m).collect();
    let ym = y.iter().sum::<f64>() / m;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-xm[j]);
    }
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
    (xc, yc, xm, ym)
}

/// Solves a symmetric positive semidefinite system, falling back to the
/// minimum-norm least-squares solution when it is singular.
fn solve_psd(a: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch.solve(rhs));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    a.svd(true, true).solve(rhs, 1e-12 * scale).map_err(|e| Error::invalid(format!("linear solve failed: {e}")))
}

/// Centered data and Gram matrix for ridge, reusable across λ. Uses the
/// `M × M` dual system when there are more features than samples.
struct RidgePrep {
    xc: DMatrix<f64>,
    yc: DVector<f64>,
    xm: Vec<f64>,
    ym: f64,
    gram: DMatrix<f64>,
    dual: bool,
}

impl RidgePrep {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let m = x.nrows() as f64;
        let (xc, yc, xm, ym) = center(x, y);
        let dual = xc.ncols() > xc.nrows();
        let gram = if dual { &xc * xc.transpose() / m } else { xc.tr_mul(&xc) / m };
        RidgePrep { xc, yc, xm, ym, gram, dual }
    }

    /// Minimizer of `(1/2M)‖Xw + b − y‖² + (λ/2)‖w‖²`.
    fn solve(&self, lambda: f64) -> Result<(Vec<f64>, f64)> {
        let m = self.xc.nrows() as f64;
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let w = if self.dual {
            self.xc.tr_mul(&solve_psd(a, &(&self.yc / m))?)
        } else {
            solve_psd(a, &(self.xc.tr_mul(&self.yc) / m))?
        };
        let w: Vec<f64> = w.iter().copied().collect();
        let b = self.ym - dot(&self.xm, &w);
        Ok((w, b))
    }
}

fn ridge_closed_form(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    RidgePrep::new(x, y).solve(lambda)
}

/// Ridge solved by conjugate gradients on the normal equations, for cross-checking the closed form.
pub fn fit_ridge_iterative(ds: &Dataset, lambda: f64, tol: f64, max_iter: usize) -> Result<TrainedLinearModel> {
    let pen = Penalty::l2(lambda);
    pen.validate()?;
    check_finite_inputs(ds)?;
    let m = ds.len() as f64;
    let (xc, yc, xm, ym) = center(&ds.inputs, &ds.targets);
    let apply = |v: &DVector<f64>| -> DVector<f64> { xc.tr_mul(&(&xc * v)) / m + v * lambda };
    let rhs = xc.tr_mul(&yc) / m;
    let mut w = DVector::zeros(ds.n_features());
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let stop = tol * tol * rhs.dot(&rhs).max(f64::MIN_POSITIVE);
    let mut it = 0;
    while it < max_iter && rr > stop {
        let ap = apply(&p);
        let alpha = rr / p.dot(&ap);
        w.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
        it += 1;
    }
    let w: Vec<f64> = w.iter().copied().collect();
    let b = ym - dot(&xm, &w);
    let final_loss = squared_loss(&ds.inputs, &ds.targets, &w, b) + pen.value(&w);
    Ok(TrainedLinearModel {
        task: Task::Regression,
        penalty: pen,
        b,
        feature_layout: ds.layout.clone(),
        w,
        diagnostics: Diagnostics {
            final_loss,
            iterations: it,
            converged: rr <= stop,
            solver: "ridge-cg".into(),
            ..Default::default()
        },
    })
}

/// Cyclic coordinate descent on centered data, iterating on the active set
/// between full KKT sweeps. Returns `(w, b, sweeps, converged)`.
/// Centered data for lasso, reusable across λ along a path.
struct LassoPrep {
    xc: DMatrix<f64>,
    yc: DVector<f64>,
    xm: Vec<f64>,
    ym: f64,
    z: Vec<f64>,
}

/// One lasso solution: weights, intercept, work spent, KKT satisfied.
type LassoFit = (Vec<f64>, f64, usize, bool);

impl LassoPrep {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let m = x.nrows() as f64;
        let (xc, yc, xm, ym) = center(x, y);
        let z = xc.column_iter().map(|c| c.norm_squared() / m).collect();
        LassoPrep { xc, yc, xm, ym, z }
    }

    fn m(&self) -> f64 {
        self.xc.nrows() as f64
    }

    fn residual(&self, w: &[f64]) -> DVector<f64> {
        &self.yc - &self.xc * DVector::from_column_slice(w)
    }

    /// Correlations `Xᵀ r / m`, the negative loss gradient.
    fn correlations(&self, r: &DVector<f64>) -> DVector<f64> {
        self.xc.tr_mul(r) / self.m()
    }

    fn finish(&self, w: Vec<f64>, work: usize, converged: bool) -> LassoFit {
        let b = self.ym - dot(&self.xm, &w);
        (w, b, work, converged)
    }

    fn violation(&self, w: &[f64], lambda: f64) -> f64 {
        let c = self.correlations(&self.residual(w));
        kkt(&(-c), w, lambda)
    }

    /// Cyclic coordinate descent from `w`, alternating full sweeps with
    /// sweeps over the active set.
    fn coordinate_descent(&self, lambda: f64, mut w: Vec<f64>, tol: f64, max_sweeps: usize) -> LassoFit {
        let n = self.xc.ncols();
        let m = self.m();
        let mut r = self.residual(&w);
        let mut sweeps = 0;
        let update = |j: usize, w: &mut [f64], r: &mut DVector<f64>| -> f64 {
            if self.z[j] == 0.0 {
                return 0.0;
            }
            let col = self.xc.column(j);
            let rho = col.dot(r) / m + self.z[j] * w[j];
            let new = soft_threshold(rho, lambda) / self.z[j];
            let delta = new - w[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                w[j] = new;
            }
            delta.abs() * self.z[j].sqrt()
        };
        while sweeps < max_sweeps {
            for j in 0..n {
                update(j, &mut w, &mut r);
            }
            sweeps += 1;
            if kkt(&(-self.correlations(&r)), &w, lambda) <= tol {
                return self.finish(w, sweeps, true);
            }
            let active: Vec<usize> = (0..n).filter(|&j| w[j] != 0.0).collect();
            while sweeps < max_sweeps {
                let biggest = active.iter().map(|&j| update(j, &mut w, &mut r)).fold(0.0, f64::max);
                sweeps += 1;
                if biggest <= tol * 1e-2 {
                    break;
                }
            }
        }
        self.finish(w, sweeps, false)
    }

    /// Solutions at every λ in `lambdas` (any order) by following the exact
    /// piecewise-linear homotopy path from the all-zero solution. The path
    /// keeps a Cholesky factor of the active Gram matrix and updates it as
    /// variables enter and leave. When the active columns become linearly
    /// dependent the remaining λ values are finished by warm-started
    /// coordinate descent. Every returned solution is checked against the KKT
    /// conditions at `tol`.
    fn path(&self, lambdas: &[f64], tol: f64, max_iter: usize) -> Vec<LassoFit> {
        let n = self.xc.ncols();
        let m = self.m();
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let mut out: Vec<Option<LassoFit>> = vec![None; lambdas.len()];

        let mut w = vec![0.0; n];
        let mut r = self.yc.clone();
        let mut c = self.correlations(&r);
        let mut lam = c.amax();
        let mut active: Vec<usize> = Vec::new();
        let mut in_active = vec![false; n];
        let mut sign: Vec<f64> = Vec::new();
        let mut chol: Option<Cholesky<f64, Dyn>> = None;
        let mut pending: Vec<usize> = (0..n).filter(|&j| lam > 0.0 && c[j].abs() >= lam * (1.0 - 1e-12)).collect();
        let mut just_left: Option<usize> = None;
        let mut steps = 0;
        let mut broken = false;

        for &slot in &order {
            let target = lambdas[slot];
            while !broken && target < lam && steps < max_iter {
                for j in pending.drain(..) {
                    match self.extend(chol.take(), &active, j) {
                        Some(f) => {
                            chol = Some(f);
                            active.push(j);
                            in_active[j] = true;
                            sign.push(c[j].signum());
                        }
                        None => broken = true,
                    }
                    if broken {
                        break;
                    }
                }
                let Some(factor) = chol.as_ref().filter(|_| !broken) else {
                    broken = true;
                    break;
                };
                let xa = self.xc.select_columns(&active);
                let s = DVector::from_column_slice(&sign);
                // Newton correction keeps the active correlations pinned at ±λ.
                let ca = DVector::from_iterator(active.len(), active.iter().map(|&j| c[j]));
                let fix = factor.solve(&(ca - &s * lam));
                let d = factor.solve(&s);
                let u_fix = &xa * &fix;
                let u = &xa * &d;
                let c_fixed = &c - self.xc.tr_mul(&u_fix) / m;
                let a = self.xc.tr_mul(&u) / m;

                let mut gamma = lam - target;
                let mut event: Option<(usize, bool)> = None;
                for j in (0..n).filter(|&j| !in_active[j] && Some(j) != just_left) {
                    for (num, den) in [(lam - c_fixed[j], 1.0 - a[j]), (lam + c_fixed[j], 1.0 + a[j])] {
                        if den > 1e-12 {
                            let g = (num / den).max(0.0);
                            if g < gamma {
                                gamma = g;
                                event = Some((j, true));
                            }
                        }
                    }
                }
                for (k, &j) in active.iter().enumerate() {
                    let wk = w[j] + fix[k];
                    if d[k] * sign[k] >= 0.0 {
                        continue;
                    }
                    let g = (-wk / d[k]).max(0.0);
                    if g < gamma {
                        gamma = g;
                        event = Some((k, false));
                    }
                }

                for (k, &j) in active.iter().enumerate() {
                    w[j] += fix[k] + gamma * d[k];
                }
                r -= u_fix + u * gamma;
                steps += 1;
                if steps % 64 == 0 {
                    r = self.residual(&w);
                }
                c = self.correlations(&r);
                just_left = None;
                match event {
                    None => lam = target,
                    Some((j, true)) => {
                        lam -= gamma;
                        pending.push(j);
                    }
                    Some((k, false)) => {
                        lam -= gamma;
                        let j = active.remove(k);
                        sign.remove(k);
                        in_active[j] = false;
                        w[j] = 0.0;
                        chol = chol.map(|f| f.remove_column(k)).filter(|_| !active.is_empty());
                        just_left = Some(j);
                        r = self.residual(&w);
                        c = self.correlations(&r);
                    }
                }
            }
            let fit = if broken || target < lam {
                let budget = max_iter.saturating_sub(steps).max(1);
                let fit = self.coordinate_descent(target, w.clone(), tol, budget);
                steps += fit.2;
                (fit.0, fit.1, steps, fit.3)
            } else {
                self.polish(target, w.clone(), steps, tol, max_iter)
            };
            if broken {
                w.clone_from(&fit.0);
            }
            out[slot] = Some(fit);
        }
        out.into_iter().map(|f| f.expect("every λ is visited")).collect()
    }

    /// Adds column `j` to the factor of the active Gram matrix. Returns
    /// `None` when the column is numerically dependent on the active ones.
    fn extend(&self, chol: Option<Cholesky<f64, Dyn>>, active: &[usize], j: usize) -> Option<Cholesky<f64, Dyn>> {
        let m = self.m();
        let col = self.xc.column(j);
        let gjj = col.norm_squared() / m;
        if gjj <= 0.0 {
            return None;
        }
        let mut g = DVector::zeros(active.len() + 1);
        for (k, &i) in active.iter().enumerate() {
            g[k] = self.xc.column(i).dot(&col) / m;
        }
        g[active.len()] = gjj;
        let f = match chol {
            None => Cholesky::new(DMatrix::from_element(1, 1, gjj))?,
            Some(f) => f.insert_column(active.len(), g),
        };
        let l = f.l_dirty()[(active.len(), active.len())];
        (l.is_finite() && l * l > 1e-10 * gjj).then_some(f)
    }

    fn polish(&self, lambda: f64, w: Vec<f64>, steps: usize, tol: f64, max_iter: usize) -> LassoFit {
        if self.violation(&w, lambda) <= tol {
            return self.finish(w, steps, true);
        }
        let fit = self.coordinate_descent(lambda, w, tol, max_iter.saturating_sub(steps).max(10));
        (fit.0, fit.1, steps + fit.2, fit.3)
    }
}

fn kkt(g: &DVector<f64>, w: &[f64], lambda: f64) -> f64 {
    g.iter()
        .zip(w)
        .map(|(&g, &w)| if w == 0.0 { (g.abs() - lambda).max(0.0) } else { (g + lambda * w.signum()).abs() })
        .fold(0.0, f64::max)
}

pub fn fit_logistic(ds: &Dataset, pen: &Penalty) -> Result<TrainedLinearModel> {
    fit_logistic_with(ds, pen, &FitOptions::default())
}

pub fn fit_logistic_with(ds: &Dataset, pen: &Penalty, opts: &FitOptions) -> Result<TrainedLinearModel> {
    pen.validate()?;
    check_finite_inputs(ds)?;
    ds.check_classification()?;
    let y = &ds.targets;
    let (w, b, mut diagnostics) = with_standardization(ds, opts, |x| {
        let (w, b, iterations, converged, solver) = match (pen.kind, opts.solver) {
            (PenaltyKind::L2, LogisticSolver::Newton) => {
                let (w, b, it, ok) = logistic_l2_newton(&SpanReduction::new(x), y, pen.lambda, opts.tol, opts.max_iter);
                (w, b, it, ok, "newton")
            }
            (PenaltyKind::L2, LogisticSolver::FirstOrder) => {
                let (w, b, it, ok) = logistic_l2_gradient(x, y, pen.lambda, opts.tol, opts.max_iter);
                (w, b, it, ok, "gradient-descent")
            }
            (PenaltyKind::L1, LogisticSolver::Newton) => {
                let (w, b, it, ok) = logistic_l1_prox_newton(x, y, pen.lambda, opts.tol, opts.max_iter);
                (w, b, it, ok, "proximal-newton-cd")
            }
            (PenaltyKind::L1, LogisticSolver::FirstOrder) => {
                let (w, b, it, ok) = logistic_l1_fista(x, y, pen.lambda, opts.tol, opts.max_iter);
                (w, b, it, ok, "fista")
            }
        };
        let final_loss = cross_entropy_loss(x, y, &w, b) + pen.value(&w);
        let warning = (!converged).then(|| "iteration cap reached before the tolerance".to_string());
        Ok(Fit {
            w,
            b,
            diag: Diagnostics {
                final_loss,
                iterations,
                converged,
                solver: solver.into(),
                warning,
                ..Default::default()
            },
        })
    })?;
    if pen.lambda == 0.0 {
        let model_acc = {
            let z = scores(&ds.inputs, &w, b);
            z.iter().zip(y).filter(|(z, y)| (**z >= 0.0) == (**y == 1.0)).count()
        };
        if model_acc == ds.len() {
            let note = "lambda = 0 on separable data: weights diverge and only the iteration cap stops the solver";
            diagnostics.warning = Some(match diagnostics.warning.take() {
                Some(w) => format!("{note}; {w}"),
                None => note.to_string(),
            });
        }
    }
    Ok(TrainedLinearModel {
        task: Task::Classification,
        penalty: *pen,
        b,
        feature_layout: ds.layout.clone(),
        w,
        diagnostics,
    })
}

/// Orthonormal coordinates for the row space of `X`. With an ℓ2 penalty the
/// optimal `w` lies in that span, so `w = V β` and the features become `Z = X V`.
struct SpanReduction {
    z: DMatrix<f64>,
    /// `None` means the identity (no reduction).
    v: Option<DMatrix<f64>>,
}

impl SpanReduction {
    fn new(x: &DMatrix<f64>) -> Self {
        if x.ncols() <= x.nrows() {
            return SpanReduction { z: x.clone(), v: None };
        }
        let k = x * x.transpose();
        let eig = SymmetricEigen::new(k);
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
        let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
        let u = eig.eigenvectors.select_columns(&keep);
        let mut v = x.tr_mul(&u);
        for (c, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            v.column_mut(c).scale_mut(1.0 / s);
        }
        let z = x * &v;
        SpanReduction { z, v: Some(v) }
    }

    fn lift(&self, beta: &DVector<f64>) -> Vec<f64> {
        match &self.v {
            Some(v) => (v * beta).iter().copied().collect(),
            None => beta.iter().copied().collect(),
        }
    }
}

fn logistic_parts(
    z: &DMatrix<f64>,
    y: &[f64],
    beta: &DVector<f64>,
    b: f64,
    lambda: f64,
) -> (f64, DVector<f64>, f64, DVector<f64>) {
    let m = y.len() as f64;
    let mut s = z * beta;
    s.add_scalar_mut(b);
    let mut loss = 0.0;
    let mut r = DVector::zeros(y.len());
    let mut d = DVector::zeros(y.len());
    for i in 0..y.len() {
        loss += log1pexp(s[i]) - y[i] * s[i];
        let p = sigmoid(s[i]);
        r[i] = p - y[i];
        d[i] = p * (1.0 - p);
    }
    let obj = loss / m + 0.5 * lambda * beta.norm_squared();
    let g = z.tr_mul(&r) / m + beta * lambda;
    (obj, g, r.sum() / m, d)
}

/// Damped Newton on the reduced problem. Returns `(w, b, iterations, converged)`.
fn logistic_l2_newton(
    red: &SpanReduction,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let z = &red.z;
    let m = y.len() as f64;
    let r = z.ncols();
    let mut beta = DVector::zeros(r);
    let mean_y = y.iter().sum::<f64>() / m;
    let mut b = (mean_y / (1.0 - mean_y)).ln();
    let mut converged = false;
    let mut it = 0;
    let cap = max_iter.min(10_000);
    let (mut obj, mut g, mut gb, mut d) = logistic_parts(z, y, &beta, b, lambda);
    while it < cap {
        if (g.norm_squared() + gb * gb).sqrt() <= tol {
            converged = true;
            break;
        }
        let mut zd = z.clone();
        for (i, mut row) in zd.row_iter_mut().enumerate() {
            row.scale_mut(d[i]);
        }
        let mut h = DMatrix::zeros(r + 1, r + 1);
        h.view_mut((0, 0), (r, r)).copy_from(&(z.tr_mul(&zd) / m));
        let cross = zd.row_sum().transpose() / m;
        for j in 0..r {
            h[(j, j)] += lambda;
            h[(j, r)] = cross[j];
            h[(r, j)] = cross[j];
        }
        h[(r, r)] = d.sum() / m;
        let mut rhs = DVector::zeros(r + 1);
        rhs.rows_mut(0, r).copy_from(&g);
        rhs[r] = gb;
        let step = damped_solve(h, &rhs);
        let slope = -rhs.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nb = &beta - step.rows(0, r) * t;
            let nbias = b - step[r] * t;
            let parts = logistic_parts(z, y, &nb, nbias, lambda);
            if parts.0 <= obj + 1e-4 * t * slope {
                beta = nb;
                b = nbias;
                (obj, g, gb, d) = parts;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        it += 1;
        if !accepted {
            // No further decrease is representable.
            converged = (g.norm_squared() + gb * gb).sqrt() <= tol * 1e3;
            break;
        }
    }
    (red.lift(&beta), b, it, converged)
}

/// Solves `H x = rhs`, adding a growing multiple of the identity when `H` is
/// numerically singular.
fn damped_solve(h: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        return ch.solve(rhs);
    }
    let mut mu = 1e-10 * h.diagonal().amax().max(1e-300);
    loop {
        let mut hm = h.clone();
        for i in 0..hm.nrows() {
            hm[(i, i)] += mu;
        }
        if let Some(ch) = Cholesky::new(hm) {
            return ch.solve(rhs);
        }
        mu *= 10.0;
    }
}

/// Gradient descent with backtracking on the full ℓ2 objective.
fn logistic_l2_gradient(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x.ncols();
    let f = |w: &[f64], b: f64| cross_entropy_loss(x, y, w, b) + 0.5 * lambda * dot(w, w);
    let grad = |w: &[f64], b: f64| {
        let (mut g, gb) = cross_entropy_gradient(x, y, w, b);
        for (gj, wj) in g.iter_mut().zip(w) {
            *gj += lambda * wj;
        }
        (g, gb)
    };
    let mut w = vec![0.0; n];
    let mut b = 0.0;
    let mut fx = f(&w, b);
    let mut step = 1.0;
    let mut it = 0;
    while it < max_iter {
        let (g, gb) = grad(&w, b);
        let gn2 = dot(&g, &g) + gb * gb;
        if gn2.sqrt() <= tol {
            return (w, b, it, true);
        }
        step *= 2.0;
        loop {
            let nw: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w - step * g).collect();
            let nbias = b - step * gb;
            let fn_ = f(&nw, nbias);
            if fn_ <= fx - 0.5 * step * gn2 || step < 1e-20 {
                w = nw;
                b = nbias;
                fx = fn_;
                break;
            }
            step *= 0.5;
        }
        it += 1;
    }
    (w, b, it, false)
}

/// Largest entry of the unit-step proximal-gradient residual, including the intercept.
fn prox_residual(w: &[f64], g: &[f64], gb: f64, lambda: f64) -> f64 {
    w.iter().zip(g).map(|(&w, &g)| (w - soft_threshold(w - g, lambda)).abs()).fold(gb.abs(), f64::max)
}

/// Accelerated proximal gradient (FISTA) with backtracking and adaptive restart.
fn logistic_l1_fista(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let n = x.ncols();
    let big_f = |w: &[f64], b: f64| cross_entropy_loss(x, y, w, b) + lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    let mut w = vec![0.0; n];
    let mut b = 0.0;
    let mut vw = w.clone();
    let mut vb = b;
    let mut t: f64 = 1.0;
    let mut lip = 1.0;
    let mut fx = big_f(&w, b);
    for it in 0..max_iter {
        let (g, gb) = cross_entropy_gradient(x, y, &w, b);
        if prox_residual(&w, &g, gb, lambda) <= tol {
            return (w, b, it, true);
        }
        let fv = cross_entropy_loss(x, y, &vw, vb);
        let (gv, gvb) = cross_entropy_gradient(x, y, &vw, vb);
        let (nw, nb) = loop {
            let nw: Vec<f64> = vw.iter().zip(&gv).map(|(v, g)| soft_threshold(v - g / lip, lambda / lip)).collect();
            let nb = vb - gvb / lip;
            let dw: Vec<f64> = nw.iter().zip(&vw).map(|(a, b)| a - b).collect();
            let db = nb - vb;
            let quad = fv + dot(&gv, &dw) + gvb * db + 0.5 * lip * (dot(&dw, &dw) + db * db);
            if cross_entropy_loss(x, y, &nw, nb) <= quad + 1e-14 * quad.abs() {
                break (nw, nb);
            }
            lip *= 2.0;
        };
        let fnew = big_f(&nw, nb);
        if fnew > fx {
            // Restart momentum.
            t = 1.0;
            vw = w.clone();
            vb = b;
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / tn;
        vw = nw.iter().zip(&w).map(|(a, b)| a + mom * (a - b)).collect();
        vb = nb + mom * (nb - b);
        w = nw;
        b = nb;
        fx = fnew;
        t = tn;
        lip *= 0.9;
    }
    (w, b, max_iter, false)
}

/// Proximal Newton: a weighted lasso on the local quadratic model, solved by
/// coordinate descent, followed by a line search on the true objective.
fn logistic_l1_prox_newton(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let m = y.len() as f64;
    let n = x.ncols();
    let l1 = |w: &[f64]| lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    let mut w = vec![0.0; n];
    let mean_y = y.iter().sum::<f64>() / m;
    let mut b = (mean_y / (1.0 - mean_y)).ln();
    let mut fx = cross_entropy_loss(x, y, &w, b) + l1(&w);
    let cap = max_iter.min(10_000);
    let x2 = x.map(|v| v * v);
    for it in 0..cap {
        let z = scores(x, &w, b);
        let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
        let r = DVector::from_iterator(y.len(), p.iter().zip(y).map(|(p, y)| p - y));
        let g: Vec<f64> = (x.tr_mul(&r) / m).iter().copied().collect();
        let gb = r.sum() / m;
        if prox_residual(&w, &g, gb, lambda) <= tol {
            return (w, b, it, true);
        }
        let d = DVector::from_iterator(y.len(), p.iter().map(|p| (p * (1.0 - p)).max(1e-12)));
        let a: Vec<f64> = (x2.tr_mul(&d) / m).iter().copied().collect();
        let a0 = d.sum() / m;

        // Inner coordinate descent on the step (dw, db); u = X dw + db.
        let mut cur = w.clone();
        let mut db = 0.0;
        let mut u = DVector::zeros(y.len());
        let coord = |j: usize, cur: &mut [f64], u: &mut DVector<f64>| -> f64 {
            if a[j] <= 0.0 {
                return 0.0;
            }
            let col = x.column(j);
            let c = g[j] + col.iter().zip(u.iter()).zip(d.iter()).map(|((x, u), d)| x * u * d).sum::<f64>() / m;
            // Minimize c δ + a δ²/2 + λ|cur + δ|.
            let target = soft_threshold(a[j] * cur[j] - c, lambda) / a[j];
            let delta = target - cur[j];
            if delta != 0.0 {
                u.axpy(delta, &col, 1.0);
                cur[j] = target;
            }
            delta.abs() * a[j].sqrt()
        };
        let intercept = |db: &mut f64, u: &mut DVector<f64>| -> f64 {
            let c = gb + u.dot(&d) / m;
            let delta = -c / a0;
            *db += delta;
            u.add_scalar_mut(delta);
            delta.abs() * a0.sqrt()
        };
        let inner_tol = (tol * 0.1).max(1e-12);
        for _ in 0..200 {
            let mut biggest = intercept(&mut db, &mut u);
            for j in 0..n {
                biggest = biggest.max(coord(j, &mut cur, &mut u));
            }
            if biggest <= inner_tol {
                break;
            }
            let active: Vec<usize> = (0..n).filter(|&j| cur[j] != 0.0).collect();
            for _ in 0..200 {
                let mut big = intercept(&mut db, &mut u);
                for &j in &active {
                    big = big.max(coord(j, &mut cur, &mut u));
                }
                if big <= inner_tol {
                    break;
                }
            }
        }

        let dw: Vec<f64> = cur.iter().zip(&w).map(|(c, w)| c - w).collect();
        let decrease = dot(&g, &dw) + gb * db + l1(&cur) - l1(&w);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let nw: Vec<f64> = w.iter().zip(&dw).map(|(w, d)| w + t * d).collect();
            let nb = b + t * db;
            let fnew = cross_entropy_loss(x, y, &nw, nb) + l1(&nw);
            if fnew <= fx + 1e-4 * t * decrease.min(0.0) {
                w = nw;
                b = nb;
                fx = fnew;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            let (g, gb) = cross_entropy_gradient(x, y, &w, b);
            return (w.clone(), b, it + 1, prox_residual(&w, &g, gb, lambda) <= tol * 1e3);
        }
    }
    (w, b, cap, false)
}

/// Fraction of samples classified correctly at threshold 0.5.
pub fn score_accuracy(model: &TrainedLinearModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot score an empty dataset"));
    }
    let p = model.predict_dataset(ds)?;
    let correct = p.iter().zip(&ds.targets).filter(|(p, y)| (**p >= 0.5) == (**y == 1.0)).count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Coefficient of determination. A constant target scores 1 when predicted
/// exactly and 0 otherwise.
pub fn score_r2(model: &TrainedLinearModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot score an empty dataset"));
    }
    Ok(r2(&ds.targets, &model.predict_dataset(ds)?))
}

pub fn r2(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
    let ss_tot: f64 = y.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// `n` values evenly spaced in log10 between `lo` and `hi`, inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Ten log-spaced values in `[1e-4, 1]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1.0, 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub mean: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_lambda: f64,
    pub scores: Vec<CvScore>,
    pub k: usize,
    pub seed: u64,
}

/// Assigns each sample to one of `k` folds. Classification folds are
/// stratified: each class is shuffled and dealt round-robin.
pub fn make_folds(ds: &Dataset, task: Task, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("cross validation needs k >= 2, got {k}")));
    }
    let mut rng = sample_rng(seed, u64::MAX);
    let mut folds = vec![Vec::new(); k];
    match task {
        Task::Classification => {
            ds.check_classification()?;
            let mut next = 0;
            for class in [0.0, 1.0] {
                let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.targets[i] == class).collect();
                if idx.len() < k {
                    return Err(Error::invalid(format!(
                        "class {class} has {} samples, fewer than the {k} folds",
                        idx.len()
                    )));
                }
                idx.shuffle(&mut rng);
                for i in idx {
                    folds[next % k].push(i);
                    next += 1;
                }
            }
        }
        Task::Regression => {
            if ds.len() < k {
                return Err(Error::invalid(format!("{} samples cannot fill {k} folds", ds.len())));
            }
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut rng);
            for (pos, i) in idx.into_iter().enumerate() {
                folds[pos % k].push(i);
            }
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn cross_validate(
    ds: &Dataset,
    task: Task,
    kind: PenaltyKind,
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    cross_validate_with(ds, task, kind, grid, k, seed, &FitOptions::default())
}

/// k-fold cross validation over `grid`. Scores are mean accuracy or R²; the
/// best λ maximizes the mean score, ties going to the larger λ.
pub fn cross_validate_with(
    ds: &Dataset,
    task: Task,
    kind: PenaltyKind,
    grid: &[f64],
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    for &l in grid {
        Penalty { kind, lambda: l }.validate()?;
    }
    ds.validate()?;
    let folds = make_folds(ds, task, k, seed)?;
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|test_idx| -> Result<Vec<f64>> {
            let train_idx: Vec<usize> = (0..ds.len()).filter(|i| test_idx.binary_search(i).is_err()).collect();
            let train = ds.subset(&train_idx);
            let test = ds.subset(test_idx);
            fold_scores(&train, &test, task, kind, grid, opts)
        })
        .collect::<Result<_>>()?;
    let scores: Vec<CvScore> = grid
        .iter()
        .enumerate()
        .map(|(li, &lambda)| {
            let fold_scores: Vec<f64> = per_fold.iter().map(|f| f[li]).collect();
            let mean = fold_scores.iter().sum::<f64>() / k as f64;
            CvScore { lambda, mean, fold_scores }
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        let b = &scores[best];
        if s.mean > b.mean + 1e-12 || ((s.mean - b.mean).abs() <= 1e-12 && s.lambda > b.lambda) {
            best = i;
        }
    }
    Ok(CvResult { best_lambda: scores[best].lambda, scores, k, seed })
}

fn fold_scores(
    train: &Dataset,
    test: &Dataset,
    task: Task,
    kind: PenaltyKind,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    let score = |m: &TrainedLinearModel| match task {
        Task::Regression => score_r2(m, test),
        Task::Classification => score_accuracy(m, test),
    };
    let model = |w: Vec<f64>, b: f64, lambda: f64| TrainedLinearModel {
        task,
        penalty: Penalty { kind, lambda },
        b,
        feature_layout: train.layout.clone(),
        w,
        diagnostics: Diagnostics::default(),
    };
    // Reuse λ-independent work when fitting raw features.
    if kind == PenaltyKind::L2 && !opts.standardize {
        match task {
            Task::Regression => {
                let prep = RidgePrep::new(&train.inputs, &train.targets);
                return grid
                    .iter()
                    .map(|&l| {
                        let (w, b) = prep.solve(l)?;
                        score(&model(w, b, l))
                    })
                    .collect();
            }
            Task::Classification if opts.solver == LogisticSolver::Newton => {
                train.check_classification()?;
                let red = SpanReduction::new(&train.inputs);
                return grid
                    .iter()
                    .map(|&l| {
                        let (w, b, _, _) = logistic_l2_newton(&red, &train.targets, l, opts.tol, opts.max_iter);
                        score(&model(w, b, l))
                    })
                    .collect();
            }
            Task::Classification => {}
        }
    }
    if kind == PenaltyKind::L1 && task == Task::Regression && !opts.standardize {
        train.validate()?;
        let prep = LassoPrep::new(&train.inputs, &train.targets);
        return prep
            .path(grid, opts.tol, opts.max_iter)
            .into_iter()
            .zip(grid)
            .map(|((w, b, _, _), &l)| score(&model(w, b, l)))
            .collect();
    }
    grid.iter()
        .map(|&lambda| {
            let pen = Penalty { kind, lambda };
            score(&fit(train, task, &pen, opts)?)
        })
        .collect()
}

/// Dispatches to [`fit_linear_with`] or [`fit_logistic_with`].
pub fn fit(ds: &Dataset, task: Task, pen: &Penalty, opts: &FitOptions) -> Result<TrainedLinearModel> {
    match task {
        Task::Regression => fit_linear_with(ds, pen, opts),
        Task::Classification => fit_logistic_with(ds, pen, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ds(rows: &[Vec<f64>], y: &[f64]) -> Dataset {
        Dataset::from_rows(rows, y.to_vec(), FeatureLayout::pi_only(rows[0].len())).unwrap()
    }

    fn random_ds(seed: u64, m: usize, n: usize, classify: bool) -> Dataset {
        let mut rng = sample_rng(seed, 7);
        let truth: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..m {
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let z = dot(&truth, &x) + 0.3 * rng.sample::<f64, _>(StandardNormal);
            y.push(if classify { f64::from(u8::from(z > 0.0) ^ u8::from(i % 7 == 0)) } else { z });
            rows.push(x);
        }
        ds(&rows, &y)
    }

    /// Independent 1D minimizer.
    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-12 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d
            } else {
                a = c
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn exact_line_is_interpolated() {
        let d = ds(&[vec![0.0], vec![1.0], vec![2.0]], &[1.0, 3.0, 5.0]);
        let m = fit_linear(&d, &Penalty::l2(0.0)).unwrap();
        assert!((m.w[0] - 2.0).abs() < 1e-12 && (m.b - 1.0).abs() < 1e-12);
        assert!(m.diagnostics.final_loss < 1e-20);
        let lasso = fit_linear(&d, &Penalty::l1(0.0)).unwrap();
        assert!((lasso.w[0] - 2.0).abs() < 1e-6 && (lasso.b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn huge_ridge_penalty_leaves_the_mean() {
        let d = ds(&[vec![0.0], vec![1.0], vec![2.0]], &[1.0, 3.0, 5.0]);
        let m = fit_linear(&d, &Penalty::l2(1e12)).unwrap();
        assert!(m.w[0].abs() < 1e-10);
        assert!((m.b - 3.0).abs() < 1e-9);
    }

    #[test]
    fn ridge_matches_hand_solved_normal_equations() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 0.5], vec![3.0, 1.0], vec![0.5, -1.0], vec![-1.0, 0.0]];
        let y = [1.0, 2.0, 2.5, -0.5, -1.0];
        let lambda = 0.1;
        let m = rows.len() as f64;
        let mx: Vec<f64> = (0..2).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
        let my = y.iter().sum::<f64>() / m;
        let (mut a, mut c) = ([[0.0; 2]; 2], [0.0; 2]);
        for (r, &yi) in rows.iter().zip(&y) {
            for p in 0..2 {
                c[p] += (r[p] - mx[p]) * (yi - my) / m;
                for q in 0..2 {
                    a[p][q] += (r[p] - mx[p]) * (r[q] - mx[q]) / m;
                }
            }
        }
        a[0][0] += lambda;
        a[1][1] += lambda;
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let w0 = (c[0] * a[1][1] - a[0][1] * c[1]) / det;
        let w1 = (a[0][0] * c[1] - a[1][0] * c[0]) / det;
        let fit = fit_linear(&ds(&rows, &y), &Penalty::l2(lambda)).unwrap();
        assert!((fit.w[0] - w0).abs() < 1e-8 && (fit.w[1] - w1).abs() < 1e-8);
        assert!((fit.b - (my - mx[0] * w0 - mx[1] * w1)).abs() < 1e-8);
    }

    #[test]
    fn dual_ridge_matches_primal_and_iterative() {
        let d = random_ds(3, 8, 20, false);
        let model = fit_linear(&d, &Penalty::l2(0.05)).unwrap();
        let (xc, yc, _, _) = center(&d.inputs, &d.targets);
        let mut a = xc.tr_mul(&xc) / 8.0;
        for i in 0..20 {
            a[(i, i)] += 0.05;
        }
        let primal = a.lu().solve(&(xc.tr_mul(&yc) / 8.0)).unwrap();
        for j in 0..20 {
            assert!((model.w[j] - primal[j]).abs() < 1e-10);
        }
        let cg = fit_ridge_iterative(&d, 0.05, 1e-12, 1000).unwrap();
        for j in 0..20 {
            assert!((model.w[j] - cg.w[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn one_dimensional_logistic_matches_golden_section() {
        let d = ds(&[vec![-1.0], vec![1.0]], &[0.0, 1.0]);
        let oracle = golden_section(|w| log1pexp(-w) + 0.5 * w * w, -10.0, 10.0);
        for solver in [LogisticSolver::Newton, LogisticSolver::FirstOrder] {
            let opts = FitOptions { solver, ..Default::default() };
            let m = fit_logistic_with(&d, &Penalty::l2(1.0), &opts).unwrap();
            assert!((m.w[0] - oracle).abs() < 1e-6, "{solver:?}: {} vs {oracle}", m.w[0]);
            assert!(m.b.abs() < 1e-6);
        }
    }

    #[test]
    fn prediction_examples() {
        let mut m = TrainedLinearModel {
            task: Task::Regression,
            penalty: Penalty::l2(0.0),
            b: 0.0,
            feature_layout: FeatureLayout::pi_only(2),
            w: vec![1.0, -1.0],
            diagnostics: Diagnostics::default(),
        };
        assert_eq!(m.predict(&[3.0, 1.0]).unwrap(), 2.0);
        m.task = Task::Classification;
        assert!((m.predict(&[3.0, 1.0]).unwrap() - 0.8807970779778823).abs() < 1e-15);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(m.classify(&[3.0, 1.0]).unwrap(), 1);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let d = random_ds(seed, 12, 5, true);
            let mut rng = sample_rng(seed, 99);
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            for task in [Task::Regression, Task::Classification] {
                let f = |w: &[f64], b: f64| match task {
                    Task::Regression => squared_loss(&d.inputs, &d.targets, w, b),
                    Task::Classification => cross_entropy_loss(&d.inputs, &d.targets, w, b),
                };
                let (g, gb) = match task {
                    Task::Regression => squared_loss_gradient(&d.inputs, &d.targets, &w, b),
                    Task::Classification => cross_entropy_gradient(&d.inputs, &d.targets, &w, b),
                };
                let h = 1e-5;
                for j in 0..5 {
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[j] += h;
                    wm[j] -= h;
                    let num = (f(&wp, b) - f(&wm, b)) / (2.0 * h);
                    assert!((num - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-3), "{task:?} {j}: {num} vs {}", g[j]);
                }
                let num = (f(&w, b + h) - f(&w, b - h)) / (2.0 * h);
                assert!((num - gb).abs() <= 1e-5 * gb.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn l1_solutions_satisfy_kkt() {
        for seed in 0..5 {
            for lambda in [0.01, 0.1] {
                let d = random_ds(seed, 30, 12, false);
                let m = fit_linear(&d, &Penalty::l1(lambda)).unwrap();
                assert!(m.diagnostics.converged);
                assert!(l1_kkt_violation(Task::Regression, lambda, &d, &m.w, m.b) <= 1e-5);
                let c = random_ds(seed, 30, 12, true);
                for solver in [LogisticSolver::Newton, LogisticSolver::FirstOrder] {
                    let opts = FitOptions { solver, ..Default::default() };
                    let m = fit_logistic_with(&c, &Penalty::l1(lambda), &opts).unwrap();
                    assert!(m.diagnostics.converged, "{solver:?}");
                    assert!(l1_kkt_violation(Task::Classification, lambda, &c, &m.w, m.b) <= 1e-5, "{solver:?}");
                }
            }
        }
    }

    #[test]
    fn newton_and_first_order_agree() {
        // More features than samples exercises the span reduction.
        for (m, n) in [(40, 6), (15, 40)] {
            let d = random_ds(11, m, n, true);
            for pen in [Penalty::l2(0.05), Penalty::l1(0.02)] {
                let a = fit_logistic(&d, &pen).unwrap();
                let b = fit_logistic_with(
                    &d,
                    &pen,
                    &FitOptions { solver: LogisticSolver::FirstOrder, ..Default::default() },
                )
                .unwrap();
                let fa = objective(Task::Classification, &pen, &d, &a.w, a.b);
                let fb = objective(Task::Classification, &pen, &d, &b.w, b.b);
                assert!((fa - fb).abs() < 1e-9, "{pen:?}: {fa} vs {fb}");
                if pen.kind == PenaltyKind::L2 {
                    for j in 0..n {
                        assert!((a.w[j] - b.w[j]).abs() < 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn ridge_optimum_has_zero_gradient_in_wide_problems() {
        let d = random_ds(5, 10, 30, true);
        let m = fit_logistic(&d, &Penalty::l2(0.01)).unwrap();
        let (mut g, gb) = cross_entropy_gradient(&d.inputs, &d.targets, &m.w, m.b);
        for (g, w) in g.iter_mut().zip(&m.w) {
            *g += 0.01 * w;
        }
        assert!(dot(&g, &g).sqrt() < 1e-6 && gb.abs() < 1e-6);
    }

    #[test]
    fn sparsity_decreases_with_lambda() {
        let mut totals = [0usize; 3];
        for seed in 0..20 {
            let d = random_ds(100 + seed, 40, 25, true);
            for (t, lambda) in totals.iter_mut().zip([0.01, 0.1, 1.0]) {
                *t += fit_logistic(&d, &Penalty::l1(lambda)).unwrap().nonzero_count();
            }
        }
        assert!(totals[0] >= totals[1] && totals[1] >= totals[2], "{totals:?}");
    }

    #[test]
    fn decision_is_invariant_to_feature_shift() {
        let d = random_ds(8, 30, 4, true);
        let mut shifted = d.clone();
        shifted.inputs.column_mut(2).add_scalar_mut(5.0);
        let a = fit_logistic(&d, &Penalty::l2(0.1)).unwrap();
        let b = fit_logistic(&shifted, &Penalty::l2(0.1)).unwrap();
        for i in 0..d.len() {
            assert_eq!(a.classify(&d.row(i)).unwrap(), b.classify(&shifted.row(i)).unwrap());
        }
    }

    #[test]
    fn error_contracts() {
        let single = ds(&[vec![0.0], vec![1.0]], &[1.0, 1.0]);
        assert!(matches!(fit_logistic(&single, &Penalty::l2(1.0)), Err(Error::SingleClass)));
        let d = ds(&[vec![0.0], vec![1.0]], &[0.0, 1.0]);
        assert!(fit_logistic(&d, &Penalty::l2(-1.0)).is_err());
        assert!(fit_linear(&d, &Penalty::l1(-0.5)).is_err());
        assert!(Dataset::from_rows(&[vec![f64::NAN], vec![1.0]], vec![0.0, 1.0], FeatureLayout::pi_only(1)).is_err());
        assert!(Dataset::from_rows(&[vec![1.0]], vec![0.0], FeatureLayout::pi_only(1)).is_err());
    }

    #[test]
    fn separable_data_without_penalty_is_flagged() {
        let d = ds(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]], &[0.0, 0.0, 1.0, 1.0]);
        let opts = FitOptions { max_iter: 50, ..Default::default() };
        let m = fit_logistic_with(&d, &Penalty::l2(0.0), &opts).unwrap();
        assert!(m.diagnostics.warning.as_deref().unwrap().contains("separable"));
    }

    #[test]
    fn scores() {
        let d = ds(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], &[1.0, 3.0, 5.0, 7.0]);
        let perfect = fit_linear(&d, &Penalty::l2(0.0)).unwrap();
        assert!((score_r2(&perfect, &d).unwrap() - 1.0).abs() < 1e-12);
        let constant = TrainedLinearModel { w: vec![0.0], b: 4.0, ..perfect.clone() };
        assert_eq!(score_r2(&constant, &d).unwrap(), 0.0);
        let c = ds(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], &[0.0, 1.0, 0.0, 1.0]);
        let majority = TrainedLinearModel { task: Task::Classification, w: vec![0.0], b: 1.0, ..perfect };
        assert_eq!(score_accuracy(&majority, &c).unwrap(), 0.5);
    }

    #[test]
    fn default_grid_contains_reported_values() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[9] - 1.0).abs() < 1e-15);
        assert!((g[8] - 0.35938).abs() < 1e-5);
        assert!((g[4] - 0.0059948).abs() < 1e-7);
    }

    #[test]
    fn cv_single_value_and_tie_break() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let class = (i % 2) as f64;
            rows.push(vec![if class == 1.0 { 5.0 + i as f64 * 0.1 } else { -5.0 - i as f64 * 0.1 }]);
            y.push(class);
        }
        let d = ds(&rows, &y);
        let one = cross_validate(&d, Task::Classification, PenaltyKind::L2, &[0.3], 4, 1).unwrap();
        assert_eq!(one.best_lambda, 0.3);
        let cv = cross_validate(&d, Task::Classification, PenaltyKind::L2, &default_lambda_grid(), 5, 1).unwrap();
        assert!(cv.scores.iter().all(|s| s.mean == 1.0));
        assert_eq!(cv.best_lambda, 1.0);
    }

    #[test]
    fn cv_fast_path_matches_plain_fits() {
        let d = random_ds(21, 30, 40, true);
        let grid = [0.001, 0.1];
        let fast = cross_validate(&d, Task::Classification, PenaltyKind::L2, &grid, 3, 4).unwrap();
        let folds = make_folds(&d, Task::Classification, 3, 4).unwrap();
        for (li, &l) in grid.iter().enumerate() {
            for (fi, test) in folds.iter().enumerate() {
                let train: Vec<usize> = (0..d.len()).filter(|i| !test.contains(i)).collect();
                let m = fit_logistic(&d.subset(&train), &Penalty::l2(l)).unwrap();
                let acc = score_accuracy(&m, &d.subset(test)).unwrap();
                assert_eq!(acc, fast.scores[li].fold_scores[fi]);
            }
        }
    }

    #[test]
    fn folds_are_stratified_and_reject_tiny_classes() {
        let d = random_ds(2, 40, 3, true);
        let folds = make_folds(&d, Task::Classification, 4, 0).unwrap();
        let ones = d.targets.iter().filter(|&&v| v == 1.0).count();
        for f in &folds {
            let c = f.iter().filter(|&&i| d.targets[i] == 1.0).count();
            assert!(c == ones / 4 || c == ones / 4 + 1);
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        let tiny = ds(&[vec![0.0], vec![1.0], vec![2.0]], &[0.0, 1.0, 1.0]);
        assert!(make_folds(&tiny, Task::Classification, 2, 0).is_err());
    }

    #[test]
    fn standardized_fit_predicts_in_raw_units() {
        let mut d = random_ds(9, 40, 3, false);
        d.inputs.column_mut(0).scale_mut(1e4);
        let opts = FitOptions { standardize: true, ..Default::default() };
        let m = fit_linear_with(&d, &Penalty::l2(0.0), &opts).unwrap();
        let plain = fit_linear(&d, &Penalty::l2(0.0)).unwrap();
        for i in 0..d.len() {
            let x = d.row(i);
            assert!((m.predict(&x).unwrap() - plain.predict(&x).unwrap()).abs() < 1e-8);
        }
        assert!(m.diagnostics.standardized);
    }

    #[test]
    fn model_and_dataset_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset {
            layout: FeatureLayout { pi_dim: 3, extra_names: vec!["white_pixels".into()] },
            ..random_ds(1, 6, 4, false)
        };
        let p = dir.path().join("data.csv");
        d.write(&p).unwrap();
        assert_eq!(Dataset::read(&p).unwrap(), d);
        let m = fit_linear(&d, &Penalty::l1(0.01)).unwrap();
        let mp = dir.path().join("model.json");
        m.write_json(&mp).unwrap();
        assert_eq!(TrainedLinearModel::read_json(&mp).unwrap(), m);
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mp).unwrap()).unwrap();
        assert_eq!(json["penalty"]["kind"], "l1");
        assert_eq!(json["task"], "regression");
        assert_eq!(m.extra_weights().len(), 1);
    }
}

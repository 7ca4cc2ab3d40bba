//! Vectorial kernel surrogate `P → R^{d_out}` fitted by f-greedy selection.
//!
//! Centers are added one at a time. Each new center extends the Newton basis
//! (a pivoted Cholesky factorization of the kernel matrix on the centers), so
//! residuals and power function values at all training points are updated in
//! `O(N · d_out)` per step without refactoring.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::{Parameter, ParameterDomain};
use crate::linalg::Tridiagonal;
use crate::pod::{gram_schmidt, sorted_eigen, truncation_rank};

/// Affine map of the parameter box onto `[0, 1]²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub offset: [f64; 2],
    pub scale: [f64; 2],
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            offset: [0.0; 2],
            scale: [1.0; 2],
        }
    }

    /// Degenerate box edges map to 0.
    pub fn from_domain(domain: &ParameterDomain) -> Self {
        let width = |lo: f64, hi: f64| if hi > lo { 1.0 / (hi - lo) } else { 1.0 };
        Self {
            offset: [domain.lower.da, domain.lower.pe],
            scale: [
                width(domain.lower.da, domain.upper.da),
                width(domain.lower.pe, domain.upper.pe),
            ],
        }
    }

    pub fn apply(&self, mu: &Parameter) -> [f64; 2] {
        [
            (mu.da - self.offset[0]) * self.scale[0],
            (mu.pe - self.offset[1]) * self.scale[1],
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    /// Gaussian shape parameter `γ` in `exp(−γ² ‖x − y‖²)`.
    pub shape_gamma: f64,
    /// Weight of the squared RKHS norm in the loss.
    pub lambda_reg: f64,
    pub max_points: usize,
    /// Stop once every training residual norm is below
    /// `greedy_tol · max_i ‖y_i‖`.
    pub greedy_tol: f64,
    /// When positive, targets are first compressed onto an orthonormal output
    /// basis with relative ℓ²-mean error at most this value, and the
    /// expansion is fitted in those coordinates. Zero fits the raw vectors.
    pub output_tol: f64,
    pub normalization: Normalization,
}

impl KernelConfig {
    pub fn new(domain: &ParameterDomain) -> Self {
        Self {
            normalization: Normalization::from_domain(domain),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape_gamma > 0.0 && self.shape_gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("shape_gamma must be positive, got {}", self.shape_gamma)));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_reg must be nonnegative, got {}", self.lambda_reg)));
        }
        if self.max_points == 0 {
            return Err(Error::InvalidArgument("max_points must be positive".into()));
        }
        if !(self.greedy_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("greedy_tol must be positive, got {}", self.greedy_tol)));
        }
        if !(self.output_tol >= 0.0 && self.output_tol < 1.0) {
            return Err(Error::InvalidArgument(format!("output_tol must lie in [0, 1), got {}", self.output_tol)));
        }
        Ok(())
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            shape_gamma: 1.0,
            lambda_reg: 0.0,
            max_points: 100,
            greedy_tol: 1e-6,
            output_tol: 0.0,
            normalization: Normalization::identity(),
        }
    }
}

/// Relative floor below which the power function excludes a point.
pub const POWER_FLOOR: f64 = 1e-7;

pub fn gaussian(gamma: f64, x: &[f64; 2], y: &[f64; 2]) -> f64 {
    let d0 = x[0] - y[0];
    let d1 = x[1] - y[1];
    (-(gamma * gamma) * (d0 * d0 + d1 * d1)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// All residuals below the tolerance.
    Converged,
    MaxPoints,
    /// Every training point left had a power function below the floor while
    /// residuals were still above the tolerance.
    PowerFloor,
    /// Every training point was selected.
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct KernelModel {
    /// Normalized center coordinates in selection order.
    pub centers: Vec<[f64; 2]>,
    /// Training indices of the centers.
    pub center_indices: Vec<usize>,
    /// Expansion coefficients, `n × d_out`, or `n × r` in output-basis
    /// coordinates when `output_basis` is present.
    pub coefficients: DMatrix<f64>,
    /// Orthonormal `d_out × r` output basis.
    pub output_basis: Option<DMatrix<f64>>,
    /// Lower-triangular `L` with `L Lᵀ = K + NλI` on the centers.
    pub newton_factor: DMatrix<f64>,
    pub config: KernelConfig,
    pub d_out: usize,
    /// Number of training pairs the model was fitted on (scales `λ`).
    pub num_train: usize,
    pub stop_reason: StopReason,
    /// `max_i ‖y_i − s_n(μ_i)‖` for `n = 0, 1, …`.
    pub residual_history: Vec<f64>,
}

impl KernelModel {
    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    /// True if the greedy loop broke down on the power-function floor.
    pub fn flagged(&self) -> bool {
        self.stop_reason == StopReason::PowerFloor
    }

    fn kernel_vector(&self, x: &[f64; 2]) -> DVector<f64> {
        let g = self.config.shape_gamma;
        DVector::from_iterator(self.centers.len(), self.centers.iter().map(|c| gaussian(g, x, c)))
    }

    /// Kernel matrix on the centers (without regularization).
    pub fn center_kernel_matrix(&self) -> DMatrix<f64> {
        let g = self.config.shape_gamma;
        let n = self.centers.len();
        DMatrix::from_fn(n, n, |i, j| gaussian(g, &self.centers[i], &self.centers[j]))
    }
}

fn check_training(x: &[Parameter], y: &DMatrix<f64>, config: &KernelConfig) -> Result<Vec<[f64; 2]>> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::InvalidArgument("kernel fit needs at least one training pair".into()));
    }
    if x.len() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs but {} target rows",
            x.len(),
            y.nrows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel training targets".into()));
    }
    let pts: Vec<[f64; 2]> = x.iter().map(|p| config.normalization.apply(p)).collect();
    for i in 0..pts.len() {
        for j in 0..i {
            if pts[i] == pts[j] {
                return Err(Error::DuplicateInput(j, i));
            }
        }
    }
    Ok(pts)
}

/// Orthonormal basis of the target row space capturing all but `tol²` of
/// the energy, and the targets in its coordinates.
fn compress_outputs(y: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = y.shape();
    let total = y.norm_squared();
    let basis = if total == 0.0 {
        DMatrix::zeros(d, 0)
    } else if n <= d {
        let (values, vectors) = sorted_eigen(y * y.transpose());
        let r = truncation_rank(&values, tol * tol * total);
        let mut w = y.transpose() * vectors.columns(0, r);
        for (j, mut col) in w.column_iter_mut().enumerate() {
            col /= values[j].sqrt();
        }
        gram_schmidt(&w, &Tridiagonal::identity(d))
    } else {
        let (values, vectors) = sorted_eigen(y.transpose() * y);
        let r = truncation_rank(&values, tol * tol * total);
        vectors.columns(0, r).into_owned()
    };
    let coords = y * &basis;
    (basis, coords)
}

/// State of the Newton-basis greedy iteration on a fixed training set.
struct Greedy<'a> {
    pts: Vec<[f64; 2]>,
    config: &'a KernelConfig,
    shift: f64,
    /// `N × n` Newton basis values at training points.
    newton: Vec<DVector<f64>>,
    /// Newton coefficients, one `d_out` row per center.
    coeff_rows: Vec<DVector<f64>>,
    /// `d_out × N`, one column per training point.
    residual: DMatrix<f64>,
    res_norm2: Vec<f64>,
    power2: Vec<f64>,
    selected: Vec<usize>,
    is_selected: Vec<bool>,
}

impl<'a> Greedy<'a> {
    fn new(pts: Vec<[f64; 2]>, y: &DMatrix<f64>, config: &'a KernelConfig) -> Self {
        let n = pts.len();
        let shift = n as f64 * config.lambda_reg;
        let residual = y.transpose();
        let res_norm2 = residual.column_iter().map(|r| r.norm_squared()).collect();
        Self {
            pts,
            config,
            shift,
            newton: Vec::new(),
            coeff_rows: Vec::new(),
            residual,
            res_norm2,
            power2: vec![1.0 + shift; n],
            selected: Vec::new(),
            is_selected: vec![false; n],
        }
    }

    fn max_residual(&self) -> f64 {
        self.res_norm2.iter().fold(0.0_f64, |m, &r| m.max(r)).sqrt()
    }

    /// Largest residual among unselected points whose power function is
    /// above the floor; ties go to the lowest index.
    fn next_candidate(&self, floor2: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..self.pts.len() {
            if self.is_selected[i] || self.power2[i] <= floor2 {
                continue;
            }
            if best.is_none_or(|b| self.res_norm2[i] > self.res_norm2[b]) {
                best = Some(i);
            }
        }
        best
    }

    fn add(&mut self, pick: usize) {
        let g = self.config.shape_gamma;
        let n_train = self.pts.len();
        let p = self.power2[pick].max(0.0).sqrt();
        let xp = self.pts[pick];
        let mut col = DVector::from_iterator(n_train, self.pts.iter().map(|x| gaussian(g, x, &xp)));
        col[pick] += self.shift;
        for v in &self.newton {
            let w = v[pick];
            col.axpy(-w, v, 1.0);
        }
        col /= p;

        let c = self.residual.column(pick) / p;
        for i in 0..n_train {
            let vi = col[i];
            if vi != 0.0 {
                self.residual.column_mut(i).axpy(-vi, &c, 1.0);
            }
            self.res_norm2[i] = self.residual.column(i).norm_squared();
            self.power2[i] -= vi * vi;
        }
        self.res_norm2[pick] = 0.0;
        self.power2[pick] = 0.0;
        self.newton.push(col);
        self.coeff_rows.push(c);
        self.selected.push(pick);
        self.is_selected[pick] = true;
    }

    fn into_model(self, output_basis: Option<DMatrix<f64>>, stop_reason: StopReason, residual_history: Vec<f64>) -> KernelModel {
        let n = self.selected.len();
        let width = self.residual.nrows();
        let d_out = output_basis.as_ref().map_or(width, |w| w.nrows());
        let newton_factor = DMatrix::from_fn(n, n, |i, j| if j <= i { self.newton[j][self.selected[i]] } else { 0.0 });
        let newton_coeffs = DMatrix::from_fn(n, width, |i, j| self.coeff_rows[i][j]);
        let coefficients = if n == 0 {
            DMatrix::zeros(0, width)
        } else {
            newton_factor
                .tr_solve_lower_triangular(&newton_coeffs)
                .expect("Newton factor has positive diagonal")
        };
        KernelModel {
            centers: self.selected.iter().map(|&i| self.pts[i]).collect(),
            center_indices: self.selected,
            coefficients,
            output_basis,
            newton_factor,
            config: *self.config,
            d_out,
            num_train: self.pts.len(),
            stop_reason,
            residual_history,
        }
    }
}

/// f-greedy fit starting from the empty center set.
pub fn fit_fgreedy(x: &[Parameter], y: &DMatrix<f64>, config: &KernelConfig) -> Result<KernelModel> {
    let pts = check_training(x, y, config)?;
    let y_max = y.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    let tol = config.greedy_tol * y_max;
    let floor2 = (POWER_FLOOR * POWER_FLOOR) * (1.0 + x.len() as f64 * config.lambda_reg);

    let (targets, output_basis) = prepare_targets(y, config);
    let mut greedy = Greedy::new(pts, &targets, config);
    let mut history = vec![greedy.max_residual()];
    let stop = loop {
        if greedy.max_residual() <= tol {
            break StopReason::Converged;
        }
        if greedy.selected.len() == config.max_points {
            break StopReason::MaxPoints;
        }
        if greedy.selected.len() == x.len() {
            break StopReason::Exhausted;
        }
        match greedy.next_candidate(floor2) {
            Some(pick) => {
                greedy.add(pick);
                history.push(greedy.max_residual());
            }
            None => break StopReason::PowerFloor,
        }
    };
    Ok(greedy.into_model(output_basis, stop, history))
}

fn prepare_targets(y: &DMatrix<f64>, config: &KernelConfig) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    if config.output_tol > 0.0 {
        let (basis, coords) = compress_outputs(y, config.output_tol);
        (coords, Some(basis))
    } else {
        (y.clone(), None)
    }
}

/// Fits on a prescribed center sequence (training indices, in order).
pub fn fit_with_centers(x: &[Parameter], y: &DMatrix<f64>, centers: &[usize], config: &KernelConfig) -> Result<KernelModel> {
    let pts = check_training(x, y, config)?;
    let (targets, output_basis) = prepare_targets(y, config);
    let mut greedy = Greedy::new(pts, &targets, config);
    let mut history = vec![greedy.max_residual()];
    for &c in centers {
        if c >= x.len() || greedy.is_selected[c] {
            return Err(Error::InvalidArgument(format!("invalid or repeated center index {c}")));
        }
        if greedy.power2[c] <= 0.0 {
            return Err(Error::InvalidArgument(format!("center {c} is numerically dependent")));
        }
        greedy.add(c);
        history.push(greedy.max_residual());
    }
    let stop = if centers.len() == x.len() { StopReason::Exhausted } else { StopReason::MaxPoints };
    Ok(greedy.into_model(output_basis, stop, history))
}

/// `Σ_j α_j k(x̂, c_j)`; cost `O(n · d_out)`, or `O(n · r + r · d_out)` with
/// an output basis of rank `r`.
pub fn predict(model: &KernelModel, mu: &Parameter) -> Vec<f64> {
    if model.centers.is_empty() {
        return vec![0.0; model.d_out];
    }
    let x = model.config.normalization.apply(mu);
    let kv = model.kernel_vector(&x);
    let coords = model.coefficients.tr_mul(&kv);
    match &model.output_basis {
        Some(w) => (w * coords).as_slice().to_vec(),
        None => coords.as_slice().to_vec(),
    }
}

/// `sqrt(k(x̂, x̂) − Σ_j v_j(x̂)²)` with `v` the Newton basis values.
pub fn power_function(model: &KernelModel, mu: &Parameter) -> f64 {
    let x = model.config.normalization.apply(mu);
    let kxx = gaussian(model.config.shape_gamma, &x, &x);
    if model.centers.is_empty() {
        return kxx.sqrt();
    }
    let kv = model.kernel_vector(&x);
    let v = model
        .newton_factor
        .solve_lower_triangular(&kv)
        .expect("Newton factor has positive diagonal");
    (kxx - v.norm_squared()).max(0.0).sqrt()
}

/// `(1/N) Σ ‖y_i − f(μ_i)‖² + λ trace(αᵀ K α)`.
pub fn loss(model: &KernelModel, x: &[Parameter], y: &DMatrix<f64>) -> Result<f64> {
    if x.len() != y.nrows() || y.ncols() != model.d_out {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs, targets {}×{}, model output {}",
            x.len(),
            y.nrows(),
            y.ncols(),
            model.d_out
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("loss needs at least one pair".into()));
    }
    let data: f64 = x
        .iter()
        .zip(y.row_iter())
        .map(|(p, row)| {
            let f = predict(model, p);
            row.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum::<f64>()
        / x.len() as f64;
    let rkhs = if model.centers.is_empty() {
        0.0
    } else {
        let k_alpha = model.center_kernel_matrix() * &model.coefficients;
        model.coefficients.dot(&k_alpha)
    };
    Ok(data + model.config.lambda_reg * rkhs)
}

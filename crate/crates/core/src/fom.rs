//! Full-order model: P1 finite elements on a uniform grid of Ω = (0, 1) with
//! implicit Euler time stepping.
//!
//! The model problem is
//!
//! ```text
//! ∂t c − c'' + Pe (u c)' + Da c = 0   in (0, 1) × (0, T),   u = 1
//! c(0, t) = 1,   c'(1, t) = 0,   c(x, 0) = 0
//! ```
//!
//! Evolution is carried out for the shifted state `c − g`, where the lift `g`
//! is the nodal hat function at `x = 0`. Operators are kept in affine form so
//! every parameter value only costs a few vector operations to evaluate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Tridiagonal, TridiagonalLu};

/// A point `(Da, Pe)` of the parameter space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parameter {
    /// Damköhler number (reaction coefficient).
    pub da: f64,
    /// Péclet number (convection coefficient).
    pub pe: f64,
}

impl Parameter {
    pub fn new(da: f64, pe: f64) -> Result<Self> {
        if !(da.is_finite() && pe.is_finite()) || da < 0.0 || pe < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Da and Pe must be finite and nonnegative, got Da={da}, Pe={pe}"
            )));
        }
        Ok(Self { da, pe })
    }
}

impl std::fmt::Display for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(Da={}, Pe={})", self.da, self.pe)
    }
}

/// Axis-aligned box of admissible parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParameterDomain {
    pub lower: Parameter,
    pub upper: Parameter,
}

impl ParameterDomain {
    pub fn new(lower: Parameter, upper: Parameter) -> Result<Self> {
        if lower.da > upper.da || lower.pe > upper.pe {
            return Err(Error::InvalidParameter(format!(
                "box lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[1e-3, 1]²`, the diffusion-dominated regime.
    pub fn diffusion_dominated() -> Self {
        Self {
            lower: Parameter { da: 1e-3, pe: 1e-3 },
            upper: Parameter { da: 1.0, pe: 1.0 },
        }
    }

    pub fn contains(&self, mu: &Parameter) -> bool {
        (self.lower.da..=self.upper.da).contains(&mu.da) && (self.lower.pe..=self.upper.pe).contains(&mu.pe)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.da == self.upper.da || self.lower.pe == self.upper.pe
    }
}

/// Uniform grid of `(0, 1)` with `num_intervals` elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid1D {
    pub num_intervals: usize,
}

impl Grid1D {
    pub fn new(num_intervals: usize) -> Result<Self> {
        if num_intervals < 2 {
            return Err(Error::GridTooCoarse(num_intervals));
        }
        Ok(Self { num_intervals })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.num_intervals as f64
    }

    /// Number of nodes, `N_h`.
    pub fn num_nodes(&self) -> usize {
        self.num_intervals + 1
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.num_nodes()).map(|i| i as f64 * h).collect()
    }
}

/// Parameter-independent pieces of the discrete problem.
///
/// Matrices and vectors are indexed by all `N_h` nodes. Load vectors are
/// zero on the Dirichlet node, so they can be used on full-length vectors
/// whose Dirichlet entry vanishes.
#[derive(Clone, Debug)]
pub struct AffineOperatorSet {
    pub grid: Grid1D,
    /// L² product, `∫ c v`.
    pub mass: Tridiagonal,
    /// `∫ c' v'`
    pub a_diff: Tridiagonal,
    /// `−∫ c v' + c(1) v(1)`, scaled by Pe.
    pub a_conv: Tridiagonal,
    /// `∫ c v`, scaled by Da.
    pub a_reac: Tridiagonal,
    pub rhs_diff: Vec<f64>,
    pub rhs_conv: Vec<f64>,
    pub rhs_reac: Vec<f64>,
    /// Point evaluation at `x = 1`.
    pub qoi_vector: Vec<f64>,
    /// Full H¹ product, mass plus stiffness.
    pub h1_product: Tridiagonal,
    pub dirichlet_dofs: Vec<usize>,
    /// Nodal values of the Dirichlet lift.
    pub lift: Vec<f64>,
}

/// Evaluated operator and load on the free DoFs.
#[derive(Clone, Debug)]
pub struct AffineSystem {
    pub matrix: Tridiagonal,
    pub load: Vec<f64>,
}

/// Assembles all affine components with exact P1 element integrals.
pub fn assemble(grid: Grid1D) -> Result<AffineOperatorSet> {
    let grid = Grid1D::new(grid.num_intervals)?;
    let n = grid.num_nodes();
    let h = grid.h();

    let mut mass = Tridiagonal::zeros(n);
    let mut a_diff = Tridiagonal::zeros(n);
    let mut a_conv = Tridiagonal::zeros(n);

    // element matrices, rows are test functions
    let local_mass = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    let local_diff = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    let local_conv = [[0.5, 0.5], [-0.5, -0.5]];
    for e in 0..grid.num_intervals {
        for a in 0..2 {
            for b in 0..2 {
                mass.add_to(e + a, e + b, local_mass[a][b]);
                a_diff.add_to(e + a, e + b, local_diff[a][b]);
                a_conv.add_to(e + a, e + b, local_conv[a][b]);
            }
        }
    }
    // outflow boundary term (u·n) c v at x = 1
    a_conv.add_to(n - 1, n - 1, 1.0);

    let a_reac = mass.clone();
    let h1_product = mass.add_scaled(1.0, &a_diff);

    let dirichlet_dofs = vec![0];
    let mut lift = vec![0.0; n];
    lift[0] = 1.0;

    let lift_load = |op: &Tridiagonal| -> Vec<f64> {
        let mut v: Vec<f64> = op.mul_vec(&lift).into_iter().map(|x| -x).collect();
        for &d in &dirichlet_dofs {
            v[d] = 0.0;
        }
        v
    };
    let rhs_diff = lift_load(&a_diff);
    let rhs_conv = lift_load(&a_conv);
    let rhs_reac = lift_load(&a_reac);

    let mut qoi_vector = vec![0.0; n];
    qoi_vector[n - 1] = 1.0;

    Ok(AffineOperatorSet {
        grid,
        mass,
        a_diff,
        a_conv,
        a_reac,
        rhs_diff,
        rhs_conv,
        rhs_reac,
        qoi_vector,
        h1_product,
        dirichlet_dofs,
        lift,
    })
}

impl AffineOperatorSet {
    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    /// Index of the first free DoF; the only constrained node is `x = 0`.
    pub fn first_free(&self) -> usize {
        self.dirichlet_dofs.len()
    }

    pub fn num_free(&self) -> usize {
        self.num_nodes() - self.first_free()
    }

    /// `A_μ = a_diff + Pe a_conv + Da a_reac` on all nodes.
    pub fn full_operator(&self, mu: &Parameter) -> Tridiagonal {
        self.a_diff.add_scaled(mu.pe, &self.a_conv).add_scaled(mu.da, &self.a_reac)
    }

    /// `l_μ = rhs_diff + Pe rhs_conv + Da rhs_reac` on all nodes.
    pub fn full_load(&self, mu: &Parameter) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|i| self.rhs_diff[i] + mu.pe * self.rhs_conv[i] + mu.da * self.rhs_reac[i])
            .collect()
    }

    /// Evaluates `A_μ` and `l_μ` restricted to the free DoFs.
    pub fn operator_at(&self, mu: &Parameter) -> AffineSystem {
        let k = self.first_free();
        AffineSystem {
            matrix: self.full_operator(mu).trailing_block(k),
            load: self.full_load(mu)[k..].to_vec(),
        }
    }

    /// Shifted initial state on all nodes: `c_0 − g` with `c_0 = 0`,
    /// zero on the Dirichlet node.
    pub fn shifted_initial_state(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.lift.iter().map(|g| -g).collect();
        for &d in &self.dirichlet_dofs {
            s[d] = 0.0;
        }
        s
    }

    /// QoI contribution of the lift, `s(g)`.
    pub fn qoi_lift_offset(&self) -> f64 {
        self.qoi_vector.iter().zip(&self.lift).map(|(q, g)| q * g).sum()
    }
}

/// Uniform time grid `t_n = n T / N_T`, `n = 0..=N_T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub num_steps: usize,
    pub t_end: f64,
}

impl TimeGrid {
    pub fn new(num_steps: usize, t_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidArgument("num_steps must be positive".into()));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
        }
        Ok(Self { num_steps, t_end })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.num_steps as f64
    }

    pub fn num_points(&self) -> usize {
        self.num_steps + 1
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.num_points()).map(|n| n as f64 * dt).collect()
    }
}

/// Shifted states at all time points together with the breakthrough curve.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `N_h × (N_T + 1)`, one column per time point.
    pub states: DMatrix<f64>,
    pub times: Vec<f64>,
    pub qoi: Vec<f64>,
    pub mu: Parameter,
}

/// Implicit Euler driver; the system matrix is factored once per parameter.
///
/// `visit` sees the time index and the shifted state on the free DoFs for
/// every time point, including `t_0`. Returns the QoI series.
pub fn integrate<F>(ops: &AffineOperatorSet, mu: &Parameter, time: TimeGrid, mut visit: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    let mu = Parameter::new(mu.da, mu.pe)?;
    let k = ops.first_free();
    let dt = time.dt();
    let system = ops.operator_at(&mu);
    let mass = ops.mass.trailing_block(k).scaled(1.0 / dt);
    let lu = TridiagonalLu::factor(&mass.add_scaled(1.0, &system.matrix))?;

    let q = &ops.qoi_vector[k..];
    let offset = ops.qoi_lift_offset();
    let eval_qoi = |state: &[f64]| -> f64 { offset + q.iter().zip(state).map(|(a, b)| a * b).sum::<f64>() };

    let mut state = ops.shifted_initial_state()[k..].to_vec();
    let mut rhs = vec![0.0; state.len()];
    let mut qoi = Vec::with_capacity(time.num_points());
    qoi.push(eval_qoi(&state));
    visit(0, &state)?;
    for step in 1..=time.num_steps {
        mass.mul_into(&state, &mut rhs);
        for (r, l) in rhs.iter_mut().zip(&system.load) {
            *r += l;
        }
        lu.solve_in_place(&mut rhs);
        std::mem::swap(&mut state, &mut rhs);
        let value = eval_qoi(&state);
        // a non-finite entry anywhere reaches the last node through the forward sweep
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("FOM state at step {step} for {mu}")));
        }
        qoi.push(value);
        visit(step, &state)?;
    }
    Ok(qoi)
}

/// Runs the FOM and stores every shifted state.
pub fn solve_fom(ops: &AffineOperatorSet, mu: &Parameter, num_steps: usize, t_end: f64) -> Result<Trajectory> {
    let time = TimeGrid::new(num_steps, t_end)?;
    let k = ops.first_free();
    let mut states = DMatrix::zeros(ops.num_nodes(), time.num_points());
    let qoi = integrate(ops, mu, time, |n, s| {
        states.column_mut(n).as_mut_slice()[k..].copy_from_slice(s);
        Ok(())
    })?;
    Ok(Trajectory {
        states,
        times: time.times(),
        qoi,
        mu: *mu,
    })
}

/// Runs the FOM and only returns the breakthrough curve.
pub fn fom_output(ops: &AffineOperatorSet, mu: &Parameter, time: TimeGrid) -> Result<Vec<f64>> {
    integrate(ops, mu, time, |_, _| Ok(()))
}

/// Runs the FOM, handing the shifted states (all nodes) to `on_chunk` in
/// blocks of at most `chunk_size` columns. Returns the QoI series.
pub fn solve_fom_chunked<F>(
    ops: &AffineOperatorSet,
    mu: &Parameter,
    time: TimeGrid,
    chunk_size: usize,
    mut on_chunk: F,
) -> Result<Vec<f64>>
where
    F: FnMut(DMatrix<f64>) -> Result<()>,
{
    if chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    let n_nodes = ops.num_nodes();
    let k = ops.first_free();
    let total = time.num_points();
    let mut chunk: Option<DMatrix<f64>> = None;
    let mut filled = 0;
    let qoi = integrate(ops, mu, time, |n, s| {
        let buf = chunk.get_or_insert_with(|| DMatrix::zeros(n_nodes, chunk_size.min(total - n)));
        buf.column_mut(filled).as_mut_slice()[k..].copy_from_slice(s);
        filled += 1;
        if filled == buf.ncols() {
            filled = 0;
            on_chunk(chunk.take().unwrap())?;
        }
        Ok(())
    })?;
    Ok(qoi)
}

/// Number of chunks [`solve_fom_chunked`] produces for one trajectory.
pub fn chunks_per_trajectory(time: TimeGrid, chunk_size: usize) -> usize {
    time.num_points().div_ceil(chunk_size.max(1))
}

/// `c(1)` for the stationary problem `−c'' + Pe c' + Da c = 0`, `c(0) = 1`,
/// `c'(1) = 0`.
///
/// With roots `r₁,₂ = (Pe ± √(Pe² + 4 Da)) / 2` of the characteristic
/// polynomial the outflow value is `(r₂ − r₁) e^{r₁ + r₂} / (r₂ e^{r₂} − r₁ e^{r₁})`.
/// For `Da = 0` the steady state is constant.
pub fn steady_qoi_oracle(mu: &Parameter) -> f64 {
    if mu.da == 0.0 {
        return 1.0;
    }
    let disc = (mu.pe * mu.pe + 4.0 * mu.da).sqrt();
    let r1 = 0.5 * (mu.pe + disc);
    let r2 = 0.5 * (mu.pe - disc);
    // divide through by e^{r1} to keep the exponentials bounded
    (r2 - r1) * r2.exp() / (r2 * (r2 - r1).exp() - r1)
}

/// Relative discrete l² error `‖a − b‖ / ‖b‖`.
pub fn qoi_error(f_a: &[f64], f_b: &[f64]) -> Result<f64> {
    if f_a.len() != f_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "QoI series have lengths {} and {}",
            f_a.len(),
            f_b.len()
        )));
    }
    let denom = norm2(f_b);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let diff: f64 = f_a.iter().zip(f_b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(diff / denom)
}

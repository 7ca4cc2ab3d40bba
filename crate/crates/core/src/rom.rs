//! Galerkin reduced-order model.
//!
//! [`project`] computes every `N_h`-dependent quantity once; afterwards
//! [`solve_rom`] works on `N_rb`-sized arrays only.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fom::{AffineOperatorSet, Parameter, TimeGrid};
use crate::linalg::{dense_solve, Tridiagonal};
use crate::pod::ReducedBasis;

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOperatorSet {
    pub mass: DMatrix<f64>,
    pub a_diff: DMatrix<f64>,
    pub a_conv: DMatrix<f64>,
    pub a_reac: DMatrix<f64>,
    pub rhs_diff: DVector<f64>,
    pub rhs_conv: DVector<f64>,
    pub rhs_reac: DVector<f64>,
    pub qoi: DVector<f64>,
    /// `s(g)`; zero for the hat-function lift.
    pub qoi_lift_offset: f64,
    /// Product-orthogonal projection of the shifted initial state.
    pub initial_state: DVector<f64>,
    /// Hex SHA-256 prefix of the basis the operators were projected on.
    pub basis_digest: String,
}

fn project_matrix(op: &Tridiagonal, basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis.transpose() * op.mul_mat(basis)
}

fn project_vector(v: &[f64], basis: &DMatrix<f64>) -> DVector<f64> {
    basis.transpose() * DVector::from_column_slice(v)
}

pub fn basis_digest(basis: &DMatrix<f64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update((basis.nrows() as u64).to_le_bytes());
    hasher.update((basis.ncols() as u64).to_le_bytes());
    for v in basis.iter() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Galerkin projection of all affine components, loads and the QoI.
pub fn project(ops: &AffineOperatorSet, basis: &ReducedBasis) -> Result<ReducedOperatorSet> {
    let v = &basis.basis;
    if v.nrows() != ops.num_nodes() || basis.product.size() != ops.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, FOM has {} nodes",
            v.nrows(),
            ops.num_nodes()
        )));
    }
    for &d in &ops.dirichlet_dofs {
        if v.row(d).iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "basis modes must vanish on Dirichlet node {d}"
            )));
        }
    }

    let n = v.ncols();
    let initial_state = if n == 0 {
        DVector::zeros(0)
    } else {
        let gram = basis.gram();
        let rhs = v.transpose() * DVector::from_vec(basis.product.mul_vec(&ops.shifted_initial_state()));
        dense_solve(gram, &rhs)?
    };

    Ok(ReducedOperatorSet {
        mass: project_matrix(&ops.mass, v),
        a_diff: project_matrix(&ops.a_diff, v),
        a_conv: project_matrix(&ops.a_conv, v),
        a_reac: project_matrix(&ops.a_reac, v),
        rhs_diff: project_vector(&ops.rhs_diff, v),
        rhs_conv: project_vector(&ops.rhs_conv, v),
        rhs_reac: project_vector(&ops.rhs_reac, v),
        qoi: project_vector(&ops.qoi_vector, v),
        qoi_lift_offset: ops.qoi_lift_offset(),
        initial_state,
        basis_digest: basis_digest(v),
    })
}

impl ReducedOperatorSet {
    /// `N_rb`
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn operator_at(&self, mu: &Parameter) -> DMatrix<f64> {
        &self.a_diff + &self.a_conv * mu.pe + &self.a_reac * mu.da
    }

    pub fn load_at(&self, mu: &Parameter) -> DVector<f64> {
        &self.rhs_diff + &self.rhs_conv * mu.pe + &self.rhs_reac * mu.da
    }

    /// Time-stepping map `c ↦ B c + b` of implicit Euler, from a single LU
    /// factorization of `M/Δt + A_μ`.
    fn step_map(&self, mu: &Parameter, dt: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if self.dim() == 0 {
            return Ok((DMatrix::zeros(0, 0), DVector::zeros(0)));
        }
        let scaled_mass = &self.mass / dt;
        let system = &scaled_mass + self.operator_at(mu);
        let lu = system.lu();
        let step = lu.solve(&scaled_mass).ok_or(Error::SingularSystem { row: 0 })?;
        let shift = lu.solve(&self.load_at(mu)).ok_or(Error::SingularSystem { row: 0 })?;
        Ok((step, shift))
    }

    fn check(&self, mu: &Parameter) -> Result<Parameter> {
        Parameter::new(mu.da, mu.pe)
    }
}

/// Reduced implicit Euler; returns the QoI at all `num_steps + 1` time points.
pub fn solve_rom(red: &ReducedOperatorSet, mu: &Parameter, num_steps: usize, t_end: f64) -> Result<Vec<f64>> {
    let mu = red.check(mu)?;
    let time = TimeGrid::new(num_steps, t_end)?;
    let n = red.dim();
    let (step, shift) = red.step_map(&mu, time.dt())?;

    // row-major copy for a tight inner loop
    let b: Vec<f64> = (0..n).flat_map(|i| step.row(i).iter().copied().collect::<Vec<_>>()).collect();
    let q = red.qoi.as_slice();
    let shift = shift.as_slice();
    let mut state = red.initial_state.as_slice().to_vec();
    let mut next = vec![0.0; n];

    let eval = |c: &[f64]| red.qoi_lift_offset + q.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    let mut qoi = Vec::with_capacity(time.num_points());
    qoi.push(eval(&state));
    for _ in 0..num_steps {
        for (i, out) in next.iter_mut().enumerate() {
            let row = &b[i * n..(i + 1) * n];
            *out = shift[i] + row.iter().zip(&state).map(|(a, b)| a * b).sum::<f64>();
        }
        std::mem::swap(&mut state, &mut next);
        qoi.push(eval(&state));
    }
    if qoi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("ROM output for {mu}")));
    }
    Ok(qoi)
}

/// Reduced implicit Euler returning the reduced coefficients at every time
/// point (one column each) alongside the QoI.
pub fn solve_rom_states(red: &ReducedOperatorSet, mu: &Parameter, time: TimeGrid) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mu = red.check(mu)?;
    let (step, shift) = red.step_map(&mu, time.dt())?;
    let mut states = DMatrix::zeros(red.dim(), time.num_points());
    states.set_column(0, &red.initial_state);
    for j in 1..time.num_points() {
        let next = &step * states.column(j - 1) + &shift;
        states.set_column(j, &next);
    }
    let qoi = states.column_iter().map(|c| red.qoi_lift_offset + red.qoi.dot(&c)).collect();
    Ok((states, qoi))
}

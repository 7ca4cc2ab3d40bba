//! Product-orthonormal reduced bases from snapshot data.
//!
//! [`pod`] is the classical method of snapshots on the full Gramian.
//! [`IncHapod`] is the incremental hierarchical approximate POD: snapshots
//! arrive in chunks, each chunk is merged with the current modes scaled by
//! their singular values, and only the compressed modes are carried forward.
//! It never forms a Gramian larger than `(modes + rank of chunk)²`.
//!
//! Truncation uses the relative ℓ²-mean criterion: modes are dropped while
//! the discarded eigenvalue mass stays within `tol² · total energy`, so that
//! `Σ ‖s − Π s‖² ≤ tol² Σ ‖s‖²` over the snapshots.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-14;

/// Default HAPOD split between intermediate and final accuracy.
pub const DEFAULT_OMEGA: f64 = 0.75;

#[derive(Clone, Debug)]
pub struct ReducedBasis {
    /// `N_h × N_rb`, one mode per column.
    pub basis: DMatrix<f64>,
    /// Nonincreasing, positive.
    pub singular_values: Vec<f64>,
    pub product: Tridiagonal,
    /// Tolerance the construction targeted.
    pub tolerance: f64,
}

impl ReducedBasis {
    pub fn empty(dim: usize, product: Tridiagonal, tolerance: f64) -> Self {
        Self {
            basis: DMatrix::zeros(dim, 0),
            singular_values: Vec::new(),
            product,
            tolerance,
        }
    }

    /// Number of modes, `N_rb`.
    pub fn len(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of each mode, `N_h`.
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `VᵀPV`
    pub fn gram(&self) -> DMatrix<f64> {
        self.basis.transpose() * self.product.mul_mat(&self.basis)
    }

    /// Largest entry of `|VᵀPV − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.len();
        (self.gram() - DMatrix::<f64>::identity(n, n)).amax()
    }
}

fn check_inputs(dim: usize, product: &Tridiagonal, tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("POD tolerance must be positive, got {tol}")));
    }
    if product.size() != dim {
        return Err(Error::DimensionMismatch(format!(
            "snapshots have {dim} rows, product has size {}",
            product.size()
        )));
    }
    product.check_positive_definite()
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue, with
/// negative round-off clipped to zero.
pub(crate) fn sorted_eigen(gram: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = gram.nrows();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest count `n` such that the eigenvalues beyond `n` sum to at most
/// `budget` and every kept eigenvalue is above the rank cutoff.
pub(crate) fn truncation_rank(eigenvalues: &[f64], budget: f64) -> usize {
    let Some(&largest) = eigenvalues.first() else {
        return 0;
    };
    if largest <= 0.0 {
        return 0;
    }
    let numerical_rank = eigenvalues.iter().take_while(|&&l| l > RANK_CUTOFF * largest).count();
    let mut tail: f64 = eigenvalues[numerical_rank..].iter().sum();
    let mut n = numerical_rank;
    while n > 0 && tail + eigenvalues[n - 1] <= budget {
        tail += eigenvalues[n - 1];
        n -= 1;
    }
    n
}

/// Modified Gram-Schmidt in the `product` inner product, two passes per
/// column. Columns that collapse to round-off are dropped.
pub fn gram_schmidt(vectors: &DMatrix<f64>, product: &Tridiagonal) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(vectors.ncols());
    let mut kept_p: Vec<DVector<f64>> = Vec::with_capacity(vectors.ncols());
    for col in vectors.column_iter() {
        let mut v = col.into_owned();
        let initial = v.dot(&DVector::from_vec(product.mul_vec(v.as_slice()))).sqrt();
        if initial == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for (q, pq) in kept.iter().zip(&kept_p) {
                let c = pq.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let pv = DVector::from_vec(product.mul_vec(v.as_slice()));
        let norm = v.dot(&pv).sqrt();
        if !(norm > 1e-10 * initial) {
            continue;
        }
        kept.push(v / norm);
        kept_p.push(pv / norm);
    }
    if kept.is_empty() {
        DMatrix::zeros(vectors.nrows(), 0)
    } else {
        DMatrix::from_columns(&kept)
    }
}

/// Method of snapshots on the `m × m` Gramian `G = SᵀPS`.
pub fn pod(snapshots: &DMatrix<f64>, product: &Tridiagonal, tol: f64) -> Result<ReducedBasis> {
    if snapshots.ncols() == 0 {
        return Err(Error::InvalidArgument("POD needs at least one snapshot".into()));
    }
    check_inputs(snapshots.nrows(), product, tol)?;
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix".into()));
    }

    let gram = snapshots.transpose() * product.mul_mat(snapshots);
    let (values, vectors) = sorted_eigen(gram);
    let total: f64 = values.iter().sum();
    let n = truncation_rank(&values, tol * tol * total);
    if n == 0 {
        return Ok(ReducedBasis::empty(snapshots.nrows(), product.clone(), tol));
    }

    let mut modes = snapshots * vectors.columns(0, n);
    for (j, mut col) in modes.column_iter_mut().enumerate() {
        col /= values[j].sqrt();
    }
    let basis = gram_schmidt(&modes, product);
    let n = basis.ncols();
    Ok(ReducedBasis {
        basis,
        singular_values: values[..n].iter().map(|v| v.sqrt()).collect(),
        product: product.clone(),
        tolerance: tol,
    })
}

/// Streaming incremental HAPOD.
///
/// With `K` announced chunks, every intermediate merge may discard
/// `(1 − ω²) tol² E_seen / K` of energy and the final compression
/// `ω² tol² E_seen`, where `E_seen` is the energy of all snapshots pushed so
/// far. The discarded amounts therefore add up to at most `tol² E_total`.
#[derive(Debug)]
pub struct IncHapod {
    product: Tridiagonal,
    tol: f64,
    omega: f64,
    expected_chunks: usize,
    pushed: usize,
    modes: DMatrix<f64>,
    singular_values: Vec<f64>,
    energy_seen: f64,
    discarded: f64,
    snapshots_seen: usize,
}

impl IncHapod {
    pub fn new(product: Tridiagonal, tol: f64, omega: f64, expected_chunks: usize) -> Result<Self> {
        check_inputs(product.size(), &product, tol)?;
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::InvalidArgument(format!("HAPOD omega must lie in (0, 1), got {omega}")));
        }
        if expected_chunks == 0 {
            return Err(Error::InvalidArgument("HAPOD needs at least one chunk".into()));
        }
        let dim = product.size();
        Ok(Self {
            product,
            tol,
            omega,
            expected_chunks,
            pushed: 0,
            modes: DMatrix::zeros(dim, 0),
            singular_values: Vec::new(),
            energy_seen: 0.0,
            discarded: 0.0,
            snapshots_seen: 0,
        })
    }

    /// Current number of carried modes.
    pub fn num_modes(&self) -> usize {
        self.modes.ncols()
    }

    pub fn snapshots_seen(&self) -> usize {
        self.snapshots_seen
    }

    /// Energy discarded so far, in squared product norm.
    pub fn discarded_energy(&self) -> f64 {
        self.discarded
    }

    pub fn push(&mut self, chunk: &DMatrix<f64>) -> Result<()> {
        if chunk.nrows() != self.product.size() {
            return Err(Error::DimensionMismatch(format!(
                "chunk has {} rows, product has size {}",
                chunk.nrows(),
                self.product.size()
            )));
        }
        if self.pushed == self.expected_chunks {
            return Err(Error::TooManyChunks(self.expected_chunks));
        }
        self.pushed += 1;
        if chunk.ncols() == 0 {
            return Ok(());
        }
        if chunk.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("snapshot chunk".into()));
        }
        self.snapshots_seen += chunk.ncols();

        let p_chunk = self.product.mul_mat(chunk);
        let chunk_energy: f64 = chunk.iter().zip(p_chunk.iter()).map(|(a, b)| a * b).sum();
        self.energy_seen += chunk_energy;
        if chunk_energy == 0.0 {
            return Ok(());
        }
        let budget = (1.0 - self.omega * self.omega) * self.tol * self.tol * self.energy_seen / self.expected_chunks as f64;

        // split the chunk into its component along the current modes and a
        // P-orthogonal remainder
        let r = self.modes.ncols();
        let mut coeffs = self.modes.transpose() * &p_chunk;
        let mut remainder = chunk - &self.modes * &coeffs;
        let correction = self.modes.transpose() * self.product.mul_mat(&remainder);
        remainder -= &self.modes * &correction;
        coeffs += correction;

        let (new_dirs, new_coeffs, dropped) = self.compress_remainder(remainder, budget / 2.0);

        // core matrix [[Σ, C], [0, R]] of size (r + k) × (r + m)
        let k = new_dirs.ncols();
        let m = chunk.ncols();
        let mut core = DMatrix::zeros(r + k, r + m);
        for (i, s) in self.singular_values.iter().enumerate() {
            core[(i, i)] = *s;
        }
        core.view_mut((0, r), (r, m)).copy_from(&coeffs);
        core.view_mut((r, r), (k, m)).copy_from(&new_coeffs);

        let (values, vectors) = sorted_eigen(&core * core.transpose());
        let n = truncation_rank(&values, (budget - dropped).max(0.0));
        let tail: f64 = values[n..].iter().sum();
        self.discarded += dropped + tail;

        let mut frame = DMatrix::zeros(self.product.size(), r + k);
        frame.columns_mut(0, r).copy_from(&self.modes);
        frame.columns_mut(r, k).copy_from(&new_dirs);
        self.modes = frame * vectors.columns(0, n);
        self.singular_values = values[..n].iter().map(|v| v.sqrt()).collect();
        Ok(())
    }

    /// Column-pivoted Gram-Schmidt of the remainder, stopped once the energy
    /// left in the columns is within `drop_budget` (or at round-off level).
    /// Returns the orthonormal directions, their coefficients and the energy
    /// left behind.
    fn compress_remainder(&self, mut rem: DMatrix<f64>, drop_budget: f64) -> (DMatrix<f64>, DMatrix<f64>, f64) {
        let m = rem.ncols();
        let mut p_rem = self.product.mul_mat(&rem);
        let mut energies: Vec<f64> = (0..m).map(|j| rem.column(j).dot(&p_rem.column(j))).collect();
        let scale = energies.iter().fold(0.0_f64, |a, &b| a.max(b));
        let max_rank = m.min(self.product.size());

        let mut dirs: Vec<DVector<f64>> = Vec::new();
        let mut p_dirs: Vec<DVector<f64>> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        loop {
            let remaining: f64 = energies.iter().map(|e| e.max(0.0)).sum();
            let (pivot, &largest) = match energies.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
                Some(p) => p,
                None => break,
            };
            if remaining <= drop_budget || largest <= RANK_CUTOFF * RANK_CUTOFF * scale || dirs.len() == max_rank {
                break;
            }
            let mut q = rem.column(pivot).into_owned();
            // second pass against earlier directions and carried modes
            for (d, pd) in dirs.iter().zip(&p_dirs) {
                let c = pd.dot(&q);
                q.axpy(-c, d, 1.0);
            }
            if self.modes.ncols() > 0 {
                let pq = DVector::from_vec(self.product.mul_vec(q.as_slice()));
                let c = self.modes.transpose() * pq;
                q -= &self.modes * c;
            }
            let mut pq = DVector::from_vec(self.product.mul_vec(q.as_slice()));
            let norm = q.dot(&pq).sqrt();
            if !(norm > 0.0) {
                break;
            }
            q /= norm;
            pq /= norm;

            let mut row = vec![0.0; m];
            for j in 0..m {
                let c = pq.dot(&rem.column(j));
                row[j] = c;
                rem.column_mut(j).axpy(-c, &q, 1.0);
                p_rem.column_mut(j).axpy(-c, &pq, 1.0);
                energies[j] = rem.column(j).dot(&p_rem.column(j));
            }
            dirs.push(q);
            p_dirs.push(pq);
            rows.push(row);
        }
        let dropped = energies.iter().map(|e| e.max(0.0)).sum();
        let dim = self.product.size();
        let dirs = if dirs.is_empty() { DMatrix::zeros(dim, 0) } else { DMatrix::from_columns(&dirs) };
        let coeffs = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        (dirs, coeffs, dropped)
    }

    /// Final compression with tolerance `ω · tol`; returns the basis.
    pub fn finish(self) -> Result<ReducedBasis> {
        let dim = self.product.size();
        let energies: Vec<f64> = self.singular_values.iter().map(|s| s * s).collect();
        let budget = self.omega * self.omega * self.tol * self.tol * self.energy_seen;
        let n = truncation_rank(&energies, budget);
        if n == 0 {
            return Ok(ReducedBasis::empty(dim, self.product, self.tol));
        }
        let basis = gram_schmidt(&self.modes.columns(0, n).into_owned(), &self.product);
        let n = basis.ncols();
        Ok(ReducedBasis {
            basis,
            singular_values: self.singular_values[..n].to_vec(),
            product: self.product,
            tolerance: self.tol,
        })
    }
}

/// Incremental HAPOD over an in-memory sequence of chunks.
pub fn inc_hapod(chunks: &[DMatrix<f64>], product: &Tridiagonal, tol: f64, omega: f64) -> Result<ReducedBasis> {
    if chunks.is_empty() {
        return Err(Error::InvalidArgument("HAPOD needs at least one chunk".into()));
    }
    let mut hapod = IncHapod::new(product.clone(), tol, omega, chunks.len())?;
    for c in chunks {
        hapod.push(c)?;
    }
    hapod.finish()
}

/// Relative ℓ²-mean projection error
/// `sqrt(Σ ‖s − VVᵀPs‖²_P / Σ ‖s‖²_P)`; zero for an all-zero snapshot set.
pub fn projection_error(snapshots: &DMatrix<f64>, basis: &ReducedBasis, product: &Tridiagonal) -> Result<f64> {
    if snapshots.nrows() != basis.dim() || product.size() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "snapshots have {} rows, basis {} and product {}",
            snapshots.nrows(),
            basis.dim(),
            product.size()
        )));
    }
    let p_snap = product.mul_mat(snapshots);
    let total: f64 = snapshots.iter().zip(p_snap.iter()).map(|(a, b)| a * b).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let coeffs = basis.basis.transpose() * &p_snap;
    let residual = snapshots - &basis.basis * coeffs;
    let p_res = product.mul_mat(&residual);
    let err: f64 = residual.iter().zip(p_res.iter()).map(|(a, b)| a * b).sum();
    Ok((err.max(0.0) / total).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_like(n: usize) -> Tridiagonal {
        Tridiagonal::new(vec![-0.5; n - 1], vec![2.0; n], vec![-0.5; n - 1]).unwrap()
    }

    #[test]
    fn single_snapshot_is_normalized() {
        let p = laplace_like(4);
        let s = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, -1.0, 0.5]);
        let rb = pod(&s, &p, 1e-6).unwrap();
        assert_eq!(rb.len(), 1);
        let norm = p.bilinear(s.as_slice(), s.as_slice()).sqrt();
        let expected = &s / norm;
        let sign = rb.basis[(0, 0)].signum();
        assert!((rb.basis.column(0) * sign - expected.column(0)).amax() < 1e-14);
        assert!((rb.singular_values[0] - norm).abs() < 1e-12);
    }

    #[test]
    fn identical_copies_give_rank_one() {
        let p = laplace_like(5);
        let v = [0.3, -1.0, 2.0, 0.1, 0.7];
        let s = DMatrix::from_fn(5, 5, |i, _| v[i]);
        for tol in [1e-1, 1e-6, 1e-12] {
            assert_eq!(pod(&s, &p, tol).unwrap().len(), 1);
        }
    }

    #[test]
    fn orthogonal_pair_keeps_both_modes() {
        let p = Tridiagonal::identity(3);
        let s = DMatrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let rb = pod(&s, &p, 1e-8).unwrap();
        assert_eq!(rb.len(), 2);
        assert!((rb.singular_values[0] - rb.singular_values[1]).abs() < 1e-14);
    }

    #[test]
    fn zero_snapshots_give_empty_basis() {
        let p = laplace_like(3);
        let rb = pod(&DMatrix::zeros(3, 4), &p, 1e-4).unwrap();
        assert!(rb.is_empty());
        let s = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(projection_error(&s, &rb, &p).unwrap(), 1.0);
    }

    #[test]
    fn non_spd_product_rejected() {
        let p = Tridiagonal::new(vec![-3.0; 2], vec![1.0; 3], vec![-3.0; 2]).unwrap();
        let s = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(pod(&s, &p, 1e-4), Err(Error::NotPositiveDefinite { .. })));
        assert!(IncHapod::new(p, 1e-4, 0.75, 1).is_err());
    }

    #[test]
    fn hapod_argument_checks() {
        let p = laplace_like(3);
        assert!(IncHapod::new(p.clone(), 1e-4, 1.0, 2).is_err());
        assert!(IncHapod::new(p.clone(), 0.0, 0.5, 2).is_err());
        assert!(inc_hapod(&[], &p, 1e-4, 0.5).is_err());
        let mut h = IncHapod::new(p, 1e-4, 0.5, 1).unwrap();
        h.push(&DMatrix::from_element(3, 1, 1.0)).unwrap();
        assert!(matches!(h.push(&DMatrix::from_element(3, 1, 1.0)), Err(Error::TooManyChunks(1))));
    }

    #[test]
    fn hapod_skips_empty_chunks() {
        let p = laplace_like(4);
        let v = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let rb = inc_hapod(&[DMatrix::zeros(4, 0), v.clone(), DMatrix::zeros(4, 0)], &p, 1e-6, 0.75).unwrap();
        assert_eq!(rb.len(), 1);
        assert!(projection_error(&v, &rb, &p).unwrap() < 1e-12);
    }

    #[test]
    fn truncation_respects_budget() {
        let ev = [10.0, 1.0, 0.1, 0.01];
        assert_eq!(truncation_rank(&ev, 0.0), 4);
        assert_eq!(truncation_rank(&ev, 0.011), 3);
        assert_eq!(truncation_rank(&ev, 0.11), 2);
        assert_eq!(truncation_rank(&ev, 100.0), 0);
        assert_eq!(truncation_rank(&[1.0, 1e-20], 0.0), 1);
    }
}

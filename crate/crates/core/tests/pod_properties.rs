use cdr_core::fom::{assemble, solve_fom, Grid1D, Parameter};
use cdr_core::linalg::Tridiagonal;
use cdr_core::pod::{inc_hapod, pod, projection_error, IncHapod, ReducedBasis};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn product(n: usize) -> Tridiagonal {
    assemble(Grid1D::new(n - 1).unwrap()).unwrap().h1_product
}

/// Snapshots with a prescribed spectral decay built from random factors.
fn decaying(rows: usize, cols: usize, decay: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    let rank = rows.min(cols);
    let left = DMatrix::from_fn(rows, rank, |_, _| draw());
    let right = DMatrix::from_fn(rank, cols, |_, _| draw());
    let weights = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(rank, |i, _| decay.powi(i as i32)));
    let mut s = left * weights * right;
    s.row_mut(0).fill(0.0);
    s
}

fn split(s: &DMatrix<f64>, width: usize) -> Vec<DMatrix<f64>> {
    (0..s.ncols()).step_by(width).map(|c| s.columns(c, width.min(s.ncols() - c)).into_owned()).collect()
}

/// Largest principal-angle sine between two product-orthonormal bases.
fn subspace_gap(a: &ReducedBasis, b: &ReducedBasis) -> f64 {
    let p = &a.product;
    let mut worst: f64 = 0.0;
    for col in a.basis.column_iter() {
        let c = col.into_owned();
        let coeffs = b.basis.transpose() * nalgebra::DVector::from_vec(p.mul_vec(c.as_slice()));
        let r = &c - &b.basis * coeffs;
        worst = worst.max(p.bilinear(r.as_slice(), r.as_slice()).sqrt());
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    #[test]
    fn tolerance_is_respected(seed in 0u64..1000, tol_exp in 1i32..5, width in 3usize..17) {
        let tol = 10f64.powi(-tol_exp);
        let s = decaying(30, 48, 0.5, seed);
        let prod = product(30);
        let b = pod(&s, &prod, tol).unwrap();
        prop_assert!(projection_error(&s, &b, &prod).unwrap() <= tol * (1.0 + 1e-8));
        let h = inc_hapod(&split(&s, width), &prod, tol, 0.75).unwrap();
        prop_assert!(projection_error(&s, &h, &prod).unwrap() <= tol * (1.0 + 1e-8));
        prop_assert!(b.orthonormality_defect() < 1e-10);
        prop_assert!(h.orthonormality_defect() < 1e-10);
    }

    #[test]
    fn scaling_snapshots_scales_singular_values(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let s = decaying(20, 25, 0.4, seed);
        let prod = product(20);
        let a = pod(&s, &prod, 1e-3).unwrap();
        let b = pod(&(&s * alpha), &prod, 1e-3).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
            prop_assert!((alpha * x - y).abs() <= 1e-9 * y);
        }
        prop_assert!(subspace_gap(&a, &b) < 1e-6);
    }
}

// nothing is discarded from an exactly low-rank chunk, so both routes span it
#[test]
fn single_chunk_matches_pod_subspace() {
    let low = decaying(25, 5, 0.5, 7);
    let mix = decaying(5, 30, 0.9, 8);
    let s = low * DMatrix::from_fn(5, 30, |i, j| mix[(i, j)] + if i == j % 5 { 1.0 } else { 0.0 });
    let prod = product(25);
    let a = pod(&s, &prod, 1e-6).unwrap();
    let b = inc_hapod(std::slice::from_ref(&s), &prod, 1e-6, 0.75).unwrap();
    assert_eq!(a.len(), 5);
    assert_eq!(b.len(), 5);
    assert!(subspace_gap(&a, &b) < 1e-8, "{}", subspace_gap(&a, &b));
    assert!(subspace_gap(&b, &a) < 1e-8);
}

#[test]
fn rank_one_stream_gives_one_mode() {
    let prod = product(16);
    let v = DMatrix::from_fn(16, 1, |i, _| if i == 0 { 0.0 } else { (i as f64).sqrt() });
    let chunks: Vec<DMatrix<f64>> = (1..6).map(|k| DMatrix::from_fn(16, 4, |i, j| v[(i, 0)] * (k * 4 + j) as f64)).collect();
    let b = inc_hapod(&chunks, &prod, 1e-6, 0.75).unwrap();
    assert_eq!(b.len(), 1);
}

#[test]
fn zero_snapshots_give_empty_basis() {
    let prod = product(8);
    let b = pod(&DMatrix::zeros(8, 5), &prod, 1e-4).unwrap();
    assert!(b.is_empty());
    let mut h = IncHapod::new(prod, 1e-4, 0.75, 2).unwrap();
    h.push(&DMatrix::zeros(8, 3)).unwrap();
    assert!(h.finish().unwrap().is_empty());
}

#[test]
fn too_many_chunks_rejected() {
    let mut h = IncHapod::new(product(8), 1e-4, 0.75, 1).unwrap();
    h.push(&decaying(8, 3, 0.5, 1)).unwrap();
    assert!(h.push(&decaying(8, 3, 0.5, 2)).is_err());
}

#[test]
fn streamed_trajectories_reach_tolerance() {
    let ops = assemble(Grid1D::new(32).unwrap()).unwrap();
    let mut all = Vec::new();
    for (da, pe) in [(1e-3, 1e-3), (1.0, 1.0)] {
        let traj = solve_fom(&ops, &Parameter::new(da, pe).unwrap(), 300, 3.0).unwrap();
        all.push(traj.states);
    }
    let s = DMatrix::from_fn(33, 602, |i, j| all[j / 301][(i, j % 301)]);
    for tol in [1e-2, 1e-3, 1e-4] {
        let b = inc_hapod(&split(&s, 64), &ops.h1_product, tol, 0.75).unwrap();
        let err = projection_error(&s, &b, &ops.h1_product).unwrap();
        assert!(err <= tol, "tol {tol}: {err}");
        // HAPOD may keep more modes than a global POD, but not twice as many
        let global = pod(&s, &ops.h1_product, tol).unwrap();
        assert!(b.len() >= global.len() && b.len() <= 2 * global.len(), "{} vs {}", b.len(), global.len());
        assert!(b.basis.row(0).iter().all(|&v| v.abs() < 1e-14));
    }
}

#[test]
fn bad_arguments_rejected() {
    let prod = product(8);
    assert!(pod(&DMatrix::zeros(8, 0), &prod, 1e-4).is_err());
    assert!(pod(&DMatrix::zeros(7, 3), &prod, 1e-4).is_err());
    assert!(pod(&DMatrix::zeros(8, 3), &prod, 0.0).is_err());
    assert!(IncHapod::new(prod.clone(), 1e-4, 1.0, 3).is_err());
    assert!(IncHapod::new(prod, 1e-4, 0.5, 0).is_err());
}

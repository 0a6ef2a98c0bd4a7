//! Similarity matrices and the symmetric cross-entropy contrastive loss.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `S[i][j] = left_i . right_j / tau` for row-stacked unit vectors.
pub fn similarity_matrix(
    left: ArrayView2<f64>,
    right: ArrayView2<f64>,
    tau: f64,
) -> Result<Array2<f64>> {
    if left.nrows() != right.nrows() {
        return Err(Error::DimMismatch {
            expected: left.nrows(),
            got: right.nrows(),
            context: "similarity batch size",
        });
    }
    if left.ncols() != right.ncols() {
        return Err(Error::DimMismatch {
            expected: left.ncols(),
            got: right.ncols(),
            context: "similarity embedding dim",
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    Ok(left.dot(&right.t()) / tau)
}

/// Row-wise softmax with max subtraction.
pub fn row_softmax(s: ArrayView2<f64>) -> Array2<f64> {
    let mut out = s.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

/// Mean over rows of `-log softmax(S)_ii`.
fn one_sided(s: ArrayView2<f64>) -> f64 {
    let b = s.nrows();
    let mut acc = 0.0;
    for (i, row) in s.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        acc += lse - row[i];
    }
    acc / b as f64
}

/// Symmetric contrastive loss `(l(S) + l(S^T)) / 2` and its gradient
/// `((P_row - I) + (P_col^T - I)) / (2B)`, where `P_row` is the row softmax
/// of `S` and `P_col` the row softmax of `S^T`.
pub fn contrastive_loss(s: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let b = s.nrows();
    debug_assert_eq!(b, s.ncols());
    let loss = 0.5 * (one_sided(s) + one_sided(s.t()));
    let p_row = row_softmax(s);
    let p_col = row_softmax(s.t());
    let mut grad = p_row + &p_col.t();
    for i in 0..b {
        grad[[i, i]] -= 2.0;
    }
    grad /= 2.0 * b as f64;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn zero_matrix_gives_ln_b() {
        let (l, _) = contrastive_loss(Array2::zeros((4, 4)).view());
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn saturated_diagonal_is_near_zero() {
        let s = Array2::eye(4) * 50.0;
        let (l, _) = contrastive_loss(s.view());
        assert!(l < 1e-6 && l >= 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rng_from(11);
        let s = Array2::from_shape_fn((5, 5), |_| rng.random_range(-3.0..3.0));
        let (_, g) = contrastive_loss(s.view());
        let h = 1e-4;
        for i in 0..5 {
            for j in 0..5 {
                let mut sp = s.clone();
                sp[[i, j]] += h;
                let mut sm = s.clone();
                sm[[i, j]] -= h;
                let fd =
                    (contrastive_loss(sp.view()).0 - contrastive_loss(sm.view()).0) / (2.0 * h);
                let rel = (fd - g[[i, j]]).abs() / g[[i, j]].abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-5, "({i},{j}) fd {fd} analytic {}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn orthonormal_similarity_is_scaled_identity() {
        let e = Array2::<f64>::eye(3);
        let s = similarity_matrix(e.view(), e.view(), 0.1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 10.0 } else { 0.0 };
                assert!((s[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_computed_two_by_two() {
        let r = 0.5f64.sqrt();
        let a = arr2(&[[1.0, 0.0, 0.0], [0.0, r, r]]);
        let t = arr2(&[[r, r, 0.0], [0.0, 0.0, 1.0]]);
        let s = similarity_matrix(a.view(), t.view(), 1.0).unwrap();
        // four dot products by hand
        let want = [[r, 0.0], [0.5, r]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[[i, j]] - want[i][j]).abs() < 1e-12);
            }
        }
        assert!(similarity_matrix(a.view(), t.view(), 0.0).is_err());
        assert!(similarity_matrix(a.view(), t.slice(ndarray::s![..1, ..]), 1.0).is_err());
    }

    fn matrix(b: usize) -> impl Strategy<Value = Array2<f64>> {
        prop::collection::vec(-20.0f64..20.0, b * b)
            .prop_map(move |v| Array2::from_shape_vec((b, b), v).unwrap())
    }

    proptest! {
        #[test]
        fn transpose_symmetry_and_nonnegativity(s in (2usize..7).prop_flat_map(matrix)) {
            let (a, _) = contrastive_loss(s.view());
            let (b, _) = contrastive_loss(s.t());
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn joint_permutation_invariance(
            s in (2usize..7).prop_flat_map(matrix),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let b = s.nrows();
            let mut perm: Vec<usize> = (0..b).collect();
            perm.shuffle(&mut rng_from(seed));
            let p = Array2::from_shape_fn((b, b), |(i, j)| s[[perm[i], perm[j]]]);
            let (l1, _) = contrastive_loss(s.view());
            let (l2, _) = contrastive_loss(p.view());
            prop_assert!((l1 - l2).abs() <= 1e-10);
        }
    }
}

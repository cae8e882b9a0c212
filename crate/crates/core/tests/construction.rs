mod common;

use lmmfit::data::DataTable;
use lmmfit::model::{build_indicator, build_zti, template, BuildOptions, ModelSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn indicator_for_three_levels_of_two() {
    let jt = build_indicator(&[0, 0, 1, 1, 2, 2], 3).unwrap();
    let want = DMatrix::from_row_slice(6, 3, &[1., 0., 0., 1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1., 0., 0., 1.]);
    assert_eq!(jt.to_dense().transpose(), want);
    assert_eq!(jt.nnz(), 6);
}

#[test]
fn khatri_rao_term_matrix() {
    let jt = build_indicator(&[0, 0, 1, 1, 2, 2], 3).unwrap();
    let xi = DMatrix::from_row_slice(6, 2, &[1., -1., 1., 1., 1., -1., 1., 1., 1., -1., 1., 1.]);
    let zi = build_zti(&jt, &xi).unwrap().to_dense().transpose();
    #[rustfmt::skip]
    let want = DMatrix::from_row_slice(6, 6, &[
        1., -1., 0., 0., 0., 0.,
        1., 1., 0., 0., 0., 0.,
        0., 0., 1., -1., 0., 0.,
        0., 0., 1., 1., 0., 0.,
        0., 0., 0., 0., 1., -1.,
        0., 0., 0., 0., 1., 1.,
    ]);
    assert_eq!(zi, want);
}

#[test]
fn scalar_term_is_the_indicator() {
    let jt = build_indicator(&[1, 0, 2, 1], 3).unwrap();
    let zt = build_zti(&jt, &DMatrix::from_element(4, 1, 1.0)).unwrap();
    assert_eq!(zt, jt);
    let diag = build_zti(&build_indicator(&[0, 1], 2).unwrap(), &DMatrix::from_column_slice(2, 1, &[2., 3.])).unwrap();
    assert_eq!(diag.to_dense(), DMatrix::from_diagonal(&nalgebra::dvector![2., 3.]));
}

fn three_column_spec() -> ModelSpec {
    let g = ["a", "a", "b", "b", "a", "b", "a", "b"];
    let data = DataTable::new()
        .with_numeric("y", vec![1., 2., 3., 4., 5., 6., 7., 9.])
        .unwrap()
        .with_numeric("x1", vec![0.1, 0.5, -0.3, 0.8, 1.1, -1.0, 0.2, 0.4])
        .unwrap()
        .with_numeric("x2", vec![1.0, -0.5, 0.3, 0.0, 2.0, 1.5, -0.7, 0.9])
        .unwrap()
        .with_categorical("g", &g)
        .unwrap();
    ModelSpec::from_formula("y ~ 1 + (x1 + x2 | g)", &data, &BuildOptions::default()).unwrap()
}

#[test]
fn template_initial_values_and_lind() {
    let (cp, rows, lind) = template(3);
    assert_eq!(cp, vec![0, 1, 3, 6]);
    assert_eq!(rows, vec![0, 0, 1, 0, 1, 2]);
    let one_based: Vec<usize> = lind.iter().map(|k| k + 1).collect();
    assert_eq!(one_based, vec![1, 2, 4, 3, 5, 6]);

    let spec = three_column_spec();
    assert_eq!(spec.theta0, vec![1., 0., 0., 1., 0., 1.]);
    let one_based: Vec<usize> = spec.lind.iter().map(|k| k + 1).collect();
    assert_eq!(one_based, vec![1, 2, 4, 3, 5, 6, 1, 2, 4, 3, 5, 6]);
    assert_eq!(spec.lambdat.to_dense(), DMatrix::identity(6, 6));
}

#[test]
fn lambda_update_scatters_theta() {
    let spec = three_column_spec();
    let lt = spec.lambdat_at(&[1., -0.1, 2., 0.1, -0.2, 3.]);
    #[rustfmt::skip]
    let block = DMatrix::from_row_slice(3, 3, &[
        1., -0.1, 2.,
        0., 0.1, -0.2,
        0., 0., 3.,
    ]);
    let mut want = DMatrix::zeros(6, 6);
    want.view_mut((0, 0), (3, 3)).copy_from(&block);
    want.view_mut((3, 3), (3, 3)).copy_from(&block);
    assert_eq!(lt.to_dense(), want);
    assert_eq!(lt.values(), &[1., -0.1, 0.1, 2., -0.2, 3., 1., -0.1, 0.1, 2., -0.2, 3.]);
}

#[test]
fn terms_sorted_by_decreasing_levels() {
    let d = common::toy(12, 4, &[0.13, 0.71, 0.42, 0.9, 0.05, 0.66]);
    let mut d = d;
    let h: Vec<String> = (0..12).map(|i| format!("h{}", i % 2)).collect();
    d.insert("h", lmmfit::data::Column::categorical(&h.iter().map(Some).collect::<Vec<_>>())).unwrap();
    let spec = ModelSpec::from_formula("y ~ x + (1|h) + (x|g)", &d, &BuildOptions::default()).unwrap();
    let groups: Vec<&str> = spec.terms.iter().map(|t| t.group.as_str()).collect();
    assert_eq!(groups, ["g", "h"]);
    assert_eq!(spec.terms[0].offset, 0);
    assert_eq!(spec.terms[1].offset, 8);
    assert_eq!(spec.q(), 10);
    assert_eq!(spec.lower, vec![0.0, f64::NEG_INFINITY, 0.0, 0.0]);
}

fn cells() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, 30)
}

proptest! {
    #[test]
    fn zt_has_exactly_n_times_sum_p_entries(form in 0usize..4, n in 4usize..30, l in 2usize..5, c in cells()) {
        let spec = ModelSpec::from_formula(common::TOY_FORMULAS[form], &common::toy(n, l, &c), &BuildOptions::default()).unwrap();
        let sum_p: usize = spec.terms.iter().map(|t| t.p).sum();
        prop_assert_eq!(spec.zt.nnz(), n * sum_p);
        for j in 0..n {
            prop_assert_eq!(spec.zt.col_nnz(j), sum_p);
        }
        // structural zeros per column: Σ pᵢ(ℓᵢ − 1) of the q rows
        let zeros: usize = spec.terms.iter().map(|t| t.p * (t.nlevels() - 1)).sum();
        prop_assert_eq!(spec.q() - spec.zt.col_nnz(0), zeros);
    }

    #[test]
    fn term_crossproduct_is_block_diagonal(n in 4usize..30, l in 2usize..5, c in cells()) {
        let spec = ModelSpec::from_formula("y ~ x + (x|g)", &common::toy(n, l, &c), &BuildOptions::default()).unwrap();
        let zt = spec.zt.to_dense();
        let ztz = &zt * zt.transpose();
        for r in 0..spec.q() {
            for s in 0..spec.q() {
                if r / 2 != s / 2 {
                    prop_assert_eq!(ztz[(r, s)], 0.0);
                }
            }
        }
    }

    #[test]
    fn lower_bounds_zero_exactly_on_diagonal(form in 0usize..4, c in cells()) {
        let spec = ModelSpec::from_formula(common::TOY_FORMULAS[form], &common::toy(10, 3, &c), &BuildOptions::default()).unwrap();
        let mask = spec.diagonal_mask();
        for (k, &l) in spec.lower.iter().enumerate() {
            prop_assert_eq!(l == 0.0, mask[k]);
            prop_assert!(l == 0.0 || l == f64::NEG_INFINITY);
        }
        prop_assert_eq!(spec.theta0.iter().filter(|&&t| t == 1.0).count(), mask.iter().filter(|&&m| m).count());
    }
}

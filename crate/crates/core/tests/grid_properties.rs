use proptest::prelude::*;
use sbdf_core::{
    apply_laplacian, grad_inner, grad_norm_sq, inner, l2_norm, linf_norm, neighbor_sum,
    BoundarySpec, EdgeCondition, Field, GridSpec,
};

fn bc_strategy() -> impl Strategy<Value = BoundarySpec> {
    prop_oneof![
        Just(BoundarySpec::periodic()),
        Just(BoundarySpec::neumann()),
        Just(BoundarySpec::dirichlet()),
        Just(BoundarySpec::dirichlet_left()),
        Just(BoundarySpec {
            left: EdgeCondition::Periodic,
            right: EdgeCondition::Periodic,
            bottom: EdgeCondition::DirichletZero,
            top: EdgeCondition::NeumannZero,
        }),
    ]
}

/// Grid up to 32x32 plus two fields with entries in [-2, 2], zeroed on
/// pinned nodes.
fn two_fields() -> impl Strategy<Value = (Field, Field)> {
    (2usize..=32, 2usize..=32, 0.01f64..2.0, bc_strategy()).prop_flat_map(|(nx, ny, h, bc)| {
        let g = GridSpec::new(nx, ny, h, bc).unwrap();
        let n = g.len();
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
        )
            .prop_map(move |(a, b)| {
                let mut u = Field::from_values(g, a).unwrap();
                let mut v = Field::from_values(g, b).unwrap();
                u.zero_constrained();
                v.zero_constrained();
                (u, v)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn green_identity((u, v) in two_fields()) {
        let lap_v = apply_laplacian(&v).unwrap();
        let lhs = grad_inner(&u, &v).unwrap();
        let rhs = inner(&u, &lap_v).unwrap();
        let scale = 1.0 + lhs.abs() + rhs.abs();
        prop_assert!((lhs + rhs).abs() <= 1e-12 * scale, "lhs {lhs} rhs {rhs}");
        prop_assert!((grad_inner(&u, &u).unwrap() - grad_norm_sq(&u)).abs() <= 1e-12 * (1.0 + grad_norm_sq(&u)));
    }

    #[test]
    fn laplacian_is_symmetric((u, v) in two_fields()) {
        let a = inner(&u, &apply_laplacian(&v).unwrap()).unwrap();
        let b = inner(&v, &apply_laplacian(&u).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn laplacian_is_linear((u, v) in two_fields(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let combo = Field::linear_combination(&[(a, &u), (b, &v)]).unwrap();
        let lhs = apply_laplacian(&combo).unwrap();
        let (lu, lv) = (apply_laplacian(&u).unwrap(), apply_laplacian(&v).unwrap());
        let rhs = Field::linear_combination(&[(a, &lu), (b, &lv)]).unwrap();
        let scale = linf_norm(&lu).max(linf_norm(&lv)) * (a.abs() + b.abs()) + 1e-300;
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-13 * scale);
    }

    #[test]
    fn neighbor_sum_never_amplifies((u, _v) in two_fields()) {
        // each evolved node reads four neighbours, and each node is read at
        // most four times, so the stencil has operator norm at most 4
        let ns = neighbor_sum(&u).unwrap();
        prop_assert!(l2_norm(&ns) <= 4.0 * l2_norm(&u) * (1.0 + 1e-14) + 1e-300);
    }

    #[test]
    fn norm_homogeneity((u, _v) in two_fields(), c in -10.0f64..10.0) {
        let scaled = u.map(|x| c * x);
        let (a, b) = (l2_norm(&scaled), c.abs() * l2_norm(&u));
        prop_assert!((a - b).abs() <= 1e-14 * (1.0 + b) * 4.0);
        let ip = inner(&u, &u).unwrap();
        prop_assert!((ip - l2_norm(&u).powi(2)).abs() <= 1e-14 * ip.max(1e-300) * 4.0);
    }
}

#[test]
fn reductions_do_not_depend_on_thread_count() {
    let g = GridSpec::new(97, 61, 0.013, BoundarySpec::dirichlet_left()).unwrap();
    let u = Field::from_fn(g, |i, j| ((i * 131 + j * 71) % 17) as f64 / 7.0 - 1.1);
    let v = Field::from_fn(g, |i, j| ((i * 29 + j * 113) % 23) as f64 / 5.0 - 2.0);
    let eval = || {
        (
            l2_norm(&u).to_bits(),
            inner(&u, &v).unwrap().to_bits(),
            grad_inner(&u, &v).unwrap().to_bits(),
            grad_norm_sq(&u).to_bits(),
            apply_laplacian(&u).unwrap(),
        )
    };
    let runs: Vec<_> = [1, 2, 5]
        .into_iter()
        .map(|threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(eval)
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(eval(), runs[0]);
}

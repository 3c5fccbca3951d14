use divbandit_core::geometry::{GeometryError, HalfspaceConstraint, MixedAction, Polytope, Sense};
use proptest::prelude::*;

fn simplex_point(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// A K-arm H-polytope guaranteed to contain the interior point `q`.
fn polytope_around(
    q: &[f64],
    rows: &[(Vec<f64>, bool, f64)],
) -> (Vec<HalfspaceConstraint>, Polytope) {
    let constraints: Vec<HalfspaceConstraint> = rows
        .iter()
        .map(|(coeffs, le, slack)| {
            let at_q: f64 = coeffs.iter().zip(q).map(|(c, x)| c * x).sum();
            if *le {
                HalfspaceConstraint::new(coeffs.clone(), Sense::Le, at_q + slack).unwrap()
            } else {
                HalfspaceConstraint::new(coeffs.clone(), Sense::Ge, at_q - slack).unwrap()
            }
        })
        .collect();
    let p = Polytope::from_constraints(q.len(), constraints.clone()).unwrap();
    (constraints, p)
}

fn polytope_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<(Vec<f64>, bool, f64)>)> {
    (3usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(0.05f64..1.0, k),
            prop::collection::vec(
                (
                    prop::collection::vec(-1.0f64..1.0, k),
                    any::<bool>(),
                    0.0f64..0.3,
                ),
                0..=3,
            ),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vertices_are_feasible_distinct_and_on_the_simplex((raw, rows) in polytope_strategy()) {
        let q = simplex_point(&raw);
        let (constraints, p) = polytope_around(&q, &rows);
        let vs = p.vertices().unwrap();
        prop_assert!(!vs.is_empty());
        for (i, v) in vs.iter().enumerate() {
            prop_assert!((v.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(v.probs().iter().all(|x| *x >= 0.0));
            prop_assert!(constraints.iter().all(|c| c.holds(v.probs())));
            for w in &vs[i + 1..] {
                prop_assert!(v.linf_distance(w) > 1e-7);
            }
        }
    }

    #[test]
    fn argmax_vertex_dominates_interior_points(
        (raw, rows) in polytope_strategy(),
        weights in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let q = simplex_point(&raw);
        let (_, p) = polytope_around(&q, &rows);
        let w = &weights[..q.len()];
        let (i, best) = p.argmax_vertex(w).unwrap();
        let best_value = best.dot(w);
        for v in p.vertices().unwrap() {
            prop_assert!(best_value >= v.dot(w) - 1e-12);
        }
        // The interior witness is a convex combination, so it cannot beat a vertex.
        let at_q: f64 = q.iter().zip(w).map(|(a, b)| a * b).sum();
        prop_assert!(best_value >= at_q - 1e-9);
        prop_assert_eq!(&p.vertices().unwrap()[i], best);
    }

    #[test]
    fn argmax_is_invariant_to_shifting_and_scaling_weights(
        weights in prop::collection::vec(0.0f64..1.0, 3),
        shift in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let p = Polytope::group(3, &[vec![0], vec![1]], &[0.1, 0.1], &[1.0, 1.0]).unwrap();
        let (i, _) = p.argmax_vertex(&weights).unwrap();
        let moved: Vec<f64> = weights.iter().map(|w| scale * w + shift).collect();
        let (j, _) = p.argmax_vertex(&moved).unwrap();
        let vs = p.vertices().unwrap();
        // Ties can legitimately resolve differently after rounding; compare values.
        prop_assert!((vs[i].dot(&weights) - vs[j].dot(&weights)).abs() < 1e-9);
    }

    #[test]
    fn min_prob_polytope_has_k_shifted_corners(k in 2usize..=5, frac in 0.0f64..0.99) {
        let ell = frac / k as f64;
        let p = Polytope::min_prob(k, ell).unwrap();
        let vs = p.vertices().unwrap();
        prop_assert_eq!(vs.len(), k);
        for a in 0..k {
            let corner: Vec<f64> = (0..k)
                .map(|b| if a == b { 1.0 - (k - 1) as f64 * ell } else { ell })
                .collect();
            prop_assert!(vs.iter().any(|v| v.probs().iter().zip(&corner).all(|(x, y)| (x - y).abs() < 1e-9)));
        }
    }

    #[test]
    fn contains_agrees_with_constraints(
        (raw, rows) in polytope_strategy(),
        probe in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let q = simplex_point(&raw);
        let (constraints, p) = polytope_around(&q, &rows);
        let x = MixedAction::new(simplex_point(&probe[..q.len()])).unwrap();
        let inside = constraints.iter().all(|c| c.violation(x.probs()) <= 1e-9);
        prop_assert_eq!(p.contains(&x), inside);
        // The V-representation of the same set answers identically.
        let hull = Polytope::from_vertices(p.vertices().unwrap().to_vec()).unwrap();
        let clearly = constraints.iter().all(|c| c.violation(x.probs()) <= -1e-6)
            || constraints.iter().any(|c| c.violation(x.probs()) >= 1e-6);
        if clearly {
            prop_assert_eq!(hull.contains(&x), inside);
        }
    }
}

#[test]
fn from_vertices_drops_interior_and_duplicate_points() {
    let pts = vec![
        MixedAction::pure(3, 0),
        MixedAction::pure(3, 1),
        MixedAction::pure(3, 2),
        MixedAction::new(vec![1.0 / 3.0; 3]).unwrap(),
        MixedAction::pure(3, 1),
    ];
    let p = Polytope::from_vertices(pts).unwrap();
    assert_eq!(p.vertices().unwrap().len(), 3);
}

#[test]
fn infeasible_constraints_are_reported_empty() {
    let c = HalfspaceConstraint::new(vec![1.0, 0.0], Sense::Ge, 1.5).unwrap();
    let p = Polytope::from_constraints(2, vec![c]).unwrap();
    assert!(matches!(p.vertices(), Err(GeometryError::Empty)));
}

#[test]
fn min_prob_rejects_ell_above_one_over_k() {
    assert!(matches!(
        Polytope::min_prob(3, 0.5),
        Err(GeometryError::InvalidParameter(_))
    ));
}

#[test]
fn enumeration_cap_is_enforced() {
    let p = Polytope::simplex(6).unwrap().with_max_bases(3);
    assert!(matches!(
        p.vertices(),
        Err(GeometryError::TooManyBases { .. })
    ));
}

#[test]
fn budget_polytope_vertices() {
    // p_0 ≤ 0.5 on the 3-simplex: corners e1, e2 and the cut points on the edges from e0.
    let p = Polytope::budget(3, &[vec![1.0, 0.0, 0.0]], &[0.5]).unwrap();
    let vs = p.vertices().unwrap();
    assert_eq!(vs.len(), 4);
    for expect in [
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
    ] {
        assert!(vs.iter().any(|v| v
            .probs()
            .iter()
            .zip(expect)
            .all(|(a, b)| (a - b).abs() < 1e-12)));
    }
}

use approx::assert_abs_diff_eq;
use proptest::collection::vec;
use proptest::prelude::*;
use topoflow::diffeo::{descent_check, fit, fit_constraints, lipschitz_bound, JitterPolicy};
use topoflow::gradient::{consolidate, pullback, DEFAULT_CONSOLIDATE_TOL};
use topoflow::io::{diagram_to_csv, parse_diagram, parse_points, points_to_csv};
use topoflow::losses::{box_regularization, min_cost_assignment, pers_k, BoxRegion, LossSpec, Selection};
use topoflow::optimizer::{apply_flow, invert_flow, Flow, FlowStep};
use topoflow::rips::{build_filtration, compute_persistence, filtration_value, reduce_oracle};
use topoflow::{Diagram, PointCloud};

fn cloud(dim: usize, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = PointCloud> {
    n.prop_flat_map(move |n| vec(-1.0f64..1.0, n * dim))
        .prop_map(move |c| PointCloud::new(c, dim).unwrap())
}

fn min_gap(x: &PointCloud) -> f64 {
    let mut d = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d.push(x.dist(i, j));
        }
    }
    d.sort_by(f64::total_cmp);
    d.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min).min(d.first().copied().unwrap_or(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtration_is_monotone(x in cloud(2, 1..=9)) {
        let c = build_filtration(&x, 2, None).unwrap();
        for (pos, s) in c.simplices().iter().enumerate() {
            for f in c.facets(pos) {
                prop_assert!(f < pos);
                prop_assert!(c.simplex(f).value() <= s.value());
            }
            if s.dim() >= 1 {
                let (a, b) = s.critical_edge().unwrap();
                prop_assert_eq!(x.dist(a, b), s.value());
            }
        }
    }

    #[test]
    fn filtration_value_is_max_edge(x in cloud(3, 2..=6)) {
        let all: Vec<usize> = (0..x.len()).collect();
        let (v, edge) = filtration_value(&all, &x).unwrap();
        let mut best: f64 = 0.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                best = best.max(x.dist(i, j));
            }
        }
        prop_assert_eq!(v, best);
        let (a, b) = edge.unwrap();
        prop_assert_eq!(x.dist(a, b), best);
    }

    #[test]
    fn persistence_matches_oracle(x in cloud(2, 1..=9)) {
        let c = build_filtration(&x, 2, None).unwrap();
        let fast = compute_persistence(&c, &[0, 1]).unwrap();
        let slow = reduce_oracle(&c, &[0, 1]).unwrap();
        prop_assert_eq!(fast.triples(), slow.triples());
    }

    #[test]
    fn diagram_shape(x in cloud(2, 1..=12)) {
        let c = build_filtration(&x, 2, None).unwrap();
        let d = compute_persistence(&c, &[0, 1]).unwrap();
        prop_assert!(d.iter().all(|p| p.birth < p.death));
        let infinite: Vec<_> = d.iter().filter(|p| !p.is_finite()).collect();
        prop_assert_eq!(infinite.len(), 1);
        prop_assert_eq!(infinite[0].dim, 0);
        prop_assert!(d.iter().filter(|p| p.dim == 0).count() <= x.len());
        for p in d.iter().filter(|p| p.is_finite()) {
            let (a, b) = p.death_edge.unwrap();
            prop_assert_eq!(x.dist(a, b), p.death);
            if p.dim > 0 {
                let (a, b) = p.birth_edge.unwrap();
                prop_assert_eq!(x.dist(a, b), p.birth);
            }
        }
    }

    #[test]
    fn pers_k_is_monotone(pairs in vec((0.0f64..1.0, 0.0f64..1.0), 0..12)) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(b, g)| (b, b + g)).collect();
        let d = Diagram::from_pairs(1, &pairs).unwrap();
        let total: f64 = pairs.iter().map(|(b, e)| e - b).sum();
        let mut prev = 0.0;
        for k in 0..=pairs.len() + 1 {
            let p = pers_k(&d, k);
            prop_assert!(p >= prev);
            prev = p;
        }
        assert_abs_diff_eq!(prev, total, epsilon = 1e-12);
    }

    #[test]
    fn loss_signs(x in cloud(2, 3..=10)) {
        let c = build_filtration(&x, 2, None).unwrap();
        let d = compute_persistence(&c, &[0, 1]).unwrap();
        let simplify = LossSpec::simplify(vec![0, 1]).unwrap().evaluate(&d).unwrap().0;
        let death = LossSpec::simplify_death(vec![1]).unwrap().evaluate(&d).unwrap().0;
        let augment = LossSpec::augment(vec![0, 1]).unwrap().with_selection(Selection::All).unwrap();
        let augment = augment.evaluate(&d).unwrap().0;
        prop_assert!(simplify >= 0.0 && death >= 0.0);
        assert_abs_diff_eq!(augment, -simplify, epsilon = 1e-12);
    }

    #[test]
    fn gradient_support_is_critical_edges(x in cloud(2, 3..=10)) {
        let spec = LossSpec::simplify(vec![0, 1]).unwrap();
        let c = build_filtration(&x, 2, None).unwrap();
        let d = compute_persistence(&c, spec.hom_dims()).unwrap();
        let (_, cot) = spec.evaluate(&d).unwrap();
        let g = pullback(&d, &cot, &x).unwrap();
        let mut endpoints: Vec<usize> = d
            .iter()
            .filter(|p| p.is_finite())
            .flat_map(|p| [p.birth_edge, p.death_edge])
            .flatten()
            .flat_map(|(a, b)| [a, b])
            .collect();
        endpoints.sort_unstable();
        endpoints.dedup();
        prop_assert!(g.support().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.support().iter().all(|i| endpoints.binary_search(i).is_ok()));
        let dense = g.densify();
        let sum: Vec<f64> = (0..2).map(|k| dense.iter().skip(k).step_by(2).sum()).collect();
        assert_abs_diff_eq!(sum[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sum[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolant_reproduces_constraints(
        x in cloud(2, 4..=12).prop_filter("well separated", |x| min_gap(x) > 1e-3),
        sigma in 0.05f64..0.5,
    ) {
        let spec = LossSpec::simplify(vec![0, 1]).unwrap();
        let c = build_filtration(&x, 2, None).unwrap();
        let d = compute_persistence(&c, spec.hom_dims()).unwrap();
        let (_, cot) = spec.evaluate(&d).unwrap();
        let g = pullback(&d, &cot, &x).unwrap();
        let cons = consolidate(&g, &x, DEFAULT_CONSOLIDATE_TOL);
        prop_assume!(!cons.is_empty());
        let v = fit_constraints(&cons, sigma, &JitterPolicy::default()).unwrap();
        prop_assume!(v.jitter_used() == 0.0);
        let scale = (0..cons.len())
            .map(|k| cons.vector(k).iter().map(|a| a * a).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        for k in 0..cons.len() {
            let at = v.eval(cons.center(k));
            for (a, b) in at.iter().zip(cons.vector(k)) {
                prop_assert!((a - b).abs() <= 1e-8 * scale);
            }
        }
        let (inner, norm2) = descent_check(&g, &v, &x);
        prop_assert!((inner - norm2).abs() <= 1e-6 * norm2);
        prop_assert!(v.kappa() >= 1.0);
        prop_assert!(lipschitz_bound(v.kappa(), sigma, 2, 1.0) > 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences(
        centers in vec(-1.0f64..1.0, 2..=8),
        probe in vec(-1.5f64..1.5, 2),
    ) {
        let m = centers.len() / 2;
        let centers = centers[..2 * m].to_vec();
        let vectors: Vec<f64> = (0..2 * m).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
        let Ok(v) = fit(&centers, &vectors, 2, 0.4, &JitterPolicy::default()) else {
            return Ok(());
        };
        let j = v.jacobian(&probe);
        let h = 1e-6;
        for col in 0..2 {
            let mut p = probe.clone();
            let mut q = probe.clone();
            p[col] += h;
            q[col] -= h;
            let (fp, fq) = (v.eval(&p), v.eval(&q));
            for row in 0..2 {
                let fd = (fp[row] - fq[row]) / (2.0 * h);
                let scale = v.coefficients().iter().fold(1.0f64, |a, c| a.max(c.abs()));
                prop_assert!((fd - j[row * 2 + col]).abs() <= 1e-5 * scale);
            }
        }
    }

    #[test]
    fn small_step_flows_invert(
        centers in vec(-1.0f64..1.0, 6),
        probes in cloud(2, 1..=20),
        lr in 0.001f64..0.05,
    ) {
        let vectors = [1.0, 0.0, 0.0, -1.0, 0.5, 0.5];
        let Ok(v) = fit(&centers, &vectors, 2, 0.5, &JitterPolicy::default()) else {
            return Ok(());
        };
        prop_assume!(lr * v.empirical_lipschitz(probes.coords()) < 0.5 && lr * v.lipschitz_upper() < 1.0);
        let mut flow = Flow::new(2);
        flow.push(FlowStep::new(v.clone(), lr)).unwrap();
        flow.push(FlowStep::new(v, lr / 2.0)).unwrap();
        let (back, report) = invert_flow(&flow, &apply_flow(&flow, &probes).unwrap()).unwrap();
        prop_assert!(report.converged());
        for (a, b) in back.coords().iter().zip(probes.coords()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn box_regularizer_vanishes_inside(x in cloud(3, 1..=20), margin in 0.0f64..0.5) {
        let region = BoxRegion::cube(3, -1.0 - margin, 1.0 + margin).unwrap();
        let (value, grad) = box_regularization(&x, &region).unwrap();
        prop_assert_eq!(value, 0.0);
        prop_assert!(grad.iter().all(|&g| g == 0.0));
        let shifted = PointCloud::new(x.coords().iter().map(|c| c + 3.0).collect(), 3).unwrap();
        let (value, grad) = box_regularization(&shifted, &region).unwrap();
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        assert_abs_diff_eq!(norm2, 4.0 * value, epsilon = 1e-9 * (1.0 + value));
    }

    #[test]
    fn assignment_is_optimal(cost in (1usize..=6).prop_flat_map(|n| (Just(n), vec(0.0f64..10.0, n * n)))) {
        let (n, cost) = cost;
        let assign = min_cost_assignment(&cost, n);
        let mut seen = assign.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let total: f64 = assign.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permutations(&mut perm, 0, &mut |p| {
            best = best.min(p.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum());
        });
        assert_abs_diff_eq!(total, best, epsilon = 1e-9);
    }

    #[test]
    fn points_csv_round_trip(x in cloud(3, 1..=30)) {
        prop_assert_eq!(parse_points(&points_to_csv(&x), "mem").unwrap(), x);
    }

    #[test]
    fn diagram_csv_round_trip(x in cloud(2, 1..=10)) {
        let c = build_filtration(&x, 2, None).unwrap();
        let d = compute_persistence(&c, &[0, 1]).unwrap();
        prop_assert_eq!(parse_diagram(&diagram_to_csv(&d), "mem").unwrap(), d);
    }
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, f);
        p.swap(k, i);
    }
}

use medbounds::bounds::{alternate_solve, alternate_solve_with, complement_interval, probability_interval, weight_box, AlternationControls, BoundProblem};
use medbounds::lpcore::{ParametricSolver, Sense};
use medbounds::oracle::{brute_force_bounds, GridSpec};
use medbounds::Target;
use proptest::prelude::*;

const FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
struct Tiny {
    target: Target,
    outcome: Vec<f64>,
    props: Vec<Vec<f64>>,
    eps: Vec<f64>,
}

impl Tiny {
    fn problem(&self, scale: f64) -> BoundProblem {
        let eps: Vec<f64> = self.eps.iter().map(|e| e * scale).collect();
        let n = self.outcome.len();
        BoundProblem::from_parts(self.target, (0..n).collect(), self.outcome.clone(), &self.props, &eps, FLOOR).unwrap()
    }
}

fn tiny(targets: Vec<Target>, max_rows: usize) -> impl Strategy<Value = Tiny> {
    (prop::sample::select(targets), 1..=max_rows).prop_flat_map(|(target, n)| {
        let blocks = if matches!(target, Target::Y1M1 | Target::Y0M0) { 2 } else { 3 };
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(prop::collection::vec(0.1f64..0.9, n), blocks),
            prop::collection::vec(0.0f64..0.6, blocks),
        )
            .prop_map(move |(outcome, props, eps)| Tiny { target, outcome, props, eps })
    })
}

fn tol(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn complement_box_mirrors_probability_box(p in 1e-4f64..(1.0 - 1e-4), eps in 0.0f64..2.0) {
        let (lo, hi) = probability_interval(p, eps, FLOOR);
        let (clo, chi) = complement_interval(p, eps, FLOOR);
        prop_assert!((clo - (1.0 - hi)).abs() <= 1e-12);
        prop_assert!((chi - (1.0 - lo)).abs() <= 1e-12);
        let (wlo, whi) = weight_box(p, eps, FLOOR, false);
        prop_assert!(wlo <= 1.0 / p && 1.0 / p <= whi);
    }

    #[test]
    fn zero_budget_collapses_to_start(t in tiny(Target::ALL.to_vec(), 8)) {
        let p = t.problem(0.0);
        let v0 = p.objective(&p.start());
        for sense in [Sense::Minimize, Sense::Maximize] {
            let out = alternate_solve(&p, sense, &AlternationControls::default()).unwrap();
            prop_assert!((out.value - v0).abs() <= 1e-12 * (1.0 + v0.abs()));
            prop_assert!(out.converged);
        }
    }

    #[test]
    fn bounds_contain_start_and_stay_feasible(t in tiny(Target::ALL.to_vec(), 8)) {
        let p = t.problem(1.0);
        let v0 = p.objective(&p.start());
        let lo = alternate_solve(&p, Sense::Minimize, &AlternationControls::default()).unwrap();
        let hi = alternate_solve(&p, Sense::Maximize, &AlternationControls::default()).unwrap();
        prop_assert!(lo.value <= v0 + tol(v0) && v0 <= hi.value + tol(v0));
        prop_assert!(p.max_violation(&lo.weights) <= 1e-7);
        prop_assert!(p.max_violation(&hi.weights) <= 1e-7);
        prop_assert!((p.objective(&hi.weights) - hi.value).abs() <= tol(hi.value));
    }

    #[test]
    fn warm_started_outer_budget_nests(t in tiny(Target::ALL.to_vec(), 8), shrink in 0.0f64..1.0) {
        let inner = t.problem(shrink);
        let outer = t.problem(1.0);
        let ctl = AlternationControls::default();
        for sense in [Sense::Minimize, Sense::Maximize] {
            let a = alternate_solve(&inner, sense, &ctl).unwrap();
            let b = alternate_solve_with(&outer, sense, &ctl, &ParametricSolver::default(), std::slice::from_ref(&a.weights)).unwrap();
            let slack = sense.sign() * (a.value - b.value);
            prop_assert!(slack >= -tol(a.value), "{sense:?}: inner {} outer {}", a.value, b.value);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn two_block_bounds_inside_brute_force(t in tiny(vec![Target::Y1M1, Target::Y0M0], 6)) {
        let p = t.problem(1.0);
        let bf = brute_force_bounds(&p, GridSpec::within(&p, 2e4)).unwrap();
        let lo = alternate_solve(&p, Sense::Minimize, &AlternationControls::default()).unwrap();
        let hi = alternate_solve(&p, Sense::Maximize, &AlternationControls::default()).unwrap();
        prop_assert!(lo.value >= bf.min - 1e-8 * (1.0 + bf.min.abs()), "lower {} below brute force {}", lo.value, bf.min);
        prop_assert!(hi.value <= bf.max + 1e-8 * (1.0 + bf.max.abs()), "upper {} above brute force {}", hi.value, bf.max);
    }

    #[test]
    fn three_block_bounds_inside_brute_force(t in tiny(vec![Target::Y1M0, Target::Y0M1], 3)) {
        let p = t.problem(1.0);
        let bf = brute_force_bounds(&p, GridSpec::within(&p, 2e4)).unwrap();
        let lo = alternate_solve(&p, Sense::Minimize, &AlternationControls::default()).unwrap();
        let hi = alternate_solve(&p, Sense::Maximize, &AlternationControls::default()).unwrap();
        prop_assert!(lo.value >= bf.min - 1e-8 * (1.0 + bf.min.abs()), "lower {} below brute force {}", lo.value, bf.min);
        prop_assert!(hi.value <= bf.max + 1e-8 * (1.0 + bf.max.abs()), "upper {} above brute force {}", hi.value, bf.max);
    }
}

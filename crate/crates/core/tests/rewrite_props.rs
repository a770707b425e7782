use lcgnn_core::dense::DenseMatrix;
use lcgnn_core::formula::{count_redexes, render_formula, ActivationKind, CombineKind, Formula};
use lcgnn_core::graph::{normalized_adjacency, Graph};
use lcgnn_core::oracle::{evaluate_formula, ParamSet};
use lcgnn_core::rewrite::{apply_f_lc, lc_measure, lc_transform, lc_transform_traced, validate_lc, PlanSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Arbitrary valid bodies (no softmax). Combine/AttnSum only appear where
/// no filter sits above them. Weights index 0..4 so shapes can be square.
fn body(act: ActivationKind, combine: CombineKind) -> BoxedStrategy<Formula> {
    fn filtered(act: ActivationKind) -> BoxedStrategy<Formula> {
        Just(Formula::x())
            .boxed()
            .prop_recursive(5, 24, 2, move |inner| {
                prop_oneof![
                    inner.clone().prop_map(Formula::filter),
                    (1u32..4, inner.clone()).prop_map(|(k, f)| f.filter_pow(k)),
                    (0usize..4, inner.clone()).prop_map(|(i, f)| f.weight(i)),
                    inner.prop_map(move |f| f.act(act)),
                ]
            })
            .boxed()
    }
    filtered(act)
        .prop_recursive(2, 48, 3, move |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(move |cs| Formula::Combine(combine, cs)),
                prop::collection::vec(inner.clone(), 1..4).prop_map(Formula::AttnSum),
                (0usize..4, inner.clone()).prop_map(|(i, f)| f.weight(i)),
                inner.prop_map(move |f| f.act(act)),
            ]
        })
        .boxed()
}

fn any_formula() -> impl Strategy<Value = Formula> {
    (
        prop_oneof![Just(ActivationKind::Relu), Just(ActivationKind::Identity)],
        prop::bool::ANY,
    )
        .prop_flat_map(|(act, max)| body(act, if max { CombineKind::Max } else { CombineKind::Concat }))
        .prop_flat_map(|f| (Just(f.clone()), prop::bool::ANY))
        .prop_map(|(f, soft)| if soft { f.softmax() } else { f })
}

fn count(f: &Formula, pred: impl Fn(&Formula) -> bool) -> usize {
    f.count_nodes(pred)
}

fn total_filter_power_on_paths(f: &Formula) -> Vec<u32> {
    // filter power seen by each X leaf, left to right
    fn go(f: &Formula, acc: u32, out: &mut Vec<u32>) {
        let acc = acc + f.filter_power().unwrap_or(0);
        if matches!(f, Formula::Feature) {
            out.push(acc);
        }
        for c in f.children() {
            go(c, acc, out);
        }
    }
    let mut out = Vec::new();
    go(f, 0, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rendering_is_injective_on_canonical_forms(a in any_formula(), b in any_formula()) {
        let (ca, cb) = (a.canonical(), b.canonical());
        prop_assert_eq!(ca == cb, render_formula(&ca) == render_formula(&cb));
    }

    #[test]
    fn rendering_ignores_filter_grouping(f in any_formula()) {
        prop_assert_eq!(render_formula(&f), render_formula(&f.canonical()));
    }

    #[test]
    fn each_step_decreases_the_measure(f in any_formula()) {
        let mut cur = f;
        let mut steps = 0;
        while count_redexes(&cur) > 0 {
            let next = apply_f_lc(&cur);
            prop_assert!(lc_measure(&next) < lc_measure(&cur));
            cur = next;
            steps += 1;
            prop_assert!(steps <= 10_000);
        }
    }

    #[test]
    fn result_is_lc_and_a_fixpoint(f in any_formula()) {
        let (lc, plan) = lc_transform(&f).unwrap();
        prop_assert!(validate_lc(&lc));
        prop_assert_eq!(count_redexes(&lc), 0);
        prop_assert_eq!(apply_f_lc(&lc), lc.clone());
        let (again, plan2) = lc_transform(&lc).unwrap();
        prop_assert_eq!(again, lc.clone());
        prop_assert_eq!(plan2, plan.clone());
        prop_assert_eq!(PlanSpec::from_lc(&lc).unwrap(), plan);
    }

    #[test]
    fn rewrite_preserves_symbols(f in any_formula()) {
        let r = lc_transform_traced(&f).unwrap();
        let lc = &r.formula;
        prop_assert_eq!(lc.weight_indices(), f.weight_indices());
        let acts = |g: &Formula| count(g, |n| matches!(n, Formula::Activation(..)));
        prop_assert_eq!(acts(lc), acts(&f));
        let combines = |g: &Formula| count(g, |n| matches!(n, Formula::Combine(..) | Formula::AttnSum(_) | Formula::Softmax(_)));
        prop_assert_eq!(combines(lc), combines(&f));
        // filters only move towards X, so every leaf keeps its total power
        prop_assert_eq!(total_filter_power_on_paths(lc), total_filter_power_on_paths(&f));
        let mut prev = f.clone();
        for step in &r.trace {
            prop_assert_eq!(step, &apply_f_lc(&prev));
            prev = step.clone();
        }
        prop_assert_eq!(&prev, lc);
    }
}

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

fn random_dense(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    /// With the identity activation the commutation rule is exact, so the
    /// LC form must compute the same matrix.
    #[test]
    fn identity_activation_preserves_semantics(
        f in body(ActivationKind::Identity, CombineKind::Max),
        seed in any::<u64>(),
        n in 2usize..12,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let s = normalized_adjacency(&random_graph(n, 0.4, &mut rng)).to_dense();
        let x = random_dense(n, d, &mut rng);
        let weights: BTreeMap<usize, DenseMatrix> = (0..4).map(|i| (i, random_dense(d, d, &mut rng))).collect();
        let attn = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = ParamSet { weights, attn };

        let (lc, _) = lc_transform(&f).unwrap();
        let want = evaluate_formula(&f, &params, &s, &x).unwrap();
        let got = evaluate_formula(&lc, &params, &s, &x).unwrap();
        let scale = want.max_abs().max(1.0);
        prop_assert!(got.max_abs_diff(&want).unwrap() <= 1e-10 * scale);
    }
}

use ppt_ising::critical::beta_critical;
use ppt_ising::exact::{boundary_conditioned_root_marginal, Boundary, TreeMethod};
use ppt_ising::graph::MultiGraph;
use ppt_ising::ising::IsingParams;
use ppt_ising::ppt::{sample_tree, sample_tree_from, Label, PptParams, PptTree, TypedNode};
use ppt_ising::rde::{
    depth_profile, equivalence_tests, estimate_limits, estimate_magnetisation, phi_samples, replicate_values,
    LimitRecord, RdeConfig,
};
use ppt_ising::rng::stream_rng;
use ppt_ising::stats::mean_se;
use ppt_ising::Error;
use proptest::prelude::*;

fn params() -> PptParams {
    PptParams::new(2, 1.0).unwrap()
}

fn as_graph(tree: &PptTree) -> MultiGraph {
    let mut g = MultiGraph::new(tree.len());
    for (i, n) in tree.nodes.iter().enumerate() {
        for &c in &n.children {
            g.add_edge(i, c).unwrap();
        }
    }
    g
}

#[test]
fn profile_matches_enumeration_on_small_trees() {
    let p = params();
    // an age-one Young root has a single child, so depth-3 trees stay small
    let thin_root = TypedNode { age: 1.0, label: Label::Young, strength: 3.0 };
    let mut checked = 0;
    let mut deep = 0;
    for k in 0..600 {
        let mut rng = stream_rng(61, k);
        let tree = if k % 2 == 0 {
            sample_tree(&p, 2, 16, &mut rng)
        } else {
            sample_tree_from(&p, thin_root, 3, 16, &mut rng)
        };
        let Ok(tree) = tree else { continue };
        deep += (tree.depth == 3) as usize;
        let g = as_graph(&tree);
        let (beta, b) = (0.05 + 0.01 * (k % 90) as f64, 0.1 + 0.002 * k as f64);
        let ising = IsingParams::uniform(beta, b);
        for (depth, h) in depth_profile(&tree, beta, b).iter().enumerate().skip(1) {
            for (boundary, value) in [(Boundary::Free, h.free), (Boundary::Plus, h.plus)] {
                let exact = boundary_conditioned_root_marginal(&g, 0, &ising, boundary, depth, TreeMethod::Enumerate).unwrap();
                assert!((value.tanh() - exact).abs() < 1e-10, "depth {depth} {boundary:?}: {} vs {exact}", value.tanh());
            }
        }
        checked += 1;
    }
    assert!(checked > 100 && deep > 10, "{checked} trees, {deep} of depth 3");
}

#[test]
fn bracket_narrows_with_depth() {
    let p = params();
    let widths: Vec<f64> = (1..=4)
        .map(|depth| estimate_magnetisation(&p, &RdeConfig::new(0.1, 0.5, depth, 2_000, 62)).unwrap().bracket_bias)
        .collect();
    assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
}

#[test]
fn subcritical_magnetisation_vanishes_with_the_field() {
    let p = params();
    let beta = 0.5 * beta_critical(2, 1.0).unwrap().beta_c;
    let m = estimate_magnetisation(&p, &RdeConfig::new(beta, 1e-3, 4, 2_000, 63)).unwrap();
    assert!(m.pooled.mean <= 5e-2 && m.pooled.mean > 0.0, "{}", m.pooled.mean);
}

#[test]
fn estimates_have_the_expected_signs_and_limits() {
    let p = params();
    let est = estimate_limits(&p, &RdeConfig::new(0.3, 0.4, 3, 500, 64)).unwrap();
    for q in [est.magnetisation.free, est.magnetisation.plus, est.magnetisation.pooled] {
        assert!(q.mean > 0.0 && q.mean <= 1.0);
    }
    assert!(est.internal_energy.pooled.mean <= 0.0);
    assert!(est.magnetisation.free.mean <= est.magnetisation.plus.mean);

    // a strong field aligns every spin
    let strong = estimate_limits(&p, &RdeConfig::new(0.3, 12.0, 2, 200, 64)).unwrap();
    assert!((strong.internal_energy.pooled.mean + 2.0).abs() < 1e-8);
    assert!((strong.magnetisation.pooled.mean - 1.0).abs() < 1e-8);
}

#[test]
fn pressure_is_convex_in_the_field() {
    let p = params();
    let fields = [0.1, 0.2, 0.3, 0.4, 0.5];
    let phis: Vec<Vec<f64>> = fields
        .iter()
        .map(|&b| {
            let values = replicate_values(&p, &RdeConfig::new(0.2, b, 3, 4_000, 65)).unwrap();
            phi_samples(&values, 2, 0.2).iter().map(|x| x.mid()).collect()
        })
        .collect();
    for i in 1..fields.len() - 1 {
        // second difference replicate by replicate over shared trees
        let second: Vec<f64> = (0..phis[i].len()).map(|k| phis[i + 1][k] - 2.0 * phis[i][k] + phis[i - 1][k]).collect();
        let e = mean_se(&second);
        assert!(e.mean >= -3.0 * e.err, "B = {}: {} +- {}", fields[i], e.mean, e.err);
    }
}

#[test]
fn distributional_equivalences_hold_and_the_control_fails() {
    let report = equivalence_tests(&params(), &RdeConfig::new(0.2, 0.5, 3, 4_000, 66)).unwrap();
    assert!(report.old_children.min_p() > 0.01, "{report:?}");
    assert!(report.young_children.min_p() > 0.01, "{report:?}");
    assert!(report.negative_control.min_p() < 0.01, "{report:?}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let p = params();
    let cfg = RdeConfig::new(0.2, 0.3, 3, 64, 67);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| replicate_values(&p, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn deadline_stops_a_run() {
    let cfg = RdeConfig::new(0.2, 0.3, 6, 4, 68).with_deadline(std::time::Instant::now());
    assert!(matches!(estimate_limits(&params(), &cfg), Err(Error::DeadlineExceeded)));
}

#[test]
fn json_record_uses_documented_keys() {
    let cfg = RdeConfig::new(0.2, 0.3, 2, 50, 69);
    let est = estimate_limits(&params(), &cfg).unwrap();
    let json = serde_json::to_string(&LimitRecord::new(&cfg, &est)).unwrap();
    for key in ["beta", "B", "depth", "replicates", "phi", "phi_err", "M", "M_err", "U", "U_err", "bracket_bias"] {
        assert!(json.contains(&format!("\"{key}\"")), "{key} missing from {json}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn profile_is_monotone_in_depth(
        m in 2usize..4,
        delta in -0.5f64..4.0,
        beta in 0.0f64..1.0,
        b in 0.0f64..1.0,
        seed in 0u64..100_000,
    ) {
        let p = PptParams::new(m, delta).unwrap();
        let tree = sample_tree(&p, 3, 200_000, &mut stream_rng(seed, 0));
        prop_assume!(tree.is_ok());
        let prof = depth_profile(&tree.unwrap(), beta, b);
        for w in prof.windows(2) {
            prop_assert!(w[1].free >= w[0].free - 1e-12);
            prop_assert!(w[1].plus <= w[0].plus + 1e-12);
            prop_assert!(w[1].free <= w[1].plus + 1e-12);
        }
    }
}

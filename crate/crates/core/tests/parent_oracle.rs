mod common;

use common::oracle::{brute_lcs, oracle_score, OracleRecord, OracleScore};
use common::{toks, Instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relverb::parent::{
    build_parent_inputs, lcs_len, parent_breakdown, parent_score, template_score, ParentConfig,
};
use relverb::Template;

const TOL: f64 = 1e-9;

fn creator_oracle(template: &str) -> OracleScore {
    let inputs = build_parent_inputs(&Template::new(template).unwrap(), "creator").unwrap();
    let table: Vec<OracleRecord> = inputs
        .table
        .iter()
        .map(|r| OracleRecord {
            attribute: r.attribute_tokens().to_vec(),
            value: r.value_tokens().to_vec(),
        })
        .collect();
    oracle_score(&inputs.hypothesis_tokens, &inputs.reference_tokens, &table, 0.5, 4)
}

// Frozen from the brute-force oracle; matches a hand count:
// precision = (1/3 * 3/10 * 1/4 * 1/4)^(1/4), recall = sqrt(1e-12^(1/4) * 1).
const GOLDEN_PRECISION: f64 = 0.28117066259517454;
const GOLDEN_RECALL: f64 = 0.03162277660168379;
const GOLDEN_F1: f64 = 0.05685155720033349;

#[test]
fn golden_created_by() {
    let oracle = creator_oracle("<subject> was created by <object>.");
    assert!((oracle.precision - GOLDEN_PRECISION).abs() < 1e-15);
    assert!((oracle.recall - GOLDEN_RECALL).abs() < 1e-15);
    assert!((oracle.f1 - GOLDEN_F1).abs() < 1e-15);

    let template = Template::new("<subject> was created by <object>.").unwrap();
    let score = template_score(&template, "creator", &ParentConfig::default());
    assert!((score.precision - GOLDEN_PRECISION).abs() < TOL);
    assert!((score.recall - GOLDEN_RECALL).abs() < TOL);
    assert!((score.f1 - GOLDEN_F1).abs() < TOL);
}

#[test]
fn label_template_scores_one() {
    let template = Template::new("<subject> creator <object>").unwrap();
    let score = template_score(&template, "creator", &ParentConfig::default());
    assert!((score.f1 - 1.0).abs() < TOL);
    assert!((creator_oracle("<subject> creator <object>").f1 - 1.0).abs() < TOL);
}

#[test]
fn random_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = ParentConfig::default();
    for case in 0..1000 {
        let instance = Instance::random(&mut rng);
        let got = parent_score(&instance.inputs(), &config).unwrap();
        let want = oracle_score(&instance.hyp, &instance.reference, &instance.oracle_table(), 0.5, 4);
        assert!(
            (got.precision - want.precision).abs() < TOL
                && (got.recall - want.recall).abs() < TOL
                && (got.f1 - want.f1).abs() < TOL,
            "case {case}: {got:?} vs {want:?} for {:?} / {:?} / {:?}",
            instance.hyp,
            instance.reference,
            instance.table
        );
    }
}

#[test]
fn other_lambdas_and_orders_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (lambda, max_n) in [(0.0, 1), (1.0, 2), (0.3, 3), (0.8, 6)] {
        let config = ParentConfig { lambda, max_n };
        for _ in 0..200 {
            let instance = Instance::random(&mut rng);
            let got = parent_score(&instance.inputs(), &config).unwrap();
            let want = oracle_score(&instance.hyp, &instance.reference, &instance.oracle_table(), lambda, max_n);
            assert!((got.f1 - want.f1).abs() < TOL, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn lcs_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let instance = Instance::random(&mut rng);
        assert_eq!(lcs_len(&instance.reference, &instance.hyp), brute_lcs(&instance.reference, &instance.hyp));
    }
    assert_eq!(lcs_len(&toks(&["a", "b", "c"]), &toks(&["a", "c"])), 2);
}

#[test]
fn breakdown_reports_each_order() {
    let inputs = build_parent_inputs(
        &Template::new("<subject> was created by <object>.").unwrap(),
        "creator",
    )
    .unwrap();
    let breakdown = parent_breakdown(&inputs, &ParentConfig::default()).unwrap();
    let precisions: Vec<f64> = breakdown.orders.iter().map(|o| o.precision).collect();
    let expected = [1.0 / 3.0, 0.3, 0.25, 0.25];
    for (got, want) in precisions.iter().zip(expected) {
        assert!((got - want).abs() < TOL);
    }
    assert_eq!(breakdown.orders[0].reference_recall, 0.0);
    assert!(breakdown.orders[1..].iter().all(|o| o.reference_recall == 1.0));
    assert_eq!(breakdown.table_recall, 1.0);
}

mod support;

use proptest::prelude::*;

use support::random_table;
use tabsynth::eval::{sliced_report, weighted_mean, EvalInstance};
use tabsynth::lm::{filter_by_score, keep_count};
use tabsynth::qg::{parse_qg_input, serialize_qg_input, QgFields};
use tabsynth::rng::seeded;
use tabsynth::sampler::{generate_sqls, SamplerConfig};
use tabsynth::sql::{Answer, CmpOp, ReturnType, SqlQuery, WhereClause};
use tabsynth::topics::vocab_overlap;

proptest! {
    #[test]
    fn survivors_have_lower_mean(
        scores in prop::collection::vec(0.0f64..1e4, 1..200),
        keep in 0.001f64..=1.0,
    ) {
        let kept = filter_by_score(scores.clone(), &scores, keep);
        prop_assert_eq!(kept.len(), keep_count(scores.len(), keep));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!(mean(&kept) <= mean(&scores));
        let cut = kept.iter().cloned().fold(f64::MIN, f64::max);
        let dropped = scores.len() - kept.len();
        prop_assert!(scores.iter().filter(|&&s| s > cut).count() <= dropped);
        prop_assert_eq!(filter_by_score(scores.clone(), &scores, 1.0), scores);
    }

    #[test]
    fn sampled_queries_round_trip(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let t = random_table(&mut rng, "r");
        let out = generate_sqls(&t, 10, &SamplerConfig::default(), &mut rng).unwrap();
        for s in &out.queries {
            let input = serialize_qg_input(&s.query, &s.answer, &t).unwrap();
            prop_assert_eq!(parse_qg_input(&input.text).unwrap(), QgFields::of(&s.query, &s.answer, &t));
        }
    }

    #[test]
    fn slices_average_to_overall(outcomes in prop::collection::vec((0usize..6, 0usize..5, any::<bool>()), 1..300)) {
        let instances: Vec<EvalInstance> = outcomes
            .iter()
            .map(|&(r, n, ok)| EvalInstance {
                gold_query: Some(SqlQuery::new(
                    ReturnType::ALL[r],
                    0,
                    (0..n).map(|c| WhereClause::new(c + 1, CmpOp::Eq, "v")).collect(),
                )),
                gold: Answer::Scalar(1.0),
                pred: Answer::Scalar(if ok { 1.0 } else { 0.0 }),
            })
            .collect();
        let r = sliced_report(&instances);
        prop_assert!((weighted_mean(r.by_return_type.as_ref().unwrap().values()) - r.overall).abs() <= 1e-9);
        prop_assert!((weighted_mean(r.by_where_count.as_ref().unwrap().values()) - r.overall).abs() <= 1e-9);
    }

    #[test]
    fn self_overlap_is_full(words in prop::collection::vec("[a-z]{1,6}", 1..400)) {
        let corpus: Vec<String> = words.chunks(7).map(|c| c.join(" ")).collect();
        prop_assert_eq!(vocab_overlap(&corpus, &corpus, 100).unwrap(), 100.0);
    }
}

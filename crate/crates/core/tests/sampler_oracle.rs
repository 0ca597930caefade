mod support;

use proptest::prelude::*;
use rayon::ThreadPoolBuilder;

use support::*;
use tabsynth::rng::seeded;
use tabsynth::sampler::{check_minimality, generate_sqls, sample_corpus, SamplerConfig};
use tabsynth::sql::execute;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn emitted_queries_pass_independent_checks(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let t = random_table(&mut rng, "p");
        let out = generate_sqls(&t, 20, &SamplerConfig::default(), &mut rng).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in &out.queries {
            prop_assert!(seen.insert(s.query.render(&t)), "duplicate query");
            let expected = oracle_execute(&t, &s.query);
            prop_assert!(expected.is_some_and(|a| oracle_same(&a, &s.answer)));
            prop_assert!(!s.query.ret.is_aggregate() || oracle_rows(&t, &s.query.conds).len() >= 2);
            prop_assert!(oracle_minimal(&t, &s.query));
            prop_assert!(!s.query.has_repeated_columns());
        }
    }

    #[test]
    fn minimality_matches_subset_enumeration(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let t = random_table(&mut rng, "m");
        for _ in 0..10 {
            let q = random_query(&mut rng, &t);
            if oracle_execute(&t, &q).is_some() {
                prop_assert_eq!(check_minimality(&q, &t).unwrap(), oracle_minimal(&t, &q));
            }
        }
    }

    #[test]
    fn executor_matches_oracle(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let t = random_table(&mut rng, "e");
        for _ in 0..10 {
            let q = random_query(&mut rng, &t);
            match (execute(&q, &t), oracle_execute(&t, &q)) {
                (Ok(a), Some(b)) => prop_assert!(oracle_same(&a, &b), "{:?} vs {:?}", a, b),
                (Err(_), None) => {}
                (a, b) => prop_assert!(false, "executor {:?}, oracle {:?}", a, b),
            }
        }
    }
}

#[test]
fn corpus_output_ignores_thread_count() {
    let mut rng = seeded(5);
    let tables: Vec<_> = (0..12).map(|i| random_table(&mut rng, &format!("t{i}"))).collect();
    let cfg = SamplerConfig { seed: 11, ..SamplerConfig::default() };
    let run = |threads| {
        ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_corpus(&tables, 15, &cfg))
    };
    assert_eq!(run(1), run(4));
}

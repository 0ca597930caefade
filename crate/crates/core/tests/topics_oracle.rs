mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;

use support::all_upward_paths;
use tabsynth::topics::CategoryGraph;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Random DAGs over 10 nodes (edges only point to higher indices).
    #[test]
    fn ranking_matches_path_enumeration(
        edges in prop::collection::vec((0usize..9, 1usize..10), 5..25),
        mains in prop::collection::btree_set(5usize..10, 1..4),
    ) {
        let names: Vec<String> = (0..10).map(|i| format!("n{i}")).collect();
        let mut g = CategoryGraph::new();
        let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for n in &names {
            g.add_node(n);
        }
        for (a, b) in edges {
            if a < b && !parents.get(names[a].as_str()).is_some_and(|p| p.contains(&names[b].as_str())) {
                g.add_edge(&names[a], &names[b]);
                parents.entry(names[a].as_str()).or_default().push(names[b].as_str());
            }
        }
        for &m in &mains {
            g.add_main_topic(&names[m]);
        }
        for article in &names {
            let paths = all_upward_paths(&parents, article);
            let mut expected: Vec<(usize, usize, String)> = mains
                .iter()
                .filter_map(|&m| {
                    let lens: Vec<usize> = paths.iter().filter(|(n, _)| *n == names[m]).map(|(_, l)| *l).collect();
                    let d = *lens.iter().min()?;
                    Some((d, lens.iter().filter(|&&l| l == d).count(), names[m].clone()))
                })
                .collect();
            expected.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
            let got: Vec<(usize, usize, String)> = g
                .ranked_topics(article)
                .unwrap()
                .into_iter()
                .map(|t| (t.distance, t.shortest_paths as usize, t.topic))
                .collect();
            prop_assert_eq!(got, expected);
        }
    }
}

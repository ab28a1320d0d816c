use proptest::prelude::*;
use usagegraph_core::scoring::{item_score, score_and_rank, traverse, ScoreInputs};
use usagegraph_core::{recommend, Graph, ScoringParams, Weighting};
use usagegraph_testkit::{direct_score, expected_inputs, random_events};

fn params(depth: u32, max_usages: Option<usize>, as_of: Option<i64>) -> ScoringParams {
    ScoringParams {
        depth,
        max_usages,
        as_of,
        ..ScoringParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn traversal_matches_shortest_path_oracle(
        seed in any::<u64>(),
        depth in 1u32..=8,
        window in prop::option::of(1usize..6),
        bounded in any::<bool>(),
    ) {
        let events = random_events(seed, 40, 120);
        let graph = Graph::from_events(&events);
        let as_of = bounded.then(|| events[events.len() / 2].ts);
        for user in graph.user_ids().map(str::to_owned).collect::<Vec<_>>() {
            let got = traverse(&graph, &user, &params(depth, window, as_of));
            let want = expected_inputs(&events, &user, depth, as_of, window);
            let got: Vec<(String, Vec<u32>)> = got.into_iter().map(|(k, v)| (k, v.distances)).collect();
            let want: Vec<(String, Vec<u32>)> = want.into_iter().collect();
            prop_assert_eq!(got, want, "user {}", user);
        }
    }

    #[test]
    fn log_ranking_matches_direct_ranking(
        rows in prop::collection::vec((1usize..=20, prop::collection::vec(0u32..=8, 1..=20)), 2..40)
    ) {
        let inputs: Vec<ScoreInputs> = rows
            .iter()
            .enumerate()
            .map(|(i, (n, dists))| {
                let mut d = dists.clone();
                d.resize(*n, 2);
                ScoreInputs::from_distances(format!("item{i:02}"), d)
            })
            .collect();
        let ranked = score_and_rank(inputs.iter(), Weighting::Constant, None);
        let mut direct: Vec<(f64, &str)> = inputs
            .iter()
            .map(|s| (direct_score(s.user_count as f64, s.distance_sum), s.item_id.as_str()))
            .collect();
        direct.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for (pair, item) in direct.windows(2).zip(ranked.windows(2)) {
            // strict inversions only: equal direct scores may differ in the last ulp
            let rel = (pair[0].0 - pair[1].0).abs() / pair[0].0;
            if rel > 1e-12 {
                let pos = |id: &str| ranked.iter().position(|r| r.item_id == id).unwrap();
                prop_assert!(pos(pair[0].1) < pos(pair[1].1));
            }
            prop_assert!(item[0].log_score >= item[1].log_score);
        }
    }

    #[test]
    fn more_users_or_less_distance_scores_higher(n in 1usize..50, sum in 0u64..500) {
        let base = ScoreInputs { item_id: "x".into(), user_count: n, distance_sum: sum, distances: vec![] };
        let more = ScoreInputs { user_count: n + 1, ..base.clone() };
        let farther = ScoreInputs { distance_sum: sum + 1, ..base.clone() };
        let s = item_score(&base, Weighting::Constant, n + 1).log_score;
        prop_assert!(item_score(&more, Weighting::Constant, n + 1).log_score > s);
        prop_assert!(item_score(&farther, Weighting::Constant, n + 1).log_score < s);
    }

    #[test]
    fn deeper_search_finds_a_superset(seed in any::<u64>(), depth in 1u32..8, window in prop::option::of(1usize..6)) {
        let events = random_events(seed, 40, 120);
        let graph = Graph::from_events(&events);
        for user in graph.user_ids().map(str::to_owned).collect::<Vec<_>>() {
            let shallow = traverse(&graph, &user, &params(depth, window, None));
            let deep = traverse(&graph, &user, &params(depth + 1, window, None));
            prop_assert!(shallow.keys().all(|k| deep.contains_key(k)));
        }
    }

    #[test]
    fn recommendations_are_deterministic(seed in any::<u64>(), w in prop::sample::select(Weighting::ALL.to_vec())) {
        let events = random_events(seed, 60, 200);
        let a = Graph::from_events(&events);
        let b = Graph::from_events(events.iter().rev());
        let p = ScoringParams { weighting: w, ..ScoringParams::with_depth(5) };
        for user in a.user_ids().map(str::to_owned).collect::<Vec<_>>() {
            let x = serde_json::to_string(&recommend(&a, &user, &p)).unwrap();
            let y = serde_json::to_string(&recommend(&b, &user, &p)).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn normalized_weights_stay_in_unit_interval(n in 1usize..10_000, extra in 0usize..10_000) {
        let n_max = n + extra;
        for w in [Weighting::Normalized, Weighting::LogNormalized] {
            let e = w.effective_count(n, n_max);
            prop_assert!(e > 0.0 && e <= 1.0, "{} {}", w, e);
        }
    }
}

use std::collections::BTreeSet;

use proptest::prelude::*;
use usagegraph_core::rerank::{BaseScoring, OriginalResult};
use usagegraph_core::{rerank, RerankRequest, ScoredItem};

fn scored(id: &str, log_score: f64) -> ScoredItem {
    ScoredItem {
        item_id: id.to_owned(),
        log_score,
        raw_score: Some(log_score.exp()),
    }
}

fn case() -> impl Strategy<Value = (Vec<String>, Vec<ScoredItem>, f64)> {
    (1usize..=50, prop::collection::vec((0usize..80, -30.0f64..30.0), 0..60), 0.0f64..=1.0).prop_map(
        |(len, recs, alpha)| {
            let items: Vec<String> = (0..len).map(|i| format!("d{i}")).collect();
            let mut seen = BTreeSet::new();
            let recs = recs
                .into_iter()
                .filter(|(i, _)| seen.insert(*i))
                .map(|(i, s)| scored(&format!("d{i}"), s))
                .collect();
            (items, recs, alpha)
        },
    )
}

fn request(items: &[String], recs: Vec<ScoredItem>, alpha: f64) -> RerankRequest {
    RerankRequest {
        user_id: "u".into(),
        original: OriginalResult::from_items(items.iter().cloned()),
        alpha,
        recommendations: recs,
        base: BaseScoring::Auto,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn output_is_a_permutation((items, recs, alpha) in case()) {
        let out = rerank(&request(&items, recs, alpha)).unwrap();
        let mut a = out.items.clone();
        a.sort();
        let mut b = items.clone();
        b.sort();
        prop_assert_eq!(a, b);
        prop_assert!(out.final_scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn zero_alpha_is_identity((items, recs, _alpha) in case()) {
        prop_assert_eq!(rerank(&request(&items, recs, 0.0)).unwrap().items, items);
    }

    #[test]
    fn disjoint_recommendations_change_nothing((items, recs, alpha) in case()) {
        let foreign: Vec<ScoredItem> = recs.into_iter().map(|r| scored(&format!("x{}", r.item_id), r.log_score)).collect();
        prop_assert_eq!(rerank(&request(&items, foreign, alpha)).unwrap().items, items);
    }

    #[test]
    fn boosting_never_demotes((items, recs, alpha) in case(), pick in any::<prop::sample::Index>(), bump in 0.0f64..20.0) {
        prop_assume!(!recs.is_empty());
        let target = pick.index(recs.len());
        let id = recs[target].item_id.clone();
        let before = rerank(&request(&items, recs.clone(), alpha)).unwrap();
        let mut boosted = recs;
        boosted[target].log_score += bump;
        let after = rerank(&request(&items, boosted, alpha)).unwrap();
        let rank = |r: &usagegraph_core::RerankResult| r.items.iter().position(|i| *i == id);
        if let (Some(b), Some(a)) = (rank(&before), rank(&after)) {
            prop_assert!(a <= b, "{} moved from {} to {}", id, b, a);
        }
    }
}

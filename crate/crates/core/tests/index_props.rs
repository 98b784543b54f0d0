use driving_rag::index::{build_index, AnyIndex, BuildOptions, IndexSpec, SearchParams};
use driving_rag::scenario::ScenarioId;
use proptest::prelude::*;

fn corpus() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<f32>)> {
    (1usize..6, 2usize..60).prop_flat_map(|(dim, n)| {
        (
            prop::collection::vec(prop::collection::vec(-50.0f32..50.0, dim), n),
            prop::collection::vec(-50.0f32..50.0, dim),
        )
    })
}

fn spec() -> impl Strategy<Value = IndexSpec> {
    prop_oneof![
        Just(IndexSpec::Flat),
        (1usize..6).prop_map(|clusters| IndexSpec::Ivf { clusters }),
        (2usize..12).prop_map(|m| IndexSpec::Hnsw { m }),
        Just(IndexSpec::Pq { chunks: 1 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn persistence_preserves_answers((vectors, query) in corpus(), spec in spec(), k in 1usize..8) {
        let ids: Vec<ScenarioId> = (0..vectors.len()).map(|i| format!("s{i}").into()).collect();
        let spec = match spec {
            IndexSpec::Ivf { clusters } => IndexSpec::Ivf { clusters: clusters.min(vectors.len()) },
            s => s,
        };
        let index = build_index(spec, &ids, &vectors, &BuildOptions::default()).unwrap();
        let back = AnyIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), index.to_bytes());
        let p = SearchParams::default();
        let a = index.search(&query, k, &p).unwrap();
        prop_assert_eq!(&a, &back.search(&query, k, &p).unwrap());
        prop_assert_eq!(a.len(), k.min(vectors.len()));
        prop_assert_eq!(a.truncated, k > vectors.len());
        prop_assert!(a.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn flat_top1_is_the_brute_force_minimum((vectors, query) in corpus()) {
        let ids: Vec<ScenarioId> = (0..vectors.len()).map(|i| format!("s{i}").into()).collect();
        let index = build_index(IndexSpec::Flat, &ids, &vectors, &BuildOptions::default()).unwrap();
        let r = index.search(&query, 1, &SearchParams::default()).unwrap();
        let best = vectors
            .iter()
            .map(|v| v.iter().zip(&query).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((r.distances[0] as f64 - best).abs() <= 1e-3 * best.max(1.0));
    }
}

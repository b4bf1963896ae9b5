use proptest::prelude::*;

use readcomp::config::apply_override;
use readcomp::formats::{read_predictions, read_results_csv, write_predictions, write_results_csv};
use readcomp_core::metrics::Prediction;

fn prediction() -> impl Strategy<Value = Prediction> {
    (
        "[a-z]{1,6}",
        any::<String>(),
        -1e6f64..1e6,
        proptest::option::of(prop::collection::vec(any::<String>(), 0..3)),
    )
        .prop_map(|(id, text, score, answers)| Prediction {
            score,
            answers,
            ..Prediction::text_only(id, text)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_round_trip(preds in prop::collection::btree_map("[a-z]{1,6}", prediction(), 0..6)) {
        let preds: Vec<Prediction> = preds.into_iter().map(|(id, p)| Prediction { id, ..p }).collect();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("p.jsonl");
        write_predictions(&path, &preds).unwrap();
        prop_assert_eq!(read_predictions(&path, None).unwrap(), preds);
    }

    #[test]
    fn results_csv_round_trip(rows in prop::collection::vec(("[A-Za-z ,\"-]{1,8}", "[A-Za-z-]{1,8}", 0.0f64..100.0), 0..8)) {
        let rows: Vec<(String, String, f64)> = rows;
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("r.csv");
        write_results_csv(&path, &rows).unwrap();
        prop_assert_eq!(read_results_csv(&path).unwrap(), rows);
    }

    #[test]
    fn overrides_set_nested_values(n in 0i64..1_000_000, word in "[a-z]{1,8}") {
        let mut table: toml::Table = toml::from_str("[train]\nseed = 1\n[[experiments]]\nname = \"x\"\n").unwrap();
        apply_override(&mut table, &format!("train.seed={n}")).unwrap();
        apply_override(&mut table, &format!("experiments.0.name={word}")).unwrap();
        prop_assert_eq!(table["train"]["seed"].as_integer(), Some(n));
        prop_assert_eq!(table["experiments"][0]["name"].as_str(), Some(word.as_str()));
    }
}

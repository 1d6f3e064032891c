use cal_core::cartography::{
    assign_cartography_labels, compute_confidence, compute_correctness, compute_variability,
    datamap_rows, DataMapStats, DynamicsLog, DATAMAP_HEADER,
};
use cal_core::data_io::tables::{read_datamap, render_datamap, write_atomic, Provenance};
use ndarray::Array2;
use proptest::prelude::*;

fn log(probs: Vec<Vec<f64>>, correct: Vec<Vec<bool>>) -> DynamicsLog {
    let (n, e) = (probs.len(), probs[0].len());
    DynamicsLog::new(
        (0..n).collect(),
        Array2::from_shape_vec((n, e), probs.concat()).unwrap(),
        Array2::from_shape_vec((n, e), correct.concat()).unwrap(),
    )
    .unwrap()
}

fn stats_with_correctness(phis: &[f64], epochs: usize) -> DataMapStats {
    let correct: Vec<Vec<bool>> = phis
        .iter()
        .map(|&phi| {
            let hits = (phi * epochs as f64).round() as usize;
            (0..epochs).map(|j| j < hits).collect()
        })
        .collect();
    let probs = vec![vec![0.5; epochs]; phis.len()];
    DataMapStats::from_log(&log(probs, correct))
}

#[test]
fn single_instance_examples() {
    let l = log(vec![vec![0.2, 0.4, 0.6]], vec![vec![true, false, false]]);
    assert!((compute_confidence(&l)[0] - 0.4).abs() < 1e-15);
    assert!((compute_variability(&l)[0] - (0.08f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!((compute_correctness(&l)[0] - 1.0 / 3.0).abs() < 1e-15);

    let alternating = log(vec![vec![0.0, 1.0, 0.0, 1.0]], vec![vec![false, true, false, true]]);
    assert_eq!(compute_variability(&alternating)[0], 0.5);

    let c: Vec<bool> = (0..10).map(|j| j < 3).collect();
    let l = log(vec![vec![0.5; 10]], vec![c]);
    assert!((compute_correctness(&l)[0] - 0.3).abs() < 1e-15);
    assert_eq!(compute_variability(&l)[0], 0.0);
}

#[test]
fn threshold_is_strict() {
    let stats = stats_with_correctness(&[0.2, 0.3, 0.0, 1.0], 10);
    let labels = assign_cartography_labels(&stats, 0.2).unwrap();
    assert_eq!(labels.labels, vec![0, 1, 0, 1]);
    let labels = assign_cartography_labels(&stats, 0.0).unwrap();
    assert_eq!(labels.labels, vec![1, 1, 0, 1]);
    assert!(assign_cartography_labels(&stats, 1.0).is_err());
}

#[test]
fn invalid_logs_are_rejected() {
    let bad = DynamicsLog::new(
        vec![0],
        Array2::from_elem((1, 2), 1.5),
        Array2::from_elem((1, 2), true),
    );
    assert!(bad.is_err());
    let shape = DynamicsLog::new(vec![0], Array2::zeros((1, 2)), Array2::from_elem((1, 3), true));
    assert!(shape.is_err());
}

fn export(rows: &[cal_core::cartography::DataMapRow]) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("datamap.csv");
    write_atomic(&path, &render_datamap(&Provenance::default(), rows)).unwrap();
    (dir, path)
}

#[test]
fn empty_export_is_header_only() {
    let (_dir, path) = export(&[]);
    let content = std::fs::read_to_string(&path).unwrap();
    let body: Vec<&str> = content.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, vec![DATAMAP_HEADER.join(",")]);
    assert!(read_datamap(&path).unwrap().1.is_empty());
}

#[test]
fn export_round_trips() {
    let probs = vec![
        vec![0.123456789012, 0.9, 0.31],
        vec![0.0, 1.0, 0.0],
        vec![0.777777777777, 0.7777, 0.7],
    ];
    let correct = vec![
        vec![false, true, false],
        vec![false, true, false],
        vec![true, true, true],
    ];
    let stats = DataMapStats::from_log(&log(probs, correct));
    let labels = assign_cartography_labels(&stats, 0.2).unwrap();
    let names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    let gold: Vec<String> = ["pos", "neg", "pos"].iter().map(|s| s.to_string()).collect();
    let rows = datamap_rows(&stats, &labels, &names, &gold).unwrap();
    let (_dir, path) = export(&rows);

    let content = std::fs::read_to_string(&path).unwrap();
    let body: Vec<&str> = content.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 4);
    assert_eq!(body[0], "id,confidence,variability,correctness,gold_label,cartography_label");
    assert!(body[1].starts_with("x,"));

    let (_, back) = read_datamap(&path).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.gold_label, b.gold_label);
        assert_eq!(a.cartography_label, b.cartography_label);
        for (x, y) in [
            (a.confidence, b.confidence),
            (a.variability, b.variability),
            (a.correctness, b.correctness),
        ] {
            assert!((x - y).abs() <= 5e-10, "{x} vs {y}");
        }
    }
}

fn matrix(n: usize, e: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    (
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, e), n),
        prop::collection::vec(prop::collection::vec(any::<bool>(), e), n),
    )
}

proptest! {
    #[test]
    fn variance_identity((probs, correct) in (1usize..8, 1usize..12).prop_flat_map(|(n, e)| matrix(n, e))) {
        let l = log(probs.clone(), correct);
        let mu = compute_confidence(&l);
        let sigma = compute_variability(&l);
        for (i, row) in probs.iter().enumerate() {
            let mean_sq = row.iter().map(|p| p * p).sum::<f64>() / row.len() as f64;
            prop_assert!((sigma[i] * sigma[i] + mu[i] * mu[i] - mean_sq).abs() < 1e-12);
            prop_assert!((0.0..=0.5).contains(&sigma[i]));
        }
    }

    #[test]
    fn labels_partition_the_instances(
        (probs, correct) in (1usize..20, 1usize..12).prop_flat_map(|(n, e)| matrix(n, e)),
        t_cor in 0.0f64..1.0,
    ) {
        let stats = DataMapStats::from_log(&log(probs, correct));
        let labels = assign_cartography_labels(&stats, t_cor).unwrap();
        prop_assert_eq!(labels.high_count() + labels.low_count(), stats.len());
        for (l, phi) in labels.labels.iter().zip(&stats.correctness) {
            prop_assert!(*l <= 1);
            prop_assert_eq!(*l == 1, *phi > t_cor);
        }
    }
}

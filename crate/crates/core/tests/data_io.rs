use std::io::Write;
use std::path::{Path, PathBuf};

use cal_core::data_io::dataset::{load_dataset, DatasetFormat, RawDataset, Record};
use cal_core::data_io::features::{embed_text, featurize, featurize_hashed, hash_text, EmbeddingTable};
use cal_core::data_io::svg::{curves_svg, datamap_svg, mean_curve, Frame};
use cal_core::data_io::load_pool;
use cal_core::simulator::config::DatasetSource;
use cal_core::Error;
use proptest::prelude::*;

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::File::create(&path).unwrap().write_all(content.as_bytes()).unwrap();
    path
}

const NEWS_LABELS: [&str; 4] = ["World", "Sports", "Business", "Sci/Tech"];
const QUESTION_LABELS: [&str; 6] = ["ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM"];

fn news_csv(rows: usize) -> String {
    let mut s = String::from("id,label,text\n");
    for i in 0..rows {
        let label = NEWS_LABELS[i % 4];
        s.push_str(&format!("n{i},{label},\"story {i} about {} markets, games and science\"\n", label.to_lowercase()));
    }
    s
}

fn question_jsonl(rows: usize) -> String {
    let mut s = String::new();
    for i in 0..rows {
        let label = QUESTION_LABELS[i % 6];
        s.push_str(&format!("{{\"text\": \"What is question number {i} ?\", \"label\": \"{label}\"}}\n"));
    }
    s
}

#[test]
fn three_lines_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "three.jsonl",
        "{\"id\": \"q\", \"text\": \"first\", \"label\": \"a\"}\n{\"id\": \"p\", \"text\": \"second\", \"label\": \"b\"}\n{\"id\": \"o\", \"text\": \"third\", \"label\": \"a\"}\n",
    );
    let ds = load_dataset(&p, DatasetFormat::Jsonl, None).unwrap();
    let texts: Vec<&str> = ds.records.iter().map(|r| r.text.as_str()).collect();
    assert_eq!(texts, vec!["first", "second", "third"]);
    assert_eq!(ds.ids(), vec!["q", "p", "o"]);
}

#[test]
fn duplicate_ids_and_unknown_labels_fail_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "dup.csv", "id,text,label\n1,a,x\n2,b,y\n1,c,x\n");
    match load_dataset(&p, DatasetFormat::Csv, None) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    let p = write(dir.path(), "test.csv", "text,label\na,x\nb,z\n");
    let vocab = vec!["x".to_string(), "y".to_string()];
    match load_dataset(&p, DatasetFormat::Csv, Some(&vocab)) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("unknown label"));
        }
        other => panic!("{other:?}"),
    }
    let p = write(dir.path(), "bad.jsonl", "{\"text\": \"a\", \"label\": \"x\"}\nnot json\n");
    assert!(matches!(load_dataset(&p, DatasetFormat::Jsonl, None), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn class_counts_of_news_and_question_files() {
    let dir = tempfile::tempdir().unwrap();
    let news = write(dir.path(), "news.csv", &news_csv(40));
    let questions = write(dir.path(), "questions.jsonl", &question_jsonl(60));
    assert_eq!(DatasetFormat::from_path(&news), DatasetFormat::Csv);
    assert_eq!(load_dataset(&news, DatasetFormat::Csv, None).unwrap().class_count(), 4);
    assert_eq!(load_dataset(&questions, DatasetFormat::Jsonl, None).unwrap().class_count(), 6);
}

#[test]
fn load_pool_featurizes_both_splits() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(dir.path(), "train.jsonl", &question_jsonl(60));
    let test = write(dir.path(), "test.jsonl", &question_jsonl(12));
    let source = DatasetSource::Files {
        train: train.clone(),
        test: test.clone(),
        format: None,
        embeddings: None,
        max_len: 42,
        hash_dim: 64,
    };
    let pool = load_pool(&source).unwrap();
    assert_eq!(pool.classes(), 6);
    assert_eq!((pool.train.len(), pool.test.len(), pool.dim()), (60, 12, 64));
    assert_eq!(pool, load_pool(&source).unwrap());

    let emb = write(dir.path(), "vectors.txt", "3 2\nwhat 1 0\nquestion 0 1\nnumber 0.5 0.5\n");
    let source = DatasetSource::Files {
        train,
        test,
        format: None,
        embeddings: Some(emb),
        max_len: 42,
        hash_dim: 64,
    };
    let pool = load_pool(&source).unwrap();
    assert_eq!(pool.dim(), 2);
    assert_eq!(pool.train.features.row(0).to_vec(), vec![1.5, 1.5]);
}

fn table() -> EmbeddingTable {
    EmbeddingTable::from_pairs(
        3,
        vec![
            ("the".into(), vec![1.0, 0.0, 0.0]),
            ("cat".into(), vec![0.0, 2.0, 0.5]),
            ("sat".into(), vec![-1.0, 1.0, 1.0]),
            ("mat".into(), vec![0.25, 0.25, 0.25]),
        ],
    )
    .unwrap()
}

#[test]
fn embedding_sums() {
    let t = table();
    assert_eq!(embed_text("cat", &t, 42), vec![0.0, 2.0, 0.5]);
    assert_eq!(embed_text("The cat!", &t, 42), vec![1.0, 2.0, 0.5]);
    assert_eq!(embed_text("zebra", &t, 42), vec![0.0; 3]);
    let long = "the cat sat on the mat";
    assert_eq!(embed_text(long, &t, 3), embed_text("the cat sat", &t, 42));

    let raw = RawDataset {
        records: vec![Record { id: "0".into(), text: "sat sat".into(), label: "x".into() }],
        labels: vec!["x".into()],
    };
    assert_eq!(featurize(&raw, &t, 42).features.row(0).to_vec(), vec![-2.0, 2.0, 2.0]);
}

#[test]
fn embedding_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = write(dir.path(), "ragged.txt", "a 1 2\nb 1\n");
    assert!(EmbeddingTable::load(&ragged).is_err());
    let dup = write(dir.path(), "dup.txt", "a 1 2\na 3 4\n");
    assert!(EmbeddingTable::load(&dup).is_err());
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn hashed_features() {
    assert_eq!(hash_text("", 16, 1), vec![0.0; 16]);
    assert_eq!(hash_text("... !!", 16, 1), vec![0.0; 16]);
    let text = "Which river flows through the capital of Egypt?";
    assert_eq!(hash_text(text, 300, 7), hash_text(text, 300, 7));
    let near = "Which river flows through the capital city of Egypt?";
    let other = "How many moons does the planet Jupiter have today";
    let v = hash_text(text, 300, 7);
    assert!(cosine(&v, &hash_text(near, 300, 7)) > cosine(&v, &hash_text(other, 300, 7)));
    let norm: f64 = hash_text("alpha beta gamma delta", 1 << 20, 7).iter().map(|x| x * x).sum();
    assert!((norm - 1.0).abs() < 1e-12);

    let raw = RawDataset { records: vec![], labels: vec![] };
    assert!(featurize_hashed(&raw, 1, 0).is_err());
}

proptest! {
    #[test]
    fn sum_pooling_is_permutation_invariant(
        tokens in prop::collection::vec(prop::sample::select(vec!["the", "cat", "sat", "mat", "dog"]), 0..10),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let t = table();
        let mut shuffled = tokens.clone();
        shuffled.shuffle(&mut cal_core::rng::stream(seed, "perm", 0));
        let a = embed_text(&tokens.join(" "), &t, 42);
        let b = embed_text(&shuffled.join(" "), &t, 42);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let h1 = hash_text(&tokens.join(" "), 32, 3);
        let h2 = hash_text(&shuffled.join(" "), 32, 3);
        prop_assert_eq!(h1, h2);
    }
}

fn plot_frame(doc: &roxmltree::Document) -> Frame {
    let g = doc
        .descendants()
        .find(|n| n.attribute("id") == Some("plot"))
        .expect("plot group");
    let svg = doc.root_element();
    let num = |node: roxmltree::Node, a: &str| node.attribute(a).unwrap().parse::<f64>().unwrap();
    let rect = doc
        .descendants()
        .find(|n| n.has_tag_name("path"))
        .expect("axes path");
    // axes path starts at the top-left corner of the plot area: M{margin} {margin}
    let d = rect.attribute("d").unwrap();
    let margin: f64 = d[1..].split_whitespace().next().unwrap().parse().unwrap();
    Frame {
        width: num(svg, "width"),
        height: num(svg, "height"),
        margin,
        x_min: num(g, "data-x-min"),
        x_max: num(g, "data-x-max"),
        y_min: num(g, "data-y-min"),
        y_max: num(g, "data-y-max"),
    }
}

#[test]
fn datamap_points_invert() {
    let var = [0.1234, 0.0, 0.5, 0.31];
    let conf = [0.77, 0.01, 0.5, 0.99];
    let corr = [0.3, 0.0, 1.0, 0.7];
    let svg = datamap_svg("map", &var, &conf, &corr, 10).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let frame = plot_frame(&doc);
    let circles: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("circle")).collect();
    assert_eq!(circles.len(), 4);
    for (i, c) in circles.iter().enumerate() {
        let px: f64 = c.attribute("cx").unwrap().parse().unwrap();
        let py: f64 = c.attribute("cy").unwrap().parse().unwrap();
        let (x, y) = frame.unmap(px, py);
        assert!((x - var[i]).abs() <= 0.005 * 0.5, "{x} vs {}", var[i]);
        assert!((y - conf[i]).abs() <= 0.005, "{y} vs {}", conf[i]);
        let level: usize = c.attribute("data-level").unwrap().parse().unwrap();
        assert_eq!(level, (corr[i] * 10.0).round() as usize);
    }

    let single = datamap_svg("one", &[0.2], &[0.6], &[0.5], 4).unwrap();
    let doc = roxmltree::Document::parse(&single).unwrap();
    let frame = plot_frame(&doc);
    let circles: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("circle")).collect();
    assert_eq!(circles.len(), 1);
    let (px, py) = frame.map(0.2, 0.6);
    assert!((circles[0].attribute("cx").unwrap().parse::<f64>().unwrap() - px).abs() < 1e-3);
    assert!((circles[0].attribute("cy").unwrap().parse::<f64>().unwrap() - py).abs() < 1e-3);
}

fn polylines(doc: &roxmltree::Document) -> Vec<(String, Vec<(f64, f64)>)> {
    doc.descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| {
            let pts = n
                .attribute("points")
                .unwrap()
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect();
            (n.attribute("data-label").unwrap().to_string(), pts)
        })
        .collect()
}

#[test]
fn constant_curve_is_horizontal() {
    let rows: Vec<(usize, f64)> = (0..5).flat_map(|i| [(100 + 10 * i, 0.5), (100 + 10 * i, 0.5)]).collect();
    let svg = curves_svg("t", &[mean_curve("flat", &rows)]).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let lines = polylines(&doc);
    assert_eq!(lines.len(), 1);
    let ys: Vec<f64> = lines[0].1.iter().map(|p| p.1).collect();
    assert!(ys.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn two_curves_invert_to_seed_means() {
    let a: Vec<(usize, f64)> = vec![(10, 0.5), (10, 0.6), (20, 0.7), (20, 0.72), (30, 0.8), (30, 0.9)];
    let b: Vec<(usize, f64)> = vec![(10, 0.4), (10, 0.42), (20, 0.61), (20, 0.63), (30, 0.7), (30, 0.74)];
    let curves = [mean_curve("cal", &a), mean_curve("random", &b)];
    let svg = curves_svg("t", &curves).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let frame = plot_frame(&doc);
    let lines = polylines(&doc);
    assert_eq!(lines.len(), 2);
    let legend = doc
        .descendants()
        .find(|n| n.attribute("id") == Some("legend"))
        .unwrap();
    let entries: Vec<&str> = legend.descendants().filter(|n| n.has_tag_name("text")).filter_map(|n| n.text()).collect();
    assert_eq!(entries, vec!["cal", "random"]);

    let means = [[0.55, 0.71, 0.85], [0.41, 0.62, 0.72]];
    for (k, (label, pts)) in lines.iter().enumerate() {
        assert_eq!(label, &curves[k].label);
        for (j, &(px, py)) in pts.iter().enumerate() {
            let (x, y) = frame.unmap(px, py);
            assert!((x - (10.0 + 10.0 * j as f64)).abs() < 0.005 * 20.0);
            assert!((y - means[k][j]).abs() <= 0.005 * means[k][j], "{y} vs {}", means[k][j]);
        }
    }

    let short = mean_curve("short", &a[..2]);
    assert!(curves_svg("t", &[curves[0].clone(), short]).is_err());
}

#[test]
fn labels_are_escaped() {
    let svg = curves_svg("a < b & c", &[mean_curve("x\"<y>", &[(1, 0.5), (2, 0.6)])]).unwrap();
    assert!(roxmltree::Document::parse(&svg).is_ok());
}

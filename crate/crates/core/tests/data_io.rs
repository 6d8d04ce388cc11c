mod common;

use std::io::Write;

use ogeec::data::{
    generate_synthetic_with_clusters, parse_dataset, parse_str, LabelSet, SparseDataset,
    SparseVector, SyntheticParams,
};
use ogeec::Error;
use proptest::prelude::*;

#[test]
fn parse_file_reports_path_and_line() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "2 4 2\n0 0:1.0\n1 4:0.5\n").unwrap();
    match parse_dataset(f.path()) {
        Err(Error::Parse { line, path, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(path, f.path());
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn parse_file_fixture() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "3 4 2\n0 0:1.0 2:2.0\n1 1:0.5\n0,1 3:1.0\n").unwrap();
    let ds = parse_dataset(f.path()).unwrap();
    assert_eq!((ds.n(), ds.d(), ds.num_labels()), (3, 4, 2));
    assert_eq!(ds.label_frequencies(), &[2, 2]);
}

#[test]
fn within_cluster_similarity_exceeds_cross_cluster() {
    let (ds, assign) = generate_synthetic_with_clusters(&SyntheticParams {
        n: 2000,
        d: 20_000,
        num_labels: 200,
        sparsity: 20,
        labels_per_sample: 3,
        clusters: 20,
        seed: 3,
    })
    .unwrap();
    let (mut within, mut cross) = ((0.0, 0usize), (0.0, 0usize));
    for i in (0..ds.n()).step_by(7) {
        for j in (i + 1..ds.n()).step_by(13) {
            let c = common::cosine(&ds, i, j);
            if assign[i] == assign[j] {
                within = (within.0 + c, within.1 + 1);
            } else {
                cross = (cross.0 + c, cross.1 + 1);
            }
        }
    }
    let (w, x) = (within.0 / within.1 as f64, cross.0 / cross.1 as f64);
    assert!(within.1 > 100 && cross.1 > 100);
    assert!(w > x + 0.1, "within {w} cross {x}");
}

fn arb_dataset() -> impl Strategy<Value = SparseDataset> {
    (1usize..30, 1usize..8).prop_flat_map(|(d, l)| {
        let row = (
            proptest::collection::btree_map(0..d as u32, -1.0e3f32..1.0e3, 0..d.min(6)),
            proptest::collection::btree_set(0..l as u32, 0..l.min(4)),
        );
        proptest::collection::vec(row, 1..12).prop_map(move |rows| {
            let mut b = SparseDataset::builder(d, l);
            for (f, ls) in rows {
                let v = SparseVector::new(f.into_iter().collect()).unwrap();
                b.push(&v, &LabelSet::new(ls.into_iter().collect())).unwrap();
            }
            b.finish()
        })
    })
}

proptest! {
    #[test]
    fn text_round_trip(ds in arb_dataset()) {
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let again = parse_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(&again, &ds);
        // order preserved sample by sample
        for i in 0..ds.n() {
            prop_assert_eq!(again.features(i), ds.features(i));
            prop_assert_eq!(again.labels(i), ds.labels(i));
        }
    }

    #[test]
    fn frequencies_count_assignments(ds in arb_dataset()) {
        let total: u32 = ds.label_frequencies().iter().sum();
        let assignments: usize = (0..ds.n()).map(|i| ds.labels(i).len()).sum();
        prop_assert_eq!(total as usize, assignments);
        for (l, &f) in ds.label_frequencies().iter().enumerate() {
            let direct = (0..ds.n()).filter(|&i| ds.labels(i).contains(&(l as u32))).count();
            prop_assert_eq!(f as usize, direct);
        }
    }
}

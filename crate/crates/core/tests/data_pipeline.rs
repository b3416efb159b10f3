use std::fs;
use std::path::Path;

use fpbandit::data::{
    filter_missing, load_screen, pca_project, prepare, PrepareOptions, RawScreen, ScreenPaths,
};
use fpbandit::rng_from_seed;
use fpbandit::tensor::Matrix;
use rand::Rng;

/// Writes the 8-cell × 5-drug toy screen.
///
/// Missing pattern (`.` = missing):
///
/// ```text
///       d0 d1 d2 d3 d4
///   c0   x  x  x  x  x
///   c1   x  .  x  x  x
///   c2   x  x  x  x  x
///   c3   .  .  .  .  x    4/5 missing -> dropped
///   c4   x  x  x  x  x
///   c5   .  .  .  .  .    5/5 missing -> dropped
///   c6   x  x  x  .  x
///   c7   x  x  x  x  x
/// ```
///
/// After the cell filter, d1 (missing in c1) and d3 (missing in c6) are
/// dropped. Surviving cells have gene columns that are uncorrelated with
/// variances 4.8 and 0.8, so the principal axes are the gene axes.
fn write_toy(dir: &Path) {
    let expression = "\
cell_id,g0,g1
c0,0,6
c1,4,6
c2,0,4
c3,100,-50
c4,4,4
c5,-100,70
c6,0,5
c7,4,5
";
    let response = "\
cell_id,d0,d1,d2,d3,d4
c0,0,1,10,3,5
c1,2,NA,8,3,5
c2,4,100,6,3,5
c3,NA,,NA,NA,-40
c4,6,2,4,3,5
c5,NA,NA,NA,NA,NA
c6,8,2,2,,5
c7,10,2,0,3,7.5
";
    let fingerprints = "\
drug_id,b0,b1,b2
d0,1,0,0
d1,0,1,0
d2,0,0,1
d3,1,1,0
d4,0,1,1
";
    fs::write(dir.join("expression.csv"), expression).unwrap();
    fs::write(dir.join("response.csv"), response).unwrap();
    fs::write(dir.join("fingerprints.csv"), fingerprints).unwrap();
}

fn assert_matrix(actual: &Matrix, expected: &[&[f64]], tol: f64) {
    assert_eq!(actual.rows(), expected.len());
    for (r, row) in expected.iter().enumerate() {
        assert_eq!(actual.row(r).len(), row.len());
        for (c, &e) in row.iter().enumerate() {
            assert!(
                (actual.get(r, c) - e).abs() <= tol,
                "({r},{c}): {} vs {e}",
                actual.get(r, c)
            );
        }
    }
}

#[test]
fn toy_screen_matches_hand_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    let raw = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap();
    assert_eq!(raw.missing_count(), 1 + 4 + 5 + 1);
    let prepared = prepare(&raw, PrepareOptions::default()).unwrap();

    assert_eq!(prepared.cell_ids, ["c0", "c1", "c2", "c4", "c6", "c7"]);
    assert_eq!(prepared.drug_ids, ["d0", "d2", "d4"]);
    assert_eq!(prepared.provenance.dropped_cells, ["c3", "c5"]);
    assert_eq!(prepared.provenance.dropped_drugs, ["d1", "d3"]);
    assert_eq!(prepared.provenance.components, 2);
    assert_eq!(prepared.context_names(), ["pc1", "pc2"]);

    // PC1 = centered g0 = (-2, 2, -2, 2, -2, 2); PC2 = centered g1 = (1, 1, -1, -1, 0, 0).
    assert_matrix(
        &prepared.contexts,
        &[
            &[0.0, 1.0],
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[1.0, 0.0],
            &[0.0, 0.5],
            &[1.0, 0.5],
        ],
        1e-12,
    );
    let ratio = &prepared.provenance.explained_variance_ratio;
    assert!((ratio[0] - 4.8 / 5.6).abs() < 1e-12 && (ratio[1] - 0.8 / 5.6).abs() < 1e-12);

    // Responses scaled over the surviving table: min 0, max 10.
    assert_matrix(
        &prepared.responses,
        &[
            &[0.0, 1.0, 0.5],
            &[0.2, 0.8, 0.5],
            &[0.4, 0.6, 0.5],
            &[0.6, 0.4, 0.5],
            &[0.8, 0.2, 0.5],
            &[1.0, 0.0, 0.75],
        ],
        1e-12,
    );
    assert_matrix(
        prepared.actions.features(),
        &[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]],
        0.0,
    );
    assert!(prepared.responses.data().iter().all(|v| !v.is_nan()));
}

#[test]
fn cells_are_filtered_before_drugs() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    let raw = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap();
    // c3 misses d0 and d2 but is dropped first, so both drugs survive.
    let filtered = filter_missing(&raw).unwrap();
    assert_eq!(filtered.drug_ids, ["d0", "d2", "d4"]);
    assert_eq!(filtered.missing_count(), 0);
}

fn random_screen(cells: usize, genes: usize, drugs: usize, seed: u64) -> RawScreen {
    let mut rng = rng_from_seed(seed);
    RawScreen {
        cell_ids: (0..cells).map(|i| format!("cell{i}")).collect(),
        gene_ids: (0..genes).map(|i| format!("gene{i}")).collect(),
        expression: Matrix::from_fn(cells, genes, |_, _| rng.random_range(-3.0..3.0)),
        drug_ids: (0..drugs).map(|i| format!("drug{i}")).collect(),
        response: Matrix::from_fn(cells, drugs, |_, _| rng.random_range(1.0..9.0)),
        fingerprints: Matrix::from_fn(drugs, drugs, |r, c| f64::from(u8::from(r == c))),
    }
}

#[test]
fn prepare_is_idempotent() {
    for (cells, genes, dims) in [(12, 30, 5), (20, 6, 6), (9, 9, 500)] {
        let raw = random_screen(cells, genes, 4, cells as u64);
        let once = prepare(
            &raw,
            PrepareOptions {
                dims,
                negate_response: false,
            },
        )
        .unwrap();
        let twice = prepare(
            &once.to_raw(),
            PrepareOptions {
                dims,
                negate_response: false,
            },
        )
        .unwrap();
        assert_eq!(once.cell_ids, twice.cell_ids);
        assert_eq!(once.drug_ids, twice.drug_ids);
        for (a, b) in [
            (&once.contexts, &twice.contexts),
            (&once.responses, &twice.responses),
        ] {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn prepared_values_stay_in_unit_interval() {
    let raw = random_screen(15, 40, 5, 3);
    let p = prepare(
        &raw,
        PrepareOptions {
            dims: 8,
            negate_response: true,
        },
    )
    .unwrap();
    // 15 cells, 40 genes: at most 15 components.
    assert!(p.contexts.cols() <= 15);
    for m in [&p.contexts, &p.responses] {
        assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn pca_full_rank_reconstruction() {
    let mut rng = rng_from_seed(8);
    // Covariance path (G ≤ N) and Gram path (G > N).
    for (n, g) in [(20, 8), (6, 15)] {
        let x = Matrix::from_fn(n, g, |_, _| rng.random_range(-1.0..1.0));
        let rank = n.min(g);
        let pca = pca_project(&x, rank).unwrap();
        let recon = pca.scores.matmul_t(&pca.loadings).unwrap();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..g {
                let centered = x.get(r, c) - pca.means[c];
                worst = worst.max((recon.get(r, c) - centered).abs());
            }
        }
        // With G > N one direction is lost to centering; reconstruction is
        // still exact because the centered rows span at most N - 1 dimensions.
        assert!(worst < 1e-8, "{n}x{g}: {worst:e}");
        let gram = pca.scores.t_matmul(&pca.scores).unwrap();
        let scale = (0..rank).map(|i| gram.get(i, i)).fold(0.0f64, f64::max);
        for i in 0..rank {
            for j in 0..rank {
                if i != j {
                    assert!(gram.get(i, j).abs() < 1e-8 * scale);
                }
            }
        }
    }
}

#[test]
fn prepared_screen_round_trips_through_disk() {
    let raw = random_screen(10, 12, 3, 5);
    let p = prepare(
        &raw,
        PrepareOptions {
            dims: 4,
            negate_response: false,
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    p.write(dir.path()).unwrap();
    assert!(dir.path().join("meta.json").exists());
    let back = load_screen(&ScreenPaths::in_dir(dir.path())).unwrap();
    assert_eq!(back.cell_ids, p.cell_ids);
    assert_eq!(back.gene_ids, p.context_names());
    for (a, b) in back.expression.data().iter().zip(p.contexts.data()) {
        assert_eq!(a, b, "shortest round-trip formatting is lossless");
    }
}

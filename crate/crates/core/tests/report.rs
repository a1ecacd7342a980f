mod common;

use common::instance;
use rtcp::posterior::{Classification, PosteriorRow};
use rtcp::report::{aligned_changepoint, analyze, item_means_csv, item_table, offset_means_csv, structural_table};
use rtcp::*;

fn row(probs: Vec<f64>, changed: bool) -> PosteriorRow {
    PosteriorRow {
        mode: 0,
        mean: 0.0,
        p_change: 1.0 - probs.last().unwrap(),
        entropy_normalized: 0.0,
        credible_set: Vec::new(),
        classification: if changed {
            Classification::Changed
        } else {
            Classification::Unchanged
        },
        probs,
    }
}

/// J = 6, c = 2: support is 3..=6. Changers shift by +1 after tau.
fn two_groups() -> (RtMatrix, PosteriorTable) {
    let mut rows = Vec::new();
    let mut post = Vec::new();
    for _ in 0..3 {
        rows.push(vec![0.0; 6]);
        post.push(row(vec![0.0, 0.1, 0.1, 0.8], false));
    }
    for tau in [3usize, 4] {
        rows.push((1..=6).map(|m| if m > tau { 1.0 } else { 0.0 }).collect());
        let mut probs = vec![0.05; 4];
        probs[tau - 3] = 0.85;
        post.push(row(probs, true));
    }
    let table = PosteriorTable {
        first_tau: 3,
        alpha: 0.05,
        threshold: 0.5,
        rows: post,
    };
    (RtMatrix::from_log_rows(rows).unwrap(), table)
}

fn parse(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn aligned_changepoint_ignores_no_change() {
    assert_eq!(aligned_changepoint(&[0.1, 0.3, 0.6], 4), Some(5));
    assert_eq!(aligned_changepoint(&[0.2, 0.2, 0.6], 4), Some(4));
    assert_eq!(aligned_changepoint(&[1.0], 4), None);
}

#[test]
fn offset_zero_is_the_last_baseline_item() {
    let (data, table) = two_groups();
    let lines = parse(&offset_means_csv(&data, &table).unwrap());
    assert_eq!(lines[0], ["offset", "n", "mean_log_rt", "mean_rt"]);
    let get = |offset: i64| lines.iter().find(|l| l[0] == offset.to_string()).cloned();
    // Items at or before tau are unshifted; items after are shifted.
    assert_eq!(get(0).unwrap()[2], "0");
    assert_eq!(get(1).unwrap()[2], "1");
    assert_eq!(get(1).unwrap()[1], "2");
    // tau = 3 contributes offsets -2..=3, tau = 4 contributes -3..=2.
    assert_eq!(get(3).unwrap()[1], "1");
    assert_eq!(get(-3).unwrap()[1], "1");
    assert!(get(4).is_none());
    let raw: f64 = get(1).unwrap()[3].parse().unwrap();
    assert!((raw - 1f64.exp()).abs() < 1e-12);
}

#[test]
fn item_means_separate_the_groups() {
    let (data, table) = two_groups();
    let lines = parse(&item_means_csv(&data, &table).unwrap());
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[1], ["1", "3", "0", "1", "2", "0", "1"]);
    assert_eq!(lines[4][4..6], ["2".to_string(), "0.5".to_string()]);
    assert_eq!(lines[6][1..3], ["3".to_string(), "0".to_string()]);
    assert_eq!(lines[6][5], "1");
}

#[test]
fn no_changers_give_a_header_only_offset_file() {
    let (data, mut table) = two_groups();
    for r in &mut table.rows {
        r.classification = Classification::Unchanged;
    }
    assert_eq!(
        offset_means_csv(&data, &table).unwrap(),
        "offset,n,mean_log_rt,mean_rt\n"
    );
    let (data, table) = two_groups();
    let short = RtMatrix::from_log_rows(data.rows().take(4).map(<[f64]>::to_vec).collect()).unwrap();
    assert!(matches!(offset_means_csv(&short, &table), Err(Error::Data(_))));
}

#[test]
fn bundle_round_trips_through_json() {
    let inst = instance(21, 150, 8, 3);
    let provenance = Provenance::new("fit", &"test", 21).unwrap();
    let bundle = analyze(
        &inst.data,
        &inst.config,
        &FitOptions::default(),
        &AnalysisOptions::default(),
        provenance,
    )
    .unwrap();
    let text = serde_json::to_string(&bundle).unwrap();
    let back: ResultBundle = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    for (a, b) in bundle.fit.theta_hat.values().iter().zip(back.fit.theta_hat.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back.posterior, bundle.posterior);
    assert_eq!(item_table(&back), item_table(&bundle));
    assert_eq!(structural_table(&back), structural_table(&bundle));
    assert_eq!(bundle.structural.len(), 3);
    assert!(bundle
        .structural
        .iter()
        .filter(|r| r.name != "psi2")
        .all(|r| r.lrt.is_some()));
}

#[test]
fn stamp_and_hash() {
    let p = Provenance::new("fit", &vec![1, 2, 3], 9).unwrap();
    assert_eq!(p.config_hash.len(), 64);
    assert_eq!(p.config_hash, report::config_hash(&vec![1, 2, 3]).unwrap());
    assert_ne!(p.config_hash, report::config_hash(&vec![1, 2]).unwrap());
    assert_eq!(
        p.stamp(),
        format!(
            "rtcp {} fit | config sha256:{} | seed 9",
            p.version,
            &p.config_hash[..12]
        )
    );
}

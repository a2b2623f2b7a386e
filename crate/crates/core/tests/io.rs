use std::fs;
use std::path::Path;

use heatpool::climatology::fit_climatology;
use heatpool::error::Error;
use heatpool::experiment::{run_experiment, ExperimentConfig, PGridConfig};
use heatpool::io::{
    climatology_block, climatology_from_block, decode_field_block, encode_field_block, import_latlon_csv,
    read_field_file, read_json, read_sidecar, read_sweep_csv, replay_config, roc_svg, roc_to_pixel, truth_block,
    truth_from_block, write_field_file, write_json, write_report_bundle, write_sweep_csv, FieldBlock, Summary,
    TruthMeta, HEADER_LEN,
};
use heatpool::metrics::{roc_curve, ScoredSample};
use heatpool::synth::{gen_truth, TruthProcess};
use heatpool::tuner::SweepReport;
use heatpool::GridSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

fn bits(b: &FieldBlock) -> Vec<u32> {
    b.data().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_block_round_trip_is_bitwise(n in 2usize..6, steps in 0usize..4, channels in 1usize..3, seed in any::<u64>()) {
        let g = GridSpec::new(n).unwrap();
        let mut rng = Pcg64Mcg::seed_from_u64(seed);
        let data: Vec<f32> = (0..steps * channels * g.cell_count()).map(|_| f32::from_bits(rng.gen())).collect();
        let block = FieldBlock::new(g, steps, channels, data).unwrap();
        let bytes = encode_field_block(&block).unwrap();
        prop_assert_eq!(bytes.len() as u64, HEADER_LEN + 4 * block.data().len() as u64);
        let back = decode_field_block(&bytes).unwrap();
        prop_assert_eq!(back.grid(), g);
        prop_assert_eq!((back.steps(), back.channels()), (steps, channels));
        prop_assert_eq!(bits(&back), bits(&block));
    }

    #[test]
    fn truncation_is_reported(cut in 1usize..40) {
        let g = GridSpec::new(2).unwrap();
        let block = FieldBlock::new(g, 1, 1, vec![1.5; 24]).unwrap();
        let bytes = encode_field_block(&block).unwrap();
        let short = &bytes[..bytes.len() - cut.min(bytes.len() - 16)];
        let is_truncated = matches!(decode_field_block(short), Err(Error::TruncatedPayload { .. }));
        prop_assert!(is_truncated);
    }
}

#[test]
fn decode_errors_carry_offsets() {
    let g = GridSpec::new(2).unwrap();
    let bytes = encode_field_block(&FieldBlock::new(g, 2, 1, vec![0.25; 48]).unwrap()).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_field_block(&bad), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(decode_field_block(&bytes[..10]), Err(Error::Format { offset: 10, .. })));
    match decode_field_block(&bytes[..bytes.len() - 4]) {
        Err(Error::TruncatedPayload { expected, actual }) => assert_eq!((expected, actual), (192, 188)),
        other => panic!("unexpected {other:?}"),
    }
    let mut long = bytes.clone();
    long.extend_from_slice(&[0, 0, 0, 0]);
    assert!(matches!(decode_field_block(&long), Err(Error::Format { offset: 208, .. })));
    let mut tiny = bytes.clone();
    tiny[4..8].copy_from_slice(&1u32.to_le_bytes());
    assert!(matches!(decode_field_block(&tiny), Err(Error::Format { offset: 4, .. })));
}

#[test]
fn truth_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridSpec::new(3).unwrap();
    let t = gen_truth(g, &TruthProcess::new(0.8, 3, 20)).unwrap();
    let block = truth_block(&t).unwrap();
    let meta = TruthMeta {
        resolution: 3,
        process: t.process().clone(),
    };
    let path = dir.path().join("truth.csf");
    write_field_file(&path, &block, Some(&meta)).unwrap();
    let back = read_field_file(&path).unwrap();
    assert_eq!(back, block);
    let meta_back: TruthMeta = read_sidecar(&path).unwrap();
    assert_eq!(meta_back, meta);
    let t2 = truth_from_block(&back, &meta_back).unwrap();
    for d in 0..t.len() {
        let narrowed: Vec<f64> = t.field(d).unwrap().values().iter().map(|&v| f64::from(v as f32)).collect();
        assert_eq!(t2.field(d).unwrap().values(), narrowed.as_slice());
    }
    // Narrowed values are stable under a second trip.
    assert_eq!(truth_block(&t2).unwrap(), block);
}

#[test]
fn climatology_file_round_trip() {
    let g = GridSpec::new(2).unwrap();
    let start = chrono::NaiveDate::from_ymd_opt(2003, 1, 1).unwrap();
    let mut rng = Pcg64Mcg::seed_from_u64(8);
    let series: Vec<_> = (0..730)
        .map(|d| {
            let f = heatpool::Field::from_fn(g, |_| 290.0 + rng.gen_range(-3.0..3.0));
            (start + chrono::Duration::days(d), f)
        })
        .collect();
    let clim = fit_climatology(&series, 31).unwrap();
    let (block, meta) = climatology_block(&clim).unwrap();
    let back = climatology_from_block(&decode_field_block(&encode_field_block(&block).unwrap()).unwrap(), &meta).unwrap();
    assert_eq!(climatology_block(&back).unwrap().0, block);
    assert_eq!(back.window_days(), 31);
    assert_eq!(back.source_years(), clim.source_years());
}

#[test]
fn json_and_csv_reports_are_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Pcg64Mcg::seed_from_u64(4);
    let report = SweepReport {
        q: 0.9,
        auc_by_p: (0..7).map(|i| (1.0 + i as f64 * 1.7, rng.gen::<f64>())).collect(),
        p_opt: 2.7,
        auc_opt: rng.gen(),
        auc_mean_pred: rng.gen(),
        ri_opt: rng.gen::<f64>() * 10.0,
    };
    let csv = dir.path().join("sweep.csv");
    write_sweep_csv(&csv, &report).unwrap();
    let rows = read_sweep_csv(&csv).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("q,p,auc\n"));
    for ((q, p, a), (p0, a0)) in rows.iter().zip(&report.auc_by_p) {
        assert_eq!((q.to_bits(), p.to_bits(), a.to_bits()), (0.9f64.to_bits(), p0.to_bits(), a0.to_bits()));
    }
    let summary = Summary {
        lead: Some(7),
        quantiles: vec![(&report).into()],
        fit: None,
    };
    let js = dir.path().join("summary.json");
    write_json(&js, &summary).unwrap();
    let back: Summary = read_json(&js).unwrap();
    assert_eq!(back, summary);
    assert_eq!(back.quantiles[0].auc_opt.to_bits(), report.auc_opt.to_bits());
}

fn roc_points(svg: &str) -> Vec<(f64, f64)> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    let poly = doc
        .descendants()
        .find(|n| n.attribute("id") == Some("roc"))
        .expect("roc polyline");
    poly.attribute("points")
        .unwrap()
        .split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn perfect_classifier_svg() {
    let samples: Vec<ScoredSample> = (0..20)
        .map(|i| ScoredSample::new(i as f64 / 19.0, i >= 10).unwrap())
        .collect();
    let curve = roc_curve(&samples).unwrap();
    let svg = roc_svg(&curve);
    let corner = roc_to_pixel(0.0, 1.0);
    assert!(roc_points(&svg)
        .iter()
        .any(|&(x, y)| (x - corner.0).abs() < 1e-3 && (y - corner.1).abs() < 1e-3));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let auc = doc.descendants().find(|n| n.attribute("id") == Some("auc")).unwrap();
    assert_eq!(auc.text(), Some("AUC = 1.0000"));
    assert!(doc.descendants().any(|n| n.attribute("id") == Some("diagonal")));
}

#[test]
fn random_classifier_hugs_the_diagonal() {
    let mut rng = Pcg64Mcg::seed_from_u64(12);
    let samples: Vec<ScoredSample> = (0..20_000)
        .map(|_| ScoredSample::new(rng.gen(), rng.gen()).unwrap())
        .collect();
    let curve = roc_curve(&samples).unwrap();
    let (x0, y0) = roc_to_pixel(0.0, 0.0);
    let (x1, y1) = roc_to_pixel(1.0, 1.0);
    for (x, y) in roc_points(&roc_svg(&curve)) {
        let t = (x - x0) / (x1 - x0);
        let on_diagonal = y0 + t * (y1 - y0);
        assert!((y - on_diagonal).abs() <= 10.0, "({x}, {y})");
    }
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        resolution: 4,
        train_days: 400,
        validation_days: 40,
        n_members: 6,
        leads: vec![1, 7],
        quantiles: vec![0.8, 0.9],
        p_grid: PGridConfig {
            max: 100.0,
            count: 7,
            values: None,
        },
        ..Default::default()
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn report_bundle_is_reproducible_and_replayable() {
    let root = tempfile::tempdir().unwrap();
    let config = small_config();
    let a = root.path().join("a");
    let b = root.path().join("b");
    let outputs = write_report_bundle(&a, &run_experiment(&config).unwrap()).unwrap();
    write_report_bundle(&b, &run_experiment(&config).unwrap()).unwrap();
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert!(outputs.contains(&"summary.json".to_string()));
    assert!(outputs.contains(&"roc_q0.9.svg".to_string()));
    assert_eq!(outputs.len(), dir_bytes(&a).len());

    let err = write_report_bundle(&a, &run_experiment(&config).unwrap()).unwrap_err();
    assert!(err.is_io());

    let replayed = replay_config(&a).unwrap();
    assert_eq!(replayed, config);
    let c = root.path().join("c");
    write_report_bundle(&c, &run_experiment(&replayed).unwrap()).unwrap();
    assert_eq!(dir_bytes(&a), dir_bytes(&c));
}

#[test]
fn latlon_import_reproduces_constants() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.csv");
    let mut text = String::from("lat,lon,value\n");
    for lat in (-80..=80).step_by(20) {
        for lon in (0..360).step_by(30) {
            text.push_str(&format!("{lat},{lon},273.5\n"));
        }
    }
    fs::write(&path, text).unwrap();
    let f = import_latlon_csv(&path, GridSpec::new(4).unwrap(), 4).unwrap();
    assert!(f.values().iter().all(|&v| (v - 273.5).abs() <= 1e-12 * 273.5));
    assert!(import_latlon_csv(&dir.path().join("missing.csv"), GridSpec::new(4).unwrap(), 4)
        .unwrap_err()
        .is_io());
}

use manikin_sim::builtin;
use manikin_sim::metrics::{percentile, write_csv, write_jsonl, FrameMetrics, RunSummary};
use manikin_sim::runner::{run, RunOptions};

fn short(name: &str, duration: f64) -> Vec<FrameMetrics> {
    let mut c = builtin::builtin(name).unwrap();
    c.duration = duration;
    run(c.resolve(None).unwrap(), &RunOptions::default())
        .unwrap()
        .frames
}

#[test]
fn one_row_per_step() {
    let frames = short("table_lean", 0.5);
    assert!((frames.len() as i64 - 250).abs() <= 1);
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f.frame, i as u64);
    }
    let mut buf = Vec::new();
    write_jsonl(&frames, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), frames.len());
    let row: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in [
        "t",
        "delta_normalized",
        "com",
        "tracking_error",
        "heights",
        "converged",
    ] {
        assert!(row.get(key).is_some(), "{key}");
    }
    assert!(row.get("wall_us").is_none());
}

#[test]
fn csv_has_a_header_and_one_row_per_step() {
    let frames = short("table_lean", 0.2);
    let mut buf = Vec::new();
    write_csv(&frames, &mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let header = reader.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "tracking_error:hand_r"));
    assert!(header.iter().any(|h| h == "height:table"));
    let rows: Vec<_> = reader.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), frames.len());
    assert!(rows.iter().all(|r| r.len() == header.len()));
}

#[test]
fn guide_angle_only_with_a_tool() {
    assert!(short("stand_settle", 0.05)
        .iter()
        .all(|f| f.guide_angle_deg.is_none()));
    assert!(short("drill_guide_on", 0.05)
        .iter()
        .all(|f| f.guide_angle_deg.is_some()));
}

#[test]
fn summary_counts_and_limits() {
    let mut c = builtin::builtin("stand_settle").unwrap();
    c.duration = 0.5;
    let sc = c.resolve(None).unwrap();
    let limits = sc.limits;
    let out = run(sc, &RunOptions::default()).unwrap();
    let s = RunSummary::from_frames("stand_settle", &out.frames, &limits);
    assert_eq!(s.delta_normalized.as_ref().unwrap().count, out.frames.len());
    assert!(!s.hard_violation);
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn nearest_rank_percentile() {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(percentile(&v, 0.5), 50.0);
    assert_eq!(percentile(&v, 0.95), 95.0);
    assert_eq!(percentile(&v, 0.99), 99.0);
    assert_eq!(percentile(&[3.0], 0.99), 3.0);
}

#[test]
fn guided_drill_beats_unguided() {
    let on = short("drill_guide_on", 3.0);
    let off = short("drill_guide_off", 3.0);
    let angles = |f: &[FrameMetrics]| {
        f.iter()
            .filter_map(|f| f.guide_angle_deg)
            .collect::<Vec<_>>()
    };
    let on = angles(&on);
    let mut off = angles(&off);
    off.sort_by(f64::total_cmp);
    let mean_on = on.iter().sum::<f64>() / on.len() as f64;
    assert!(mean_on < percentile(&off, 0.95), "{mean_on}");
}

use manikin_sim::assets;
use manikin_sim::builtin;
use manikin_sim::config::standing_height;
use manikin_sim::trajectory::{
    load_jsonl, parse_jsonl, retarget, write_jsonl, RetargetMap, Sample, TargetTrajectory,
};
use nalgebra::Vector3;
use proptest::prelude::*;

const IDENTITY: [f64; 4] = [0.0, 0.0, 0.0, 1.0];

fn map(scale: f64, root: [f64; 3]) -> RetargetMap {
    RetargetMap {
        source_skeleton: "a".into(),
        dest_skeleton: "b".into(),
        scale,
        root_reference: 0,
        root_point: root,
    }
}

fn line(points: &[[f64; 3]]) -> TargetTrajectory {
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, p)| Sample {
            t: i as f64 * 0.1,
            pos: *p,
            quat: IDENTITY,
        })
        .collect();
    TargetTrajectory::new("hand", samples).unwrap()
}

#[test]
fn unit_scale_is_identity() {
    let tr = line(&[[0.3, -1.0, 2.0], [1.0, 2.0, 3.0]]);
    assert_eq!(retarget(&tr, &map(1.0, [0.4, 0.1, 0.0])), tr);
}

#[test]
fn half_scale_about_origin() {
    let tr = line(&[[0.0, 2.0, 0.0]]);
    let out = retarget(&tr, &map(0.5, [0.0; 3]));
    assert_eq!(out.samples[0].pos, [0.0, 1.0, 0.0]);
    assert_eq!(out.samples[0].t, tr.samples[0].t);
    assert_eq!(out.samples[0].quat, IDENTITY);
}

#[test]
fn giant_to_dwarf_shrinks_excursions_by_height_ratio() {
    let giant = assets::load_skeleton("manikin_giant.json", None).unwrap();
    let dwarf = assets::load_skeleton("manikin_dwarf.json", None).unwrap();
    let ratio = standing_height(&dwarf).unwrap() / standing_height(&giant).unwrap();
    assert!((ratio - 0.25).abs() < 1e-9, "{ratio}");

    let scenario = builtin::builtin("balance_dwarf_on")
        .unwrap()
        .resolve(None)
        .unwrap();
    let m = scenario.retarget.as_ref().unwrap();
    assert!((m.scale - ratio).abs() < 1e-12);

    let path = assets::resolve("trajectories/giant_reach.jsonl", None).unwrap();
    let source = &load_jsonl(&path).unwrap()[0];
    let scaled = &scenario.trajectories[0];
    let start = |tr: &TargetTrajectory| Vector3::from(tr.samples[0].pos);
    for (a, b) in source.samples.iter().zip(&scaled.samples) {
        let da = Vector3::from(a.pos) - start(source);
        let db = Vector3::from(b.pos) - start(scaled);
        assert!((db - da * 0.25).norm() < 1e-9);
    }
}

#[test]
fn jsonl_round_trip() {
    let tr = line(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [1.0 / 3.0, 0.0, -2.0]]);
    let mut buf = Vec::new();
    write_jsonl(std::slice::from_ref(&tr), &mut buf).unwrap();
    let back = parse_jsonl(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
    assert_eq!(back, vec![tr]);
}

#[test]
fn samples_of_several_targets_are_grouped() {
    let text = concat!(
        "{\"t\":0,\"target_id\":\"a\",\"pos\":[0,0,0]}\n",
        "{\"t\":0,\"target_id\":\"b\",\"pos\":[1,0,0]}\n",
        "{\"t\":1,\"target_id\":\"a\",\"pos\":[0,0,1]}\n",
    );
    let trs = parse_jsonl(text, "mem").unwrap();
    assert_eq!(trs.len(), 2);
    let a = trs.iter().find(|t| t.target_id == "a").unwrap();
    assert_eq!(a.sample(0.5).0, [0.0, 0.0, 0.5]);
}

#[test]
fn nonpositive_scale_is_rejected() {
    assert!(map(0.0, [0.0; 3]).validate().is_err());
    assert!(map(-1.0, [0.0; 3]).validate().is_err());
    assert!(map(f64::NAN, [0.0; 3]).validate().is_err());
}

proptest! {
    #[test]
    fn inverse_map_round_trips(
        scale in 0.05f64..20.0,
        root in prop::array::uniform3(-2.0f64..2.0),
        pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..20),
    ) {
        let tr = line(&pts);
        let m = map(scale, root);
        let back = retarget(&retarget(&tr, &m), &m.inverse());
        for (a, b) in tr.samples.iter().zip(&back.samples) {
            let err = (Vector3::from(a.pos) - Vector3::from(b.pos)).norm();
            prop_assert!(err < 1e-12 * (1.0 + Vector3::from(a.pos).norm()) * scale.max(1.0 / scale), "{}", err);
        }
    }

    #[test]
    fn retarget_preserves_time_and_orientation(
        scale in 0.05f64..20.0,
        pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..10),
    ) {
        let tr = line(&pts);
        let out = retarget(&tr, &map(scale, [0.0; 3]));
        for (a, b) in tr.samples.iter().zip(&out.samples) {
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.quat, b.quat);
        }
    }
}

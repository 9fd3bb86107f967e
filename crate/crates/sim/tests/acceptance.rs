//! End-to-end acceptance checks. Runs as a plain program so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use manikin_core::balance::{balance_jacobian, distance_to_limit, fit_for_support};
use manikin_core::dynamics::{
    anchor_feet, spatial_momentum, Ground, SimParams, SimState, Simulator, WorldDef,
};
use manikin_core::kinematics::{
    integrate, BodyDef, FrameCache, JointDef, JointKind, JointState, Skeleton,
};
use manikin_core::lcp::{solve_lemke, solve_pgs, MlcpProblem};
use manikin_core::math::Transform;
use manikin_sim::builtin;
use manikin_sim::metrics::{write_jsonl, FrameMetrics};
use manikin_sim::runner::{run, RunOptions, RunOutput};
use manikin_sim::session::Session;
use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Runs {
    outputs: BTreeMap<&'static str, RunOutput>,
    seconds: BTreeMap<&'static str, f64>,
}

fn run_builtin(name: &str) -> (RunOutput, f64) {
    let start = Instant::now();
    let scenario = builtin::builtin(name)
        .and_then(|c| c.resolve(None))
        .expect("builtin resolves");
    let out = run(scenario, &RunOptions::default()).expect("builtin runs");
    (out, start.elapsed().as_secs_f64())
}

fn min_delta(frames: &[FrameMetrics]) -> f64 {
    frames
        .iter()
        .filter_map(|f| f.delta_normalized)
        .fold(f64::INFINITY, f64::min)
}

fn balance_enforcement(runs: &Runs) -> Verdict {
    let on = min_delta(&runs.outputs["balance_dwarf_on"].frames);
    let off = min_delta(&runs.outputs["balance_dwarf_off"].frames);
    let t_on = runs.seconds["balance_dwarf_on"];
    let t_off = runs.seconds["balance_dwarf_off"];
    verdict(
        on >= -1e-3 && off < -0.05 && t_on < 60.0 && t_off < 60.0,
        format!("min δ/d² on {on:.3e} (≥ -1e-3), off {off:.4} (< -0.05); runtimes {t_on:.2} s, {t_off:.2} s"),
    )
}

fn static_criterion(runs: &Runs) -> Verdict {
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for out in runs.outputs.values() {
        for f in out
            .frames
            .iter()
            .filter(|f| f.balance_enabled && f.converged)
        {
            if let Some(d) = f.delta_normalized {
                // ‖P(x − x_c)‖²_Q / d² = 1 − δ/d².
                worst = worst.min(d);
                checked += 1;
            }
        }
    }
    let ratio = 1.0 - worst;
    verdict(
        checked > 0 && ratio <= 1.0 + 1e-3,
        format!("max ‖P(x_com − x_c)‖²_Q / d² = {ratio:.6} over {checked} converged balanced frames (≤ 1.001)"),
    )
}

fn non_penetration(runs: &Runs) -> Verdict {
    let out = &runs.outputs["table_lean"];
    let clearance = out
        .frames
        .iter()
        .map(|f| f.heights["hand_r"] - f.heights["table"])
        .fold(f64::INFINITY, f64::min);
    let dt = builtin::DT;
    let (mut longest, mut run_len) = (0usize, 0usize);
    for f in &out.frames {
        if f.contact_forces
            .get("hand_r/table")
            .is_some_and(|v| *v > 0.0)
        {
            run_len += 1;
            longest = longest.max(run_len);
        } else {
            run_len = 0;
        }
    }
    let contact_s = longest as f64 * dt;
    verdict(
        clearance >= -1e-3 && contact_s >= 0.5,
        format!("min hand − table height {clearance:.3e} m (≥ -1e-3); continuous contact {contact_s:.3} s (≥ 0.5)"),
    )
}

fn angles(out: &RunOutput) -> Vec<f64> {
    out.frames
        .iter()
        .filter_map(|f| f.guide_angle_deg)
        .collect()
}

fn virtual_guide(runs: &Runs) -> Verdict {
    let on = angles(&runs.outputs["drill_guide_on"]);
    let off = angles(&runs.outputs["drill_guide_off"]);
    let mean_on = on.iter().sum::<f64>() / on.len().max(1) as f64;
    let max_on = on.iter().cloned().fold(0.0, f64::max);
    let max_off = off.iter().cloned().fold(0.0, f64::max);
    verdict(
        !on.is_empty() && mean_on < 2.0 && max_on < 5.0 && max_off > 10.0,
        format!("guide on: mean {mean_on:.3}° (< 2), max {max_on:.3}° (< 5); guide off: max {max_off:.2}° (> 10)"),
    )
}

fn random_pose(sk: &Skeleton, r: &mut ChaCha8Rng) -> JointState {
    let mut st = JointState::neutral(sk);
    for (i, j) in sk.joints.iter().enumerate() {
        let rot = |r: &mut ChaCha8Rng, a: f64| {
            UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| r.gen_range(-a..a)))
        };
        match j.kind {
            JointKind::Free => {
                let o = sk.q_offset(i);
                for k in 0..3 {
                    st.q[o + k] = r.gen_range(-1.0..1.0);
                }
                st.set_rotation(sk, i, &rot(r, 1.0));
            }
            JointKind::Spherical => st.set_rotation(sk, i, &rot(r, 0.4)),
            JointKind::Revolute => {
                let (lo, hi) = j
                    .limits
                    .as_ref()
                    .map(|l| (l.lower[0], l.upper[0]))
                    .unwrap_or((-1.0, 1.0));
                st.set_angle(sk, i, r.gen_range(lo..hi));
            }
        }
    }
    st
}

fn perturbed(sk: &Skeleton, st: &JointState, k: usize, h: f64) -> FrameCache {
    let mut e = DVector::zeros(sk.nv());
    e[k] = 1.0;
    let q = integrate(sk, &st.q, &e, h);
    FrameCache::new(
        sk,
        &JointState {
            q,
            dq: st.dq.clone(),
        },
    )
    .expect("valid pose")
}

fn jacobians() -> Verdict {
    let sk = manikin_core::assets::default_manikin().expect("manikin");
    let feet = [
        sk.body_index("foot_l").unwrap(),
        sk.body_index("foot_r").unwrap(),
    ];
    let mut stand = JointState::neutral(&sk);
    stand.q[2] = 0.96;
    let support =
        anchor_feet(&sk, &SimState::new(stand), &WorldDef::default(), &feet).expect("anchors");
    let ellipse = fit_for_support(&sk, &support).expect("ellipse");
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let (mut worst_com, mut worst_bal): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let st = random_pose(&sk, &mut r);
        let cache = FrameCache::new(&sk, &st).expect("valid pose");
        let j_com = cache.com_jacobian(&sk);
        let x = cache.center_of_mass(&sk);
        let j_bal = balance_jacobian(&ellipse, &x, &j_com);
        let mut fd_com = DMatrix::zeros(3, sk.nv());
        let mut fd_bal = DVector::zeros(sk.nv());
        for k in 0..sk.nv() {
            let (p, m) = (perturbed(&sk, &st, k, h), perturbed(&sk, &st, k, -h));
            let (xp, xm) = (p.center_of_mass(&sk), m.center_of_mass(&sk));
            fd_com.set_column(k, &((xp - xm) / (2.0 * h)));
            fd_bal[k] =
                (distance_to_limit(&ellipse, &xp) - distance_to_limit(&ellipse, &xm)) / (2.0 * h);
        }
        worst_com = worst_com.max((&j_com - &fd_com).norm() / fd_com.norm().max(1e-12));
        worst_bal = worst_bal.max((&j_bal - &fd_bal).norm() / fd_bal.norm().max(1e-12));
    }
    verdict(
        worst_com < 1e-5 && worst_bal < 1e-5,
        format!("100 poses: com_jacobian rel err {worst_com:.2e}, balance_jacobian rel err {worst_bal:.2e} (< 1e-5)"),
    )
}

/// Every complementary index set, solved directly.
fn enumeration(pr: &MlcpProblem) -> Option<DVector<f64>> {
    let p = pr.len();
    for mask in 0u32..(1 << p) {
        let s: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let mut z = DVector::zeros(p);
        if !s.is_empty() {
            let a = DMatrix::from_fn(s.len(), s.len(), |i, j| pr.m[(s[i], s[j])]);
            let b = DVector::from_fn(s.len(), |i, _| -pr.q[s[i]]);
            let Some(zs) = a.lu().solve(&b) else { continue };
            for (k, &i) in s.iter().enumerate() {
                z[i] = zs[k];
            }
        }
        let w = &pr.m * &z + &pr.q;
        if z.iter().all(|v| *v >= -1e-12) && w.iter().all(|v| *v >= -1e-12) {
            return Some(z);
        }
    }
    None
}

fn complementarity(pr: &MlcpProblem, z: &DVector<f64>) -> f64 {
    let w = &pr.m * z + &pr.q;
    z.iter()
        .zip(w.iter())
        .map(|(z, w)| (z * w).abs().max(-z).max(-w))
        .fold(0.0, f64::max)
}

fn lcp() -> Verdict {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_diff, mut worst_comp): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let p = r.gen_range(1..=8);
        let b = DMatrix::from_fn(p, p, |_, _| r.gen_range(-1.0..1.0));
        let m = &b * b.transpose() + DMatrix::identity(p, p) * r.gen_range(0.1..1.0);
        let q = DVector::from_fn(p, |_, _| r.gen_range(-1.0..1.0));
        let pr = MlcpProblem::unilateral(m, q).expect("square problem");
        let Some(z_ref) = enumeration(&pr) else {
            return verdict(false, "enumeration found no solution".into());
        };
        for z in [
            solve_pgs(&pr, 100_000, 1e-12).map(|s| s.z),
            solve_lemke(&pr).map(|s| s.z),
        ] {
            let Ok(z) = z else {
                return verdict(false, "a solver failed".into());
            };
            worst_diff = worst_diff.max((&z - &z_ref).amax());
            worst_comp = worst_comp.max(complementarity(&pr, &z));
        }
    }
    verdict(
        worst_diff < 1e-6 && worst_comp < 1e-8,
        format!("200 instances: max |z − z_enum| {worst_diff:.2e} (< 1e-6), complementarity {worst_comp:.2e} (< 1e-8)"),
    )
}

fn pendulum(length: f64) -> Skeleton {
    Skeleton::new(
        "pendulum",
        vec![BodyDef {
            name: "bob".into(),
            mass: 1.0,
            inertia: Matrix3::identity() * 1e-9,
            com_offset: Vector3::new(0.0, 0.0, -length),
            shapes: vec![],
        }],
        vec![JointDef {
            name: "hinge".into(),
            kind: JointKind::Revolute,
            parent: None,
            child: 0,
            parent_frame: Transform::identity(),
            child_frame: Transform::identity(),
            axis: Vector3::y(),
            limits: None,
        }],
    )
    .expect("pendulum")
}

fn dynamics() -> Verdict {
    let sk = manikin_core::assets::default_manikin().expect("manikin");
    let mut st = JointState::neutral(&sk);
    st.q[2] = 0.96;
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for k in 0..sk.nv() {
        st.dq[k] = r.gen_range(-1.0..1.0);
    }
    let world = WorldDef {
        gravity: [0.0; 3],
        ground: Ground {
            height: -1000.0,
            friction: 0.8,
        },
        boxes: vec![],
    };
    let params = SimParams {
        dt: 0.002,
        ..SimParams::default()
    };
    let mut sim = Simulator::new(sk.clone(), world, params).expect("simulator");
    let momentum =
        |js: &JointState| spatial_momentum(&sk, &FrameCache::new(&sk, js).expect("pose"), &js.dq);
    let h0 = momentum(&st);
    let mut state = SimState::new(st);
    let mut drift: f64 = 0.0;
    for _ in 0..1000 {
        state = sim
            .step(&state, &DVector::zeros(sk.nv()), None)
            .expect("step")
            .0;
        drift = drift.max((momentum(&state.joint_state) - h0).amax());
    }

    let (l, g, dt) = (1.0, 9.81, 1e-3);
    let pend = pendulum(l);
    let params = SimParams {
        dt,
        ..SimParams::default()
    };
    let mut sim = Simulator::new(pend.clone(), WorldDef::default(), params).expect("simulator");
    let mut js = JointState::neutral(&pend);
    js.q[0] = 0.05;
    let mut state = SimState::new(js);
    let expected = 2.0 * std::f64::consts::PI * (l / g).sqrt();
    let mut crossings = Vec::new();
    let mut prev = state.joint_state.q[0];
    while crossings.len() < 21 && state.time < 12.0 * expected {
        state = sim.step(&state, &DVector::zeros(1), None).expect("step").0;
        let cur = state.joint_state.q[0];
        if (prev > 0.0) != (cur > 0.0) {
            crossings.push(state.time - dt * cur / (cur - prev));
        }
        prev = cur;
    }
    let period = if crossings.len() == 21 {
        (crossings[20] - crossings[0]) / 10.0
    } else {
        f64::NAN
    };
    let period_err = (period - expected).abs() / expected;
    verdict(
        drift < 1e-9 && period_err < 0.01,
        format!("momentum drift {drift:.2e} over 1000 steps (< 1e-9); pendulum period {period:.5} s vs {expected:.5} s, rel err {period_err:.2e} (< 0.01)"),
    )
}

fn real_time() -> Verdict {
    let mut cfg = builtin::builtin("stand_settle").expect("builtin");
    cfg.balance.activation = 10.0;
    cfg.duration = 4.0;
    let scenario = cfg.resolve(None).expect("resolves");
    let bodies = scenario.skeleton.num_bodies();
    let frames = scenario.frames;
    let mut session = Session::new(scenario).expect("session");
    let mut times = Vec::with_capacity(frames);
    let mut with_row = 0;
    for _ in 0..frames {
        let f = session.advance().expect("step").expect("not paused");
        with_row += usize::from(f.balance_row);
        times.push(f.metrics.wall_us);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let p99 = times[(times.len() * 99).div_ceil(100) - 1];
    let anchored = session.state().anchored_feet.len();
    verdict(
        median < 2000.0 && with_row == frames && bodies == 16 && anchored == 2,
        format!("{bodies} bodies, {anchored} anchored feet, balance row in {with_row}/{frames} steps: median {median:.1} µs (< 2000), p99 {p99:.1} µs"),
    )
}

fn jsonl(frames: &[FrameMetrics]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(frames, &mut buf).expect("in-memory write");
    buf
}

fn determinism(runs: &Runs) -> Verdict {
    let mut differing = Vec::new();
    for name in builtin::names() {
        let (again, _) = run_builtin(name);
        if jsonl(&again.frames) != jsonl(&runs.outputs[name].frames) {
            differing.push(*name);
        }
    }
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "{} builtins produced byte-identical metrics on a second run",
                builtin::names().len()
            )
        } else {
            format!("metrics differ for {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let mut runs = Runs {
        outputs: BTreeMap::new(),
        seconds: BTreeMap::new(),
    };
    for name in builtin::names() {
        let (out, secs) = run_builtin(name);
        runs.outputs.insert(name, out);
        runs.seconds.insert(name, secs);
    }
    let results = [
        ("1 balance enforcement", balance_enforcement(&runs)),
        ("2 static balance criterion", static_criterion(&runs)),
        ("3 non-penetration", non_penetration(&runs)),
        ("4 virtual guide", virtual_guide(&runs)),
        ("5 Jacobian validation", jacobians()),
        ("6 LCP correctness", lcp()),
        ("7 dynamics sanity", dynamics()),
        ("8 real-time step", real_time()),
        ("9 determinism", determinism(&runs)),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!(
            "criterion {name}: {} ({})",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

mod common;

use common::*;
use manikin_core::balance::{
    balance_jacobian, convex_hull, distance_to_limit, fit_for_support, fit_support_ellipse,
    make_balance_row, vertical_projection, BalanceParams, SupportEllipse,
};
use manikin_core::dynamics::{anchor_feet, SimParams, SimState, Simulator, WorldDef};
use manikin_core::kinematics::{integrate, FrameCache, JointState, Skeleton};
use manikin_core::Error;
use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use rand::Rng;

fn feet(sk: &Skeleton) -> Vec<usize> {
    vec![
        sk.body_index("foot_l").unwrap(),
        sk.body_index("foot_r").unwrap(),
    ]
}

fn double_support(sk: &Skeleton) -> SimState {
    anchor_feet(
        sk,
        &SimState::new(standing(sk)),
        &WorldDef::default(),
        &feet(sk),
    )
    .unwrap()
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
    .unwrap()
}

fn matrix_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn ellipse(q: Matrix3<f64>, x_c: Vector3<f64>) -> SupportEllipse {
    SupportEllipse {
        x_c,
        q,
        d: 1.0,
        p: vertical_projection(),
        anchors: Vec::new(),
    }
}

#[test]
fn com_jacobian_matches_finite_differences() {
    let sk = manikin();
    let mut r = rng(11);
    let h = 1e-6;
    for _ in 0..100 {
        let st = random_state(&sk, &mut r);
        let cache = FrameCache::new(&sk, &st).unwrap();
        let j = cache.com_jacobian(&sk);
        let mut fd = DMatrix::zeros(3, sk.nv());
        for k in 0..sk.nv() {
            let d = (perturbed(&sk, &st, k, h).center_of_mass(&sk)
                - perturbed(&sk, &st, k, -h).center_of_mass(&sk))
                / (2.0 * h);
            fd.set_column(k, &d);
        }
        assert!(
            matrix_rel_err(&j, &fd) < 1e-5,
            "{}",
            matrix_rel_err(&j, &fd)
        );
    }
}

#[test]
fn balance_jacobian_matches_finite_differences() {
    let sk = manikin();
    let e = fit_for_support(&sk, &double_support(&sk)).unwrap();
    let mut r = rng(12);
    let h = 1e-6;
    for _ in 0..100 {
        let st = random_state(&sk, &mut r);
        let cache = FrameCache::new(&sk, &st).unwrap();
        let x = cache.center_of_mass(&sk);
        let j = balance_jacobian(&e, &x, &cache.com_jacobian(&sk));
        let fd = DVector::from_fn(sk.nv(), |k, _| {
            let plus = distance_to_limit(&e, &perturbed(&sk, &st, k, h).center_of_mass(&sk));
            let minus = distance_to_limit(&e, &perturbed(&sk, &st, k, -h).center_of_mass(&sk));
            (plus - minus) / (2.0 * h)
        });
        let err = (&j - &fd).norm() / fd.norm().max(1e-12);
        assert!(err < 1e-5, "{err}");
    }
}

#[test]
fn delta_matches_direct_arithmetic() {
    let e = ellipse(
        Matrix3::from_diagonal(&Vector3::new(1.0 / 0.04, 1.0 / 0.09, 0.0)),
        Vector3::zeros(),
    );
    let expected = 1.0 - (0.01 / 0.04 + 0.01 / 0.09);
    let got = distance_to_limit(&e, &Vector3::new(0.1, 0.1, 0.7));
    assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
}

#[test]
fn symmetrized_metric_gives_same_jacobian() {
    let q = Matrix3::new(30.0, 4.0, 0.0, -2.0, 50.0, 0.0, 0.0, 0.0, 0.0);
    let a = ellipse(q, Vector3::new(0.02, -0.01, 0.0));
    let b = ellipse((q + q.transpose()) / 2.0, a.x_c);
    let j_com = DMatrix::from_fn(3, 7, |i, k| ((i * 7 + k) as f64).sin());
    let x = Vector3::new(0.1, 0.05, 0.9);
    let ja = balance_jacobian(&a, &x, &j_com);
    let jb = balance_jacobian(&b, &x, &j_com);
    assert!((ja - jb).amax() < 1e-13);
}

fn inside_hull(hull: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    (0..hull.len()).all(|k| {
        let a = hull[k];
        let b = hull[(k + 1) % hull.len()];
        (b - a).perp(&(p - a)) >= -1e-10
    })
}

#[test]
fn ellipse_of_separated_feet_lies_inside_hull() {
    let foot = |y: f64| {
        vec![
            Vector3::new(-0.06, y - 0.045, 0.0),
            Vector3::new(0.20, y - 0.045, 0.0),
            Vector3::new(0.20, y + 0.045, 0.0),
            Vector3::new(-0.06, y + 0.045, 0.0),
        ]
    };
    let polys = vec![foot(-0.15), foot(0.15)];
    let e = fit_support_ellipse(&polys).unwrap();
    let pts: Vec<Vector2<f64>> = polys.iter().flatten().map(|p| p.xy()).collect();
    let hull = convex_hull(&pts);
    let mut r = rng(13);
    for _ in 0..10_000 {
        let p = e.boundary_point(r.gen_range(0.0..std::f64::consts::TAU));
        assert!(distance_to_limit(&e, &p).abs() < 1e-12);
        assert!(inside_hull(&hull, &p.xy()), "{p:?}");
    }
    // Inscription is tight: some boundary point touches the hull.
    let slack = (0..3600)
        .map(|k| {
            let p = e
                .boundary_point(k as f64 * std::f64::consts::TAU / 3600.0)
                .xy();
            (0..hull.len())
                .map(|i| {
                    let a = hull[i];
                    let b = hull[(i + 1) % hull.len()];
                    (b - a).perp(&(p - a)) / (b - a).norm()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(slack < 1e-5, "{slack}");
}

#[test]
fn standing_manikin_is_well_inside_support() {
    let sk = manikin();
    let s = double_support(&sk);
    let e = fit_for_support(&sk, &s).unwrap();
    let cache = FrameCache::new(&sk, &s.joint_state).unwrap();
    assert!(distance_to_limit(&e, &cache.center_of_mass(&sk)) > 0.5);
    assert_eq!(e.anchors, feet(&sk));
    let q = e.q;
    assert!((q - q.transpose()).amax() < 1e-12);
    assert!(q.symmetric_eigen().eigenvalues.iter().all(|l| *l >= -1e-12));
    assert!((q * Vector3::z()).norm() < 1e-15);
}

#[test]
fn no_row_far_from_limit() {
    let sk = manikin();
    let s = double_support(&sk);
    let e = fit_for_support(&sk, &s).unwrap();
    let cache = FrameCache::new(&sk, &s.joint_state).unwrap();
    let row = make_balance_row(&e, &sk, &s, &cache, 0.002, &BalanceParams::default()).unwrap();
    assert!(row.is_none());
}

#[test]
fn disabled_balance_never_emits() {
    let sk = manikin();
    let s = double_support(&sk);
    let mut e = fit_for_support(&sk, &s).unwrap();
    // Push the center far away so the CoM is outside.
    e.x_c += Vector3::new(1.0, 0.0, 0.0);
    let cache = FrameCache::new(&sk, &s.joint_state).unwrap();
    let off = BalanceParams {
        enabled: false,
        ..BalanceParams::default()
    };
    assert!(make_balance_row(&e, &sk, &s, &cache, 0.002, &off)
        .unwrap()
        .is_none());
    assert!(
        make_balance_row(&e, &sk, &s, &cache, 0.002, &BalanceParams::default())
            .unwrap()
            .is_some()
    );
}

#[test]
fn stale_ellipse_is_rejected() {
    let sk = manikin();
    let s = double_support(&sk);
    let e = fit_for_support(&sk, &s).unwrap();
    let single = anchor_feet(
        &sk,
        &SimState::new(standing(&sk)),
        &WorldDef::default(),
        &feet(&sk)[..1],
    )
    .unwrap();
    let cache = FrameCache::new(&sk, &single.joint_state).unwrap();
    let r = make_balance_row(&e, &sk, &single, &cache, 0.002, &BalanceParams::default());
    assert!(matches!(r, Err(Error::StaleEllipse { .. })));
}

/// A point mass on the boundary moving outward: the single balance row must
/// cancel the outward rate exactly, with the closed-form multiplier.
#[test]
fn boundary_row_stops_outward_motion() {
    let m = 3.0;
    let sk = free_body(m, Matrix3::identity() * 0.1, vec![]);
    let world = WorldDef {
        gravity: [0.0; 3],
        ..WorldDef::default()
    };
    let dt = 0.01;
    let mut sim = Simulator::new(
        sk.clone(),
        world,
        SimParams {
            dt,
            ..SimParams::default()
        },
    )
    .unwrap();
    let e = ellipse(
        Matrix3::from_diagonal(&Vector3::new(1.0 / 0.04, 1.0 / 0.09, 0.0)),
        Vector3::zeros(),
    );
    let mut st = JointState::neutral(&sk);
    st.q[0] = 0.2;
    st.q[2] = 5.0;
    st.dq[3] = 0.5;
    st.dq[4] = 0.3;
    let s = SimState::new(st);
    let cache = FrameCache::new(&sk, &s.joint_state).unwrap();
    assert!(distance_to_limit(&e, &cache.center_of_mass(&sk)).abs() < 1e-12);
    let row = make_balance_row(&e, &sk, &s, &cache, dt, &BalanceParams::default())
        .unwrap()
        .unwrap();
    let j = row.jacobian_row.clone();
    let rate_before = j.dot(&s.joint_state.dq);
    assert!(rate_before < 0.0);
    let (next, report) = sim.step(&s, &DVector::zeros(sk.nv()), Some(row)).unwrap();
    let rate_after = j.dot(&next.joint_state.dq);
    assert!(rate_after >= -1e-8, "{rate_after}");
    // Linear block of the free body's inverse mass is 1/m.
    let jm = j.rows(3, 3).norm_squared() / m;
    let lambda = report.balance_multiplier.unwrap();
    assert!(
        (lambda + rate_before / jm).abs() < 1e-6 * lambda.abs(),
        "{lambda}"
    );
    // Reported as a generalized force: impulse over the step.
    assert!(
        (report.balance_torque_norm - lambda * j.norm() / dt).abs()
            < 1e-9 * report.balance_torque_norm
    );
}

proptest! {
    #[test]
    fn delta_is_quadratic_form(x in -0.5f64..0.5, y in -0.5f64..0.5, z in -1.0f64..1.0,
                               a in 0.02f64..0.4, b in 0.02f64..0.4) {
        let e = ellipse(Matrix3::from_diagonal(&Vector3::new(1.0 / (a * a), 1.0 / (b * b), 0.0)), Vector3::zeros());
        let expected = 1.0 - (x * x / (a * a) + y * y / (b * b));
        let got = distance_to_limit(&e, &Vector3::new(x, y, z));
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn hull_contains_every_input(pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..40)) {
        let pts: Vec<Vector2<f64>> = pts.into_iter().map(|(x, y)| Vector2::new(x, y)).collect();
        let hull = convex_hull(&pts);
        if hull.len() >= 3 {
            for p in &pts {
                prop_assert!(inside_hull(&hull, p));
            }
        }
    }
}

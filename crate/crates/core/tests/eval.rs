//! Closed-loop evaluation: geometry oracles, unroll mechanics, event
//! detection and report arithmetic.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssn::data::{generate_synthetic_scenes, Agent, AgentLabel, Dataset, Frame, GeneratorConfig, RasterConfig, Scene};
use ssn::eval::report::{read_report_csv, write_events_csv, write_report_csv};
use ssn::eval::{
    classify_collision, detect_collisions, evaluate, obb_overlap, render_svg, unroll_closed_loop, CollisionCategory,
    CollisionReport, ModelPolicy,
};
use ssn::geometry::{OrientedBox, Pose2};
use ssn::net::{build_network, NetworkConfig};

mod common;
use common::{random_box, sampling_oracle, sat_gap};

fn moved(b: &OrientedBox, t: &Pose2) -> OrientedBox {
    OrientedBox::new(t.compose(&b.pose), b.length, b.width)
}

#[test]
fn obb_matches_sampling_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(0x0bb);
    let (mut hits, mut misses, mut banded) = (0, 0, 0);
    for _ in 0..1000 {
        let (a, b) = (random_box(&mut r), random_box(&mut r));
        if sat_gap(&a, &b).abs() < 1e-6 {
            banded += 1;
            continue;
        }
        let got = obb_overlap(&a, &b);
        assert_eq!(got, sampling_oracle(&a, &b), "{a:?} {b:?}");
        if got {
            hits += 1;
        } else {
            misses += 1;
        }
    }
    assert!(hits > 200 && misses > 200, "{hits} / {misses} / {banded}");
}

#[test]
fn obb_symmetric_and_rigidly_invariant() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2000 {
        let (a, b) = (random_box(&mut r), random_box(&mut r));
        assert_eq!(obb_overlap(&a, &b), obb_overlap(&b, &a));
        if sat_gap(&a, &b).abs() < 1e-6 {
            continue;
        }
        let t = Pose2::new(r.gen_range(-1e3..1e3), r.gen_range(-1e3..1e3), r.gen_range(-PI..PI));
        assert_eq!(obb_overlap(&a, &b), obb_overlap(&moved(&a, &t), &moved(&b, &t)));
    }
}

#[test]
fn canonical_bearings() {
    let ego = OrientedBox::new(Pose2::new(5.0, -3.0, 0.4), 4.5, 2.0);
    let at = |theta: f64| {
        let p = ego.pose.compose(&Pose2::new(1.2 * theta.cos(), 1.2 * theta.sin(), 0.0));
        OrientedBox::new(p, 1.0, 1.0)
    };
    assert_eq!(classify_collision(&ego, &at(0.0)).unwrap().1, CollisionCategory::Front);
    assert_eq!(classify_collision(&ego, &at(PI)).unwrap().1, CollisionCategory::Rear);
    assert_eq!(classify_collision(&ego, &at(FRAC_PI_2)).unwrap().1, CollisionCategory::Side);
    assert_eq!(classify_collision(&ego, &at(-FRAC_PI_2)).unwrap().1, CollisionCategory::Side);
    let (theta, _) = classify_collision(&ego, &at(PI)).unwrap();
    assert!((theta.abs() - PI).abs() < 1e-12 && theta > -PI);
    assert!(classify_collision(&ego, &OrientedBox::new(Pose2::new(50.0, 0.0, 0.0), 1.0, 1.0)).is_err());

    // boundaries are inclusive toward front and rear
    assert_eq!(CollisionCategory::from_bearing(FRAC_PI_4), CollisionCategory::Front);
    assert_eq!(CollisionCategory::from_bearing(-FRAC_PI_4), CollisionCategory::Front);
    assert_eq!(CollisionCategory::from_bearing(3.0 * FRAC_PI_4), CollisionCategory::Rear);
    assert_eq!(CollisionCategory::from_bearing(-3.0 * FRAC_PI_4), CollisionCategory::Rear);
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let t: f64 = r.gen_range(-PI..=PI);
        let c = CollisionCategory::from_bearing(t);
        let want = if t.abs() <= FRAC_PI_4 {
            CollisionCategory::Front
        } else if t.abs() >= 3.0 * FRAC_PI_4 {
            CollisionCategory::Rear
        } else {
            CollisionCategory::Side
        };
        assert_eq!(c, want);
    }
}

fn short_scenes(seed: u64, n: usize, frames: usize, crossing: bool) -> Dataset {
    let cfg = GeneratorConfig {
        frames_per_scene: frames,
        crossing_agents: crossing,
        ..GeneratorConfig::default()
    };
    generate_synthetic_scenes(seed, n, &cfg)
}

fn zero_model() -> ModelPolicy<f64> {
    let cfg = NetworkConfig::gradcheck_tiny();
    let (net, mut params) = build_network::<f64>(&cfg, 1).unwrap();
    params.zero_all();
    let rcfg = RasterConfig {
        size: cfg.raster_size,
        ..RasterConfig::default()
    };
    ModelPolicy::new(net, params, rcfg).unwrap()
}

#[test]
fn zero_model_never_moves() {
    let ds = short_scenes(2, 2, 30, true);
    let policy = zero_model();
    for scene in &ds.scenes {
        let traj = unroll_closed_loop(&policy, &ds, scene).unwrap();
        assert_eq!(traj.len(), 30);
        let start = ds.frames[scene.frame_start_index].ego_pose;
        assert!(traj.iter().all(|p| *p == start));
    }
}

#[test]
fn raster_size_mismatch_is_rejected() {
    let cfg = NetworkConfig::gradcheck_tiny();
    let (net, params) = build_network::<f64>(&cfg, 1).unwrap();
    let err = ModelPolicy::new(net, params, RasterConfig::default()).err().unwrap();
    assert!(err.to_string().contains("raster size"), "{err}");
}

#[test]
fn unit_forward_command_advances_one_meter() {
    let ds = short_scenes(3, 1, 40, true);
    let scene = &ds.scenes[0];
    let traj = unroll_closed_loop(&|_: usize| Pose2::new(1.0, 0.0, 0.0), &ds, scene).unwrap();
    let start = traj[0];
    for (i, p) in traj.iter().enumerate() {
        assert!((p.x - (start.x + i as f64 * start.yaw.cos())).abs() < 1e-9);
        assert!((p.y - (start.y + i as f64 * start.yaw.sin())).abs() < 1e-9);
        assert_eq!(p.yaw, start.yaw);
    }
}

type Mat = [[f64; 3]; 3];

fn hom(p: &Pose2) -> Mat {
    let (s, c) = p.yaw.sin_cos();
    [[c, -s, p.x], [s, c, p.y], [0.0, 0.0, 1.0]]
}

fn mul(a: &Mat, b: &Mat) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

#[test]
fn curved_commands_match_transform_chain() {
    let ds = short_scenes(4, 1, 120, true);
    let scene = &ds.scenes[0];
    let command = |step: usize| {
        let t = step as f64;
        Pose2::new(0.8 + 0.1 * (0.1 * t).sin(), 0.05 * (0.07 * t).cos(), 0.03 + 0.02 * (0.05 * t).sin())
    };
    let traj = unroll_closed_loop(&command, &ds, scene).unwrap();
    let mut m = hom(&ds.frames[scene.frame_start_index].ego_pose);
    for (i, p) in traj.iter().enumerate() {
        assert!((p.x - m[0][2]).abs() < 1e-9 && (p.y - m[1][2]).abs() < 1e-9, "step {i}");
        let dyaw = (p.yaw - m[1][0].atan2(m[0][0])).sin().abs();
        assert!(dyaw < 1e-9, "step {i}");
        m = mul(&m, &hom(&command(i)));
    }
}

#[test]
fn motionless_ego_in_crossing_free_world_is_never_hit() {
    let ds = short_scenes(5, 12, 250, false);
    let (report, events) = evaluate(&|_: usize| Pose2::IDENTITY, &ds, "zero", 1).unwrap();
    assert!(events.is_empty(), "{events:?}");
    assert_eq!(report.total(), 0);
    assert_eq!(report.frames, 12 * 250);
    assert_eq!(report.meters, 0.0);
    assert_eq!(report.per_1000_miles(), None);
    let row = report.row();
    assert_eq!(row.rates(), [0.0; 3]);

    let small = short_scenes(5, 2, 25, false);
    let (zr, ze) = evaluate(&zero_model(), &small, "zero-net", 1).unwrap();
    assert!(ze.is_empty());
    assert_eq!((zr.total(), zr.meters), (0, 0.0));
}

fn one_scene(ego: Vec<Pose2>, track: Vec<Option<(f64, f64)>>) -> Dataset {
    let mut ds = Dataset::default();
    for (i, (pose, other)) in ego.into_iter().zip(track).enumerate() {
        let start = ds.agents.len();
        if let Some((x, y)) = other {
            ds.agents.push(Agent {
                track_id: 4,
                centroid: [x, y],
                yaw: PI,
                extent: [4.0, 1.8],
                velocity: [0.0, 0.0],
                label: AgentLabel::Vehicle,
            });
        }
        ds.frames.push(Frame {
            timestamp: i as f64 * 0.1,
            ego_pose: pose,
            agent_start_index: start,
            agent_end_index: ds.agents.len(),
        });
    }
    ds.scenes.push(Scene {
        scene_id: 0,
        host: "bench".into(),
        frame_start_index: 0,
        frame_end_index: ds.frames.len(),
    });
    ds.validate().unwrap();
    ds
}

#[test]
fn two_frame_front_impact() {
    let ego = Pose2::new(2.0, 1.0, 0.0);
    let ds = one_scene(vec![ego; 2], vec![Some((12.0, 1.0)), Some((5.0, 1.0))]);
    let (report, events) = evaluate(&|_: usize| Pose2::IDENTITY, &ds, "bench", 1).unwrap();
    assert_eq!(events.len(), 1);
    let e = &events[0];
    assert_eq!((e.scene_id, e.frame_index, e.track_id), (0, 1, 4));
    assert_eq!(e.category, CollisionCategory::Front);
    assert_eq!(e.theta, 0.0);
    assert_eq!(report.frames, 2);
    assert_eq!(report.rate_10k(CollisionCategory::Front), 5000.0);
    assert_eq!(report.total_rate_10k(), 5000.0);
}

#[test]
fn contact_episodes_emit_once() {
    let ego = Pose2::IDENTITY;
    let track = vec![Some((-3.0, 0.0)), Some((-3.0, 0.1)), Some((-20.0, 0.0)), None, Some((-2.5, 0.0))];
    let ds = one_scene(vec![ego; 5], track);
    let events = detect_collisions(&ds, &ds.scenes[0], &vec![ego; 5]).unwrap();
    let frames: Vec<usize> = events.iter().map(|e| e.frame_index).collect();
    assert_eq!(frames, [0, 4]);
    assert!(events.iter().all(|e| e.category == CollisionCategory::Rear));
    assert!(detect_collisions(&ds, &ds.scenes[0], &[ego]).is_err());
}

fn duplicated(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for s in &ds.scenes {
        let frame_base = out.frames.len();
        for f in ds.scene_frames(s) {
            let agent_base = out.agents.len();
            out.agents.extend_from_slice(ds.frame_agents(f));
            out.frames.push(Frame {
                agent_start_index: agent_base,
                agent_end_index: out.agents.len(),
                ..f.clone()
            });
        }
        out.scenes.push(Scene {
            scene_id: s.scene_id + 1000,
            frame_start_index: frame_base,
            frame_end_index: out.frames.len(),
            ..s.clone()
        });
    }
    out.validate().unwrap();
    out
}

#[test]
fn rates_are_invariant_under_duplication_and_threads() {
    // a slow ego gets caught by followers and crossers
    let ds = short_scenes(6, 6, 250, true);
    let slow = |_: usize| Pose2::new(0.2, 0.0, 0.0);
    let (base, events) = evaluate(&slow, &ds, "slow", 1).unwrap();
    assert!(base.total() > 0);
    let (threaded, threaded_events) = evaluate(&slow, &ds, "slow", 4).unwrap();
    assert_eq!(threaded, base);
    assert_eq!(threaded_events, events);

    let (double, _) = evaluate(&slow, &duplicated(&ds), "slow", 3).unwrap();
    assert_eq!(double.counts, base.counts.map(|c| 2 * c));
    assert_eq!(double.frames, 2 * base.frames);
    for c in CollisionCategory::ALL {
        assert_eq!(double.rate_10k(c), base.rate_10k(c));
    }
    let ordered: Vec<u64> = events.iter().map(|e| e.scene_id).collect();
    assert!(ordered.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn report_arithmetic_and_files() {
    let mut r = CollisionReport::new("ssn");
    r.counts = [100, 50, 24];
    r.frames = 10_000;
    r.meters = 10_000.0 * 1609.344;
    assert_eq!(r.per_1000_miles(), Some(17.4));
    assert_eq!(r.rate_10k(CollisionCategory::Front), 100.0);

    let mut out = Vec::new();
    let rows = vec![r.row(), CollisionReport::new("idle").row()];
    write_report_csv(&mut out, &rows).unwrap();
    let text = String::from_utf8(out.clone()).unwrap();
    assert_eq!(
        text,
        "model,front_10k,side_10k,rear_10k,total_per_1000mi,frames,meters\n\
         ssn,100,50,24,17.4,10000,16093440\n\
         idle,0,0,0,,0,0\n"
    );
    assert_eq!(read_report_csv(out.as_slice()).unwrap(), rows);
    assert!(read_report_csv("model,front\nx,1\n".as_bytes()).is_err());

    let svg = render_svg(&rows);
    assert_eq!(svg, render_svg(&rows));
    assert_eq!(svg.matches("class=\"bar\"").count(), 6);

    let ds = one_scene(vec![Pose2::IDENTITY; 2], vec![None, Some((3.0, 0.0))]);
    let (_, events) = evaluate(&|_: usize| Pose2::IDENTITY, &ds, "bench", 1).unwrap();
    let mut csv = Vec::new();
    write_events_csv(&mut csv, &events).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap(), "scene_id,frame,track_id,theta,category\n0,1,4,0,front\n");
}

/// Pulls `data-value` and `height` out of every bar.
fn bars(svg: &str) -> Vec<(f64, f64)> {
    let attr = |line: &str, name: &str| -> f64 {
        let key = format!(" {name}=\"");
        let start = line.find(&key).unwrap() + key.len();
        line[start..].split('"').next().unwrap().parse().unwrap()
    };
    svg.lines()
        .filter(|l| l.contains("class=\"bar\""))
        .map(|l| (attr(l, "data-value"), attr(l, "height")))
        .collect()
}

#[test]
fn svg_bar_heights_are_proportional() {
    let mut a = CollisionReport::new("trained");
    a.counts = [3, 7, 1];
    a.frames = 5000;
    let mut b = CollisionReport::new("random");
    b.counts = [9, 2, 13];
    b.frames = 5000;
    let svg = render_svg(&[a.row(), b.row()]);
    let parsed = bars(&svg);
    assert_eq!(parsed.len(), 6);
    let max = parsed.iter().map(|p| p.0).fold(0.0, f64::max);
    for (value, height) in parsed {
        assert!((height - value / max * 300.0).abs() <= 5e-4, "{value} {height}");
    }
    let single = bars(&render_svg(&[a.row()]));
    assert_eq!(single.len(), 3);
    assert_eq!(single.iter().map(|p| p.1).fold(0.0, f64::max), 300.0);
}

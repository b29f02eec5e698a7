//! Checks behind the acceptance criteria that do not need a trained policy.
//! Each returns a one-line summary on success and a diagnostic on failure.

use std::path::Path;
use std::time::Instant;

use crawlspace::neural::{
    ppl_loss, Activation, DenseNet, DenseNetSpec, PplDims, PplNet, PplTargets, PplWidths,
};
use crawlspace::rewards::{
    compute, reward_body_collision, reward_leg_collision, reward_pcv, reward_regularizers, reward_tracking, total,
    RegularizerInputs, RewardBreakdown, RewardWeights, StepRewardInputs,
};
use crawlspace::sensing::{
    cartesian_of, polar_of, ray_direction, raycast, scan, Hemisphere, ALPHA_BINS, BETA_BINS, MAX_RANGE, MIN_DISTANCE, SCAN_LEN,
};
use crawlspace::simenv::contact::LegContacts;
use crawlspace::simenv::{CollisionState, CrawlerConfig, StuckTracker};
use crawlspace::terrain::{curriculum_interpolate, TerrainKind, NUM_LEVELS};
use crawlspace::trainer::{next_level, train, CurriculumConfig, EpisodeResult, TrainConfig};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Sizes, value range, index ordering and bit-exact repeatability of scans.
pub fn scan_contract(pairs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_order = 0.0f64;
    for case in 0..pairs {
        let profile = random_profile(&mut rng);
        let pose = random_pose(&mut rng, &profile);
        let (g, s) = scan(&profile, &pose);
        let (g2, s2) = scan(&profile, &pose);
        for (sc, hemi) in [(&g, Hemisphere::Ground), (&s, Hemisphere::Space)] {
            ensure(sc.values.len() == SCAN_LEN, || format!("case {case}: {hemi:?} scan has {} entries", sc.values.len()))?;
            ensure(sc.values.iter().all(|&v| v > 0.0 && v <= 1.0), || format!("case {case}: {hemi:?} value outside (0, 1]"))?;
        }
        let same = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same(&g.values, &g2.values) && same(&s.values, &s2.values), || format!("case {case}: repeated scan differs"))?;
        // spot-check the ordering against single rays
        for _ in 0..8 {
            let (a, b) = (rng.random_range(0..ALPHA_BINS), rng.random_range(0..BETA_BINS));
            for (sc, hemi) in [(&g, Hemisphere::Ground), (&s, Hemisphere::Space)] {
                let dir = pose.orientation * ray_direction(a, b, hemi).unwrap();
                let expect = raycast(&profile, &pose.origin, &dir, MAX_RANGE) / MAX_RANGE;
                worst_order = worst_order.max((f64::from(sc.values[a * BETA_BINS + b]) - expect).abs());
            }
        }
    }
    ensure(worst_order < 1e-5, || format!("bin a*24+b disagrees with its ray by {worst_order:.2e}"))?;
    Ok(format!("{pairs} pairs, 720+720 entries in (0,1], bit-identical repeats, ordering error {worst_order:.1e}"))
}

/// Analytic raycaster against the 0.5 mm marching oracle, plus relative speed.
pub fn raycast_oracle(rays: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_profile = 100;
    let mut cases = Vec::with_capacity(rays);
    while cases.len() < rays {
        let profile = std::sync::Arc::new(random_profile(&mut rng));
        for _ in 0..per_profile.min(rays - cases.len()) {
            let (x, z) = free_point(&mut rng, &profile);
            cases.push((std::sync::Arc::clone(&profile), Vector3::new(x, 0.0, z), random_unit(&mut rng)));
        }
    }
    let t0 = Instant::now();
    let analytic: Vec<f64> = cases.iter().map(|(p, o, d)| raycast(p, o, d, MAX_RANGE)).collect();
    let t_analytic = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let oracle: Vec<f64> = cases.iter().map(|(p, o, d)| march(p, o, d, MAX_RANGE)).collect();
    let t_oracle = t1.elapsed().as_secs_f64();
    let (worst_i, worst) = analytic
        .iter()
        .zip(&oracle)
        .map(|(a, o)| (a - o).abs())
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    let speedup = t_oracle / t_analytic.max(1e-12);
    ensure(worst <= 5e-3, || {
        let (_, o, d) = &cases[worst_i];
        format!("ray {worst_i} from ({:.4}, {:.4}) dir {:?}: analytic {:.5} vs oracle {:.5}", o.x, o.z, d.as_slice(), analytic[worst_i], oracle[worst_i])
    })?;
    ensure(speedup >= 10.0, || format!("analytic only {speedup:.1}x faster than marching"))?;
    Ok(format!("{rays} rays, max |analytic - oracle| = {:.3} mm, analytic {speedup:.0}x faster", worst * 1e3))
}

pub fn polar_round_trip(points: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let r = rng.random_range(MIN_DISTANCE..MAX_RANGE);
        let p = random_unit(&mut rng) * r;
        let back = cartesian_of(&polar_of(&p).map_err(|e| e.to_string())?);
        worst = worst.max((back - p).norm() / p.norm());
    }
    ensure(worst <= 1e-9, || format!("relative error {worst:.2e}"))?;
    Ok(format!("{points} points, max relative error {worst:.1e}"))
}

fn collision_state<R: Rng>(rng: &mut R, n_hips: usize, n_legs: usize) -> CollisionState {
    let mut force = |scale: f64| [rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale)];
    let mut c = CollisionState::empty(n_hips, n_legs);
    c.head_force = force(200.0);
    c.base_force = force(200.0);
    c.hip_forces = (0..n_hips).map(|_| force(200.0)).collect();
    c.head = rng.random_bool(0.5);
    c.base = rng.random_bool(0.5);
    c.hips = (0..n_hips).map(|_| rng.random_bool(0.5)).collect();
    c.legs = (0..n_legs)
        .map(|_| LegContacts { foot: rng.random_bool(0.5), thigh: rng.random_bool(0.5), shank: rng.random_bool(0.5) })
        .collect();
    c
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// The rewards module's tabulated examples.
pub fn reward_examples() -> Result<usize, String> {
    let w = RewardWeights::default();
    let mut quad = CollisionState::empty(4, 4);
    let mut checks: Vec<(&str, f64, f64)> = vec![
        ("tracking v = cmd", reward_tracking([0.3, -0.1], [0.3, -0.1]), 1.0),
        ("tracking half speed", reward_tracking([0.5, 0.0], [1.0, 0.0]), (-1.0f64).exp()),
        ("tracking zero", reward_tracking([0.0, 0.0], [0.0, 0.0]), 1.0),
        ("leg no contacts", reward_leg_collision(&quad, false), 0.0),
        ("body all zero", reward_body_collision(&quad, w.lambda, w.mu), 0.0),
    ];
    quad.legs[1].shank = true;
    checks.push(("leg one shank", reward_leg_collision(&quad, false), 1.0));
    quad.legs = vec![LegContacts { foot: true, thigh: true, shank: true }; 4];
    checks.push(("leg all twelve", reward_leg_collision(&quad, false), 12.0));
    let mut c = CollisionState::empty(4, 4);
    c.head = true;
    c.head_force = [50.0, 0.0, 0.0];
    checks.push(("body 50 N head", reward_body_collision(&c, w.lambda, w.mu), 1.632_120_558_828_557_7));
    c.base = true;
    c.hips = vec![true; 4];
    c.head_force = [1e9, 0.0, 0.0];
    c.base_force = [0.0, 1e9, 0.0];
    c.hip_forces = vec![[1e9, 0.0, 0.0]; 4];
    checks.push(("body saturation", reward_body_collision(&c, w.lambda, w.mu), 9.0));
    checks.push(("pcv outside", reward_pcv(false, [-0.4, 0.0], [1.0, 0.0]), 0.0));
    checks.push(("pcv backing", reward_pcv(true, [-0.4, 0.0], [1.0, 0.0]), 0.4));
    checks.push(("pcv pushing", reward_pcv(true, [0.3, 0.0], [1.0, 0.0]), -0.3));

    let a = [0.2, -0.1, 0.0, 0.3];
    let zeros = [0.0; 4];
    let feet = [[0.0; 2]; 4];
    let stance = [true; 4];
    let level = RegularizerInputs {
        action: &a,
        prev_action: &a,
        prev_prev_action: &a,
        torques: &zeros,
        qdot: &zeros,
        qddot: &zeros,
        omega_xy: [0.0; 2],
        v_z: 0.0,
        gravity_xy: [0.0; 2],
        foot_velocities: &feet,
        stance: &stance,
    };
    let still = reward_regularizers(&level);
    checks.push(("regularizers at rest", still.terms().iter().map(|t| t.abs()).sum(), 0.0));
    let prev = [0.1, -0.1, 0.0, 0.3];
    checks.push(("action rate", reward_regularizers(&RegularizerInputs { prev_action: &prev, ..level }).action_rate, 0.01));
    let s = 30f64.to_radians().sin();
    checks.push((
        "gravity at 30 deg",
        reward_regularizers(&RegularizerInputs { gravity_xy: [-s, 0.0], ..level }).proj_gravity_xy,
        0.25,
    ));
    let tw = RewardWeights::default();
    checks.push(("total tracking only", total(&RewardBreakdown { tracking: 1.0, ..Default::default() }, &tw), 1.0));
    checks.push((
        "total with leg collisions",
        total(&RewardBreakdown { tracking: 1.0, collision_ra: 2.0, ..Default::default() }, &tw),
        -4.0,
    ));
    checks.push(("total pcv", total(&RewardBreakdown { pcv: 0.4, ..Default::default() }, &tw), 2.0));
    for (name, got, want) in &checks {
        ensure(near(*got, *want), || format!("{name}: {got} != {want}"))?;
    }
    Ok(checks.len())
}

/// Randomized inputs against straight-line re-evaluations of every formula.
pub fn reward_oracle(cases: usize, seed: u64) -> Check {
    let examples = reward_examples()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    for case in 0..cases {
        let (n_hips, n_legs, n_joints) = if rng.random_bool(0.5) { (2, 2, 4) } else { (4, 4, 12) };
        let mut w = if rng.random_bool(0.5) { RewardWeights::crawler() } else { RewardWeights::default() };
        w.lambda = [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];
        w.mu = [rng.random_range(0.001..0.1), rng.random_range(0.001..0.1), rng.random_range(0.001..0.1)];
        let c = collision_state(&mut rng, n_hips, n_legs);
        let mut vec = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..s)).collect() };
        let (a, a1, a2) = (vec(n_joints, 1.0), vec(n_joints, 1.0), vec(n_joints, 1.0));
        let (tau, qd, qdd) = (vec(n_joints, 30.0), vec(n_joints, 10.0), vec(n_joints, 500.0));
        let v = vec(2, 1.0);
        let cmd = vec(2, 1.0);
        let misc = vec(6, 1.0);
        let feet: Vec<[f64; 2]> = (0..n_legs).map(|_| [misc[0] * 0.3, misc[1] * 0.2]).collect();
        let stance: Vec<bool> = (0..n_legs).map(|i| i % 2 == 0).collect();
        let in_window = misc[5] > 0.0;
        let inputs = StepRewardInputs {
            v_xy: [v[0], v[1]],
            cmd_xy: [cmd[0], cmd[1]],
            omega_z: misc[2],
            cmd_omega_z: misc[3],
            collisions: &c,
            in_pcv_window: in_window,
            regularizers: RegularizerInputs {
                action: &a,
                prev_action: &a1,
                prev_prev_action: &a2,
                torques: &tau,
                qdot: &qd,
                qddot: &qdd,
                omega_xy: [misc[4], misc[0]],
                v_z: misc[1],
                gravity_xy: [misc[2] * 0.5, misc[3] * 0.5],
                foot_velocities: &feet,
                stance: &stance,
            },
        };
        let got = compute(&inputs, &w);

        // straight-line re-evaluation
        let hnorm = |f: &[f64; 3]| (f[0] * f[0] + f[1] * f[1]).sqrt();
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        let tracking = (-4.0 * ((v[0] - cmd[0]).powi(2) + (v[1] - cmd[1]).powi(2))).exp();
        let mut ra = 0.0;
        for l in &c.legs {
            ra += if w.exclude_stance_foot_contact { 0.0 } else { b(l.foot) } + b(l.thigh) + b(l.shank);
        }
        let hip_sum: f64 = c.hip_forces.iter().map(hnorm).sum();
        let su = w.lambda[0] * (1.0 - (-w.mu[0] * hnorm(&c.head_force)).exp())
            + w.lambda[1] * (1.0 - (-w.mu[1] * hnorm(&c.base_force)).exp())
            + w.lambda[2] * (1.0 - (-w.mu[2] * hip_sum).exp())
            + b(c.head)
            + b(c.base)
            + c.hips.iter().map(|&h| b(h)).sum::<f64>();
        let pcv = if in_window { -(v[0] * cmd[0] + v[1] * cmd[1]) } else { 0.0 };
        let rate: Vec<f64> = (0..n_joints).map(|i| a[i] - a1[i]).collect();
        let acc: Vec<f64> = (0..n_joints).map(|i| a[i] - 2.0 * a1[i] + a2[i]).collect();
        let slip: f64 = (0..n_legs).filter(|&i| stance[i]).map(|i| feet[i][0].powi(2) + feet[i][1].powi(2)).sum();
        let yaw = (-4.0 * (misc[2] - misc[3]).powi(2)).exp();
        let expect = [
            ("tracking", got.tracking, tracking),
            ("collision_ra", got.collision_ra, ra),
            ("collision_su", got.collision_su, su),
            ("pcv", got.pcv, pcv),
            ("action_rate", got.action_rate, sq(&rate)),
            ("action_accel", got.action_accel, sq(&acc)),
            ("torques", got.torques, sq(&tau)),
            ("joint_vel", got.joint_vel, sq(&qd)),
            ("joint_accel", got.joint_accel, sq(&qdd)),
            ("angvel_xy", got.angvel_xy, misc[4].powi(2) + misc[0].powi(2)),
            ("linvel_z", got.linvel_z, misc[1].powi(2)),
            ("proj_gravity_xy", got.proj_gravity_xy, (misc[2] * 0.5).powi(2) + (misc[3] * 0.5).powi(2)),
            ("foot_slip", got.foot_slip, slip),
            ("yaw_tracking", got.yaw_tracking, yaw),
        ];
        for (name, g, e) in expect {
            ensure(near(g, e), || format!("case {case}: {name} {g} vs {e}"))?;
        }
        let weighted = w.tracking * tracking
            + w.collision_ra * ra
            + w.collision_su * su
            + w.pcv * pcv
            + w.action_rate * sq(&rate)
            + w.action_accel * sq(&acc)
            + w.torques * sq(&tau)
            + w.joint_vel * sq(&qd)
            + w.joint_accel * sq(&qdd)
            + w.angvel_xy * (misc[4].powi(2) + misc[0].powi(2))
            + w.linvel_z * misc[1].powi(2)
            + w.proj_gravity_xy * ((misc[2] * 0.5).powi(2) + (misc[3] * 0.5).powi(2))
            + w.foot_slip * slip
            + if w.yaw_tracking_enabled { w.yaw_tracking * yaw } else { 0.0 };
        ensure(near(got.weighted_total, weighted), || format!("case {case}: total {} vs {weighted}", got.weighted_total))?;
    }
    Ok(format!("{examples} tabulated examples and {cases} randomized cases within 1e-9"))
}

/// Per-tick (body contact, blocked) flags for the scripted timelines.
pub struct Timeline {
    pub name: &'static str,
    pub ticks: u32,
    pub flags: fn(u32) -> (bool, bool),
    /// Expected window as (first, last) tick pairs.
    pub windows: Vec<(u32, u32)>,
}

pub fn timelines() -> Vec<Timeline> {
    vec![
        // blocked over [1.00, 2.00) s: stuck at 1.20 s, escape at 2.00 s, window (1.20, 2.04)
        Timeline {
            name: "single block",
            ticks: 200,
            flags: |n| {
                let c = (50..100).contains(&n);
                (c, c)
            },
            windows: vec![(61, 101)],
        },
        // blocked over [0.40, 0.80), then still touching while moving until 1.20 s;
        // a later 0.10 s block is too short to stick
        Timeline {
            name: "contact outlasts block",
            ticks: 200,
            flags: |n| ((20..60).contains(&n) || (100..105).contains(&n), (20..40).contains(&n) || (100..105).contains(&n)),
            windows: vec![(31, 61)],
        },
        // two separate blocks: stuck at 0.40 s and 1.00 s, escapes at 0.60 s and 1.40 s
        Timeline {
            name: "two blocks",
            ticks: 150,
            flags: |n| {
                let c = (10..30).contains(&n) || (40..70).contains(&n);
                (c, c)
            },
            windows: vec![(21, 31), (51, 71)],
        },
    ]
}

pub fn stuck_timelines() -> Check {
    let cfg = CrawlerConfig::crawler();
    let (sustain, extension) = (cfg.ticks(cfg.stuck_sustain_s), cfg.ticks(cfg.pcv_extension_s));
    ensure(extension == 2, || format!("0.04 s is {extension} ticks"))?;
    let (v, cmd) = ([-0.3, 0.0], [0.6, 0.0]);
    let mut summary = Vec::new();
    for tl in timelines() {
        let mut tracker = StuckTracker::new(sustain, extension);
        let mut open: Vec<u32> = Vec::new();
        for now in 1..=tl.ticks {
            let (contact, blocked) = (tl.flags)(now);
            tracker.update(now, contact, blocked);
            let inside = tracker.in_window(now);
            let r = reward_pcv(inside, v, cmd);
            ensure(inside == (r != 0.0), || format!("{}: r_PCV {r} at tick {now} with window {inside}", tl.name))?;
            if inside {
                open.push(now);
            }
        }
        let mut windows = Vec::new();
        for &t in &open {
            match windows.last_mut() {
                Some((_, last)) if *last + 1 == t => *last = t,
                _ => windows.push((t, t)),
            }
        }
        ensure(windows == tl.windows, || format!("{}: windows {windows:?}, expected {:?}", tl.name, tl.windows))?;
        summary.push(format!("{} {:?}", tl.name, windows));
    }
    Ok(format!("ticks of 0.02 s: {}", summary.join("; ")))
}

fn small_ppl(rng: &mut ChaCha8Rng) -> PplNet<f64> {
    let dims = PplDims {
        history: 15,
        proprio: 5,
        n_collision: 3,
        velocity: 3,
        latent: 4,
        scan: 20,
        ground_latent: 6,
        space_latent: 5,
    };
    let widths = PplWidths {
        proprio_encoder: vec![32, 16],
        proprio_decoder: vec![16, 16],
        ground_encoder: vec![8],
        space_encoder: vec![8],
        feature_encoder: vec![8],
    };
    PplNet::new(dims, &widths, rng).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

const FD_STEP: f64 = 1e-6;
/// Gradients below this magnitude are compared absolutely.
const FD_FLOOR: f64 = 1e-6;

fn check_net(name: &str, net: &DenseNet<f64>, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let batch = 3;
    let x = random_vec(rng, batch * net.input_dim(), 1.0);
    let w = random_vec(rng, batch * net.output_dim(), 1.0);
    let cache = net.forward(&x, batch).map_err(|e| e.to_string())?;
    let mut grads = vec![0.0; net.n_params()];
    let dx = net.backward(&cache, &w, &mut grads).map_err(|e| e.to_string())?;
    let mut params = net.params().to_vec();
    let spec = net.spec().clone();
    let e_params = max_fd_error(&mut params, &grads, FD_STEP, FD_FLOOR, |p| {
        probe_loss(&DenseNet::from_params(spec.clone(), p.to_vec()).unwrap(), &x, batch, &w)
    });
    let mut xs = x.clone();
    let e_input = max_fd_error(&mut xs, &dx, FD_STEP, FD_FLOOR, |xi| probe_loss(net, xi, batch, &w));
    let worst = e_params.max(e_input);
    ensure(worst <= 1e-4, || format!("{name}: relative gradient error {worst:.2e}"))?;
    Ok(worst)
}

/// Finite-difference checks of every sub-network and the composite estimator loss.
pub fn gradient_checks(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ppl = small_ppl(&mut rng);
    let actor = DenseNet::<f64>::new(DenseNetSpec::new(12, &[32, 16], 4), &mut rng, 1.0).unwrap();
    let critic = DenseNet::<f64>::new(DenseNetSpec::new(14, &[32, 16], 1), &mut rng, 1.0).unwrap();
    let logistic =
        DenseNet::<f64>::new(DenseNetSpec::new(6, &[8], 3).with_output(Activation::Logistic), &mut rng, 1.0).unwrap();
    let mut worst = 0.0f64;
    for (name, net) in [
        ("proprio encoder", &ppl.proprio_encoder),
        ("proprio decoder", &ppl.proprio_decoder),
        ("ground encoder", &ppl.ground_encoder),
        ("space encoder", &ppl.space_encoder),
        ("feature encoder", &ppl.feature_encoder),
        ("actor", &actor),
        ("critic", &critic),
        ("logistic head", &logistic),
    ] {
        worst = worst.max(check_net(name, net, &mut rng)?);
    }

    // composite estimator loss through encoder, logistic collision head and decoder
    let d = ppl.dims;
    let batch = 4;
    let history = random_vec(&mut rng, batch * d.history, 1.0);
    let c: Vec<f64> = (0..batch * d.n_collision).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
    let v = random_vec(&mut rng, batch * d.velocity, 1.0);
    let zl = random_vec(&mut rng, batch * d.latent, 1.0);
    let o_next = random_vec(&mut rng, batch * d.proprio, 1.0);
    let loss_of = |net: &PplNet<f64>| -> f64 {
        let est = net.estimate(&history, batch).unwrap();
        ppl_loss(&est, &PplTargets { c: &c, v: &v, zl: &zl, o_next: &o_next }).unwrap().0.total
    };
    let est = ppl.estimate(&history, batch).map_err(|e| e.to_string())?;
    let (_, out_grad) = ppl_loss(&est, &PplTargets { c: &c, v: &v, zl: &zl, o_next: &o_next }).map_err(|e| e.to_string())?;
    let mut grads = ppl.zero_grads();
    ppl.estimator_backward(&est, &out_grad, &mut grads).map_err(|e| e.to_string())?;
    let mut probe = ppl.clone();
    let mut p = probe.proprio_encoder.params().to_vec();
    let e_enc = max_fd_error(&mut p, &grads.proprio_encoder, FD_STEP, FD_FLOOR, |q| {
        probe.proprio_encoder.params_mut().copy_from_slice(q);
        loss_of(&probe)
    });
    let mut probe = ppl.clone();
    let mut p = probe.proprio_decoder.params().to_vec();
    let e_dec = max_fd_error(&mut p, &grads.proprio_decoder, FD_STEP, FD_FLOOR, |q| {
        probe.proprio_decoder.params_mut().copy_from_slice(q);
        loss_of(&probe)
    });
    ensure(grads.ground_encoder.iter().chain(&grads.space_encoder).all(|&g| g == 0.0), || {
        "estimator loss reached the scan encoders".into()
    })?;
    let composite = e_enc.max(e_dec);
    ensure(composite <= 1e-4, || format!("composite loss: relative gradient error {composite:.2e}"))?;
    worst = worst.max(composite);
    Ok(format!("8 networks and the composite estimator loss, max relative error {worst:.1e}"))
}

pub fn curriculum_suite() -> Check {
    let cfg = CurriculumConfig::default();
    let r = |traversal, progress, commanded| EpisodeResult { traversal, progress, commanded_distance: commanded };
    let cases = [
        (3, r(1.0, 3.0, 3.0), 4, "promote"),
        (3, r(0.8, 3.0, 3.0), 4, "promote at threshold"),
        (3, r(0.1, 0.3, 3.0), 2, "demote"),
        (3, r(0.5, 1.5, 3.0), 3, "hold"),
        (9, r(1.0, 3.0, 3.0), 9, "clamp top"),
        (0, r(0.0, 0.0, 3.0), 0, "clamp bottom"),
    ];
    for (level, result, want, name) in cases {
        let got = next_level(&cfg, level, &result);
        ensure(got == want, || format!("{name}: level {level} -> {got}, expected {want}"))?;
    }
    let h0 = curriculum_interpolate(TerrainKind::FlatTunnel, 0).map_err(|e| e.to_string())?.tunnel_height;
    let h9 = curriculum_interpolate(TerrainKind::FlatTunnel, NUM_LEVELS - 1).map_err(|e| e.to_string())?.tunnel_height;
    ensure(h0 == 0.40 && (h9 - 0.22).abs() < 1e-12, || format!("flat tunnel endpoints {h0}, {h9}"))?;
    ensure(curriculum_interpolate(TerrainKind::FlatTunnel, NUM_LEVELS).is_err(), || "level 10 accepted".into())?;
    Ok(format!("{} transitions, flat tunnel {h0:.2} m at level 0 and {h9:.2} m at level 9", cases.len()))
}

/// Small config for determinism runs.
pub fn tiny_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.envs = 6;
    cfg.iterations = 4;
    cfg.checkpoint_every = 2;
    cfg.ppo.horizon = 8;
    cfg.ppo.minibatches = 2;
    cfg.ppo.epochs = 2;
    cfg.curriculum.kinds = vec![TerrainKind::FlatTunnel, TerrainKind::StairsTunnelUp];
    cfg
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Same (config, seed) under different worker counts, and after a resume,
/// yields identical metrics streams and checkpoints.
pub fn reproducibility(dir: &Path) -> Check {
    let cfg = tiny_config(7);
    let run = |workers: usize, name: &str, resume: Option<&Path>| -> Result<std::path::PathBuf, String> {
        let mut c = cfg.clone();
        c.workers = workers;
        train(&c, &dir.join(name), resume, |_, _| {}).map_err(|e| e.to_string())
    };
    let a = run(1, "one", None)?;
    let b = run(3, "three", None)?;
    let metrics = |name: &str| read_bytes(&dir.join(name).join("metrics.jsonl"));
    ensure(metrics("one")? == metrics("three")?, || "metrics differ between 1 and 3 workers".into())?;
    ensure(read_bytes(&a)? == read_bytes(&b)?, || "checkpoints differ between 1 and 3 workers".into())?;

    // resume from the midpoint in a copy of the first run
    let resumed = dir.join("resumed");
    std::fs::create_dir_all(resumed.join("checkpoints")).map_err(|e| e.to_string())?;
    let mid = dir.join("one/checkpoints/iter_000002.pplc");
    let lines = String::from_utf8(metrics("one")?).map_err(|e| e.to_string())?;
    let head: String = lines.lines().take(2).map(|l| format!("{l}\n")).collect();
    std::fs::write(resumed.join("metrics.jsonl"), head).map_err(|e| e.to_string())?;
    let c = run(2, "resumed", Some(&mid))?;
    ensure(metrics("resumed")? == metrics("one")?, || "resumed metrics stream differs".into())?;
    ensure(read_bytes(&c)? == read_bytes(&a)?, || "resumed final checkpoint differs".into())?;
    let n = lines.lines().count();
    ensure(n == cfg.iterations, || format!("{n} metrics rows for {} iterations", cfg.iterations))?;
    Ok(format!("{n}-iteration runs identical across 1, 2 and 3 workers and across a resume"))
}

use brsl::reach::{fit_local_model, mismatch_bounds, reach_tube, residual_bounds};
use brsl::sysid::{collect_random_data, TrajectoryData};
use brsl::{BlackBoxEnv, EnvKind, Interval, ReachConfig, Reachability, Vector, Zonotope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(env: &BlackBoxEnv, seed: u64) -> TrajectoryData {
    let restart = match env.kind() {
        EnvKind::PointMass2D => None,
        EnvKind::Unicycle2D => Some(25),
    };
    collect_random_data(env, 500, restart, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn plan(env: &BlackBoxEnv, len: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    (0..len).map(|_| env.random_action(rng)).collect()
}

/// Rolls the true system out `samples` times; returns the miss count.
fn monte_carlo(
    env: &BlackBoxEnv,
    reach: &Reachability,
    x0: &Vector,
    actions: &[Vector],
    samples: usize,
    seed: u64,
) -> usize {
    let tube = reach.tube(x0, actions).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = 0;
    for _ in 0..samples {
        let mut x = x0.clone();
        for (k, u) in actions.iter().enumerate() {
            x = env.step(&x, u, &mut rng).unwrap();
            if !tube.sets[k + 1].contains(&x, 0.0) {
                misses += 1;
            }
        }
    }
    misses
}

fn hull_contains(outer: &Interval, inner: &Interval, tol: f64) -> bool {
    (0..outer.dim()).all(|i| {
        outer.lower()[i] <= inner.lower()[i] + tol && inner.upper()[i] <= outer.upper()[i] + tol
    })
}

#[test]
fn rollouts_stay_in_tube() {
    for kind in [EnvKind::PointMass2D, EnvKind::Unicycle2D] {
        let env = BlackBoxEnv::new(kind);
        let data = dataset(&env, 7);
        let reach = Reachability::new(&data, env.noise(), ReachConfig::for_env(kind)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x0 = data
            .x_minus()
            .column(rng.random_range(0..data.len()))
            .into_owned();
        let actions = plan(&env, 8, &mut rng);
        assert_eq!(
            monte_carlo(&env, &reach, &x0, &actions, 1000, 1),
            0,
            "{}",
            kind.name()
        );
    }
}

#[test]
fn unicycle_contains_samples_with_and_without_warp() {
    let env = BlackBoxEnv::new(EnvKind::Unicycle2D);
    let data = dataset(&env, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for warp in [true, false] {
        let reach = Reachability::new(
            &data,
            env.noise(),
            ReachConfig {
                lipschitz_scale: 1e-2,
                warp,
            },
        )
        .unwrap();
        for trial in 0..5 {
            let x0 = data
                .x_minus()
                .column(rng.random_range(0..data.len()))
                .into_owned();
            let actions = plan(&env, 6, &mut rng);
            assert_eq!(
                monte_carlo(&env, &reach, &x0, &actions, 200, trial),
                0,
                "warp {warp}, trial {trial}"
            );
        }
    }
}

#[test]
fn larger_noise_gives_larger_sets() {
    let env = BlackBoxEnv::new(EnvKind::PointMass2D);
    let data = dataset(&env, 3);
    let config = ReachConfig::for_env(EnvKind::PointMass2D);
    let noise = env.noise();
    let bigger = Zonotope::new(noise.center().clone(), noise.generators() * 1.5).unwrap();
    let small = Reachability::new(&data, noise, config).unwrap();
    let large = Reachability::new(&data, &bigger, config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = data.x_minus().column(100).into_owned();
    let actions = plan(&env, 8, &mut rng);
    let a = small.tube(&x0, &actions).unwrap();
    let b = large.tube(&x0, &actions).unwrap();
    for (k, (s, l)) in a.sets.iter().zip(&b.sets).enumerate() {
        assert!(
            hull_contains(&l.interval_hull(), &s.interval_hull(), 1e-12),
            "step {k}"
        );
        if k > 0 {
            let (ws, wl) = (s.interval_hull(), l.interval_hull());
            assert!((0..ws.dim())
                .any(|i| wl.upper()[i] - wl.lower()[i] > ws.upper()[i] - ws.lower()[i]));
        }
    }
}

#[test]
fn tubes_are_bitwise_deterministic() {
    let env = BlackBoxEnv::new(EnvKind::Unicycle2D);
    let data = dataset(&env, 7);
    let config = ReachConfig::for_env(EnvKind::Unicycle2D);
    let x0 = Vector::from_column_slice(&[0.3, -0.2, 1.0]);
    let actions = plan(&env, 8, &mut ChaCha8Rng::seed_from_u64(1));
    let a = Reachability::new(&data, env.noise(), config)
        .unwrap()
        .tube(&x0, &actions)
        .unwrap();
    let b = Reachability::new(&data, env.noise(), config)
        .unwrap()
        .tube(&x0, &actions)
        .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), actions.len() + 1);
    assert_eq!(a.horizon(), actions.len());
    assert_eq!(a.sets[0], Zonotope::singleton(x0));
}

#[test]
fn engine_matches_literal_refits() {
    // Unwarped and unscaled, the tube engine must agree with refitting the
    // regression at every set center.
    let env = BlackBoxEnv::new(EnvKind::Unicycle2D);
    let data = dataset(&env, 11);
    let reach = Reachability::new(
        &data,
        env.noise(),
        ReachConfig {
            lipschitz_scale: 1.0,
            warp: false,
        },
    )
    .unwrap();
    let x0 = Vector::from_column_slice(&[-0.5, 0.4, 0.2]);
    let actions = plan(&env, 5, &mut ChaCha8Rng::seed_from_u64(2));
    let fast = reach.tube(&x0, &actions).unwrap();
    let literal = reach_tube(
        &Zonotope::singleton(x0),
        &actions,
        &data,
        env.noise(),
        &reach.estimate(),
    )
    .unwrap();
    for (k, (f, l)) in fast.sets.iter().zip(&literal.sets).enumerate() {
        let scale = 1.0 + l.center().amax();
        assert!(
            (f.center() - l.center()).amax() <= 1e-9 * scale,
            "center at step {k}"
        );
        let (hf, hl) = (f.interval_hull(), l.interval_hull());
        assert!(
            (hf.lower() - hl.lower()).amax() <= 1e-9 * scale,
            "hull at step {k}"
        );
        assert!(
            (hf.upper() - hl.upper()).amax() <= 1e-9 * scale,
            "hull at step {k}"
        );
    }
    for (f, l) in fast.models.iter().zip(&literal.models) {
        assert!((&f.matrix - &l.matrix).amax() <= 1e-9);
    }
}

#[test]
fn moving_the_linearization_point_only_shifts_the_intercept() {
    let env = BlackBoxEnv::new(EnvKind::PointMass2D);
    let data = dataset(&env, 5);
    let w = env.noise();
    let a = fit_local_model(&data, &Vector::zeros(4), &Vector::zeros(2), w).unwrap();
    let x1 = Vector::from_column_slice(&[0.4, -1.0, 0.2, 0.1]);
    let u1 = Vector::from_column_slice(&[0.5, -0.3]);
    let b = fit_local_model(&data, &x1, &u1, w).unwrap();
    assert!((a.state_block() - b.state_block()).amax() <= 1e-9);
    assert!((a.input_block() - b.input_block()).amax() <= 1e-9);
    let shifted = a.constant() + a.state_block() * &x1 + a.input_block() * &u1;
    assert!((shifted - b.constant()).amax() <= 1e-9);
    let (ra, rb) = (residual_bounds(&data, &a), residual_bounds(&data, &b));
    assert!((ra.lower() - rb.lower()).amax() <= 1e-9 && (ra.upper() - rb.upper()).amax() <= 1e-9);
}

#[test]
fn residual_bounds_match_column_loop() {
    let env = BlackBoxEnv::new(EnvKind::Unicycle2D);
    let data = dataset(&env, 13);
    let w = env.noise();
    let model = fit_local_model(
        &data,
        &Vector::zeros(3),
        &Vector::from_column_slice(&[0.1, 0.0]),
        w,
    )
    .unwrap();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for j in 0..data.len() {
        let x = data.x_minus().column(j).into_owned();
        let u = data.u_minus().column(j).into_owned();
        let r = data.x_plus().column(j) - model.predict(&x, &u);
        for i in 0..3 {
            lo[i] = lo[i].min(r[i]);
            hi[i] = hi[i].max(r[i]);
        }
    }
    let bounds = residual_bounds(&data, &model);
    for i in 0..3 {
        assert!((bounds.lower()[i] - lo[i]).abs() <= 1e-12);
        assert!((bounds.upper()[i] - hi[i]).abs() <= 1e-12);
    }
    // Z_L adds the reflected noise on top of the residual box.
    let z_l = mismatch_bounds(&data, &model, w).unwrap().interval_hull();
    let noise = w.interval_hull();
    for i in 0..3 {
        assert!((z_l.lower()[i] - (lo[i] - noise.upper()[i])).abs() <= 1e-12);
        assert!((z_l.upper()[i] - (hi[i] - noise.lower()[i])).abs() <= 1e-12);
    }
}

#[test]
fn exact_linear_data_has_no_mismatch() {
    // Noiseless affine data: the fit is exact and Z_L collapses to a point.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let triples: Vec<_> = (0..60)
        .map(|_| {
            let x = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let u = Vector::from_fn(1, |_, _| rng.random_range(-1.0..1.0));
            let y = Vector::from_column_slice(&[0.3 + x[0] + 0.1 * x[1], x[1] + 0.1 * u[0] - 0.2]);
            (x, u, y)
        })
        .collect();
    let data = TrajectoryData::from_columns(&triples).unwrap();
    let w = Zonotope::singleton(Vector::zeros(2));
    let model = fit_local_model(&data, &Vector::zeros(2), &Vector::zeros(1), &w).unwrap();
    let r = residual_bounds(&data, &model);
    assert!(r.lower().amax() <= 1e-12 && r.upper().amax() <= 1e-12);
    let p = model.predict(
        &Vector::from_column_slice(&[1.0, 2.0]),
        &Vector::from_column_slice(&[3.0]),
    );
    assert!((p - Vector::from_column_slice(&[1.5, 2.1])).amax() <= 1e-12);
}

use brsl::sysid::{collect_random_data, estimate_lipschitz, TrajectoryData, Warp};
use brsl::{BlackBoxEnv, EnvKind, Matrix, Vector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    t: usize,
    map: Option<&Matrix>,
) -> TrajectoryData {
    let xm = Matrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0));
    let um = Matrix::from_fn(m, t, |_, _| rng.random_range(-1.0..1.0));
    let xp = match map {
        Some(a) => {
            let mut z = Matrix::zeros(n + m, t);
            z.rows_mut(0, n).copy_from(&xm);
            z.rows_mut(n, m).copy_from(&um);
            a * z
        }
        None => Matrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0)),
    };
    TrajectoryData::new(xm, xp, um).unwrap()
}

/// Plain-array pairwise scan, independent of the library's dedup and norms.
fn brute_force(z: &[Vec<f64>], y: &[Vec<f64>]) -> (f64, f64) {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    };
    let mut l: f64 = 0.0;
    let mut delta: f64 = 0.0;
    for i in 0..z.len() {
        let mut nearest = f64::INFINITY;
        for j in 0..z.len() {
            if i == j {
                continue;
            }
            let dz = dist(&z[i], &z[j]);
            if dz == 0.0 {
                continue;
            }
            nearest = nearest.min(dz);
            l = l.max(dist(&y[i], &y[j]) / dz);
        }
        delta = delta.max(nearest);
    }
    (l, delta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_ignores_sample_order(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2, t in 2usize..=40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_data(&mut rng, n, m, t, None);
        let mut order: Vec<usize> = (0..t).collect();
        order.shuffle(&mut rng);
        let shuffled = TrajectoryData::new(
            data.x_minus().select_columns(&order),
            data.x_plus().select_columns(&order),
            data.u_minus().select_columns(&order),
        ).unwrap();
        prop_assert_eq!(estimate_lipschitz(&data).unwrap(), estimate_lipschitz(&shuffled).unwrap());
    }

    #[test]
    fn estimate_bounded_by_true_constant(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2, t in 2usize..=40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, n + m, |_, _| rng.random_range(-2.0..2.0));
        let true_l = a.singular_values().max();
        let data = random_data(&mut rng, n, m, t, Some(&a));
        let est = estimate_lipschitz(&data).unwrap();
        prop_assert!(est.l_star_hat <= true_l * (1.0 + 1e-12), "{} > {}", est.l_star_hat, true_l);
    }

    #[test]
    fn warp_maps_states_into_unit_box(seed in any::<u64>(), n in 1usize..=3, t in 2usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_data(&mut rng, n, 1, t, None);
        let warp = Warp::fit(&data);
        let w = warp.apply_data(&data);
        for v in w.x_minus().iter().chain(w.x_plus().iter()) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(v), "{v}");
        }
        prop_assert_eq!(w.u_minus(), data.u_minus());
        for j in 0..t {
            let x = data.x_minus().column(j).into_owned();
            let back = warp.invert(&warp.apply(&x));
            prop_assert!((back - &x).amax() <= 1e-12 * (1.0 + x.amax()));
        }
    }
}

#[test]
fn duplicates_do_not_change_the_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = random_data(&mut rng, 2, 1, 20, None);
    let idx: Vec<usize> = (0..20).chain([3, 3, 7]).collect();
    let doubled = TrajectoryData::new(
        data.x_minus().select_columns(&idx),
        data.x_plus().select_columns(&idx),
        data.u_minus().select_columns(&idx),
    )
    .unwrap();
    assert_eq!(doubled.dedup().len(), 20);
    assert_eq!(
        estimate_lipschitz(&data).unwrap(),
        estimate_lipschitz(&doubled).unwrap()
    );
}

#[test]
fn double_integrator_matches_brute_force() {
    let dt = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut z = Vec::new();
    let mut y = Vec::new();
    let mut triples = Vec::new();
    for _ in 0..100 {
        let (p, v, u) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let next = [p + dt * v, v + dt * u];
        z.push(vec![p, v, u]);
        y.push(next.to_vec());
        triples.push((
            Vector::from_column_slice(&[p, v]),
            Vector::from_column_slice(&[u]),
            Vector::from_column_slice(&next),
        ));
    }
    let data = TrajectoryData::from_columns(&triples).unwrap();
    let est = estimate_lipschitz(&data).unwrap();
    let (l, delta) = brute_force(&z, &y);
    assert!(
        (est.l_star_hat - l).abs() <= 1e-12 * l,
        "{} vs {l}",
        est.l_star_hat
    );
    assert!(
        (est.delta_hat - delta).abs() <= 1e-12 * delta,
        "{} vs {delta}",
        est.delta_hat
    );
    // The map [[1, dt, 0], [0, 1, dt]] has spectral norm just above 1.
    let a = Matrix::from_row_slice(2, 3, &[1.0, dt, 0.0, 0.0, 1.0, dt]);
    assert!(est.l_star_hat <= a.singular_values().max() + 1e-12);
}

#[test]
fn collection_is_reproducible_and_restarts() {
    let env = BlackBoxEnv::new(EnvKind::Unicycle2D);
    let a = collect_random_data(&env, 200, Some(25), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let b = collect_random_data(&env, 200, Some(25), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 200);
    for k in 1..200 {
        let chained = a.x_minus().column(k) == a.x_plus().column(k - 1);
        assert_eq!(chained, k % 25 != 0, "column {k}");
    }
    assert!(collect_random_data(&env, 1, None, &mut ChaCha8Rng::seed_from_u64(7)).is_err());
}

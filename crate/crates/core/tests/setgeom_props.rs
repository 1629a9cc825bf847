use brsl::setgeom::{
    conzono_intersect, interval_to_zonotope, ConstrainedZonotope, Interval, Zonotope,
};
use brsl::{Matrix, Vector};
use proptest::prelude::*;

fn vec_of(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-2.0..2.0f64, n).prop_map(Vector::from_vec)
}

fn mat_of(r: usize, c: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0..2.0f64, r * c).prop_map(move |v| Matrix::from_vec(r, c, v))
}

fn zono(n: usize) -> impl Strategy<Value = Zonotope> {
    (0usize..=4).prop_flat_map(move |g| {
        (vec_of(n), mat_of(n, g)).prop_map(|(c, g)| Zonotope::new(c, g).unwrap())
    })
}

/// Nonempty by construction: `b = A z0` for some `z0` in the unit cube.
fn conzono(n: usize) -> impl Strategy<Value = ConstrainedZonotope> {
    (1usize..=4, 0usize..=2).prop_flat_map(move |(g, nc)| {
        let nc = nc.min(g - 1);
        (
            vec_of(n),
            mat_of(n, g),
            mat_of(nc, g),
            prop::collection::vec(-1.0..1.0f64, g),
        )
            .prop_map(|(c, g, a, z0)| {
                let b = &a * Vector::from_vec(z0);
                ConstrainedZonotope::new(c, g, a, b).unwrap()
            })
    })
}

fn factor(ng: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-1.0..=1.0f64, ng).prop_map(Vector::from_vec)
}

fn close(a: &Matrix, b: &Matrix, rel: f64) -> bool {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() <= rel * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linear_map_composes((n, z, l1, l2) in (1usize..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(n, m, k)| {
        (Just(n), zono(n), mat_of(k, m), mat_of(m, n))
    })) {
        let direct = z.linear_map(&(&l1 * &l2)).unwrap();
        let nested = z.linear_map(&l2).unwrap().linear_map(&l1).unwrap();
        prop_assert_eq!(direct.dim(), l1.nrows());
        prop_assert!(close(&Matrix::from_column_slice(direct.dim(), 1, direct.center().as_slice()),
            &Matrix::from_column_slice(nested.dim(), 1, nested.center().as_slice()), 1e-12));
        prop_assert!(close(direct.generators(), nested.generators(), 1e-12));
        let _ = n;
    }

    #[test]
    fn linear_map_image_contains_mapped_points((z, l, zf) in (1usize..=3, 1usize..=3).prop_flat_map(|(n, m)| {
        zono(n).prop_flat_map(move |z| { let g = z.num_generators(); (Just(z), mat_of(m, n), factor(g)) })
    })) {
        let x = z.center() + z.generators() * &zf;
        let image = z.linear_map(&l).unwrap();
        prop_assert!(image.contains(&(&l * x), 1e-9));
    }

    #[test]
    fn minkowski_commutes_and_contains((z1, z2, f1, f2) in (1usize..=3).prop_flat_map(|n| (zono(n), zono(n)))
        .prop_flat_map(|(a, b)| { let (ga, gb) = (a.num_generators(), b.num_generators()); (Just(a), Just(b), factor(ga), factor(gb)) })) {
        let s12 = z1.minkowski_sum(&z2).unwrap();
        let s21 = z2.minkowski_sum(&z1).unwrap();
        prop_assert_eq!(s12.center(), s21.center());
        prop_assert_eq!(s12.num_generators(), z1.num_generators() + z2.num_generators());
        // Same columns in another order.
        let mut c12: Vec<Vec<f64>> = s12.generators().column_iter().map(|c| c.iter().copied().collect()).collect();
        let mut c21: Vec<Vec<f64>> = s21.generators().column_iter().map(|c| c.iter().copied().collect()).collect();
        c12.sort_by(|a, b| a.partial_cmp(b).unwrap());
        c21.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(c12, c21);

        let a = z1.center() + z1.generators() * &f1;
        let b = z2.center() + z2.generators() * &f2;
        prop_assert!(s12.contains(&(&a + &b), 1e-9));
        prop_assert!(s21.contains(&(&a + &b), 1e-9));
        // The same factors split a sum point back into its summands.
        prop_assert!(z1.contains(&a, 1e-9) && z2.contains(&b, 1e-9));
    }

    #[test]
    fn intersection_is_conjunction((z1, z2, pts) in (1usize..=3).prop_flat_map(|n| {
        (conzono(n), conzono(n), prop::collection::vec(vec_of(n), 40))
    })) {
        let both = conzono_intersect(&z1, &z2).unwrap();
        prop_assert_eq!(both.num_generators(), z1.num_generators() + z2.num_generators());
        // Points near the first set's center make "inside both" common.
        for p in pts.iter().map(|p| z1.center() + 0.5 * p) {
            let expect = z1.contains(&p, 0.0) && z2.contains(&p, 0.0);
            prop_assert_eq!(both.contains(&p, 0.0), expect, "point {}", p);
        }
    }

    #[test]
    fn interval_round_trip(pairs in prop::collection::vec((-1e3..1e3f64, 0.0..1e3f64), 1..=4)) {
        let lo: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let hi: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let i = Interval::from_slices(&lo, &hi).unwrap();
        let hull = interval_to_zonotope(&i).interval_hull();
        for k in 0..lo.len() {
            let ulp = f64::EPSILON * lo[k].abs().max(hi[k].abs()).max(f64::MIN_POSITIVE);
            prop_assert!((hull.lower()[k] - lo[k]).abs() <= 2.0 * ulp);
            prop_assert!((hull.upper()[k] - hi[k]).abs() <= 2.0 * ulp);
        }
    }

    #[test]
    fn dyadic_interval_round_trip_is_exact(pairs in prop::collection::vec((-64i32..64, 0i32..64), 1..=4)) {
        let lo: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 8.0).collect();
        let hi: Vec<f64> = pairs.iter().map(|p| (p.0 + p.1) as f64 / 8.0).collect();
        let i = Interval::from_slices(&lo, &hi).unwrap();
        prop_assert_eq!(interval_to_zonotope(&i).interval_hull(), i);
    }

    #[test]
    fn product_contains_pairs((z1, z2, f1, f2) in (1usize..=2, 1usize..=2).prop_flat_map(|(n1, n2)| (zono(n1), zono(n2)))
        .prop_flat_map(|(a, b)| { let (ga, gb) = (a.num_generators(), b.num_generators()); (Just(a), Just(b), factor(ga), factor(gb)) })) {
        let p = z1.cartesian_product(&z2);
        let a = z1.center() + z1.generators() * &f1;
        let b = z2.center() + z2.generators() * &f2;
        let ab = Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
        prop_assert!(p.contains(&ab, 1e-9));
    }
}

#[test]
fn translation_by_singleton() {
    let z = Zonotope::new(
        Vector::from_column_slice(&[1.0, -1.0]),
        Matrix::identity(2, 2),
    )
    .unwrap();
    let p = Zonotope::singleton(Vector::from_column_slice(&[0.5, 2.0]));
    let s = z.minkowski_sum(&p).unwrap();
    assert_eq!(s.center().as_slice(), &[1.5, 1.0]);
    assert_eq!(s.generators(), z.generators());
}

#[test]
fn box_corners_in_zonotope() {
    let i = Interval::from_slices(&[-1.0, 0.0, 2.0], &[1.0, 0.5, 2.0]).unwrap();
    let z = interval_to_zonotope(&i);
    for corner in i.vertices() {
        assert!(z.contains(&corner, 1e-9), "{corner}");
    }
}

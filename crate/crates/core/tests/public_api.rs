use layerlab::harness::{simulate_paths, terminal_samples, Batch, ProcessSpec, QSpec};
use layerlab::{draw_for_path, stable_path, uniform_grid, DrawFeatures, LayeredQ, SphericalMeasure};
use proptest::prelude::*;

fn sym() -> SphericalMeasure {
    SphericalMeasure::discrete(1, &[(vec![1.0], 1.0), (vec![-1.0], 1.0)]).unwrap()
}

#[test]
fn text_spec_round_trip() {
    for s in ["discrete:[(1):1,(-1):1]", "uniform:3:2.5", "discrete:[(0.6,0.8):2,(1,0):0.5]"] {
        let m: SphericalMeasure = s.parse().unwrap();
        let back: SphericalMeasure = m.to_string().parse().unwrap();
        assert_eq!(m.total_mass(), back.total_mass());
        assert_eq!(m.dim(), back.dim());
    }
    assert!("discrete:[(1):0]".parse::<SphericalMeasure>().is_err());
    assert!("uniform:0:1".parse::<SphericalMeasure>().is_err());
}

#[test]
fn batches_are_seed_deterministic() {
    let spec = ProcessSpec::Layered { alpha: 1.3, beta: 1.9, q: QSpec::Canonical };
    let b = Batch::new(2.0, 16, 42, 300.0);
    let grid = uniform_grid(2.0, 40);
    let a = simulate_paths(&spec, &sym(), &b, &grid).unwrap();
    let c = simulate_paths(&spec, &sym(), &b, &grid).unwrap();
    assert_eq!(a, c);
    let other = simulate_paths(&spec, &sym(), &Batch { seed: 43, ..b.clone() }, &grid).unwrap();
    assert_ne!(a, other);
    // terminal values agree with the last grid point of full paths
    let t = terminal_samples(&spec, &sym(), &b).unwrap();
    for (i, p) in a.iter().enumerate() {
        assert!((p.terminal()[0] - t[i]).abs() <= 1e-12 * (1.0 + t[i].abs()));
    }
}

#[test]
fn gaussian_remainder_only_adds_a_brownian_part() {
    let f = DrawFeatures { gaussian_remainder: true, ..Default::default() };
    let draw = draw_for_path(5, 0, 1.0, &sym(), 200.0, &f).unwrap();
    let plain = draw_for_path(5, 0, 1.0, &sym(), 200.0, &DrawFeatures::default()).unwrap();
    let grid = uniform_grid(1.0, 10);
    let a = stable_path(1.8, &sym(), &draw, &grid).unwrap();
    let b = stable_path(1.8, &sym(), &plain, &grid).unwrap();
    assert_eq!(a.jump_vectors, b.jump_vectors);
    let g = a.gaussian.as_ref().unwrap();
    for k in 0..grid.len() {
        assert!((a.value(k)[0] - b.value(k)[0] - g[k]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spherical_moment_identities(w in proptest::collection::vec(0.01f64..10.0, 1..6), d in 1usize..4) {
        let atoms: Vec<(Vec<f64>, f64)> = w
            .iter()
            .enumerate()
            .map(|(k, &wk)| ((0..d).map(|j| ((k * 7 + j * 3) as f64).sin() + 0.1).collect(), wk))
            .collect();
        let m = SphericalMeasure::discrete(d, &atoms).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((m.total_mass() - total).abs() < 1e-12 * total);
        prop_assert!((m.second_moment().trace() - total).abs() < 1e-12 * total);
        let mirrored: Vec<(Vec<f64>, f64)> = atoms
            .iter()
            .flat_map(|(v, wk)| [(v.clone(), *wk), (v.iter().map(|x| -x).collect(), *wk)])
            .collect();
        let s = SphericalMeasure::discrete(d, &mirrored).unwrap();
        prop_assert!(s.is_symmetric());
        prop_assert!(s.first_moment().iter().all(|x| x.abs() < 1e-12 * total));
    }

    #[test]
    fn canonical_tail_is_decreasing_and_inverted(a in 0.1f64..1.99, b in 0.1f64..3.5, m in 0.1f64..5.0, lr in -6.0f64..6.0) {
        let q = LayeredQ::canonical(a, b, m).unwrap();
        let r = 10f64.powf(lr);
        let u = q.tail_integral(r, &[1.0]).unwrap();
        prop_assert!(q.tail_integral(r * 1.01, &[1.0]).unwrap() < u);
        let back = q.inverse_tail(u, &[1.0]).unwrap();
        prop_assert!((back - r).abs() <= 1e-9 * r);
    }

    #[test]
    fn grid_size_contract(n in 1usize..400, t in 0.1f64..10.0) {
        let draw = draw_for_path(1, 0, t, &sym(), 50.0, &DrawFeatures::default()).unwrap();
        let p = stable_path(1.5, &sym(), &draw, &uniform_grid(t, n)).unwrap();
        prop_assert_eq!(p.grid.len(), n + 1);
        prop_assert_eq!(p.values.len(), n + 1);
        prop_assert_eq!(*p.grid.last().unwrap(), t);
    }
}

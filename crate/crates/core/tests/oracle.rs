use nlflow::curvature::{build_ball_table, default_table_radii, kappa_fractional_ball, kappa_fractional_disk_untruncated};
use nlflow::grid::{ball, BinarySet, GridGeometry};
use nlflow::oracle::*;
use nlflow::perimeter::PerimeterModel;
use nlflow::Error;

#[test]
fn inverse_radius_speed_has_closed_form() {
    let s = radial_ode(0.4, |r| Some(1.0 / r), 1e-4, false, 1.0).unwrap();
    let te = s.extinction_time.unwrap();
    assert!((te - 0.08).abs() < 1e-4 * 0.08, "{te}");
    for (t, r) in s.times.iter().zip(&s.radii).filter(|p| *p.0 < 0.079).step_by(50) {
        assert!((r - (0.16 - 2.0 * t).sqrt()).abs() < 1e-6, "t={t}");
    }
    assert!(s.radii.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn constant_speed_is_linear() {
    let s = radial_ode(0.3, |_| Some(1.0), 1e-3, false, 1.0).unwrap();
    assert!((s.extinction_time.unwrap() - 0.3).abs() < 1e-9);
    assert!((s.radius_at(0.1) - 0.2).abs() < 1e-12);
    assert_eq!(s.radius_at(0.5), 0.0);
}

#[test]
fn hat_clamp_caps_slow_speeds() {
    // below r = 1 the clamp is inactive: 2·1 - 1 + 1/2 = 1.5
    let s = radial_ode(2.0, |r| Some(1.0 / r), 1e-4, true, 5.0).unwrap();
    assert!((s.extinction_time.unwrap() - 1.5).abs() < 1e-5 * 1.5, "{:?}", s.extinction_time);
    let free = radial_ode(2.0, |r| Some(1.0 / r), 1e-4, false, 5.0).unwrap();
    assert!((free.extinction_time.unwrap() - 2.0).abs() < 1e-5 * 2.0);
}

#[test]
fn no_extinction_without_positive_speed() {
    let s = radial_ode(0.5, |_| Some(0.0), 0.01, false, 1.0).unwrap();
    assert_eq!(s.extinction_time, None);
    assert!((s.times.last().unwrap() - 1.0).abs() < 1e-12);
    assert!(s.radii.iter().all(|&r| r == 0.5));
    assert!(radial_ode(-1.0, |_| Some(1.0), 0.01, false, 1.0).is_err());
}

#[test]
fn fractional_extinction_is_step_converged() {
    let c = |r: f64| kappa_fractional_ball(2, r, 0.25, 0.5).ok().map(|e| e.value);
    let a = radial_ode(0.5, c, 2e-3, false, 5.0).unwrap().extinction_time.unwrap();
    let b = radial_ode(0.5, c, 1e-3, false, 5.0).unwrap().extinction_time.unwrap();
    assert!((a - b).abs() <= 1e-3 * b, "{a} vs {b}");
}

#[test]
fn csv_lists_the_trajectory() {
    let s = radial_ode(0.2, |_| Some(1.0), 0.05, false, 1.0).unwrap();
    let csv = s.to_csv();
    assert!(csv.starts_with("t,r\n"));
    assert!(csv.trim_end().ends_with(",0"));
}

#[test]
fn table_interpolation_is_exact_for_power_laws() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 256).unwrap();
    let radii = default_table_radii(&g, 10);
    let t = build_ball_table(&PerimeterModel::Local, 2, &radii).unwrap();
    let c = TableCurvature::new(&t).unwrap();
    for r in [radii[0], 0.05, 0.123, 0.4, 0.7] {
        assert!((c.eval(r).unwrap() * r - 1.0).abs() < 1e-12, "{r}");
    }
    assert_eq!(c.eval(0.5 * radii[0]), None);
}

#[test]
fn table_interpolation_is_monotone() {
    let radii = [0.05, 0.1, 0.2, 0.25, 0.4];
    let kappa = [10.0, 9.0, 2.0, 1.9, 0.5];
    let c = TableCurvature::from_points(&radii, &kappa).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..=400 {
        let r = 0.05 + 0.35 * k as f64 / 400.0;
        let v = c.eval(r).unwrap();
        assert!(v <= last + 1e-12, "{r}");
        last = v;
    }
    assert!(TableCurvature::from_points(&[0.1, 0.05], &[1.0, 2.0]).is_err());
    assert!(TableCurvature::from_points(&[0.1, 0.2], &[1.0, 0.0]).is_err());
}

#[test]
fn extinction_from_a_table_stops_at_its_smallest_radius() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 256).unwrap();
    let radii = default_table_radii(&g, 10);
    let c = TableCurvature::new(&build_ball_table(&PerimeterModel::Local, 2, &radii).unwrap()).unwrap();
    let s = radial_ode(0.4, |r| c.eval(r), 1e-4, false, 1.0).unwrap();
    let te = s.extinction_time.unwrap();
    let r_min = c.min_radius();
    assert!(te <= 0.08 && te >= 0.08 - r_min * r_min / 2.0 - 1e-4, "{te}");
}

#[test]
fn extinction_time_beats_the_quartic_lower_bound() {
    // f(r) = r^4: T*(f^-1(a b)) >= 2b for small b, with ĉ = max(1, 1/r)
    let a = 1.0;
    for b in [1e-3, 1e-4, 1e-5, 1e-6] {
        let r0 = f64::powf(a * b, 0.25);
        let s = radial_ode(r0, |r| Some(1.0 / r), r0 * r0 * 1e-3, true, 1.0).unwrap();
        assert!(s.extinction_time.unwrap() >= 2.0 * b, "b={b}");
    }
}

fn six() -> GridGeometry {
    GridGeometry::cube(2, 0.0, 6.0, 6).unwrap()
}

#[test]
fn single_free_cell_follows_the_sign() {
    let g = GridGeometry::cube(2, 0.0, 3.0, 3).unwrap();
    let e = BinarySet::from_fn(g, false, |x| (x[0] - 1.5).abs() < 0.5 && (x[1] - 1.5).abs() < 0.5).unwrap();
    let p = nlflow::perimeter::GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let j = p.eval(&e).unwrap();
    // unary of the lone cell is -(1/2)/h
    for (h, keeps) in [(0.5 / j * 0.9, true), (0.5 / j * 1.1, false)] {
        let (lo, hi) = brute_force_step(&PerimeterModel::Local, &e, h).unwrap();
        assert_eq!(lo, hi);
        assert_eq!(lo.count() == 1, keeps, "h={h}");
    }
}

#[test]
fn reflection_symmetric_instances_have_symmetric_extremes() {
    let g = six();
    let models = [
        PerimeterModel::Local,
        PerimeterModel::Fractional { alpha: 0.25, radius: 2.5 },
        PerimeterModel::TwoBodyKernel { sigma: 1.0, radius: 3.0 },
        PerimeterModel::PreMinkowski { rho: 1.0 },
    ];
    let e = BinarySet::from_fn(g, false, |x| (x[0] - 3.0).abs() < 1.5 && x[1] > 1.0 && x[1] < 4.0).unwrap();
    let mirror = |s: &BinarySet| {
        let mask = (0..g.len())
            .map(|i| {
                let c = g.coords(i);
                s.contains(g.index([5 - c[0], c[1], 0]))
            })
            .collect();
        BinarySet::new(g, mask, false).unwrap()
    };
    assert_eq!(mirror(&e), e);
    for m in models {
        for h in [0.3, 1.0, 3.0] {
            let (lo, hi) = brute_force_step(&m, &e, h).unwrap();
            assert_eq!(mirror(&lo), lo, "{m} h={h}");
            assert_eq!(mirror(&hi), hi, "{m} h={h}");
            assert!(lo.is_subset_of(&hi));
        }
    }
}

#[test]
fn brute_force_refuses_large_grids() {
    let g = GridGeometry::cube(2, 0.0, 7.0, 7).unwrap();
    let e = ball(&g, &[3.5, 3.5], 1.5).unwrap();
    assert!(matches!(brute_force_step(&PerimeterModel::Local, &e, 1.0), Err(Error::TooManyCells(25))));
}

#[test]
fn brute_force_of_empty_and_full() {
    let g = six();
    let (lo, hi) = brute_force_step(&PerimeterModel::Local, &BinarySet::empty(g), 1.0).unwrap();
    assert!(lo.is_empty() && hi.is_empty());
    let (lo, hi) = brute_force_step(&PerimeterModel::Local, &BinarySet::full(g), 1.0).unwrap();
    assert!(lo.is_full() && hi.is_full());
}

#[test]
fn polar_quadrature_agrees_with_hemisphere_formula() {
    for (r, t) in [(0.4, f64::INFINITY), (0.4, 0.5), (0.1, 0.5), (0.3, 0.2), (0.05, 0.02)] {
        let a = refined_quadrature_kappa(2, r, 0.25, t).unwrap();
        let b = kappa_fractional_ball(2, r, 0.25, t).unwrap();
        assert!((a.value - b.value).abs() <= b.error + a.error + 1e-9 * b.value, "R={r} T={t}: {a:?} {b:?}");
    }
    let a = refined_quadrature_kappa(2, 0.4, 0.25, f64::INFINITY).unwrap();
    let exact = kappa_fractional_disk_untruncated(0.4, 0.25);
    assert!((a.value - exact).abs() <= 1e-8 * exact, "{} vs {exact}", a.value);
    for dim in [1, 3] {
        let a = refined_quadrature_kappa(dim, 0.3, 0.2, 0.4).unwrap();
        let b = kappa_fractional_ball(dim, 0.3, 0.2, 0.4).unwrap();
        assert!((a.value - b.value).abs() <= 1e-10 * b.value, "dim {dim}");
    }
}

#[test]
fn half_space_has_zero_fractional_curvature() {
    assert_eq!(refined_quadrature_kappa(2, f64::INFINITY, 0.25, 1.0).unwrap().value, 0.0);
}

#[test]
fn polar_quadrature_is_homogeneous() {
    for alpha in [0.1, 0.25, 0.4] {
        let k1 = refined_quadrature_kappa(2, 0.2, alpha, f64::INFINITY).unwrap().value;
        let k2 = refined_quadrature_kappa(2, 0.4, alpha, f64::INFINITY).unwrap().value;
        assert!((k2 * 2f64.powf(2.0 * alpha) / k1 - 1.0).abs() < 1e-3, "{alpha}");
    }
}

use nlflow::curvature::*;
use nlflow::grid::{ball, translate, BinarySet, GridGeometry};
use nlflow::perimeter::{GridPerimeter, PerimeterModel};

fn square256() -> GridGeometry {
    GridGeometry::cube(2, -1.0, 1.0, 256).unwrap()
}

/// Rightmost cell of `set` on the row through the origin.
fn right_edge(set: &BinarySet) -> usize {
    let g = set.geometry();
    let h = g.cell_size();
    (0..g.len())
        .filter(|&i| set.contains(i) && g.center(i)[1].abs() < h)
        .max_by(|a, b| g.center(*a)[0].total_cmp(&g.center(*b)[0]))
        .unwrap()
}

#[test]
fn flat_interface_has_zero_curvature() {
    let g = square256();
    let h = g.cell_size();
    let e = BinarySet::from_fn(g, false, |x| x[0] < 0.0 && x[0] > -0.9 && x[1].abs() < 0.9).unwrap();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let w = kappa_weak_estimate(&p, &e, right_edge(&e), &[4.0 * h, 8.0 * h]).unwrap();
    assert!(w.value.abs() <= w.spread, "{w:?}");
}

#[test]
fn local_disk_estimate() {
    let g = square256();
    let h = g.cell_size();
    let e = ball(&g, &[0.0, 0.0], 0.4).unwrap();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let w = kappa_weak_estimate(&p, &e, right_edge(&e), &[4.0 * h, 8.0 * h]).unwrap();
    assert!((w.value / 2.5 - 1.0).abs() < 0.15, "{w:?}");
}

#[test]
fn weak_estimate_brackets_ball_curvature() {
    let g = square256();
    let h = g.cell_size();
    for m in [
        PerimeterModel::Fractional { alpha: 0.25, radius: 0.1 },
        PerimeterModel::TwoBodyKernel { sigma: 0.03, radius: 0.12 },
        PerimeterModel::PreMinkowski { rho: 0.05 },
    ] {
        let p = GridPerimeter::new(m, g).unwrap();
        for r in [0.2, 0.45] {
            let e = ball(&g, &[0.0, 0.0], r).unwrap();
            let w = kappa_weak_estimate(&p, &e, right_edge(&e), &[4.0 * h, 8.0 * h]).unwrap();
            let k = ball_curvature(&m, 2, r).unwrap().value;
            assert!((w.value - k).abs() <= w.spread, "{m} R={r}: {w:?} vs {k}");
            assert_eq!(w.probes.len(), 2);
        }
    }
}

#[test]
fn weak_estimate_rejects_bad_probes() {
    let g = square256();
    let h = g.cell_size();
    let e = ball(&g, &[0.0, 0.0], 0.4).unwrap();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    assert!(kappa_weak_estimate(&p, &e, right_edge(&e), &[h]).is_err());
    let centre = g.locate(&[0.0, 0.0]).unwrap();
    assert!(kappa_weak_estimate(&p, &e, centre, &[4.0 * h]).is_err());
}

#[test]
fn inner_tangent_disk_is_more_curved() {
    // both disks touch the point (0.6, 0)
    let g = square256();
    let h = g.cell_size();
    let p = GridPerimeter::new(PerimeterModel::PreMinkowski { rho: 0.05 }, g).unwrap();
    let outer = ball(&g, &[0.0, 0.0], 0.6).unwrap();
    let inner = ball(&g, &[0.35, 0.0], 0.25).unwrap();
    let x = right_edge(&outer);
    assert_eq!(x, right_edge(&inner));
    let probes = [4.0 * h, 8.0 * h];
    let wo = kappa_weak_estimate(&p, &outer, x, &probes).unwrap();
    let wi = kappa_weak_estimate(&p, &inner, x, &probes).unwrap();
    assert!(wi.value >= wo.value - (wi.spread + wo.spread));
    assert!(ball_curvature(p.model(), 2, 0.25).unwrap().value > ball_curvature(p.model(), 2, 0.6).unwrap().value);
}

#[test]
fn weak_estimate_is_translation_invariant() {
    let g = square256();
    let h = g.cell_size();
    let p = GridPerimeter::new(PerimeterModel::Fractional { alpha: 0.3, radius: 0.08 }, g).unwrap();
    let e = ball(&g, &[-0.1, 0.05], 0.3).unwrap();
    let x = right_edge(&e);
    let shift = [17, -9];
    let t = translate(&e, &shift).unwrap();
    let tx = g.offset_index(x, [17, -9, 0]).unwrap();
    let a = kappa_weak_estimate(&p, &e, x, &[4.0 * h]).unwrap();
    let b = kappa_weak_estimate(&p, &t, tx, &[4.0 * h]).unwrap();
    assert!((a.value - b.value).abs() <= 1e-9 * a.value.abs(), "{a:?} {b:?}");
    assert!((a.spread - b.spread).abs() <= 1e-9 * a.spread);
}

#[test]
fn weak_estimate_settles_as_radii_converge() {
    let g = square256();
    let h = g.cell_size();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let target = ball(&g, &[0.0, 0.0], 0.4).unwrap();
    let limit = kappa_weak_estimate(&p, &target, right_edge(&target), &[8.0 * h]).unwrap();
    for r in [0.45, 0.42, 0.41, 0.401] {
        let e = ball(&g, &[0.0, 0.0], r).unwrap();
        let w = kappa_weak_estimate(&p, &e, right_edge(&e), &[8.0 * h]).unwrap();
        assert!((w.value - limit.value).abs() <= w.spread + limit.spread, "R={r}");
    }
}

#[test]
fn fractional_ball_curvature_scales() {
    let (alpha, r, t) = (0.25, 0.3, 0.2);
    let base = kappa_fractional_ball(2, r, alpha, t).unwrap();
    for lambda in [0.5, 2.0, 3.7] {
        let k = kappa_fractional_ball(2, lambda * r, alpha, lambda * t).unwrap();
        let scaled = k.value * lambda.powf(2.0 * alpha);
        assert!((scaled - base.value).abs() <= 10.0 * (base.error + k.error) + 1e-10 * base.value, "{lambda}");
    }
}

#[test]
fn first_variation_of_local_disk() {
    let g = square256();
    let h = g.cell_size();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let fv = first_variation_probe(&p, &[0.0, 0.0], 0.4, &[2.0 * h / 0.4]).unwrap();
    assert!((fv.predicted - 2.0 * std::f64::consts::PI * 0.4).abs() < 1e-12);
    assert!(fv.relative_gap <= 0.05, "{fv:?}");
}

#[test]
fn first_variation_of_pre_minkowski_disk() {
    let g = square256();
    let h = g.cell_size();
    let p = GridPerimeter::new(PerimeterModel::PreMinkowski { rho: 0.05 }, g).unwrap();
    for r in [0.25, 0.5] {
        let fv = first_variation_probe(&p, &[0.0, 0.0], r, &[2.0 * h / r]).unwrap();
        assert!((fv.predicted - 2.0 * std::f64::consts::PI * r).abs() < 1e-12);
        assert!(fv.relative_gap <= 0.05, "R={r}: {fv:?}");
    }
}

#[test]
fn first_variation_of_fractional_disk() {
    let g = square256();
    let h = g.cell_size();
    let t = PerimeterModel::default_truncation(&g);
    let p = GridPerimeter::new(PerimeterModel::Fractional { alpha: 0.25, radius: t }, g).unwrap();
    let fv = first_variation_probe(&p, &[0.0, 0.0], 0.4, &[2.0 * h / 0.4]).unwrap();
    assert!(fv.relative_gap <= 0.05, "{fv:?}");
}

#[test]
fn first_variation_rejects_bad_epsilons() {
    let g = square256();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    assert!(first_variation_probe(&p, &[0.0, 0.0], 0.4, &[]).is_err());
    assert!(first_variation_probe(&p, &[0.0, 0.0], 0.4, &[1.5]).is_err());
    assert!(first_variation_probe(&p, &[0.0, 0.0], 0.9, &[0.2]).is_err());
}

#[test]
fn ball_table_for_each_model() {
    let g = square256();
    let radii = default_table_radii(&g, 10);
    assert!((radii[0] - 4.0 * g.cell_size()).abs() < 1e-15);
    assert!((radii[9] - 0.4).abs() < 1e-12);
    for m in [
        PerimeterModel::Local,
        PerimeterModel::Fractional { alpha: 0.25, radius: 0.5 },
        PerimeterModel::TwoBodyKernel { sigma: 0.03, radius: 0.12 },
        PerimeterModel::PreMinkowski { rho: 0.05 },
    ] {
        let t = build_ball_table(&m, 2, &radii).unwrap();
        assert!(t.kappa_ball.windows(2).all(|w| w[1] < w[0]), "{m}");
        assert_eq!(t.c_upper, t.c_lower);
        assert_eq!(t.k_bound, 0.0);
        let csv = t.to_csv();
        assert!(csv.starts_with("rho,kappa_ball,kappa_ball_complement,c_upper,c_lower\n"));
        assert_eq!(csv.lines().count(), 11);
    }
}

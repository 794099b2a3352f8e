use nlflow::curvature::{build_ball_table, default_table_radii};
use nlflow::grid::{ball, dilate, hausdorff_distance, BinarySet, GridGeometry, ScalarField};
use nlflow::oracle::brute_force_step;
use nlflow::perimeter::{GridPerimeter, PerimeterModel};
use nlflow::scheme::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn models() -> Vec<PerimeterModel> {
    vec![
        PerimeterModel::Local,
        PerimeterModel::Fractional { alpha: 0.25, radius: 2.5 },
        PerimeterModel::TwoBodyKernel { sigma: 1.0, radius: 3.0 },
        PerimeterModel::PreMinkowski { rho: 1.0 },
    ]
}

fn unit_grid(n: usize) -> GridGeometry {
    GridGeometry::cube(2, 0.0, n as f64, n).unwrap()
}

/// Union of up to three random disks inside `[lo, hi]²`.
fn blobs(g: &GridGeometry, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> BinarySet {
    let disks: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let r = rng.gen_range(0.8..(hi - lo) / 3.0);
            (rng.gen_range(lo + r..hi - r), rng.gen_range(lo + r..hi - r), r)
        })
        .collect();
    BinarySet::from_fn(*g, false, |x| disks.iter().any(|&(a, b, r)| (x[0] - a).powi(2) + (x[1] - b).powi(2) <= r * r)).unwrap()
}

/// Random cells inside `[lo, hi]²`.
fn speckle(g: &GridGeometry, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> BinarySet {
    let p = rng.gen_range(0.2..0.8);
    let mask = (0..g.len())
        .map(|i| {
            let c = g.center(i);
            c[0] > lo && c[0] < hi && c[1] > lo && c[1] < hi && rng.gen_bool(p)
        })
        .collect();
    BinarySet::new(*g, mask, false).unwrap()
}

#[test]
fn empty_set_stays_empty() {
    let g = unit_grid(12);
    for m in models() {
        let (lo, hi) = step_bounded(&m, &BinarySet::empty(g), 1.0).unwrap();
        assert!(lo.is_empty() && hi.is_empty());
    }
}

#[test]
fn tiny_steps_barely_move_a_large_disk() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 64).unwrap();
    let e = ball(&g, &[0.0, 0.0], 0.8).unwrap();
    let (lo, hi) = step_bounded(&PerimeterModel::Local, &e, 1e-5).unwrap();
    for out in [&lo, &hi] {
        assert!(hausdorff_distance(out, &e).unwrap() <= 2.0 * g.cell_size());
    }
}

#[test]
fn small_steps_match_exhaustive_search() {
    let g = unit_grid(6);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for m in models() {
        for trial in 0..100 {
            let e = speckle(&g, &mut rng, 1.0, 5.0);
            let h = rng.gen_range(0.2..5.0);
            let (lo, hi) = step_bounded(&m, &e, h).unwrap();
            let (blo, bhi) = brute_force_step(&m, &e, h).unwrap();
            assert_eq!(lo, blo, "{m} trial {trial}");
            assert_eq!(hi, bhi, "{m} trial {trial}");
        }
    }
}

#[test]
fn unbounded_step_is_the_complemented_bounded_step() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 48).unwrap();
    let e = ball(&g, &[0.1, -0.05], 0.5).unwrap();
    for m in [PerimeterModel::Local, PerimeterModel::PreMinkowski { rho: 0.1 }] {
        let (lo, hi) = step_bounded(&m, &e, 0.01).unwrap();
        let (clo, chi) = step_unbounded(&m, &e.complement(), 0.01).unwrap();
        assert_eq!(clo, hi.complement(), "{m}");
        assert_eq!(chi, lo.complement(), "{m}");
        // the hole only closes up
        assert!(e.complement().is_subset_of(&clo));
    }
    let full = BinarySet::full(g);
    let (lo, hi) = step_unbounded(&PerimeterModel::Local, &full, 0.01).unwrap();
    assert!(lo.is_full() && hi.is_full());
    assert!(step_unbounded(&PerimeterModel::Local, &e, 0.01).is_err());
    assert!(step_bounded(&PerimeterModel::Local, &full, 0.01).is_err());
}

#[test]
fn steps_preserve_inclusion() {
    let g = unit_grid(24);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for m in models() {
        let p = GridPerimeter::new(m, g).unwrap();
        let scheme = |h| Scheme::new(m, g, h, None).unwrap();
        for trial in 0..100 {
            let e = if trial % 2 == 0 { blobs(&g, &mut rng, 5.0, 19.0) } else { speckle(&g, &mut rng, 5.0, 19.0) };
            let extra = blobs(&g, &mut rng, 5.0, 19.0);
            let e2 = e.union(&extra).unwrap();
            let s = scheme(rng.gen_range(0.3..4.0));
            let (a, b) = (s.step(&e).unwrap(), s.step(&e2).unwrap());
            assert!(a.minimal.is_subset_of(&b.minimal), "{m} trial {trial}");
            assert!(a.maximal.is_subset_of(&b.maximal), "{m} trial {trial}");
            assert!(a.minimal.is_subset_of(&a.maximal));
            let _ = &p;
        }
    }
}

#[test]
fn steps_preserve_dilated_inclusion() {
    let g = unit_grid(28);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for m in models() {
        for trial in 0..50 {
            let r = rng.gen_range(1.0..3.0);
            let e = blobs(&g, &mut rng, 8.0, 20.0);
            let e2 = dilate(&e, r).unwrap().union(&speckle(&g, &mut rng, 6.0, 22.0)).unwrap();
            let h = rng.gen_range(0.3..4.0);
            let (a, _) = step_bounded(&m, &e, h).unwrap();
            let (b, _) = step_bounded(&m, &e2, h).unwrap();
            assert!(dilate(&a, r).unwrap().is_subset_of(&b), "{m} trial {trial} r={r}");
        }
    }
}

#[test]
fn bounded_steps_stay_below_unbounded_steps() {
    let g = unit_grid(24);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for m in models() {
        for trial in 0..100 {
            let e = blobs(&g, &mut rng, 5.0, 19.0);
            let hole = speckle(&g, &mut rng, 5.0, 19.0).difference(&e).unwrap();
            let e2 = hole.complement();
            assert!(e.is_subset_of(&e2));
            let h = rng.gen_range(0.3..4.0);
            let s = Scheme::new(m, g, h, None).unwrap();
            let (a, b) = (s.step(&e).unwrap(), s.step(&e2).unwrap());
            assert!(a.minimal.is_subset_of(&b.minimal), "{m} trial {trial}");
            assert!(a.maximal.is_subset_of(&b.maximal), "{m} trial {trial}");
        }
    }
}

#[test]
fn disk_flow_descends_and_stays_confined() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 64).unwrap();
    let r0 = 0.6;
    let e = ball(&g, &[0.0, 0.0], r0).unwrap();
    for m in [PerimeterModel::Local, PerimeterModel::Fractional { alpha: 0.25, radius: 0.2 }, PerimeterModel::PreMinkowski { rho: 0.1 }] {
        let mut cfg = StepConfig::new(m, 0.01);
        cfg.max_steps = 40;
        let tr = evolve_set(&cfg, &e).unwrap();
        assert!(tr.descent_violations.is_empty(), "{m}: {:?}", tr.descent_violations);
        assert_eq!(tr.selection_violations, 0);
        let k = build_ball_table(&m, 2, &default_table_radii(&g, 10)).unwrap().k_bound;
        for (sets, t) in tr.sets.iter().zip(tr.times()) {
            let bound = ball(&g, &[0.0, 0.0], r0 + t * k).unwrap();
            assert!(sets[0].is_subset_of(&bound), "{m} t={t}");
        }
        let energies: Vec<f64> = tr.rows.iter().map(|r| r.energy).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{m}");
        assert!(tr.rows.last().unwrap().volume < tr.rows[0].volume);
    }
}

#[test]
fn trace_csv_and_snapshots() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 32).unwrap();
    let mut cfg = StepConfig::new(PerimeterModel::Local, 0.02);
    cfg.max_steps = 3;
    let tr = evolve_set(&cfg, &ball(&g, &[0.0, 0.0], 0.5).unwrap()).unwrap();
    let csv = tr.to_csv();
    assert!(csv.starts_with("step,time,level,energy,volume,dissipation,nesting_repairs\n"));
    assert_eq!(csv.lines().count(), 5);
    let t = tr.times();
    assert!(t.windows(2).all(|w| (w[1] - w[0] - 0.02).abs() < 1e-15));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tr.write_snapshots(dir.path(), 2).unwrap(), 3);
    assert!(dir.path().join("snap_3_0.pgm").exists());
}

#[test]
fn empty_sets_end_the_run() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 32).unwrap();
    let mut cfg = StepConfig::new(PerimeterModel::Local, 0.5);
    cfg.max_steps = 10;
    let tr = evolve_set(&cfg, &ball(&g, &[0.0, 0.0], 0.2).unwrap()).unwrap();
    assert!(tr.sets.last().unwrap()[0].is_empty());
    assert!(tr.steps() < 10);
    cfg.stop_on_empty = false;
    let tr = evolve_set(&cfg, &ball(&g, &[0.0, 0.0], 0.2).unwrap()).unwrap();
    assert_eq!(tr.steps(), 10);
    assert!(tr.sets.last().unwrap()[0].is_empty());
}

fn cone(g: &GridGeometry, r0: f64) -> ScalarField {
    ScalarField::from_fn(*g, 0.0, |x| (r0 - (x[0] * x[0] + x[1] * x[1]).sqrt()).max(0.0)).unwrap()
}

#[test]
fn one_jump_field_moves_like_its_set() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 48).unwrap();
    let e = ball(&g, &[0.05, 0.0], 0.5).unwrap();
    let u = ScalarField::indicator(&e, 1.0, 0.0);
    for m in [PerimeterModel::Local, PerimeterModel::Fractional { alpha: 0.25, radius: 0.2 }] {
        let out = levelset_step(&m, &u, 0.01, &[0.0, 1.0]).unwrap();
        let (lo, _) = step_bounded(&m, &e, 0.01).unwrap();
        assert_eq!(out.superlevel(0.0).unwrap(), lo);
        assert!(out.values().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

#[test]
fn superlevels_evolve_like_sets() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 48).unwrap();
    let u0 = cone(&g, 0.7);
    let levels: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
    for m in [PerimeterModel::Local, PerimeterModel::PreMinkowski { rho: 0.1 }] {
        let mut cfg = StepConfig::new(m, 0.01);
        cfg.max_steps = 10;
        cfg.level_grid = levels.clone();
        let lt = evolve_levelset(&cfg, &u0).unwrap();
        assert_eq!(lt.nesting_repairs, 0);
        for (i, &l) in levels.iter().enumerate() {
            cfg.stop_on_empty = false;
            let st = evolve_set(&cfg, &u0.superlevel(l).unwrap()).unwrap();
            for k in 0..=10 {
                assert_eq!(lt.fields[k].superlevel(l).unwrap(), st.sets[k][0], "{m} level {l} step {k}");
                assert_eq!(lt.sets[k][i], st.sets[k][0]);
            }
        }
    }
}

#[test]
fn nested_disks_need_no_repairs() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 128).unwrap();
    let u0 = ScalarField::from_fn(g, 0.0, |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        [0.2, 0.4, 0.6, 0.8].iter().filter(|&&s| r < s).count() as f64
    })
    .unwrap();
    let mut cfg = StepConfig::new(PerimeterModel::Local, 5e-3);
    cfg.max_steps = 10;
    cfg.band = Some(6.0);
    cfg.level_grid = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let tr = evolve_levelset(&cfg, &u0).unwrap();
    assert_eq!(tr.nesting_repairs, 0);
    assert!(tr.descent_violations.is_empty());
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    for l in [0.0, 0.5, 1.0, 2.0, 3.5] {
        let rep = descent_monitor(&tr, &p, l, 1e-12).unwrap();
        assert!(rep.increases.is_empty(), "level {l}: {:?}", rep.increases);
        assert_eq!(rep.energies.len(), 11);
    }
}

#[test]
fn lipschitz_bound_survives_a_step() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 64).unwrap();
    let d = g.cell_size();
    // values on a lattice of spacing one cell, so the levels are exact
    let u0 = ScalarField::from_fn(g, 0.0, |x| ((0.6 - (x[0] * x[0] + x[1] * x[1]).sqrt()) / d).floor().max(0.0) * d).unwrap();
    let levels: Vec<f64> = (0..=((0.6 / d).ceil() as usize)).map(|i| i as f64 * d).collect();
    assert!(u0.lipschitz_constant() <= 2.0 + 1e-9);
    let mut cfg = StepConfig::new(PerimeterModel::Local, 0.01);
    cfg.max_steps = 3;
    cfg.level_grid = levels;
    let tr = evolve_levelset(&cfg, &u0).unwrap();
    for f in &tr.fields {
        // one cell of slack for the level quantization
        assert!(f.lipschitz_constant() <= 2.0 + 1e-9, "{}", f.lipschitz_constant());
    }
}

#[test]
fn constant_fields_do_not_move() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 32).unwrap();
    let u0 = ScalarField::constant(g, 0.3);
    let mut cfg = StepConfig::new(PerimeterModel::Local, 0.01);
    cfg.max_steps = 4;
    let tr = evolve_levelset(&cfg, &u0).unwrap();
    assert!(tr.fields.iter().all(|f| f == &u0));
    assert!(tr.time_modulus.iter().all(|&m| m == 0.0));
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let rep = descent_monitor(&tr, &p, 0.3, 1e-12).unwrap();
    assert!(rep.energies.iter().all(|&e| e == 0.0));
}

#[test]
fn descent_monitor_reads_the_set_trace() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 48).unwrap();
    let mut cfg = StepConfig::new(PerimeterModel::Local, 0.01);
    cfg.max_steps = 8;
    let tr = evolve_set(&cfg, &ball(&g, &[0.0, 0.0], 0.6).unwrap()).unwrap();
    let p = GridPerimeter::new(PerimeterModel::Local, g).unwrap();
    let rep = descent_monitor(&tr, &p, 0.5, 1e-12).unwrap();
    let j: Vec<f64> = tr.rows.iter().map(|r| r.energy).collect();
    assert_eq!(rep.energies, j);
}

#[test]
fn levels_must_cover_the_field() {
    let g = GridGeometry::cube(2, -1.0, 1.0, 32).unwrap();
    let u = cone(&g, 0.5);
    assert!(levelset_step(&PerimeterModel::Local, &u, 0.01, &[0.1, 0.2]).is_err());
    assert!(levelset_step(&PerimeterModel::Local, &u, 0.01, &[0.0, 0.3, 0.2]).is_err());
    let l = default_levels(&u, DEFAULT_LEVEL_COUNT);
    assert_eq!(l.len(), DEFAULT_LEVEL_COUNT);
    assert!(l.contains(&0.0));
    assert!(levelset_step(&PerimeterModel::Local, &u, 0.01, &l).is_ok());
}

#[test]
fn config_validation() {
    let mut cfg = StepConfig::new(PerimeterModel::Local, 0.0);
    assert!(cfg.validate().is_err());
    cfg.h = 0.1;
    cfg.level_grid = vec![0.0, 0.0];
    assert!(cfg.validate().is_err());
    cfg.level_grid = vec![0.0, 1.0];
    cfg.band = Some(1.0);
    assert!(cfg.validate().is_err());
}

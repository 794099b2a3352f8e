use nlflow::grid::GridGeometry;
use nlflow::mincut::{assemble, minimize, solve};
use nlflow::perimeter::{GridPerimeter, InteractionGraph, PerimeterModel};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

fn unit_grid(n: usize) -> GridGeometry {
    GridGeometry::cube(2, 0.0, n as f64, n).unwrap()
}

fn models() -> Vec<PerimeterModel> {
    vec![
        PerimeterModel::Local,
        PerimeterModel::TwoBodyKernel { sigma: 1.0, radius: 3.0 },
        PerimeterModel::Fractional { alpha: 0.25, radius: 2.5 },
        PerimeterModel::PreMinkowski { rho: 1.0 },
    ]
}

fn mask_of(bits: u64, len: usize) -> Vec<bool> {
    (0..len).map(|i| bits >> i & 1 == 1).collect()
}

/// Minimum energy and the intersection/union of all minimizers.
fn enumerate(graph: &InteractionGraph, tol: f64) -> (f64, Vec<bool>, Vec<bool>) {
    let n = graph.node_count;
    let energies: Vec<f64> = (0..1u64 << n).into_par_iter().map(|b| graph.energy(&mask_of(b, n))).collect();
    let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo = vec![true; n];
    let mut hi = vec![false; n];
    for (b, e) in energies.iter().enumerate() {
        if *e <= best + tol {
            let m = mask_of(b as u64, n);
            for i in 0..n {
                lo[i] &= m[i];
                hi[i] |= m[i];
            }
        }
    }
    (best, lo, hi)
}

fn magnitude(graph: &InteractionGraph) -> f64 {
    graph.unary.iter().map(|u| u.abs()).sum::<f64>()
        + graph.pairwise.iter().map(|t| t.2).sum::<f64>()
        + graph.terminal.iter().map(|t| t.2).sum::<f64>()
        + graph.aux_cost.iter().map(|c| c.abs()).sum::<f64>()
}

#[test]
fn cut_value_matches_exhaustive_minimum_on_3x3() {
    let g = unit_grid(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in models() {
        let p = GridPerimeter::new(m, g).unwrap();
        for _ in 0..20 {
            let mut graph = p.graph_terms(None).unwrap();
            let u: Vec<f64> = (0..9).map(|_| rng.gen_range(-3.0..1.0)).collect();
            graph.add_unary(&u, 1.0);
            let scale = rng.gen_range(0.5..50.0);
            let net = assemble(&graph, scale).unwrap();
            let r = solve(&net).unwrap();
            let (best, _, _) = enumerate(&graph, 0.0);
            let q = 1e-12 * magnitude(&graph);
            assert!((r.value - best).abs() <= q * net.node_count as f64, "{m}: {} vs {best}", r.value);
        }
    }
}

#[test]
fn extreme_minimizers_match_enumeration_on_4x4() {
    let g = unit_grid(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in models() {
        let p = GridPerimeter::new(m, g).unwrap();
        let base = p.graph_terms(None).unwrap();
        for trial in 0..200 {
            let mut graph = base.clone();
            let u: Vec<f64> = (0..16)
                .map(|_| if trial % 5 == 0 { rng.gen_range(-4..=1) as f64 * 0.5 } else { rng.gen_range(-3.0..1.0) })
                .collect();
            graph.add_unary(&u, 1.0);
            let r = minimize(&graph, 1.0).unwrap();
            let (best, lo, hi) = enumerate(&graph, 1e-10 * magnitude(&graph));
            assert_eq!(r.minimal, lo, "{m} trial {trial}");
            assert_eq!(r.maximal, hi, "{m} trial {trial}");
            for chi in [&r.minimal, &r.maximal] {
                assert!((graph.energy(chi) - best).abs() <= 1e-10 * magnitude(&graph));
            }
        }
    }
}

#[test]
fn lowering_a_membership_cost_never_shrinks_the_minimizers() {
    let g = unit_grid(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for m in models() {
        let p = GridPerimeter::new(m, g).unwrap();
        let base = p.graph_terms(None).unwrap();
        for _ in 0..10 {
            let mut graph = base.clone();
            let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-2.0..0.5)).collect();
            graph.add_unary(&u, 1.0);
            let before = minimize(&graph, 1.0).unwrap();
            for _ in 0..5 {
                let k = rng.gen_range(0..g.len());
                graph.unary[k] -= rng.gen_range(0.0..1.0);
            }
            let after = minimize(&graph, 1.0).unwrap();
            for i in 0..g.len() {
                assert!(!before.minimal[i] || after.minimal[i], "{m}");
                assert!(!before.maximal[i] || after.maximal[i], "{m}");
                assert!(!after.minimal[i] || after.maximal[i]);
            }
        }
    }
}

#[test]
fn banded_solve_agrees_with_full_solve() {
    let g = unit_grid(16);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for m in models() {
        let p = GridPerimeter::new(m, g).unwrap();
        for _ in 0..5 {
            let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.5..0.8)).collect();
            let mut full = p.graph_terms(None).unwrap();
            full.add_unary(&u, g.cell_volume());
            let r = minimize(&full, 1.0).unwrap();
            // freeze a random part of the optimum: the rest must be recovered
            let state = r.minimal.clone();
            let free: Vec<bool> = (0..g.len()).map(|_| rng.gen_bool(0.6)).collect();
            let band = p.band_terms(&state, &free, Some(&u)).unwrap();
            let rb = minimize(&band, 1.0).unwrap();
            for (k, &c) in band.cells.iter().enumerate() {
                assert_eq!(rb.minimal[k], r.minimal[c as usize], "{m}");
            }
        }
    }
}

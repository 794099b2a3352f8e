//! Generalized perimeters on the grid.
//!
//! Every model is symmetric (`J(E) = J(R^N \ E)`), so co-bounded sets are
//! evaluated through their complement. Pairwise models store a symmetric
//! table of offset weights; the pre-Minkowski model stores its window.

mod graph;
pub(crate) mod weights;

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use graph::{Coverage, InteractionGraph};
use weights::Radial;

use crate::quad::Rule;

use crate::error::{Error, Result};
use crate::grid::{ball_offsets, squared_center_distance, BinarySet, GridGeometry, ScalarField, RADIUS_SLACK};

/// Cells per parallel work unit; fixed so that sums are reproducible.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerimeterKind {
    Local,
    TwoBodyKernel,
    Fractional,
    PreMinkowski,
}

impl PerimeterKind {
    pub const ALL: [PerimeterKind; 4] =
        [PerimeterKind::Local, PerimeterKind::TwoBodyKernel, PerimeterKind::Fractional, PerimeterKind::PreMinkowski];

    pub fn name(self) -> &'static str {
        match self {
            PerimeterKind::Local => "local",
            PerimeterKind::TwoBodyKernel => "two_body_kernel",
            PerimeterKind::Fractional => "fractional",
            PerimeterKind::PreMinkowski => "pre_minkowski",
        }
    }
}

impl fmt::Display for PerimeterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerimeterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PerimeterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnsupportedModel(format!("`{s}` (expected local, two_body_kernel, fractional or pre_minkowski)")))
    }
}

/// A perimeter functional with its parameters, in domain units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerimeterModel {
    /// Cauchy–Crofton neighbourhood perimeter.
    Local,
    /// `∫_E ∫_{E^c} K` with a Gaussian `K` of width `sigma`, normalized so a
    /// flat interface has unit energy per unit area, truncated at `radius`.
    TwoBodyKernel { sigma: f64, radius: f64 },
    /// `(1-α) ∫∫ |χ_E(x) - χ_E(y)| / |x-y|^(N+2α)`, truncated at `radius`.
    Fractional { alpha: f64, radius: f64 },
    /// `(1/2ρ) |{x : χ_E oscillates on B(x, ρ)}|`. On the grid the ball is
    /// the set of cell offsets within `ρ` and `ρ` in the prefactor is the
    /// mean half-width of that window.
    PreMinkowski { rho: f64 },
}

impl PerimeterModel {
    pub fn kind(&self) -> PerimeterKind {
        match self {
            PerimeterModel::Local => PerimeterKind::Local,
            PerimeterModel::TwoBodyKernel { .. } => PerimeterKind::TwoBodyKernel,
            PerimeterModel::Fractional { .. } => PerimeterKind::Fractional,
            PerimeterModel::PreMinkowski { .. } => PerimeterKind::PreMinkowski,
        }
    }

    /// Reach of the nonlocal interaction; `None` for the local model.
    pub fn interaction_radius(&self) -> Option<f64> {
        match *self {
            PerimeterModel::Local => None,
            PerimeterModel::TwoBodyKernel { radius, .. } | PerimeterModel::Fractional { radius, .. } => Some(radius),
            PerimeterModel::PreMinkowski { rho } => Some(rho),
        }
    }

    /// Truncation radius used when a kernel model does not name one.
    pub fn default_truncation(geometry: &GridGeometry) -> f64 {
        0.25 * geometry.diameter()
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }

    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        let h = geometry.cell_size();
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match *self {
            PerimeterModel::Local => {}
            PerimeterModel::TwoBodyKernel { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                return bad(format!("kernel width must be positive, got {sigma}"));
            }
            PerimeterModel::Fractional { alpha, .. } if !(alpha > 0.0 && alpha < 0.5) => {
                return bad(format!("fractional alpha must lie in (0, 1/2), got {alpha}"));
            }
            _ => {}
        }
        if let Some(r) = self.interaction_radius() {
            if !(r.is_finite() && r >= h * (1.0 - RADIUS_SLACK)) {
                return bad(format!("interaction radius {r} is below the cell size {h}"));
            }
            if r > geometry.diameter() {
                return bad(format!("interaction radius {r} exceeds the domain diameter"));
            }
        }
        Ok(())
    }

    /// Tail `|E| ∫_{|z|>R} K` dropped by truncating a kernel model; 0 otherwise.
    pub fn truncation_error_bound(&self, dim: usize, volume: f64) -> f64 {
        match *self {
            PerimeterModel::Fractional { alpha, radius } => {
                volume * 2.0 * (1.0 - alpha) * weights::sphere_area(dim) * radius.powf(-2.0 * alpha) / (2.0 * alpha)
            }
            PerimeterModel::TwoBodyKernel { sigma, radius } => {
                let c = 1.0 / (2.0 * sigma * sigma);
                let tail = weights::gaussian_moment(dim, c, f64::INFINITY) - weights::gaussian_moment(dim, c, radius);
                volume * gaussian_norm(dim, sigma) * weights::sphere_area(dim) * tail.max(0.0)
            }
            _ => 0.0,
        }
    }
}

impl fmt::Display for PerimeterModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PerimeterModel::Local => write!(f, "local"),
            PerimeterModel::TwoBodyKernel { sigma, radius } => write!(f, "two_body_kernel(sigma={sigma}, radius={radius})"),
            PerimeterModel::Fractional { alpha, radius } => write!(f, "fractional(alpha={alpha}, radius={radius})"),
            PerimeterModel::PreMinkowski { rho } => write!(f, "pre_minkowski(rho={rho})"),
        }
    }
}

fn gaussian_norm(dim: usize, sigma: f64) -> f64 {
    1.0 / ((2.0 * PI).powf((dim as f64 - 1.0) / 2.0) * sigma.powi(dim as i32 + 1))
}

#[derive(Debug, Clone)]
enum Stencil {
    Pairs { offsets: Vec<[i64; 3]>, weights: Vec<f64> },
    Window { offsets: Vec<[i64; 3]>, radius_cells: f64, coeff: f64 },
}

/// A model bound to a grid, with its interaction stencil precomputed.
#[derive(Debug, Clone)]
pub struct GridPerimeter {
    model: PerimeterModel,
    geometry: GridGeometry,
    stencil: Stencil,
}

impl GridPerimeter {
    pub fn new(model: PerimeterModel, geometry: GridGeometry) -> Result<Self> {
        model.validate(&geometry)?;
        let dim = geometry.dim();
        let h = geometry.cell_size();
        let stencil = match model {
            PerimeterModel::Local => {
                let (offsets, weights) = local_stencil(dim, h);
                Stencil::Pairs { offsets, weights }
            }
            PerimeterModel::Fractional { alpha, radius } => {
                let p = dim as f64 + 2.0 * alpha;
                let scale = 2.0 * (1.0 - alpha) * h.powf(2.0 * dim as f64 - p);
                pair_stencil(dim, Radial::Power { p }, radius / h, scale)
            }
            PerimeterModel::TwoBodyKernel { sigma, radius } => {
                let c = h * h / (2.0 * sigma * sigma);
                let scale = gaussian_norm(dim, sigma) * h.powi(2 * dim as i32);
                pair_stencil(dim, Radial::Gaussian { c }, radius / h, scale)
            }
            PerimeterModel::PreMinkowski { rho } => {
                let offsets = ball_offsets(dim, rho / h);
                let mean_reach = mean_support(dim, &offsets) * h;
                Stencil::Window { offsets, radius_cells: rho / h, coeff: geometry.cell_volume() / (2.0 * mean_reach) }
            }
        };
        Ok(GridPerimeter { model, geometry, stencil })
    }

    pub fn model(&self) -> &PerimeterModel {
        &self.model
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    /// Offsets and weights of a pairwise model, `None` for window models.
    pub fn pair_table(&self) -> Option<(&[[i64; 3]], &[f64])> {
        match &self.stencil {
            Stencil::Pairs { offsets, weights } => Some((offsets, weights)),
            Stencil::Window { .. } => None,
        }
    }

    pub fn eval(&self, set: &BinarySet) -> Result<f64> {
        if set.geometry() != &self.geometry {
            return Err(Error::GeometryMismatch);
        }
        if set.complement_is_bounded() {
            let c: Vec<bool> = set.mask().iter().map(|b| !b).collect();
            Ok(self.eval_bounded(&c))
        } else {
            Ok(self.eval_bounded(set.mask()))
        }
    }

    /// Energy of the bounded set whose cells are `mask` (exterior empty).
    pub fn eval_bounded(&self, mask: &[bool]) -> f64 {
        match &self.stencil {
            Stencil::Pairs { offsets, weights } => self.pair_energy(mask, offsets, weights),
            Stencil::Window { radius_cells, coeff, .. } => self.window_energy(mask, *radius_cells, *coeff),
        }
    }

    fn pair_energy(&self, mask: &[bool], offsets: &[[i64; 3]], weights: &[f64]) -> f64 {
        let g = &self.geometry;
        let n = g.dims3();
        let lin: Vec<i64> = offsets.iter().map(|o| linear(n, *o)).collect();
        let partial: Vec<f64> = (0..mask.len())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut s = 0.0;
                for &i in chunk {
                    if !mask[i] {
                        continue;
                    }
                    let c = g.coords(i);
                    for ((o, &l), &w) in offsets.iter().zip(&lin).zip(weights) {
                        let inside = in_grid(n, c, *o);
                        if !inside || !mask[(i as i64 + l) as usize] {
                            s += w;
                        }
                    }
                }
                s
            })
            .collect();
        partial.iter().sum()
    }

    fn window_energy(&self, mask: &[bool], r: f64, coeff: f64) -> f64 {
        if !mask.iter().any(|&b| b) {
            return 0.0;
        }
        let g = &self.geometry;
        let pad = r.floor() as usize + 1;
        let (pg, pmask) = pad_mask(g, mask, pad);
        let to_set = squared_center_distance(&pg, &pmask);
        let outside: Vec<bool> = pmask.iter().map(|b| !b).collect();
        let to_out = squared_center_distance(&pg, &outside);
        let lim = r * r * (1.0 + RADIUS_SLACK);
        let near = to_set.iter().filter(|&&d| d <= lim).count();
        let deep = to_out.iter().filter(|&&d| d > lim).count();
        (near - deep) as f64 * coeff
    }

    /// Graph whose cut energy is `eval + Σ unary·cellvol·χ` for bounded sets.
    pub fn graph_terms(&self, unary: Option<&ScalarField>) -> Result<InteractionGraph> {
        let g = &self.geometry;
        if let Some(u) = unary {
            if u.geometry() != g {
                return Err(Error::GeometryMismatch);
            }
        }
        let free = vec![true; g.len()];
        self.band_terms(&free, &free, unary.map(|u| u.values()))
    }

    /// Graph over the cells where `free` holds, every other cell frozen at
    /// `state` (a bounded set, exterior empty). Its energy equals
    /// `eval + Σ unary·cellvol·χ` up to a term that depends on the frozen
    /// cells alone; couplings to frozen cells become terminal terms.
    pub fn band_terms(&self, state: &[bool], free: &[bool], unary: Option<&[f64]>) -> Result<InteractionGraph> {
        let g = &self.geometry;
        let len = g.len();
        if state.len() != len || free.len() != len || unary.is_some_and(|u| u.len() != len) {
            return Err(Error::GeometryMismatch);
        }
        if len > u32::MAX as usize {
            return Err(Error::InvalidArgument("grid too large for 32-bit node ids".into()));
        }
        let cells: Vec<u32> = (0..len).filter(|&i| free[i]).map(|i| i as u32).collect();
        let mut node = vec![u32::MAX; len];
        for (k, &c) in cells.iter().enumerate() {
            node[c as usize] = k as u32;
        }
        let mut graph = InteractionGraph::new(cells.len());
        if let Some(u) = unary {
            for (k, &c) in cells.iter().enumerate() {
                graph.unary[k] += u[c as usize] * g.cell_volume();
            }
        }
        graph.cells = cells;
        match &self.stencil {
            Stencil::Pairs { offsets, weights } => self.pair_graph(&mut graph, state, &node, offsets, weights),
            Stencil::Window { offsets, coeff, radius_cells } => {
                if 2.0 * radius_cells.floor() + 1.0 > g.cells_per_axis().iter().copied().min().unwrap() as f64 {
                    return Err(Error::InvalidArgument("pre-Minkowski window does not fit in the grid".into()));
                }
                self.window_graph(&mut graph, state, &node, offsets, *coeff)
            }
        }
        if let Some(&(i, j, w)) = graph.pairwise.iter().find(|t| !(t.2 >= 0.0)) {
            return Err(Error::NegativeWeight { i: i as usize, j: j as usize, weight: w });
        }
        Ok(graph)
    }

    fn pair_graph(&self, graph: &mut InteractionGraph, state: &[bool], node: &[u32], offsets: &[[i64; 3]], weights: &[f64]) {
        let g = &self.geometry;
        let n = g.dims3();
        let mut table: Vec<([i64; 3], i64, f64)> =
            offsets.iter().zip(weights).map(|(o, &w)| (*o, linear(n, *o), w)).collect();
        table.sort_by_key(|t| t.1);
        struct Part {
            pairs: Vec<(u32, u32, f64)>,
            terminal: Vec<(u32, bool, f64)>,
        }
        let parts: Vec<Part> = graph
            .cells
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut part = Part { pairs: Vec::new(), terminal: Vec::new() };
                for &ci in chunk {
                    let i = ci as usize;
                    let c = g.coords(i);
                    for &(o, l, w) in &table {
                        if !in_grid(n, c, o) {
                            part.terminal.push((node[i], false, w));
                            continue;
                        }
                        let j = (i as i64 + l) as usize;
                        if node[j] != u32::MAX {
                            if l > 0 {
                                part.pairs.push((node[i], node[j], w));
                            }
                        } else {
                            part.terminal.push((node[i], state[j], w));
                        }
                    }
                }
                part
            })
            .collect();
        for part in parts {
            graph.pairwise.extend(part.pairs);
            graph.terminal.extend(part.terminal);
        }
    }

    fn window_graph(&self, graph: &mut InteractionGraph, state: &[bool], node: &[u32], offsets: &[[i64; 3]], coeff: f64) {
        let g = &self.geometry;
        let dim = g.dim();
        let n = g.dims3();
        if graph.cells.is_empty() {
            return;
        }
        let q = offsets.iter().map(|o| o[0].abs()).max().unwrap_or(0);
        // window centres that can see a free cell
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for &c in &graph.cells {
            let x = g.coords(c as usize);
            for a in 0..3 {
                lo[a] = lo[a].min(x[a] as i64);
                hi[a] = hi[a].max(x[a] as i64);
            }
        }
        for a in 0..dim {
            lo[a] -= q;
            hi[a] += q;
        }
        let mut xs = Vec::new();
        for x2 in lo[2]..=hi[2] {
            for x1 in lo[1]..=hi[1] {
                for x0 in lo[0]..=hi[0] {
                    xs.push([x0, x1, x2]);
                }
            }
        }
        // (members, some frozen member inside, some member outside)
        let windows: Vec<(Vec<u32>, bool, bool)> = xs
            .par_iter()
            .map(|x| {
                let mut members = Vec::new();
                let (mut frozen_in, mut out) = (false, false);
                for o in offsets {
                    let y = [x[0] + o[0], x[1] + o[1], x[2] + o[2]];
                    if (0..3).all(|a| y[a] >= 0 && y[a] < n[a] as i64) {
                        let j = g.index([y[0] as usize, y[1] as usize, y[2] as usize]);
                        if node[j] != u32::MAX {
                            members.push(node[j]);
                        } else if state[j] {
                            frozen_in = true;
                        } else {
                            out = true;
                        }
                    } else {
                        out = true;
                    }
                }
                (members, frozen_in, out)
            })
            .collect();
        for (members, frozen_in, out) in windows {
            if members.is_empty() {
                continue;
            }
            if !out {
                graph.push_aux(Coverage::All, -coeff, members.iter().copied());
            }
            if frozen_in {
                graph.constant += coeff;
            } else {
                graph.push_aux(Coverage::Any, coeff, members);
            }
        }
    }
}

#[inline]
fn linear(n: [usize; 3], o: [i64; 3]) -> i64 {
    o[0] + n[0] as i64 * (o[1] + n[1] as i64 * o[2])
}

#[inline]
fn in_grid(n: [usize; 3], c: [usize; 3], o: [i64; 3]) -> bool {
    (0..3).all(|a| {
        let v = c[a] as i64 + o[a];
        v >= 0 && v < n[a] as i64
    })
}

fn pad_mask(g: &GridGeometry, mask: &[bool], pad: usize) -> (GridGeometry, Vec<bool>) {
    let dim = g.dim();
    let h = g.cell_size();
    let n = g.dims3();
    let cells: Vec<usize> = (0..dim).map(|a| n[a] + 2 * pad).collect();
    let origin: Vec<f64> = (0..dim).map(|a| g.origin()[a] - pad as f64 * h).collect();
    let extent: Vec<f64> = cells.iter().map(|&c| c as f64 * h).collect();
    let pg = GridGeometry::new(&origin, &extent, &cells).expect("padded grid is valid");
    let shift = |a: usize| if a < dim { pad } else { 0 };
    let mut pm = vec![false; pg.len()];
    for (i, &b) in mask.iter().enumerate() {
        if b {
            let c = g.coords(i);
            pm[pg.index([c[0] + shift(0), c[1] + shift(1), c[2] + shift(2)])] = true;
        }
    }
    (pg, pm)
}

/// Mean over directions of the support function `max_k k·n` of the window.
fn mean_support(dim: usize, offsets: &[[i64; 3]]) -> f64 {
    let support = |n: [f64; 3]| {
        offsets.iter().map(|k| k[0] as f64 * n[0] + k[1] as f64 * n[1] + k[2] as f64 * n[2]).fold(f64::MIN, f64::max)
    };
    match dim {
        1 => support([1.0, 0.0, 0.0]),
        2 => {
            let m = 8192;
            (0..m)
                .map(|i| {
                    let t = 2.0 * PI * (i as f64 + 0.5) / m as f64;
                    support([t.cos(), t.sin(), 0.0])
                })
                .sum::<f64>()
                / m as f64
        }
        _ => {
            let rule = Rule::new(48);
            let zs = rule.points(-1.0, 1.0, 4);
            let m = 384;
            let mut s = 0.0;
            for &(z, w) in &zs {
                let rxy = (1.0 - z * z).sqrt();
                for j in 0..m {
                    let t = 2.0 * PI * (j as f64 + 0.5) / m as f64;
                    s += w * support([rxy * t.cos(), rxy * t.sin(), z]);
                }
            }
            s / (2.0 * m as f64)
        }
    }
}

fn local_stencil(dim: usize, h: f64) -> (Vec<[i64; 3]>, Vec<f64>) {
    let mut out: Vec<([i64; 3], f64)> = Vec::new();
    match dim {
        1 => {
            out.push(([-1, 0, 0], 1.0));
            out.push(([1, 0, 0], 1.0));
        }
        2 => {
            let axis = PI * h / 8.0;
            let diag = PI * h / (8.0 * SQRT_2);
            for k1 in -1i64..=1 {
                for k0 in -1i64..=1 {
                    match k0.abs() + k1.abs() {
                        1 => out.push(([k0, k1, 0], axis)),
                        2 => out.push(([k0, k1, 0], diag)),
                        _ => {}
                    }
                }
            }
        }
        _ => {
            let w = 2.0 * h * h / 3.0;
            for a in 0..3 {
                for s in [-1i64, 1] {
                    let mut o = [0; 3];
                    o[a] = s;
                    out.push((o, w));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().unzip()
}

fn pair_stencil(dim: usize, kernel: Radial, trunc: f64, scale: f64) -> Stencil {
    let table = weights::kernel_table(dim, kernel, trunc);
    let (offsets, w): (Vec<_>, Vec<_>) = table.into_iter().unzip();
    Stencil::Pairs { offsets, weights: w.into_iter().map(|x| x * scale).collect() }
}

pub fn eval(model: &PerimeterModel, set: &BinarySet) -> Result<f64> {
    GridPerimeter::new(*model, *set.geometry())?.eval(set)
}

pub fn graph_terms(model: &PerimeterModel, geometry: &GridGeometry, unary: Option<&ScalarField>) -> Result<InteractionGraph> {
    GridPerimeter::new(*model, *geometry)?.graph_terms(unary)
}

/// `Σ_i J({u > λ_i}) (λ_{i+1} - λ_i)` over consecutive levels.
pub fn coarea_eval(model: &PerimeterModel, u: &ScalarField, levels: &[f64]) -> Result<f64> {
    GridPerimeter::new(*model, *u.geometry())?.coarea_eval(u, levels)
}

impl GridPerimeter {
    pub fn coarea_eval(&self, u: &ScalarField, levels: &[f64]) -> Result<f64> {
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidLevels("levels must be strictly increasing".into()));
        }
        let (lo, hi) = (u.min().min(u.outside_value()), u.max().max(u.outside_value()));
        if levels.is_empty() || levels[0] > lo || *levels.last().unwrap() < hi {
            return Err(Error::InvalidLevels(format!("levels do not bracket the range [{lo}, {hi}]")));
        }
        let mut total = 0.0;
        for w in levels.windows(2) {
            let e = u.superlevel(w[0])?;
            total += self.eval(&e)? * (w[1] - w[0]);
        }
        Ok(total)
    }
}

/// Number of random pairs `(E, F)` with
/// `J(E ∪ F) + J(E ∩ F) > J(E) + J(F)` beyond relative `1e-9`.
pub fn submodularity_probe(model: &PerimeterModel, geometry: &GridGeometry, trials: usize, seed: u64) -> Result<usize> {
    let p = GridPerimeter::new(*model, *geometry)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(BinarySet, BinarySet)> =
        (0..trials).map(|_| (random_set(geometry, &mut rng), random_set(geometry, &mut rng))).collect();
    let violations = pairs
        .par_iter()
        .map(|(e, f)| -> Result<bool> {
            let lhs = p.eval(&e.union(f)?)? + p.eval(&e.intersection(f)?)?;
            let rhs = p.eval(e)? + p.eval(f)?;
            Ok(lhs > rhs + 1e-9 * rhs.abs().max(lhs.abs()))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(violations.into_iter().filter(|&v| v).count())
}

/// A random bounded set: scattered cells or a union of small balls.
pub fn random_set(geometry: &GridGeometry, rng: &mut impl Rng) -> BinarySet {
    let g = geometry;
    let mask: Vec<bool> = if rng.gen_bool(0.5) {
        let p = rng.gen_range(0.2..0.8);
        (0..g.len()).map(|i| !g.on_boundary_layer(i) && rng.gen_bool(p)).collect()
    } else {
        let n = g.dims3();
        let blobs: Vec<([f64; 3], f64)> = (0..rng.gen_range(1..=3))
            .map(|_| {
                let mut c = [0.0; 3];
                for a in 0..g.dim() {
                    c[a] = rng.gen_range(1.0..(n[a] as f64 - 1.0));
                }
                let r = rng.gen_range(0.5..(n.iter().take(g.dim()).copied().min().unwrap() as f64 / 3.0).max(0.6));
                (c, r)
            })
            .collect();
        (0..g.len())
            .map(|i| {
                let c = g.coords(i);
                !g.on_boundary_layer(i)
                    && blobs.iter().any(|(b, r)| {
                        (0..g.dim()).map(|a| (c[a] as f64 + 0.5 - b[a]).powi(2)).sum::<f64>() <= r * r
                    })
            })
            .collect()
    };
    BinarySet::new(*g, mask, false).expect("interior cells only")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Σ_{x ∈ E} Σ_{y ∉ E} w(y - x)` over every lattice cell `y` in reach.
    fn double_sum(g: &GridGeometry, cells: &[[i64; 2]], alpha: f64, radius: f64) -> f64 {
        let h = g.cell_size();
        let p = 2.0 + 2.0 * alpha;
        let rule = Rule::new(12);
        let reach = (radius / h).ceil() as i64 + 2;
        let mut total = 0.0;
        for x in cells {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let y = [x[0] + dx, x[1] + dy];
                    if (dx, dy) == (0, 0) || cells.contains(&y) {
                        continue;
                    }
                    let w = weights::tent_integral(2, Radial::Power { p }, [dx, dy, 0], radius / h, &rule);
                    total += 2.0 * (1.0 - alpha) * h.powf(4.0 - p) * w;
                }
            }
        }
        total
    }

    #[test]
    fn fractional_matches_direct_double_sum() {
        let g = GridGeometry::cube(2, 0.0, 1.5, 6).unwrap();
        let (alpha, radius) = (0.25, 0.6);
        let p = GridPerimeter::new(PerimeterModel::Fractional { alpha, radius }, g).unwrap();
        for cells in [vec![[2i64, 2]], vec![[2, 2], [3, 2]], vec![[2, 2], [3, 3]]] {
            let mask: Vec<bool> =
                (0..g.len()).map(|i| cells.iter().any(|c| g.index([c[0] as usize, c[1] as usize, 0]) == i)).collect();
            let set = BinarySet::new(g, mask, false).unwrap();
            let got = p.eval(&set).unwrap();
            let want = double_sum(&g, &cells, alpha, radius);
            assert!((got - want).abs() <= 1e-12 * want, "{cells:?}: {got} vs {want}");
        }
    }

    #[test]
    fn window_reach_of_unit_and_large_balls() {
        assert_eq!(mean_support(1, &ball_offsets(1, 3.7)), 3.0);
        // the 3x3 block has hull perimeter 8, mean width 8 / pi
        assert!((mean_support(2, &ball_offsets(2, 1.5)) - 4.0 / PI).abs() < 1e-6);
        let cube = ball_offsets(3, 3f64.sqrt());
        assert!((mean_support(3, &cube) - 1.5).abs() < 1e-3);
        let big = mean_support(2, &ball_offsets(2, 40.0));
        assert!((big / 40.0 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn local_weights_match_crofton_average() {
        // mean over directions of the cut length of a unit segment is exact
        let (offs, w) = local_stencil(2, 1.0);
        let n = 2000;
        let mean: f64 = (0..n)
            .map(|i| {
                let t = PI * (i as f64 + 0.5) / n as f64;
                let nrm = [t.cos(), t.sin()];
                offs.iter().zip(&w).map(|(o, w)| w * (o[0] as f64 * nrm[0] + o[1] as f64 * nrm[1]).abs()).sum::<f64>() / 2.0
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 1e-6, "{mean}");
    }
}

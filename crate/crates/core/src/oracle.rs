//! Independent reference computations: the radial comparison ODE, exhaustive
//! minimization of one scheme step, and a direct polar quadrature of the
//! fractional ball curvature.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::curvature::{BallCurvatureTable, Estimate};
use crate::error::{Error, Result};
use crate::grid::{interface_distance, BinarySet};
use crate::perimeter::{GridPerimeter, PerimeterModel};
use crate::quad::KahanSum;

/// Largest number of free cells `brute_force_step` accepts.
pub const MAX_BRUTE_FORCE_CELLS: usize = 16;

/// Relative energy gap below which two brute-force candidates tie.
pub const TIE_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    pub r0: f64,
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    /// `None` if the ball survives the horizon.
    pub extinction_time: Option<f64>,
}

impl RadialSolution {
    /// Radius at time `t` by linear interpolation; zero after extinction.
    pub fn radius_at(&self, t: f64) -> f64 {
        if let Some(te) = self.extinction_time {
            if t >= te {
                return 0.0;
            }
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.r0;
        }
        if k == self.times.len() {
            return match self.extinction_time {
                Some(te) => {
                    let (t0, r0) = (self.times[k - 1], self.radii[k - 1]);
                    r0 * (te - t) / (te - t0)
                }
                None => self.radii[k - 1],
            };
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (r0, r1) = (self.radii[k - 1], self.radii[k]);
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,r\n");
        for (t, r) in self.times.iter().zip(&self.radii) {
            let _ = writeln!(s, "{t},{r}");
        }
        if let Some(te) = self.extinction_time {
            let _ = writeln!(s, "{te},0");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Integrates `r' = -c(r)` with classical RK4 from `r0` up to `horizon`.
///
/// `curvature_fn` returns `None` where the ball counts as extinct. With
/// `use_hat_clamp` the speed is `max(1, c)`. Near extinction the step is
/// halved while `r < dt·c(r)`; once it is negligible the last bracket is
/// closed by linear interpolation.
pub fn radial_ode(
    r0: f64,
    curvature_fn: impl Fn(f64) -> Option<f64>,
    dt: f64,
    use_hat_clamp: bool,
    horizon: f64,
) -> Result<RadialSolution> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidArgument(format!("r0 must be positive, got {r0}")));
    }
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidArgument("dt and horizon must be positive".into()));
    }
    let speed = |r: f64| -> Option<f64> {
        if r <= 0.0 {
            return None;
        }
        let c = curvature_fn(r)?;
        if !c.is_finite() {
            return None;
        }
        Some(if use_hat_clamp { c.max(1.0) } else { c })
    };
    let mut sol = RadialSolution { r0, times: vec![0.0], radii: vec![r0], extinction_time: None };
    let (mut t, mut r) = (0.0, r0);
    let mut step = dt;
    let floor = dt * 1e-10;
    while t < horizon {
        let Some(c0) = speed(r) else {
            sol.extinction_time = Some(t);
            break;
        };
        let tau = step.min(horizon - t);
        let stage = |x: f64| if x > 0.0 { speed(x).ok_or(true) } else { Err(false) };
        let attempt = (|| {
            let k1 = -c0;
            let k2 = -stage(r + 0.5 * tau * k1)?;
            let k3 = -stage(r + 0.5 * tau * k2)?;
            let k4 = -stage(r + tau * k3)?;
            let next = r + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if next > 0.0 { Ok(next) } else { Err(false) }
        })();
        match attempt {
            Ok(next) if r >= tau * c0 => {
                t += tau;
                r = next;
                sol.times.push(t);
                sol.radii.push(r);
            }
            failed => {
                if step < floor {
                    // a stage below the tabulated range ends the ball where it stands
                    let undefined = matches!(failed, Err(true));
                    sol.extinction_time = Some(if undefined { t } else { t + r / c0 });
                    break;
                }
                step *= 0.5;
            }
        }
    }
    Ok(sol)
}

/// Shape-preserving interpolant of a ball curvature table, built in log-log
/// coordinates with Fritsch–Carlson slopes.
#[derive(Debug, Clone)]
pub struct TableCurvature {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl TableCurvature {
    pub fn new(table: &BallCurvatureTable) -> Result<Self> {
        Self::from_points(&table.radii, &table.kappa_ball)
    }

    pub fn from_points(radii: &[f64], kappa: &[f64]) -> Result<Self> {
        if radii.len() < 2 || radii.len() != kappa.len() {
            return Err(Error::InvalidArgument("a curvature table needs at least two points".into()));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] <= 0.0 {
            return Err(Error::InvalidArgument("table radii must be positive and increasing".into()));
        }
        if kappa.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidArgument("table curvatures must be positive".into()));
        }
        let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = kappa.iter().map(|k| k.ln()).collect();
        let n = x.len();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = s[0];
        m[n - 1] = s[n - 2];
        for i in 1..n - 1 {
            m[i] = if s[i - 1] * s[i] <= 0.0 { 0.0 } else { (s[i - 1] + s[i]) / 2.0 };
        }
        for i in 0..n - 1 {
            if s[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
                continue;
            }
            let (a, b) = (m[i] / s[i], m[i + 1] / s[i]);
            let q = a * a + b * b;
            if q > 9.0 {
                let t = 3.0 / q.sqrt();
                m[i] = t * a * s[i];
                m[i + 1] = t * b * s[i];
            }
        }
        Ok(TableCurvature { x, y, m })
    }

    pub fn min_radius(&self) -> f64 {
        self.x[0].exp()
    }

    /// `None` below the smallest radius; past the largest radius the last
    /// segment's power law is continued.
    pub fn eval(&self, radius: f64) -> Option<f64> {
        if !(radius > 0.0) {
            return None;
        }
        let lx = radius.ln();
        let n = self.x.len();
        if lx < self.x[0] - 1e-12 {
            return None;
        }
        if lx >= self.x[n - 1] {
            return Some((self.y[n - 1] + self.m[n - 1] * (lx - self.x[n - 1])).exp());
        }
        let i = self.x.partition_point(|&v| v <= lx).clamp(1, n - 1) - 1;
        let hx = self.x[i + 1] - self.x[i];
        let t = ((lx - self.x[i]) / hx).clamp(0.0, 1.0);
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[i]
            + (t3 - 2.0 * t2 + t) * hx * self.m[i]
            + (-2.0 * t3 + 3.0 * t2) * self.y[i + 1]
            + (t3 - t2) * hx * self.m[i + 1];
        Some(v.exp())
    }
}

/// Exhaustive minimization of `J(F) + (1/h)∫_F d_E` over every set whose
/// cells avoid the boundary layer. Returns the least and greatest minimizers.
pub fn brute_force_step(model: &PerimeterModel, set: &BinarySet, h: f64) -> Result<(BinarySet, BinarySet)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    let g = *set.geometry();
    let free: Vec<usize> = (0..g.len()).filter(|&i| !g.on_boundary_layer(i)).collect();
    if free.len() > MAX_BRUTE_FORCE_CELLS {
        return Err(Error::TooManyCells(free.len()));
    }
    if !set.is_bounded() {
        let (lo, hi) = brute_force_step(model, &set.complement(), h)?;
        return Ok((hi.complement(), lo.complement()));
    }
    if set.count() == 0 {
        return Ok((BinarySet::empty(g), BinarySet::empty(g)));
    }
    let p = GridPerimeter::new(*model, g)?;
    let d = interface_distance(set)?;
    let vol = g.cell_volume();
    let unary: Vec<f64> = free.iter().map(|&i| d.values()[i] * vol / h).collect();
    let n = free.len();
    let bits = BitPerimeter::new(&p, &free);
    let perimeter = |subset: u64| -> f64 {
        match &bits {
            Some(b) => b.eval(subset),
            None => {
                let mut mask = vec![false; g.len()];
                for (k, &i) in free.iter().enumerate() {
                    mask[i] = subset >> k & 1 == 1;
                }
                p.eval_bounded(&mask)
            }
        }
    };
    let energies: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map(|subset| {
            let mut sum = KahanSum::default();
            for (k, u) in unary.iter().enumerate() {
                if subset >> k & 1 == 1 {
                    sum.add(*u);
                }
            }
            sum.add(perimeter(subset));
            sum.value()
        })
        .collect();
    let best = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let full_mask: Vec<bool> = (0..g.len()).map(|i| !g.on_boundary_layer(i)).collect();
    let scale = best.abs() + unary.iter().map(|u| u.abs()).sum::<f64>() + p.eval_bounded(&full_mask);
    let tol = TIE_RELATIVE * scale;
    let argmin: Vec<u64> = (0..1u64 << n).filter(|&b| energies[b as usize] <= best + tol).collect();
    let lo = lo_bits(&argmin, n);
    let hi = hi_bits(&argmin);
    let members: HashSet<u64> = argmin.iter().copied().collect();
    let closed = if argmin.len() <= 2048 {
        argmin.iter().all(|&a| argmin.iter().all(|&b| members.contains(&(a & b)) && members.contains(&(a | b))))
    } else {
        members.contains(&lo) && members.contains(&hi)
    };
    if !closed {
        return Err(Error::NonLattice);
    }
    let build = |subset: u64| {
        let mut mask = vec![false; g.len()];
        for (k, &i) in free.iter().enumerate() {
            mask[i] = subset >> k & 1 == 1;
        }
        BinarySet::new(g, mask, false)
    };
    let (lo, hi) = (build(lo)?, build(hi)?);
    for (subset, set) in [(lo_bits(&argmin, n), &lo), (hi_bits(&argmin), &hi)] {
        let direct = p.eval(set)?;
        if (perimeter(subset) - direct).abs() > tol {
            return Err(Error::Invariant(format!("bit-parallel perimeter {} disagrees with {direct}", perimeter(subset))));
        }
    }
    Ok((lo, hi))
}

fn lo_bits(argmin: &[u64], n: usize) -> u64 {
    argmin.iter().fold(u64::MAX, |a, &b| a & b) & ((1u64 << n) - 1)
}

fn hi_bits(argmin: &[u64]) -> u64 {
    argmin.iter().fold(0, |a, &b| a | b)
}

/// Perimeter of subsets of the free cells of a small planar grid, computed
/// with shifts and popcounts on a 128-bit image of the set padded by the
/// interaction reach.
struct BitPerimeter {
    /// Bit of each free cell.
    cell_bits: Vec<u32>,
    /// Bit shift taking the image of `E` to that of `E - offset`.
    shifts: Vec<i64>,
    terms: BitTerms,
}

enum BitTerms {
    Pairs(Vec<f64>),
    /// `coeff · #{x : B(x) meets E} - coeff · #{x : B(x) ⊂ E}`.
    Window(f64),
}

impl BitPerimeter {
    fn new(p: &GridPerimeter, free: &[usize]) -> Option<Self> {
        let g = p.geometry();
        if g.dim() != 2 {
            return None;
        }
        let (offsets, terms) = match p.pair_table() {
            Some((o, w)) => (o.to_vec(), BitTerms::Pairs(w.to_vec())),
            None => {
                let PerimeterModel::PreMinkowski { rho } = *p.model() else { return None };
                let offsets = g.ball_offsets(rho);
                // one isolated cell oscillates on exactly its own window
                let mid = g.index([g.cells_per_axis()[0] / 2, g.cells_per_axis()[1] / 2, 0]);
                let single: Vec<bool> = (0..g.len()).map(|i| i == mid).collect();
                let coeff = p.eval_bounded(&single) / offsets.len() as f64;
                (offsets, BitTerms::Window(coeff))
            }
        };
        let reach = offsets.iter().map(|o| o[0].abs().max(o[1].abs())).max().unwrap_or(0);
        let n = g.cells_per_axis();
        // free cells span [1, n - 2]; the image adds `reach` on each side
        let width = n[0] as i64 - 2 + 2 * reach;
        let height = n[1] as i64 - 2 + 2 * reach;
        if width * height > 128 {
            return None;
        }
        let cell_bits = free
            .iter()
            .map(|&i| {
                let c = g.coords(i);
                ((c[1] as i64 - 1 + reach) * width + c[0] as i64 - 1 + reach) as u32
            })
            .collect();
        let shifts = offsets.iter().map(|o| o[1] * width + o[0]).collect();
        Some(BitPerimeter { cell_bits, shifts, terms })
    }

    fn image(&self, subset: u64) -> u128 {
        self.cell_bits.iter().enumerate().filter(|(k, _)| subset >> k & 1 == 1).fold(0, |a, (_, &b)| a | 1u128 << b)
    }

    /// Bit `x` of the result is bit `x + offset` of `e`.
    fn at(e: u128, shift: i64) -> u128 {
        if shift >= 0 {
            e >> shift
        } else {
            e << -shift
        }
    }

    fn eval(&self, subset: u64) -> f64 {
        let e = self.image(subset);
        match &self.terms {
            BitTerms::Pairs(w) => {
                self.shifts.iter().zip(w).map(|(&s, w)| w * (e & !Self::at(e, s)).count_ones() as f64).sum()
            }
            BitTerms::Window(coeff) => {
                let near = self.shifts.iter().fold(0u128, |a, &s| a | Self::at(e, s));
                let deep = self.shifts.iter().fold(u128::MAX, |a, &s| a & Self::at(e, s));
                coeff * (near.count_ones() as f64 - (deep & e).count_ones() as f64)
            }
        }
    }
}

/// Fractional curvature of `B_R` at a boundary point computed directly in
/// polar coordinates around that point, with the angular measure of the ball
/// on each circle in closed form. Simpson's rule at `n` and `4n` panels is
/// Richardson-extrapolated. `radius = ∞` is the half-space.
pub fn refined_quadrature_kappa(dim: usize, radius: f64, alpha: f64, truncation: f64) -> Result<Estimate> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3, got {dim}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    if !(truncation > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation must be positive, got {truncation}")));
    }
    if radius.is_infinite() {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let a2 = 2.0 * alpha;
    let k0 = 2.0 * (1.0 - alpha);
    let d = 2.0 * radius;
    // ∫_{lo}^{hi} k0 ρ^(-1-2α) dρ
    let tail = |lo: f64, hi: f64| if hi > lo { k0 / a2 * (lo.powf(-a2) - hi.powf(-a2)) } else { 0.0 };
    let near_end = truncation.min(d);
    let value_and_error = match dim {
        1 => (2.0 * tail(d, truncation), 0.0),
        3 => {
            // sphere of radius ρ: outside minus inside area is 2πρ³/R below 2R, 4πρ² above
            let near = k0 * 2.0 * PI / radius * near_end.powf(1.0 - a2) / (1.0 - a2);
            (near + 4.0 * PI * tail(d, truncation), 0.0)
        }
        _ => {
            // circle of radius ρ = 2R sin θ: outside minus inside arc is 4θ;
            // θ = θ_max s^q removes the endpoint singularity
            let theta_max = (near_end / d).min(1.0).asin();
            let q = 1.0 / (1.0 - a2);
            let f = |s: f64| {
                if s <= 0.0 {
                    let lead = k0 * d.powf(-a2) * 4.0 * theta_max.powf(1.0 - a2) * q;
                    return lead;
                }
                let th = theta_max * s.powf(q);
                let jac = theta_max * q * s.powf(q - 1.0);
                k0 * (d * th.sin()).powf(-1.0 - a2) * 4.0 * th * d * th.cos() * jac
            };
            let coarse = simpson(f, 256);
            let fine = simpson(f, 1024);
            let extrapolated = fine + (fine - coarse) / 255.0;
            (extrapolated + 2.0 * PI * tail(d, truncation), (fine - coarse).abs())
        }
    };
    Ok(Estimate { value: value_and_error.0, error: value_and_error.1 })
}

fn simpson(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let w = 1.0 / n as f64;
    let mut s = KahanSum::default();
    for i in 0..=n {
        let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s.add(c * f(i as f64 * w));
    }
    s.value() * w / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    #[test]
    fn bit_perimeter_matches_direct_evaluation() {
        let g = GridGeometry::cube(2, 0.0, 6.0, 6).unwrap();
        let free: Vec<usize> = (0..g.len()).filter(|&i| !g.on_boundary_layer(i)).collect();
        for m in [
            PerimeterModel::Local,
            PerimeterModel::Fractional { alpha: 0.3, radius: 2.5 },
            PerimeterModel::TwoBodyKernel { sigma: 1.0, radius: 3.0 },
            PerimeterModel::PreMinkowski { rho: 1.5 },
        ] {
            let p = GridPerimeter::new(m, g).unwrap();
            let b = BitPerimeter::new(&p, &free).unwrap();
            for subset in (0..1u64 << 16).step_by(97) {
                let mask: Vec<bool> = (0..g.len()).map(|i| free.iter().position(|&f| f == i).is_some_and(|k| subset >> k & 1 == 1)).collect();
                let direct = p.eval_bounded(&mask);
                assert!((b.eval(subset) - direct).abs() <= 1e-12 * direct.max(1.0), "{m} {subset:b}");
            }
        }
        // too wide an interaction for a 128-bit image
        let p = GridPerimeter::new(PerimeterModel::Fractional { alpha: 0.25, radius: 5.0 }, g).unwrap();
        assert!(BitPerimeter::new(&p, &free).is_none());
    }
}

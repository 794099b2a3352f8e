//! Ball curvatures of the implemented perimeters, the weak difference-quotient
//! estimator, the first-variation probe and tabulated ball curvature bounds.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ball, BinarySet, GridGeometry};
use crate::perimeter::weights::{gaussian_moment, sphere_area};
use crate::perimeter::{GridPerimeter, PerimeterModel};
use crate::quad::Rule;

/// A quadrature result with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3, got {dim}")))
    }
}

pub fn kappa_local_ball(dim: usize, radius: f64) -> Result<f64> {
    check_dim(dim)?;
    positive("radius", radius)?;
    Ok((dim as f64 - 1.0) / radius)
}

/// Fractional curvature of `B_R` at a boundary point, with interactions cut
/// at `truncation` (may be infinite).
///
/// Pairing each direction with its mirror image in the tangent plane leaves
/// `(4(1-α)/2α) ∫_{hemisphere} [(2R cos θ)^(-2α) - T^(-2α)]_+ dΩ`.
pub fn kappa_fractional_ball(dim: usize, radius: f64, alpha: f64, truncation: f64) -> Result<Estimate> {
    check_dim(dim)?;
    positive("radius", radius)?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    if !(truncation > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation must be positive, got {truncation}")));
    }
    let a2 = 2.0 * alpha;
    let pre = 4.0 * (1.0 - alpha) / a2;
    let cut = truncation.powf(-a2);
    let d = 2.0 * radius;
    // u = cos θ ranges over (0, u_max]
    let u_max = (truncation / d).min(1.0);
    let est = match dim {
        1 => Estimate { value: pre * (d.powf(-a2) - cut).max(0.0), error: 0.0 },
        3 => {
            let v = 2.0 * PI * (d.powf(-a2) * u_max.powf(1.0 - a2) / (1.0 - a2) - cut * u_max);
            Estimate { value: pre * v, error: 0.0 }
        }
        _ => {
            // ψ = π/2 - θ over (0, ψ_max], ψ = ψ_max t^(1/(1-2α)) flattens ψ^(-2α)
            let psi_max = u_max.asin();
            let q = 1.0 / (1.0 - a2);
            let f = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let psi = psi_max * t.powf(q);
                let jac = psi_max * q * t.powf(q - 1.0);
                ((d * psi.sin()).powf(-a2) - cut).max(0.0) * jac
            };
            let rule = Rule::new(20);
            let coarse = 2.0 * rule.integrate(0.0, 1.0, 8, f);
            let fine = 2.0 * rule.integrate(0.0, 1.0, 16, f);
            Estimate { value: pre * fine, error: pre * (fine - coarse).abs() + 1e-14 * pre * fine.abs() }
        }
    };
    Ok(est)
}

/// Closed form of the untruncated 2-D fractional ball curvature.
pub fn kappa_fractional_disk_untruncated(radius: f64, alpha: f64) -> f64 {
    let a2 = 2.0 * alpha;
    4.0 * (1.0 - alpha) / a2
        * (2.0 * radius).powf(-a2)
        * PI.sqrt()
        * libm::tgamma(0.5 - alpha)
        / libm::tgamma(1.0 - alpha)
}

/// Curvature of `B_R` for the normalized Gaussian two-body kernel:
/// `∫ (χ_{E^c} - χ_E)(y) K(x - y) dy` at a boundary point `x`.
pub fn kappa_kernel_ball(dim: usize, radius: f64, sigma: f64, truncation: f64) -> Result<Estimate> {
    check_dim(dim)?;
    positive("radius", radius)?;
    positive("sigma", sigma)?;
    let c = 1.0 / (2.0 * sigma * sigma);
    let norm = 1.0 / ((2.0 * PI).powf((dim as f64 - 1.0) / 2.0) * sigma.powi(dim as i32 + 1));
    let d = 2.0 * radius;
    let tail_t = gaussian_moment(dim, c, truncation);
    // 2 ∫_{2R cos θ}^{T} K r^(N-1) dr
    let radial = |u: f64| 2.0 * (tail_t - gaussian_moment(dim, c, (d * u).min(truncation)));
    let rule = Rule::new(20);
    let (coarse, fine) = match dim {
        1 => (radial(1.0), radial(1.0)),
        2 => {
            let f = |t: f64| radial(t.cos());
            (rule.integrate(-PI / 2.0, PI / 2.0, 8, f), rule.integrate(-PI / 2.0, PI / 2.0, 16, f))
        }
        _ => (2.0 * PI * rule.integrate(0.0, 1.0, 8, radial), 2.0 * PI * rule.integrate(0.0, 1.0, 16, radial)),
    };
    Ok(Estimate { value: norm * fine, error: norm * (fine - coarse).abs() })
}

/// `(1/2ρ)[(1+ρ/R)^(N-1) - (1-ρ/R)^(N-1)]`, the inner term dropping for `ρ >= R`.
pub fn kappa_minkowski_ball(dim: usize, radius: f64, rho: f64) -> Result<f64> {
    check_dim(dim)?;
    positive("radius", radius)?;
    positive("rho", rho)?;
    let k = dim as i32 - 1;
    let outer = (1.0 + rho / radius).powi(k);
    let inner = if rho < radius { (1.0 - rho / radius).powi(k) } else { 0.0 };
    Ok((outer - inner) / (2.0 * rho))
}

/// Curvature of the ball `B_R` for any model, with the quadrature error.
pub fn ball_curvature(model: &PerimeterModel, dim: usize, radius: f64) -> Result<Estimate> {
    match *model {
        PerimeterModel::Local => Ok(Estimate { value: kappa_local_ball(dim, radius)?, error: 0.0 }),
        PerimeterModel::Fractional { alpha, radius: t } => kappa_fractional_ball(dim, radius, alpha, t),
        PerimeterModel::TwoBodyKernel { sigma, radius: t } => kappa_kernel_ball(dim, radius, sigma, t),
        PerimeterModel::PreMinkowski { rho } => Ok(Estimate { value: kappa_minkowski_ball(dim, radius, rho)?, error: 0.0 }),
    }
}

/// One probe radius of the weak estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quotients {
    pub radius: f64,
    /// `(J(E ∪ W) - J(E)) / |W \ E|`
    pub outer: f64,
    /// `(J(E) - J(E \ W)) / |W ∩ E|`
    pub inner: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakCurvature {
    /// Mean of the two quotients at the smallest probe radius.
    pub value: f64,
    /// `|outer - inner|` at the smallest probe radius.
    pub spread: f64,
    pub probes: Vec<Quotients>,
}

/// Difference quotients of `J` under adding or removing a small ball
/// centred on `boundary_cell`.
pub fn kappa_weak_estimate(
    perimeter: &GridPerimeter,
    set: &BinarySet,
    boundary_cell: usize,
    probe_radii: &[f64],
) -> Result<WeakCurvature> {
    let g = set.geometry();
    if g != perimeter.geometry() {
        return Err(Error::GeometryMismatch);
    }
    if probe_radii.is_empty() {
        return Err(Error::DegenerateProbe("no probe radii".into()));
    }
    let inside = set.contains(boundary_cell);
    let faces = crate::grid::face_offsets(g.dim());
    if !faces.iter().any(|o| set.contains_offset(boundary_cell, *o) != inside) {
        return Err(Error::DegenerateProbe(format!("cell {boundary_cell} does not touch both phases")));
    }
    let j = perimeter.eval(set)?;
    let center = g.center(boundary_cell);
    let mut probes = Vec::with_capacity(probe_radii.len());
    for &r in probe_radii {
        if r < 2.0 * g.cell_size() * (1.0 - 1e-9) {
            return Err(Error::DegenerateProbe(format!("probe radius {r} is below two cells")));
        }
        let w = ball(g, &center[..g.dim()], r)?;
        let up = set.union(&w)?;
        let down = set.difference(&w)?;
        let added = up.symmetric_difference_count(set);
        let removed = down.symmetric_difference_count(set);
        let plus = quotient(perimeter.eval(&up)? - j, added, g)?;
        let minus = quotient(j - perimeter.eval(&down)?, removed, g)?;
        probes.push(Quotients { radius: r, outer: plus, inner: minus });
    }
    let first = probes
        .iter()
        .min_by(|a, b| a.radius.total_cmp(&b.radius))
        .copied()
        .expect("at least one probe");
    Ok(WeakCurvature { value: 0.5 * (first.outer + first.inner), spread: (first.outer - first.inner).abs(), probes })
}

fn quotient(delta: f64, cells: usize, g: &GridGeometry) -> Result<f64> {
    if cells == 0 {
        return Err(Error::DegenerateProbe("probe ball adds or removes no cells".into()));
    }
    Ok(delta / (cells as f64 * g.cell_volume()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariation {
    /// Central differences of `ε -> J((1+ε) B_R)`, one per `ε`.
    pub differences: Vec<f64>,
    /// Mean of `differences`.
    pub slope: f64,
    /// `κ(B_R) · R · |∂B_R|`.
    pub predicted: f64,
    pub relative_gap: f64,
}

/// Finite-difference first variation of `J` along `x -> (1+ε)x` about the
/// centre of a ball, compared with the curvature integral.
pub fn first_variation_probe(
    perimeter: &GridPerimeter,
    center: &[f64],
    radius: f64,
    epsilons: &[f64],
) -> Result<FirstVariation> {
    let g = perimeter.geometry();
    let dim = g.dim();
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidArgument("epsilons must lie in (0, 1)".into()));
    }
    let differences = epsilons
        .par_iter()
        .map(|&e| -> Result<f64> {
            let up = perimeter.eval(&ball(g, center, radius * (1.0 + e))?)?;
            let down = perimeter.eval(&ball(g, center, radius * (1.0 - e))?)?;
            Ok((up - down) / (2.0 * e))
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = differences.iter().sum::<f64>() / differences.len() as f64;
    let kappa = ball_curvature(perimeter.model(), dim, radius)?.value;
    let predicted = kappa * radius * sphere_area(dim) * radius.powi(dim as i32 - 1);
    let relative_gap = (slope - predicted).abs() / predicted.abs();
    Ok(FirstVariation { differences, slope, predicted, relative_gap })
}

/// Ball curvatures `κ(B_ρ)`, `κ(R^N \ B_ρ)` and the bounds `c̄`, `c̱`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCurvatureTable {
    pub model: PerimeterModel,
    pub dim: usize,
    pub radii: Vec<f64>,
    pub kappa_ball: Vec<f64>,
    pub kappa_ball_complement: Vec<f64>,
    pub c_upper: Vec<f64>,
    pub c_lower: Vec<f64>,
    pub k_bound: f64,
}

/// Relative slack allowed when checking monotonicity of tabulated values.
const TABLE_SLACK: f64 = 1e-9;

pub fn build_ball_table(model: &PerimeterModel, dim: usize, radii: &[f64]) -> Result<BallCurvatureTable> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[0] < w[1])) || !(radii[0] > 0.0) {
        return Err(Error::InvalidArgument("table radii must be positive and strictly increasing".into()));
    }
    let kappa_ball = radii
        .par_iter()
        .map(|&r| ball_curvature(model, dim, r).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    // every model here is symmetric
    let kappa_ball_complement: Vec<f64> = kappa_ball.iter().map(|k| -k).collect();
    let c_upper: Vec<f64> = kappa_ball.iter().zip(&kappa_ball_complement).map(|(a, b)| a.max(-b)).collect();
    let c_lower: Vec<f64> = kappa_ball.iter().zip(&kappa_ball_complement).map(|(a, b)| a.min(-b)).collect();
    for (name, c) in [("c_upper", &c_upper), ("c_lower", &c_lower)] {
        if let Some(i) = (1..c.len()).find(|&i| c[i] > c[i - 1] + TABLE_SLACK * c[i - 1].abs()) {
            return Err(Error::NonMonotoneTable(format!(
                "{name} increases from {} at rho={} to {} at rho={}",
                c[i - 1],
                radii[i - 1],
                c[i],
                radii[i]
            )));
        }
    }
    let k_bound = (-c_lower.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0);
    Ok(BallCurvatureTable {
        model: *model,
        dim,
        radii: radii.to_vec(),
        kappa_ball,
        kappa_ball_complement,
        c_upper,
        c_lower,
        k_bound,
    })
}

/// `count` log-spaced radii from four cells to 40% of the domain half-width.
pub fn default_table_radii(geometry: &GridGeometry, count: usize) -> Vec<f64> {
    let lo = 4.0 * geometry.cell_size();
    let half = geometry.extent().iter().copied().fold(f64::INFINITY, f64::min) / 2.0;
    let hi = 0.4 * half;
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

impl BallCurvatureTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,kappa_ball,kappa_ball_complement,c_upper,c_lower\n");
        for i in 0..self.radii.len() {
            writeln!(
                s,
                "{},{},{},{},{}",
                self.radii[i], self.kappa_ball[i], self.kappa_ball_complement[i], self.c_upper[i], self.c_lower[i]
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

//! Exact interaction weights between pairs of grid cells for radial kernels.
//!
//! For cells `C_0` and `C_k` the weight is `∫_{C_0}∫_{C_k} K(x - y) 1{|x - y| <= T}`.
//! In cell units this is the kernel integrated against the tent `Λ(s - k)`.
//! On each orthant of the tent the integrand is a polynomial times `K`, and
//! the box integral becomes a sum over box faces of `(n·y) |y|^-N Φ(y)`,
//! where `Φ` integrates along the ray from the origin in closed form. Faces
//! through the origin drop out, which removes the kernel singularity.

use std::f64::consts::PI;

use crate::quad::Rule;

const FACE_ORDER: usize = 12;
/// Panels per face axis where the truncation sphere cuts the face.
const STRADDLE_PANELS: [usize; 4] = [1, 1, 8, 3];

#[derive(Debug, Clone, Copy)]
pub(crate) enum Radial {
    /// `ρ^-p`, with `N < p < N + 1`.
    Power { p: f64 },
    /// `exp(-c ρ²)`.
    Gaussian { c: f64 },
}

impl Radial {
    /// `∫ ρ^(n-1) K(ρ) dρ` up to `l`. The constant is chosen so the value
    /// vanishes at 0 whenever the integral converges there.
    fn moment(&self, n: usize, l: f64) -> f64 {
        match *self {
            Radial::Power { p } => {
                let e = n as f64 - p;
                l.powf(e) / e
            }
            Radial::Gaussian { c } => gaussian_moment(n, c, l),
        }
    }
}

pub(crate) fn gaussian_moment(n: usize, c: f64, l: f64) -> f64 {
    let e = (-c * l * l).exp();
    let (mut g, mut m) = if n % 2 == 1 {
        (0.5 * (PI / c).sqrt() * libm::erf(c.sqrt() * l), 1)
    } else {
        ((1.0 - e) / (2.0 * c), 2)
    };
    while m < n {
        g = (m as f64 * g - l.powi(m as i32) * e) / (2.0 * c);
        m += 2;
    }
    g
}

/// `∫ K(|s|) 1{|s| <= trunc} Λ(s - k) ds` in cell units.
pub(crate) fn tent_integral(dim: usize, kernel: Radial, k: [i64; 3], trunc: f64, rule: &Rule) -> f64 {
    let mut total = 0.0;
    for orthant in 0..(1usize << dim) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        // tent factor on this orthant: a + b * s
        let mut a = [1.0; 3];
        let mut b = [0.0; 3];
        for ax in 0..dim {
            let kf = k[ax] as f64;
            if orthant >> ax & 1 == 0 {
                (lo[ax], hi[ax], a[ax], b[ax]) = (kf, kf + 1.0, 1.0 + kf, -1.0);
            } else {
                (lo[ax], hi[ax], a[ax], b[ax]) = (kf - 1.0, kf, 1.0 - kf, 1.0);
            }
        }
        if nearest_norm(dim, &lo, &hi, None) >= trunc {
            continue;
        }
        for ax in 0..dim {
            for (v, sign) in [(lo[ax], -1.0), (hi[ax], 1.0)] {
                if v == 0.0 {
                    continue;
                }
                total += face(dim, kernel, ax, v, sign * v, &lo, &hi, &a, &b, trunc, rule);
            }
        }
    }
    total
}

fn nearest_norm(dim: usize, lo: &[f64; 3], hi: &[f64; 3], skip: Option<usize>) -> f64 {
    (0..dim)
        .filter(|&a| Some(a) != skip)
        .map(|a| (0f64).clamp(lo[a], hi[a]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn farthest_norm(dim: usize, lo: &[f64; 3], hi: &[f64; 3], skip: usize) -> f64 {
    (0..dim)
        .filter(|&a| a != skip)
        .map(|a| lo[a].abs().max(hi[a].abs()).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[allow(clippy::too_many_arguments)]
fn face(
    dim: usize,
    kernel: Radial,
    axis: usize,
    v: f64,
    h: f64,
    lo: &[f64; 3],
    hi: &[f64; 3],
    a: &[f64; 3],
    b: &[f64; 3],
    trunc: f64,
    rule: &Rule,
) -> f64 {
    let near = (v * v + nearest_norm(dim, lo, hi, Some(axis)).powi(2)).sqrt();
    let far = (v * v + farthest_norm(dim, lo, hi, axis).powi(2)).sqrt();
    let panels = if near < trunc && trunc < far { STRADDLE_PANELS[dim] } else { 1 };

    let others: Vec<usize> = (0..dim).filter(|&x| x != axis).collect();
    let pts: Vec<Vec<(f64, f64)>> = others.iter().map(|&o| rule.points(lo[o], hi[o], panels)).collect();

    let eval = |y: [f64; 3]| -> f64 {
        let r = (0..dim).map(|x| y[x] * y[x]).sum::<f64>().sqrt();
        // coefficients of prod_ax (a + b * yhat * ρ) in ρ
        let mut c = [0.0; 4];
        c[0] = 1.0;
        for ax in 0..dim {
            let (p, q) = (a[ax], b[ax] * y[ax] / r);
            for m in (0..=ax + 1).rev() {
                c[m] = p * c[m] + if m > 0 { q * c[m - 1] } else { 0.0 };
            }
        }
        let l = r.min(trunc);
        let phi: f64 = (0..=dim).filter(|&m| c[m] != 0.0).map(|m| c[m] * kernel.moment(dim + m, l)).sum();
        h / r.powi(dim as i32) * phi
    };

    let mut y = [0.0; 3];
    y[axis] = v;
    match others.len() {
        0 => eval(y),
        1 => pts[0]
            .iter()
            .map(|&(t, w)| {
                y[others[0]] = t;
                w * eval(y)
            })
            .sum(),
        _ => {
            let mut s = 0.0;
            for &(t0, w0) in &pts[0] {
                y[others[0]] = t0;
                for &(t1, w1) in &pts[1] {
                    y[others[1]] = t1;
                    s += w0 * w1 * eval(y);
                }
            }
            s
        }
    }
}

/// Offsets `k != 0` whose tent support comes within `trunc` of the origin,
/// sorted lexicographically, paired with their weights in cell units.
pub(crate) fn kernel_table(dim: usize, kernel: Radial, trunc: f64) -> Vec<([i64; 3], f64)> {
    use rayon::prelude::*;
    let m = (trunc + 1.0).ceil() as i64;
    let span = |a: usize| if a < dim { -m..=m } else { 0..=0 };
    let mut ks = Vec::new();
    for k2 in span(2) {
        for k1 in span(1) {
            for k0 in span(0) {
                let k = [k0, k1, k2];
                if k == [0, 0, 0] {
                    continue;
                }
                let d2: f64 = (0..dim).map(|a| ((k[a].abs() - 1).max(0) as f64).powi(2)).sum();
                if d2.sqrt() < trunc {
                    ks.push(k);
                }
            }
        }
    }
    ks.sort();
    // one quadrature per orbit of the cube's symmetry group
    let canon = |k: &[i64; 3]| {
        let mut c = [k[0].abs(), k[1].abs(), k[2].abs()];
        c[..dim].sort();
        c
    };
    let mut reps: Vec<[i64; 3]> = ks.iter().map(canon).collect();
    reps.sort();
    reps.dedup();
    let rule = Rule::new(FACE_ORDER);
    let values: Vec<f64> = reps.par_iter().map(|k| tent_integral(dim, kernel, *k, trunc, &rule)).collect();
    ks.into_iter()
        .map(|k| (k, values[reps.binary_search(&canon(&k)).unwrap()]))
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Volume of the unit ball in `n` dimensions, `n <= 3`.
#[cfg(test)]
fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        _ => 4.0 * PI / 3.0,
    }
}

/// Area of the unit sphere in `R^n`, `n <= 3`.
pub(crate) fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

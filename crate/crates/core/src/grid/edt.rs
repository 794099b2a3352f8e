//! Exact separable distance transforms on the cell lattice.
//!
//! Both transforms minimise `sum_a g(x_a - c_a)` over seed cells `c`, which
//! splits into one 1-D min-convolution per axis. Results are squared
//! distances in cell units; cells with no seed anywhere get `+inf`.

use super::GridGeometry;

/// Squared distance from each cell centre to the nearest seed cell centre.
pub fn squared_center_distance(geometry: &GridGeometry, seeds: &[bool]) -> Vec<f64> {
    separable(geometry, seeds, |k| (k * k) as f64)
}

/// Squared distance from each cell centre to the nearest closed seed cell.
pub fn squared_face_distance(geometry: &GridGeometry, seeds: &[bool]) -> Vec<f64> {
    separable(geometry, seeds, |k| {
        if k == 0 {
            0.0
        } else {
            let t = k.unsigned_abs() as f64 - 0.5;
            t * t
        }
    })
}

fn separable(geometry: &GridGeometry, seeds: &[bool], cost: impl Fn(i64) -> f64 + Copy) -> Vec<f64> {
    debug_assert_eq!(seeds.len(), geometry.len());
    let dims = geometry.dims3();
    let mut f: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for axis in 0..geometry.dim() {
        let n = dims[axis];
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        for start in line_starts(dims, axis) {
            line.clear();
            line.extend((0..n).map(|t| f[start + t * stride]));
            if axis == 0 {
                first_pass(&line, &mut out, cost);
            } else {
                min_convolve(&line, &mut out, cost);
            }
            for (t, v) in out.iter().enumerate() {
                f[start + t * stride] = *v;
            }
        }
    }
    f
}

fn line_starts(dims: [usize; 3], axis: usize) -> Vec<usize> {
    let [n0, n1, n2] = dims;
    let mut starts = Vec::new();
    for k in 0..n2 {
        for j in 0..n1 {
            for i in 0..n0 {
                let c = [i, j, k];
                if c[axis] == 0 {
                    starts.push(i + n0 * (j + n1 * k));
                }
            }
        }
    }
    starts
}

/// Seed indicator along a line: nearest seed to the left and right.
fn first_pass(line: &[f64], out: &mut Vec<f64>, cost: impl Fn(i64) -> f64) {
    let n = line.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let mut last: Option<usize> = None;
    for t in 0..n {
        if line[t] == 0.0 {
            last = Some(t);
        }
        if let Some(s) = last {
            out[t] = cost((t - s) as i64);
        }
    }
    last = None;
    for t in (0..n).rev() {
        if line[t] == 0.0 {
            last = Some(t);
        }
        if let Some(s) = last {
            out[t] = out[t].min(cost((s - t) as i64));
        }
    }
}

/// `out[x] = min_c line[c] + cost(x - c)`, scanning outward from `x` and
/// stopping once `cost` alone exceeds the best value (cost grows with |k|).
fn min_convolve(line: &[f64], out: &mut Vec<f64>, cost: impl Fn(i64) -> f64) {
    let n = line.len() as i64;
    out.clear();
    out.reserve(line.len());
    for x in 0..n {
        let mut best = line[x as usize];
        let mut k = 1;
        while k < n {
            let ck = cost(k);
            if ck >= best {
                break;
            }
            if x - k >= 0 {
                best = best.min(line[(x - k) as usize] + ck);
            }
            if x + k < n {
                best = best.min(line[(x + k) as usize] + ck);
            }
            k += 1;
        }
        out.push(best);
    }
}

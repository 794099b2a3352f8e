//! Uniform Cartesian grids, cell-indicator sets, scalar fields and the
//! morphology / distance machinery shared by the rest of the crate.
//!
//! A set is a union of closed cells. Cells are addressed by a flat index
//! `i0 + n0 * (i1 + n1 * i2)`; axes beyond `dim` have extent one.

mod edt;
pub mod io;

pub use edt::{squared_center_distance, squared_face_distance};

use crate::error::{Error, Result};

/// Relative slack used when comparing offset norms with a radius.
pub(crate) const RADIUS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    dim: usize,
    origin: [f64; 3],
    cells: [usize; 3],
    cell_size: f64,
}

impl GridGeometry {
    /// Builds a grid from its lower corner, edge lengths and cell counts.
    /// The cell size must come out identical on every axis.
    pub fn new(origin: &[f64], extent: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = origin.len();
        if !(1..=3).contains(&dim) || extent.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGeometry(format!(
                "origin/extent/cells must share a dimension in 1..=3 (got {}, {}, {})",
                origin.len(),
                extent.len(),
                cells.len()
            )));
        }
        if let Some(n) = cells.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGeometry(format!("at least 3 cells per axis required, got {n}")));
        }
        if origin.iter().chain(extent).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite origin or extent".into()));
        }
        let cell_size = extent[0] / cells[0] as f64;
        if cell_size <= 0.0 {
            return Err(Error::InvalidGeometry("extent must be positive".into()));
        }
        for a in 1..dim {
            let h = extent[a] / cells[a] as f64;
            if (h - cell_size).abs() > 1e-9 * cell_size {
                return Err(Error::InvalidGeometry(format!(
                    "non-uniform cell size: axis 0 has {cell_size}, axis {a} has {h}"
                )));
            }
        }
        let mut o = [0.0; 3];
        let mut c = [1usize; 3];
        o[..dim].copy_from_slice(origin);
        c[..dim].copy_from_slice(cells);
        Ok(Self { dim, origin: o, cells: c, cell_size })
    }

    /// The box `[lower, upper]^dim` split into `n` cells per axis.
    pub fn cube(dim: usize, lower: f64, upper: f64, n: usize) -> Result<Self> {
        let origin = vec![lower; dim];
        let extent = vec![upper - lower; dim];
        Self::new(&origin, &extent, &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn extent(&self) -> Vec<f64> {
        self.cells_per_axis().iter().map(|&n| n as f64 * self.cell_size).collect()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_size.powi(self.dim as i32)
    }

    /// Measure of one cell face, `cell_size^(dim-1)`.
    pub fn face_measure(&self) -> f64 {
        self.cell_size.powi(self.dim as i32 - 1)
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn diameter(&self) -> f64 {
        self.extent().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    #[inline]
    pub(crate) fn dims3(&self) -> [usize; 3] {
        self.cells
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [n0, n1, _] = self.cells;
        [index % n0, (index / n0) % n1, index / (n0 * n1)]
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    /// Index of the cell `index + offset`, or `None` if it leaves the grid.
    #[inline]
    pub fn offset_index(&self, index: usize, offset: [i64; 3]) -> Option<usize> {
        let c = self.coords(index);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + offset[a];
            if v < 0 || v >= self.cells[a] as i64 {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out))
    }

    pub fn center(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.cell_size;
        }
        x
    }

    /// Cell containing `point`, if any.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..self.dim {
            let t = ((point[a] - self.origin[a]) / self.cell_size).floor();
            if t < 0.0 || t >= self.cells[a] as f64 {
                return None;
            }
            c[a] = t as usize;
        }
        Some(self.index(c))
    }

    /// True for cells in the outermost layer of the box.
    #[inline]
    pub fn on_boundary_layer(&self, index: usize) -> bool {
        let c = self.coords(index);
        (0..self.dim).any(|a| c[a] == 0 || c[a] + 1 == self.cells[a])
    }

    /// Integer cell offsets `k` with `|k| * cell_size <= radius`, sorted
    /// lexicographically.
    pub fn ball_offsets(&self, radius: f64) -> Vec<[i64; 3]> {
        ball_offsets(self.dim, radius / self.cell_size)
    }
}

/// Integer offsets of Euclidean norm at most `radius_cells`.
pub(crate) fn ball_offsets(dim: usize, radius_cells: f64) -> Vec<[i64; 3]> {
    let r2 = radius_cells * radius_cells * (1.0 + RADIUS_SLACK);
    let m = radius_cells.floor() as i64;
    let span = |a: usize| if a < dim { -m..=m } else { 0..=0 };
    let mut out = Vec::new();
    for k2 in span(2) {
        for k1 in span(1) {
            for k0 in span(0) {
                if ((k0 * k0 + k1 * k1 + k2 * k2) as f64) <= r2 {
                    out.push([k0, k1, k2]);
                }
            }
        }
    }
    out.sort();
    out
}

/// A measurable set discretized as a union of closed cells.
///
/// When `complement_is_bounded` is false the set is bounded and must avoid
/// the outer cell layer; when true, the grid exterior belongs to the set and
/// the complement must avoid the outer layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySet {
    geometry: GridGeometry,
    mask: Vec<bool>,
    complement_is_bounded: bool,
}

impl BinarySet {
    pub fn new(geometry: GridGeometry, mask: Vec<bool>, complement_is_bounded: bool) -> Result<Self> {
        if mask.len() != geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} cells, grid has {}",
                mask.len(),
                geometry.len()
            )));
        }
        let set = Self { geometry, mask, complement_is_bounded };
        set.check_boundary_layer()?;
        Ok(set)
    }

    pub(crate) fn from_parts(geometry: GridGeometry, mask: Vec<bool>, complement_is_bounded: bool) -> Self {
        debug_assert_eq!(mask.len(), geometry.len());
        Self { geometry, mask, complement_is_bounded }
    }

    fn check_boundary_layer(&self) -> Result<()> {
        let g = &self.geometry;
        let exterior = self.complement_is_bounded;
        if let Some(i) = (0..g.len()).find(|&i| g.on_boundary_layer(i) && self.mask[i] != exterior) {
            return Err(Error::DomainOverflow(format!(
                "cell {:?} of the outer layer has the wrong phase for a {} set",
                &g.coords(i)[..g.dim()],
                if exterior { "co-bounded" } else { "bounded" }
            )));
        }
        Ok(())
    }

    pub fn empty(geometry: GridGeometry) -> Self {
        Self::from_parts(geometry, vec![false; geometry.len()], false)
    }

    /// The whole space.
    pub fn full(geometry: GridGeometry) -> Self {
        Self::from_parts(geometry, vec![true; geometry.len()], true)
    }

    pub fn from_fn(
        geometry: GridGeometry,
        complement_is_bounded: bool,
        f: impl Fn([f64; 3]) -> bool,
    ) -> Result<Self> {
        let mask = (0..geometry.len()).map(|i| f(geometry.center(i))).collect();
        Self::new(geometry, mask, complement_is_bounded)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn complement_is_bounded(&self) -> bool {
        self.complement_is_bounded
    }

    pub fn is_bounded(&self) -> bool {
        !self.complement_is_bounded
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.mask[index]
    }

    /// Membership of an arbitrary (possibly exterior) cell.
    #[inline]
    pub fn contains_offset(&self, index: usize, offset: [i64; 3]) -> bool {
        match self.geometry.offset_index(index, offset) {
            Some(j) => self.mask[j],
            None => self.complement_is_bounded,
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Lebesgue measure of a bounded set, or of the complement for a
    /// co-bounded one.
    pub fn volume(&self) -> f64 {
        let n = if self.complement_is_bounded { self.mask.len() - self.count() } else { self.count() };
        n as f64 * self.geometry.cell_volume()
    }

    pub fn is_empty(&self) -> bool {
        !self.complement_is_bounded && !self.mask.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.complement_is_bounded && self.mask.iter().all(|&b| b)
    }

    pub fn complement(&self) -> Self {
        Self::from_parts(self.geometry, self.mask.iter().map(|b| !b).collect(), !self.complement_is_bounded)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(Error::GeometryMismatch);
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect();
        Ok(Self::from_parts(self.geometry, mask, self.complement_is_bounded || other.complement_is_bounded))
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.same_grid(other)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        Ok(Self::from_parts(self.geometry, mask, self.complement_is_bounded && other.complement_is_bounded))
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.intersection(&other.complement())
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        if self.geometry != other.geometry || (self.complement_is_bounded && !other.complement_is_bounded) {
            return false;
        }
        self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }

    /// Number of cells in the symmetric difference.
    pub fn symmetric_difference_count(&self, other: &Self) -> usize {
        self.mask.iter().zip(&other.mask).filter(|(a, b)| a != b).count()
    }

    /// Cells of the set adjacent (face-wise) to a cell of the complement.
    pub fn inner_boundary(&self) -> Vec<usize> {
        let g = &self.geometry;
        (0..g.len())
            .filter(|&i| self.mask[i])
            .filter(|&i| face_offsets(g.dim()).iter().any(|&o| !self.contains_offset(i, o)))
            .collect()
    }

    /// Number of face-connected components of the set cells.
    pub fn components(&self) -> usize {
        let g = &self.geometry;
        let mut seen = vec![false; g.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..g.len() {
            if !self.mask[s] || seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(i) = stack.pop() {
                for &o in face_offsets(g.dim()).iter() {
                    if let Some(j) = g.offset_index(i, o) {
                        if self.mask[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }
}

/// The `2 * dim` face-neighbour offsets.
pub(crate) fn face_offsets(dim: usize) -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(2 * dim);
    for a in 0..dim {
        for s in [-1, 1] {
            let mut o = [0; 3];
            o[a] = s;
            out.push(o);
        }
    }
    out
}

/// Real-valued grid function, constant (`outside_value`) beyond the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    geometry: GridGeometry,
    values: Vec<f64>,
    outside_value: f64,
}

impl ScalarField {
    /// Validating constructor: the outer cell layer must equal `outside_value`.
    pub fn new(geometry: GridGeometry, values: Vec<f64>, outside_value: f64) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {}",
                values.len(),
                geometry.len()
            )));
        }
        if let Some(i) = (0..geometry.len()).find(|&i| geometry.on_boundary_layer(i) && values[i] != outside_value) {
            return Err(Error::DomainOverflow(format!(
                "outer-layer value {} at {:?} differs from outside value {outside_value}",
                values[i],
                &geometry.coords(i)[..geometry.dim()]
            )));
        }
        Ok(Self { geometry, values, outside_value })
    }

    /// Field whose outer layer is not required to be constant (distance
    /// functions). `outside_value` then only records the far-field sign.
    pub(crate) fn from_parts(geometry: GridGeometry, values: Vec<f64>, outside_value: f64) -> Self {
        Self { geometry, values, outside_value }
    }

    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        Self::from_parts(geometry, vec![value; geometry.len()], value)
    }

    /// `inside` on the set, `outside` elsewhere.
    pub fn indicator(set: &BinarySet, inside: f64, outside: f64) -> Self {
        let values = set.mask().iter().map(|&b| if b { inside } else { outside }).collect();
        let far = if set.complement_is_bounded() { inside } else { outside };
        Self::from_parts(*set.geometry(), values, far)
    }

    pub fn from_fn(geometry: GridGeometry, outside_value: f64, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..geometry.len()).map(|i| f(geometry.center(i))).collect();
        Self::new(geometry, values, outside_value)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn outside_value(&self) -> f64 {
        self.outside_value
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(self.outside_value, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(self.outside_value, f64::max)
    }

    /// The open superlevel set `{u > level}`.
    pub fn superlevel(&self, level: f64) -> Result<BinarySet> {
        let mask = self.values.iter().map(|&v| v > level).collect();
        BinarySet::new(self.geometry, mask, self.outside_value > level)
    }

    /// Sup-norm distance to another field on the same grid.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        if self.geometry != other.geometry {
            return Err(Error::GeometryMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold((self.outside_value - other.outside_value).abs(), f64::max))
    }

    /// Average over the `3^N` block of neighbours, with the exterior at
    /// `outside_value`. Blocks of equal values keep that value exactly.
    pub fn box_filter(&self) -> Result<Self> {
        let g = &self.geometry;
        let offs: Vec<[i64; 3]> = ball_offsets(g.dim(), (g.dim() as f64).sqrt());
        let values = (0..g.len())
            .map(|i| {
                let vals: Vec<f64> = offs
                    .iter()
                    .map(|o| g.offset_index(i, *o).map_or(self.outside_value, |j| self.values[j]))
                    .collect();
                if vals.iter().all(|&v| v == vals[0]) {
                    vals[0]
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect();
        Self::new(*g, values, self.outside_value)
    }

    /// Largest `|u(c) - u(c')| / |c - c'|` over face and diagonal neighbours.
    pub fn lipschitz_constant(&self) -> f64 {
        let g = &self.geometry;
        let offs: Vec<[i64; 3]> = ball_offsets(g.dim(), (g.dim() as f64).sqrt())
            .into_iter()
            .filter(|o| *o != [0, 0, 0])
            .collect();
        let mut best: f64 = 0.0;
        for i in 0..g.len() {
            for o in &offs {
                if let Some(j) = g.offset_index(i, *o) {
                    let dist = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt() * g.cell_size();
                    best = best.max((self.values[i] - self.values[j]).abs() / dist);
                }
            }
        }
        best
    }
}

/// Cells whose centre lies within `radius` of `center`.
pub fn ball(geometry: &GridGeometry, center: &[f64], radius: f64) -> Result<BinarySet> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
    }
    if center.len() != geometry.dim() {
        return Err(Error::InvalidArgument("ball center has the wrong dimension".into()));
    }
    let r2 = radius * radius;
    let mask = (0..geometry.len())
        .map(|i| {
            let x = geometry.center(i);
            let d2: f64 = (0..geometry.dim()).map(|a| (x[a] - center[a]).powi(2)).sum();
            d2 <= r2
        })
        .collect();
    BinarySet::new(*geometry, mask, false)
        .map_err(|_| Error::DomainOverflow(format!("ball of radius {radius} at {center:?} does not fit in the box")))
}

/// `dist(x, E) - dist(x, R^N \ E)` at cell centres, each distance measured to
/// the nearest cell centre of the other phase.
pub fn signed_distance(set: &BinarySet) -> Result<ScalarField> {
    signed_field(set, squared_center_distance)
}

/// Signed distance from each cell centre to the boundary of the union of
/// closed cells; boundary cells sit at half a cell from the interface.
pub fn interface_distance(set: &BinarySet) -> Result<ScalarField> {
    signed_field(set, squared_face_distance)
}

fn signed_field(set: &BinarySet, sq: fn(&GridGeometry, &[bool]) -> Vec<f64>) -> Result<ScalarField> {
    if set.is_empty() || set.mask().iter().all(|&b| !b) {
        return Err(Error::EmptySet);
    }
    if set.is_full() || set.mask().iter().all(|&b| b) {
        return Err(Error::FullSet);
    }
    let g = set.geometry();
    let to_set = sq(g, set.mask());
    let outside: Vec<bool> = set.mask().iter().map(|b| !b).collect();
    let to_complement = sq(g, &outside);
    let h = g.cell_size();
    let values = to_set
        .iter()
        .zip(&to_complement)
        .map(|(a, b)| (a.sqrt() - b.sqrt()) * h)
        .collect();
    let far = if set.complement_is_bounded() { f64::NEG_INFINITY } else { f64::INFINITY };
    Ok(ScalarField::from_parts(*g, values, far))
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("morphology radius must be finite and >= 0, got {radius}")));
    }
    Ok(())
}

/// Minkowski sum with the discrete ball of the given radius.
pub fn dilate(set: &BinarySet, radius: f64) -> Result<BinarySet> {
    check_radius(radius)?;
    let g = set.geometry();
    if radius < g.cell_size() || set.mask().iter().all(|&b| !b) {
        return Ok(set.clone());
    }
    let d2 = squared_center_distance(g, set.mask());
    let r = radius / g.cell_size();
    let limit = r * r * (1.0 + RADIUS_SLACK);
    let mask = d2.iter().map(|&v| v <= limit).collect();
    BinarySet::new(*g, mask, set.complement_is_bounded())
        .map_err(|_| Error::DomainOverflow(format!("dilation by {radius} leaves the box")))
}

/// `complement(dilate(complement(E), radius))`.
pub fn erode(set: &BinarySet, radius: f64) -> Result<BinarySet> {
    Ok(dilate(&set.complement(), radius)?.complement())
}

/// Shift by whole cells.
pub fn translate(set: &BinarySet, offset: &[i64]) -> Result<BinarySet> {
    let g = set.geometry();
    if offset.len() != g.dim() {
        return Err(Error::InvalidArgument("offset has the wrong dimension".into()));
    }
    let mut o = [0i64; 3];
    for a in 0..g.dim() {
        o[a] = -offset[a];
    }
    let exterior = set.complement_is_bounded();
    // cells that leave the grid must carry the exterior phase
    let lost = (0..g.len()).any(|i| {
        set.contains(i) != exterior && g.offset_index(i, [-o[0], -o[1], -o[2]]).is_none()
    });
    if lost {
        return Err(Error::DomainOverflow(format!("translation by {offset:?} pushes the set out of the box")));
    }
    let mask = (0..g.len()).map(|i| set.contains_offset(i, o)).collect();
    BinarySet::new(*g, mask, exterior)
        .map_err(|_| Error::DomainOverflow(format!("translation by {offset:?} reaches the outer layer")))
}

/// Hausdorff distance between two sets, measured between cell centres.
pub fn hausdorff_distance(a: &BinarySet, b: &BinarySet) -> Result<f64> {
    if a.geometry() != b.geometry() {
        return Err(Error::GeometryMismatch);
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    if a.complement_is_bounded() != b.complement_is_bounded() {
        return Ok(f64::INFINITY);
    }
    let g = a.geometry();
    let directed = |from: &BinarySet, to: &BinarySet| -> f64 {
        let d2 = squared_center_distance(g, to.mask());
        (0..g.len()).filter(|&i| from.contains(i)).map(|i| d2[i]).fold(0.0, f64::max).sqrt()
    };
    Ok(directed(a, b).max(directed(b, a)) * g.cell_size())
}

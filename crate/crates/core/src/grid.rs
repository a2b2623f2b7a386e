//! Gnomonic equiangular cube-sphere geometry.
//!
//! Faces 0..3 are equatorial with outward axes +X (lon 0°), +Y (lon 90°),
//! -X (lon 180°) and -Y (lon 270°); face 4 is +Z (north) and face 5 is -Z
//! (south). A point on face `f` with local equiangular angles `(alpha, beta)`
//! is the normalized vector `normal + tan(beta) * east + tan(alpha) * north`,
//! where `alpha` follows the row index and `beta` the column index:
//!
//! | face | normal | east (col+) | north (row+) |
//! |------|--------|-------------|--------------|
//! | 0    | +X     | +Y          | +Z           |
//! | 1    | +Y     | -X          | +Z           |
//! | 2    | -X     | -Y          | +Z           |
//! | 3    | -Y     | +X          | +Z           |
//! | 4    | +Z     | +Y          | -X           |
//! | 5    | -Z     | +Y          | +X           |
//!
//! On the equatorial faces rows increase northward and columns eastward. On
//! the polar faces the column axis is +Y so that face 0's top row continues
//! into face 4's row 0 and face 0's bottom row into face 5's last row.

use std::f64::consts::FRAC_PI_4;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;

pub type Vec3 = [f64; 3];

const FACE_AXES: [[Vec3; 3]; 6] = [
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
    [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]],
    [[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
];

/// Targets closer than this (radians) to a source point snap onto it.
pub const COINCIDENT_RAD: f64 = 1e-12;

/// Default neighbor count for k-NN regridding.
pub const DEFAULT_K: usize = 4;

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn normalize(v: Vec3) -> Vec3 {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Great-circle angle between two unit vectors, accurate for tiny angles.
#[inline]
pub fn angular_distance(a: Vec3, b: Vec3) -> f64 {
    let c = cross(a, b);
    dot(c, c).sqrt().atan2(dot(a, b))
}

/// Cube-sphere resolution: `N` cells along each face edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct GridSpec {
    resolution: usize,
}

impl GridSpec {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid(format!(
                "grid resolution must be >= 2, got {resolution}"
            )));
        }
        Ok(GridSpec { resolution })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_count(&self) -> usize {
        6 * self.resolution * self.resolution
    }

    /// Angular width of one cell in radians.
    pub fn cell_angle(&self) -> f64 {
        2.0 * FRAC_PI_4 / self.resolution as f64
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        c.face < 6 && c.row < self.resolution && c.col < self.resolution
    }

    pub fn index_of(&self, c: CellCoord) -> Result<usize> {
        if !self.contains(c) {
            return Err(Error::invalid(format!("{c} is outside grid N={}", self.resolution)));
        }
        Ok(self.index_unchecked(c))
    }

    #[inline]
    fn index_unchecked(&self, c: CellCoord) -> usize {
        (c.face * self.resolution + c.row) * self.resolution + c.col
    }

    pub fn coord_of(&self, index: usize) -> CellCoord {
        let n = self.resolution;
        CellCoord {
            face: index / (n * n),
            row: (index / n) % n,
            col: index % n,
        }
    }

    /// All cells in storage order.
    pub fn cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (0..self.cell_count()).map(move |i| self.coord_of(i))
    }

    fn local_angle(&self, index: usize) -> f64 {
        -FRAC_PI_4 + (index as f64 + 0.5) * self.cell_angle()
    }

    fn face_point(face: usize, alpha: f64, beta: f64) -> Vec3 {
        let [n, e, u] = FACE_AXES[face];
        let (ta, tb) = (alpha.tan(), beta.tan());
        normalize([
            n[0] + tb * e[0] + ta * u[0],
            n[1] + tb * e[1] + ta * u[1],
            n[2] + tb * e[2] + ta * u[2],
        ])
    }

    /// Unit vector of a cell center.
    pub fn center_vec(&self, c: CellCoord) -> Result<Vec3> {
        if !self.contains(c) {
            return Err(Error::invalid(format!("{c} is outside grid N={}", self.resolution)));
        }
        Ok(Self::face_point(
            c.face,
            self.local_angle(c.row),
            self.local_angle(c.col),
        ))
    }

    /// Unit vectors of all cell centers in storage order.
    pub fn center_vecs(&self) -> Vec<Vec3> {
        self.cells()
            .map(|c| Self::face_point(c.face, self.local_angle(c.row), self.local_angle(c.col)))
            .collect()
    }

    /// Cell containing the direction `v` (need not be normalized).
    pub fn locate_vec(&self, v: Vec3) -> CellCoord {
        let mut face = 0;
        let mut best = f64::NEG_INFINITY;
        for (f, axes) in FACE_AXES.iter().enumerate() {
            let d = dot(v, axes[0]);
            if d > best {
                best = d;
                face = f;
            }
        }
        let [_, e, u] = FACE_AXES[face];
        let beta = (dot(v, e) / best).atan();
        let alpha = (dot(v, u) / best).atan();
        CellCoord {
            face,
            row: self.angle_index(alpha),
            col: self.angle_index(beta),
        }
    }

    fn angle_index(&self, angle: f64) -> usize {
        let i = ((angle + FRAC_PI_4) / self.cell_angle()).floor();
        (i.max(0.0) as usize).min(self.resolution - 1)
    }
}

impl TryFrom<usize> for GridSpec {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        GridSpec::new(n)
    }
}

impl From<GridSpec> for usize {
    fn from(g: GridSpec) -> usize {
        g.resolution
    }
}

/// A cell address: face 0..5, then row and column within the face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoord {
    pub face: usize,
    pub row: usize,
    pub col: usize,
}

impl CellCoord {
    pub fn new(face: usize, row: usize, col: usize) -> Self {
        CellCoord { face, row, col }
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell(face {}, row {}, col {})", self.face, self.row, self.col)
    }
}

/// Geographic position in degrees; longitude is kept in [0, 360).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("invalid position lat={lat} lon={lon}")));
        }
        Ok(LatLon {
            lat,
            lon: wrap_longitude(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn to_vec(&self) -> Vec3 {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    pub fn from_vec(v: Vec3) -> Self {
        let v = normalize(v);
        LatLon {
            lat: v[2].clamp(-1.0, 1.0).asin().to_degrees(),
            lon: wrap_longitude(v[1].atan2(v[0]).to_degrees()),
        }
    }
}

fn wrap_longitude(lon: f64) -> f64 {
    let w = lon.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

pub fn cell_center(grid: GridSpec, c: CellCoord) -> Result<LatLon> {
    grid.center_vec(c).map(LatLon::from_vec)
}

pub fn locate_cell(grid: GridSpec, p: LatLon) -> CellCoord {
    grid.locate_vec(p.to_vec())
}

/// The four edge-adjacent cells in the order north, south, east, west
/// (in the cell's local row/column frame).
pub fn face_neighbors(grid: GridSpec, c: CellCoord) -> Result<[CellCoord; 4]> {
    if !grid.contains(c) {
        return Err(Error::invalid(format!("{c} is outside grid N={}", grid.resolution)));
    }
    let n = grid.resolution;
    // Just across the edge; small against the half-cell margin to the
    // neighbor's column boundaries.
    let past = FRAC_PI_4 + grid.cell_angle() * 1e-3;
    let alpha = grid.local_angle(c.row);
    let beta = grid.local_angle(c.col);
    let across = |alpha: f64, beta: f64| grid.locate_vec(GridSpec::face_point(c.face, alpha, beta));

    let north = if c.row + 1 < n {
        CellCoord::new(c.face, c.row + 1, c.col)
    } else {
        across(past, beta)
    };
    let south = if c.row > 0 {
        CellCoord::new(c.face, c.row - 1, c.col)
    } else {
        across(-past, beta)
    };
    let east = if c.col + 1 < n {
        CellCoord::new(c.face, c.row, c.col + 1)
    } else {
        across(alpha, past)
    };
    let west = if c.col > 0 {
        CellCoord::new(c.face, c.row, c.col - 1)
    } else {
        across(alpha, -past)
    };
    Ok([north, south, east, west])
}

/// Sparse interpolation weights: `k` source cells per target point.
#[derive(Debug, Clone, PartialEq)]
pub struct RegridWeights {
    grid: GridSpec,
    k: usize,
    sources: Vec<usize>,
    weights: Vec<f64>,
}

impl RegridWeights {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn target_count(&self) -> usize {
        self.sources.len() / self.k
    }

    /// Source cells and weights for one target, nearest first.
    pub fn neighbors(&self, target: usize) -> impl Iterator<Item = (CellCoord, f64)> + '_ {
        let span = target * self.k..(target + 1) * self.k;
        self.sources[span.clone()]
            .iter()
            .zip(&self.weights[span])
            .map(move |(&s, &w)| (self.grid.coord_of(s), w))
    }
}

/// Indices and inverse-distance weights of the `k` points of `sources`
/// nearest to `target`, nearest first. Ties in distance go to the lower index.
pub(crate) fn knn_point_weights(sources: &[Vec3], target: Vec3, k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(f64, usize)> = sources
        .iter()
        .enumerate()
        .map(|(i, &s)| (angular_distance(s, target), i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, order);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(order);

    if ranked[0].0 < COINCIDENT_RAD {
        return ranked
            .iter()
            .enumerate()
            .map(|(j, &(_, i))| (i, if j == 0 { 1.0 } else { 0.0 }))
            .collect();
    }
    let total: f64 = ranked.iter().map(|&(d, _)| 1.0 / d).sum();
    ranked.iter().map(|&(d, i)| (i, (1.0 / d) / total)).collect()
}

pub fn knn_weights(grid: GridSpec, targets: &[LatLon], k: usize) -> Result<RegridWeights> {
    if k == 0 || k > grid.cell_count() {
        return Err(Error::invalid(format!(
            "k must be in 1..={} for N={}, got {k}",
            grid.cell_count(),
            grid.resolution
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("no regrid targets"));
    }
    let centers = grid.center_vecs();
    let mut sources = Vec::with_capacity(targets.len() * k);
    let mut weights = Vec::with_capacity(targets.len() * k);
    for t in targets {
        for (i, w) in knn_point_weights(&centers, t.to_vec(), k) {
            sources.push(i);
            weights.push(w);
        }
    }
    Ok(RegridWeights {
        grid,
        k,
        sources,
        weights,
    })
}

pub fn apply_regrid(weights: &RegridWeights, field: &Field) -> Result<Vec<f64>> {
    field.ensure_grid(weights.grid)?;
    let values = field.values();
    Ok(weights
        .sources
        .chunks_exact(weights.k)
        .zip(weights.weights.chunks_exact(weights.k))
        .map(|(src, w)| src.iter().zip(w).map(|(&s, &w)| w * values[s]).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(GridSpec::new(1).is_err());
        assert_eq!(grid(48).cell_count(), 6 * 48 * 48);
    }

    #[test]
    fn face_zero_center_is_origin() {
        let g = grid(8);
        let p = cell_center(g, CellCoord::new(0, 4, 4)).unwrap();
        assert!(p.lat().abs() < 90.0 / 8.0);
        let dlon = p.lon().min(360.0 - p.lon());
        assert!(dlon < 90.0 / 8.0);
    }

    #[test]
    fn north_face_diagonal_is_poleward_of_corner_latitude() {
        let g = grid(8);
        for i in 0..8 {
            let p = cell_center(g, CellCoord::new(4, i, i)).unwrap();
            assert!(p.lat() > 35.0, "row {i}: lat {}", p.lat());
        }
    }

    #[test]
    fn axis_points_locate_to_expected_faces() {
        let g = grid(48);
        let c = locate_cell(g, LatLon::new(0.0, 0.0).unwrap());
        assert_eq!(c.face, 0);
        for lon in [0.0, 17.0, 123.0, 359.0] {
            let c = locate_cell(g, LatLon::new(90.0, lon).unwrap());
            assert_eq!(c.face, 4);
            assert!((23..=24).contains(&c.row) && (23..=24).contains(&c.col), "{c}");
        }
        assert_eq!(locate_cell(g, LatLon::new(-90.0, 0.0).unwrap()).face, 5);
        assert_eq!(locate_cell(g, LatLon::new(0.0, 90.0).unwrap()).face, 1);
        assert_eq!(locate_cell(g, LatLon::new(0.0, 180.0).unwrap()).face, 2);
        assert_eq!(locate_cell(g, LatLon::new(0.0, 270.0).unwrap()).face, 3);
    }

    #[test]
    fn equatorial_rows_increase_northward_and_cols_eastward() {
        let g = grid(8);
        for face in 0..4 {
            let a = cell_center(g, CellCoord::new(face, 3, 3)).unwrap();
            let north = cell_center(g, CellCoord::new(face, 4, 3)).unwrap();
            let east = cell_center(g, CellCoord::new(face, 3, 4)).unwrap();
            assert!(north.lat() > a.lat());
            let dlon = (east.lon() - a.lon()).rem_euclid(360.0);
            assert!(dlon > 0.0 && dlon < 180.0);
        }
    }

    #[test]
    fn invalid_coordinates_are_rejected() {
        let g = grid(4);
        assert!(cell_center(g, CellCoord::new(6, 0, 0)).is_err());
        assert!(cell_center(g, CellCoord::new(0, 4, 0)).is_err());
        assert!(face_neighbors(g, CellCoord::new(0, 0, 4)).is_err());
        assert!(LatLon::new(91.0, 0.0).is_err());
        assert!(LatLon::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn longitude_wraps_into_range() {
        assert_eq!(LatLon::new(0.0, -90.0).unwrap().lon(), 270.0);
        assert_eq!(LatLon::new(0.0, 360.0).unwrap().lon(), 0.0);
        assert_eq!(LatLon::new(0.0, -1e-300).unwrap().lon(), 0.0);
    }

    #[test]
    fn interior_cells_have_same_face_neighbors() {
        let g = grid(6);
        let c = CellCoord::new(2, 3, 1);
        let nb = face_neighbors(g, c).unwrap();
        assert_eq!(
            nb,
            [
                CellCoord::new(2, 4, 1),
                CellCoord::new(2, 2, 1),
                CellCoord::new(2, 3, 2),
                CellCoord::new(2, 3, 0)
            ]
        );
    }

    #[test]
    fn seams_match_the_documented_orientation() {
        let g = grid(4);
        let nb = face_neighbors(g, CellCoord::new(0, 3, 2)).unwrap();
        assert_eq!(nb[0], CellCoord::new(4, 0, 2));
        let nb = face_neighbors(g, CellCoord::new(0, 0, 1)).unwrap();
        assert_eq!(nb[1], CellCoord::new(5, 3, 1));
        let nb = face_neighbors(g, CellCoord::new(0, 2, 3)).unwrap();
        assert_eq!(nb[2], CellCoord::new(1, 2, 0));
    }

    #[test]
    fn knn_rejects_bad_k() {
        let g = grid(2);
        let t = [LatLon::new(10.0, 10.0).unwrap()];
        assert!(knn_weights(g, &t, 0).is_err());
        assert!(knn_weights(g, &t, 25).is_err());
        assert!(knn_weights(g, &t, 24).is_ok());
        assert!(knn_weights(g, &[], 4).is_err());
    }

    #[test]
    fn knn_snaps_to_coincident_centers() {
        let g = grid(8);
        let c = CellCoord::new(3, 5, 2);
        let t = [LatLon::from_vec(g.center_vec(c).unwrap())];
        let w = knn_weights(g, &t, 4).unwrap();
        let nb: Vec<_> = w.neighbors(0).collect();
        assert_eq!(nb[0], (c, 1.0));
        assert!(nb[1..].iter().all(|&(_, w)| w == 0.0));
    }

    #[test]
    fn regrid_checks_grid() {
        let w = knn_weights(grid(4), &[LatLon::new(0.0, 0.0).unwrap()], 4).unwrap();
        assert!(apply_regrid(&w, &Field::zeros(grid(5))).is_err());
        assert_eq!(apply_regrid(&w, &Field::zeros(grid(4))).unwrap(), vec![0.0]);
    }
}

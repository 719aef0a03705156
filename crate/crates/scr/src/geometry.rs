//! Detector arrays, habitat rectangles, distance matrices, and
//! detector-cluster aggregation.
//!
//! Detector indices are row-major starting from the south-west corner of the
//! lattice; cluster indices follow the same convention on the coarse lattice.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A point in the plane, in distance units (du).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A regular lattice of detectors.
#[derive(Debug, Clone)]
pub struct DetectorGrid {
    coords: Vec<Point>,
    nx: usize,
    ny: usize,
    spacing: f64,
}

impl DetectorGrid {
    /// Builds an `nx` x `ny` lattice with the given spacing, centered at
    /// `center`. Detector `j = row * nx + col` with row 0 at the south edge.
    pub fn build(nx: usize, ny: usize, spacing: f64, center: Point) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Geometry(format!(
                "grid dimensions must be positive, got {nx} x {ny}"
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::Geometry(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        let x0 = center.x - spacing * (nx as f64 - 1.0) / 2.0;
        let y0 = center.y - spacing * (ny as f64 - 1.0) / 2.0;
        let mut coords = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            for col in 0..nx {
                coords.push(Point::new(
                    x0 + spacing * col as f64,
                    y0 + spacing * row as f64,
                ));
            }
        }
        Ok(DetectorGrid {
            coords,
            nx,
            ny,
            spacing,
        })
    }

    pub fn n_detectors(&self) -> usize {
        self.coords.len()
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coord(&self, j: usize) -> Point {
        self.coords[j]
    }

    /// (row, col) of detector `j` on the lattice.
    pub fn row_col(&self, j: usize) -> (usize, usize) {
        (j / self.nx, j % self.nx)
    }

    /// Bounding box as (xmin, xmax, ymin, ymax).
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let first = self.coords[0];
        let last = self.coords[self.coords.len() - 1];
        (first.x, last.x, first.y, last.y)
    }

    /// Full J x J Euclidean distance matrix.
    pub fn pairwise_distances(&self) -> DMatrix<f64> {
        pairwise_distances(&self.coords)
    }
}

/// Euclidean distance matrix between a set of points.
pub fn pairwise_distances(points: &[Point]) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i].distance(&points[j]);
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    m
}

/// Rectangular habitat with buffer around the detector grid.
#[derive(Debug, Clone, Copy)]
pub struct Habitat {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub buffer: f64,
}

impl Habitat {
    /// Habitat rectangle = grid bounding box expanded by `buffer` on every side.
    pub fn build(grid: &DetectorGrid, buffer: f64) -> Result<Self> {
        if buffer < 0.0 {
            return Err(Error::Geometry(format!(
                "buffer must be nonnegative, got {buffer}"
            )));
        }
        let (xmin, xmax, ymin, ymax) = grid.bounding_box();
        Ok(Habitat {
            xmin: xmin - buffer,
            xmax: xmax + buffer,
            ymin: ymin - buffer,
            ymax: ymax + buffer,
            buffer,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }
}

/// Assignment of detectors to contiguous square blocks of the lattice.
#[derive(Debug, Clone)]
pub struct ClusterMap {
    factor: usize,
    cluster_of: Vec<usize>,
    n_clusters: usize,
    /// Detector indices belonging to each cluster.
    members: Vec<Vec<usize>>,
    centroids: Vec<Point>,
}

impl ClusterMap {
    /// Aggregates detectors into `factor` x `factor` blocks. `factor` must
    /// divide both lattice dimensions.
    pub fn build(grid: &DetectorGrid, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Parameter("aggregation factor must be >= 1".into()));
        }
        if grid.nx() % factor != 0 {
            return Err(Error::NonDivisibleAggregation {
                factor,
                dim: "nx",
                value: grid.nx(),
            });
        }
        if grid.ny() % factor != 0 {
            return Err(Error::NonDivisibleAggregation {
                factor,
                dim: "ny",
                value: grid.ny(),
            });
        }
        let cx = grid.nx() / factor;
        let cy = grid.ny() / factor;
        let n_clusters = cx * cy;
        let mut cluster_of = Vec::with_capacity(grid.n_detectors());
        let mut members = vec![Vec::new(); n_clusters];
        for j in 0..grid.n_detectors() {
            let (row, col) = grid.row_col(j);
            let c = (row / factor) * cx + col / factor;
            cluster_of.push(c);
            members[c].push(j);
        }
        let centroids = members
            .iter()
            .map(|m| {
                let n = m.len() as f64;
                let (sx, sy) = m.iter().fold((0.0, 0.0), |(sx, sy), &j| {
                    let p = grid.coord(j);
                    (sx + p.x, sy + p.y)
                });
                Point::new(sx / n, sy / n)
            })
            .collect();
        Ok(ClusterMap {
            factor,
            cluster_of,
            n_clusters,
            members,
            centroids,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn cluster_of(&self, detector: usize) -> usize {
        self.cluster_of[detector]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn centroids(&self) -> &[Point] {
        &self.centroids
    }

    /// Distance matrix between cluster centroids; used by aggregated SARE.
    pub fn centroid_distances(&self) -> DMatrix<f64> {
        pairwise_distances(&self.centroids)
    }

    /// Expands a per-cluster vector to a per-detector vector.
    pub fn expand<T: Copy>(&self, cluster_values: &[T]) -> Vec<T> {
        self.cluster_of.iter().map(|&c| cluster_values[c]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paper_grid_spans_31_du() {
        let g = DetectorGrid::build(32, 32, 1.0, Point::ORIGIN).unwrap();
        assert_eq!(g.n_detectors(), 1024);
        let (xmin, xmax, ymin, ymax) = g.bounding_box();
        assert_relative_eq!(xmax - xmin, 31.0);
        assert_relative_eq!(ymax - ymin, 31.0);
        // centered at the origin
        assert_relative_eq!(xmin + xmax, 0.0, epsilon = 1e-12);
        assert_relative_eq!(ymin + ymax, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_detector_at_center() {
        let g = DetectorGrid::build(1, 1, 1.0, Point::ORIGIN).unwrap();
        assert_eq!(g.n_detectors(), 1);
        assert_relative_eq!(g.coord(0).x, 0.0);
        assert_relative_eq!(g.coord(0).y, 0.0);
    }

    #[test]
    fn rectangular_grid_extent() {
        // 4 x 2 lattice at spacing 2: x extent = 3 steps * 2 du = 6 du.
        let g = DetectorGrid::build(4, 2, 2.0, Point::ORIGIN).unwrap();
        assert_eq!(g.n_detectors(), 8);
        let (xmin, xmax, _, _) = g.bounding_box();
        assert_relative_eq!(xmax - xmin, 6.0);
    }

    #[test]
    fn bad_grid_dimensions_rejected() {
        assert!(DetectorGrid::build(0, 3, 1.0, Point::ORIGIN).is_err());
        assert!(DetectorGrid::build(3, 3, 0.0, Point::ORIGIN).is_err());
        assert!(DetectorGrid::build(3, 3, -1.0, Point::ORIGIN).is_err());
    }

    #[test]
    fn min_pairwise_distance_is_spacing() {
        let g = DetectorGrid::build(5, 4, 1.5, Point::new(3.0, -2.0)).unwrap();
        let d = g.pairwise_distances();
        let mut min = f64::INFINITY;
        for i in 0..g.n_detectors() {
            for j in 0..g.n_detectors() {
                if i != j {
                    min = min.min(d[(i, j)]);
                }
            }
        }
        assert!(min >= g.spacing() - 1e-9);
    }

    #[test]
    fn paper_habitat_is_41_by_41() {
        let g = DetectorGrid::build(32, 32, 1.0, Point::ORIGIN).unwrap();
        let h = Habitat::build(&g, 5.0).unwrap();
        assert_relative_eq!(h.width(), 41.0);
        assert_relative_eq!(h.height(), 41.0);
        assert_relative_eq!(h.area(), 41.0 * 41.0);
        // buffer wider than 3 * sigma for sigma = 1.5
        assert!(h.buffer > 3.0 * 1.5);
    }

    #[test]
    fn zero_buffer_habitat_equals_bounding_box() {
        let g = DetectorGrid::build(3, 3, 1.0, Point::ORIGIN).unwrap();
        let h = Habitat::build(&g, 0.0).unwrap();
        let (xmin, xmax, ymin, ymax) = g.bounding_box();
        assert_eq!((h.xmin, h.xmax, h.ymin, h.ymax), (xmin, xmax, ymin, ymax));
    }

    #[test]
    fn small_buffered_habitat() {
        // 4x4 grid at spacing 1 spans 3 du; buffer 2 on each side gives 7 du.
        let g = DetectorGrid::build(4, 4, 1.0, Point::ORIGIN).unwrap();
        let h = Habitat::build(&g, 2.0).unwrap();
        assert_relative_eq!(h.width(), 7.0);
        assert_relative_eq!(h.height(), 7.0);
    }

    #[test]
    fn distance_matrix_values() {
        let g = DetectorGrid::build(3, 3, 1.0, Point::ORIGIN).unwrap();
        let d = g.pairwise_distances();
        // adjacent lattice neighbors
        assert_relative_eq!(d[(0, 1)], 1.0);
        // diagonal neighbors
        assert_relative_eq!(d[(0, 4)], 2f64.sqrt());
        // corner to corner on a 3x3 grid
        assert_relative_eq!(d[(0, 8)], 2.0 * 2f64.sqrt());
        for j in 0..9 {
            assert_eq!(d[(j, j)], 0.0);
        }
    }

    #[test]
    fn distance_matrix_triangle_inequality() {
        let g = DetectorGrid::build(4, 3, 1.0, Point::ORIGIN).unwrap();
        let d = g.pairwise_distances();
        let n = g.n_detectors();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    assert!(d[(a, c)] <= d[(a, b)] + d[(b, c)] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn paper_aggregation_64_clusters_of_16() {
        let g = DetectorGrid::build(32, 32, 1.0, Point::ORIGIN).unwrap();
        let cm = ClusterMap::build(&g, 4).unwrap();
        assert_eq!(cm.n_clusters(), 64);
        for c in 0..64 {
            assert_eq!(cm.members(c).len(), 16);
        }
    }

    #[test]
    fn identity_aggregation() {
        let g = DetectorGrid::build(5, 3, 1.0, Point::ORIGIN).unwrap();
        let cm = ClusterMap::build(&g, 1).unwrap();
        assert_eq!(cm.n_clusters(), g.n_detectors());
        for j in 0..g.n_detectors() {
            assert_eq!(cm.cluster_of(j), j);
        }
        // per-cluster assignments expand to per-detector assignments exactly
        let values: Vec<f64> = (0..cm.n_clusters()).map(|c| c as f64 * 0.5).collect();
        assert_eq!(cm.expand(&values), values);
    }

    #[test]
    fn block_index_arithmetic() {
        let g = DetectorGrid::build(8, 8, 1.0, Point::ORIGIN).unwrap();
        let cm = ClusterMap::build(&g, 2).unwrap();
        assert_eq!(cm.n_clusters(), 16);
        // detector at row 0, col 3 lies in the second block of the first row
        assert_eq!(cm.cluster_of(3), 1);
    }

    #[test]
    fn non_divisible_factor_names_dimension() {
        let g = DetectorGrid::build(32, 32, 1.0, Point::ORIGIN).unwrap();
        let err = ClusterMap::build(&g, 3).unwrap_err();
        assert!(err.to_string().contains("nx"));
    }

    #[test]
    fn cluster_centroids_preserve_coarse_lattice() {
        let g = DetectorGrid::build(4, 4, 1.0, Point::ORIGIN).unwrap();
        let cm = ClusterMap::build(&g, 2).unwrap();
        let d = cm.centroid_distances();
        // coarse lattice spacing is factor * spacing
        assert_relative_eq!(d[(0, 1)], 2.0);
        assert_relative_eq!(d[(0, 3)], 2.0 * 2f64.sqrt());
    }
}

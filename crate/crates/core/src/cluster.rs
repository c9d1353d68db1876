//! Mean-shift clustering of (lon, lat) positions into areas.
//!
//! Flat kernel, planar Euclidean distance in degrees. Seeds are the centers of
//! the occupied cells of a grid whose cell side equals the bandwidth, so the
//! result is fully determined by the input.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH: f64 = 0.05;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftParams {
    pub bandwidth: f64,
    /// Convergence threshold on the shift length; defaults to `1e-4 * bandwidth`.
    pub tol: f64,
    pub max_iter: usize,
}

impl MeanShiftParams {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        MeanShiftParams {
            bandwidth,
            tol: 1e-4 * bandwidth,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        MeanShiftParams::with_bandwidth(DEFAULT_BANDWIDTH)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `[lon, lat]`, strongest mode first.
    pub centers: Vec<[f64; 2]>,
    /// Number of input points within the bandwidth of each center.
    pub support: Vec<usize>,
    pub bandwidth: f64,
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

type Cell = (i64, i64);

/// Points bucketed by bandwidth-sized cells.
struct GridIndex<'a> {
    points: &'a [[f64; 2]],
    bandwidth: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [[f64; 2]], bandwidth: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(Self::cell_of(p, bandwidth)).or_default().push(i);
        }
        GridIndex {
            points,
            bandwidth,
            cells,
        }
    }

    fn cell_of(p: [f64; 2], bandwidth: f64) -> Cell {
        ((p[0] / bandwidth).floor() as i64, (p[1] / bandwidth).floor() as i64)
    }

    /// Sum and count of the points within the bandwidth of `x`, visiting cells
    /// in a fixed order.
    fn window(&self, x: [f64; 2]) -> ([f64; 2], usize) {
        let r2 = self.bandwidth * self.bandwidth;
        let (cx, cy) = Self::cell_of(x, self.bandwidth);
        let mut sum = [0.0, 0.0];
        let mut n = 0;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(members) = self.cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &i in members {
                    let p = self.points[i];
                    if dist2(p, x) <= r2 {
                        sum[0] += p[0];
                        sum[1] += p[1];
                        n += 1;
                    }
                }
            }
        }
        (sum, n)
    }

    fn seeds(&self) -> Vec<[f64; 2]> {
        let mut occupied: Vec<Cell> = self.cells.keys().copied().collect();
        occupied.sort_unstable();
        occupied
            .into_iter()
            .map(|(i, j)| [(i as f64 + 0.5) * self.bandwidth, (j as f64 + 0.5) * self.bandwidth])
            .collect()
    }
}

/// Iterates `x <- mean(points within bandwidth of x)` from every grid seed,
/// then merges modes closer than the bandwidth. Among modes competing for the
/// same area, the one with more points in its window wins, then the
/// lexicographically lower `(lon, lat)`.
pub fn mean_shift(points: &[[f64; 2]], params: &MeanShiftParams) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::InvalidInput("mean shift over zero points".into()));
    }
    if !(params.bandwidth > 0.0) || !params.bandwidth.is_finite() {
        return Err(Error::Config(format!("bandwidth {} must be positive", params.bandwidth)));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let index = GridIndex::new(points, params.bandwidth);
    let tol2 = params.tol * params.tol;

    let mut modes: Vec<([f64; 2], usize)> = index
        .seeds()
        .into_par_iter()
        .filter_map(|seed| {
            let mut x = seed;
            let mut support = 0;
            for _ in 0..params.max_iter.max(1) {
                let (sum, n) = index.window(x);
                if n == 0 {
                    break;
                }
                let next = [sum[0] / n as f64, sum[1] / n as f64];
                let shift2 = dist2(next, x);
                x = next;
                support = n;
                if shift2 < tol2 {
                    break;
                }
            }
            // A seed is a cell center, so its own cell's points are always in
            // range; `support == 0` only guards degenerate inputs.
            (support > 0).then(|| (x, index.window(x).1))
        })
        .collect();

    modes.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.0[0].total_cmp(&b.0[0]))
            .then(a.0[1].total_cmp(&b.0[1]))
    });
    let r2 = params.bandwidth * params.bandwidth;
    let mut centers: Vec<[f64; 2]> = Vec::new();
    let mut support = Vec::new();
    for (m, s) in modes {
        if centers.iter().all(|&c| dist2(c, m) >= r2) {
            centers.push(m);
            support.push(s);
        }
    }
    Ok(ClusterModel {
        centers,
        support,
        bandwidth: params.bandwidth,
    })
}

impl ClusterModel {
    /// Index of the nearest center within the bandwidth; ties go to the lower
    /// index. `None` marks a point outside every known area.
    pub fn assign(&self, point: [f64; 2]) -> Option<usize> {
        let r2 = self.bandwidth * self.bandwidth;
        let mut best: Option<(usize, f64)> = None;
        for (i, &c) in self.centers.iter().enumerate() {
            let d = dist2(c, point);
            if d <= r2 && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// CSV `CLUSTER_ID,LON,LAT,SUPPORT`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["CLUSTER_ID", "LON", "LAT", "SUPPORT"])?;
        for (i, (c, s)) in self.centers.iter().zip(&self.support).enumerate() {
            w.write_record([i.to_string(), c[0].to_string(), c[1].to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("cluster output", e))?;
        Ok(())
    }
}

pub fn assign_cluster(model: &ClusterModel, point: [f64; 2]) -> Option<usize> {
    model.assign(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn isolated_points_are_their_own_centers() {
        let p = MeanShiftParams::with_bandwidth(0.1);
        let m = mean_shift(&[[1.0, 1.0], [2.0, 1.0]], &p).unwrap();
        let mut c = m.centers.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, vec![[1.0, 1.0], [2.0, 1.0]]);
    }

    #[test]
    fn identical_points_one_center() {
        let m = mean_shift(&[[3.25, -4.5]; 50], &MeanShiftParams::default()).unwrap();
        assert_eq!(m.centers, vec![[3.25, -4.5]]);
        assert_eq!(m.support, vec![50]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mean_shift(&[], &MeanShiftParams::default()).is_err());
        assert!(mean_shift(&[[0.0, 0.0]], &MeanShiftParams::with_bandwidth(0.0)).is_err());
    }

    fn blobs(seed: u64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>, f64) {
        let bw = 0.05;
        let means = [[10.0, 35.0], [10.4, 35.0], [10.0, 35.4], [10.4, 35.4], [10.2, 35.7]];
        let noise = Normal::new(0.0, bw / 4.0).unwrap();
        let mut r = crate::rng::seeded(seed);
        let mut pts = Vec::new();
        for m in means {
            for _ in 0..200 {
                pts.push([m[0] + noise.sample(&mut r), m[1] + noise.sample(&mut r)]);
            }
        }
        (pts, means.to_vec(), bw)
    }

    #[test]
    fn recovers_five_blobs() {
        let (pts, means, bw) = blobs(3);
        let m = mean_shift(&pts, &MeanShiftParams::with_bandwidth(bw)).unwrap();
        assert_eq!(m.centers.len(), 5, "{:?}", m.centers);
        for mean in means {
            let nearest = m.centers.iter().map(|&c| dist2(c, mean).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(nearest <= bw / 2.0, "blob {mean:?}: {nearest}");
        }
        let unassigned = pts.iter().filter(|&&q| m.assign(q).is_none()).count();
        assert!(unassigned <= 5, "{unassigned} unassigned");
    }

    #[test]
    fn separation_bbox_and_determinism() {
        let mut r = crate::rng::seeded(11);
        let pts: Vec<[f64; 2]> = (0..600)
            .map(|_| {
                use rand::Rng as _;
                [r.random_range(0.0..0.6), r.random_range(0.0..0.3)]
            })
            .collect();
        let p = MeanShiftParams::with_bandwidth(0.05);
        let m = mean_shift(&pts, &p).unwrap();
        assert_eq!(m, mean_shift(&pts, &p).unwrap());
        for (i, a) in m.centers.iter().enumerate() {
            assert!((0.0..=0.6).contains(&a[0]) && (0.0..=0.3).contains(&a[1]));
            for b in &m.centers[i + 1..] {
                assert!(dist2(*a, *b).sqrt() >= p.bandwidth);
            }
        }
    }

    #[test]
    fn assignment_rules() {
        let m = ClusterModel {
            centers: vec![[0.0, 0.0], [1.0, 0.0], [0.1, 0.0], [5.0, 5.0], [4.0, 4.0], [0.2, 0.0]],
            support: vec![1; 6],
            bandwidth: 0.5,
        };
        assert_eq!(m.assign([1.0, 0.0]), Some(1));
        assert_eq!(m.assign([9.0, 9.0]), None);
        // Equidistant from centers 2 and 5.
        assert_eq!(m.assign([0.15, 0.3]), Some(2));
    }

    #[test]
    fn csv_output() {
        let m = ClusterModel {
            centers: vec![[1.5, 2.25]],
            support: vec![7],
            bandwidth: 0.1,
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "CLUSTER_ID,LON,LAT,SUPPORT\n0,1.5,2.25,7\n");
    }
}

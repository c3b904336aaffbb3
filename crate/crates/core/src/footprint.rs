//! Action footprint maps.
//!
//! Convolutional descriptors of a tube are pooled per spatial cell with a
//! Fisher vector encoder. How well each cell alone classifies an action
//! (its accuracy) is turned into a per-class footprint factor by a softmax
//! over cells. A tube whose projected cells carry less footprint mass than
//! the map average is considered drifted and is dropped.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::linalg::softmax;
use crate::model::{ClassId, Tube};
use crate::scoring::ScoredTube;
use crate::{Error, Result};

/// Per-clip `side x side` grids of `depth`-dimensional descriptors.
///
/// Each clip is stored row-major: `values[(row * side + col) * depth + k]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeatureGridSequence {
    side: usize,
    depth: usize,
    clips: Vec<Vec<f64>>,
}

impl FeatureGridSequence {
    pub fn new(side: usize, depth: usize, clips: Vec<Vec<f64>>) -> Result<Self> {
        if side == 0 || depth == 0 {
            return Err(Error::param("side", "grid side and depth must be positive"));
        }
        for c in &clips {
            if c.len() != side * side * depth {
                return Err(Error::DimensionMismatch {
                    what: "feature grid clip",
                    expected: side * side * depth,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("clips", "descriptors must be finite"));
            }
        }
        Ok(Self { side, depth, clips })
    }

    pub fn side(&self) -> usize {
        self.side
    }
    pub fn depth(&self) -> usize {
        self.depth
    }
    pub fn clips(&self) -> &[Vec<f64>] {
        &self.clips
    }

    pub fn descriptor(&self, clip: usize, row: usize, col: usize) -> &[f64] {
        let at = (row * self.side + col) * self.depth;
        &self.clips[clip][at..at + self.depth]
    }

    /// Total descriptor count, `side * side * clips`.
    pub fn descriptor_count(&self) -> usize {
        self.side * self.side * self.clips.len()
    }
}

/// Square cells tiling a square feature grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CellLayout {
    grid_side: usize,
    cell_side: usize,
}

impl CellLayout {
    pub fn new(grid_side: usize, cell_side: usize) -> Result<Self> {
        if cell_side == 0 || grid_side == 0 || !grid_side.is_multiple_of(cell_side) {
            return Err(Error::param("cell_side", "cells must tile the grid exactly"));
        }
        Ok(Self { grid_side, cell_side })
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn cell_side(&self) -> usize {
        self.cell_side
    }

    /// Cells along one side of the map.
    pub fn map_side(&self) -> usize {
        self.grid_side / self.cell_side
    }

    pub fn num_cells(&self) -> usize {
        self.map_side() * self.map_side()
    }

    /// Cell index (row-major) of a grid position.
    pub fn cell_of(&self, row: usize, col: usize) -> usize {
        (row / self.cell_side) * self.map_side() + col / self.cell_side
    }
}

impl Default for CellLayout {
    /// 14x14 grid with 2x2 cells, i.e. a 7x7 map.
    fn default() -> Self {
        Self {
            grid_side: 14,
            cell_side: 2,
        }
    }
}

/// Diagonal-covariance Gaussian mixture used as the Fisher vector codebook.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self {
            weights,
            means,
            variances,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::param("weights", "at least one component"));
        }
        if self.means.len() != k || self.variances.len() != k {
            return Err(Error::DimensionMismatch {
                what: "mixture components",
                expected: k,
                found: self.means.len().min(self.variances.len()),
            });
        }
        let d = self.dim();
        if d == 0 || self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::param("means", "all components need the same positive dimension"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::param("weights", "weights must be positive"));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::param("weights", "weights must sum to 1"));
        }
        if self.variances.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::param("variances", "variances must be positive"));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("means", "means must be finite"));
        }
        Ok(())
    }

    /// `ln weight_k - 0.5 * sum_d ln(2 pi var_kd)` for every component.
    fn log_norms(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(w, var)| libm::log(*w) - 0.5 * var.iter().map(|v| libm::log(2.0 * PI * v)).sum::<f64>())
            .collect()
    }

    /// Log of `weight_k * N(x; mean_k, diag(var_k))` for every component.
    fn weighted_log_densities(&self, log_norms: &[f64], x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut q = 0.0;
            for ((xi, m), v) in x.iter().zip(&self.means[k]).zip(&self.variances[k]) {
                let dx = xi - m;
                q += dx * dx / v;
            }
            *o = log_norms[k] - 0.5 * q;
        }
    }

    /// Component posteriors for one descriptor.
    pub fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let mut lp = vec![0.0; self.num_components()];
        self.weighted_log_densities(&self.log_norms(), x, &mut lp);
        softmax(&lp)
    }

    /// Fits a mixture by expectation-maximization.
    ///
    /// Centres start from farthest-point sampling seeded by `seed`; iteration
    /// stops once the mean log-likelihood improves by less than `tol` or
    /// after `max_iter` rounds.
    pub fn fit(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDescriptors);
        }
        let d = data[0].len();
        if d == 0 || data.iter().any(|x| x.len() != d) {
            return Err(Error::param("data", "descriptors need one common positive dimension"));
        }
        if k == 0 || k > data.len() {
            return Err(Error::param("k", "need 1 <= k <= number of descriptors"));
        }
        let n = data.len() as f64;

        let mut global_mean = vec![0.0; d];
        for x in data {
            global_mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut global_var = vec![0.0; d];
        for x in data {
            global_var
                .iter_mut()
                .zip(x.iter().zip(&global_mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        let floor: Vec<f64> = global_var.iter().map(|v| (v * 1e-3).max(1e-9)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centres: Vec<Vec<f64>> = vec![data[rng.random_range(0..data.len())].clone()];
        let mut nearest: Vec<f64> = data.iter().map(|x| sq_dist(x, &centres[0])).collect();
        while centres.len() < k {
            let (idx, _) = nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let c = data[idx].clone();
            for (m, x) in nearest.iter_mut().zip(data) {
                *m = m.min(sq_dist(x, &c));
            }
            centres.push(c);
        }

        let mut gmm = GaussianMixture {
            weights: vec![1.0 / k as f64; k],
            means: centres,
            variances: vec![global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect(); k],
        };

        let mut resp = vec![0.0; k];
        let mut prev_ll = f64::NEG_INFINITY;
        for _ in 0..max_iter {
            let mut nk = vec![0.0; k];
            let mut sx = vec![vec![0.0; d]; k];
            let mut sxx = vec![vec![0.0; d]; k];
            let mut ll = 0.0;
            let norms = gmm.log_norms();
            for x in data {
                gmm.weighted_log_densities(&norms, x, &mut resp);
                let max = resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = resp.iter().map(|v| libm::exp(v - max)).sum();
                let lse = max + libm::log(total);
                ll += lse;
                for j in 0..k {
                    let g = libm::exp(resp[j] - lse);
                    nk[j] += g;
                    for ((a, b), xi) in sx[j].iter_mut().zip(sxx[j].iter_mut()).zip(x) {
                        *a += g * xi;
                        *b += g * xi * xi;
                    }
                }
            }
            ll /= n;
            for j in 0..k {
                if nk[j] < 1e-10 {
                    // dead component: keep its parameters, tiny weight
                    nk[j] = 1e-10;
                    continue;
                }
                for t in 0..d {
                    let m = sx[j][t] / nk[j];
                    gmm.means[j][t] = m;
                    gmm.variances[j][t] = (sxx[j][t] / nk[j] - m * m).max(floor[t]);
                }
            }
            let total: f64 = nk.iter().sum();
            gmm.weights = nk.iter().map(|v| v / total).collect();
            if (ll - prev_ll).abs() < tol {
                break;
            }
            prev_ll = ll;
        }
        gmm.validate()?;
        Ok(gmm)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fisher vector of a descriptor set: gradients with respect to the means
/// and standard deviations of every component, averaged over descriptors,
/// followed by signed square root and L2 normalization.
///
/// Layout: `[mean block of component 0 .. K-1, deviation block of 0 .. K-1]`,
/// each block `dim` long, so the length is `2 * K * dim`.
pub fn fisher_vector<X: AsRef<[f64]>>(descriptors: &[X], gmm: &GaussianMixture) -> Result<Vec<f64>> {
    if descriptors.is_empty() {
        return Err(Error::EmptyDescriptors);
    }
    let (k, d) = (gmm.num_components(), gmm.dim());
    let mut fv = vec![0.0; 2 * k * d];
    let mut lp = vec![0.0; k];
    let norms = gmm.log_norms();
    let std: Vec<Vec<f64>> = gmm
        .variances
        .iter()
        .map(|v| v.iter().map(|x| libm::sqrt(*x)).collect())
        .collect();
    for x in descriptors {
        let x = x.as_ref();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                what: "descriptor",
                expected: d,
                found: x.len(),
            });
        }
        gmm.weighted_log_densities(&norms, x, &mut lp);
        let post = softmax(&lp);
        for (j, g) in post.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            for t in 0..d {
                let u = (x[t] - gmm.means[j][t]) / std[j][t];
                fv[j * d + t] += g * u;
                fv[k * d + j * d + t] += g * (u * u - 1.0);
            }
        }
    }
    let n = descriptors.len() as f64;
    for j in 0..k {
        let w = gmm.weights[j];
        let mean_scale = 1.0 / (n * libm::sqrt(w));
        let dev_scale = 1.0 / (n * libm::sqrt(2.0 * w));
        fv[j * d..(j + 1) * d].iter_mut().for_each(|v| *v *= mean_scale);
        fv[k * d + j * d..k * d + (j + 1) * d]
            .iter_mut()
            .for_each(|v| *v *= dev_scale);
    }
    for v in fv.iter_mut() {
        *v = libm::copysign(libm::sqrt(v.abs()), *v);
    }
    let norm = libm::sqrt(fv.iter().map(|v| v * v).sum::<f64>());
    if norm > 0.0 {
        fv.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(fv)
}

/// One Fisher vector per cell, pooling the cell's descriptors over all clips.
pub fn aggregate_cells(features: &FeatureGridSequence, layout: &CellLayout, gmm: &GaussianMixture) -> Result<Vec<Vec<f64>>> {
    if features.side() != layout.grid_side() {
        return Err(Error::DimensionMismatch {
            what: "feature grid side",
            expected: layout.grid_side(),
            found: features.side(),
        });
    }
    if features.depth() != gmm.dim() {
        return Err(Error::DimensionMismatch {
            what: "descriptor depth",
            expected: gmm.dim(),
            found: features.depth(),
        });
    }
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); layout.num_cells()];
    for clip in 0..features.clips().len() {
        for row in 0..features.side() {
            for col in 0..features.side() {
                members[layout.cell_of(row, col)].push(features.descriptor(clip, row, col));
            }
        }
    }
    members.iter().map(|m| fisher_vector(m, gmm)).collect()
}

/// Per-class accuracy of a nearest-centroid classifier trained on each cell
/// separately. Returns `alpha[class][cell]`.
///
/// Each sample is `(cell vectors, label)`. Classes with no test samples get
/// the chance rate `1 / num_classes`.
pub fn cell_accuracies(train: &[(Vec<Vec<f64>>, ClassId)], test: &[(Vec<Vec<f64>>, ClassId)], num_classes: usize) -> Result<Vec<Vec<f64>>> {
    let num_cells = train
        .first()
        .map(|s| s.0.len())
        .ok_or_else(|| Error::param("train", "no training samples"))?;
    if let Some(s) = train.iter().chain(test).find(|s| s.0.len() != num_cells || s.1 >= num_classes) {
        return Err(Error::DimensionMismatch {
            what: "cell vectors per sample",
            expected: num_cells,
            found: s.0.len(),
        });
    }
    let chance = 1.0 / num_classes as f64;
    let mut alpha = vec![vec![chance; num_cells]; num_classes];
    let mut test_counts = vec![0usize; num_classes];
    for (_, l) in test {
        test_counts[*l] += 1;
    }

    for cell in 0..num_cells {
        let dim = train[0].0[cell].len();
        let mut centroids = vec![vec![0.0; dim]; num_classes];
        let mut counts = vec![0usize; num_classes];
        for (cells, l) in train {
            counts[*l] += 1;
            centroids[*l].iter_mut().zip(&cells[cell]).for_each(|(c, v)| *c += v);
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            if *n > 0 {
                c.iter_mut().for_each(|v| *v /= *n as f64);
            }
        }
        let mut correct = vec![0usize; num_classes];
        for (cells, l) in test {
            let predicted = (0..num_classes)
                .filter(|c| counts[*c] > 0)
                .map(|c| (c, sq_dist(&cells[cell], &centroids[c])))
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                })
                .map(|(c, _)| c);
            if predicted == Some(*l) {
                correct[*l] += 1;
            }
        }
        for c in 0..num_classes {
            if test_counts[c] > 0 {
                alpha[c][cell] = correct[c] as f64 / test_counts[c] as f64;
            }
        }
    }
    Ok(alpha)
}

/// Per-class softmax-normalized cell weights over a square map.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FootprintMap {
    map_side: usize,
    accuracies: Vec<Vec<f64>>,
    factors: Vec<Vec<f64>>,
}

impl FootprintMap {
    pub fn map_side(&self) -> usize {
        self.map_side
    }

    pub fn num_cells(&self) -> usize {
        self.map_side * self.map_side
    }

    pub fn num_classes(&self) -> usize {
        self.factors.len()
    }

    pub fn accuracies(&self) -> &[Vec<f64>] {
        &self.accuracies
    }

    /// Footprint factors of `class`, one per cell, row-major.
    pub fn factors(&self, class: ClassId) -> Option<&[f64]> {
        self.factors.get(class).map(Vec::as_slice)
    }
}

/// Converts cell accuracies `alpha[class][cell]` into footprint factors.
pub fn build_footprint_map(accuracies: Vec<Vec<f64>>, map_side: usize) -> Result<FootprintMap> {
    let cells = map_side * map_side;
    if cells == 0 || accuracies.is_empty() {
        return Err(Error::param("accuracies", "need at least one class and one cell"));
    }
    for a in &accuracies {
        if a.len() != cells {
            return Err(Error::DimensionMismatch {
                what: "cell accuracies",
                expected: cells,
                found: a.len(),
            });
        }
        if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("accuracies", "accuracies must lie in [0, 1]"));
        }
    }
    let factors = accuracies.iter().map(|a| softmax(a)).collect();
    Ok(FootprintMap {
        map_side,
        accuracies,
        factors,
    })
}

/// How a tube is projected onto the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Projection {
    /// Cells touched by the temporal mean box.
    #[default]
    MeanBox,
    /// Cells touched by any entry box.
    Union,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftVerdict {
    pub projected_cells: Vec<usize>,
    pub s_proj: f64,
    pub s_map: f64,
    pub keep: bool,
}

fn touched_cells(bbox: &BoundingBox, side: usize, frame_size: (f64, f64), into: &mut [bool]) {
    let sx = side as f64 / frame_size.0;
    let sy = side as f64 / frame_size.1;
    let (x0, x1) = (bbox.x_min() * sx, bbox.x_max() * sx);
    let (y0, y1) = (bbox.y_min() * sy, bbox.y_max() * sy);
    for r in 0..side {
        let (cy0, cy1) = (r as f64, r as f64 + 1.0);
        if y1.min(cy1) - y0.max(cy0) <= 0.0 {
            continue;
        }
        for c in 0..side {
            let (cx0, cx1) = (c as f64, c as f64 + 1.0);
            if x1.min(cx1) - x0.max(cx0) > 0.0 {
                into[r * side + c] = true;
            }
        }
    }
}

/// Projects `tube` onto the map of `class` and compares the mean factor of
/// the touched cells against the mean over the whole map.
pub fn drift_verdict(tube: &Tube, class: ClassId, map: &FootprintMap, frame_size: (f64, f64), projection: Projection) -> Result<DriftVerdict> {
    let w = map
        .factors(class)
        .ok_or_else(|| Error::param("label", "class missing from footprint map"))?;
    if !(frame_size.0 > 0.0 && frame_size.1 > 0.0) {
        return Err(Error::param("frame_size", "must be positive"));
    }
    let side = map.map_side();
    let mut touched = vec![false; side * side];
    match projection {
        Projection::MeanBox => touched_cells(&tube.mean_box(), side, frame_size, &mut touched),
        Projection::Union => {
            for e in tube.entries() {
                touched_cells(&e.bbox, side, frame_size, &mut touched);
            }
        }
    }
    let projected_cells: Vec<usize> = (0..touched.len()).filter(|i| touched[*i]).collect();
    let s_map = w.iter().sum::<f64>() / w.len() as f64;
    if projected_cells.is_empty() {
        return Ok(DriftVerdict {
            projected_cells,
            s_proj: 0.0,
            s_map,
            keep: false,
        });
    }
    let s_proj = projected_cells.iter().map(|i| w[*i]).sum::<f64>() / projected_cells.len() as f64;
    // strict comparison, ignoring differences at rounding level
    let keep = !(s_proj < s_map - 1e-12 * s_map);
    Ok(DriftVerdict {
        projected_cells,
        s_proj,
        s_map,
        keep,
    })
}

/// Drops tubes whose footprint mass falls below the map average for their
/// label. Tubes without any projected cell are dropped too.
pub fn prune_drifted(tubes: Vec<ScoredTube>, map: &FootprintMap, frame_size: (f64, f64), projection: Projection) -> Result<Vec<ScoredTube>> {
    let mut kept = Vec::with_capacity(tubes.len());
    for t in tubes {
        if drift_verdict(&t.tube, t.score.label, map, frame_size, projection)?.keep {
            kept.push(t);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Detection, Source};

    fn unit_gmm(k: usize, d: usize) -> GaussianMixture {
        GaussianMixture::new(
            vec![1.0 / k as f64; k],
            (0..k).map(|j| vec![j as f64; d]).collect(),
            vec![vec![1.0; d]; k],
        )
        .unwrap()
    }

    #[test]
    fn descriptors_at_the_mean_zero_the_mean_block() {
        let g = GaussianMixture::new(vec![1.0], vec![vec![0.5, -1.0]], vec![vec![2.0, 0.5]]).unwrap();
        let fv = fisher_vector(&[vec![0.5, -1.0], vec![0.5, -1.0]], &g).unwrap();
        assert_eq!(&fv[..2], &[0.0, 0.0]);
        // deviation block is all -1 before normalization
        assert!((fv[2] + libm::sqrt(0.5)).abs() < 1e-12);
    }

    #[test]
    fn fisher_vector_dimension_and_norm() {
        let g = unit_gmm(4, 8);
        let xs: Vec<Vec<f64>> = (0..5).map(|i| (0..8).map(|t| (i * t) as f64 * 0.1).collect()).collect();
        let fv = fisher_vector(&xs, &g).unwrap();
        assert_eq!(fv.len(), 64);
        let n: f64 = fv.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        let empty: [Vec<f64>; 0] = [];
        assert_eq!(fisher_vector(&empty, &g), Err(Error::EmptyDescriptors));
    }

    #[test]
    fn layout_arithmetic() {
        assert_eq!(CellLayout::new(14, 2).unwrap().num_cells(), 49);
        assert_eq!(CellLayout::new(2, 2).unwrap().num_cells(), 1);
        assert!(CellLayout::new(14, 3).is_err());
    }

    #[test]
    fn single_cell_layout_pools_everything() {
        let g = unit_gmm(2, 1);
        let grid = FeatureGridSequence::new(2, 1, vec![vec![0.1, 0.4, 0.9, 1.3], vec![0.0, 0.2, 1.0, 2.0]]).unwrap();
        let cells = aggregate_cells(&grid, &CellLayout::new(2, 2).unwrap(), &g).unwrap();
        assert_eq!(cells.len(), 1);
        let all = [0.1, 0.4, 0.9, 1.3, 0.0, 0.2, 1.0, 2.0].map(|v| vec![v]);
        assert_eq!(cells[0], fisher_vector(&all, &g).unwrap());
    }

    #[test]
    fn softmax_footprint_examples() {
        let m = build_footprint_map(vec![vec![0.4; 49]], 7).unwrap();
        for w in m.factors(0).unwrap() {
            assert!((w - 1.0 / 49.0).abs() < 1e-15);
        }
        let m = build_footprint_map(vec![vec![0.0, 1.0, 0.0, 0.0]], 2).unwrap();
        let w = m.factors(0).unwrap();
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(build_footprint_map(vec![vec![1.5; 4]], 2).is_err());
    }

    fn tube_at(b: BoundingBox) -> Tube {
        let entries = (0..4).map(|f| Detection::new(f, b, vec![1.0], Source::Merged)).collect();
        Tube::new("v", entries).unwrap()
    }

    #[test]
    fn drift_examples() {
        let frame = (70.0, 70.0);
        let uniform = build_footprint_map(vec![vec![0.5; 49]], 7).unwrap();
        let corner = tube_at(BoundingBox::new(1.0, 1.0, 9.0, 9.0).unwrap());
        let whole = tube_at(BoundingBox::new(0.0, 0.0, 70.0, 70.0).unwrap());
        assert!(drift_verdict(&corner, 0, &uniform, frame, Projection::MeanBox).unwrap().keep);
        let v = drift_verdict(&whole, 0, &uniform, frame, Projection::MeanBox).unwrap();
        assert!(v.keep);
        assert_eq!(v.projected_cells.len(), 49);

        // all accuracy mass in the 3x3 centre
        let mut alpha = vec![0.0; 49];
        for r in 2..5 {
            for c in 2..5 {
                alpha[r * 7 + c] = 1.0;
            }
        }
        let centred = build_footprint_map(vec![alpha], 7).unwrap();
        let v = drift_verdict(&corner, 0, &centred, frame, Projection::MeanBox).unwrap();
        assert_eq!(v.projected_cells, vec![0]);
        assert!(!v.keep);
        let middle = tube_at(BoundingBox::new(31.0, 31.0, 39.0, 39.0).unwrap());
        assert!(drift_verdict(&middle, 0, &centred, frame, Projection::MeanBox).unwrap().keep);

        // off-map boxes have no support
        let outside = tube_at(BoundingBox::new(80.0, 80.0, 90.0, 90.0).unwrap());
        assert!(!drift_verdict(&outside, 0, &centred, frame, Projection::MeanBox).unwrap().keep);
    }

    #[test]
    fn em_recovers_two_separated_clusters() {
        let mut data = Vec::new();
        for i in 0..200 {
            let jitter = (i % 7) as f64 * 0.01;
            data.push(vec![-5.0 + jitter]);
            data.push(vec![5.0 - jitter]);
        }
        let g = GaussianMixture::fit(&data, 2, 3, 100, 1e-6).unwrap();
        let mut means: Vec<f64> = g.means.iter().map(|m| m[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 4.97).abs() < 0.05 && (means[1] - 4.97).abs() < 0.05);
        assert!((g.weights[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nearest_centroid_accuracy() {
        // one cell; class 0 near 0, class 1 near 10
        let s = |v: f64, l| (vec![vec![v]], l);
        let train = vec![s(0.0, 0), s(0.2, 0), s(10.0, 1), s(9.8, 1)];
        let test = vec![s(0.1, 0), s(6.0, 0), s(9.9, 1)];
        let a = cell_accuracies(&train, &test, 3).unwrap();
        assert_eq!(a[0], vec![0.5]);
        assert_eq!(a[1], vec![1.0]);
        assert!((a[2][0] - 1.0 / 3.0).abs() < 1e-15);
    }
}

//! Initial over-segmentation.
//!
//! Two initializers produce the small regions the graph is built from:
//! joint spatial/range mean-shift mode seeking, and grid superpixels refined
//! by connected k-means under an intensity + convexity cost. Both return a
//! compact [`LabelMap`] whose regions are 4-connected.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{LabImage, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanShiftParams {
    /// Gaussian spatial bandwidth in pixels; also the neighborhood radius.
    pub spatial_bandwidth: f64,
    /// Gaussian range bandwidth in LAB units.
    pub range_bandwidth: f64,
    pub max_iters: usize,
    /// Trajectories stop once a step moves less than this (joint norm).
    pub convergence_eps: f64,
    /// Regions smaller than this are absorbed by their most similar neighbor.
    pub min_region_size: usize,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            spatial_bandwidth: 8.0,
            range_bandwidth: 10.0,
            max_iters: 50,
            convergence_eps: 0.1,
            min_region_size: 20,
        }
    }
}

impl MeanShiftParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("mean-shift: {m}")));
        if !(self.spatial_bandwidth > 0.0 && self.range_bandwidth > 0.0) {
            return bad("bandwidths must be positive");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if !(self.convergence_eps > 0.0) {
            return bad("convergence_eps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuperpixelParams {
    pub target_regions: usize,
    /// Weight of the intensity (L channel) term.
    pub lambda1: f64,
    /// Weight of the squared distance to the segment center.
    pub lambda2: f64,
    pub max_sweeps: usize,
}

impl Default for SuperpixelParams {
    fn default() -> Self {
        Self {
            target_regions: 600,
            lambda1: 1.0,
            lambda2: 0.1,
            max_sweeps: 20,
        }
    }
}

impl SuperpixelParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_regions < 1 {
            return Err(Error::InvalidParameter("superpixels: target_regions must be at least 1".into()));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidParameter("superpixels: lambdas must be non-negative".into()));
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets; the smaller root index survives.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[drop] = keep;
        }
    }
}

/// Converged `(x, y, L, a, b)` point of one pixel trajectory.
type Mode = [f64; 5];

fn seek_mode(img: &LabImage, px: usize, py: usize, p: &MeanShiftParams) -> Mode {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let hs = p.spatial_bandwidth;
    let hr = p.range_bandwidth;
    let radius = hs.ceil() as isize;
    let inv_hs2 = 1.0 / (hs * hs);
    let inv_hr2 = 1.0 / (hr * hr);
    // neighbors further than three range bandwidths carry < 1.2% weight
    let range_cut = 9.0 * hr * hr;
    let data = img.data();

    let lab = img.get(px, py);
    let mut cur: Mode = [px as f64, py as f64, lab[0], lab[1], lab[2]];
    for _ in 0..p.max_iters {
        let cx = cur[0].round() as isize;
        let cy = cur[1].round() as isize;
        let mut acc = [0.0f64; 5];
        let mut wsum = 0.0;
        for qy in (cy - radius).max(0)..=(cy + radius).min(h - 1) {
            let dy = qy as f64 - cur[1];
            let dy2 = dy * dy;
            let row = (qy * w) as usize;
            for qx in (cx - radius).max(0)..=(cx + radius).min(w - 1) {
                let dx = qx as f64 - cur[0];
                let ds2 = dx * dx + dy2;
                if ds2 > hs * hs {
                    continue;
                }
                let q = data[row + qx as usize];
                let (d0, d1, d2) = (q[0] - cur[2], q[1] - cur[3], q[2] - cur[4]);
                let dr2 = d0 * d0 + d1 * d1 + d2 * d2;
                if dr2 > range_cut {
                    continue;
                }
                let k = (-0.5 * (ds2 * inv_hs2 + dr2 * inv_hr2)).exp();
                wsum += k;
                acc[0] += k * qx as f64;
                acc[1] += k * qy as f64;
                acc[2] += k * q[0];
                acc[3] += k * q[1];
                acc[4] += k * q[2];
            }
        }
        if wsum <= 0.0 {
            break;
        }
        let next = acc.map(|v| v / wsum);
        let shift2: f64 = next.iter().zip(&cur).map(|(a, b)| (a - b) * (a - b)).sum();
        cur = next;
        if shift2.sqrt() < p.convergence_eps {
            break;
        }
    }
    cur
}

/// Mean-shift mode seeking in the joint spatial-range domain.
///
/// Every pixel climbs to a density mode under a Gaussian kernel restricted
/// to a disc of radius `spatial_bandwidth`. Adjacent pixels whose modes lie
/// within both bandwidths of each other join the same region; regions below
/// `min_region_size` are then absorbed into the neighbor with the closest
/// mean color.
pub fn meanshift_segment(img: &LabImage, params: &MeanShiftParams) -> Result<LabelMap> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let modes: Vec<Mode> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| seek_mode(img, x, y, params))
        .collect();

    let hs2 = params.spatial_bandwidth * params.spatial_bandwidth;
    let hr2 = params.range_bandwidth * params.range_bandwidth;
    let close = |a: &Mode, b: &Mode| {
        let ds2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        let dr2 = (a[2] - b[2]).powi(2) + (a[3] - b[3]).powi(2) + (a[4] - b[4]).powi(2);
        ds2 < hs2 && dr2 < hr2
    };
    let mut dsu = DisjointSet::new(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && close(&modes[i], &modes[i + 1]) {
                dsu.union(i, i + 1);
            }
            if y + 1 < h && close(&modes[i], &modes[i + w]) {
                dsu.union(i, i + w);
            }
        }
    }
    let raw: Vec<u32> = (0..w * h).map(|i| dsu.find(i) as u32).collect();
    let labels = LabelMap::new(w, h, raw)?.compacted();
    Ok(absorb_small_regions(img, labels, params.min_region_size))
}

/// Repeatedly merges regions smaller than `min_size` into the adjacent
/// region with the nearest mean LAB color (ties: lowest id).
pub(crate) fn absorb_small_regions(img: &LabImage, mut labels: LabelMap, min_size: usize) -> LabelMap {
    let (w, h) = labels.dims();
    loop {
        let n = labels.max_label() as usize + 1;
        if n <= 1 {
            return labels;
        }
        let mut count = vec![0usize; n];
        let mut sum = vec![[0.0f64; 3]; n];
        for (&l, lab) in labels.labels().iter().zip(img.data()) {
            count[l as usize] += 1;
            for k in 0..3 {
                sum[l as usize][k] += lab[k];
            }
        }
        let mean: Vec<[f64; 3]> = sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| s.map(|v| v / c.max(1) as f64))
            .collect();
        let mut small: Vec<usize> = (0..n).filter(|&r| count[r] < min_size).collect();
        if small.is_empty() {
            return labels;
        }
        let mut neighbors = vec![BTreeSet::new(); n];
        let l = labels.labels();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let a = l[i] as usize;
                for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                    let b = l[j] as usize;
                    if a != b {
                        neighbors[a].insert(b);
                        neighbors[b].insert(a);
                    }
                }
            }
        }
        small.sort_by_key(|&r| (count[r], r));
        let mut dsu = DisjointSet::new(n);
        let mut merged_any = false;
        for r in small {
            let dist = |o: usize| -> f64 { (0..3).map(|k| (mean[r][k] - mean[o][k]).powi(2)).sum() };
            let best = neighbors[r]
                .iter()
                .copied()
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
            if let Some(o) = best {
                dsu.union(r, o);
                merged_any = true;
            }
        }
        if !merged_any {
            return labels;
        }
        let raw: Vec<u32> = l.iter().map(|&v| dsu.find(v as usize) as u32).collect();
        labels = LabelMap::new(w, h, raw).expect("same dimensions").compacted();
    }
}

/// Grid dimensions `(cols, rows)` giving roughly `target` cells.
fn grid_shape(width: usize, height: usize, target: usize) -> (usize, usize) {
    let cols = ((target as f64 * width as f64 / height as f64).sqrt().round() as usize).clamp(1, width);
    let rows = ((target as f64 / cols as f64).round() as usize).clamp(1, height);
    (cols, rows)
}

/// The regular grid the superpixel refinement starts from.
pub fn initial_grid(width: usize, height: usize, target: usize) -> LabelMap {
    let (cols, rows) = grid_shape(width, height, target);
    LabelMap::from_fn(width, height, |x, y| ((y * rows / height) * cols + x * cols / width) as u32)
}

/// Whether removing the center pixel keeps its segment 4-connected, judged
/// from the 3x3 neighborhood: every 4-neighbor inside the segment must be
/// reachable from the others through segment pixels on the 8-ring.
fn is_simple(labels: &[u32], w: usize, h: usize, x: usize, y: usize) -> bool {
    const RING: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    let l = labels[y * w + x];
    let inside: Vec<bool> = RING
        .iter()
        .map(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && labels[ny as usize * w + nx as usize] == l
        })
        .collect();
    let Some(start) = inside.iter().position(|&v| !v) else {
        return true;
    };
    // runs of consecutive segment pixels on the ring are its 4-connected pieces
    let mut runs_with_edge_neighbor = 0;
    let mut in_run = false;
    let mut run_has_edge = false;
    for step in 1..=8 {
        let k = (start + step) % 8;
        if inside[k] {
            in_run = true;
            run_has_edge |= k % 2 == 1;
        } else if in_run {
            runs_with_edge_neighbor += usize::from(run_has_edge);
            in_run = false;
            run_has_edge = false;
        }
    }
    runs_with_edge_neighbor <= 1
}

/// Grid superpixels refined by connected k-means.
///
/// Boundary pixels move to the adjacent segment minimizing
/// `lambda1·|L − L_i| + lambda2·((x − cx_i)² + (y − cy_i)²)` as long as the
/// segment they leave stays 4-connected and non-empty. Segment means and
/// centers update after every move.
pub fn superpixel_segment(img: &LabImage, params: &SuperpixelParams) -> Result<LabelMap> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    if params.target_regions > w * h {
        return Err(Error::InvalidParameter(format!(
            "superpixels: target_regions {} exceeds pixel count {}",
            params.target_regions,
            w * h
        )));
    }
    let grid = initial_grid(w, h, params.target_regions);
    let n = grid.max_label() as usize + 1;
    let mut labels = grid.labels().to_vec();
    let intensity: Vec<f64> = img.data().iter().map(|p| p[0]).collect();

    let mut count = vec![0.0f64; n];
    let mut sum_i = vec![0.0f64; n];
    let mut sum_x = vec![0.0f64; n];
    let mut sum_y = vec![0.0f64; n];
    for (i, &l) in labels.iter().enumerate() {
        let l = l as usize;
        count[l] += 1.0;
        sum_i[l] += intensity[i];
        sum_x[l] += (i % w) as f64;
        sum_y[l] += (i / w) as f64;
    }

    for _ in 0..params.max_sweeps {
        let mut moves = 0usize;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let own = labels[i] as usize;
                let mut candidates = [usize::MAX; 4];
                for (slot, j) in [
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                ]
                .into_iter()
                .enumerate()
                {
                    if let Some(j) = j {
                        if labels[j] as usize != own {
                            candidates[slot] = labels[j] as usize;
                        }
                    }
                }
                if candidates.iter().all(|&c| c == usize::MAX) {
                    continue;
                }
                let cost = |s: usize| {
                    let mean = sum_i[s] / count[s];
                    let (cx, cy) = (sum_x[s] / count[s], sum_y[s] / count[s]);
                    params.lambda1 * (intensity[i] - mean).abs()
                        + params.lambda2 * ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2))
                };
                let own_cost = cost(own);
                let mut best: Option<(f64, usize)> = None;
                for &c in candidates.iter().filter(|&&c| c != usize::MAX) {
                    let cc = cost(c);
                    if cc < own_cost && best.is_none_or(|(bc, bl)| cc < bc || (cc == bc && c < bl)) {
                        best = Some((cc, c));
                    }
                }
                let Some((_, target)) = best else { continue };
                if count[own] <= 1.0 || !is_simple(&labels, w, h, x, y) {
                    continue;
                }
                labels[i] = target as u32;
                count[own] -= 1.0;
                sum_i[own] -= intensity[i];
                sum_x[own] -= x as f64;
                sum_y[own] -= y as f64;
                count[target] += 1.0;
                sum_i[target] += intensity[i];
                sum_x[target] += x as f64;
                sum_y[target] += y as f64;
                moves += 1;
            }
        }
        if moves == 0 {
            break;
        }
    }
    Ok(LabelMap::new(w, h, labels)?.compacted())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::{rgb_to_lab, RgbImage};

    fn flat(w: usize, h: usize, lab: [f64; 3]) -> LabImage {
        LabImage::from_fn(w, h, |_, _| lab)
    }

    fn is_four_connected(labels: &LabelMap) -> bool {
        let (w, h) = labels.dims();
        let n = labels.max_label() as usize + 1;
        let mut seen = vec![false; w * h];
        let mut visited_regions = vec![false; n];
        for start in 0..w * h {
            if seen[start] {
                continue;
            }
            let l = labels.labels()[start];
            if visited_regions[l as usize] {
                return false;
            }
            visited_regions[l as usize] = true;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                for j in [
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                ]
                .into_iter()
                .flatten()
                {
                    if !seen[j] && labels.labels()[j] == l {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        true
    }

    #[test]
    fn meanshift_constant_image_is_one_region() {
        let labels = meanshift_segment(&flat(24, 17, [50.0, 10.0, -5.0]), &MeanShiftParams::default()).unwrap();
        assert_eq!(labels.region_count(), 1);
    }

    #[test]
    fn meanshift_red_blue_halves() {
        let rgb = RgbImage::from_fn(40, 40, |x, _| if x < 20 { [255, 0, 0] } else { [0, 0, 255] });
        let labels = meanshift_segment(&rgb_to_lab(&rgb), &MeanShiftParams::default()).unwrap();
        assert_eq!(labels.region_count(), 2);
        for y in 0..40 {
            for x in 0..40 {
                assert_eq!(labels.get(x, y), u32::from(x >= 20), "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn meanshift_absorbs_specks() {
        let mut img = flat(30, 30, [40.0, 0.0, 0.0]).data().to_vec();
        img[15 * 30 + 15] = [90.0, 0.0, 0.0];
        let img = LabImage::new(30, 30, img).unwrap();
        let labels = meanshift_segment(&img, &MeanShiftParams::default()).unwrap();
        assert_eq!(labels.region_count(), 1);
        let keep = MeanShiftParams { min_region_size: 1, ..Default::default() };
        assert_eq!(meanshift_segment(&img, &keep).unwrap().region_count(), 2);
    }

    #[test]
    fn meanshift_rejects_bad_params() {
        let p = MeanShiftParams { range_bandwidth: 0.0, ..Default::default() };
        assert!(meanshift_segment(&flat(4, 4, [0.0; 3]), &p).is_err());
    }

    #[test]
    fn grid_constant_image_keeps_rectangles() {
        let labels = superpixel_segment(&flat(20, 10, [30.0, 0.0, 0.0]), &SuperpixelParams {
            target_regions: 8,
            ..Default::default()
        })
        .unwrap();
        // cols = round(sqrt(8·20/10)) = 4, rows = round(8/4) = 2
        assert_eq!(labels.region_count(), 8);
        assert_eq!(labels, initial_grid(20, 10, 8));
        assert_eq!(labels.get(0, 0), 0);
        assert_eq!(labels.get(5, 0), 1);
        assert_eq!(labels.get(0, 5), 4);
        assert_eq!(labels.get(19, 9), 7);
    }

    #[test]
    fn zero_intensity_weight_keeps_grid() {
        let img = LabImage::from_fn(37, 23, |x, y| [((x * 7 + y * 13) % 100) as f64, 0.0, 0.0]);
        let p = SuperpixelParams { target_regions: 12, lambda1: 0.0, lambda2: 1.0, max_sweeps: 10 };
        assert_eq!(superpixel_segment(&img, &p).unwrap(), initial_grid(37, 23, 12));
    }

    #[test]
    fn superpixels_snap_to_edge() {
        // grid line at x = 10, color edge at x = 13
        let img = LabImage::from_fn(20, 20, |x, _| [if x < 13 { 20.0 } else { 80.0 }, 0.0, 0.0]);
        let p = SuperpixelParams { target_regions: 4, lambda1: 10.0, lambda2: 0.01, max_sweeps: 50 };
        let labels = superpixel_segment(&img, &p).unwrap();
        assert!(is_four_connected(&labels));
        for y in 0..20 {
            let left = labels.get(0, y);
            let right = labels.get(19, y);
            for x in 0..20 {
                let want = if x < 13 { left } else { right };
                assert_eq!(labels.get(x, y), want, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn superpixels_reject_too_many_regions() {
        let p = SuperpixelParams { target_regions: 17, ..Default::default() };
        assert!(matches!(superpixel_segment(&flat(4, 4, [0.0; 3]), &p), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn simple_point_detection() {
        // removing the middle of a 1-pixel-wide vertical bar splits it
        let bar = [1, 0, 1, 1, 0, 1, 1, 0, 1];
        assert!(!is_simple(&bar, 3, 3, 1, 1));
        // corner of a filled block is fine
        let block = [0; 9];
        assert!(is_simple(&block, 3, 3, 1, 1));
        assert!(is_simple(&block, 3, 3, 0, 0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn blocky_image() -> impl Strategy<Value = LabImage> {
            (4usize..18, 4usize..18, proptest::collection::vec(0u8..4, 16)).prop_map(|(w, h, palette)| {
                LabImage::from_fn(w, h, |x, y| {
                    let c = palette[(x / 5).min(3) + 4 * (y / 5).min(3)] as f64;
                    [20.0 + 20.0 * c, 5.0 * c, -3.0 * c]
                })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn meanshift_regions_are_compact_and_connected(img in blocky_image()) {
                let p = MeanShiftParams { min_region_size: 3, ..Default::default() };
                let labels = meanshift_segment(&img, &p).unwrap();
                prop_assert!(labels.is_compact());
                prop_assert!(is_four_connected(&labels));
            }

            #[test]
            fn superpixel_regions_are_compact_and_connected(img in blocky_image(), k in 1usize..9) {
                let p = SuperpixelParams { target_regions: k, lambda1: 1.0, lambda2: 0.05, max_sweeps: 10 };
                let labels = superpixel_segment(&img, &p).unwrap();
                prop_assert!(labels.is_compact());
                prop_assert!(is_four_connected(&labels));
            }

            #[test]
            fn meanshift_ignores_global_color_offset(img in blocky_image()) {
                let p = MeanShiftParams { min_region_size: 3, ..Default::default() };
                let shifted = LabImage::from_fn(img.width(), img.height(), |x, y| {
                    let [l, a, b] = img.get(x, y);
                    [l + 4.0, a - 8.0, b + 16.0]
                });
                prop_assert_eq!(meanshift_segment(&img, &p).unwrap(), meanshift_segment(&shifted, &p).unwrap());
            }
        }
    }
}

//! Region descriptors and pairwise similarities.
//!
//! Color: squared distance between mean LAB vectors turned into a similarity
//! by an RBF kernel. Texture: cosine similarity of region HOG vectors.
//! The edge weight blends the two as `a·√(t·c) + (1 − a)·c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{GrayImage, LabImage, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub id: u32,
    pub pixel_count: usize,
    pub mean_lab: [f64; 3],
    /// Population variance per channel.
    pub variance_lab: [f64; 3],
    pub bbox: BoundingBox,
    /// Concatenated block-normalized cell histograms; empty until computed.
    pub hog: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityParams {
    /// RBF width for the color similarity, in LAB units.
    pub sigma: f64,
    /// Balance between texture-color (`a`) and color-only (`1 − a`) terms.
    pub a: f64,
    /// HOG cell side in pixels.
    pub hog_cell: usize,
    pub hog_bins: usize,
    /// HOG block side in cells.
    pub hog_block: usize,
    /// Edges weaker than this are left out of the graph handed to community
    /// detection.
    pub min_edge_weight: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            sigma: 16.0,
            a: 0.4,
            hog_cell: 8,
            hog_bins: 9,
            hog_block: 2,
            min_edge_weight: 0.1,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return bad(format!("a must lie in [0, 1], got {}", self.a));
        }
        if self.hog_cell < 2 || self.hog_bins < 2 || self.hog_block < 1 {
            return bad("HOG needs cell >= 2, bins >= 2, block >= 1".into());
        }
        if !(self.min_edge_weight >= 0.0) {
            return bad("min_edge_weight must be non-negative".into());
        }
        Ok(())
    }
}

/// Per-region pixel count, LAB mean/variance and bounding box (HOG left empty).
pub fn region_stats(img: &LabImage, labels: &LabelMap) -> Result<Vec<RegionStats>> {
    if (img.width(), img.height()) != labels.dims() {
        return Err(Error::dims((img.width(), img.height()), labels.dims()));
    }
    if !labels.is_compact() {
        return Err(Error::NonCompactLabels("region_stats needs ids 0..n".into()));
    }
    let n = labels.max_label() as usize + 1;
    let w = labels.width();
    let mut count = vec![0usize; n];
    let mut sum = vec![[0.0f64; 3]; n];
    let mut bbox = vec![
        BoundingBox {
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
        };
        n
    ];
    for (i, (&l, lab)) in labels.labels().iter().zip(img.data()).enumerate() {
        let r = l as usize;
        count[r] += 1;
        for k in 0..3 {
            sum[r][k] += lab[k];
        }
        let (x, y) = (i % w, i / w);
        let b = &mut bbox[r];
        b.min_x = b.min_x.min(x);
        b.min_y = b.min_y.min(y);
        b.max_x = b.max_x.max(x);
        b.max_y = b.max_y.max(y);
    }
    let mean: Vec<[f64; 3]> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| s.map(|v| v / c as f64))
        .collect();
    // second pass: centered sums are exact enough for LAB magnitudes
    let mut sq = vec![[0.0f64; 3]; n];
    for (&l, lab) in labels.labels().iter().zip(img.data()) {
        let r = l as usize;
        for k in 0..3 {
            let d = lab[k] - mean[r][k];
            sq[r][k] += d * d;
        }
    }
    Ok((0..n)
        .map(|r| RegionStats {
            id: r as u32,
            pixel_count: count[r],
            mean_lab: mean[r],
            variance_lab: sq[r].map(|v| v / count[r] as f64),
            bbox: bbox[r],
            hog: Vec::new(),
        })
        .collect())
}

/// Squared Euclidean distance between region mean colors.
pub fn color_distance(ri: &RegionStats, rj: &RegionStats) -> f64 {
    mean_distance(&ri.mean_lab, &rj.mean_lab)
}

pub fn mean_distance(mi: &[f64; 3], mj: &[f64; 3]) -> f64 {
    mi.iter().zip(mj).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// RBF similarity `exp(−D / (2σ²))` of a squared color distance.
pub fn rbf_similarity(distance: f64, sigma: f64) -> f64 {
    (-distance / (2.0 * sigma * sigma)).exp()
}

pub fn color_similarity(ri: &RegionStats, rj: &RegionStats, sigma: f64) -> f64 {
    rbf_similarity(color_distance(ri, rj), sigma)
}

/// Cosine similarity of two HOG vectors; the shorter is zero-padded and a
/// zero vector on either side gives 0.
pub fn texture_similarity(hi: &[f64], hj: &[f64]) -> f64 {
    let dot: f64 = hi.iter().zip(hj).map(|(a, b)| a * b).sum();
    let ni = hi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nj = hj.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ni == 0.0 || nj == 0.0 {
        return 0.0;
    }
    (dot / (ni * nj)).clamp(0.0, 1.0)
}

/// `a·√(t·c) + (1 − a)·c`.
pub fn blend_weight(texture: f64, color: f64, a: f64) -> f64 {
    a * (texture * color).sqrt() + (1.0 - a) * color
}

pub fn edge_weight(ri: &RegionStats, rj: &RegionStats, params: &SimilarityParams) -> f64 {
    let c = color_similarity(ri, rj, params.sigma);
    let t = texture_similarity(&ri.hog, &rj.hog);
    blend_weight(t, c, params.a)
}

/// Per-pixel gradient magnitude and unsigned orientation, shared by every
/// region's HOG computation.
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    magnitude: Vec<f64>,
    /// Degrees in `[0, 180)`.
    orientation: Vec<f64>,
}

impl GradientField {
    /// Central differences `[-1, 0, 1]` with replicated borders.
    pub fn new(gray: &GrayImage) -> Self {
        let (w, h) = (gray.width(), gray.height());
        let mut magnitude = Vec::with_capacity(w * h);
        let mut orientation = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let gx = gray.get((x + 1).min(w - 1), y) - gray.get(x.saturating_sub(1), y);
                let gy = gray.get(x, (y + 1).min(h - 1)) - gray.get(x, y.saturating_sub(1));
                magnitude.push((gx * gx + gy * gy).sqrt());
                let mut deg = gy.atan2(gx).to_degrees();
                if deg < 0.0 {
                    deg += 180.0;
                }
                if deg >= 180.0 {
                    deg -= 180.0;
                }
                orientation.push(deg);
            }
        }
        Self {
            width: w,
            height: h,
            magnitude,
            orientation,
        }
    }
}

/// Orientation histogram of the pixels in `[x0, x1) × [y0, y1)`. Bin `k` is
/// centered on `k·180/bins` degrees and votes are split linearly between the
/// two nearest centers.
fn cell_histogram(field: &GradientField, (x0, x1): (usize, usize), (y0, y1): (usize, usize), bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    let width = 180.0 / bins as f64;
    for y in y0..y1.min(field.height) {
        for x in x0..x1.min(field.width) {
            let i = y * field.width + x;
            let m = field.magnitude[i];
            if m == 0.0 {
                continue;
            }
            let pos = field.orientation[i] / width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = lo as usize % bins;
            hist[lo] += m * (1.0 - frac);
            hist[(lo + 1) % bins] += m * frac;
        }
    }
    hist
}

fn l2_normalize(v: &mut [f64]) {
    const EPS: f64 = 1e-6;
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + EPS * EPS).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Builds HOG vectors for the regions of one label map.
pub struct HogExtractor<'a> {
    field: GradientField,
    labels: &'a LabelMap,
    params: SimilarityParams,
}

impl<'a> HogExtractor<'a> {
    pub fn new(gray: &GrayImage, labels: &'a LabelMap, params: &SimilarityParams) -> Result<Self> {
        if (gray.width(), gray.height()) != labels.dims() {
            return Err(Error::dims((gray.width(), gray.height()), labels.dims()));
        }
        params.validate()?;
        Ok(Self {
            field: GradientField::new(gray),
            labels,
            params: *params,
        })
    }

    /// HOG vector of `region` whose pixels span `bbox`.
    ///
    /// The box is tiled into cells from its top-left corner, the last row and
    /// column clipped to the box; a cell belongs to the region when its
    /// (clipped) center pixel does. Blocks of `hog_block²`
    /// cells slide with a one-cell stride and are L2-normalized; cells that
    /// are not members contribute zeros. A region whose cell grid cannot hold
    /// a full block gets one block: the sum of its member cell histograms.
    pub fn region(&self, region: u32, bbox: &BoundingBox) -> Vec<f64> {
        let p = &self.params;
        let cell = p.hog_cell;
        let (gw, gh) = (bbox.width().div_ceil(cell), bbox.height().div_ceil(cell));
        let mut cells: Vec<Option<Vec<f64>>> = Vec::with_capacity(gw * gh);
        for cy in 0..gh {
            for cx in 0..gw {
                let (x0, y0) = (bbox.min_x + cx * cell, bbox.min_y + cy * cell);
                let (x1, y1) = ((x0 + cell).min(bbox.max_x + 1), (y0 + cell).min(bbox.max_y + 1));
                let member = self.labels.get(x0 + (x1 - x0) / 2, y0 + (y1 - y0) / 2) == region;
                cells.push(member.then(|| cell_histogram(&self.field, (x0, x1), (y0, y1), p.hog_bins)));
            }
        }
        let b = p.hog_block;
        if gw < b || gh < b {
            let mut block = vec![0.0; p.hog_bins];
            for hist in cells.iter().flatten() {
                block.iter_mut().zip(hist).for_each(|(s, v)| *s += v);
            }
            l2_normalize(&mut block);
            return block;
        }
        let mut out = Vec::with_capacity((gw - b + 1) * (gh - b + 1) * b * b * p.hog_bins);
        for by in 0..=gh - b {
            for bx in 0..=gw - b {
                let start = out.len();
                for cy in by..by + b {
                    for cx in bx..bx + b {
                        match &cells[cy * gw + cx] {
                            Some(hist) => out.extend_from_slice(hist),
                            None => out.extend(std::iter::repeat_n(0.0, p.hog_bins)),
                        }
                    }
                }
                l2_normalize(&mut out[start..]);
            }
        }
        out
    }

    /// Fills `hog` for every region in `stats`.
    pub fn fill(&self, stats: &mut [RegionStats]) {
        use rayon::prelude::*;
        stats.par_iter_mut().for_each(|s| s.hog = self.region(s.id, &s.bbox));
    }
}

/// HOG vector of a single region.
pub fn region_hog(gray: &GrayImage, labels: &LabelMap, region: u32, params: &SimilarityParams) -> Result<Vec<f64>> {
    let extractor = HogExtractor::new(gray, labels, params)?;
    let bbox = region_bbox(labels, region).ok_or(Error::UnknownRegion(region))?;
    Ok(extractor.region(region, &bbox))
}

fn region_bbox(labels: &LabelMap, region: u32) -> Option<BoundingBox> {
    let w = labels.width();
    let mut bbox: Option<BoundingBox> = None;
    for (i, _) in labels.labels().iter().enumerate().filter(|(_, &l)| l == region) {
        let (x, y) = (i % w, i / w);
        let b = bbox.get_or_insert(BoundingBox {
            min_x: x,
            min_y: y,
            max_x: x,
            max_y: y,
        });
        b.min_x = b.min_x.min(x);
        b.min_y = b.min_y.min(y);
        b.max_x = b.max_x.max(x);
        b.max_y = b.max_y.max(y);
    }
    bbox
}

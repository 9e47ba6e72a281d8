//! Segmentation scores against one or more ground truths: probabilistic Rand
//! index, variation of information, and boundary precision/recall/F.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::LabelMap;

/// Pixel-count contingency table of two label maps.
struct Contingency {
    total: f64,
    joint: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl Contingency {
    fn new(a: &LabelMap, b: &LabelMap) -> Result<Self> {
        check_dims(a, b)?;
        let mut ids_a = HashMap::new();
        let mut ids_b = HashMap::new();
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
        for (&x, &y) in a.labels().iter().zip(b.labels()) {
            let i = *ids_a.entry(x).or_insert_with(|| {
                rows.push(0.0);
                rows.len() - 1
            });
            let j = *ids_b.entry(y).or_insert_with(|| {
                cols.push(0.0);
                cols.len() - 1
            });
            rows[i] += 1.0;
            cols[j] += 1.0;
            *joint.entry((i, j)).or_insert(0.0) += 1.0;
        }
        let mut joint: Vec<_> = joint.into_iter().collect();
        joint.sort_by_key(|&(k, _)| k);
        Ok(Self {
            total: a.labels().len() as f64,
            joint: joint.into_iter().map(|(_, v)| v).collect(),
            rows,
            cols,
        })
    }
}

fn check_dims(a: &LabelMap, b: &LabelMap) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    Ok(())
}

fn check_gts(test: &LabelMap, gts: &[LabelMap]) -> Result<()> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    gts.iter().try_for_each(|g| check_dims(test, g))
}

fn pairs(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Rand index: fraction of pixel pairs on which the two maps agree (both
/// together or both apart). A one-pixel image scores 1.
pub fn rand_index(a: &LabelMap, b: &LabelMap) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let all = pairs(t.total);
    if all == 0.0 {
        return Ok(1.0);
    }
    let both: f64 = t.joint.iter().map(|&n| pairs(n)).sum();
    let in_a: f64 = t.rows.iter().map(|&n| pairs(n)).sum();
    let in_b: f64 = t.cols.iter().map(|&n| pairs(n)).sum();
    Ok((all + 2.0 * both - in_a - in_b) / all)
}

/// Probabilistic Rand index: pair agreement with the fraction of ground
/// truths grouping each pair, which is the mean Rand index over `gts`.
pub fn pri(test: &LabelMap, gts: &[LabelMap]) -> Result<f64> {
    check_gts(test, gts)?;
    let total: f64 = gts.iter().map(|g| rand_index(test, g)).sum::<Result<f64>>()?;
    Ok(total / gts.len() as f64)
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Variation of information `H(A) + H(B) − 2 I(A;B)` in nats.
pub fn voi(a: &LabelMap, b: &LabelMap) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let h_joint = entropy(&t.joint, t.total);
    let ha = entropy(&t.rows, t.total);
    let hb = entropy(&t.cols, t.total);
    // H(A) + H(B) − 2I = 2H(A,B) − H(A) − H(B)
    Ok((2.0 * h_joint - ha - hb).max(0.0))
}

/// Mean VOI over ground truths.
pub fn voi_multi(test: &LabelMap, gts: &[LabelMap]) -> Result<f64> {
    check_gts(test, gts)?;
    let total: f64 = gts.iter().map(|g| voi(test, g)).sum::<Result<f64>>()?;
    Ok(total / gts.len() as f64)
}

/// `F = PR / ((1 − α)R + αP)`; 0 when the denominator vanishes.
pub fn f_measure(precision: f64, recall: f64, alpha: f64) -> f64 {
    let den = (1.0 - alpha) * recall + alpha * precision;
    if den <= 0.0 {
        0.0
    } else {
        precision * recall / den
    }
}

/// How boundary scores combine over several ground truths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Precision and recall per ground truth, then averaged.
    #[default]
    Mean,
    /// Precision against the union of all ground-truth boundaries, recall
    /// of the best-recalled ground truth.
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Offsets within Euclidean distance `tol`.
fn disc(tol: f64) -> Vec<(isize, isize)> {
    let r = tol.floor() as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= tol * tol {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Number of set pixels in `from` with a set pixel of `to` within the disc.
fn matched(from: &[bool], to: &[bool], w: usize, h: usize, offsets: &[(isize, isize)]) -> usize {
    (0..from.len())
        .filter(|&i| from[i])
        .filter(|&i| {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            offsets.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && to[ny as usize * w + nx as usize]
            })
        })
        .count()
}

/// Matched fraction of `from`; an empty `from` scores 1 if `to` is empty too,
/// else 0.
fn matched_fraction(from: &[bool], to: &[bool], w: usize, h: usize, offsets: &[(isize, isize)]) -> f64 {
    let n = from.iter().filter(|&&b| b).count();
    if n == 0 {
        return if to.iter().any(|&b| b) { 0.0 } else { 1.0 };
    }
    matched(from, to, w, h, offsets) as f64 / n as f64
}

/// Boundary precision and recall of `test` against a single ground truth.
pub fn boundary_pr(test: &LabelMap, gt: &LabelMap, tol: f64) -> Result<(f64, f64)> {
    check_dims(test, gt)?;
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("boundary tolerance {tol}")));
    }
    let (w, h) = test.dims();
    let offsets = disc(tol);
    let tb = test.boundary_mask();
    let gb = gt.boundary_mask();
    Ok((matched_fraction(&tb, &gb, w, h, &offsets), matched_fraction(&gb, &tb, w, h, &offsets)))
}

/// Boundary precision, recall and F (α = 0.5) against several ground
/// truths. Boundary pixels are pixels with a differently labeled 4-neighbor;
/// a boundary pixel is matched when the other map has a boundary pixel
/// within Euclidean distance `tol`.
pub fn boundary_prf(test: &LabelMap, gts: &[LabelMap], tol: f64, mode: BoundaryMode) -> Result<BoundaryScore> {
    check_gts(test, gts)?;
    let per_gt: Vec<(f64, f64)> = gts.iter().map(|g| boundary_pr(test, g, tol)).collect::<Result<_>>()?;
    let (precision, recall) = match mode {
        BoundaryMode::Mean => {
            let k = per_gt.len() as f64;
            (
                per_gt.iter().map(|p| p.0).sum::<f64>() / k,
                per_gt.iter().map(|p| p.1).sum::<f64>() / k,
            )
        }
        BoundaryMode::Union => {
            let (w, h) = test.dims();
            let mut union = vec![false; w * h];
            for g in gts {
                union.iter_mut().zip(g.boundary_mask()).for_each(|(u, b)| *u |= b);
            }
            let p = matched_fraction(&test.boundary_mask(), &union, w, h, &disc(tol));
            (p, per_gt.iter().map(|p| p.1).fold(0.0, f64::max))
        }
    };
    Ok(BoundaryScore {
        precision,
        recall,
        f_measure: f_measure(precision, recall, 0.5),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GtScore {
    pub rand_index: f64,
    pub voi: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub pri: f64,
    pub voi: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub per_gt: Vec<GtScore>,
}

/// All metrics at once.
pub fn evaluate(test: &LabelMap, gts: &[LabelMap], tol: f64, mode: BoundaryMode) -> Result<MetricReport> {
    let b = boundary_prf(test, gts, tol, mode)?;
    let per_gt = gts
        .iter()
        .map(|g| {
            let (precision, recall) = boundary_pr(test, g, tol)?;
            Ok(GtScore {
                rand_index: rand_index(test, g)?,
                voi: voi(test, g)?,
                precision,
                recall,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = per_gt.len() as f64;
    Ok(MetricReport {
        pri: per_gt.iter().map(|s| s.rand_index).sum::<f64>() / k,
        voi: per_gt.iter().map(|s| s.voi).sum::<f64>() / k,
        precision: b.precision,
        recall: b.recall,
        f_measure: b.f_measure,
        per_gt,
    })
}

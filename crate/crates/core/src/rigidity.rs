//! Rank segmentation of the domain and flatness of the image on each piece.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, numerical_rank, svd_small, Mat, RankPolicy};
use crate::maps::{BoxDomain, MapSource};
use crate::quad::pairwise_sum;

/// Components with fewer cells than this are reported but not judged.
pub const MIN_COMPONENT_CELLS: usize = 4;

/// A 4-connected set of interior lattice cells with equal numerical rank.
///
/// `rank` is `None` on cells where the jet does not exist (a declared
/// singular set); such components never enter a verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankComponent {
    pub label: usize,
    pub rank: Option<usize>,
    pub size: usize,
    #[serde(skip)]
    pub cells: Vec<Vec<usize>>,
    /// `(domain point, image point)` per cell, in cell order.
    #[serde(skip)]
    pub sample_points: Vec<(Vec<f64>, Vec<f64>)>,
}

impl RankComponent {
    pub fn image_points(&self) -> Vec<Vec<f64>> {
        self.sample_points.iter().map(|(_, y)| y.clone()).collect()
    }
}

fn neighbours(domain: &BoxDomain, idx: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(2 * idx.len());
    for a in 0..idx.len() {
        for d in [-1isize, 1] {
            let k = idx[a] as isize + d;
            if k < 0 {
                continue;
            }
            let mut nb = idx.to_vec();
            nb[a] = k as usize;
            if domain.is_interior(&nb) {
                out.push(nb);
            }
        }
    }
    out
}

/// Flood-fills the interior lattice of `domain` into equal-rank components.
///
/// Labels follow the lexicographic order of each component's first cell.
pub fn rank_segmentation(
    source: &MapSource,
    domain: &BoxDomain,
    policy: &RankPolicy,
) -> Result<Vec<RankComponent>> {
    if !source.domain().contains_box(domain) {
        return Err(Error::OutOfDomain {
            point: domain.lower().to_vec(),
            reason: "segmentation box leaves the source domain".into(),
        });
    }
    let interior = domain.interior_indices();
    if interior.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let ranks: Vec<Option<usize>> = interior
        .par_iter()
        .map(|idx| {
            let x = domain.point(idx);
            match source.eval_jet(&x) {
                Ok(j) => numerical_rank(&j.grad, policy).map(Some),
                Err(Error::SingularPoint { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut cell_rank = vec![None; domain.len()];
    let mut label_of: Vec<Option<usize>> = vec![None; domain.len()];
    for (idx, r) in interior.iter().zip(&ranks) {
        cell_rank[domain.linear_index(idx)] = Some(*r);
    }

    let mut components = Vec::new();
    for start in &interior {
        let lin = domain.linear_index(start);
        if label_of[lin].is_some() {
            continue;
        }
        let label = components.len();
        let rank = cell_rank[lin].expect("interior cell");
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([start.clone()]);
        label_of[lin] = Some(label);
        while let Some(c) = queue.pop_front() {
            for nb in neighbours(domain, &c) {
                let l = domain.linear_index(&nb);
                if label_of[l].is_none() && cell_rank[l] == Some(rank) {
                    label_of[l] = Some(label);
                    queue.push_back(nb);
                }
            }
            cells.push(c);
        }
        cells.sort();
        components.push((label, rank, cells));
    }

    components
        .into_iter()
        .map(|(label, rank, cells)| {
            let sample_points = cells
                .iter()
                .map(|c| {
                    let x = domain.point(c);
                    let y = source.value(&x)?;
                    Ok((x, y))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RankComponent {
                label,
                rank,
                size: cells.len(),
                cells,
                sample_points,
            })
        })
        .collect()
}

/// Best affine subspace of dimension `dim` through a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineFit {
    pub base: Vec<f64>,
    /// Orthonormal directions, strongest first.
    pub basis: Vec<Vec<f64>>,
    pub dim: usize,
    pub rms: f64,
    pub max_dev: f64,
}

impl AffineFit {
    /// Distance from `y` to the fitted subspace.
    pub fn distance(&self, y: &[f64]) -> f64 {
        let mut c: Vec<f64> = y.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        for b in &self.basis {
            let d = dot(&c, b);
            for (ci, bi) in c.iter_mut().zip(b) {
                *ci -= d * bi;
            }
        }
        norm(&c)
    }
}

/// Principal-component fit: centroid base, top `dim` right singular vectors.
pub fn fit_affine(points: &[Vec<f64>], dim: usize) -> Result<AffineFit> {
    let big_n = points.first().map_or(0, Vec::len);
    if points.len() < dim + 1 {
        return Err(Error::TooFewPoints {
            needed: dim + 1,
            got: points.len(),
            dim,
        });
    }
    if big_n == 0 || dim >= big_n {
        return Err(Error::Dimension(format!(
            "fit dimension {dim} must be below the ambient dimension {big_n}"
        )));
    }
    if points.iter().any(|p| p.len() != big_n) {
        return Err(Error::Dimension("points of unequal length".into()));
    }
    let m = points.len() as f64;
    let base: Vec<f64> = (0..big_n)
        .map(|a| pairwise_sum(&points.iter().map(|p| p[a]).collect::<Vec<_>>()) / m)
        .collect();
    let centred: Vec<f64> = points
        .iter()
        .flat_map(|p| p.iter().zip(&base).map(|(x, b)| x - b))
        .collect();
    let basis: Vec<Vec<f64>> = if dim == 0 {
        Vec::new()
    } else {
        let svd = svd_small(&Mat::new(points.len(), big_n, centred)?)?;
        (0..dim).map(|k| svd.v.column(k)).collect()
    };
    let mut fit = AffineFit {
        base,
        basis,
        dim,
        rms: 0.0,
        max_dev: 0.0,
    };
    let d: Vec<f64> = points.iter().map(|p| fit.distance(p)).collect();
    let d2: Vec<f64> = d.iter().map(|v| v * v).collect();
    fit.rms = (pairwise_sum(&d2) / m).sqrt();
    fit.max_dev = d.iter().fold(0.0, |a: f64, &b| a.max(b));
    // Rounding can put the mean square a hair above the max.
    fit.rms = fit.rms.min(fit.max_dev);
    Ok(fit)
}

/// Largest pairwise distance, exact.
pub fn diameter(points: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Angle between two lines given by direction vectors, in `[0, π/2]`.
pub fn line_angle(d1: &[f64], d2: &[f64]) -> f64 {
    let n1 = norm(d1);
    let n2 = norm(d2);
    let u: Vec<f64> = d1.iter().map(|v| v / n1).collect();
    let w: Vec<f64> = d2.iter().map(|v| v / n2).collect();
    let c = dot(&u, &w);
    let perp: Vec<f64> = w.iter().zip(&u).map(|(wi, ui)| wi - c * ui).collect();
    norm(&perp).atan2(c.abs())
}

/// Largest principal angle between the spans of two orthonormal bases.
pub fn subspace_angle(b1: &[Vec<f64>], b2: &[Vec<f64>]) -> f64 {
    if b1.len() == 1 && b2.len() == 1 {
        return line_angle(&b1[0], &b2[0]);
    }
    let cols: Vec<Vec<f64>> = b2
        .iter()
        .map(|v| {
            let mut r = v.clone();
            for b in b1 {
                let d = dot(&r, b);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= d * bi;
                }
            }
            r
        })
        .collect();
    let m = Mat::from_columns(&cols).expect("finite bases");
    let s = svd_small(&m).expect("finite bases").sigma_max();
    s.min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Flat,
    NotFlat,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub component: RankComponent,
    pub fit: Option<AffineFit>,
    pub diameter: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessReport {
    pub components: Vec<ComponentReport>,
    pub tolerance: f64,
    /// Flat iff every judged component is flat.
    pub global_verdict: Verdict,
}

impl FlatnessReport {
    pub fn judged(&self) -> impl Iterator<Item = &ComponentReport> {
        self.components.iter().filter(|c| c.verdict != Verdict::Excluded)
    }
}

fn judge(comp: RankComponent, big_n: usize, tol: f64) -> Result<ComponentReport> {
    let pts = comp.image_points();
    let diam = diameter(&pts);
    let mut report = ComponentReport {
        fit: None,
        diameter: diam,
        verdict: Verdict::Excluded,
        note: None,
        component: comp,
    };
    let Some(rank) = report.component.rank else {
        report.note = Some("singular set: jet undefined".into());
        return Ok(report);
    };
    if report.component.size < MIN_COMPONENT_CELLS {
        report.note = Some(format!("fewer than {MIN_COMPONENT_CELLS} cells"));
        return Ok(report);
    }
    if rank == 0 {
        let fit = fit_affine(&pts, 0)?;
        report.verdict = if diam <= tol { Verdict::Flat } else { Verdict::NotFlat };
        report.fit = Some(fit);
        return Ok(report);
    }
    if rank >= big_n {
        report.verdict = Verdict::Flat;
        report.note = Some(format!("rank {rank} = N: the image is open in R^{big_n}"));
        return Ok(report);
    }
    let fit = fit_affine(&pts, rank)?;
    report.verdict = if fit.max_dev <= tol * (1.0 + diam) {
        Verdict::Flat
    } else {
        Verdict::NotFlat
    };
    report.fit = Some(fit);
    Ok(report)
}

/// Segments by rank and fits each component's image with an affine subspace
/// of dimension equal to its rank.
pub fn flatness_report(
    source: &MapSource,
    domain: &BoxDomain,
    policy: &RankPolicy,
    tol: f64,
) -> Result<FlatnessReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParam(format!("tolerance {tol} must be nonnegative")));
    }
    let big_n = source.dims().1;
    let comps = rank_segmentation(source, domain, policy)?;
    let components: Vec<ComponentReport> = comps
        .into_par_iter()
        .map(|c| judge(c, big_n, tol))
        .collect::<Result<_>>()?;
    let global_verdict = if components.iter().any(|c| c.verdict == Verdict::NotFlat) {
        Verdict::NotFlat
    } else if components.iter().any(|c| c.verdict == Verdict::Flat) {
        Verdict::Flat
    } else {
        Verdict::Excluded
    };
    Ok(FlatnessReport {
        components,
        tolerance: tol,
        global_verdict,
    })
}

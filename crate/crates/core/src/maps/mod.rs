//! Map sources: closed-form gallery maps and sampled grids, both evaluated to
//! second-order jets.

mod curve;
mod gallery;
mod grid;

pub use curve::{Curve, CurvePoint};
pub use gallery::{
    catalogue, embed3_isometry, CatalogueEntry, Gallery, KFamily, KProfile, NuOfF, Params,
    PolygonalCurve, ScalarFactor, SeparatedPair,
};
pub use grid::{load_grid, read_grid, GridMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Axis-aligned box with a uniform sampling lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || resolution.len() != n {
            return Err(Error::Dimension(format!(
                "box needs matching nonempty lower/upper/resolution, got {}/{}/{}",
                lower.len(),
                upper.len(),
                resolution.len()
            )));
        }
        for i in 0..n {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::InvalidParam(format!(
                    "box axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            if resolution[i] < 3 {
                return Err(Error::InvalidParam(format!(
                    "box axis {i}: resolution {} < 3",
                    resolution[i]
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    /// `[lo, hi]^dim` with `res` samples per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, res: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![res; dim])
    }

    pub fn rect(x: (f64, f64), y: (f64, f64), res: usize) -> Result<Self> {
        Self::new(vec![x.0, y.0], vec![x.1, y.1], vec![res, res])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn with_resolution(&self, res: usize) -> Result<Self> {
        Self::new(self.lower.clone(), self.upper.clone(), vec![res; self.dim()])
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.resolution[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        let r = (self.resolution[axis] - 1) as f64;
        if k + 1 == self.resolution[axis] {
            return self.upper[axis];
        }
        self.lower[axis] + (self.upper[axis] - self.lower[axis]) * (k as f64) / r
    }

    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index.iter().enumerate().map(|(a, &k)| self.coord(a, k)).collect()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Row-major linear index (first axis slowest).
    pub fn linear_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&k, &r)| acc * r + k)
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = lin % self.resolution[a];
            lin /= self.resolution[a];
        }
        out
    }

    /// All lattice indices in lexicographic order.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|l| self.multi_index(l)).collect()
    }

    pub fn is_interior(&self, index: &[usize]) -> bool {
        index
            .iter()
            .zip(&self.resolution)
            .all(|(&k, &r)| k >= 1 && k + 1 < r)
    }

    /// Interior lattice indices (one cell away from every face), lexicographic.
    pub fn interior_indices(&self) -> Vec<Vec<usize>> {
        self.indices()
            .into_iter()
            .filter(|i| self.is_interior(i))
            .collect()
    }

    /// Closed containment with a relative slack of `1e-12` of each side.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|a| {
                let slack = 1e-12 * (self.upper[a] - self.lower[a]);
                x[a] >= self.lower[a] - slack && x[a] <= self.upper[a] + slack
            })
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        self.contains(&other.lower) && self.contains(&other.upper)
    }

    /// `other` lies in the open interior of `self`.
    pub fn strictly_contains_box(&self, other: &BoxDomain) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|a| other.lower[a] > self.lower[a] && other.upper[a] < self.upper[a])
    }

    /// Lattice index of `x` if it sits on the lattice (to `1e-9` of a cell).
    pub fn lattice_index_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(self.dim());
        for (a, &xa) in x.iter().enumerate() {
            let h = self.spacing(a);
            let t = ((xa - self.lower[a]) / h).round();
            if t < 0.0 || t >= self.resolution[a] as f64 {
                return None;
            }
            let k = t as usize;
            if (self.coord(a, k) - xa).abs() > 1e-9 * h {
                return None;
            }
            idx.push(k);
        }
        Some(idx)
    }
}

/// Second-order jet of a map `R^n -> R^N` at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Jet2 {
    pub point: Vec<f64>,
    pub value: Vec<f64>,
    /// `N x n`, entry `(alpha, i)` is `D_i u_alpha`.
    pub grad: Mat,
    /// Flattened `N x n x n`, entry `(alpha, i, j)` at `(alpha * n + i) * n + j`.
    pub hess: Vec<f64>,
}

impl Jet2 {
    pub fn new(point: Vec<f64>, value: Vec<f64>, grad: Mat, hess: Vec<f64>) -> Result<Self> {
        let n = point.len();
        let big_n = value.len();
        if grad.rows() != big_n || grad.cols() != n || hess.len() != big_n * n * n {
            return Err(Error::Dimension(format!(
                "jet with n = {n}, N = {big_n} got grad {}x{} and {} Hessian entries",
                grad.rows(),
                grad.cols(),
                hess.len()
            )));
        }
        if point.iter().chain(&value).chain(&hess).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("jet has non-finite entries".into()));
        }
        Ok(Self {
            point,
            value,
            grad,
            hess,
        })
    }

    /// Domain dimension `n`.
    pub fn n(&self) -> usize {
        self.point.len()
    }

    /// Target dimension `N`.
    pub fn target_dim(&self) -> usize {
        self.value.len()
    }

    pub fn hess_at(&self, alpha: usize, i: usize, j: usize) -> f64 {
        let n = self.n();
        self.hess[(alpha * n + i) * n + j]
    }

    /// Frobenius norm of the Hessian tensor.
    pub fn hess_norm(&self) -> f64 {
        crate::linalg::norm(&self.hess)
    }

    /// Largest `|H[a][i][j] - H[a][j][i]|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        let mut d: f64 = 0.0;
        for a in 0..self.target_dim() {
            for i in 0..n {
                for j in i + 1..n {
                    d = d.max((self.hess_at(a, i, j) - self.hess_at(a, j, i)).abs());
                }
            }
        }
        d
    }

    /// Jet of `R u` for a linear map `R: R^N -> R^M`.
    pub fn mapped(&self, r: &Mat) -> Jet2 {
        let n = self.n();
        let big_n = self.target_dim();
        assert_eq!(r.cols(), big_n, "linear map shape mismatch");
        let m = r.rows();
        let value = r.matvec(&self.value);
        let grad = r.matmul(&self.grad);
        let mut hess = vec![0.0; m * n * n];
        for b in 0..m {
            for a in 0..big_n {
                let c = r[(b, a)];
                if c == 0.0 {
                    continue;
                }
                for ij in 0..n * n {
                    hess[b * n * n + ij] += c * self.hess[a * n * n + ij];
                }
            }
        }
        Jet2 {
            point: self.point.clone(),
            value,
            grad,
            hess,
        }
    }
}

/// What backs a [`MapSource`].
#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Analytic(Gallery),
    Grid(GridMap),
}

/// An evaluatable map over a box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSource {
    kind: MapKind,
    domain: BoxDomain,
}

impl MapSource {
    /// Gallery map on its default domain.
    pub fn analytic(g: Gallery) -> Self {
        let domain = g.default_domain();
        Self {
            kind: MapKind::Analytic(g),
            domain,
        }
    }

    pub fn from_grid(grid: GridMap) -> Self {
        let domain = grid.domain().clone();
        Self {
            kind: MapKind::Grid(grid),
            domain,
        }
    }

    /// Parses `<id>[:<sub>...]` gallery specs, e.g. `embed3:k_family`.
    pub fn gallery(spec: &str, params: &mut Params) -> Result<Self> {
        Ok(Self::analytic(Gallery::from_spec(spec, params)?))
    }

    /// Replaces the domain of an analytic source.
    pub fn with_domain(mut self, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != self.dims().0 {
            return Err(Error::Dimension(format!(
                "box has dimension {}, map has n = {}",
                domain.dim(),
                self.dims().0
            )));
        }
        match &self.kind {
            MapKind::Analytic(_) => {
                self.domain = domain;
                Ok(self)
            }
            MapKind::Grid(g) => {
                if !g.domain().contains_box(&domain) {
                    return Err(Error::OutOfDomain {
                        point: domain.lower().to_vec(),
                        reason: "requested box leaves the sampled grid".into(),
                    });
                }
                self.domain = domain;
                Ok(self)
            }
        }
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// `(n, N)`.
    pub fn dims(&self) -> (usize, usize) {
        match &self.kind {
            MapKind::Analytic(g) => g.dims(),
            MapKind::Grid(g) => (g.domain().dim(), g.target_dim()),
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            MapKind::Analytic(g) => format!("gallery:{}", g.id()),
            MapKind::Grid(_) => "grid".into(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.kind, MapKind::Analytic(_))
    }

    fn check_inside(&self, x: &[f64]) -> Result<()> {
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain {
                point: x.to_vec(),
                reason: format!(
                    "box [{:?}, {:?}]",
                    self.domain.lower(),
                    self.domain.upper()
                ),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_inside(x)?;
        match &self.kind {
            MapKind::Analytic(g) => g.value(x),
            MapKind::Grid(g) => {
                let idx = g.domain().lattice_index_of(x).ok_or_else(|| Error::OutOfDomain {
                    point: x.to_vec(),
                    reason: "not a lattice point of the grid".into(),
                })?;
                Ok(g.value_at(&idx).to_vec())
            }
        }
    }

    /// Closed-form jet for gallery maps, central-difference jet for grids.
    pub fn eval_jet(&self, x: &[f64]) -> Result<Jet2> {
        self.check_inside(x)?;
        match &self.kind {
            MapKind::Analytic(g) => g.jet(x),
            MapKind::Grid(g) => {
                let idx = g.domain().lattice_index_of(x).ok_or_else(|| Error::OutOfDomain {
                    point: x.to_vec(),
                    reason: "not a lattice point of the grid".into(),
                })?;
                g.fd_jet(&idx)
            }
        }
    }
}

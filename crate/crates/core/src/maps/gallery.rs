//! Closed-form maps with exact jets.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use super::curve::Curve;
use super::{BoxDomain, Jet2};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::quad::adaptive_simpson;

/// `key=value` parameters for gallery entries. Every key must be consumed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    entries: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let mut p = Self::new();
        for item in items {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidParam(format!("expected key=value, got `{item}`")))?;
            p.insert(k.trim(), v.trim());
        }
        Ok(p)
    }

    pub fn insert(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.entries.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => parse_f64(key, &s),
        }
    }

    pub fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.raw(key).map(|s| parse_f64(key, &s)).transpose()
    }

    pub fn opt_vec(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|s| s.split(',').map(|t| parse_f64(key, t.trim())).collect())
            .transpose()
    }

    /// Errors on keys nobody asked for.
    pub fn finish(&self) -> Result<()> {
        let unused: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("unused parameters {unused:?}")))
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidParam(format!("{key}: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::InvalidParam(format!("{key}: must be finite")));
    }
    Ok(v)
}

/// The fixed isometry `R^2 -> R^3` with columns `(1,0,0)` and `(0,1/√2,1/√2)`.
pub fn embed3_isometry() -> Mat {
    Mat::from_rows(&[&[1.0, 0.0], &[0.0, FRAC_1_SQRT_2], &[0.0, FRAC_1_SQRT_2]])
        .expect("constant matrix")
}

/// Angle profile `K` of the strip family `u(x,y) = ∫_x^y (cos K, sin K) dt`.
#[derive(Debug, Clone, PartialEq)]
pub enum KProfile {
    /// `K(t) = c t`; the value has a closed form.
    Linear { c: f64 },
    /// `K(t) = sum_k coeffs[k] t^k`; the value is integrated numerically.
    Polynomial { coeffs: Vec<f64> },
}

impl KProfile {
    pub fn k(&self, t: f64) -> f64 {
        match self {
            KProfile::Linear { c } => c * t,
            KProfile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
        }
    }

    pub fn dk(&self, t: f64) -> f64 {
        match self {
            KProfile::Linear { c } => *c,
            KProfile::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFamily {
    pub profile: KProfile,
    /// Evaluation is restricted to the strip `|x - y| < half_width`.
    pub half_width: f64,
}

impl KFamily {
    pub fn linear(c: f64) -> Result<Self> {
        if !c.is_finite() || c == 0.0 {
            return Err(Error::InvalidParam(format!("k_family: c = {c} must be finite and nonzero")));
        }
        Ok(Self {
            profile: KProfile::Linear { c },
            half_width: FRAC_PI_4 / c.abs(),
        })
    }

    pub fn polynomial(coeffs: Vec<f64>, half_width: f64) -> Result<Self> {
        if coeffs.is_empty() || !(half_width > 0.0) {
            return Err(Error::InvalidParam(
                "k_family: polynomial profile needs coefficients and a positive half width".into(),
            ));
        }
        Ok(Self {
            profile: KProfile::Polynomial { coeffs },
            half_width,
        })
    }

    fn check_strip(&self, x: &[f64]) -> Result<()> {
        if (x[0] - x[1]).abs() >= self.half_width {
            return Err(Error::OutOfDomain {
                point: x.to_vec(),
                reason: format!("k_family is defined on the strip |x - y| < {}", self.half_width),
            });
        }
        Ok(())
    }

    fn value(&self, x: f64, y: f64) -> Vec<f64> {
        match self.profile {
            KProfile::Linear { c } => vec![
                ((c * y).sin() - (c * x).sin()) / c,
                ((c * x).cos() - (c * y).cos()) / c,
            ],
            KProfile::Polynomial { .. } => vec![
                adaptive_simpson(&|t| self.profile.k(t).cos(), x, y, 1e-12),
                adaptive_simpson(&|t| self.profile.k(t).sin(), x, y, 1e-12),
            ],
        }
    }
}

/// Scalar factor `f` in `u = ν ∘ f`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFactor {
    /// `x^2 - y^2`.
    Harmonic,
    /// `alpha x + beta y`.
    Linear { alpha: f64, beta: f64 },
}

impl ScalarFactor {
    fn eval(&self, x: &[f64]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        match *self {
            ScalarFactor::Harmonic => (
                x[0] * x[0] - x[1] * x[1],
                [2.0 * x[0], -2.0 * x[1]],
                [[2.0, 0.0], [0.0, -2.0]],
            ),
            ScalarFactor::Linear { alpha, beta } => (
                alpha * x[0] + beta * x[1],
                [alpha, beta],
                [[0.0; 2]; 2],
            ),
        }
    }
}

/// Unit-speed piecewise-affine curve with `nu(0) = origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalCurve {
    origin: Vec<f64>,
    breakpoints: Vec<f64>,
    directions: Vec<Vec<f64>>,
}

impl PolygonalCurve {
    /// `directions[k]` is used on the k-th interval cut out by the sorted
    /// breakpoints; directions are normalised to unit length.
    pub fn new(origin: Vec<f64>, breakpoints: Vec<f64>, directions: Vec<Vec<f64>>) -> Result<Self> {
        let dim = origin.len();
        if dim == 0 || directions.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidParam(
                "polygonal curve needs one more direction than breakpoints".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParam("breakpoints must be finite and increasing".into()));
        }
        let mut unit = Vec::with_capacity(directions.len());
        for d in directions {
            let nrm = crate::linalg::norm(&d);
            if d.len() != dim || !(nrm > 0.0) || !nrm.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "direction {d:?} must be a nonzero {dim}-vector"
                )));
            }
            unit.push(d.iter().map(|v| v / nrm).collect());
        }
        Ok(Self {
            origin,
            breakpoints,
            directions: unit,
        })
    }

    pub fn affine(origin: Vec<f64>, direction: Vec<f64>) -> Result<Self> {
        Self::new(origin, vec![], vec![direction])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn segment_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.breakpoints[k - 1] };
        let hi = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let (lo, hi, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
        let mut out = self.origin.clone();
        for (k, d) in self.directions.iter().enumerate() {
            let (a, b) = self.segment_bounds(k);
            let len = (hi.min(b) - lo.max(a)).max(0.0);
            if len > 0.0 {
                for (o, di) in out.iter_mut().zip(d) {
                    *o += sign * len * di;
                }
            }
        }
        out
    }

    /// Tangent on the open segment containing `t`; `None` at a breakpoint.
    pub fn tangent(&self, t: f64) -> Option<&[f64]> {
        if self.breakpoints.contains(&t) {
            return None;
        }
        let k = self.breakpoints.iter().filter(|&&b| b < t).count();
        Some(&self.directions[k])
    }
}

/// Rank-one map `u = ν ∘ f`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuOfF {
    pub curve: PolygonalCurve,
    pub scalar: ScalarFactor,
}

/// Separated map `u(x, y) = f(x) + g(y)` on a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedPair {
    pub name: String,
    pub f: Curve,
    pub g: Curve,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl SeparatedPair {
    pub fn new(name: &str, f: Curve, g: Curve, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        if f.dim() != g.dim() || f.dim() < 2 {
            return Err(Error::InvalidParam(format!(
                "separated pair needs curves of equal dimension >= 2, got {} and {}",
                f.dim(),
                g.dim()
            )));
        }
        if !(x_range.0 < x_range.1 && y_range.0 < y_range.1) {
            return Err(Error::InvalidParam("separated pair needs nonempty ranges".into()));
        }
        Ok(Self {
            name: name.to_string(),
            f,
            g,
            x_range,
            y_range,
        })
    }

    /// Named presets: `k_split`, `affine`, `nonsolution`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            // (-sin x, cos x) + (sin y, -cos y), the strip family with K(t) = t.
            "k_split" => Self::new(
                name,
                Curve::trig(vec![0.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], 1.0)?,
                Curve::trig(vec![0.0, 0.0], vec![0.0, -1.0], vec![1.0, 0.0], 1.0)?,
                (-0.15, 0.15),
                (0.25, 0.5),
            ),
            "affine" => Self::new(
                name,
                Curve::line(vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0])?,
                Curve::line(vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0])?,
                (-1.0, 1.0),
                (-1.0, 1.0),
            ),
            // (x^2, 0, 0) + (0, y^3, y): not a solution.
            "nonsolution" => Self::new(
                name,
                Curve::polynomial(vec![
                    vec![0.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0],
                    vec![1.0, 0.0, 0.0],
                ])?,
                Curve::polynomial(vec![
                    vec![0.0, 0.0, 0.0],
                    vec![0.0, 0.0, 1.0],
                    vec![0.0, 0.0, 0.0],
                    vec![0.0, 1.0, 0.0],
                ])?,
                (-1.0, 1.0),
                (-1.0, 1.0),
            ),
            other => Err(Error::UnknownGallery(format!("separated_pair:{other}"))),
        }
    }
}

/// The closed-form gallery.
#[derive(Debug, Clone, PartialEq)]
pub enum Gallery {
    /// `(sgn(x) x^4, x^4)`: rank one, image a bent line.
    Example2,
    /// `|x|^{4/3} - |y|^{4/3}`, scalar, not C² on the axes.
    Aronsson,
    KFamily(KFamily),
    /// Post-composition with [`embed3_isometry`].
    Embed3(Box<Gallery>),
    NuOfF(NuOfF),
    /// `(x, y, x^2 + y^2)`, not a solution.
    Paraboloid,
    SeparatedPair(SeparatedPair),
    /// `(x^2 - y^2, 2xy)`, harmonic.
    Conformal,
}

/// Catalogue row for `gallery --list`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CatalogueEntry {
    pub id: &'static str,
    pub formula: &'static str,
    pub dims: &'static str,
    pub default_box: &'static str,
    pub singular_set: &'static str,
    pub params: Vec<(&'static str, &'static str)>,
}

pub fn catalogue() -> Vec<CatalogueEntry> {
    vec![
        CatalogueEntry {
            id: "example2",
            formula: "u(x,y) = (sgn(x) x^4, x^4)",
            dims: "n=2, N=2",
            default_box: "[-1,1]^2",
            singular_set: "none (rank 0 on x = 0)",
            params: vec![],
        },
        CatalogueEntry {
            id: "aronsson",
            formula: "u(x,y) = |x|^(4/3) - |y|^(4/3)",
            dims: "n=2, N=1",
            default_box: "[-1,1]^2",
            singular_set: "{x = 0} u {y = 0}",
            params: vec![],
        },
        CatalogueEntry {
            id: "k_family",
            formula: "u(x,y) = int_x^y (cos K(t), sin K(t)) dt",
            dims: "n=2, N=2",
            default_box: "[-0.3,0.3]^2",
            singular_set: "outside the strip |x - y| < half_width; rank drops on x = y",
            params: vec![
                ("c", "K(t) = c t, default 1; half width pi/(4|c|)"),
                ("k_coeffs", "polynomial K coefficients a0,a1,...; value by adaptive Simpson"),
                ("half_width", "strip half width for polynomial K, default pi/4"),
            ],
        },
        CatalogueEntry {
            id: "embed3:<inner>",
            formula: "R u with R = [(1,0),(0,1/sqrt2),(0,1/sqrt2)]",
            dims: "n=2, N=3",
            default_box: "inner's",
            singular_set: "inner's",
            params: vec![("(inner)", "parameters of the inner N=2 entry")],
        },
        CatalogueEntry {
            id: "nu_of_f[:harmonic|:linear]",
            formula: "u = nu(f), nu unit-speed polygonal, f = x^2 - y^2 or alpha x + beta y",
            dims: "n=2, N=len(dir)",
            default_box: "[-1,1]^2",
            singular_set: "level sets {f = bend_at}",
            params: vec![
                ("dir", "direction of nu, default 1,2,2 (normalised)"),
                ("origin", "nu(0), default 0"),
                ("bend_at", "optional breakpoint of nu"),
                ("dir2", "direction after the breakpoint"),
                ("alpha", "linear f coefficient, default 1"),
                ("beta", "linear f coefficient, default 0.5"),
            ],
        },
        CatalogueEntry {
            id: "paraboloid",
            formula: "u(x,y) = (x, y, x^2 + y^2)  (negative control)",
            dims: "n=2, N=3",
            default_box: "[-1,1]^2",
            singular_set: "none",
            params: vec![],
        },
        CatalogueEntry {
            id: "separated_pair[:k_split|:affine|:nonsolution]",
            formula: "u(x,y) = f(x) + g(y)",
            dims: "n=2, N=2 (k_split) or 3",
            default_box: "k_split (-0.15,0.15)x(0.25,0.5); others [-1,1]^2",
            singular_set: "none",
            params: vec![],
        },
        CatalogueEntry {
            id: "conformal",
            formula: "u(x,y) = (x^2 - y^2, 2xy); alias `harmonic`",
            dims: "n=2, N=2",
            default_box: "[0.5,1.5] x [-0.5,0.5]",
            singular_set: "none (rank 0 at the origin)",
            params: vec![],
        },
    ]
}

fn jet2d(point: &[f64], value: Vec<f64>, grad_rows: Vec<[f64; 2]>, hess: Vec<[[f64; 2]; 2]>) -> Result<Jet2> {
    let big_n = value.len();
    let grad = Mat::new(big_n, 2, grad_rows.iter().flat_map(|r| r.iter().copied()).collect())?;
    let h = hess.iter().flat_map(|m| m.iter().flat_map(|r| r.iter().copied())).collect();
    Jet2::new(point.to_vec(), value, grad, h)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Gallery {
    pub fn from_spec(spec: &str, params: &mut Params) -> Result<Self> {
        let segs: Vec<&str> = spec.split(':').collect();
        let g = Self::parse_segments(&segs, spec, params)?;
        params.finish()?;
        Ok(g)
    }

    fn parse_segments(segs: &[&str], spec: &str, params: &mut Params) -> Result<Self> {
        Ok(match segs {
            ["example2"] => Gallery::Example2,
            ["aronsson"] => Gallery::Aronsson,
            ["k_family"] => {
                if let Some(coeffs) = params.opt_vec("k_coeffs")? {
                    let hw = params.f64_or("half_width", FRAC_PI_4)?;
                    Gallery::KFamily(KFamily::polynomial(coeffs, hw)?)
                } else {
                    Gallery::KFamily(KFamily::linear(params.f64_or("c", 1.0)?)?)
                }
            }
            ["embed3", rest @ ..] if !rest.is_empty() => {
                let inner = Self::parse_segments(rest, spec, params)?;
                if inner.dims().1 != 2 {
                    return Err(Error::InvalidParam(format!(
                        "embed3 needs an N = 2 inner map, `{}` has N = {}",
                        inner.id(),
                        inner.dims().1
                    )));
                }
                Gallery::Embed3(Box::new(inner))
            }
            ["nu_of_f"] | ["nu_of_f", "harmonic"] | ["nu_of_f", "linear"] => {
                let scalar = if segs.get(1) == Some(&"linear") {
                    ScalarFactor::Linear {
                        alpha: params.f64_or("alpha", 1.0)?,
                        beta: params.f64_or("beta", 0.5)?,
                    }
                } else {
                    ScalarFactor::Harmonic
                };
                let dir = params.opt_vec("dir")?.unwrap_or_else(|| vec![1.0, 2.0, 2.0]);
                let origin = params.opt_vec("origin")?.unwrap_or_else(|| vec![0.0; dir.len()]);
                let curve = match params.opt_f64("bend_at")? {
                    None => PolygonalCurve::affine(origin, dir)?,
                    Some(b) => {
                        let dir2 = params.opt_vec("dir2")?.ok_or_else(|| {
                            Error::InvalidParam("nu_of_f: bend_at needs dir2".into())
                        })?;
                        PolygonalCurve::new(origin, vec![b], vec![dir, dir2])?
                    }
                };
                Gallery::NuOfF(NuOfF { curve, scalar })
            }
            ["paraboloid"] => Gallery::Paraboloid,
            ["separated_pair"] => Gallery::SeparatedPair(SeparatedPair::preset("k_split")?),
            ["separated_pair", preset] => Gallery::SeparatedPair(SeparatedPair::preset(preset)?),
            ["conformal"] | ["harmonic"] => Gallery::Conformal,
            _ => return Err(Error::UnknownGallery(spec.to_string())),
        })
    }

    pub fn id(&self) -> String {
        match self {
            Gallery::Example2 => "example2".into(),
            Gallery::Aronsson => "aronsson".into(),
            Gallery::KFamily(_) => "k_family".into(),
            Gallery::Embed3(inner) => format!("embed3:{}", inner.id()),
            Gallery::NuOfF(nf) => match nf.scalar {
                ScalarFactor::Harmonic => "nu_of_f:harmonic".into(),
                ScalarFactor::Linear { .. } => "nu_of_f:linear".into(),
            },
            Gallery::Paraboloid => "paraboloid".into(),
            Gallery::SeparatedPair(sp) => format!("separated_pair:{}", sp.name),
            Gallery::Conformal => "conformal".into(),
        }
    }

    /// `(n, N)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Gallery::Example2 | Gallery::KFamily(_) | Gallery::Conformal => (2, 2),
            Gallery::Aronsson => (2, 1),
            Gallery::Embed3(_) | Gallery::Paraboloid => (2, 3),
            Gallery::NuOfF(nf) => (2, nf.curve.dim()),
            Gallery::SeparatedPair(sp) => (2, sp.f.dim()),
        }
    }

    pub fn default_domain(&self) -> BoxDomain {
        let dom = match self {
            Gallery::KFamily(k) => {
                let side = (0.382 * k.half_width).min(0.3);
                BoxDomain::cube(2, -side, side, 41)
            }
            Gallery::Embed3(inner) => return inner.default_domain(),
            Gallery::SeparatedPair(sp) => BoxDomain::rect(sp.x_range, sp.y_range, 41),
            // Off the rank-0 origin so the rank is constant.
            Gallery::Conformal => BoxDomain::rect((0.5, 1.5), (-0.5, 0.5), 41),
            _ => BoxDomain::cube(2, -1.0, 1.0, 41),
        };
        dom.expect("gallery default boxes are valid")
    }

    /// Points where the closed-form jet does not exist.
    pub fn singular_set(&self) -> Option<String> {
        match self {
            Gallery::Aronsson => Some("{x = 0} u {y = 0}".into()),
            Gallery::Embed3(inner) => inner.singular_set(),
            Gallery::NuOfF(nf) if !nf.curve.breakpoints().is_empty() => Some(format!(
                "level sets of f at the breakpoints {:?}",
                nf.curve.breakpoints()
            )),
            _ => None,
        }
    }

    /// Sets where the map is smooth but the gradient rank drops.
    pub fn degenerate_set(&self) -> Option<String> {
        match self {
            Gallery::KFamily(_) => Some("diagonal {x = y} (rank <= 1)".into()),
            Gallery::Example2 => Some("{x = 0} (Du = 0)".into()),
            Gallery::Embed3(inner) => inner.degenerate_set(),
            _ => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != 2 {
            return Err(Error::Dimension(format!("gallery maps take 2-points, got {}", x.len())));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let (px, py) = (x[0], x[1]);
        Ok(match self {
            Gallery::Example2 => {
                let x4 = px.powi(4);
                vec![sgn(px) * x4, x4]
            }
            Gallery::Aronsson => vec![px.abs().powf(4.0 / 3.0) - py.abs().powf(4.0 / 3.0)],
            Gallery::KFamily(k) => {
                k.check_strip(x)?;
                k.value(px, py)
            }
            Gallery::Embed3(inner) => embed3_isometry().matvec(&inner.value(x)?),
            Gallery::NuOfF(nf) => nf.curve.value(nf.scalar.eval(x).0),
            Gallery::Paraboloid => vec![px, py, px * px + py * py],
            Gallery::SeparatedPair(sp) => {
                let f = sp.f.eval(px).value;
                let g = sp.g.eval(py).value;
                f.iter().zip(&g).map(|(a, b)| a + b).collect()
            }
            Gallery::Conformal => vec![px * px - py * py, 2.0 * px * py],
        })
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet2> {
        self.check_dim(x)?;
        let (px, py) = (x[0], x[1]);
        match self {
            Gallery::Example2 => {
                let s = sgn(px);
                let (x2, x3) = (px * px, px * px * px);
                jet2d(
                    x,
                    vec![s * x2 * x2, x2 * x2],
                    vec![[4.0 * s * x3, 0.0], [4.0 * x3, 0.0]],
                    vec![
                        [[12.0 * s * x2, 0.0], [0.0, 0.0]],
                        [[12.0 * x2, 0.0], [0.0, 0.0]],
                    ],
                )
            }
            Gallery::Aronsson => {
                if px == 0.0 || py == 0.0 {
                    return Err(Error::SingularPoint {
                        point: x.to_vec(),
                        set: "{x = 0} u {y = 0}, where the Aronsson function is not C²".into(),
                    });
                }
                let (ax, ay) = (px.abs(), py.abs());
                jet2d(
                    x,
                    vec![ax.powf(4.0 / 3.0) - ay.powf(4.0 / 3.0)],
                    vec![[
                        4.0 / 3.0 * sgn(px) * ax.cbrt(),
                        -4.0 / 3.0 * sgn(py) * ay.cbrt(),
                    ]],
                    vec![[
                        [4.0 / 9.0 / (ax.cbrt() * ax.cbrt()), 0.0],
                        [0.0, -4.0 / 9.0 / (ay.cbrt() * ay.cbrt())],
                    ]],
                )
            }
            Gallery::KFamily(k) => {
                k.check_strip(x)?;
                let (sx, cx) = k.profile.k(px).sin_cos();
                let (sy, cy) = k.profile.k(py).sin_cos();
                let (dx, dy) = (k.profile.dk(px), k.profile.dk(py));
                jet2d(
                    x,
                    k.value(px, py),
                    vec![[-cx, cy], [-sx, sy]],
                    vec![
                        [[dx * sx, 0.0], [0.0, -dy * sy]],
                        [[-dx * cx, 0.0], [0.0, dy * cy]],
                    ],
                )
            }
            Gallery::Embed3(inner) => Ok(inner.jet(x)?.mapped(&embed3_isometry())),
            Gallery::NuOfF(nf) => {
                let (t, df, d2f) = nf.scalar.eval(x);
                let d = nf.curve.tangent(t).ok_or_else(|| Error::SingularPoint {
                    point: x.to_vec(),
                    set: format!("level set {{f = {t}}} at a breakpoint of nu"),
                })?;
                jet2d(
                    x,
                    nf.curve.value(t),
                    d.iter().map(|di| [di * df[0], di * df[1]]).collect(),
                    d.iter()
                        .map(|di| {
                            [
                                [di * d2f[0][0], di * d2f[0][1]],
                                [di * d2f[1][0], di * d2f[1][1]],
                            ]
                        })
                        .collect(),
                )
            }
            Gallery::Paraboloid => jet2d(
                x,
                vec![px, py, px * px + py * py],
                vec![[1.0, 0.0], [0.0, 1.0], [2.0 * px, 2.0 * py]],
                vec![
                    [[0.0; 2]; 2],
                    [[0.0; 2]; 2],
                    [[2.0, 0.0], [0.0, 2.0]],
                ],
            ),
            Gallery::SeparatedPair(sp) => {
                let f = sp.f.eval(px);
                let g = sp.g.eval(py);
                let big_n = f.value.len();
                jet2d(
                    x,
                    (0..big_n).map(|a| f.value[a] + g.value[a]).collect(),
                    (0..big_n).map(|a| [f.d1[a], g.d1[a]]).collect(),
                    (0..big_n).map(|a| [[f.d2[a], 0.0], [0.0, g.d2[a]]]).collect(),
                )
            }
            Gallery::Conformal => jet2d(
                x,
                vec![px * px - py * py, 2.0 * px * py],
                vec![[2.0 * px, -2.0 * py], [2.0 * py, 2.0 * px]],
                vec![[[2.0, 0.0], [0.0, -2.0]], [[0.0, 2.0], [2.0, 0.0]]],
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> Params {
        Params::new()
    }

    #[test]
    fn example2_values() {
        let g = Gallery::Example2;
        assert_eq!(g.value(&[1.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(g.value(&[-1.0, 3.0]).unwrap(), vec![-1.0, 1.0]);
        let j = g.jet(&[1.0, 0.0]).unwrap();
        assert_eq!(j.grad, Mat::from_rows(&[&[4.0, 0.0], &[4.0, 0.0]]).unwrap());
    }

    #[test]
    fn example2_is_c2_across_the_seam() {
        let j = Gallery::Example2.jet(&[0.0, 0.7]).unwrap();
        assert_eq!(j.grad.max_abs(), 0.0);
        assert!(j.hess.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn k_family_values() {
        let g = Gallery::from_spec("k_family", &mut params()).unwrap();
        let v = g.value(&[0.2, 0.2]).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let j = g.jet(&[0.0, PI / 8.0]).unwrap();
        assert!((j.grad[(0, 1)] - (PI / 8.0).cos()).abs() < 1e-15);
        assert!((j.grad[(1, 1)] - (PI / 8.0).sin()).abs() < 1e-15);
        assert!(matches!(g.value(&[0.0, 0.8]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn k_family_polynomial_profile_matches_linear() {
        let lin = Gallery::KFamily(KFamily::linear(1.0).unwrap());
        let poly = Gallery::KFamily(KFamily::polynomial(vec![0.0, 1.0], FRAC_PI_4).unwrap());
        let x = [-0.1, 0.25];
        let (a, b) = (lin.value(&x).unwrap(), poly.value(&x).unwrap());
        assert!((a[0] - b[0]).abs() < 1e-11 && (a[1] - b[1]).abs() < 1e-11);
        assert_eq!(lin.jet(&x).unwrap().grad, poly.jet(&x).unwrap().grad);
    }

    #[test]
    fn aronsson_symmetry_and_singular_axes() {
        let g = Gallery::Aronsson;
        assert_eq!(g.value(&[1.0, 1.0]).unwrap(), vec![0.0]);
        assert!(matches!(g.jet(&[0.0, 0.5]), Err(Error::SingularPoint { .. })));
        assert!(g.value(&[0.0, 0.5]).is_ok());
    }

    #[test]
    fn paraboloid_laplacian_trace() {
        let j = Gallery::Paraboloid.jet(&[0.0, 0.0]).unwrap();
        let lap: Vec<f64> = (0..3).map(|a| j.hess_at(a, 0, 0) + j.hess_at(a, 1, 1)).collect();
        assert_eq!(lap, vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn polygonal_curve_is_continuous_and_unit_speed() {
        let c = PolygonalCurve::new(vec![0.0, 0.0], vec![-1.0, 2.0], vec![
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 4.0],
        ])
        .unwrap();
        assert_eq!(c.value(0.5), vec![0.0, 0.5]);
        assert_eq!(c.value(-2.0), vec![-1.0, -1.0]);
        let v3 = c.value(3.0);
        assert!((v3[0] - 0.6).abs() < 1e-15 && (v3[1] - 2.8).abs() < 1e-15);
        assert!(c.tangent(2.0).is_none());
        assert_eq!(c.tangent(2.5).unwrap(), &[0.6, 0.8]);
    }

    #[test]
    fn nu_of_f_spec_and_singular_breakpoint() {
        let mut p = Params::parse(&["bend_at=0.25", "dir=1,0", "dir2=0,1"]).unwrap();
        let g = Gallery::from_spec("nu_of_f:harmonic", &mut p).unwrap();
        assert_eq!(g.dims(), (2, 2));
        assert!(matches!(g.jet(&[0.5, 0.0]), Err(Error::SingularPoint { .. })));
        assert!(g.jet(&[0.4, 0.0]).is_ok());
    }

    #[test]
    fn spec_errors() {
        assert!(matches!(
            Gallery::from_spec("nope", &mut params()),
            Err(Error::UnknownGallery(_))
        ));
        assert!(Gallery::from_spec("embed3:aronsson", &mut params()).is_err());
        let mut p = Params::parse(&["zz=1"]).unwrap();
        assert!(matches!(
            Gallery::from_spec("example2", &mut p),
            Err(Error::InvalidParam(_))
        ));
        assert!(Params::parse(&["novalue"]).is_err());
    }

    #[test]
    fn embed3_is_an_isometry() {
        let r = embed3_isometry();
        let rtr = r.transpose().matmul(&r);
        assert!(rtr.sub(&Mat::identity(2)).max_abs() < 1e-15);
        let g = Gallery::from_spec("embed3:k_family", &mut params()).unwrap();
        assert_eq!(g.dims(), (2, 3));
        assert_eq!(g.id(), "embed3:k_family");
    }

    #[test]
    fn catalogue_lists_all_entries() {
        assert_eq!(catalogue().len(), 8);
    }
}

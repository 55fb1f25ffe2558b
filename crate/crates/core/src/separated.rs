//! Maps of the form `u(x, y) = f(x) + g(y)`: coefficient functions, nested
//! integral factors and the identities they satisfy for solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, svd_small, Mat, RankPolicy};
use crate::maps::{embed3_isometry, Curve, Gallery, KProfile, MapKind, MapSource, SeparatedPair};
use crate::quad::cumulative_trapezoid;

/// `u(x, y) = f(x) + g(y)` on `x_range × y_range`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedMap {
    pub f: Curve,
    pub g: Curve,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl SeparatedMap {
    pub fn new(f: Curve, g: Curve, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        let p = SeparatedPair::new("custom", f, g, x_range, y_range)?;
        Ok(Self::from_pair(&p))
    }

    pub fn from_pair(p: &SeparatedPair) -> Self {
        Self {
            f: p.f.clone(),
            g: p.g.clone(),
            x_range: p.x_range,
            y_range: p.y_range,
        }
    }

    /// Separated form of a gallery source: `separated_pair`, `k_family` with
    /// linear `K`, or `embed3` of either. Ranges are the source's box.
    pub fn from_source(source: &MapSource) -> Result<Self> {
        let MapKind::Analytic(g) = source.kind() else {
            return Err(Error::InvalidParam("grid maps have no separated form".into()));
        };
        let dom = source.domain();
        let xr = (dom.lower()[0], dom.upper()[0]);
        let yr = (dom.lower()[1], dom.upper()[1]);
        let (f, g) = split(g)?;
        Ok(Self {
            f,
            g,
            x_range: xr,
            y_range: yr,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn value(&self, x: f64, y: f64) -> Vec<f64> {
        let f = self.f.eval(x).value;
        let g = self.g.eval(y).value;
        f.iter().zip(&g).map(|(a, b)| a + b).collect()
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_range.0 && x <= self.x_range.1 && y >= self.y_range.0 && y <= self.y_range.1
    }
}

fn split(g: &Gallery) -> Result<(Curve, Curve)> {
    match g {
        Gallery::SeparatedPair(p) => Ok((p.f.clone(), p.g.clone())),
        Gallery::KFamily(k) => match k.profile {
            // ∫_x^y (cos ct, sin ct) dt = G(y) − G(x), G = (sin ct, −cos ct)/c.
            KProfile::Linear { c } => Ok((
                Curve::trig(vec![0.0, 0.0], vec![0.0, 1.0 / c], vec![-1.0 / c, 0.0], c)?,
                Curve::trig(vec![0.0, 0.0], vec![0.0, -1.0 / c], vec![1.0 / c, 0.0], c)?,
            )),
            KProfile::Polynomial { .. } => Err(Error::InvalidParam(
                "k_family with polynomial K has no closed-form separated factors".into(),
            )),
        },
        Gallery::Embed3(inner) => {
            let (f, g) = split(inner)?;
            let r = embed3_isometry();
            Ok((f.mapped(&r), g.mapped(&r)))
        }
        other => Err(Error::InvalidParam(format!("`{}` is not of separated form", other.id()))),
    }
}

/// Least-squares `a, b` in `f'' + g'' = a f' + b g'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparatedCoeffs {
    pub a: f64,
    pub b: f64,
    /// Smallest singular value of `[f' | g']`.
    pub conditioning: f64,
    /// `|f'' + g'' − a f' − b g'|`.
    pub residual: f64,
    /// The annihilator-quotient values, `⟨P r, P f'⟩ / |P f'|²` with
    /// `P = |g'|² I − g' g'ᵀ` and symmetrically for `b`.
    pub quotient_a: f64,
    pub quotient_b: f64,
    /// `max(|a − quotient_a|, |b − quotient_b|)`.
    pub quotient_gap: f64,
}

fn annihilated(v: &[f64], w: &[f64]) -> Vec<f64> {
    // (|v|² I − v vᵀ) w
    let vv = dot(v, v);
    let vw = dot(v, w);
    w.iter().zip(v).map(|(wi, vi)| vv * wi - vw * vi).collect()
}

fn quotient(p_rhs: &[f64], p_dir: &[f64]) -> f64 {
    dot(p_rhs, p_dir) / dot(p_dir, p_dir)
}

fn coeffs_at(map: &SeparatedMap, x: f64, y: f64, policy: &RankPolicy) -> Result<SeparatedCoeffs> {
    let fp = map.f.eval(x);
    let gp = map.g.eval(y);
    let rhs: Vec<f64> = fp.d2.iter().zip(&gp.d2).map(|(a, b)| a + b).collect();
    let m = Mat::from_columns(&[fp.d1.clone(), gp.d1.clone()])?;
    let svd = svd_small(&m)?;
    let sigma_min = svd.sigma[1];
    if svd.rank(policy) < 2 {
        return Err(Error::DegenerateCoefficients { x, y, sigma: sigma_min });
    }
    // c = V Σ⁻¹ Uᵀ r
    let utr = svd.u.tr_matvec(&rhs);
    let z = [utr[0] / svd.sigma[0], utr[1] / svd.sigma[1]];
    let c = svd.v.matvec(&z);
    let (a, b) = (c[0], c[1]);
    let res: Vec<f64> = (0..rhs.len())
        .map(|k| rhs[k] - a * fp.d1[k] - b * gp.d1[k])
        .collect();
    let qa = quotient(&annihilated(&gp.d1, &rhs), &annihilated(&gp.d1, &fp.d1));
    let qb = quotient(&annihilated(&fp.d1, &rhs), &annihilated(&fp.d1, &gp.d1));
    Ok(SeparatedCoeffs {
        a,
        b,
        conditioning: sigma_min,
        residual: norm(&res),
        quotient_a: qa,
        quotient_b: qb,
        quotient_gap: (a - qa).abs().max((b - qb).abs()),
    })
}

/// Coefficients at a point of the rectangle.
pub fn separated_coeffs(map: &SeparatedMap, x: f64, y: f64, policy: &RankPolicy) -> Result<SeparatedCoeffs> {
    if !map.contains(x, y) {
        return Err(Error::OutOfDomain {
            point: vec![x, y],
            reason: format!("rectangle {:?} x {:?}", map.x_range, map.y_range),
        });
    }
    coeffs_at(map, x, y, policy)
}

/// `(x₀, y₀)` strictly inside the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasePoint {
    pub x0: f64,
    pub y0: f64,
}

impl BasePoint {
    pub fn new(map: &SeparatedMap, x0: f64, y0: f64) -> Result<Self> {
        let (a, b) = map.x_range;
        let (c, d) = map.y_range;
        if !(x0 > a && x0 < b && y0 > c && y0 < d) {
            return Err(Error::Precondition(format!(
                "base point ({x0}, {y0}) must lie strictly inside ({a}, {b}) x ({c}, {d})"
            )));
        }
        Ok(Self { x0, y0 })
    }
}

/// The ten nested-quadrature factors at `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralFactors {
    pub x: f64,
    pub y: f64,
    pub base: BasePoint,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "J")]
    pub j: f64,
}

impl IntegralFactors {
    /// Violated sign properties; `I < 0` is only required when
    /// `(x − x₀)(y − y₀) < 0`.
    pub fn sign_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let dx = self.x - self.base.x0;
        let dy = self.y - self.base.y0;
        if self.a.signum() != dx.signum() || self.a == 0.0 {
            out.push(format!("sign(A) = {} but x - x0 = {dx}", self.a));
        }
        if self.f.signum() != dy.signum() || self.f == 0.0 {
            out.push(format!("sign(F) = {} but y - y0 = {dy}", self.f));
        }
        if !(self.c > 0.0) {
            out.push(format!("C = {} is not positive", self.c));
        }
        if !(self.h > 0.0) {
            out.push(format!("H = {} is not positive", self.h));
        }
        if dx * dy < 0.0 && !(self.i < 0.0) {
            out.push(format!("I = {} is not negative although (x-x0)(y-y0) < 0", self.i));
        }
        out
    }
}

fn check_query(map: &SeparatedMap, base: &BasePoint, x: f64, y: f64, m: usize) -> Result<()> {
    if m < 8 {
        return Err(Error::Precondition(format!("need m >= 8 quadrature intervals, got {m}")));
    }
    if !map.contains(x, y) {
        return Err(Error::OutOfDomain {
            point: vec![x, y],
            reason: format!("rectangle {:?} x {:?}", map.x_range, map.y_range),
        });
    }
    let lx = map.x_range.1 - map.x_range.0;
    let ly = map.y_range.1 - map.y_range.0;
    let mf = m as f64;
    if (x - base.x0).abs() < 10.0 / mf * lx {
        return Err(Error::Precondition(format!(
            "|x - x0| = {} is below 10/m of the x interval ({})",
            (x - base.x0).abs(),
            10.0 / mf * lx
        )));
    }
    if (y - base.y0).abs() < 10.0 / mf * ly {
        return Err(Error::Precondition(format!(
            "|y - y0| = {} is below 10/m of the y interval ({})",
            (y - base.y0).abs(),
            10.0 / mf * ly
        )));
    }
    Ok(())
}

fn exp_neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|s| (-s).exp()).collect()
}

/// Nested composite-trapezoid evaluation of `A … J` on an `(m+1)²` grid
/// spanning `[x₀, x] × [y₀, y]`.
pub fn integral_factors(
    map: &SeparatedMap,
    base: &BasePoint,
    x: f64,
    y: f64,
    m: usize,
    policy: &RankPolicy,
) -> Result<IntegralFactors> {
    check_query(map, base, x, y, m)?;
    let hx = (x - base.x0) / m as f64;
    let hy = (y - base.y0) / m as f64;
    let xs: Vec<f64> = (0..=m).map(|k| if k == m { x } else { base.x0 + hx * k as f64 }).collect();
    let ys: Vec<f64> = (0..=m).map(|l| if l == m { y } else { base.y0 + hy * l as f64 }).collect();

    // a, b on the grid, row k = x node, column l = y node.
    let mut ca = vec![vec![0.0; m + 1]; m + 1];
    let mut cb = vec![vec![0.0; m + 1]; m + 1];
    for k in 0..=m {
        for l in 0..=m {
            let c = coeffs_at(map, xs[k], ys[l], policy).map_err(|e| match e {
                Error::DegenerateCoefficients { x, y, .. } => Error::PathDegeneracy { x, y },
                other => other,
            })?;
            ca[k][l] = c.a;
            cb[k][l] = c.b;
        }
    }

    // x-first family at each y node t_l.
    let mut a_end = vec![0.0; m + 1];
    let mut b_end = vec![0.0; m + 1];
    let mut mu_end = vec![0.0; m + 1];
    for l in 0..=m {
        let col_a: Vec<f64> = (0..=m).map(|k| ca[k][l]).collect();
        let mu = exp_neg(&cumulative_trapezoid(&col_a, hx));
        let a_cum = cumulative_trapezoid(&mu, hx);
        let bmu: Vec<f64> = (0..=m).map(|k| cb[k][l] * mu[k]).collect();
        let b_cum = cumulative_trapezoid(&bmu, hx);
        a_end[l] = a_cum[m];
        b_end[l] = b_cum[m];
        mu_end[l] = mu[m];
    }
    let ratio: Vec<f64> = (0..=m).map(|l| b_end[l] / a_end[l]).collect();
    let c_t = exp_neg(&cumulative_trapezoid(&ratio, hy));
    let d_int: Vec<f64> = (0..=m).map(|l| mu_end[l] * c_t[l] / a_end[l]).collect();
    let e_int: Vec<f64> = (0..=m).map(|l| c_t[l] / a_end[l]).collect();
    let d_val = cumulative_trapezoid(&d_int, hy)[m];
    let e_val = cumulative_trapezoid(&e_int, hy)[m];

    // y-first family at each x node s_k.
    let mut f_end = vec![0.0; m + 1];
    let mut g_end = vec![0.0; m + 1];
    let mut psi_end = vec![0.0; m + 1];
    for k in 0..=m {
        let psi = exp_neg(&cumulative_trapezoid(&cb[k], hy));
        let f_cum = cumulative_trapezoid(&psi, hy);
        let apsi: Vec<f64> = (0..=m).map(|l| ca[k][l] * psi[l]).collect();
        let g_cum = cumulative_trapezoid(&apsi, hy);
        f_end[k] = f_cum[m];
        g_end[k] = g_cum[m];
        psi_end[k] = psi[m];
    }
    let ratio: Vec<f64> = (0..=m).map(|k| g_end[k] / f_end[k]).collect();
    let h_s = exp_neg(&cumulative_trapezoid(&ratio, hx));
    let i_int: Vec<f64> = (0..=m).map(|k| psi_end[k] * h_s[k] / f_end[k]).collect();
    let j_int: Vec<f64> = (0..=m).map(|k| h_s[k] / f_end[k]).collect();
    let i_val = cumulative_trapezoid(&i_int, hx)[m];
    let j_val = cumulative_trapezoid(&j_int, hx)[m];

    Ok(IntegralFactors {
        x,
        y,
        base: *base,
        m,
        a: a_end[m],
        b: b_end[m],
        c: c_t[m],
        d: d_val,
        e: e_val,
        f: f_end[m],
        g: g_end[m],
        h: h_s[m],
        i: i_val,
        j: j_val,
    })
}

/// Residuals of the end identities at a query point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResidual {
    /// `|g'(y) C + f'(x) D − g'(y₀) − f'(x₀) E|`.
    pub r24: f64,
    /// `|f'(x) H + g'(y) I − f'(x₀) − g'(y₀) J|`, the mirrored identity.
    pub r25: f64,
    /// `|(C − D I/H) g'(y) − (E − D/H) f'(x₀) − (1 − D J/H) g'(y₀)|`;
    /// `None` unless `(x − x₀)(y − y₀) < 0`.
    pub r27: Option<f64>,
    pub r27_precondition: Option<String>,
    pub factors: IntegralFactors,
    pub sign_violations: Vec<String>,
}

fn lin3(c: &[(f64, &[f64])]) -> f64 {
    let n = c[0].1.len();
    let v: Vec<f64> = (0..n).map(|k| c.iter().map(|(s, w)| s * w[k]).sum()).collect();
    norm(&v)
}

pub fn identity_residual(
    map: &SeparatedMap,
    base: &BasePoint,
    x: f64,
    y: f64,
    m: usize,
    policy: &RankPolicy,
) -> Result<IdentityResidual> {
    let fac = integral_factors(map, base, x, y, m, policy)?;
    let fx = map.f.eval(x).d1;
    let fx0 = map.f.eval(base.x0).d1;
    let gy = map.g.eval(y).d1;
    let gy0 = map.g.eval(base.y0).d1;
    let r24 = lin3(&[(fac.c, &gy), (fac.d, &fx), (-1.0, &gy0), (-fac.e, &fx0)]);
    let r25 = lin3(&[(fac.h, &fx), (fac.i, &gy), (-1.0, &fx0), (-fac.j, &gy0)]);
    let sign = (x - base.x0) * (y - base.y0);
    let (r27, note) = if sign < 0.0 {
        let dh = fac.d / fac.h;
        (
            Some(lin3(&[
                (fac.c - dh * fac.i, &gy),
                (-(fac.e - dh), &fx0),
                (-(1.0 - dh * fac.j), &gy0),
            ])),
            None,
        )
    } else {
        (
            None,
            Some(format!("(x - x0)(y - y0) = {sign} is not negative")),
        )
    };
    Ok(IdentityResidual {
        r24,
        r25,
        r27,
        r27_precondition: note,
        sign_violations: fac.sign_violations(),
        factors: fac,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanSample {
    pub x: f64,
    pub y: f64,
    pub f_distance: f64,
    pub g_distance: f64,
    pub value_distance: f64,
    /// `|g'(y) − α f'(x₀) − β g'(y₀)|` with `α, β` read off the factors,
    /// where the query qualifies.
    pub reconstruction_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanReport {
    pub base: BasePoint,
    /// `"plane"`, or `"line"` when `f'(x₀), g'(y₀)` are dependent.
    pub span_kind: String,
    pub samples: Vec<SpanSample>,
    pub max_distance: f64,
    pub max_value_distance: f64,
    pub image_diameter: f64,
    pub tol: f64,
    pub m: usize,
    pub pass: bool,
}

/// Orthonormal basis of the span of the given vectors (rank by `policy`).
fn span_basis(vs: &[Vec<f64>], policy: &RankPolicy) -> Result<Vec<Vec<f64>>> {
    let svd = svd_small(&Mat::from_columns(vs)?)?;
    Ok((0..svd.rank(policy)).map(|k| svd.u.column(k)).collect())
}

fn distance_to(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut r = v.to_vec();
    for b in basis {
        let d = dot(&r, b);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= d * bi;
        }
    }
    norm(&r)
}

/// Checks `f'(x), g'(y) ∈ span{f'(x₀), g'(y₀)}` and
/// `u(x, y) ∈ u(x₀, y₀) + span` at each sample.
pub fn span_check(
    map: &SeparatedMap,
    base: &BasePoint,
    samples: &[(f64, f64)],
    m: usize,
    tol: f64,
    policy: &RankPolicy,
) -> Result<SpanReport> {
    let fx0 = map.f.eval(base.x0).d1;
    let gy0 = map.g.eval(base.y0).d1;
    let basis = span_basis(&[fx0.clone(), gy0.clone()], policy)?;
    let span_kind = match basis.len() {
        2 => "plane",
        1 => "line",
        _ => "point",
    }
    .to_string();
    let u0 = map.value(base.x0, base.y0);
    let mut out = Vec::with_capacity(samples.len());
    let mut images = Vec::with_capacity(samples.len());
    for &(x, y) in samples {
        if !map.contains(x, y) {
            return Err(Error::OutOfDomain {
                point: vec![x, y],
                reason: format!("rectangle {:?} x {:?}", map.x_range, map.y_range),
            });
        }
        let u = map.value(x, y);
        let du: Vec<f64> = u.iter().zip(&u0).map(|(a, b)| a - b).collect();
        let gy = map.g.eval(y).d1;
        let reconstruction_error = if basis.len() == 2 && (x - base.x0) * (y - base.y0) < 0.0 {
            integral_factors(map, base, x, y, m, policy).ok().map(|fac| {
                let dh = fac.d / fac.h;
                let lead = fac.c - dh * fac.i;
                let alpha = (fac.e - dh) / lead;
                let beta = (1.0 - dh * fac.j) / lead;
                lin3(&[(1.0, &gy), (-alpha, &fx0), (-beta, &gy0)])
            })
        } else {
            None
        };
        out.push(SpanSample {
            x,
            y,
            f_distance: distance_to(&basis, &map.f.eval(x).d1),
            g_distance: distance_to(&basis, &gy),
            value_distance: distance_to(&basis, &du),
            reconstruction_error,
        });
        images.push(u);
    }
    let max_distance = out
        .iter()
        .map(|s| s.f_distance.max(s.g_distance))
        .fold(0.0, f64::max);
    let max_value_distance = out.iter().map(|s| s.value_distance).fold(0.0, f64::max);
    let image_diameter = crate::rigidity::diameter(&images);
    let pass = max_distance <= tol && max_value_distance <= tol * (1.0 + image_diameter);
    Ok(SpanReport {
        base: *base,
        span_kind,
        samples: out,
        max_distance,
        max_value_distance,
        image_diameter,
        tol,
        m,
        pass,
    })
}

/// `count` seeded uniform points in the rectangle.
pub fn sample_points(map: &SeparatedMap, count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (
                rng.gen_range(map.x_range.0..=map.x_range.1),
                rng.gen_range(map.y_range.0..=map.y_range.1),
            )
        })
        .collect()
}

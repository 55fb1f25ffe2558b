//! Command-line front end: builds a map source from flags, runs one check
//! and writes a JSON report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod json;

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use tanlap_core::linalg::RankPolicy;
use tanlap_core::maps::{catalogue, load_grid, BoxDomain, MapSource, Params};
use tanlap_core::operators::{self, Exponent, Residual};
use tanlap_core::quad::observed_orders;
use tanlap_core::rigidity::{flatness_report, subspace_angle, Verdict};
use tanlap_core::separated::{
    identity_residual, sample_points, separated_coeffs, span_check, BasePoint, SeparatedMap,
};
use tanlap_core::variational::{
    minimality_check, p_limit_diagnostic, Subdomain, VariationalVerdict,
};
use tanlap_core::Error;

use args::{Cli, Command, Op};

/// A usage or input problem; the process exits with status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.replace('\n', " "))
    }
}

impl From<Error> for UsageError {
    fn from(e: Error) -> Self {
        UsageError(e.to_string())
    }
}

type Res<T> = std::result::Result<T, UsageError>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MapSpec {
    Gallery { id: String },
    Csv { path: PathBuf },
}

impl MapSpec {
    pub fn parse(s: &str) -> Res<Self> {
        if let Some(id) = s.strip_prefix("gallery:") {
            Ok(MapSpec::Gallery { id: id.to_string() })
        } else if let Some(p) = s.strip_prefix("csv:") {
            Ok(MapSpec::Csv { path: PathBuf::from(p) })
        } else {
            usage(format!("map spec `{s}` must start with `gallery:` or `csv:`"))
        }
    }
}

/// Validated command settings, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum CommandConfig {
    Gallery,
    Residual {
        map: MapSpec,
        op: Op,
        p: Option<f64>,
        #[serde(rename = "box")]
        bx: Option<(Vec<f64>, Vec<f64>)>,
        n: usize,
        tol: f64,
    },
    Flatness {
        map: MapSpec,
        #[serde(rename = "box")]
        bx: Option<(Vec<f64>, Vec<f64>)>,
        n: usize,
        tol: f64,
    },
    Variational {
        map: MapSpec,
        sub: Option<(Vec<f64>, Vec<f64>)>,
        n: usize,
        p: Exponent,
        trials: usize,
        seed: u64,
        eps: Vec<f64>,
    },
    Separated {
        map: MapSpec,
        base: Option<(f64, f64)>,
        query: Option<(f64, f64)>,
        m: usize,
        samples: usize,
        seed: u64,
        tol: f64,
    },
}

impl CommandConfig {
    fn name(&self) -> &'static str {
        match self {
            CommandConfig::Gallery => "gallery",
            CommandConfig::Residual { .. } => "residual",
            CommandConfig::Flatness { .. } => "flatness",
            CommandConfig::Variational { .. } => "variational",
            CommandConfig::Separated { .. } => "separated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEcho {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Everything a run depends on. Thread count and output path are not part
/// of the echo since they cannot change the results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: CommandConfig,
    pub params: Vec<String>,
    pub policy: PolicyEcho,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

fn parse_f64(what: &str, s: &str) -> Res<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => usage(format!("{what}: `{s}` is not a finite number")),
    }
}

/// `x,y`.
pub fn parse_pair(what: &str, s: &str) -> Res<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return usage(format!("{what}: expected `x,y`, got `{s}`"));
    }
    Ok((parse_f64(what, parts[0])?, parse_f64(what, parts[1])?))
}

/// `a,bxc,d` into lower and upper corners.
pub fn parse_box(what: &str, s: &str) -> Res<(Vec<f64>, Vec<f64>)> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for axis in s.split('x') {
        let (lo, hi) = parse_pair(what, axis)?;
        if !(lo < hi) {
            return usage(format!("{what}: need lower < upper on every axis, got `{axis}`"));
        }
        lower.push(lo);
        upper.push(hi);
    }
    Ok((lower, upper))
}

fn positive(what: &str, v: f64) -> Res<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        usage(format!("{what} must be a finite nonnegative number, got {v}"))
    }
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Res<Self> {
        let c = cli.common;
        RankPolicy::new(c.rel_tol, c.abs_tol)?;
        if c.threads == Some(0) {
            return usage("--threads must be at least 1");
        }
        let command = match cli.command {
            Command::Gallery { .. } => CommandConfig::Gallery,
            Command::Residual { map, op, p, bx, n, tol } => {
                if op == Op::PLaplace && p.is_none() {
                    return usage("--op p-laplace needs --p");
                }
                if let Some(p) = p {
                    Exponent::new(p)?;
                    if p.is_infinite() {
                        return usage("--p must be finite; use --op inf-laplace for p = inf");
                    }
                }
                CommandConfig::Residual {
                    map: MapSpec::parse(&map)?,
                    op,
                    p,
                    bx: bx.map(|b| parse_box("--box", &b)).transpose()?,
                    n: resolution(n)?,
                    tol: positive("--tol", tol)?,
                }
            }
            Command::Flatness { map, bx, n, tol } => CommandConfig::Flatness {
                map: MapSpec::parse(&map)?,
                bx: bx.map(|b| parse_box("--box", &b)).transpose()?,
                n: resolution(n)?,
                tol: positive("--tol", tol)?,
            },
            Command::Variational { map, sub, n, p, trials, seed, eps } => {
                let eps: Vec<f64> = eps
                    .split(',')
                    .map(|e| parse_f64("--eps", e))
                    .collect::<Res<_>>()?;
                if eps.contains(&0.0) {
                    return usage("--eps values must be nonzero");
                }
                if trials == 0 {
                    return usage("--trials must be at least 1");
                }
                CommandConfig::Variational {
                    map: MapSpec::parse(&map)?,
                    sub: sub.map(|b| parse_box("--sub", &b)).transpose()?,
                    n: resolution(n)?,
                    p: Exponent::parse(&p)?,
                    trials,
                    seed,
                    eps,
                }
            }
            Command::Separated { map, base, query, m, samples, seed, tol } => {
                if m < 8 {
                    return usage("--m must be at least 8");
                }
                CommandConfig::Separated {
                    map: MapSpec::parse(&map)?,
                    base: base.map(|b| parse_pair("--base", &b)).transpose()?,
                    query: query.map(|q| parse_pair("--query", &q)).transpose()?,
                    m,
                    samples,
                    seed,
                    tol: positive("--tol", tol)?,
                }
            }
        };
        Ok(Self {
            command,
            params: c.params,
            policy: PolicyEcho {
                rel_tol: c.rel_tol,
                abs_tol: c.abs_tol,
            },
            threads: c.threads,
            out: c.out,
        })
    }

    pub fn policy(&self) -> RankPolicy {
        RankPolicy::new(self.policy.rel_tol, self.policy.abs_tol).expect("validated")
    }
}

fn resolution(n: usize) -> Res<usize> {
    if n < 3 {
        return usage(format!("--n must be at least 3, got {n}"));
    }
    Ok(n)
}

/// Result of one run: the report, its verdict and a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
    pub summary: String,
}

fn load_source(
    spec: &MapSpec,
    params: &[String],
    bx: Option<&(Vec<f64>, Vec<f64>)>,
    n: Option<usize>,
) -> Res<MapSource> {
    match spec {
        MapSpec::Gallery { id } => {
            let mut p = Params::parse(params)?;
            let src = MapSource::gallery(id, &mut p)?;
            let dom = match (bx, n) {
                (Some((lo, hi)), n) => {
                    let res = n.unwrap_or(src.domain().resolution()[0]);
                    BoxDomain::new(lo.clone(), hi.clone(), vec![res; lo.len()])?
                }
                (None, Some(n)) => src.domain().with_resolution(n)?,
                (None, None) => return Ok(src),
            };
            Ok(src.with_domain(dom)?)
        }
        MapSpec::Csv { path } => {
            if !params.is_empty() {
                return usage("--param applies to gallery maps only");
            }
            let grid = load_grid(path).map_err(|e| match e {
                Error::Io(_) => UsageError(format!("{}: {e}", path.display())),
                e => e.into(),
            })?;
            let src = MapSource::from_grid(grid);
            match bx {
                None => Ok(src),
                Some((lo, hi)) => {
                    let g = src.domain().clone();
                    if lo.len() != g.dim() {
                        return usage(format!("--box has {} axes, grid has {}", lo.len(), g.dim()));
                    }
                    let res = (0..g.dim())
                        .map(|a| ((hi[a] - lo[a]) / g.spacing(a)).round() as usize + 1)
                        .collect();
                    let dom = BoxDomain::new(lo.clone(), hi.clone(), res)?;
                    if g.lattice_index_of(lo).is_none() || g.lattice_index_of(hi).is_none() {
                        return usage("--box corners must be lattice points of the grid");
                    }
                    Ok(src.with_domain(dom)?)
                }
            }
        }
    }
}

/// Runs one configured command inside the current rayon pool.
pub fn run(cfg: &RunConfig) -> Res<Outcome> {
    let policy = cfg.policy();
    let (results, pass, summary) = match &cfg.command {
        CommandConfig::Gallery => run_gallery(),
        CommandConfig::Residual { map, op, p, bx, n, tol } => {
            let src = load_source(map, &cfg.params, bx.as_ref(), Some(*n))?;
            run_residual(&src, *op, *p, *tol, &policy)?
        }
        CommandConfig::Flatness { map, bx, n, tol } => {
            let src = load_source(map, &cfg.params, bx.as_ref(), Some(*n))?;
            run_flatness(&src, *tol, &policy)?
        }
        CommandConfig::Variational { map, sub, n, p, trials, seed, eps } => {
            let src = load_source(map, &cfg.params, None, None)?;
            run_variational(&src, sub.as_ref(), *n, *p, *trials, *seed, eps, &policy)?
        }
        CommandConfig::Separated { map, base, query, m, samples, seed, tol } => {
            let src = load_source(map, &cfg.params, None, None)?;
            run_separated(&src, *base, *query, *m, *samples, *seed, *tol, &policy)?
        }
    };
    let report = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "config": serde_json::to_value(cfg).expect("config serialises"),
        "results": results,
        "verdict": if pass { "pass" } else { "fail" },
    });
    Ok(Outcome {
        report,
        pass,
        summary,
    })
}

/// Runs with the requested thread count and writes the report.
pub fn execute(cfg: &RunConfig) -> Res<Outcome> {
    let outcome = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| UsageError(format!("thread pool: {e}")))?
            .install(|| run(cfg))?,
        None => run(cfg)?,
    };
    write_report(&cfg.out, &outcome.report)?;
    Ok(outcome)
}

pub fn write_report(path: &Path, report: &Value) -> Res<()> {
    let text = json::to_string(report).map_err(|e| UsageError(format!("serialising report: {e}")))?;
    std::fs::write(path, text).map_err(|e| UsageError(format!("writing {}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialise")
}

fn run_gallery() -> (Value, bool, String) {
    let cat = catalogue();
    let summary = cat
        .iter()
        .map(|e| e.id)
        .collect::<Vec<_>>()
        .join(", ");
    (
        json!({ "entries": to_value(&cat) }),
        true,
        format!("{} gallery entries: {summary}", cat.len()),
    )
}

#[derive(Serialize)]
struct PointResidual {
    point: Vec<f64>,
    raw: f64,
    normalized: f64,
}

fn run_residual(
    src: &MapSource,
    op: Op,
    p: Option<f64>,
    tol: f64,
    policy: &RankPolicy,
) -> Res<(Value, bool, String)> {
    let dom = src.domain();
    let pts = dom.interior_indices();
    let evaluated: Vec<Option<PointResidual>> = pts
        .par_iter()
        .map(|idx| {
            let x = dom.point(idx);
            let jet = match src.eval_jet(&x) {
                Ok(j) => j,
                Err(Error::SingularPoint { .. }) => return Ok(None),
                Err(e) => return Err(UsageError::from(e)),
            };
            let (raw, normalized) = match op {
                Op::AField => {
                    let a = operators::a_field(&jet, policy)?;
                    (a.defect, a.defect / operators::normalization(&jet))
                }
                _ => {
                    let v = match op {
                        Op::Tangential => operators::tangential_residual(&jet, policy)?,
                        Op::Tension => operators::tension_field(&jet, policy)?,
                        Op::Laplacian => operators::laplacian(&jet),
                        Op::PLaplace => operators::p_laplace_residual(&jet, p.expect("validated"))?,
                        Op::InfLaplace => operators::inf_laplace_residual(&jet, policy)?,
                        Op::AField => unreachable!(),
                    };
                    let r = Residual::new(&jet, v);
                    (r.norm, r.normalized)
                }
            };
            Ok(Some(PointResidual {
                point: x,
                raw,
                normalized,
            }))
        })
        .collect::<Res<_>>()?;
    let skipped: Vec<Vec<f64>> = pts
        .iter()
        .zip(&evaluated)
        .filter(|(_, r)| r.is_none())
        .map(|(i, _)| dom.point(i))
        .collect();
    let points: Vec<PointResidual> = evaluated.into_iter().flatten().collect();
    if points.is_empty() {
        return usage("every lattice point lies on the singular set");
    }
    let (mut max_n, mut max_raw, mut arg) = (0.0f64, 0.0f64, 0);
    for (k, r) in points.iter().enumerate() {
        if r.normalized > max_n {
            max_n = r.normalized;
            arg = k;
        }
        max_raw = max_raw.max(r.raw);
    }
    let pass = max_n <= tol;
    let summary = format!(
        "{} {} on {} points: max normalized residual {max_n:.3e} {} tol {tol:.1e}",
        src.describe(),
        to_value(&op).as_str().unwrap_or_default(),
        points.len(),
        if pass { "<=" } else { ">" }
    );
    Ok((
        json!({
            "map": src.describe(),
            "domain": to_value(dom),
            "evaluated": points.len(),
            "skipped_singular": skipped,
            "max_normalized": max_n,
            "max_raw": max_raw,
            "argmax": points[arg].point,
            "points": to_value(&points),
        }),
        pass,
        summary,
    ))
}

fn run_flatness(src: &MapSource, tol: f64, policy: &RankPolicy) -> Res<(Value, bool, String)> {
    let rep = flatness_report(src, src.domain(), policy, tol)?;
    let fitted: Vec<_> = rep
        .judged()
        .filter_map(|c| c.fit.as_ref().filter(|f| f.dim > 0).map(|f| (c.component.label, f)))
        .collect();
    let mut angles = Vec::new();
    for (i, (la, fa)) in fitted.iter().enumerate() {
        for (lb, fb) in &fitted[i + 1..] {
            if fa.dim == fb.dim {
                angles.push(json!({
                    "labels": [la, lb],
                    "angle": subspace_angle(&fa.basis, &fb.basis),
                }));
            }
        }
    }
    let pass = rep.global_verdict == Verdict::Flat;
    let summary = format!(
        "{}: {} components ({} judged), verdict {}",
        src.describe(),
        rep.components.len(),
        rep.judged().count(),
        match rep.global_verdict {
            Verdict::Flat => "flat",
            Verdict::NotFlat => "not-flat",
            Verdict::Excluded => "no judged components",
        }
    );
    Ok((
        json!({
            "map": src.describe(),
            "domain": to_value(src.domain()),
            "report": to_value(&rep),
            "pairwise_angles": angles,
        }),
        pass,
        summary,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_variational(
    src: &MapSource,
    sub: Option<&(Vec<f64>, Vec<f64>)>,
    n: usize,
    p: Exponent,
    trials: usize,
    seed: u64,
    eps: &[f64],
    policy: &RankPolicy,
) -> Res<(Value, bool, String)> {
    let dom = src.domain();
    let (lo, hi) = match sub {
        Some((lo, hi)) => (lo.clone(), hi.clone()),
        None => (
            (0..dom.dim())
                .map(|a| dom.lower()[a] + 0.25 * (dom.upper()[a] - dom.lower()[a]))
                .collect(),
            (0..dom.dim())
                .map(|a| dom.upper()[a] - 0.25 * (dom.upper()[a] - dom.lower()[a]))
                .collect(),
        ),
    };
    let res = vec![n; lo.len()];
    let sub = Subdomain::new(src, BoxDomain::new(lo, hi, res)?)?;
    let rep = minimality_check(src, &sub, p, trials, eps, policy, seed)?;
    let diagnostic = match (p, rep.trials.first()) {
        (Exponent::Infinity, Some(t)) => {
            let e0 = eps.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
            Some(to_value(&p_limit_diagnostic(src, &sub, Some(&t.field), e0, &[8.0, 16.0, 32.0, 64.0])?))
        }
        _ => None,
    };
    let pass = rep.verdict == VariationalVerdict::Minimal;
    let verdict = match rep.verdict {
        VariationalVerdict::Minimal => "minimal",
        VariationalVerdict::Violated => "violated",
        VariationalVerdict::NonSolutionInput => "non-solution-input",
    };
    let summary = format!(
        "{} p = {p}: base energy {:.6e}, {} trial runs, verdict {verdict}",
        src.describe(),
        rep.base_energy,
        rep.trials.len()
    );
    Ok((
        json!({
            "map": src.describe(),
            "report": to_value(&rep),
            "p_limit_diagnostic": diagnostic,
        }),
        pass,
        summary,
    ))
}

/// The rectangle centre, or the first quarter point where `f'` and `g'` span
/// a plane if the centre is degenerate.
fn default_base(map: &SeparatedMap, policy: &RankPolicy) -> (f64, f64) {
    let at = |s: f64, t: f64| {
        (
            map.x_range.0 + s * (map.x_range.1 - map.x_range.0),
            map.y_range.0 + t * (map.y_range.1 - map.y_range.0),
        )
    };
    [(0.5, 0.5), (0.25, 0.75), (0.75, 0.25)]
        .iter()
        .map(|&(s, t)| at(s, t))
        .find(|&(x, y)| separated_coeffs(map, x, y, policy).is_ok())
        .unwrap_or_else(|| at(0.5, 0.5))
}

/// Identity residuals are judged convergent when the last measured order is
/// at least this, or the finest residual is at rounding level.
const MIN_ORDER: f64 = 1.7;

#[allow(clippy::too_many_arguments)]
fn run_separated(
    src: &MapSource,
    base: Option<(f64, f64)>,
    query: Option<(f64, f64)>,
    m: usize,
    samples: usize,
    seed: u64,
    tol: f64,
    policy: &RankPolicy,
) -> Res<(Value, bool, String)> {
    let map = SeparatedMap::from_source(src)?;
    let (x0, y0) = base.unwrap_or_else(|| default_base(&map, policy));
    let base = BasePoint::new(&map, x0, y0)?;
    let pts = sample_points(&map, samples, seed);
    let span = span_check(&map, &base, &pts, m, tol, policy)?;
    let mut pass = span.pass;
    let mut summary = format!(
        "{}: span {} max distance {:.3e} ({})",
        src.describe(),
        span.span_kind,
        span.max_distance,
        if span.pass { "pass" } else { "fail" }
    );
    let identities = match query {
        None => Value::Null,
        Some((x, y)) => {
            let ladder: Vec<usize> = (0..4).map(|k| m << k).collect();
            let rs = ladder
                .iter()
                .map(|&mm| identity_residual(&map, &base, x, y, mm, policy))
                .collect::<Result<Vec<_>, _>>()?;
            let r24: Vec<f64> = rs.iter().map(|r| r.r24).collect();
            let r27: Option<Vec<f64>> = rs.iter().map(|r| r.r27).collect();
            let o24 = observed_orders(&r24);
            let o27 = r27.as_ref().map(|v| observed_orders(v));
            let converges = |v: &[f64], o: &[Option<f64>]| {
                v.last().is_some_and(|&r| r <= 1e-12) || o.last().copied().flatten().is_some_and(|q| q >= MIN_ORDER)
            };
            let signs_ok = rs.iter().all(|r| r.sign_violations.is_empty());
            let ok24 = converges(&r24, &o24);
            let ok27 = match (&r27, &o27) {
                (Some(v), Some(o)) => converges(v, o),
                _ => true,
            };
            let coeffs = separated_coeffs(&map, x, y, policy)?;
            pass &= ok24 && ok27 && signs_ok;
            summary += &format!(
                "; r24 at m = {}: {:.3e} ({})",
                ladder[3],
                r24[3],
                if ok24 && ok27 && signs_ok { "converging" } else { "not converging" }
            );
            json!({
                "query": [x, y],
                "ladder": ladder,
                "r24": r24,
                "r24_orders": o24,
                "r27": r27,
                "r27_orders": o27,
                "residuals": to_value(&rs),
                "coefficients": to_value(&coeffs),
                "signs_ok": signs_ok,
                "converging": ok24 && ok27,
            })
        }
    };
    Ok((
        json!({
            "map": src.describe(),
            "rectangle": [[map.x_range.0, map.x_range.1], [map.y_range.0, map.y_range.1]],
            "span": to_value(&span),
            "identities": identities,
        }),
        pass,
        summary,
    ))
}

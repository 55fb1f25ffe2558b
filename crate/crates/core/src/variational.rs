//! L^p minimality of solutions under perturbations normal to the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm, projections, Mat, RankPolicy};
use crate::maps::{BoxDomain, MapSource};
use crate::operators::{laplacian, normalization, Exponent};
use crate::quad::pairwise_sum;

/// Normalised tangential residual above which an input is not a solution.
pub const SOLUTION_GATE: f64 = 1e-8;

/// A box compactly inside the source domain, with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subdomain {
    #[serde(rename = "box")]
    pub bx: BoxDomain,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

impl Subdomain {
    pub fn new(source: &MapSource, bx: BoxDomain) -> Result<Self> {
        if !source.domain().strictly_contains_box(&bx) {
            return Err(Error::Precondition(format!(
                "subdomain [{:?}, {:?}] must lie strictly inside the source box [{:?}, {:?}]",
                bx.lower(),
                bx.upper(),
                source.domain().lower(),
                source.domain().upper()
            )));
        }
        let ext = ghosted(&bx)?;
        if !source.domain().contains_box(&ext) {
            return Err(Error::Precondition(
                "subdomain needs one lattice cell of room inside the source box on every side".into(),
            ));
        }
        let weights = bx
            .indices()
            .iter()
            .map(|idx| {
                idx.iter()
                    .enumerate()
                    .map(|(a, &k)| {
                        let h = bx.spacing(a);
                        if k == 0 || k + 1 == bx.resolution()[a] {
                            0.5 * h
                        } else {
                            h
                        }
                    })
                    .product()
            })
            .collect();
        Ok(Self { bx, weights })
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.bx.dim()).map(|a| self.bx.spacing(a)).fold(0.0, f64::max)
    }
}

/// The sub lattice plus one ghost layer on each side.
fn ghosted(bx: &BoxDomain) -> Result<BoxDomain> {
    let n = bx.dim();
    let lower = (0..n).map(|a| bx.lower()[a] - bx.spacing(a)).collect();
    let upper = (0..n).map(|a| bx.upper()[a] + bx.spacing(a)).collect();
    let res = bx.resolution().iter().map(|r| r + 2).collect();
    BoxDomain::new(lower, upper, res)
}

/// Scalar profile `φ = amplitude (offset + Π_a sin(π f_a s_a))` in
/// normalised coordinates `s ∈ [0, 1]^n`; vanishes on the boundary iff
/// `offset = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    pub amplitude: f64,
    pub offset: f64,
    pub freqs: Vec<u32>,
}

impl Bump {
    pub fn sine(freqs: Vec<u32>) -> Self {
        Self {
            amplitude: 1.0,
            offset: 0.0,
            freqs,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            amplitude: 0.0,
            offset: 0.0,
            freqs: vec![1; dim],
        }
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        let prod: f64 = s
            .iter()
            .zip(&self.freqs)
            .map(|(si, &f)| (std::f64::consts::PI * f as f64 * si).sin())
            .product();
        self.amplitude * (self.offset + prod)
    }
}

/// `ν = φ [[Du]]^⊥ w` on the sub lattice (plus a ghost layer), scaled to
/// `max |ν| = 1` on the sub lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalField {
    pub direction: Vec<f64>,
    pub bump: Bump,
    pub boundary_zero: bool,
    /// Sub-lattice values, lexicographic.
    #[serde(skip)]
    pub values: Vec<Vec<f64>>,
    /// Central-difference `Dν` at each sub-lattice point.
    #[serde(skip)]
    pub grads: Vec<Mat>,
    pub normality_defect: f64,
    pub boundary_max: f64,
}

struct Lattice {
    ext: BoxDomain,
    /// Per ext-lattice point: `Du` and the perp projection.
    grads: Vec<Mat>,
    perps: Vec<Mat>,
    pars: Vec<Mat>,
    ranks: Vec<usize>,
    /// Max normalised tangential residual over the sub lattice.
    residual: f64,
}

fn lattice(source: &MapSource, sub: &Subdomain, policy: &RankPolicy) -> Result<Lattice> {
    let ext = ghosted(&sub.bx)?;
    let per: Vec<(Mat, Mat, Mat, usize, f64)> = ext
        .indices()
        .par_iter()
        .map(|idx| {
            let jet = source.eval_jet(&ext.point(idx))?;
            let pp = projections(&jet.grad, policy)?;
            let res = if ext.is_interior(idx) {
                norm(&pp.perp.matvec(&laplacian(&jet))) / normalization(&jet)
            } else {
                0.0
            };
            Ok((jet.grad, pp.perp, pp.par, pp.rank, res))
        })
        .collect::<Result<_>>()?;
    let mut lat = Lattice {
        ext,
        grads: Vec::with_capacity(per.len()),
        perps: Vec::with_capacity(per.len()),
        pars: Vec::with_capacity(per.len()),
        ranks: Vec::with_capacity(per.len()),
        residual: 0.0,
    };
    for (g, perp, par, r, res) in per {
        lat.grads.push(g);
        lat.perps.push(perp);
        lat.pars.push(par);
        lat.ranks.push(r);
        lat.residual = lat.residual.max(res);
    }
    Ok(lat)
}

impl Lattice {
    fn sub_indices(&self) -> Vec<Vec<usize>> {
        self.ext.interior_indices()
    }

    fn check_constant_rank(&self) -> Result<usize> {
        let mut found: Vec<usize> = self.ranks.clone();
        found.sort_unstable();
        found.dedup();
        if found.len() != 1 {
            return Err(Error::ConstantRankViolation { found });
        }
        Ok(found[0])
    }

    fn sub_grads(&self) -> Vec<Mat> {
        self.sub_indices()
            .iter()
            .map(|i| self.grads[self.ext.linear_index(i)].clone())
            .collect()
    }
}

fn build_field(
    lat: &Lattice,
    bump: Bump,
    w: &[f64],
    boundary_zero: bool,
) -> Result<NormalField> {
    let ext = &lat.ext;
    let n = ext.dim();
    let big_n = w.len();
    if boundary_zero && bump.offset != 0.0 {
        return Err(Error::InvalidParam("a boundary-vanishing bump needs offset 0".into()));
    }
    if bump.freqs.len() != n {
        return Err(Error::Dimension(format!("bump has {} frequencies, n = {n}", bump.freqs.len())));
    }
    let pw: Vec<Vec<f64>> = lat.perps.iter().map(|p| p.matvec(w)).collect();
    let max_normal = pw.iter().map(|v| norm(v)).fold(0.0, f64::max);
    if max_normal <= 1e-12 * (1.0 + norm(w)) {
        return Err(Error::DegenerateDirection { max_normal });
    }
    // Normalised coordinate of ext index k along axis a: the sub lattice is
    // k = 1..=r, mapped to [0, 1].
    let s_of = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &k)| (k as f64 - 1.0) / (ext.resolution()[a] - 3) as f64)
            .collect()
    };
    let mut raw: Vec<Vec<f64>> = ext
        .indices()
        .iter()
        .zip(&pw)
        .map(|(idx, v)| {
            let phi = bump.eval(&s_of(idx));
            v.iter().map(|x| phi * x).collect()
        })
        .collect();
    let sub = lat.sub_indices();
    let peak = sub
        .iter()
        .map(|i| norm(&raw[ext.linear_index(i)]))
        .fold(0.0, f64::max);
    if peak > 0.0 {
        for v in raw.iter_mut() {
            v.iter_mut().for_each(|x| *x /= peak);
        }
    }

    let h: Vec<f64> = (0..n).map(|a| ext.spacing(a)).collect();
    let mut values = Vec::with_capacity(sub.len());
    let mut grads = Vec::with_capacity(sub.len());
    let mut defect: f64 = 0.0;
    let mut boundary_max: f64 = 0.0;
    for idx in &sub {
        let lin = ext.linear_index(idx);
        let v = raw[lin].clone();
        let par_v = lat.pars[lin].matvec(&v);
        defect = defect.max(norm(&par_v) / (1.0 + norm(&v)));
        if idx.iter().zip(ext.resolution()).any(|(&k, &r)| k == 1 || k + 2 == r) {
            boundary_max = boundary_max.max(norm(&v));
        }
        let mut g = Mat::zeros(big_n, n);
        for i in 0..n {
            let mut p = idx.clone();
            let mut m = idx.clone();
            p[i] += 1;
            m[i] -= 1;
            let (vp, vm) = (&raw[ext.linear_index(&p)], &raw[ext.linear_index(&m)]);
            for a in 0..big_n {
                g[(a, i)] = (vp[a] - vm[a]) / (2.0 * h[i]);
            }
        }
        values.push(v);
        grads.push(g);
    }
    Ok(NormalField {
        direction: w.to_vec(),
        bump,
        boundary_zero,
        values,
        grads,
        normality_defect: defect,
        boundary_max,
    })
}

/// Builds a normal field; the source must have constant rank on the sub
/// lattice and its ghost layer.
pub fn make_normal_field(
    source: &MapSource,
    sub: &Subdomain,
    bump: Bump,
    w: &[f64],
    policy: &RankPolicy,
    boundary_zero: bool,
) -> Result<NormalField> {
    if w.len() != source.dims().1 {
        return Err(Error::Dimension(format!(
            "direction has {} components, N = {}",
            w.len(),
            source.dims().1
        )));
    }
    let lat = lattice(source, sub, policy)?;
    lat.check_constant_rank()?;
    build_field(&lat, bump, w, boundary_zero)
}

fn energy_from(base: &[Mat], field: Option<&NormalField>, eps: f64, p: Exponent, weights: &[f64]) -> f64 {
    let mags: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(k, g)| match field {
            Some(f) if eps != 0.0 => g.add(&f.grads[k].scaled(eps)).frobenius(),
            _ => g.frobenius(),
        })
        .collect();
    let top = mags.iter().copied().fold(0.0, f64::max);
    match p {
        Exponent::Infinity => top,
        Exponent::Finite(q) => {
            if top == 0.0 {
                return 0.0;
            }
            let terms: Vec<f64> = mags
                .iter()
                .zip(weights)
                .map(|(m, w)| w * (m / top).powf(q))
                .collect();
            top * pairwise_sum(&terms).powf(1.0 / q)
        }
    }
}

/// `‖Du + ε Dν‖_{L^p}` over the sub lattice (max norm for `p = ∞`).
pub fn energy(
    source: &MapSource,
    field: Option<&NormalField>,
    eps: f64,
    p: Exponent,
    sub: &Subdomain,
) -> Result<f64> {
    if !eps.is_finite() {
        return Err(Error::InvalidParam(format!("epsilon {eps} must be finite")));
    }
    let ext = ghosted(&sub.bx)?;
    let base = ext
        .interior_indices()
        .par_iter()
        .map(|i| source.eval_jet(&ext.point(i)).map(|j| j.grad))
        .collect::<Result<Vec<_>>>()?;
    if let Some(f) = field {
        if f.grads.len() != base.len() {
            return Err(Error::Dimension("normal field lattice does not match the subdomain".into()));
        }
    }
    Ok(energy_from(&base, field, eps, p, &sub.weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationalVerdict {
    Minimal,
    Violated,
    NonSolutionInput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub boundary_zero: bool,
    pub field: NormalField,
    pub perturbed_energies: Vec<f64>,
    pub stationarity_derivative: f64,
    /// Smallest `perturbed − base` over the ε grid.
    pub min_gain: f64,
    /// Passed without the h² slack.
    pub strict_pass: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalReport {
    pub p: Exponent,
    pub subdomain: Subdomain,
    pub base_energy: f64,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
    pub rank: Option<usize>,
    pub max_normalized_residual: f64,
    /// `10 h²`, multiplied by `1 + base` in the pass test.
    pub slack: f64,
    pub trials: Vec<TrialReport>,
    /// Largest `|dE/dε|` at 0 over the trials.
    pub stationarity_derivative: f64,
    pub verdict: VariationalVerdict,
    pub bump_description: String,
}

/// Seeded random unit direction and bump frequencies for one trial.
pub fn trial_shape(seed: u64, n: usize, big_n: usize) -> (Vec<f64>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs = (0..n).map(|_| rng.gen_range(1..=3)).collect();
    loop {
        let w: Vec<f64> = (0..big_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nw = norm(&w);
        if nw > 0.1 {
            return (w.iter().map(|x| x / nw).collect(), freqs);
        }
    }
}

/// Perturbs a solution by seeded random normal fields and checks that the
/// energy does not drop at any ε of the grid.
///
/// Finite `p` uses boundary-vanishing fields only; `p = ∞` runs every trial
/// both with and without boundary vanishing.
pub fn minimality_check(
    source: &MapSource,
    sub: &Subdomain,
    p: Exponent,
    trials: usize,
    eps_grid: &[f64],
    policy: &RankPolicy,
    seed: u64,
) -> Result<VariationalReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !e.is_finite() || *e == 0.0) {
        return Err(Error::InvalidParam("epsilon grid must be nonempty, finite, nonzero".into()));
    }
    let lat = lattice(source, sub, policy)?;
    let base_grads = lat.sub_grads();
    let base = energy_from(&base_grads, None, 0.0, p, &sub.weights);
    let h = sub.max_spacing();
    let slack = 10.0 * h * h;
    let mut report = VariationalReport {
        p,
        subdomain: sub.clone(),
        base_energy: base,
        eps_grid: eps_grid.to_vec(),
        seed,
        rank: None,
        max_normalized_residual: lat.residual,
        slack,
        trials: Vec::new(),
        stationarity_derivative: 0.0,
        verdict: VariationalVerdict::NonSolutionInput,
        bump_description: "phi = prod_a sin(pi f_a s_a), s in [0,1]^n, f_a in 1..=3 seeded; \
                           without boundary vanishing phi = 0.5 + prod_a sin(pi f_a s_a)"
            .into(),
    };
    if lat.residual > SOLUTION_GATE {
        return Ok(report);
    }
    report.rank = Some(lat.check_constant_rank()?);

    let modes: &[bool] = match p {
        Exponent::Infinity => &[true, false],
        Exponent::Finite(_) => &[true],
    };
    let eps0 = eps_grid.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    let (n, big_n) = source.dims();
    let jobs: Vec<(usize, bool)> = (0..trials)
        .flat_map(|t| modes.iter().map(move |&m| (t, m)))
        .collect();
    let results: Vec<TrialReport> = jobs
        .par_iter()
        .map(|&(t, boundary_zero)| {
            let tseed = seed.wrapping_add(t as u64);
            let (w, freqs) = trial_shape(tseed, n, big_n);
            let mut bump = Bump::sine(freqs);
            if !boundary_zero {
                bump.offset = 0.5;
            }
            let field = build_field(&lat, bump, &w, boundary_zero)?;
            let e = |eps: f64| energy_from(&base_grads, Some(&field), eps, p, &sub.weights);
            let perturbed: Vec<f64> = eps_grid.iter().map(|&eps| e(eps)).collect();
            let stationarity = (e(eps0) - e(-eps0)) / (2.0 * eps0);
            let min_gain = perturbed.iter().map(|v| v - base).fold(f64::INFINITY, f64::min);
            let strict = min_gain >= -1e-12 * (1.0 + base);
            let passed = min_gain >= -(1e-12 + slack) * (1.0 + base);
            Ok(TrialReport {
                trial: t,
                seed: tseed,
                boundary_zero,
                field,
                perturbed_energies: perturbed,
                stationarity_derivative: stationarity,
                min_gain,
                strict_pass: strict,
                passed,
            })
        })
        .collect::<Result<_>>()?;
    report.stationarity_derivative = results
        .iter()
        .map(|t| t.stationarity_derivative.abs())
        .fold(0.0, f64::max);
    report.verdict = if results.iter().all(|t| t.passed) {
        VariationalVerdict::Minimal
    } else {
        VariationalVerdict::Violated
    };
    report.trials = results;
    Ok(report)
}

/// `‖·‖_{L^p}` for increasing `p` next to the max norm, same field and ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitDiagnostic {
    pub ps: Vec<f64>,
    pub energies: Vec<f64>,
    pub sup_energy: f64,
    /// `|E_p − E_∞| / E_∞` per p.
    pub relative_gaps: Vec<f64>,
}

pub fn p_limit_diagnostic(
    source: &MapSource,
    sub: &Subdomain,
    field: Option<&NormalField>,
    eps: f64,
    ps: &[f64],
) -> Result<LimitDiagnostic> {
    let sup = energy(source, field, eps, Exponent::Infinity, sub)?;
    let energies = ps
        .iter()
        .map(|&q| energy(source, field, eps, Exponent::new(q)?, sub))
        .collect::<Result<Vec<_>>>()?;
    let relative_gaps = energies.iter().map(|e| (e - sup).abs() / sup.max(f64::MIN_POSITIVE)).collect();
    Ok(LimitDiagnostic {
        ps: ps.to_vec(),
        energies,
        sup_energy: sup,
        relative_gaps,
    })
}

//! Pointwise differential operators on second-order jets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, gram_solve, norm, projections, svd_small, Mat, RankPolicy};
use crate::maps::Jet2;

/// Exponent of the p-Laplacian family, `p ∈ [2, ∞]`.
/// Serialises as a number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 2.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    /// Accepts a number or `inf`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            t => Self::new(
                t.parse()
                    .map_err(|_| Error::InvalidParam(format!("exponent `{s}` is not a number")))?,
            ),
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Exponent::Finite(p) => *p,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// `Δu`, the trace of the Hessian over the spatial indices.
pub fn laplacian(jet: &Jet2) -> Vec<f64> {
    (0..jet.target_dim())
        .map(|a| (0..jet.n()).map(|i| jet.hess_at(a, i, i)).sum())
        .collect()
}

/// `Du ⊗ Du : D²u`, i.e. `Σ_{β,i,j} D_i u_α D_j u_β D²_{ij} u_β`.
pub fn contraction(jet: &Jet2) -> Vec<f64> {
    let n = jet.n();
    let big_n = jet.target_dim();
    let du = &jet.grad;
    // w_i = Σ_{β,j} D_j u_β D²_{ij} u_β = ½ D_i |Du|²
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for b in 0..big_n {
                for j in 0..n {
                    s += du[(b, j)] * jet.hess_at(b, i, j);
                }
            }
            s
        })
        .collect();
    du.matvec(&w)
}

/// `(1 + |Du|²)(1 + |D²u|)`, the scale residuals are divided by.
pub fn normalization(jet: &Jet2) -> f64 {
    let g = jet.grad.frobenius();
    (1.0 + g * g) * (1.0 + jet.hess_norm())
}

/// Residual vector with its raw and normalised Euclidean norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub vector: Vec<f64>,
    pub norm: f64,
    pub normalized: f64,
}

impl Residual {
    pub fn new(jet: &Jet2, vector: Vec<f64>) -> Self {
        let nrm = norm(&vector);
        Self {
            normalized: nrm / normalization(jet),
            norm: nrm,
            vector,
        }
    }
}

/// `[[Du]]^⊥ Δu`.
pub fn tangential_residual(jet: &Jet2, policy: &RankPolicy) -> Result<Vec<f64>> {
    let pp = projections(&jet.grad, policy)?;
    Ok(pp.perp.matvec(&laplacian(jet)))
}

/// `[[Du]]^∥ Δu`.
pub fn tension_field(jet: &Jet2, policy: &RankPolicy) -> Result<Vec<f64>> {
    let pp = projections(&jet.grad, policy)?;
    Ok(pp.par.matvec(&laplacian(jet)))
}

/// Expanded p-Laplacian `Du⊗Du:D²u + |Du|²/(p−2) Δu`; `p = 2` gives `Δu`.
pub fn p_laplace_residual(jet: &Jet2, p: f64) -> Result<Vec<f64>> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(Error::InvalidExponent(p));
    }
    let lap = laplacian(jet);
    if p == 2.0 {
        return Ok(lap);
    }
    let g2 = jet.grad.frobenius().powi(2);
    let c = g2 / (p - 2.0);
    Ok(contraction(jet)
        .iter()
        .zip(&lap)
        .map(|(a, l)| a + c * l)
        .collect())
}

/// `Du⊗Du:D²u + |Du|² [[Du]]^⊥ Δu`.
pub fn inf_laplace_residual(jet: &Jet2, policy: &RankPolicy) -> Result<Vec<f64>> {
    let pair = decomposition_pair(jet, Exponent::Infinity, policy)?;
    Ok(pair.first.iter().zip(&pair.second).map(|(a, b)| a + b).collect())
}

/// The tangential and normal systems whose sum is the p- or ∞-Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// First: `Du⊗Du:D²u + |Du|²/(p−2) [[Du]]^∥ Δu` (no second term at `p = ∞`).
/// Second: `|Du|² [[Du]]^⊥ Δu`.
///
/// At `p = 2` the first component is multiplied through by `p − 2`, giving
/// `|Du|² [[Du]]^∥ Δu`.
pub fn decomposition_pair(jet: &Jet2, p: Exponent, policy: &RankPolicy) -> Result<DecompositionPair> {
    let pp = projections(&jet.grad, policy)?;
    let lap = laplacian(jet);
    let g2 = jet.grad.frobenius().powi(2);
    let par_lap = pp.par.matvec(&lap);
    let second: Vec<f64> = pp.perp.matvec(&lap).iter().map(|v| g2 * v).collect();
    let first = match p {
        Exponent::Infinity => contraction(jet),
        Exponent::Finite(2.0) => par_lap.iter().map(|v| g2 * v).collect(),
        Exponent::Finite(q) => {
            let c = g2 / (q - 2.0);
            contraction(jet)
                .iter()
                .zip(&par_lap)
                .map(|(a, l)| a + c * l)
                .collect()
        }
    };
    Ok(DecompositionPair { first, second })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Rank2,
    Rank1,
    Rank0,
}

impl Branch {
    fn from_rank(r: usize) -> Self {
        match r {
            0 => Branch::Rank0,
            1 => Branch::Rank1,
            _ => Branch::Rank2,
        }
    }
}

/// Candidate not taken when a singular value sits near the rank cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlternateBranch {
    pub branch: Branch,
    pub value: Vec<f64>,
    pub defect: f64,
}

/// Coefficient field `Ā` with `[[Du]]^∥ Δu = Du Ā`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AField {
    pub value: Vec<f64>,
    pub branch: Branch,
    /// `|Δu − Du Ā|`.
    pub defect: f64,
    /// Dimension of the nullspace of `Du`; any `Ā + V` with `Du V = 0` works too.
    pub nullspace_dim: usize,
    /// The rank-2 Gram solve failed and the rank-1 formula was used instead.
    pub fallback: bool,
    pub alternate: Option<AlternateBranch>,
}

fn a_branch(jet: &Jet2, lap: &[f64], branch: Branch, policy: &RankPolicy) -> Result<Vec<f64>> {
    let du = &jet.grad;
    match branch {
        Branch::Rank0 => Ok(vec![0.0; jet.n()]),
        Branch::Rank2 => gram_solve(du, &du.tr_matvec(lap), policy),
        Branch::Rank1 => {
            // Ā = (Δu)ᵀ M Du / |M|², M = Du Duᵀ.
            let m = du.matmul(&du.transpose());
            let m2 = m.frobenius().powi(2);
            if m2 == 0.0 {
                return Ok(vec![0.0; jet.n()]);
            }
            Ok(du.tr_matvec(&m.matvec(lap)).iter().map(|v| v / m2).collect())
        }
    }
}

fn a_defect(jet: &Jet2, lap: &[f64], a: &[f64]) -> f64 {
    let da = jet.grad.matvec(a);
    norm(&lap.iter().zip(&da).map(|(l, d)| l - d).collect::<Vec<_>>())
}

/// The coefficient field, branch chosen by the numerical rank of `Du`.
pub fn a_field(jet: &Jet2, policy: &RankPolicy) -> Result<AField> {
    if jet.n() != 2 {
        return Err(Error::Dimension(format!("a_field needs n = 2, got n = {}", jet.n())));
    }
    let svd = svd_small(&jet.grad)?;
    let thr = policy.threshold(svd.sigma_max());
    let rank = svd.rank(policy);
    let lap = laplacian(jet);

    let mut branch = Branch::from_rank(rank);
    let mut fallback = false;
    let value = match a_branch(jet, &lap, branch, policy) {
        Ok(v) => v,
        Err(Error::SingularGram { .. }) => {
            fallback = true;
            branch = Branch::Rank1;
            a_branch(jet, &lap, branch, policy)?
        }
        Err(e) => return Err(e),
    };
    let defect = a_defect(jet, &lap, &value);

    // Near the cut: the smallest kept or the largest dropped value is within 10x.
    let near = |s: f64| s > 0.0 && s >= thr / 10.0 && s <= thr * 10.0;
    let alt_rank = if rank > 0 && near(svd.sigma[rank - 1]) {
        Some(rank - 1)
    } else if rank < svd.sigma.len() && near(svd.sigma[rank]) {
        Some(rank + 1)
    } else {
        None
    };
    let alternate = alt_rank.and_then(|r| {
        let b = Branch::from_rank(r);
        (b != branch)
            .then(|| a_branch(jet, &lap, b, policy).ok())
            .flatten()
            .map(|v| AlternateBranch {
                branch: b,
                defect: a_defect(jet, &lap, &v),
                value: v,
            })
    });

    Ok(AField {
        value,
        branch,
        defect,
        nullspace_dim: jet.n() - rank.min(jet.n()),
        fallback,
        alternate,
    })
}

/// `Du = ξ ⊗ a` with `|a| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankOneFactor {
    pub xi: Vec<f64>,
    pub a: Vec<f64>,
    /// `ξ` carries the magnitude, `a` is a unit vector.
    pub sigma_absorbed: bool,
}

impl RankOneFactor {
    pub fn outer(&self) -> Mat {
        let mut m = Mat::zeros(self.xi.len(), self.a.len());
        for (i, x) in self.xi.iter().enumerate() {
            for (j, a) in self.a.iter().enumerate() {
                m[(i, j)] = x * a;
            }
        }
        m
    }
}

/// Factors a rank-one gradient; the first nonzero entry of `a` is positive.
pub fn rank_one_factor(jet: &Jet2, policy: &RankPolicy) -> Result<RankOneFactor> {
    let svd = svd_small(&jet.grad)?;
    let rank = svd.rank(policy);
    if rank != 1 {
        return Err(Error::RankMismatch {
            expected: 1,
            found: rank,
        });
    }
    let s = svd.sigma[0];
    let mut a = svd.v.column(0);
    let mut xi: Vec<f64> = svd.u.column(0).iter().map(|u| s * u).collect();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = a.iter().find(|v| v.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            xi.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(RankOneFactor {
        xi,
        a,
        sigma_absorbed: true,
    })
}

/// `|Du|²`.
pub fn grad_norm_sq(jet: &Jet2) -> f64 {
    let g = jet.grad.as_slice();
    dot(g, g)
}

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Value and first two derivatives of a curve at a parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub value: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

/// Smooth curve `R -> R^N`, the building block of separated maps
/// `u(x, y) = f(x) + g(y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// `sum_k coeffs[k] * t^k`.
    Polynomial { coeffs: Vec<Vec<f64>> },
    /// `offset + cos_part * cos(omega t) + sin_part * sin(omega t)`.
    Trig {
        offset: Vec<f64>,
        cos_part: Vec<f64>,
        sin_part: Vec<f64>,
        omega: f64,
    },
}

impl Curve {
    pub fn polynomial(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let dim = coeffs.first().map_or(0, Vec::len);
        if dim == 0 || coeffs.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidParam(
                "polynomial curve needs nonempty coefficient vectors of equal length".into(),
            ));
        }
        Ok(Curve::Polynomial { coeffs })
    }

    pub fn trig(offset: Vec<f64>, cos_part: Vec<f64>, sin_part: Vec<f64>, omega: f64) -> Result<Self> {
        let dim = offset.len();
        if dim == 0 || cos_part.len() != dim || sin_part.len() != dim || !omega.is_finite() {
            return Err(Error::InvalidParam("trig curve needs equal-length parts".into()));
        }
        Ok(Curve::Trig {
            offset,
            cos_part,
            sin_part,
            omega,
        })
    }

    /// Straight line `base + t * dir`.
    pub fn line(base: Vec<f64>, dir: Vec<f64>) -> Result<Self> {
        Self::polynomial(vec![base, dir])
    }

    pub fn dim(&self) -> usize {
        match self {
            Curve::Polynomial { coeffs } => coeffs[0].len(),
            Curve::Trig { offset, .. } => offset.len(),
        }
    }

    pub fn eval(&self, t: f64) -> CurvePoint {
        let dim = self.dim();
        let mut value = vec![0.0; dim];
        let mut d1 = vec![0.0; dim];
        let mut d2 = vec![0.0; dim];
        match self {
            Curve::Polynomial { coeffs } => {
                for (k, c) in coeffs.iter().enumerate() {
                    let kf = k as f64;
                    let p0 = t.powi(k as i32);
                    let p1 = if k >= 1 { kf * t.powi(k as i32 - 1) } else { 0.0 };
                    let p2 = if k >= 2 {
                        kf * (kf - 1.0) * t.powi(k as i32 - 2)
                    } else {
                        0.0
                    };
                    for a in 0..dim {
                        value[a] += c[a] * p0;
                        d1[a] += c[a] * p1;
                        d2[a] += c[a] * p2;
                    }
                }
            }
            Curve::Trig {
                offset,
                cos_part,
                sin_part,
                omega,
            } => {
                let (s, c) = (omega * t).sin_cos();
                let w2 = omega * omega;
                for a in 0..dim {
                    value[a] = offset[a] + cos_part[a] * c + sin_part[a] * s;
                    d1[a] = omega * (-cos_part[a] * s + sin_part[a] * c);
                    d2[a] = -w2 * (cos_part[a] * c + sin_part[a] * s);
                }
            }
        }
        CurvePoint { value, d1, d2 }
    }

    /// The curve `R ∘ self` for a linear map `R`.
    pub fn mapped(&self, r: &Mat) -> Curve {
        match self {
            Curve::Polynomial { coeffs } => Curve::Polynomial {
                coeffs: coeffs.iter().map(|c| r.matvec(c)).collect(),
            },
            Curve::Trig {
                offset,
                cos_part,
                sin_part,
                omega,
            } => Curve::Trig {
                offset: r.matvec(offset),
                cos_part: r.matvec(cos_part),
                sin_part: r.matvec(sin_part),
                omega: *omega,
            },
        }
    }
}

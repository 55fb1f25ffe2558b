#![allow(dead_code)]

use proptest::prelude::*;
use tanlap_core::linalg::Mat;
use tanlap_core::maps::{Jet2, MapSource, Params};

pub fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |d| Mat::new(rows, cols, d).unwrap())
}

/// `N x n` with `N <= 4`, `n <= 3`.
pub fn any_matrix() -> impl Strategy<Value = Mat> {
    (1usize..=4, 1usize..=3).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Jet with `n = 2`, `N` in `2..=4` and a symmetric Hessian.
pub fn any_jet() -> impl Strategy<Value = Jet2> {
    (2usize..=4).prop_flat_map(|big_n| {
        (
            prop::collection::vec(-1.0f64..1.0, 2),
            prop::collection::vec(-1.0f64..1.0, big_n),
            matrix(big_n, 2),
            prop::collection::vec(-1.0f64..1.0, big_n * 3),
        )
            .prop_map(move |(x, v, du, h)| symmetric_jet(x, v, du, &h))
    })
}

/// Builds a jet from the three independent entries `(xx, xy, yy)` per component.
pub fn symmetric_jet(x: Vec<f64>, v: Vec<f64>, du: Mat, h: &[f64]) -> Jet2 {
    let hess = h.chunks(3).flat_map(|c| [c[0], c[1], c[1], c[2]]).collect();
    Jet2::new(x, v, du, hess).unwrap()
}

pub fn gallery(spec: &str) -> MapSource {
    MapSource::gallery(spec, &mut Params::new()).unwrap()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn nrm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn to_na(m: &Mat) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

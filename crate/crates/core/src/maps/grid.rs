use std::collections::BTreeMap;
use std::path::Path;

use super::{BoxDomain, Jet2};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Map sampled on the lattice of a [`BoxDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    domain: BoxDomain,
    target_dim: usize,
    /// Flattened `len x N`, lexicographic lattice order.
    samples: Vec<f64>,
}

impl GridMap {
    /// `samples[k]` is the value at `domain.multi_index(k)`.
    pub fn new(domain: BoxDomain, samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.len() != domain.len() {
            return Err(Error::IncompleteLattice(format!(
                "expected {} samples, got {}",
                domain.len(),
                samples.len()
            )));
        }
        let target_dim = samples[0].len();
        if target_dim == 0 {
            return Err(Error::Dimension("grid values must be nonempty vectors".into()));
        }
        let mut flat = Vec::with_capacity(samples.len() * target_dim);
        for (k, s) in samples.iter().enumerate() {
            if s.len() != target_dim {
                return Err(Error::Dimension(format!(
                    "sample {k} has {} components, expected {target_dim}",
                    s.len()
                )));
            }
            if let Some(c) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: k,
                    col: c,
                    value: s[c],
                });
            }
            flat.extend_from_slice(s);
        }
        Ok(Self {
            domain,
            target_dim,
            samples: flat,
        })
    }

    /// Samples `f` at every lattice point of `domain`.
    pub fn sample<F>(domain: BoxDomain, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
    {
        let samples = domain
            .indices()
            .iter()
            .map(|idx| f(&domain.point(idx)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(domain, samples)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.domain.dim()).map(|a| self.domain.spacing(a)).collect()
    }

    pub fn value_at(&self, index: &[usize]) -> &[f64] {
        let l = self.domain.linear_index(index);
        &self.samples[l * self.target_dim..(l + 1) * self.target_dim]
    }

    fn shifted(&self, index: &[usize], moves: &[(usize, isize)]) -> &[f64] {
        let mut idx = index.to_vec();
        for &(axis, d) in moves {
            idx[axis] = (idx[axis] as isize + d) as usize;
        }
        self.value_at(&idx)
    }

    /// Central-difference jet at an interior lattice index.
    pub fn fd_jet(&self, index: &[usize]) -> Result<Jet2> {
        let n = self.domain.dim();
        if index.len() != n
            || index.iter().zip(self.domain.resolution()).any(|(&k, &r)| k >= r)
        {
            return Err(Error::Dimension(format!("lattice index {index:?} is not on the grid")));
        }
        if !self.domain.is_interior(index) {
            return Err(Error::OutOfStencil {
                index: index.to_vec(),
            });
        }
        let big_n = self.target_dim;
        let h = self.spacing();
        let centre = self.value_at(index);
        let mut grad = Mat::zeros(big_n, n);
        let mut hess = vec![0.0; big_n * n * n];
        for i in 0..n {
            let p = self.shifted(index, &[(i, 1)]);
            let m = self.shifted(index, &[(i, -1)]);
            for a in 0..big_n {
                grad[(a, i)] = (p[a] - m[a]) / (2.0 * h[i]);
                hess[(a * n + i) * n + i] = (p[a] - 2.0 * centre[a] + m[a]) / (h[i] * h[i]);
            }
            for j in i + 1..n {
                let pp = self.shifted(index, &[(i, 1), (j, 1)]);
                let pm = self.shifted(index, &[(i, 1), (j, -1)]);
                let mp = self.shifted(index, &[(i, -1), (j, 1)]);
                let mm = self.shifted(index, &[(i, -1), (j, -1)]);
                for a in 0..big_n {
                    // D_i of the D_j difference and D_j of the D_i difference.
                    let dij = ((pp[a] - pm[a]) - (mp[a] - mm[a])) / (4.0 * h[i] * h[j]);
                    let dji = ((pp[a] - mp[a]) - (pm[a] - mm[a])) / (4.0 * h[j] * h[i]);
                    let v = 0.5 * (dij + dji);
                    hess[(a * n + i) * n + j] = v;
                    hess[(a * n + j) * n + i] = v;
                }
            }
        }
        Jet2::new(self.domain.point(index), centre.to_vec(), grad, hess)
    }

    /// Writes the grid in the loader's CSV format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let n = self.domain.dim();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=self.target_dim).map(|a| format!("u{a}")))
            .collect();
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for idx in self.domain.indices() {
            let rec: Vec<String> = self
                .domain
                .point(&idx)
                .iter()
                .chain(self.value_at(&idx))
                .map(|v| format!("{v:e}"))
                .collect();
            w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a grid CSV with header `x1,...,xn,u1,...,uN`, rows in any order.
pub fn load_grid(path: &Path) -> Result<GridMap> {
    let file = std::fs::File::open(path)?;
    read_grid(file)
}

/// [`load_grid`] over any reader. Diagnostics number rows from 1 at the header.
pub fn read_grid<R: std::io::Read>(reader: R) -> Result<GridMap> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let n = names.iter().take_while(|h| h.starts_with('x')).count();
    let big_n = names.len() - n;
    let expected: Vec<String> = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=big_n).map(|a| format!("u{a}")))
        .collect();
    if n == 0 || big_n == 0 || names != expected {
        return Err(Error::Csv {
            row: 1,
            message: format!("header must be x1,...,xn,u1,...,uN, got {}", names.join(",")),
        });
    }

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != n + big_n {
            return Err(Error::Csv {
                row,
                message: format!("expected {} fields, got {}", n + big_n, rec.len()),
            });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Csv {
                    row,
                    message: format!("column `{}`: `{cell}` is not a finite number", names[c]),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((row, vals));
    }
    if rows.is_empty() {
        return Err(Error::IncompleteLattice("no data rows".into()));
    }

    // Per-axis coordinate sets, then a uniform-spacing check.
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut res = Vec::with_capacity(n);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n);
    for a in 0..n {
        let mut xs: Vec<f64> = rows.iter().map(|(_, v)| v[a]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() < 3 {
            return Err(Error::IrregularLattice(format!(
                "axis x{} has {} distinct coordinates, need at least 3",
                a + 1,
                xs.len()
            )));
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (k, &x) in xs.iter().enumerate() {
            if (x - (xs[0] + h * k as f64)).abs() > 1e-9 * h {
                return Err(Error::IrregularLattice(format!(
                    "axis x{}: coordinate {x} breaks uniform spacing {h}",
                    a + 1
                )));
            }
        }
        lower.push(xs[0]);
        upper.push(xs[xs.len() - 1]);
        res.push(xs.len());
        axes.push(xs);
    }
    let domain = BoxDomain::new(lower, upper, res)?;

    let mut slots: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for (row, v) in rows {
        let idx: Vec<usize> = (0..n)
            .map(|a| {
                axes[a]
                    .binary_search_by(|x| x.total_cmp(&v[a]))
                    .expect("coordinate came from this axis")
            })
            .collect();
        let lin = domain.linear_index(&idx);
        if let Some((first, _)) = slots.get(&lin) {
            return Err(Error::Csv {
                row,
                message: format!("duplicate lattice point {:?} (first at row {first})", &v[..n]),
            });
        }
        slots.insert(lin, (row, v[n..].to_vec()));
    }
    if slots.len() != domain.len() {
        let missing = (0..domain.len())
            .find(|l| !slots.contains_key(l))
            .map(|l| domain.point(&domain.multi_index(l)))
            .unwrap_or_default();
        return Err(Error::IncompleteLattice(format!(
            "{} of {} lattice points present; first missing point {missing:?}",
            slots.len(),
            domain.len()
        )));
    }
    GridMap::new(domain, slots.into_values().map(|(_, v)| v).collect())
}

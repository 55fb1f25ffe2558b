//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always reach the output.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tanlap_core::linalg::{norm, projections, Mat, RankPolicy};
use tanlap_core::maps::{BoxDomain, GridMap, Jet2, MapSource, Params, SeparatedPair};
use tanlap_core::operators::*;
use tanlap_core::quad::observed_orders;
use tanlap_core::rigidity::{flatness_report, subspace_angle, Verdict};
use tanlap_core::separated::*;
use tanlap_core::variational::*;
use tanlap_core::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn gallery(spec: &str) -> MapSource {
    MapSource::gallery(spec, &mut Params::new()).unwrap()
}

fn policy() -> RankPolicy {
    RankPolicy::default()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_jet(rng: &mut ChaCha8Rng) -> Jet2 {
    let n = rng.gen_range(1..=3);
    let big_n = rng.gen_range(1..=4);
    let grad = random_matrix(rng, big_n, n);
    let mut hess = vec![0.0; big_n * n * n];
    for a in 0..big_n {
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                hess[(a * n + i) * n + j] = v;
                hess[(a * n + j) * n + i] = v;
            }
        }
    }
    let point = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let value = (0..big_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Jet2::new(point, value, grad, hess).unwrap()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

fn c1_projection_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rows = rng.gen_range(1..=4);
        let cols = rng.gen_range(1..=3);
        let x = random_matrix(&mut rng, rows, cols);
        let pp = projections(&x, &policy()).map_err(|e| e.to_string())?;
        let id = Mat::identity(rows);
        let defects = [
            pp.par.matmul(&pp.par).sub(&pp.par).max_abs(),
            pp.perp.matmul(&pp.perp).sub(&pp.perp).max_abs(),
            pp.par.transpose().sub(&pp.par).max_abs(),
            pp.perp.transpose().sub(&pp.perp).max_abs(),
            pp.par.add(&pp.perp).sub(&id).max_abs(),
            (pp.par.trace() - pp.rank as f64).abs(),
        ];
        worst = defects.iter().fold(worst, |m, d| m.max(*d));
    }
    ensure(worst <= 1e-12, format!("worst invariant defect {worst:.3e} > 1e-12"))?;
    Ok(format!("1000 matrices, worst defect {worst:.3e}"))
}

fn c2_split_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut split, mut pair) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let jet = random_jet(&mut rng);
        let lap = laplacian(&jet);
        let t = tension_field(&jet, &policy()).map_err(|e| e.to_string())?;
        let r = tangential_residual(&jet, &policy()).map_err(|e| e.to_string())?;
        let sum: Vec<f64> = t.iter().zip(&r).map(|(a, b)| a + b).collect();
        split = split.max(diff(&sum, &lap) / norm(&lap).max(f64::MIN_POSITIVE));
        let dp = decomposition_pair(&jet, Exponent::Infinity, &policy()).map_err(|e| e.to_string())?;
        let inf = inf_laplace_residual(&jet, &policy()).map_err(|e| e.to_string())?;
        let sum: Vec<f64> = dp.first.iter().zip(&dp.second).map(|(a, b)| a + b).collect();
        pair = pair.max(diff(&sum, &inf) / norm(&inf).max(f64::MIN_POSITIVE));
    }
    ensure(split <= 1e-13, format!("split identity relative error {split:.3e} > 1e-13"))?;
    ensure(pair <= 1e-12, format!("decomposition relative error {pair:.3e} > 1e-12"))?;
    Ok(format!("1000 jets, split {split:.3e}, decomposition {pair:.3e}"))
}

/// Max normalized tangential residual over interior lattice points.
fn max_tangential(src: &MapSource) -> Result<f64, String> {
    let dom = src.domain();
    let mut worst = 0.0f64;
    for idx in dom.interior_indices() {
        let jet = src.eval_jet(&dom.point(&idx)).map_err(|e| e.to_string())?;
        let r = Residual::new(&jet, tangential_residual(&jet, &policy()).map_err(|e| e.to_string())?);
        worst = worst.max(r.normalized);
    }
    Ok(worst)
}

fn c3_solution_residuals() -> Outcome {
    // 43 lattice points per axis leave a 41 x 41 interior.
    let k = gallery("embed3:k_family")
        .with_domain(BoxDomain::cube(2, -0.3, 0.3, 43).unwrap())
        .unwrap();
    let cases = [
        ("embed3:k_family", k),
        ("example2", gallery("example2")),
        ("nu_of_f:harmonic", gallery("nu_of_f:harmonic")),
    ];
    let mut parts = Vec::new();
    for (name, src) in &cases {
        let r = max_tangential(src)?;
        ensure(r <= 1e-10, format!("{name}: max normalized residual {r:.3e} > 1e-10"))?;
        parts.push(format!("{name} {r:.1e}"));
    }
    let jet = gallery("paraboloid").eval_jet(&[0.0, 0.0]).unwrap();
    let r = norm(&tangential_residual(&jet, &policy()).unwrap());
    ensure((r - 4.0).abs() <= 1e-12, format!("paraboloid residual at origin {r} != 4"))?;
    parts.push(format!("paraboloid at origin {r}"));
    Ok(parts.join(", "))
}

fn fd_inf_residual(src: &MapSource, x: &[f64], h: f64) -> f64 {
    let dom = BoxDomain::rect((x[0] - 2.0 * h, x[0] + 2.0 * h), (x[1] - 2.0 * h, x[1] + 2.0 * h), 5).unwrap();
    let grid = GridMap::sample(dom, |p| src.value(p)).unwrap();
    let jet = grid.fd_jet(&[2, 2]).unwrap();
    norm(&inf_laplace_residual(&jet, &RankPolicy::finite_difference(h)).unwrap())
}

fn c4_infinity_harmonic() -> Outcome {
    let aronsson = gallery("aronsson");
    let mut worst_a = 0.0f64;
    for idx in aronsson.domain().interior_indices() {
        let x = aronsson.domain().point(&idx);
        if x[0].abs() < 0.1 || x[1].abs() < 0.1 {
            continue;
        }
        let jet = aronsson.eval_jet(&x).map_err(|e| e.to_string())?;
        let r = Residual::new(&jet, inf_laplace_residual(&jet, &policy()).unwrap());
        worst_a = worst_a.max(r.normalized);
    }
    let kf = gallery("k_family");
    let mut worst_k = 0.0f64;
    for idx in kf.domain().interior_indices() {
        let jet = kf.eval_jet(&kf.domain().point(&idx)).map_err(|e| e.to_string())?;
        let r = Residual::new(&jet, inf_laplace_residual(&jet, &policy()).unwrap());
        worst_k = worst_k.max(r.normalized);
    }
    ensure(worst_a <= 1e-10, format!("aronsson analytic residual {worst_a:.3e} > 1e-10"))?;
    ensure(worst_k <= 1e-10, format!("k_family analytic residual {worst_k:.3e} > 1e-10"))?;

    let hs = [1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0];
    let fd_orders = |src: &MapSource, pts: &[[f64; 2]]| {
        let res: Vec<f64> = hs
            .iter()
            .map(|&h| pts.iter().map(|p| fd_inf_residual(src, p, h)).fold(0.0, f64::max))
            .collect();
        let orders: Vec<f64> = observed_orders(&res).into_iter().map(|o| o.unwrap_or(f64::NAN)).collect();
        let ok = orders.iter().all(|q| (1.7..=2.3).contains(q));
        (ok, format!("FD residuals {} orders {orders:.2?}", sci(&res)))
    };
    let (ok_a, det_a) = fd_orders(&aronsson, &[[0.25, 0.5], [0.5, 0.5], [-0.75, 0.25], [0.5, -0.75]]);
    let k_pts = [[0.1, -0.1], [0.2, 0.125], [-0.15, -0.2], [0.0, 0.15]];
    let (ok_k, det_k) = fd_orders(&kf, &k_pts);
    // Not part of the verdict: a curved profile K(t) = t + t^2/2, whose
    // stencil error is not a pure rescaling of the jet.
    let curved = MapSource::gallery("k_family", &mut Params::parse(&["k_coeffs=0,1,0.5"]).unwrap()).unwrap();
    let (_, det_c) = fd_orders(&curved, &k_pts);
    let detail = format!(
        "analytic {worst_a:.1e} / {worst_k:.1e}; aronsson {det_a}; k_family {det_k}; curved K (reported only) {det_c}"
    );
    if ok_a && ok_k {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c5_a_field() -> Outcome {
    let specs = [
        "example2",
        "aronsson",
        "k_family",
        "embed3:k_family",
        "nu_of_f:harmonic",
        "nu_of_f:linear",
        "conformal",
        "separated_pair",
        "separated_pair:affine",
    ];
    let (mut defect, mut oracle_gap, mut angle) = (0.0f64, 0.0f64, 0.0f64);
    let (mut n2, mut n1) = (0usize, 0usize);
    for spec in specs {
        let src = gallery(spec);
        let dom = src.domain().with_resolution(21).unwrap();
        for idx in dom.interior_indices() {
            let jet = match src.eval_jet(&dom.point(&idx)) {
                Ok(j) => j,
                Err(Error::SingularPoint { .. }) => continue,
                Err(e) => return Err(format!("{spec}: {e}")),
            };
            let af = a_field(&jet, &policy()).map_err(|e| e.to_string())?;
            defect = defect.max(af.defect);
            match af.branch {
                Branch::Rank2 => {
                    n2 += 1;
                    let du = nalgebra::DMatrix::from_row_slice(jet.grad.rows(), 2, jet.grad.as_slice());
                    let lap = nalgebra::DVector::from_column_slice(&laplacian(&jet));
                    let lsq = du.svd(true, true).solve(&lap, 1e-14).map_err(|e| e.to_string())?;
                    let gap = diff(&af.value, lsq.as_slice()) / (1.0 + lsq.norm());
                    oracle_gap = oracle_gap.max(gap);
                }
                Branch::Rank1 => {
                    n1 += 1;
                    let dir = rank_one_factor(&jet, &policy()).map_err(|e| e.to_string())?.a;
                    let v = &af.value;
                    if norm(v) > 0.0 {
                        let s = (v[0] * dir[1] - v[1] * dir[0]).abs() / (norm(v) * norm(&dir));
                        angle = angle.max(s.min(1.0).asin());
                    }
                }
                Branch::Rank0 => {}
            }
        }
    }
    ensure(n2 > 0 && n1 > 0, format!("branches not both exercised: rank2 {n2}, rank1 {n1}"))?;
    ensure(defect <= 1e-9, format!("a_field defect {defect:.3e} > 1e-9"))?;
    ensure(oracle_gap <= 1e-9, format!("rank-2 oracle gap {oracle_gap:.3e} > 1e-9"))?;
    ensure(angle <= 1e-8, format!("rank-1 angle {angle:.3e} > 1e-8"))?;
    Ok(format!(
        "{n2} rank-2 / {n1} rank-1 points, defect {defect:.1e}, oracle gap {oracle_gap:.1e}, angle {angle:.1e}"
    ))
}

fn c6_example2_rigidity() -> Outcome {
    let src = gallery("example2");
    let rep = flatness_report(&src, src.domain(), &policy(), 1e-9).map_err(|e| e.to_string())?;
    let lines: Vec<_> = rep.judged().filter(|c| c.component.rank == Some(1)).collect();
    ensure(lines.len() == 2, format!("{} rank-1 components, expected 2", lines.len()))?;
    for l in &lines {
        let dev = l.fit.as_ref().unwrap().max_dev;
        ensure(dev <= 1e-9 * (1.0 + l.diameter), format!("line fit deviation {dev:.3e}"))?;
    }
    let a = subspace_angle(&lines[0].fit.as_ref().unwrap().basis, &lines[1].fit.as_ref().unwrap().basis);
    ensure((a - FRAC_PI_2).abs() <= 1e-9, format!("angle between lines {a}"))?;
    Ok(format!("2 rank-1 lines, angle - pi/2 = {:.1e}", a - FRAC_PI_2))
}

fn c7_k_family_rigidity() -> Outcome {
    let src = gallery("embed3:k_family");
    let rep = flatness_report(&src, src.domain(), &policy(), 1e-8).map_err(|e| e.to_string())?;
    let planes: Vec<_> = rep.judged().filter(|c| c.component.rank == Some(2)).collect();
    ensure(!planes.is_empty(), "no rank-2 components".into())?;
    ensure(
        planes.iter().all(|c| c.verdict == Verdict::Flat),
        "a rank-2 component is not flat".into(),
    )?;
    let mut worst = 0.0f64;
    for (i, a) in planes.iter().enumerate() {
        for b in &planes[i + 1..] {
            worst = worst.max(subspace_angle(&a.fit.as_ref().unwrap().basis, &b.fit.as_ref().unwrap().basis));
        }
    }
    ensure(worst <= 1e-8, format!("plane angle {worst:.3e} > 1e-8"))?;

    let map = SeparatedMap::from_source(&src).map_err(|e| e.to_string())?;
    let base = BasePoint::new(&map, -0.15, 0.15).map_err(|e| e.to_string())?;
    let span = span_check(&map, &base, &sample_points(&map, 50, 0), 32, 1e-10, &policy()).map_err(|e| e.to_string())?;
    ensure(span.pass, format!("span check failed, max distance {:.3e}", span.max_distance))?;

    let bad = SeparatedMap::from_pair(&SeparatedPair::preset("nonsolution").unwrap());
    let bbase = BasePoint::new(&bad, 0.5, 0.5).unwrap();
    let neg = span_check(&bad, &bbase, &sample_points(&bad, 50, 0), 32, 1e-10, &policy()).map_err(|e| e.to_string())?;
    ensure(
        !neg.pass && neg.max_distance > 1e-2,
        format!("non-solution span distance {:.3e}", neg.max_distance),
    )?;
    Ok(format!(
        "{} planes, max angle {worst:.1e}, span {:.1e}, non-solution {:.2e}",
        planes.len(),
        span.max_distance,
        neg.max_distance
    ))
}

const EPS: [f64; 6] = [0.2, -0.2, 0.1, -0.1, 0.05, -0.05];

fn c8_minimality() -> Outcome {
    let cases = [
        ("embed3:harmonic", BoxDomain::rect((0.75, 1.25), (-0.25, 0.25), 21).unwrap()),
        ("embed3:k_family", BoxDomain::rect((0.05, 0.25), (-0.25, -0.05), 21).unwrap()),
    ];
    let mut runs = 0;
    for (spec, bx) in &cases {
        let src = gallery(spec);
        let sub = Subdomain::new(&src, bx.clone()).map_err(|e| e.to_string())?;
        for p in [Exponent::Finite(2.0), Exponent::Finite(4.0), Exponent::Infinity] {
            let rep = minimality_check(&src, &sub, p, 20, &EPS, &policy(), 0).map_err(|e| e.to_string())?;
            ensure(rep.verdict == VariationalVerdict::Minimal, format!("{spec} p = {p}: {:?}", rep.verdict))?;
            for t in &rep.trials {
                ensure(
                    t.min_gain >= -1e-12 * (1.0 + rep.base_energy),
                    format!("{spec} p = {p} trial {}: gain {:.3e}", t.trial, t.min_gain),
                )?;
                runs += 1;
            }
        }
        // Energy² increase for φ·n equals ε² Σ w |Dφ|².
        let nrm = [0.0, std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2];
        let field = make_normal_field(&src, &sub, Bump::sine(vec![1, 2]), &nrm, &policy(), true)
            .map_err(|e| e.to_string())?;
        let base = energy(&src, None, 0.0, Exponent::Finite(2.0), &sub).unwrap();
        let dphi: f64 = field.grads.iter().zip(&sub.weights).map(|(g, w)| w * g.frobenius().powi(2)).sum();
        for eps in EPS {
            let e = energy(&src, Some(&field), eps, Exponent::Finite(2.0), &sub).unwrap();
            let want = eps * eps * dphi;
            let rel = ((e * e - base * base) - want).abs() / want;
            ensure(rel <= 1e-8, format!("{spec}: Pythagoras relative error {rel:.3e} at eps {eps}"))?;
        }
    }
    Ok(format!("{runs} trial runs over 2 maps x 3 exponents, all minimal"))
}

fn c9_separated_identities() -> Outcome {
    let map = SeparatedMap::from_pair(&SeparatedPair::preset("k_split").unwrap());
    let base = BasePoint::new(&map, 0.0, FRAC_PI_8).unwrap();
    let ladder = [32, 64, 128, 256];
    let at = |x: f64, y: f64| -> Result<Vec<IdentityResidual>, String> {
        ladder
            .iter()
            .map(|&m| identity_residual(&map, &base, x, y, m, &policy()).map_err(|e| e.to_string()))
            .collect()
    };
    let in_band = |v: &[f64]| {
        let o: Vec<f64> = observed_orders(v).into_iter().map(|q| q.unwrap_or(f64::NAN)).collect();
        (o.iter().all(|q| (1.7..=2.3).contains(q)), o)
    };

    let std_q = at(-0.1, 0.3)?;
    let r24: Vec<f64> = std_q.iter().map(|r| r.r24).collect();
    let (ok, o24) = in_band(&r24);
    ensure(ok, format!("r24 {} orders {o24:.2?}", sci(&r24)))?;
    ensure(r24[3] <= 1e-6, format!("r24 at m = 256 is {:.3e}", r24[3]))?;

    // At the standard query (x - x0)(y - y0) > 0, so r27 is outside its
    // stated domain; evaluate the combination from the factors there and
    // also through the API at the mirrored query.
    let r27_std: Vec<f64> = std_q
        .iter()
        .map(|r| {
            let f = &r.factors;
            let g = map.g.eval(f.y).d1;
            let fx0 = map.f.eval(base.x0).d1;
            let gy0 = map.g.eval(base.y0).d1;
            let dh = f.d / f.h;
            let v: Vec<f64> = (0..g.len())
                .map(|k| (f.c - dh * f.i) * g[k] - (f.e - dh) * fx0[k] - (1.0 - dh * f.j) * gy0[k])
                .collect();
            norm(&v)
        })
        .collect();
    let (ok, o27s) = in_band(&r27_std);
    ensure(ok, format!("r27 at the standard query {} orders {o27s:.2?}", sci(&r27_std)))?;
    ensure(std_q[0].r27.is_none(), "r27 reported outside its sign condition".into())?;

    let mirrored = at(0.1, 0.3)?;
    let r27: Vec<f64> = mirrored
        .iter()
        .map(|r| r.r27.ok_or("r27 missing at the mirrored query".to_string()))
        .collect::<Result<_, _>>()?;
    let (ok, o27) = in_band(&r27);
    ensure(ok, format!("r27 at (0.1, 0.3) {} orders {o27:.2?}", sci(&r27)))?;

    for r in std_q.iter().chain(&mirrored) {
        ensure(r.sign_violations.is_empty(), format!("sign violations {:?}", r.sign_violations))?;
    }

    let affine = SeparatedMap::from_pair(&SeparatedPair::preset("affine").unwrap());
    let abase = BasePoint::new(&affine, 0.0, 0.0).unwrap();
    let ar = identity_residual(&affine, &abase, 0.7, -0.7, 32, &policy()).map_err(|e| e.to_string())?;
    ensure(ar.r24 <= 1e-12, format!("affine r24 {:.3e}", ar.r24))?;
    ensure(ar.sign_violations.is_empty(), format!("affine sign violations {:?}", ar.sign_violations))?;

    Ok(format!(
        "r24 orders {o24:.2?} (m = 256: {:.1e}), r27 orders {o27s:.2?} standard / {o27:.2?} mirrored, affine r24 {:.1e}",
        r24[3], ar.r24
    ))
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let commands: [&[&str]; 3] = [
        &["residual", "--map", "gallery:embed3:k_family", "--op", "tangential", "--box", "-0.3,0.3x-0.3,0.3", "--n", "41"],
        &["variational", "--map", "gallery:embed3:harmonic", "--p", "inf", "--trials", "20"],
        &["variational", "--map", "gallery:embed3:k_family", "--p", "4", "--sub", "0.05,0.25x-0.25,-0.05"],
    ];
    for (k, args) in commands.iter().enumerate() {
        let mut reports = Vec::new();
        for threads in ["1", "4"] {
            let out = dir.path().join(format!("r{k}_{threads}.json"));
            let status = Command::new(env!("CARGO_BIN_EXE_tanlap"))
                .args(*args)
                .args(["--threads", threads, "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.code() == Some(0), format!("{args:?} exited {:?}", status.status.code()))?;
            reports.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure(reports[0] == reports[1], format!("{args:?}: reports differ between 1 and 4 threads"))?;
    }
    Ok(format!("{} commands byte-identical at 1 and 4 threads", commands.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("projection algebra", c1_projection_algebra, Duration::from_secs(1)),
        ("operator split identity", c2_split_identity, Duration::from_secs(1)),
        ("solution gallery residuals", c3_solution_residuals, Duration::from_secs(5)),
        ("infinity-harmonicity", c4_infinity_harmonic, Duration::from_secs(10)),
        ("representation of A", c5_a_field, Duration::from_secs(5)),
        ("rank-one rigidity", c6_example2_rigidity, Duration::from_secs(5)),
        ("separated rigidity", c7_k_family_rigidity, Duration::from_secs(10)),
        ("minimality", c8_minimality, Duration::from_secs(30)),
        ("separated identities", c9_separated_identities, Duration::from_secs(30)),
        ("determinism", c10_determinism, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; took longer than {limit:?}")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {} ({name}, {:.2}s): {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

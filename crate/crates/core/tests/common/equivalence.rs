//! Randomised equivalence checks against reference implementations. Each
//! returns a short summary on success and the first mismatch otherwise.

use rand::Rng;
use ufce_core::data::fit_scaler;
use ufce_core::explainer::{delta, select_best, CandidateCE, Method};
use ufce_core::metrics::prox_euc_scale;
use ufce_core::mi::{estimate_mi, ColumnKind};
use ufce_core::neighborhood::{build_tree, Embedding};
use ufce_core::plausibility::fit_lof;

use super::{delta_oracle, normal, rng, table, BruteLof};

pub type Check = Result<String, String>;

pub fn mixed_table(rng: &mut impl Rng, n: usize, d: usize, with_cat: bool) -> ufce_core::Dataset {
    let mut names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    if with_cat {
        names.push("c".into());
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 10.0).collect();
            if with_cat {
                r.push(f64::from(u8::from(rng.random::<bool>())));
            }
            r
        })
        .collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let cats: &[&str] = if with_cat { &["c"] } else { &[] };
    table(&refs, cats, &[], &rows, &labels)
}

pub fn lof(sets: usize, tol: f64) -> Check {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for case in 0..sets {
        let n = r.random_range(25..=200);
        let d = r.random_range(1..=4);
        let ds = mixed_table(&mut r, n, d, case % 2 == 0);
        let k = r.random_range(2..=20usize).min(n - 1);
        let emb = Embedding::new(&ds.schema, fit_scaler(&ds).unwrap());
        let lof = fit_lof(&ds, emb.clone(), k, 1.5).map_err(|e| e.to_string())?;
        let oracle = BruteLof::fit(&ds, emb, k);
        for q in 0..20 {
            let z: Vec<f64> = if q < 5 {
                ds.rows[r.random_range(0..n)].0.clone()
            } else {
                let mut z: Vec<f64> = (0..d).map(|_| r.random::<f64>() * 12.0 - 1.0).collect();
                if case % 2 == 0 {
                    z.push(f64::from(u8::from(r.random::<bool>())));
                }
                z
            };
            let (a, b) = (lof.score(&z), oracle.score(&z));
            if (a - b).abs() > tol {
                return Err(format!("set {case}, query {q}: {a} vs {b}"));
            }
            worst = worst.max((a - b).abs());
        }
    }
    Ok(format!("{sets} sets, max |diff| {worst:.2e}"))
}

pub fn radius(cases: usize) -> Check {
    let mut r = rng(12);
    for case in 0..cases {
        let n = r.random_range(1..=300);
        let d = r.random_range(1..=5);
        let ds = mixed_table(&mut r, n, d, case % 3 == 0);
        let scaler = fit_scaler(&ds).unwrap();
        let tree = build_tree(&ds, &scaler).map_err(|e| e.to_string())?;
        let emb = Embedding::new(&ds.schema, scaler);
        let q: Vec<f64> = if case % 4 == 0 {
            ds.rows[r.random_range(0..n)].0.clone()
        } else {
            let mut q: Vec<f64> = (0..d).map(|_| r.random::<f64>() * 10.0).collect();
            if case % 3 == 0 {
                q.push(1.0);
            }
            q
        };
        let radius = r.random_range(0.05..1.2);
        let hits = tree.fnn(&q, radius);
        let mut got: Vec<usize> = hits.iter().map(|h| h.index).collect();
        let mut want: Vec<usize> = (0..n).filter(|&i| emb.distance(&ds.rows[i], &q) <= radius).collect();
        got.sort_unstable();
        want.sort_unstable();
        if got != want {
            return Err(format!("case {case}: {} hits vs {}", got.len(), want.len()));
        }
        if !hits.windows(2).all(|w| w[0].distance <= w[1].distance) {
            return Err(format!("case {case}: hits not sorted by distance"));
        }
    }
    Ok(format!("{cases} cases identical"))
}

pub fn argmin(sets: usize) -> Check {
    let mut r = rng(13);
    for case in 0..sets {
        let ds = mixed_table(&mut r, 60, 3, true);
        let scale = prox_euc_scale(&ds.schema);
        let x = ds.rows[0].clone();
        let n = r.random_range(1..=12);
        let lambda = r.random_range(0.0..3.0);
        let mut cands = Vec::with_capacity(n);
        for i in 0..n {
            let mut z = x.clone();
            for j in 0..3 {
                if r.random::<bool>() {
                    z[j] += r.random_range(-3.0..3.0);
                }
            }
            if r.random::<bool>() {
                z[3] = 1.0 - z[3];
            }
            let d = delta(&z, &x, &ds.schema, lambda, scale);
            let oracle = delta_oracle(&z, &x, &ds, lambda);
            if (d - oracle).abs() >= 1e-12 {
                return Err(format!("set {case}: delta {d} vs {oracle}"));
            }
            cands.push(CandidateCE {
                z,
                method: Method::ALL[i % 3],
                changed: vec![],
                valid: r.random_range(0..4) > 0,
                plausible: true,
                delta: d,
            });
        }
        let want = cands
            .iter()
            .filter(|c| c.valid)
            .map(|c| delta_oracle(&c.z, &x, &ds, lambda))
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
        let got = select_best(&cands).map(|c| c.delta);
        let same = match (got, want) {
            (None, None) => true,
            (Some(g), Some(w)) => (g - w).abs() < 1e-12,
            _ => false,
        };
        if !same {
            return Err(format!("set {case}: {got:?} vs {want:?}"));
        }
    }
    Ok(format!("{sets} sets agree"))
}

pub fn gaussian_pair(rho: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let (u, v) = (normal(&mut r), normal(&mut r));
        a.push(u);
        b.push(rho * u + (1.0 - rho * rho).sqrt() * v);
    }
    (a, b)
}

pub fn ksg(n: usize, tol: f64) -> Check {
    let mut parts = Vec::new();
    for (rho, seed) in [(0.0, 1), (0.5, 2), (0.9, 3)] {
        let (a, b) = gaussian_pair(rho, n, seed);
        let est = estimate_mi(&a, ColumnKind::Continuous, &b, ColumnKind::Continuous, 3).map_err(|e| e.to_string())?;
        let exact = -0.5 * (1.0f64 - rho * rho).ln();
        if (est - exact).abs() > tol {
            return Err(format!("rho {rho}: {est:.4} vs {exact:.4}"));
        }
        parts.push(format!("rho {rho}: {est:.3}/{exact:.3}"));
    }
    Ok(parts.join(", "))
}

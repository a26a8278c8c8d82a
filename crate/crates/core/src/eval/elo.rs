use serde::{Deserialize, Serialize};

use super::PayoffMatrix;
use crate::error::{Error, Result};

/// Win-rates are clamped into `[ELO_CLAMP, 1 - ELO_CLAMP]` before fitting.
pub const ELO_CLAMP: f64 = 1e-3;
/// Stopping rule on the gradient norm, taken with respect to ratings in
/// natural-logit units (`r ln 10 / 400`).
pub const ELO_GRAD_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 200_000;
/// Largest single coordinate move, in rating points.
const MAX_STEP: f64 = 400.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    pub baseline: String,
    pub model_ids: Vec<String>,
    pub ratings: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub sweeps: usize,
}

impl Ratings {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.model_ids.iter().position(|m| m == id).map(|i| self.ratings[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Base-10 logistic on the usual 400-point scale.
pub fn elo_expected(diff: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(-diff / 400.0))
}

struct Edge {
    i: usize,
    j: usize,
    n: f64,
    p: f64,
}

fn edges(pm: &PayoffMatrix) -> Vec<Edge> {
    let k = pm.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            // both directions describe the same matches; use whichever is present
            let (n, p) = if pm.counts[i][j] > 0 {
                (pm.counts[i][j] as f64, pm.scores[i][j] / pm.counts[i][j] as f64)
            } else if pm.counts[j][i] > 0 {
                (pm.counts[j][i] as f64, 1.0 - pm.scores[j][i] / pm.counts[j][i] as f64)
            } else {
                continue;
            };
            out.push(Edge {
                i,
                j,
                n,
                p: p.clamp(ELO_CLAMP, 1.0 - ELO_CLAMP),
            });
        }
    }
    out
}

fn bce(p: f64, q: f64) -> f64 {
    -(p * q.ln() + (1.0 - p) * (1.0 - q).ln())
}

/// Match-weighted cross-entropy of the observed win-rates under `ratings`.
pub fn elo_loss(pm: &PayoffMatrix, ratings: &[f64]) -> f64 {
    edges(pm)
        .iter()
        .map(|e| e.n * bce(e.p, elo_expected(ratings[e.i] - ratings[e.j])))
        .sum()
}

fn components(k: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut comp = vec![usize::MAX; k];
    let mut out = Vec::new();
    for start in 0..k {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut frontier = vec![start];
        while let Some(v) = frontier.pop() {
            for e in edges {
                let w = if e.i == v {
                    e.j
                } else if e.j == v {
                    e.i
                } else {
                    continue;
                };
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    members.push(w);
                    frontier.push(w);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Maximum-likelihood ratings with the baseline pinned at zero, found by
/// damped coordinate Newton steps.
pub fn elo_fit(pm: &PayoffMatrix, baseline: &str) -> Result<Ratings> {
    let k = pm.len();
    let b = pm
        .index_of(baseline)
        .ok_or_else(|| Error::UnknownModel(format!("baseline {baseline}")))?;
    let es = edges(pm);
    let comps = components(k, &es);
    if comps.len() > 1 {
        return Err(Error::Disconnected(
            comps
                .iter()
                .map(|c| c.iter().map(|&i| pm.model_ids[i].clone()).collect())
                .collect(),
        ));
    }
    let c = 10f64.ln() / 400.0;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (idx, e) in es.iter().enumerate() {
        adj[e.i].push(idx);
        adj[e.j].push(idx);
    }
    let local_loss = |r: &[f64], v: usize, rv: f64| -> f64 {
        adj[v]
            .iter()
            .map(|&idx| {
                let e = &es[idx];
                let d = if e.i == v { rv - r[e.j] } else { r[e.i] - rv };
                e.n * bce(e.p, elo_expected(d))
            })
            .sum()
    };
    let grad_hess = |r: &[f64], v: usize| -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        for &idx in &adj[v] {
            let e = &es[idx];
            let q = elo_expected(r[e.i] - r[e.j]);
            let sign = if e.i == v { 1.0 } else { -1.0 };
            g += sign * e.n * (q - e.p) * c;
            h += e.n * q * (1.0 - q) * c * c;
        }
        (g, h)
    };
    let grad_norm = |r: &[f64]| -> f64 {
        (0..k)
            .filter(|&v| v != b)
            .map(|v| (grad_hess(r, v).0 / c).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut r = vec![0.0; k];
    let mut sweeps = 0;
    let mut gn = grad_norm(&r);
    while gn >= ELO_GRAD_TOL {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Domain(format!(
                "elo fit did not converge: gradient norm {gn:e} after {sweeps} sweeps"
            )));
        }
        for v in (0..k).filter(|&v| v != b) {
            let (g, h) = grad_hess(&r, v);
            if g == 0.0 || h <= 0.0 {
                continue;
            }
            let before = local_loss(&r, v, r[v]);
            let mut step = (-g / h).clamp(-MAX_STEP, MAX_STEP);
            // halve until the coordinate loss does not increase
            for _ in 0..60 {
                if local_loss(&r, v, r[v] + step) <= before {
                    break;
                }
                step *= 0.5;
            }
            r[v] += step;
        }
        sweeps += 1;
        gn = grad_norm(&r);
    }
    Ok(Ratings {
        baseline: baseline.to_string(),
        model_ids: pm.model_ids.clone(),
        loss: elo_loss(pm, &r),
        ratings: r,
        grad_norm: gn,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(ids: &[&str], p: &[Vec<f64>], n: u32) -> PayoffMatrix {
        PayoffMatrix::from_win_rates(ids.iter().map(|s| s.to_string()).collect(), p, n).unwrap()
    }

    #[test]
    fn even_match_is_equal() {
        let m = pm(&["a", "b"], &[vec![0.5, 0.5], vec![0.5, 0.5]], 100);
        let r = elo_fit(&m, "a").unwrap();
        assert!(r.ratings[1].abs() < 1e-6);
    }

    #[test]
    fn three_to_one_inverts_logistic() {
        let m = pm(&["elite", "x"], &[vec![0.5, 0.25], vec![0.75, 0.5]], 100);
        let r = elo_fit(&m, "elite").unwrap();
        assert_eq!(r.get("elite"), Some(0.0));
        let expected = 400.0 * 3f64.log10();
        assert!((r.get("x").unwrap() - expected).abs() < 1e-2, "{r:?}");
        assert!((expected - 190.85).abs() < 0.01);
    }

    #[test]
    fn disconnected_reports_components() {
        let mut m = pm(&["a", "b", "c"], &[vec![0.5; 3], vec![0.5; 3], vec![0.5; 3]], 10);
        for (i, j) in [(0, 2), (2, 0), (1, 2), (2, 1)] {
            m.counts[i][j] = 0;
            m.scores[i][j] = 0.0;
        }
        match elo_fit(&m, "a") {
            Err(Error::Disconnected(c)) => assert_eq!(c, vec![vec!["a".to_string(), "b".into()], vec!["c".into()]]),
            other => panic!("expected disconnected, got {other:?}"),
        }
    }

    #[test]
    fn extremes_are_clamped() {
        let m = pm(&["a", "b"], &[vec![0.5, 0.0], vec![1.0, 0.5]], 10);
        let r = elo_fit(&m, "a").unwrap();
        let expected = 400.0 * ((1.0 - ELO_CLAMP) / ELO_CLAMP).log10();
        assert!((r.ratings[1] - expected).abs() < 1e-2);
    }
}

//! Convergence diagnostics and posterior summaries.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

use crate::cpm::ChainOutput;
use crate::error::{Error, Result};
use crate::model::Transform;

pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];
const MIN_CHAIN_LEN: usize = 4;

/// Potential scale reduction factor with its 97.5% upper confidence limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub point: f64,
    pub upper: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn cov(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Gelman-Rubin diagnostic with the degrees-of-freedom correction and the
/// F-based upper limit. Chains must have equal length.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<Rhat> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::contract("R-hat needs at least two chains"));
    }
    let n = chains[0].len();
    if n < MIN_CHAIN_LEN || chains.iter().any(|c| c.len() != n) {
        return Err(Error::contract(format!(
            "R-hat needs chains of equal length of at least {MIN_CHAIN_LEN} draws"
        )));
    }
    if chains.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::contract("R-hat input contains non-finite draws"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let s2: Vec<f64> = chains.iter().map(|c| var(c)).collect();
    let xbar: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&s2);
    let b = nf * var(&xbar);
    if w == 0.0 {
        let r = if b == 0.0 { 1.0 } else { f64::INFINITY };
        return Ok(Rhat { point: r, upper: r });
    }
    let mu = mean(&xbar);
    let xbar2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let var_w = var(&s2) / mf;
    let var_b = 2.0 * b * b / (mf - 1.0);
    let cov_wb = nf / mf * (cov(&s2, &xbar2) - 2.0 * mu * cov(&s2, &xbar));
    let v = (nf - 1.0) / nf * w + (1.0 + 1.0 / mf) * b / nf;
    let var_v = ((nf - 1.0).powi(2) * var_w
        + (1.0 + 1.0 / mf).powi(2) * var_b
        + 2.0 * (nf - 1.0) * (1.0 + 1.0 / mf) * cov_wb)
        / (nf * nf);
    let df_adj = if var_v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };
    let r2_fixed = (nf - 1.0) / nf;
    let r2_random = (1.0 + 1.0 / mf) / nf * b / w;
    let q = f_quantile(0.975, mf - 1.0, 2.0 * w * w / var_w)?;
    Ok(Rhat {
        point: (df_adj * (r2_fixed + r2_random)).sqrt(),
        upper: (df_adj * (r2_fixed + q * r2_random)).sqrt(),
    })
}

/// Upper quantile of F(d1, d2), or of chi2(d1) / d1 when `d2` is infinite,
/// by bisection on the distribution function.
fn f_quantile(p: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return Err(Error::contract(format!("F quantile needs positive degrees of freedom, got {d1} and {d2}")));
    }
    let cdf = |x: f64| {
        if d2.is_finite() && d2 < 1e10 {
            beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
        } else {
            gamma_lr(d1 / 2.0, d1 * x / 2.0)
        }
    };
    let mut hi = 1.0;
    while cdf(hi) < p && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(xs: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    levels.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub parameter: String,
    pub rhat: f64,
    pub upper_ci: f64,
    /// The same diagnostic on the unconstrained sampling scale.
    pub rhat_unconstrained: f64,
    pub upper_ci_unconstrained: f64,
}

/// R-hat for every parameter, on both scales. Chains are cut to the
/// shortest length.
pub fn rhat_table(chains: &[ChainOutput], transforms: &[Transform]) -> Result<Vec<ParameterDiagnostics>> {
    let Some(first) = chains.first() else {
        return Err(Error::contract("no chains to diagnose"));
    };
    let n = chains.iter().map(|c| c.draws.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(first.param_names.len());
    for (j, name) in first.param_names.iter().enumerate() {
        let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)[..n].to_vec()).collect();
        let r = gelman_rubin(&cols)?;
        let t = transforms.get(j).copied().unwrap_or(Transform::Identity);
        let ucols: Vec<Vec<f64>> =
            cols.iter().map(|c| c.iter().map(|&x| t.to_unconstrained(x)).collect()).collect();
        let ru = gelman_rubin(&ucols)?;
        out.push(ParameterDiagnostics {
            parameter: name.clone(),
            rhat: r.point,
            upper_ci: r.upper,
            rhat_unconstrained: ru.point,
            upper_ci_unconstrained: ru.upper,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryQuantiles {
    pub label: String,
    pub step: usize,
    pub mean: f64,
    pub q: [f64; 5],
}

/// Pointwise posterior quantiles of the stored trajectories, one row per
/// column and step.
pub fn trajectory_quantiles(chains: &[ChainOutput], labels: &[String]) -> Result<Vec<TrajectoryQuantiles>> {
    let trajs: Vec<&Vec<Vec<f64>>> =
        chains.iter().flat_map(|c| c.draws.iter().filter_map(|d| d.trajectory.as_ref())).collect();
    let Some(first) = trajs.first() else {
        return Err(Error::contract("no stored trajectories; run with trajectories enabled"));
    };
    let steps = first.len();
    let cols = first.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(steps * cols);
    let mut buf = Vec::with_capacity(trajs.len());
    for k in 0..cols {
        for t in 0..steps {
            buf.clear();
            buf.extend(trajs.iter().filter_map(|tr| tr.get(t).and_then(|row| row.get(k))).copied());
            let q = quantiles(&buf, &QUANTILE_LEVELS);
            out.push(TrajectoryQuantiles {
                label: labels.get(k).cloned().unwrap_or_else(|| format!("col{k}")),
                step: t,
                mean: mean(&buf),
                q: [q[0], q[1], q[2], q[3], q[4]],
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior of `X(t) - X(t_ref)` for trajectory column `col`.
pub fn soc_change(chains: &[ChainOutput], col: usize, t_ref: usize, t: usize) -> Result<ChangeSummary> {
    let mut d = Vec::new();
    for tr in chains.iter().flat_map(|c| c.draws.iter().filter_map(|d| d.trajectory.as_ref())) {
        let at = |s: usize| tr.get(s).and_then(|row| row.get(col)).copied();
        match (at(t_ref), at(t)) {
            (Some(a), Some(b)) => d.push(b - a),
            _ => return Err(Error::contract(format!("trajectory has no column {col} at steps {t_ref} and {t}"))),
        }
    }
    if d.len() < 2 {
        return Err(Error::contract("SOC change needs at least two stored trajectories"));
    }
    let q = quantiles(&d, &[0.025, 0.975]);
    Ok(ChangeSummary { mean: mean(&d), sd: var(&d).sqrt(), lower: q[0], upper: q[1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantiles(&xs, &[0.0, 0.5, 1.0]), vec![1.0, 2.5, 4.0]);
        assert!((quantiles(&xs, &[0.25])[0] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn constant_chains_have_unit_rhat() {
        let r = gelman_rubin(&[vec![2.0; 10], vec![2.0; 10]]).unwrap();
        assert_eq!(r.point, 1.0);
    }

    #[test]
    fn separated_chains_are_flagged() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        assert!(gelman_rubin(&[a, b]).unwrap().point > 2.0);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        assert!(gelman_rubin(&[vec![1.0; 10]]).is_err());
        assert!(gelman_rubin(&[vec![1.0; 10], vec![1.0; 9]]).is_err());
    }

    #[test]
    fn f_quantiles_match_tables() {
        assert!((f_quantile(0.975, 1.0, 10.0).unwrap() - 6.936728).abs() < 1e-5);
        assert!((f_quantile(0.975, 2.0, 20.0).unwrap() - 4.461255).abs() < 1e-5);
        assert!((f_quantile(0.975, 2.0, f64::INFINITY).unwrap() - 3.688879).abs() < 1e-5);
        assert!((f_quantile(0.975, 3.0, 1e-3).unwrap()).is_finite());
    }

    proptest! {
        #[test]
        fn rhat_is_affine_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 20),
            b in proptest::collection::vec(-5.0f64..5.0, 20),
            scale in 0.01f64..100.0,
            shift in -100.0f64..100.0,
        ) {
            let r1 = gelman_rubin(&[a.clone(), b.clone()]).unwrap();
            let f = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
            let r2 = gelman_rubin(&[f(&a), f(&b)]).unwrap();
            prop_assert!((r1.point - r2.point).abs() <= 1e-8 * r1.point.max(1.0));
            prop_assert!(r1.point >= 0.0);
        }
    }
}

//! Non-uniform state prior: the quack mimics the prior on `[−m̄, m̄]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_eps, tent, PriorSpec};
use crate::numerics::{gl_pieces, golden_max, simpson_pieces};
use crate::rules::{
    grid_cells, march_backward, pair_weight_integral, PiecewiseRule, RuleKind,
    SegmentMeta,
};

/// Simpson panels for prior-weighted kernels.
pub const PRIOR_PANELS: usize = 4096;
/// Search bracket for `m̄`.
pub const MBAR_BRACKET: (f64, f64) = (1e-3, 1.0);

#[derive(Debug, Clone)]
pub struct PriorMimicSolution {
    pub epsilon_bar: f64,
    pub m_bar: f64,
    /// Quack payoff at `m̄`.
    pub pi: f64,
    /// `m̄ = 1`.
    pub corner: bool,
    /// `K⁻(1)` and `Π(1)`; the corner holds iff the first is at least the second.
    pub corner_k_minus: f64,
    pub corner_pi: f64,
    /// `(m, χ(m))` on `[0, m̄]`.
    pub chi: Vec<(f64, f64)>,
    pub rule: PiecewiseRule,
}

/// `Π(m̄)`: selection probability of a quack drawing from the prior
/// restricted to `[−m̄, m̄]`.
pub fn prior_mimic_value(prior: &PriorSpec, eps: f64, m_bar: f64) -> f64 {
    let g = |x: f64| prior.cdf(x);
    let d = g(m_bar) - g(-m_bar);
    let lo = -m_bar - eps;
    let hi = m_bar + eps;
    let kinks = [-m_bar + eps, m_bar - eps];
    let integral = simpson_pieces(lo, hi, &kinks, PRIOR_PANELS, |w| {
        let a = (w + eps).min(m_bar);
        let b = (w - eps).max(-m_bar);
        if a > b {
            (g(a) - g(b)).powi(2)
        } else {
            0.0
        }
    });
    integral / (4.0 * eps * d)
}

/// Probability that message `m` is consistent and the expert's state lies in
/// `[−m̄, m̄]`.
pub fn consistency_in_range(prior: &PriorSpec, eps: f64, m_bar: f64, m: f64) -> f64 {
    let lo = (m - 2.0 * eps).max(-m_bar);
    let hi = (m + 2.0 * eps).min(m_bar);
    gl_pieces(lo, hi, &[m, 0.0], 8, 8, |w| tent(m - w, eps) * prior.density(w))
}

/// `K⁻(m)`: probability that `m` is consistent and above a state in `[−m̄, m]`.
pub fn k_minus(prior: &PriorSpec, eps: f64, m_bar: f64, m: f64) -> f64 {
    let lo = (m - 2.0 * eps).max(-m_bar);
    gl_pieces(lo, m, &[0.0, -m], 8, 8, |w| tent(m - w, eps) * prior.density(w))
}

/// Maximizes `Π(m̄)` over `(0, 1]` and builds the matching rule.
pub fn solve_mbar(prior: &PriorSpec, eps: f64) -> Result<PriorMimicSolution> {
    solve_mbar_grid(prior, eps, 4096)
}

pub fn solve_mbar_grid(prior: &PriorSpec, eps: f64, grid_n: usize) -> Result<PriorMimicSolution> {
    check_eps(eps)?;
    let corner_k_minus = k_minus(prior, eps, 1.0, 1.0);
    let corner_pi = prior_mimic_value(prior, eps, 1.0);
    let corner = corner_k_minus >= corner_pi;
    let m_bar = if corner {
        1.0
    } else {
        let (lo, hi) = MBAR_BRACKET;
        let m = golden_max(lo, hi, 1e-9, |x| prior_mimic_value(prior, eps, x))?;
        if !(m > lo + 1e-6 && m < hi - 1e-6) {
            return Err(Error::construction(
                "no interior maximum although the corner condition fails",
                m,
                prior_mimic_value(prior, eps, m),
            ));
        }
        m
    };
    let pi = prior_mimic_value(prior, eps, m_bar);
    let rule = build_prior_max_rule(prior, eps, m_bar, grid_n)?;
    let n = 200;
    let chi = (0..=n)
        .map(|k| {
            let m = m_bar * k as f64 / n as f64;
            (m, pi / consistency_in_range(prior, eps, m_bar, m))
        })
        .collect();
    Ok(PriorMimicSolution {
        epsilon_bar: eps,
        m_bar,
        pi,
        corner,
        corner_k_minus,
        corner_pi,
        chi,
        rule,
    })
}

/// Max rule against a prior-mimicking quack: marched on `[0, m̄]` with the
/// prior as state weight, and `φ = 1` above `m̄`.
pub fn build_prior_max_rule(
    prior: &PriorSpec,
    eps: f64,
    m_bar: f64,
    grid_n: usize,
) -> Result<PiecewiseRule> {
    check_eps(eps)?;
    if !(m_bar > 0.0 && m_bar <= 1.0) {
        return Err(Error::domain(format!("m_bar must lie in (0,1], got {m_bar}")));
    }
    let n = grid_cells(eps / m_bar, grid_n);
    let pi = prior_mimic_value(prior, eps, m_bar);
    let g = |x: f64| prior.density(x);
    let phi = march_backward(
        eps,
        m_bar,
        n,
        pi,
        g,
        |m| pair_weight_integral(m, 0.0, m, eps, g),
        |_| None,
    )?;
    let h = m_bar / n as f64;
    let mut ms: Vec<f64> = (0..=n).map(|k| if k == n { m_bar } else { k as f64 * h }).collect();
    let mut vals = phi;
    let mut meta = vec![SegmentMeta { lo: 0.0, hi: m_bar, tag: "marched_prior".into() }];
    if m_bar < 1.0 {
        let extra = ((1.0 - m_bar) / h).ceil() as usize;
        for k in 1..=extra {
            ms.push(if k == extra { 1.0 } else { m_bar + k as f64 * h });
            vals.push(1.0);
        }
        meta.push(SegmentMeta { lo: m_bar, hi: 1.0, tag: "certain_selection".into() });
    }
    let mut rule = PiecewiseRule::from_grid(RuleKind::PriorMax, eps, ms, vals, meta)?;
    rule.m_bar = Some(m_bar);
    for (m, p) in rule.grid().collect::<Vec<_>>().windows(2).map(|w| (w[0].0, w[1].1 - w[0].1)) {
        if m >= eps && p < -1e-9 {
            return Err(Error::construction("prior max rule decreases above epsilon_bar", m, p));
        }
    }
    Ok(rule)
}

/// `−(K⁻)′(m̄)/K⁻(m̄)`, the slope of the prior max rule just below `m̄`.
pub fn prior_phi_slope_limit(prior: &PriorSpec, eps: f64, m_bar: f64) -> f64 {
    let d = 1e-5;
    let k = |m: f64| k_minus(prior, eps, m_bar, m);
    let dk = (k(m_bar) - k(m_bar - d)) / d;
    -dk / k(m_bar)
}

/// `φ(m)` on `[0, ε̄]` from the integrated small-message identity, given the
/// rule above `ε̄`. Cross-check for the march.
pub fn prior_phi_small_m(rule: &PiecewiseRule, prior: &PriorSpec, eps: f64, m: f64) -> f64 {
    let big_g = |x: f64| prior.cdf(x);
    let g = |x: f64| prior.density(x);
    let h_of = |w: f64| {
        gl_pieces(2.0 * eps - w, 2.0 * eps + w, &[rule.m_bar.unwrap_or(1.0)], 8, 8, |u| {
            rule.psi(u) * g(u)
        })
    };
    let num = gl_pieces(0.0, m, &[], 16, 8, |w| {
        (2.0 * big_g(w) - 1.0) * (2.0 * (2.0 * eps - w) * g(w) - h_of(w))
    });
    num / ((2.0 * eps - m) * (2.0 * big_g(m) - 1.0).powi(2))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorMimicReport {
    pub epsilon_bar: f64,
    pub m_bar: f64,
    pub pi: f64,
    pub corner: bool,
    pub corner_k_minus: f64,
    pub corner_pi: f64,
    pub chi: Vec<(f64, f64)>,
    pub rule: serde_json::Value,
}

impl PriorMimicSolution {
    pub fn report(&self) -> PriorMimicReport {
        PriorMimicReport {
            epsilon_bar: self.epsilon_bar,
            m_bar: self.m_bar,
            pi: self.pi,
            corner: self.corner,
            corner_k_minus: self.corner_k_minus,
            corner_pi: self.corner_pi,
            chi: self.chi.clone(),
            rule: self.rule.to_json(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prior_is_the_benchmark() {
        let e = 0.3;
        let v = prior_mimic_value(&PriorSpec::Uniform, e, 1.0);
        assert!((v - (e / 2.0 - e * e / 6.0)).abs() < 1e-10);
        assert!(k_minus(&PriorSpec::Uniform, e, 1.0, 1.0) >= v);
    }

    #[test]
    fn thin_prior_truncates() {
        let p = PriorSpec::quadratic_log(4.0).unwrap();
        let s = solve_mbar_grid(&p, 0.3, 1024).unwrap();
        assert!(!s.corner);
        assert!(s.m_bar < 1.0);
        assert!((s.pi - k_minus(&p, 0.3, s.m_bar, s.m_bar)).abs() < 1e-6);
    }
}

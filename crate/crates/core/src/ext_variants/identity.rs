//! Asymmetric beliefs about who is the expert.
//!
//! `p1` is the judge's prior that speaker 1 is the expert. The favored quack
//! (speaker 1) mixes uniformly on `[−m̄, m̄]`, the other on `[−1, 1]`.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_rounds, Estimate};
use crate::error::{Error, Result};
use crate::model::{consistency_probability, is_consistent, Convention};
use crate::numerics::gl_pieces;
use crate::rules::pair_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityRegime {
    Moderate,
    Extreme,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityEquilibrium {
    pub p1: f64,
    pub epsilon_bar: f64,
    pub regime: IdentityRegime,
    pub m_bar: f64,
    /// `½(ε̄ − (m̄−(1−2ε̄))³/(24 m̄ ε̄))`: half the favored quack's average
    /// consistency probability.
    pub pi1: f64,
    /// `m̄ · pi1`.
    pub pi2: f64,
    /// Favored quack's payoff when both quacks are indifferent on their supports.
    pub pi1_equilibrium: f64,
    /// Dis-favored quack's payoff in the same equilibrium.
    pub pi2_equilibrium: f64,
    /// Probability that the judge selects the quack, `(1−p1)·pi1_eq + p1·pi2_eq`.
    pub judge_loss: f64,
    /// `(1−p1)·pi1 + p1·pi2` from the closed forms.
    pub judge_loss_stated: f64,
    /// Closed form of the loss in terms of `m̄`; twice `judge_loss` in the
    /// moderate regime.
    pub judge_loss_closed_form: f64,
    pub judge_loss_closed_form_convention: Convention,
    /// Largest payoff the dis-favored quack can get from message 1.
    pub pi2_cap_at_extreme_message: f64,
    pub convention: Convention,
    pub rule_pair: Option<IdentityRulePair>,
}

/// `p1` at which the favored quack's support shrinks to `[−(1−2ε̄), 1−2ε̄]`.
pub fn identity_boundary(eps: f64) -> f64 {
    1.0 / (2.0 - 2.0 * eps)
}

fn check(p1: f64, eps: f64) -> Result<()> {
    if !(p1 > 0.5 && p1 < 1.0) {
        return Err(Error::domain(format!("p1 must lie in (1/2, 1), got {p1}")));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::domain(format!("epsilon_bar must lie in (0, 1/2], got {eps}")));
    }
    Ok(())
}

/// `½(ε̄ − (m̄−(1−2ε̄))³/(24 m̄ ε̄))`.
pub fn favored_half_consistency(m_bar: f64, eps: f64) -> f64 {
    let x = m_bar - (1.0 - 2.0 * eps);
    0.5 * (eps - x.powi(3) / (24.0 * m_bar * eps))
}

pub fn identity_equilibrium(p1: f64, eps: f64) -> Result<IdentityEquilibrium> {
    check(p1, eps)?;
    let p2 = 1.0 - p1;
    let regime =
        if p1 >= identity_boundary(eps) { IdentityRegime::Extreme } else { IdentityRegime::Moderate };
    let m_bar = (p2 / p1).max(1.0 - 2.0 * eps).min(1.0);
    let pi1 = favored_half_consistency(m_bar, eps);
    let pi2 = m_bar * pi1;
    let (v1, v2) = match regime {
        IdentityRegime::Moderate => {
            let k = consistency_probability(m_bar, eps);
            (k, m_bar * (2.0 * pi1 - k))
        }
        // the judge picks speaker 1 whenever he is consistent
        IdentityRegime::Extreme => (eps, 0.0),
    };
    let x = m_bar + 2.0 * eps - 1.0;
    let closed = (24.0 * eps * eps * (m_bar + 2.0 * eps) - x.powi(3) - 48.0 * eps.powi(3))
        / (12.0 * (m_bar + 1.0) * eps);
    Ok(IdentityEquilibrium {
        p1,
        epsilon_bar: eps,
        regime,
        m_bar,
        pi1,
        pi2,
        pi1_equilibrium: v1,
        pi2_equilibrium: v2,
        judge_loss: p2 * v1 + p1 * v2,
        judge_loss_stated: p2 * pi1 + p1 * pi2,
        judge_loss_closed_form: closed,
        judge_loss_closed_form_convention: Convention::Doubled,
        pi2_cap_at_extreme_message: x * x / (8.0 * eps),
        convention: Convention::PerIdentity,
        rule_pair: None,
    })
}

/// As [`identity_equilibrium`], with the judge's rule pair attached in the
/// moderate regime.
pub fn identity_equilibrium_with_rule(p1: f64, eps: f64, grid_n: usize) -> Result<IdentityEquilibrium> {
    let mut eq = identity_equilibrium(p1, eps)?;
    if eq.regime == IdentityRegime::Moderate {
        eq.rule_pair = Some(identity_rule_pair(p1, eps, grid_n)?);
    }
    Ok(eq)
}

/// Judge rule for two consistent messages with `|m1| ≤ m̄`: speaker 1 is
/// picked with probability `σ(α(|m1|) − β(|m2|))`. Above `m̄` speaker 1 is
/// always picked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityRulePair {
    pub epsilon_bar: f64,
    pub m_bar: f64,
    /// Target payoffs of the favored and dis-favored quack.
    pub v1: f64,
    pub v2: f64,
    /// Cell centres on `[0, m̄]` and the `α` values there.
    pub a_nodes: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Cell centres on `[0, 1]` and the `β` values there.
    pub b_nodes: Vec<f64>,
    pub beta: Vec<f64>,
    pub iterations: usize,
    /// Largest row or column residual of the discrete system.
    pub residual: f64,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let k = xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + t * (ys[k + 1] - ys[k])
}

/// Newton steps on one logistic offset so that `Σ w_k σ(θ − c_k) = target`.
fn newton_offset(theta: &mut f64, cs: &[f64], ws: &[f64], target: f64) -> f64 {
    let mut g = 0.0;
    for _ in 0..3 {
        let (mut val, mut der) = (0.0, 0.0);
        for (&c, &w) in cs.iter().zip(ws) {
            let r = logistic(*theta - c);
            val += w * r;
            der += w * r * (1.0 - r);
        }
        g = val - target;
        *theta -= (g / der.max(1e-12)).clamp(-5.0, 5.0);
    }
    g.abs()
}

/// Fits the logistic rule pair that makes both quacks indifferent on their
/// supports.
pub fn identity_rule_pair(p1: f64, eps: f64, grid_n: usize) -> Result<IdentityRulePair> {
    let eq = identity_equilibrium(p1, eps)?;
    if eq.regime != IdentityRegime::Moderate {
        return Err(Error::domain("the rule pair exists only under moderate asymmetry"));
    }
    if grid_n < 32 {
        return Err(Error::domain("identity grid needs at least 32 cells"));
    }
    let m_bar = eq.m_bar;
    let (v1, v2) = (eq.pi1_equilibrium, eq.pi2_equilibrium);
    let nb = grid_n;
    let na = ((grid_n as f64) * m_bar).ceil() as usize;
    let (da, db) = (m_bar / na as f64, 1.0 / nb as f64);
    let a_nodes: Vec<f64> = (0..na).map(|i| (i as f64 + 0.5) * da).collect();
    let b_nodes: Vec<f64> = (0..nb).map(|j| (j as f64 + 0.5) * db).collect();
    // row-major kernel and its transpose, pre-scaled by the state density
    let rows: Vec<Vec<f64>> = a_nodes
        .iter()
        .map(|&a| b_nodes.iter().map(|&b| 0.5 * db * pair_weight(a, b, eps)).collect())
        .collect();
    let cols: Vec<Vec<f64>> =
        (0..nb).map(|j| (0..na).map(|i| rows[i][j] * da / db).collect()).collect();
    let mut alpha = vec![0.0; na];
    let mut beta = vec![0.0; nb];
    let max_iter = 20_000;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let r1 = alpha
            .par_iter_mut()
            .zip(&rows)
            .map(|(al, w)| newton_offset(al, &beta, w, v1))
            .reduce(|| 0.0, f64::max);
        let r2 = beta
            .par_iter_mut()
            .zip(&cols)
            .map(|(be, w)| newton_offset(be, &alpha, w, v2))
            .reduce(|| 0.0, f64::max);
        residual = r1.max(r2);
        if residual < 1e-11 {
            break;
        }
    }
    if residual > 1e-7 {
        return Err(Error::NonConvergence { iterations, residual });
    }
    Ok(IdentityRulePair {
        epsilon_bar: eps,
        m_bar,
        v1,
        v2,
        a_nodes,
        alpha,
        b_nodes,
        beta,
        iterations,
        residual,
    })
}

impl IdentityRulePair {
    /// Probability that speaker 1 is picked when both messages are consistent.
    pub fn speaker1_prob(&self, m1: f64, m2: f64) -> f64 {
        let (a, b) = (m1.abs(), m2.abs());
        if a > self.m_bar {
            return 1.0;
        }
        let al = interp(&self.a_nodes, &self.alpha, a);
        let be = interp(&self.b_nodes, &self.beta, b);
        logistic(al - be)
    }

    /// Favored quack's selection probability at message `a`, by quadrature.
    pub fn quack1_payoff(&self, a: f64) -> f64 {
        let eps = self.epsilon_bar;
        let a = a.abs();
        let kinks = [a, a + 2.0 * eps, 2.0 * eps - a, a - 2.0 * eps];
        0.5 * gl_pieces(0.0, 1.0, &kinks, 16, 8, |b| pair_weight(a, b, eps) * self.speaker1_prob(a, b))
    }

    /// Dis-favored quack's selection probability at message `b`.
    pub fn quack2_payoff(&self, b: f64) -> f64 {
        let eps = self.epsilon_bar;
        let b = b.abs();
        let kinks = [b, b + 2.0 * eps, 2.0 * eps - b, b - 2.0 * eps];
        0.5 * gl_pieces(0.0, self.m_bar, &kinks, 16, 8, |a| {
            pair_weight(a, b, eps) * (1.0 - self.speaker1_prob(a, b))
        })
    }

    /// Payoff spreads of the two quacks over `n`-point grids of their supports.
    pub fn indifference_spreads(&self, n: usize) -> (f64, f64) {
        let spread = |vals: Vec<f64>| {
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let grid = |top: f64| (0..n).map(move |k| top * k as f64 / (n - 1) as f64);
        let s1 = spread(grid(self.m_bar).map(|a| self.quack1_payoff(a)).collect());
        let s2 = spread(grid(1.0).map(|b| self.quack2_payoff(b)).collect());
        (s1, s2)
    }
}

/// How the simulated judge breaks a tie between two consistent messages.
#[derive(Debug, Clone, Copy)]
pub enum IdentityJudge<'a> {
    /// The fitted rule pair.
    Pair(&'a IdentityRulePair),
    /// Speaker 1 if `|m1| > m̄`, else a fair coin.
    Coin,
    /// Speaker 1 whenever consistent.
    FavorFirst,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityMc {
    pub quack1: Estimate,
    pub quack2: Estimate,
    pub judge_loss: Estimate,
}

/// Simulated quack payoffs under the equilibrium messaging strategies.
pub fn identity_mc(
    p1: f64,
    eps: f64,
    judge: IdentityJudge<'_>,
    rounds: u64,
    seed: u64,
) -> Result<IdentityMc> {
    let eq = identity_equilibrium(p1, eps)?;
    let m_bar = eq.m_bar;
    let sums = run_rounds(rounds, seed, 5, |st, row| {
        let first_is_expert = st.identity.random::<f64>() < p1;
        let omega = 2.0 * st.state.random::<f64>() - 1.0;
        let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
        let (m1, m2) = if first_is_expert {
            (omega, 2.0 * st.quack.random::<f64>() - 1.0)
        } else {
            (m_bar * (2.0 * st.quack.random::<f64>() - 1.0), omega)
        };
        let u = st.tie.random::<f64>();
        let (c1, c2) = (is_consistent(m1, s, eps), is_consistent(m2, s, eps));
        let first = match (c1, c2) {
            (true, false) => true,
            (false, _) => false,
            (true, true) => match judge {
                IdentityJudge::FavorFirst => true,
                _ if m1.abs() > m_bar => true,
                IdentityJudge::Coin => u < 0.5,
                IdentityJudge::Pair(r) => u < r.speaker1_prob(m1, m2),
            },
        };
        let mistake = first != first_is_expert;
        if first_is_expert {
            row[2] += 1.0;
            row[3] += mistake as u8 as f64;
        } else {
            row[0] += 1.0;
            row[1] += mistake as u8 as f64;
        }
        row[4] += mistake as u8 as f64;
    });
    Ok(IdentityMc { quack1: sums.ratio(1, 0), quack2: sums.ratio(3, 2), judge_loss: sums.mean(4) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moderate_example() {
        let e = identity_equilibrium(0.55, 0.25).unwrap();
        assert_eq!(e.regime, IdentityRegime::Moderate);
        assert!((e.m_bar - 9.0 / 11.0).abs() < 1e-12);
        assert!((e.pi1 - 0.121720).abs() < 1e-6);
        assert!((e.pi2 - 0.099589).abs() < 1e-6);
        assert!((e.pi1_equilibrium - 0.199380).abs() < 1e-6);
        assert!((e.pi2_equilibrium - 0.036047).abs() < 1e-6);
        assert!((e.judge_loss - e.judge_loss_stated).abs() < 1e-12);
        assert!((e.judge_loss_closed_form - 2.0 * e.judge_loss).abs() < 1e-12);
        assert!(e.pi2 > e.pi2_cap_at_extreme_message);
    }

    #[test]
    fn extreme_example() {
        let e = identity_equilibrium(0.8, 0.25).unwrap();
        assert_eq!(e.regime, IdentityRegime::Extreme);
        assert_eq!(e.m_bar, 0.5);
        assert!((e.judge_loss - 0.2 * 0.25).abs() < 1e-15);
        assert!(identity_equilibrium(0.5, 0.25).is_err());
        assert!(identity_rule_pair(0.8, 0.25, 64).is_err());
    }
}

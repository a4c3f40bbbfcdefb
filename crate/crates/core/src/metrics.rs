//! What the judge learns in the truth-telling equilibrium of the benchmark.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::engine::{run_rounds, Estimate};
use crate::error::{Error, Result};
use crate::model::{check_eps_closed, is_consistent};

/// The judge's belief about the state after seeing both messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Singleton support.
    pub learned: bool,
}

/// Posterior over the state given the signal and two messages, assuming
/// the expert is truthful and the quack mimics the uniform prior.
pub fn posterior(s: f64, m1: f64, m2: f64, eps: f64) -> Result<PosteriorSummary> {
    let c1 = is_consistent(m1, s, eps);
    let c2 = is_consistent(m2, s, eps);
    let support = match (c1, c2) {
        (true, true) if m1 == m2 => vec![m1],
        (true, true) => vec![m1, m2],
        (true, false) => vec![m1],
        (false, true) => vec![m2],
        (false, false) => {
            return Err(Error::domain("neither message is consistent with the signal"));
        }
    };
    let k = support.len();
    Ok(PosteriorSummary { learned: k == 1, weights: vec![1.0 / k as f64; k], support })
}

/// Probability that the judge learns the state: one minus the probability
/// that the quack's message is consistent.
pub fn learn_probability(eps: f64) -> Result<f64> {
    check_eps_closed(eps)?;
    Ok(1.0 - eps + eps * eps / 3.0)
}

/// The learning probability next to the two other constants in circulation
/// for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub epsilon_bar: f64,
    /// `1 − ε̄ + ε̄²/3`, certified by simulation.
    pub value: f64,
    /// `1 − ε̄²/3`.
    pub stated: f64,
    /// `1 − ε̄/3`.
    pub proof_integral: f64,
}

pub fn learn_report(eps: f64) -> Result<LearnReport> {
    Ok(LearnReport {
        epsilon_bar: eps,
        value: learn_probability(eps)?,
        stated: 1.0 - eps * eps / 3.0,
        proof_integral: 1.0 - eps / 3.0,
    })
}

/// Learning probability at a given state.
pub fn learn_probability_conditional(omega_hat: f64, eps: f64) -> f64 {
    let over = (omega_hat.abs() - (1.0 - 2.0 * eps)).max(0.0);
    1.0 - eps + over * over / (8.0 * eps)
}

/// The conditional formula with `4ε̄` in the tail denominator.
pub fn learn_probability_conditional_stated(omega_hat: f64, eps: f64) -> f64 {
    let over = (omega_hat.abs() - (1.0 - 2.0 * eps)).max(0.0);
    1.0 - eps + over * over / (4.0 * eps)
}

/// Expected reduction in the posterior variance of the state from hearing
/// both speakers.
pub fn variance_reduction(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::domain(format!("epsilon_bar must lie in [0,1], got {eps}")));
    }
    Ok(eps.powi(2) / 3.0 - eps.powi(3) / 3.0 + eps.powi(4) / 10.0)
}

/// `Var(ω | s)` under the uniform prior.
pub fn signal_only_variance(s: f64, eps: f64) -> f64 {
    let len = (s + eps).min(1.0) - (s - eps).max(-1.0);
    len * len / 12.0
}

/// Posterior variance of a two-point summary.
pub fn posterior_variance(p: &PosteriorSummary) -> f64 {
    if p.support.len() == 2 {
        (p.support[0] - p.support[1]).powi(2) / 4.0
    } else {
        0.0
    }
}

/// Simulated frequency of a singleton posterior.
pub fn learn_probability_mc(eps: f64, rounds: u64, seed: u64) -> Result<Estimate> {
    check_eps_closed(eps)?;
    let sums = run_rounds(rounds, seed, 1, |st, row| {
        let omega = 2.0 * st.state.random::<f64>() - 1.0;
        let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
        let mq = 2.0 * st.quack.random::<f64>() - 1.0;
        if posterior(s, omega, mq, eps).map(|p| p.learned).unwrap_or(false) {
            row[0] += 1.0;
        }
    });
    Ok(sums.mean(0))
}

/// Simulated learning frequency with the state held at `omega`.
pub fn learn_conditional_mc(omega: f64, eps: f64, rounds: u64, seed: u64) -> Result<Estimate> {
    check_eps_closed(eps)?;
    let sums = run_rounds(rounds, seed, 1, |st, row| {
        let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
        let mq = 2.0 * st.quack.random::<f64>() - 1.0;
        if !is_consistent(mq, s, eps) || mq == omega {
            row[0] += 1.0;
        }
    });
    Ok(sums.mean(0))
}

/// Simulated `Var(ω|s) − Var(ω|s, m_Q, m_E)`.
pub fn variance_reduction_mc(eps: f64, rounds: u64, seed: u64) -> Result<Estimate> {
    check_eps_closed(eps)?;
    let sums = run_rounds(rounds, seed, 1, |st, row| {
        let omega = 2.0 * st.state.random::<f64>() - 1.0;
        let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
        let mq = 2.0 * st.quack.random::<f64>() - 1.0;
        let post = posterior(s, omega, mq, eps).expect("the truthful message is consistent");
        row[0] += signal_only_variance(s, eps) - posterior_variance(&post);
    });
    Ok(sums.mean(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_examples() {
        let p = posterior(0.0, 0.1, 0.9, 0.3).unwrap();
        assert_eq!(p.support, vec![0.1]);
        assert!(p.learned);
        let p = posterior(0.0, -0.2, 0.2, 0.3).unwrap();
        assert_eq!(p.weights, vec![0.5, 0.5]);
        assert!(!p.learned);
        assert!(posterior(0.0, 0.4, 0.4, 0.5).unwrap().learned);
        assert!(posterior(0.0, -0.9, 0.9, 0.3).is_err());
    }

    #[test]
    fn learn_examples() {
        assert!((learn_probability(0.5).unwrap() - 0.583333333333).abs() < 1e-10);
        assert!((learn_probability(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((learn_probability(1e-12).unwrap() - 1.0).abs() < 1e-11);
        assert_eq!(learn_probability_conditional(0.0, 0.25), 0.75);
        assert!((learn_probability_conditional(1.0, 0.25) - 0.875).abs() < 1e-15);
        let r = learn_report(0.5).unwrap();
        assert!((r.stated - (1.0 - 0.25 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn variance_examples() {
        assert!((variance_reduction(0.5).unwrap() - 0.04791666666).abs() < 1e-10);
        assert_eq!(variance_reduction(0.0).unwrap(), 0.0);
        assert!((variance_reduction(1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(variance_reduction(1.5).is_err());
    }
}

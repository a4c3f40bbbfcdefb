//! Sequential talk: the second speaker hears the first before reporting.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::engine::{run_rounds, Estimate};
use crate::error::{Error, Result};
use crate::model::{is_consistent, Convention};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialStrategies {
    /// A first-speaking quack draws uniformly from `[−b, b]`, `b = 1 − 2ε̄`.
    pub first_quack_bound: f64,
    /// A second-speaking quack draws uniformly from `m1 ± w`, clipped to `[−1, 1]`.
    pub second_quack_half_window: f64,
    /// The judge picks the first speaker iff his message is consistent.
    pub judge_first_iff_consistent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialReport {
    pub epsilon_bar: f64,
    pub strategies: SequentialStrategies,
    /// `ε̄`, doubled convention.
    pub quack_payoff_seq: f64,
    /// `ε̄ − ε̄²/3`, doubled convention.
    pub quack_payoff_sim: f64,
    pub convention: Convention,
    /// `ε̄/2` and `ε̄/2 − ε̄²/6`.
    pub per_identity_seq: f64,
    pub per_identity_sim: f64,
    /// The judge does strictly better with simultaneous reports.
    pub judge_prefers_simultaneous: bool,
    /// Prior-weighted likelihoods of the two explanations of a pair of
    /// consistent messages: first speaker honest versus second speaker honest.
    pub first_honest_weight: f64,
    pub second_honest_weight: f64,
}

pub fn sequential_equilibrium(eps: f64) -> Result<SequentialReport> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::domain(format!("sequential talk needs epsilon_bar in (0, 1/4), got {eps}")));
    }
    let seq = eps;
    let sim = eps - eps * eps / 3.0;
    Ok(SequentialReport {
        epsilon_bar: eps,
        strategies: SequentialStrategies {
            first_quack_bound: 1.0 - 2.0 * eps,
            second_quack_half_window: 2.0 * eps,
            judge_first_iff_consistent: true,
        },
        quack_payoff_seq: seq,
        quack_payoff_sim: sim,
        convention: Convention::Doubled,
        per_identity_seq: seq / 2.0,
        per_identity_sim: sim / 2.0,
        judge_prefers_simultaneous: sim < seq,
        first_honest_weight: 0.5 / (2.0 * eps) / (4.0 * eps),
        second_honest_weight: 0.5 / (2.0 * eps) / (2.0 * (1.0 - 2.0 * eps)),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SequentialMc {
    /// Probability that the quack is selected.
    pub quack: Estimate,
    /// Selection probability of a quack who speaks second.
    pub second_quack: Estimate,
}

/// Simulated payoffs under the sequential strategies.
pub fn sequential_mc(eps: f64, rounds: u64, seed: u64) -> Result<SequentialMc> {
    let rep = sequential_equilibrium(eps)?;
    let b = rep.strategies.first_quack_bound;
    let sums = run_rounds(rounds, seed, 3, |st, row| {
        let quack_first = st.identity.random::<f64>() < 0.5;
        let omega = 2.0 * st.state.random::<f64>() - 1.0;
        let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
        let u = st.quack.random::<f64>();
        let m1 = if quack_first { b * (2.0 * u - 1.0) } else { omega };
        // the second message never matters: the judge only checks the first
        let picks_first = is_consistent(m1, s, eps);
        let quack_wins = picks_first == quack_first;
        row[0] += quack_wins as u8 as f64;
        if !quack_first {
            row[1] += 1.0;
            row[2] += quack_wins as u8 as f64;
        }
    });
    Ok(SequentialMc { quack: sums.mean(0), second_quack: sums.ratio(2, 1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        let r = sequential_equilibrium(0.2).unwrap();
        assert_eq!(r.quack_payoff_seq, 0.2);
        assert!((r.quack_payoff_sim - 0.186666666666).abs() < 1e-10);
        assert!(r.judge_prefers_simultaneous);
        assert!(r.first_honest_weight > r.second_honest_weight);
        assert!(sequential_equilibrium(0.25).is_err());
    }
}

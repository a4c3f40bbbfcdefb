//! Independent oracles: each value is recomputed here by brute-force
//! quadrature or bisection written from scratch, then compared with the
//! library.

use quack_core::engine::{quack_message_payoff, Method};
use quack_core::ext_variants::{identity_equilibrium, one_speaker_equilibrium, sequential_equilibrium};
use quack_core::metrics::{learn_probability, learn_probability_conditional, variance_reduction};
use quack_core::rules::{build_max_rule, build_min_rule, quack_value, PiecewiseRule};

/// Composite midpoint rule.
fn midpoint(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
}

/// P(|m − ω − e| ≤ ε̄) for `e ~ U[−ε̄, ε̄]`, as a function of `x = m − ω`.
fn both_consistent(x: f64, eps: f64) -> f64 {
    (2.0 * eps - x.abs()).max(0.0) / (2.0 * eps)
}

/// Probability that message `m` is consistent, state uniform on [−1, 1].
fn consistent_prob(m: f64, eps: f64) -> f64 {
    let lo = (m - 2.0 * eps).max(-1.0);
    let hi = (m + 2.0 * eps).min(1.0);
    midpoint(lo, hi, 20_000, |w| 0.5 * both_consistent(m - w, eps))
}

/// Quack selection probability from message `m` against a truthful expert.
fn quack_payoff(rule: &PiecewiseRule, m: f64) -> f64 {
    let eps = rule.epsilon_bar;
    let lo = (m - 2.0 * eps).max(-1.0);
    let hi = (m + 2.0 * eps).min(1.0);
    midpoint(lo, hi, 200_000, |w| 0.5 * both_consistent(m - w, eps) * rule.pick(m, w))
}

#[test]
fn quack_value_is_half_the_mean_consistency() {
    for eps in [0.1, 0.3, 0.5, 0.8, 1.0] {
        let two_pi = midpoint(-1.0, 1.0, 4000, |m| 0.5 * consistent_prob(m, eps));
        let q = quack_value(eps).unwrap();
        assert!((q.consistency_prob - two_pi).abs() < 1e-7, "eps {eps}: {} vs {two_pi}", q.consistency_prob);
        assert!((q.per_identity_payoff - two_pi / 2.0).abs() < 1e-7);
    }
}

#[test]
fn max_rule_equalizes_payoffs_by_direct_integration() {
    for eps in [0.2, 0.5, 2.0 / 3.0] {
        let rule = build_max_rule(eps, 4096).unwrap();
        let pi = eps / 2.0 - eps * eps / 6.0;
        for m in [0.0, 0.13, 0.37, 0.5, 0.71, 0.9, 1.0] {
            let v = quack_payoff(&rule, m);
            assert!((v - pi).abs() < 2e-6, "eps {eps} m {m}: {v} vs {pi}");
            let lib = quack_message_payoff(&rule, m, Method::Quadrature).value;
            assert!((lib - v).abs() < 2e-6, "library quadrature {lib} vs oracle {v}");
        }
    }
}

#[test]
fn min_rule_equalizes_payoffs_by_direct_integration() {
    let eps = 0.15;
    let rule = build_min_rule(eps, 4096).unwrap();
    let pi = eps / 2.0 - eps * eps / 6.0;
    for m in [0.0, 0.2, 0.55, 0.8, 0.95, 1.0] {
        let v = quack_payoff(&rule, m);
        assert!((v - pi).abs() < 2e-6, "m {m}: {v} vs {pi}");
    }
}

#[test]
fn learning_probability_matches_integrated_consistency() {
    for eps in [0.05, 0.25, 0.6, 1.0] {
        let learn = 1.0 - midpoint(-1.0, 1.0, 4000, |m| 0.5 * consistent_prob(m, eps));
        assert!((learn_probability(eps).unwrap() - learn).abs() < 1e-7);
    }
}

#[test]
fn conditional_learning_uses_eight_eps_tail() {
    // state held at ω, quack uniform on [−1, 1]
    let eps = 0.3;
    for omega in [0.0, 0.3, 0.5, 0.7, 0.85, 1.0] {
        let consistent = midpoint(-eps, eps, 2000, |e| {
            let s = omega + e;
            let window = (s + eps).min(1.0) - (s - eps).max(-1.0);
            window / 2.0 / (2.0 * eps)
        });
        let oracle = 1.0 - consistent;
        let lib = learn_probability_conditional(omega, eps);
        assert!((lib - oracle).abs() < 1e-6, "omega {omega}: {lib} vs {oracle}");
    }
}

#[test]
fn variance_reduction_matches_triple_integral() {
    let eps = 0.4;
    // E Var(ω|s): s has density f(s) = window(s)/(4ε̄)
    let window = |s: f64| ((s + eps).min(1.0) - (s - eps).max(-1.0)).max(0.0);
    let signal_only = midpoint(-1.0 - eps, 1.0 + eps, 20_000, |s| {
        let w = window(s);
        w / (4.0 * eps) * w * w / 12.0
    });
    // E over (s, m) of the two-point variance (m − ω)²/4 when m is consistent
    let two_point = midpoint(-1.0 - eps, 1.0 + eps, 1500, |s| {
        let lo = (s - eps).max(-1.0);
        let hi = (s + eps).min(1.0);
        if hi <= lo {
            return 0.0;
        }
        // ω and m both uniform on the window, each with the prior weight 1/2
        let inner = midpoint(lo, hi, 300, |w| {
            midpoint(lo, hi, 300, |m| 0.5 * 0.5 * (m - w).powi(2) / 4.0)
        });
        inner / (2.0 * eps)
    });
    let oracle = signal_only - two_point;
    let lib = variance_reduction(eps).unwrap();
    assert!((lib - oracle).abs() < 2e-6, "{lib} vs {oracle}");
}

#[test]
fn identity_stated_payoffs_by_double_quadrature() {
    for (p1, eps) in [(0.55, 0.25), (0.6, 0.3)] {
        let eq = identity_equilibrium(p1, eps).unwrap();
        let mb = eq.m_bar;
        // speaker-1 quack uniform on [−m̄, m̄], fair coin when both consistent
        let pi1 = midpoint(-mb, mb, 2000, |m| {
            midpoint(-1.0, 1.0, 2000, |w| 0.5 * both_consistent(m - w, eps)) * 0.5 / (2.0 * mb)
        });
        // speaker-2 quack uniform on [−1, 1]; speaker 1 wins outright above m̄
        let pi2 = midpoint(-1.0, 1.0, 2000, |m| {
            midpoint(-mb, mb, 2000, |w| 0.5 * both_consistent(m - w, eps)) * 0.5 * 0.5
        });
        assert!((eq.pi1 - pi1).abs() < 1e-6, "({p1},{eps}) pi1 {} vs {pi1}", eq.pi1);
        assert!((eq.pi2 - pi2).abs() < 1e-6, "({p1},{eps}) pi2 {} vs {pi2}", eq.pi2);
    }
}

#[test]
fn identity_mbar_is_odds_ratio() {
    let eq = identity_equilibrium(0.55, 0.25).unwrap();
    assert!((eq.m_bar - 0.45 / 0.55).abs() < 1e-15);
    assert!((eq.m_bar - 9.0 / 11.0).abs() < 1e-15);
}

#[test]
fn sequential_payoff_by_integration() {
    let eps = 0.2;
    let b = 1.0 - 2.0 * eps;
    let first = midpoint(-b, b, 2000, |m| consistent_prob(m, eps) / (2.0 * b));
    // quack speaks first half the time; a second-speaking quack never wins
    let per_identity = 0.5 * first;
    let rep = sequential_equilibrium(eps).unwrap();
    assert!((rep.per_identity_seq - per_identity).abs() < 1e-7);
    assert!((rep.quack_payoff_seq - first).abs() < 1e-7);
}

#[test]
fn one_speaker_root_by_bisection() {
    for (q, u, eps) in [(0.5, 0.8, 1.0 / 3.0), (0.4, 0.9, 0.3), (0.7, 0.6, 0.45)] {
        let v = (1.0 - q) * (1.0 - u) / (q * u);
        assert!(v < eps);
        let g = |z: f64| 2.0 * z - 2.0 * z.atanh() - (1.0 / eps - 1.0 / v);
        let (mut a, mut b) = (0.0f64, 1.0 - 1e-16);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if g(c) > 0.0 {
                a = c;
            } else {
                b = c;
            }
        }
        let z = 0.5 * (a + b);
        let e = one_speaker_equilibrium(q, u, eps).unwrap();
        assert!((e.z.unwrap() - z).abs() < 1e-10, "({q},{u},{eps}) {} vs {z}", e.z.unwrap());
        assert!((e.pi - (1.0 - z * z) * eps / 2.0).abs() < 1e-10);
    }
}

#[test]
fn one_speaker_density_integrates_to_one() {
    for (q, u, eps) in [(0.5, 0.8, 1.0 / 3.0), (0.5, 2.0 / 3.0, 1.0 / 3.0), (0.5, 0.3, 0.2)] {
        let e = one_speaker_equilibrium(q, u, eps).unwrap();
        let mass = midpoint(-1.0, 1.0, 2_000_000, |m| e.density(m));
        assert!((mass - 1.0).abs() < 1e-6, "({q},{u},{eps}) mass {mass}");
    }
}

#[test]
fn one_speaker_quack_indifference() {
    let e = one_speaker_equilibrium(0.5, 0.8, 1.0 / 3.0).unwrap();
    for k in 0..=40 {
        let m = k as f64 / 40.0;
        let p = e.selection_probability(m);
        assert!((p - e.pi).abs() < 1e-6, "m {m}: {p} vs {}", e.pi);
    }
    let ld = one_speaker_equilibrium(0.5, 2.0 / 3.0, 1.0 / 3.0).unwrap();
    let base = ld.selection_probability(0.0);
    for k in 0..=20 {
        let m = ld.m_bar.unwrap() * k as f64 / 20.0;
        assert!((ld.selection_probability(m) - base).abs() < 1e-6);
    }
}

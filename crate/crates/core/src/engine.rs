//! Seeded Monte Carlo simulation and quadrature evaluators for the quack's
//! and the expert's payoffs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{tent, GameConfig, NoiseSpec, PriorSpec};
use crate::numerics::{gl_pieces, simpson_pieces};
use crate::rules::{select, OffPath, PiecewiseRule, RuleKind, Speaker};

/// Rounds per RNG block. Each block owns its substreams, so results do not
/// depend on how blocks are spread over threads.
pub const BLOCK: u64 = 1 << 15;
/// Number of batches for batch-means standard errors.
pub const BATCHES: usize = 100;

/// Labels of the random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    State = 1,
    Noise = 2,
    Quack = 3,
    Tie = 4,
    Identity = 5,
    Expert = 6,
    Aux = 7,
}

/// Generator for substream `label` of block `block`.
pub fn stream_rng(seed: u64, label: Stream, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((label as u64) << 56) | block);
    rng
}

/// The per-round generators handed to a simulation closure.
pub struct Streams {
    pub state: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub quack: ChaCha8Rng,
    pub tie: ChaCha8Rng,
    pub identity: ChaCha8Rng,
    pub expert: ChaCha8Rng,
    pub aux: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, block: u64) -> Self {
        Streams {
            state: stream_rng(seed, Stream::State, block),
            noise: stream_rng(seed, Stream::Noise, block),
            quack: stream_rng(seed, Stream::Quack, block),
            tie: stream_rng(seed, Stream::Tie, block),
            identity: stream_rng(seed, Stream::Identity, block),
            expert: stream_rng(seed, Stream::Expert, block),
            aux: stream_rng(seed, Stream::Aux, block),
        }
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|value − target|` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Per-batch sums of the statistics recorded by a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSums {
    pub rounds: u64,
    pub batch_rounds: Vec<u64>,
    pub sums: Vec<Vec<f64>>,
}

impl BatchSums {
    fn total(&self, k: usize) -> f64 {
        self.sums.iter().map(|b| b[k]).sum()
    }

    fn stderr_of(values: &[f64]) -> f64 {
        let n = values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    /// Mean of statistic `k` per round.
    pub fn mean(&self, k: usize) -> Estimate {
        let value = self.total(k) / self.rounds as f64;
        let means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.batch_rounds)
            .filter(|(_, &n)| n > 0)
            .map(|(b, &n)| b[k] / n as f64)
            .collect();
        Estimate { value, stderr: Self::stderr_of(&means) }
    }

    /// Ratio of sums `Σ num / Σ den`.
    pub fn ratio(&self, num: usize, den: usize) -> Estimate {
        let d = self.total(den);
        let value = if d > 0.0 { self.total(num) / d } else { 0.0 };
        let ratios: Vec<f64> =
            self.sums.iter().filter(|b| b[den] > 0.0).map(|b| b[num] / b[den]).collect();
        Estimate { value, stderr: Self::stderr_of(&ratios) }
    }
}

fn batch_of(r: u64, rounds: u64) -> usize {
    ((r as u128 * BATCHES as u128) / rounds as u128) as usize
}

/// Runs `rounds` independent rounds. `round` adds the round's statistics to
/// the row it is given. Output is bit-identical for any thread count.
pub fn run_rounds<F>(rounds: u64, seed: u64, nstats: usize, round: F) -> BatchSums
where
    F: Fn(&mut Streams, &mut [f64]) + Sync,
{
    assert!(rounds >= 1);
    let blocks = rounds.div_ceil(BLOCK);
    let parts: Vec<Vec<(usize, u64, Vec<f64>)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut st = Streams::new(seed, b);
            let mut out: Vec<(usize, u64, Vec<f64>)> = Vec::new();
            let end = ((b + 1) * BLOCK).min(rounds);
            for r in b * BLOCK..end {
                let k = batch_of(r, rounds);
                if out.last().map(|e| e.0) != Some(k) {
                    out.push((k, 0, vec![0.0; nstats]));
                }
                let row = out.last_mut().unwrap();
                row.1 += 1;
                round(&mut st, &mut row.2);
            }
            out
        })
        .collect();
    let mut sums = vec![vec![0.0; nstats]; BATCHES];
    let mut batch_rounds = vec![0u64; BATCHES];
    for part in parts {
        for (k, n, row) in part {
            batch_rounds[k] += n;
            for (acc, v) in sums[k].iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    BatchSums { rounds, batch_rounds, sums }
}

/// A density on `[lo, hi]` given by node values with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    #[serde(skip)]
    cum: Vec<f64>,
}

impl DensityTable {
    pub fn new(xs: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if xs.len() != density.len() || xs.len() < 2 {
            return Err(Error::validation("density table needs matching xs and values"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("density table abscissae must increase"));
        }
        if density.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::validation("density table values must be nonnegative"));
        }
        let mut cum = vec![0.0];
        for k in 0..xs.len() - 1 {
            cum.push(cum[k] + 0.5 * (xs[k + 1] - xs[k]) * (density[k] + density[k + 1]));
        }
        let total = cum[cum.len() - 1];
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::validation(format!("density table integrates to {total}, not 1")));
        }
        Ok(DensityTable { xs, density, cum })
    }

    /// Rebuild the cumulative table after deserialization.
    pub fn validated(self) -> Result<Self> {
        DensityTable::new(self.xs, self.density)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let k = self.xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.density[k] + t * (self.density[k + 1] - self.density[k])
    }

    /// Inverse-cdf draw, exact for the interpolated density.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.xs.len();
        let target = u * self.cum[n - 1];
        let k = self.cum.partition_point(|&c| c <= target).saturating_sub(1).min(n - 2);
        let (x0, h) = (self.xs[k], self.xs[k + 1] - self.xs[k]);
        let (d0, d1) = (self.density[k], self.density[k + 1]);
        let rem = target - self.cum[k];
        // rem = d0 t + (d1 − d0) t² / (2h)
        let slope = (d1 - d0) / h;
        let t = if slope.abs() < 1e-14 {
            if d0 > 0.0 {
                rem / d0
            } else {
                0.0
            }
        } else {
            let disc = (d0 * d0 + 2.0 * slope * rem).max(0.0);
            (disc.sqrt() - d0) / slope
        };
        x0 + t.clamp(0.0, h)
    }
}

/// Expert messaging strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertStrategy {
    Truthful,
    /// Deterministic report `m(ω)`, linear between the tabulated states.
    FixedDeviation { omega: Vec<f64>, m: Vec<f64> },
    /// A state-independent message density (babbling).
    Tabulated { table: DensityTable },
}

/// Quack messaging strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuackStrategy {
    Uniform { a: f64 },
    /// The state prior restricted to `[−m̄, m̄]`.
    TruncatedPrior { m_bar: f64 },
    DensityTable { table: DensityTable },
}

/// Strategies of all three players.
#[derive(Debug, Clone)]
pub struct StrategyProfile {
    pub expert: ExpertStrategy,
    pub quack: QuackStrategy,
    pub judge: PiecewiseRule,
    pub off_path: OffPath,
}

impl StrategyProfile {
    /// Truthful expert, quack uniform on `[−1,1]`.
    pub fn benchmark(judge: PiecewiseRule) -> Self {
        StrategyProfile {
            expert: ExpertStrategy::Truthful,
            quack: QuackStrategy::Uniform { a: 1.0 },
            judge,
            off_path: OffPath::Coin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.expert {
            ExpertStrategy::FixedDeviation { omega, m } => {
                if omega.len() != m.len() || omega.len() < 2 {
                    return Err(Error::validation("fixed deviation needs matching omega and m"));
                }
                if omega.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::validation("fixed deviation states must increase"));
                }
            }
            ExpertStrategy::Tabulated { table } => {
                table.clone().validated()?;
            }
            ExpertStrategy::Truthful => {}
        }
        match &self.quack {
            QuackStrategy::Uniform { a } | QuackStrategy::TruncatedPrior { m_bar: a } => {
                if !(*a > 0.0 && *a <= 1.0) {
                    return Err(Error::validation("quack support half-width must lie in (0,1]"));
                }
            }
            QuackStrategy::DensityTable { table } => {
                table.clone().validated()?;
            }
        }
        Ok(())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + t * (ys[k + 1] - ys[k])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRow {
    pub m: f64,
    pub payoff: f64,
    pub stderr: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub rounds: u64,
    pub seed: u64,
    pub expert_wins: u64,
    pub quack_wins: u64,
    pub judge_accuracy: Estimate,
    pub quack_win_rate: Estimate,
    /// Rounds where exactly one message is consistent, or both are
    /// consistent and equal.
    pub learn_state_freq: Estimate,
    /// Quack win rate by `|m|` bin, bins of equal width on `[0,1]`.
    pub per_message_payoff: Vec<PayoffRow>,
}

/// Number of `|m|` bins in [`SimulationReport::per_message_payoff`].
pub const PAYOFF_BINS: usize = 20;

/// Plays `rounds` rounds of the two-speaker game.
pub fn simulate(
    config: &GameConfig,
    profile: &StrategyProfile,
    rounds: u64,
    seed: u64,
) -> Result<SimulationReport> {
    config.validate()?;
    profile.validate()?;
    if rounds == 0 {
        return Err(Error::validation("rounds must be at least 1"));
    }
    let NoiseSpec::Uniform { half_width: eps } = config.noise else {
        return Err(Error::validation("simulate supports uniform noise only"));
    };
    let rule = &profile.judge;
    if (rule.epsilon_bar - eps).abs() > 1e-12 {
        return Err(Error::validation("judge rule epsilon_bar differs from the configuration"));
    }
    let expert_table = match &profile.expert {
        ExpertStrategy::Tabulated { table } => Some(table.clone().validated()?),
        _ => None,
    };
    let quack_table = match &profile.quack {
        QuackStrategy::DensityTable { table } => Some(table.clone().validated()?),
        _ => None,
    };
    let p1 = config.p1;
    let prior = &config.prior;
    // stats: 0 expert wins, 1 quack wins, 2 learned, then (count, wins) per bin
    let nstats = 3 + 2 * PAYOFF_BINS;
    let sums = run_rounds(rounds, seed, nstats, |st, row| {
        let expert_first = st.identity.random::<f64>() < p1;
        let omega = prior.sample(&mut st.state);
        let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
        let mq = match &profile.quack {
            QuackStrategy::Uniform { a } => a * (2.0 * st.quack.random::<f64>() - 1.0),
            QuackStrategy::TruncatedPrior { m_bar } => prior.sample_truncated(*m_bar, &mut st.quack),
            QuackStrategy::DensityTable { .. } => {
                quack_table.as_ref().unwrap().quantile(st.quack.random::<f64>())
            }
        };
        let me = match &profile.expert {
            ExpertStrategy::Truthful => omega,
            ExpertStrategy::FixedDeviation { omega: xs, m } => interp(xs, m, omega).clamp(-1.0, 1.0),
            ExpertStrategy::Tabulated { .. } => {
                expert_table.as_ref().unwrap().quantile(st.expert.random::<f64>())
            }
        };
        let u = st.tie.random::<f64>();
        let (m1, m2) = if expert_first { (me, mq) } else { (mq, me) };
        let winner = select(rule, m1, m2, s, u, profile.off_path);
        let expert_won = (winner == Speaker::First) == expert_first;
        row[if expert_won { 0 } else { 1 }] += 1.0;
        let c1 = (m1 - s).abs() <= eps;
        let c2 = (m2 - s).abs() <= eps;
        if c1 != c2 || (c1 && m1 == m2) {
            row[2] += 1.0;
        }
        let bin = ((mq.abs() * PAYOFF_BINS as f64) as usize).min(PAYOFF_BINS - 1);
        row[3 + 2 * bin] += 1.0;
        if !expert_won {
            row[4 + 2 * bin] += 1.0;
        }
    });
    let expert_wins = sums.total(0).round() as u64;
    let quack_wins = sums.total(1).round() as u64;
    let per_message_payoff = (0..PAYOFF_BINS)
        .map(|b| {
            let e = sums.ratio(4 + 2 * b, 3 + 2 * b);
            PayoffRow {
                m: (b as f64 + 0.5) / PAYOFF_BINS as f64,
                payoff: e.value,
                stderr: e.stderr,
                count: sums.total(3 + 2 * b).round() as u64,
            }
        })
        .collect();
    Ok(SimulationReport {
        rounds,
        seed,
        expert_wins,
        quack_wins,
        judge_accuracy: sums.mean(0),
        quack_win_rate: sums.mean(1),
        learn_state_freq: sums.mean(2),
        per_message_payoff,
    })
}

/// How a payoff is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    MonteCarlo { samples: u64, seed: u64 },
}

/// Quadrature panels used for the quack payoff.
pub const PAYOFF_PANELS: usize = 4096;

/// Probability that the quack is selected when sending `m` against a
/// truthful expert under the uniform state.
pub fn quack_message_payoff(rule: &PiecewiseRule, m: f64, method: Method) -> Estimate {
    quack_message_payoff_prior(rule, &PriorSpec::Uniform, m, method)
}

/// As [`quack_message_payoff`] with the state drawn from `prior`.
pub fn quack_message_payoff_prior(
    rule: &PiecewiseRule,
    prior: &PriorSpec,
    m: f64,
    method: Method,
) -> Estimate {
    let eps = rule.epsilon_bar;
    match method {
        Method::Quadrature => {
            let a = m.abs();
            let kinks = [-a, a, 0.0, m - 2.0 * eps, m + 2.0 * eps];
            let lo = (m - 2.0 * eps).max(-1.0);
            let hi = (m + 2.0 * eps).min(1.0);
            let value = simpson_pieces(lo, hi, &kinks, PAYOFF_PANELS, |w| {
                prior.density(w) * tent(m - w, eps) * rule.pick(m, w)
            });
            Estimate { value, stderr: 0.0 }
        }
        Method::MonteCarlo { samples, seed } => {
            let sums = run_rounds(samples, seed, 1, |st, row| {
                let omega = prior.sample(&mut st.state);
                let s = omega + eps * (2.0 * st.noise.random::<f64>() - 1.0);
                if (m - s).abs() <= eps && st.tie.random::<f64>() < rule.pick(m, omega) {
                    row[0] += 1.0;
                }
            });
            sums.mean(0)
        }
    }
}

/// Probability that both speakers are inconsistent and the deviating
/// expert still wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// The expert wins whenever both are inconsistent.
    Adversarial1,
    Coin,
}

impl AlphaPolicy {
    pub fn alpha(self) -> f64 {
        match self {
            AlphaPolicy::Adversarial1 => 1.0,
            AlphaPolicy::Coin => 0.5,
        }
    }
}

/// Expert's selection probability at state `omega` when reporting `m`,
/// with the quack uniform on `[−1,1]`.
pub fn expert_deviation_payoff(
    rule: &PiecewiseRule,
    omega: f64,
    m: f64,
    alpha_policy: AlphaPolicy,
) -> f64 {
    expert_deviation_payoff_support(rule, omega, m, alpha_policy, 1.0)
}

/// As [`expert_deviation_payoff`] with the quack uniform on `[−a, a]`.
pub fn expert_deviation_payoff_support(
    rule: &PiecewiseRule,
    omega: f64,
    m: f64,
    alpha_policy: AlphaPolicy,
    a: f64,
) -> f64 {
    let eps = rule.epsilon_bar;
    let alpha = alpha_policy.alpha();
    let inv = 1.0 / (2.0 * a);
    let integrand = |s: f64| {
        let qlo = (s - eps).max(-a);
        let qhi = (s + eps).min(a);
        let q = (qhi - qlo).max(0.0) * inv;
        if (m - s).abs() <= eps {
            (1.0 - q) + rule.pick_integral(m, qlo, qhi) * inv
        } else {
            alpha * (1.0 - q)
        }
    };
    let am = m.abs();
    let kinks = [
        m - eps,
        m + eps,
        a - eps,
        a + eps,
        -a - eps,
        -a + eps,
        am - eps,
        am + eps,
        -am - eps,
        -am + eps,
    ];
    gl_pieces(omega - eps, omega + eps, &kinks, 16, 8, integrand) / (2.0 * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Expert,
    Quack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Expert: largest gain from misreporting. Quack: payoff max − min.
    pub max_regret: f64,
    /// Where the maximum is attained. For the quack side `omega` repeats `m`.
    pub omega: f64,
    pub m: f64,
}

/// Deviation messages tried at state `omega`.
pub fn deviation_grid(omega: f64, eps: f64, n_m: usize) -> Vec<f64> {
    let mut ms: Vec<f64> = (0..n_m).map(|k| -1.0 + 2.0 * k as f64 / (n_m - 1) as f64).collect();
    for d in [eps / 100.0, eps / 10.0, 2.0 * eps, 2.0 * eps + 0.05] {
        ms.push(omega + d);
        ms.push(omega - d);
    }
    ms.retain(|x| x.abs() <= 1.0 && *x != omega);
    ms
}

/// Certifies an equilibrium on a grid. Expert side: `grid_n` states and
/// `2·grid_n − 1` messages plus points near the truth, adversarial
/// off-path selection. Quack side: `grid_n` messages on `[0,1]`.
pub fn best_response_scan(rule: &PiecewiseRule, side: Side, grid_n: usize) -> Result<ScanResult> {
    if grid_n < 101 {
        return Err(Error::validation("best_response_scan needs grid_n >= 101"));
    }
    match side {
        Side::Quack => {
            let vals: Vec<(f64, f64)> = (0..grid_n)
                .into_par_iter()
                .map(|k| {
                    let m = k as f64 / (grid_n - 1) as f64;
                    (m, quack_message_payoff(rule, m, Method::Quadrature).value)
                })
                .collect();
            let (mut lo, mut hi) = (vals[0], vals[0]);
            for &v in &vals {
                if v.1 < lo.1 {
                    lo = v;
                }
                if v.1 > hi.1 {
                    hi = v;
                }
            }
            let at = if rule.kind == RuleKind::Uniform { lo.0 } else { hi.0 };
            Ok(ScanResult { max_regret: hi.1 - lo.1, omega: at, m: at })
        }
        Side::Expert => {
            let eps = rule.epsilon_bar;
            let best = (0..grid_n)
                .into_par_iter()
                .map(|k| {
                    let omega = -1.0 + 2.0 * k as f64 / (grid_n - 1) as f64;
                    let truth = expert_deviation_payoff(rule, omega, omega, AlphaPolicy::Adversarial1);
                    deviation_grid(omega, eps, 2 * grid_n - 1)
                        .into_iter()
                        .map(|m| {
                            let v = expert_deviation_payoff(rule, omega, m, AlphaPolicy::Adversarial1);
                            (v - truth, omega, m)
                        })
                        .fold((f64::NEG_INFINITY, omega, omega), |a, b| if b.0 > a.0 { b } else { a })
                })
                .reduce(
                    || (f64::NEG_INFINITY, 0.0, 0.0),
                    |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
                );
            Ok(ScanResult { max_regret: best.0, omega: best.1, m: best.2 })
        }
    }
}

//! The judge's tie-breaking rules and the benchmark quack payoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_eps, check_eps_closed, consistency_probability, tent, tent_integral};
use crate::numerics::{gauss_legendre, gl_pieces, lagrange_weights};

/// Benchmark quack payoff under the uniform state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuackValue {
    /// `2Π = ε̄ − ε̄²/3`: probability the uniform quack message is consistent.
    pub consistency_prob: f64,
    /// `Π = ε̄/2 − ε̄²/6`: probability the quack is selected.
    pub per_identity_payoff: f64,
}

pub fn quack_value(eps: f64) -> Result<QuackValue> {
    check_eps_closed(eps)?;
    let two_pi = eps - eps * eps / 3.0;
    Ok(QuackValue { consistency_prob: two_pi, per_identity_payoff: two_pi / 2.0 })
}

/// Conditional probability that a consistent message `m` is picked under any
/// indifference rule: `Π / K(m)`.
pub fn zeta(m: f64, eps: f64) -> f64 {
    (eps / 2.0 - eps * eps / 6.0) / consistency_probability(m, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// The more extreme consistent speaker wins w.p. `φ(max |m|)`.
    Max,
    /// The more moderate consistent speaker wins w.p. `φ(min |m|)`.
    Min,
    /// The `ε̄ = 1` rule, a function of both magnitudes.
    ContinuousEps1,
    /// Max rule for a non-uniform prior, `φ = 1` beyond `m̄`.
    PriorMax,
    /// Coin flip between two consistent speakers.
    Uniform,
}

/// Selection when neither message is consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffPath {
    #[default]
    Coin,
    FirstSpeaker,
    SecondSpeaker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub lo: f64,
    pub hi: f64,
    pub tag: String,
}

impl SegmentMeta {
    fn new(lo: f64, hi: f64, tag: &str) -> Self {
        SegmentMeta { lo, hi, tag: tag.to_string() }
    }
}

/// A grid-backed selection function on `[0,1]`, linearly interpolated.
#[derive(Debug, Clone)]
pub struct PiecewiseRule {
    pub kind: RuleKind,
    pub epsilon_bar: f64,
    ms: Vec<f64>,
    phi: Vec<f64>,
    pub segment_meta: Vec<SegmentMeta>,
    /// Built outside the regime where the construction is known to hold.
    pub extrapolated: bool,
    pub m_bar: Option<f64>,
    // ∫_0^{m_k} ψ at the nodes
    cum_psi: Vec<f64>,
    step: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RuleFile {
    kind: RuleKind,
    epsilon_bar: f64,
    grid: Vec<[f64; 2]>,
    segment_meta: Vec<SegmentMeta>,
    #[serde(default)]
    extrapolated: bool,
    #[serde(default)]
    m_bar: Option<f64>,
}

impl PiecewiseRule {
    /// Assemble a rule from node values, checking the grid invariants.
    pub fn from_grid(
        kind: RuleKind,
        epsilon_bar: f64,
        ms: Vec<f64>,
        phi: Vec<f64>,
        segment_meta: Vec<SegmentMeta>,
    ) -> Result<Self> {
        if ms.len() != phi.len() || ms.len() < 2 {
            return Err(Error::validation("rule grid needs at least two (m, phi) rows"));
        }
        if ms[0] != 0.0 || (ms[ms.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::validation("rule grid must cover [0,1]"));
        }
        if ms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("rule grid must be strictly increasing"));
        }
        if let Some((k, v)) = phi.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::validation(format!("phi outside [0,1] at m = {}: {v}", ms[k])));
        }
        let n = ms.len() - 1;
        let h = 1.0 / n as f64;
        let uniform = ms.iter().enumerate().all(|(k, &m)| (m - k as f64 * h).abs() < 1e-12);
        let mut cum_psi = Vec::with_capacity(ms.len());
        cum_psi.push(0.0);
        for k in 0..n {
            let area = 0.5 * (ms[k + 1] - ms[k]) * (2.0 - phi[k] - phi[k + 1]);
            cum_psi.push(cum_psi[k] + area);
        }
        Ok(PiecewiseRule {
            kind,
            epsilon_bar,
            ms,
            phi,
            segment_meta,
            extrapolated: false,
            m_bar: None,
            cum_psi,
            step: uniform.then_some(h),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.ms
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ms.iter().copied().zip(self.phi.iter().copied())
    }

    #[inline]
    fn locate(&self, x: f64) -> usize {
        let n = self.ms.len() - 1;
        match self.step {
            Some(h) => ((x / h) as usize).min(n - 1),
            None => self.ms.partition_point(|&v| v <= x).saturating_sub(1).min(n - 1),
        }
    }

    /// `φ(|m|)` by linear interpolation.
    #[inline]
    pub fn phi(&self, m: f64) -> f64 {
        let x = m.abs().min(1.0);
        let k = self.locate(x);
        let t = (x - self.ms[k]) / (self.ms[k + 1] - self.ms[k]);
        self.phi[k] + t * (self.phi[k + 1] - self.phi[k])
    }

    #[inline]
    pub fn psi(&self, m: f64) -> f64 {
        1.0 - self.phi(m)
    }

    /// `∫_0^x ψ` for `x ∈ [0,1]`, exact for the interpolant.
    #[inline]
    pub fn psi_antiderivative(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let k = self.locate(x);
        let dx = x - self.ms[k];
        self.cum_psi[k] + 0.5 * dx * (2.0 - self.phi[k] - self.phi(x))
    }

    /// Probability that the speaker sending `m_self` is selected when both
    /// messages are consistent.
    #[inline]
    pub fn pick(&self, m_self: f64, m_other: f64) -> f64 {
        let (a, b) = (m_self.abs(), m_other.abs());
        match self.kind {
            RuleKind::Uniform => 0.5,
            RuleKind::Max | RuleKind::PriorMax => {
                if a > b {
                    self.phi(a)
                } else if a < b {
                    1.0 - self.phi(b)
                } else {
                    0.5
                }
            }
            RuleKind::Min => {
                if a < b {
                    self.phi(a)
                } else if a > b {
                    1.0 - self.phi(b)
                } else {
                    0.5
                }
            }
            RuleKind::ContinuousEps1 => {
                if a >= b {
                    eps1_pick(b, a.min(1.0))
                } else {
                    1.0 - eps1_pick(a, b.min(1.0))
                }
            }
        }
    }

    /// `∫_lo^hi pick(m_self, x) dx`.
    pub fn pick_integral(&self, m_self: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let a = m_self.abs().min(1.0);
        if self.kind == RuleKind::ContinuousEps1 {
            return gl_pieces(lo, hi, &[-a, 0.0, a], 4, 8, |x| self.pick(m_self, x));
        }
        if lo >= 0.0 {
            self.magnitude_pick_integral(a, lo, hi)
        } else if hi <= 0.0 {
            self.magnitude_pick_integral(a, -hi, -lo)
        } else {
            self.magnitude_pick_integral(a, 0.0, -lo) + self.magnitude_pick_integral(a, 0.0, hi)
        }
    }

    // ∫_{x0}^{x1} pick(a, x) dx over magnitudes 0 <= x0 <= x1
    fn magnitude_pick_integral(&self, a: f64, x0: f64, x1: f64) -> f64 {
        let x1 = x1.min(1.0);
        if x1 <= x0 {
            return 0.0;
        }
        let below = (x1.min(a) - x0).max(0.0);
        let above = (x1 - x0.max(a)).max(0.0);
        let psi_int = |u: f64, v: f64| {
            if v > u {
                self.psi_antiderivative(v) - self.psi_antiderivative(u)
            } else {
                0.0
            }
        };
        match self.kind {
            RuleKind::Uniform => 0.5 * (x1 - x0),
            RuleKind::Max | RuleKind::PriorMax => self.phi(a) * below + psi_int(x0.max(a), x1),
            RuleKind::Min => psi_int(x0, x1.min(a)) + self.phi(a) * above,
            RuleKind::ContinuousEps1 => unreachable!(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = RuleFile {
            kind: self.kind,
            epsilon_bar: self.epsilon_bar,
            grid: self.grid().map(|(m, p)| [m, p]).collect(),
            segment_meta: self.segment_meta.clone(),
            extrapolated: self.extrapolated,
            m_bar: self.m_bar,
        };
        serde_json::to_value(file).expect("rule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RuleFile =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("rule file: {e}")))?;
        check_eps_closed(file.epsilon_bar).map_err(|e| Error::validation(e.to_string()))?;
        let (ms, phi) = file.grid.iter().map(|r| (r[0], r[1])).unzip();
        let mut rule =
            PiecewiseRule::from_grid(file.kind, file.epsilon_bar, ms, phi, file.segment_meta)?;
        rule.extrapolated = file.extrapolated;
        rule.m_bar = file.m_bar;
        Ok(rule)
    }
}

/// `c(lo,hi) = 1/2 + (hi² − lo²)/(4(2 − hi))`, the `ε̄ = 1` pick probability
/// of the larger magnitude `hi`.
#[inline]
fn eps1_pick(lo: f64, hi: f64) -> f64 {
    0.5 + (hi * hi - lo * lo) / (4.0 * (2.0 - hi))
}

/// Probability that the speaker with the larger `|m|` is selected at `ε̄ = 1`.
pub fn continuous_rule_eps1(m1: f64, m2: f64) -> Result<f64> {
    let (a, b) = (m1.abs(), m2.abs());
    if a > b {
        return Err(Error::validation(format!(
            "continuous rule expects |m1| <= |m2|, got {m1} and {m2}"
        )));
    }
    if b > 1.0 {
        return Err(Error::domain("messages must lie in [-1,1]"));
    }
    Ok(eps1_pick(a, b))
}

/// Which speaker the judge selects after seeing `s`.
pub fn select(
    rule: &PiecewiseRule,
    m1: f64,
    m2: f64,
    s: f64,
    tie_u: f64,
    off_path: OffPath,
) -> Speaker {
    let eps = rule.epsilon_bar;
    let c1 = (m1 - s).abs() <= eps;
    let c2 = (m2 - s).abs() <= eps;
    let first = match (c1, c2) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => tie_u < rule.pick(m1, m2),
        (false, false) => match off_path {
            OffPath::Coin => tie_u < 0.5,
            OffPath::FirstSpeaker => true,
            OffPath::SecondSpeaker => false,
        },
    };
    if first {
        Speaker::First
    } else {
        Speaker::Second
    }
}

/// `φ₀(m) = 1 − (ε̄/3) e^t (sin t + cos t)` with `t = (1−m)/(2ε̄)`.
pub fn phi0_closed(m: f64, eps: f64) -> f64 {
    let t = (1.0 - m) / (2.0 * eps);
    1.0 - eps / 3.0 * t.exp() * (t.sin() + t.cos())
}

/// `ψ` on `[2ε̄−1, ε̄]` for `ε̄ ≥ 1/2`.
pub fn psi1_closed(m: f64, eps: f64) -> f64 {
    let u = (m + 1.0) / (2.0 * eps) - 1.0;
    let num = (m - eps).powi(2) * (2.0 * m + eps)
        - eps.powi(3) * u.exp() * (m * u.sin() - (m - 2.0 * eps) * (-u).cos());
    num / (3.0 * m * m * (m - 2.0 * eps))
}

/// `ψ` on `[0, 2ε̄−1]` for `ε̄ ≥ 1/2`.
pub fn psi2_closed(m: f64, eps: f64) -> f64 {
    0.5 - m / (6.0 * (2.0 * eps - m))
}

/// Default number of grid cells for a given `ε̄`.
pub fn grid_cells(eps: f64, grid_n: usize) -> usize {
    grid_n.max((256.0 / eps).ceil() as usize)
}

fn check_phi(phi: &mut [f64], ms: &[f64]) -> Result<()> {
    for (k, v) in phi.iter_mut().enumerate() {
        if !v.is_finite() || *v < -1e-6 || *v > 1.0 + 1e-6 {
            return Err(Error::construction("phi left [0,1]", ms[k], *v));
        }
        *v = v.clamp(0.0, 1.0);
    }
    Ok(())
}

fn uniform_nodes(n: usize, end: f64) -> Vec<f64> {
    (0..=n).map(|k| if k == n { end } else { k as f64 * end / n as f64 }).collect()
}

/// `W(m,x) = f(|x−m|) + f(x+m)`: weight of expert states `±x` against a
/// quack message `m`, where `f` is the both-consistent tent.
#[inline]
pub(crate) fn pair_weight(m: f64, x: f64, eps: f64) -> f64 {
    tent(x - m, eps) + tent(x + m, eps)
}

/// Integrates `W(m,x)·wt(x)·p(x)` over `[a,b]` where `p` is the Lagrange
/// interpolant of node values, adding each node's coefficient to `coef`.
/// `stencil(c)` gives the first node and the order used on cell `c`.
#[allow(clippy::too_many_arguments)]
fn accumulate<W: Fn(f64) -> f64, S: Fn(usize) -> (usize, usize)>(
    coef: &mut [f64],
    m: f64,
    h: f64,
    cells: std::ops::Range<usize>,
    a: f64,
    b: f64,
    eps: f64,
    wt: &W,
    stencil: S,
) {
    let gl4 = gauss_legendre(4);
    let kinks = [2.0 * eps - m, m + 2.0 * eps, m - 2.0 * eps];
    let offsets = [0.0, 1.0, 2.0, 3.0];
    let mut lw = [0.0; 4];
    for c in cells {
        let lo = (c as f64 * h).max(a);
        let hi = ((c + 1) as f64 * h).min(b);
        if hi <= lo {
            continue;
        }
        let (s, k) = stencil(c);
        let mut pts = [lo, 0.0, 0.0, 0.0, 0.0];
        let mut np = 1;
        let mut ks: Vec<f64> = kinks.iter().copied().filter(|&x| x > lo && x < hi).collect();
        ks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for x in ks {
            pts[np] = x;
            np += 1;
        }
        pts[np] = hi;
        np += 1;
        for w in pts[..np].windows(2) {
            let (mid, rad) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for &(z, gw) in gl4 {
                let x = mid + rad * z;
                let val = gw * rad * pair_weight(m, x, eps) * wt(x);
                if val == 0.0 {
                    continue;
                }
                lagrange_weights(&offsets[..k], x / h - s as f64, &mut lw[..k]);
                for l in 0..k {
                    coef[s + l] += val * lw[l];
                }
            }
        }
    }
}

/// Backward march of the max-rule identity
/// `φ(m)A(m) + ∫_m^{end} W(m,x) wt(x) ψ(x) dx = target`
/// on `n` uniform cells of `[0,end]`, with `ψ = 0` beyond `end`.
/// `fixed(k)` pins node values that are known in closed form.
pub(crate) fn march_backward<W, A, F>(
    eps: f64,
    end: f64,
    n: usize,
    target: f64,
    wt: W,
    a_of: A,
    fixed: F,
) -> Result<Vec<f64>>
where
    W: Fn(f64) -> f64,
    A: Fn(f64) -> f64,
    F: Fn(usize) -> Option<f64>,
{
    assert!(n >= 8);
    let h = end / n as f64;
    let ms = uniform_nodes(n, end);
    let mut phi = vec![f64::NAN; n + 1];
    let mut coef = vec![0.0; n + 1];
    for i in (1..=n).rev() {
        if let Some(v) = fixed(i) {
            phi[i] = v;
            continue;
        }
        let m = ms[i];
        let a_m = a_of(m);
        if i == n {
            phi[i] = target / a_m;
            continue;
        }
        let upper = end.min(m + 2.0 * eps);
        let last = (((upper / h).ceil() as usize).max(i + 1)).min(n);
        let k = 4.min(n - i + 1);
        accumulate(&mut coef, m, h, i..last, m, upper, eps, &wt, |c| {
            ((c.saturating_sub(1)).clamp(i, n + 1 - k), k)
        });
        let hi_node = (last + 2).min(n);
        let mut rest = 0.0;
        for j in i + 1..=hi_node {
            rest += coef[j] * (1.0 - phi[j]);
        }
        let cii = coef[i];
        for c in coef[i..=hi_node].iter_mut() {
            *c = 0.0;
        }
        phi[i] = (target - rest - cii) / (a_m - cii);
    }
    // the identity degenerates at 0; extrapolate from nodes away from it
    let d = (n / 512).clamp(1, 8);
    if fixed(0).is_none() {
        phi[0] = 4.0 * phi[d] - 6.0 * phi[2 * d] + 4.0 * phi[3 * d] - phi[4 * d];
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [phi[0], phi[d], phi[2 * d], phi[3 * d]];
        let mut lw = [0.0; 4];
        for k in 1..d {
            lagrange_weights(&xs, k as f64 / d as f64, &mut lw);
            phi[k] = lw.iter().zip(&ys).map(|(w, y)| w * y).sum();
        }
    } else {
        phi[0] = fixed(0).unwrap();
    }
    check_phi(&mut phi, &ms)?;
    Ok(phi)
}

/// Forward march of the min-rule identity
/// `φ(m)C(m) + ∫_0^m W(m,x) ψ(x) dx = 2Π`.
fn march_forward(eps: f64, n: usize, target: f64) -> Result<Vec<f64>> {
    let h = 1.0 / n as f64;
    let ms = uniform_nodes(n, 1.0);
    let mut phi = vec![f64::NAN; n + 1];
    let mut coef = vec![0.0; n + 1];
    let c_of = |m: f64| tent_integral(0.0, 1.0 - m, eps) + tent_integral(2.0 * m, 1.0 + m, eps);
    phi[0] = target / c_of(0.0);
    let one = |_: f64| 1.0;
    for i in 1..n {
        let m = ms[i];
        let lower = (m - 2.0 * eps).max(0.0);
        let first = (lower / h).floor() as usize;
        let k = 4.min(i + 1);
        accumulate(&mut coef, m, h, first..i, lower, m, eps, &one, |c| {
            ((c.saturating_sub(1)).clamp(0, i + 1 - k), k)
        });
        let lo_node = first.saturating_sub(2);
        let mut rest = 0.0;
        for j in lo_node..i {
            rest += coef[j] * (1.0 - phi[j]);
        }
        let cii = coef[i];
        for c in coef[lo_node..=i].iter_mut() {
            *c = 0.0;
        }
        phi[i] = (target - rest - cii) / (c_of(m) - cii);
    }
    phi[n] = 4.0 * phi[n - 1] - 6.0 * phi[n - 2] + 4.0 * phi[n - 3] - phi[n - 4];
    check_phi(&mut phi, &ms)?;
    Ok(phi)
}

/// Max rule obtained by marching the indifference identity over all of
/// `[0,1]`, without any closed-form segment.
pub fn march_max_rule(eps: f64, grid_n: usize) -> Result<PiecewiseRule> {
    check_eps_closed(eps)?;
    let n = grid_cells(eps, grid_n);
    let target = quack_value(eps)?.consistency_prob;
    let phi = march_backward(
        eps,
        1.0,
        n,
        target,
        |_| 1.0,
        |m| tent_integral(0.0, 2.0 * m, eps),
        |_| None,
    )?;
    PiecewiseRule::from_grid(
        RuleKind::Max,
        eps,
        uniform_nodes(n, 1.0),
        phi,
        vec![SegmentMeta::new(0.0, 1.0, "marched")],
    )
}

/// The max rule.
///
/// For `ε̄ < 1/2` the top segment uses `φ₀` and the rest is marched.
/// For `ε̄ ≥ 1/2` all three segments are closed form.
pub fn build_max_rule(eps: f64, grid_n: usize) -> Result<PiecewiseRule> {
    check_eps_closed(eps)?;
    if grid_n < 256 {
        return Err(Error::validation("grid_n must be at least 256"));
    }
    let n = grid_cells(eps, grid_n);
    let ms = uniform_nodes(n, 1.0);
    if eps >= 0.5 {
        let b1 = 2.0 * eps - 1.0;
        let mut phi: Vec<f64> = ms
            .iter()
            .map(|&m| {
                if m >= eps {
                    phi0_closed(m, eps)
                } else if m > b1 {
                    1.0 - psi1_closed(m, eps)
                } else {
                    1.0 - psi2_closed(m, eps)
                }
            })
            .collect();
        check_phi(&mut phi, &ms)?;
        let mut meta = vec![];
        if b1 > 0.0 {
            meta.push(SegmentMeta::new(0.0, b1, "psi2_closed_form"));
        }
        if eps > b1 && eps > 0.0 {
            meta.push(SegmentMeta::new(b1.max(0.0), eps.min(1.0), "psi1_closed_form"));
        }
        if eps < 1.0 {
            meta.push(SegmentMeta::new(eps, 1.0, "phi0_closed_form"));
        }
        return PiecewiseRule::from_grid(RuleKind::Max, eps, ms, phi, meta);
    }
    // φ₀ solves the identity where the symmetric term vanishes and the
    // window reaches 1
    let top = (1.0 - 2.0 * eps).max(eps);
    let target = quack_value(eps)?.consistency_prob;
    let phi = march_backward(
        eps,
        1.0,
        n,
        target,
        |_| 1.0,
        |m| tent_integral(0.0, 2.0 * m, eps),
        |k| {
            let m = ms[k];
            (m >= top).then(|| phi0_closed(m, eps))
        },
    )?;
    PiecewiseRule::from_grid(
        RuleKind::Max,
        eps,
        ms,
        phi,
        vec![SegmentMeta::new(0.0, top, "marched"), SegmentMeta::new(top, 1.0, "phi0_closed_form")],
    )
}

/// Sup change of the marched max rule when the grid is refined twofold.
pub fn max_rule_convergence(eps: f64, grid_n: usize) -> Result<f64> {
    let coarse = march_max_rule(eps, grid_n)?;
    let fine = march_max_rule(eps, 2 * grid_cells(eps, grid_n))?;
    Ok(coarse
        .grid()
        .map(|(m, p)| (p - fine.phi(m)).abs())
        .fold(0.0, f64::max))
}

/// The min rule, defined for `ε̄ < 1/4`.
pub fn build_min_rule(eps: f64, grid_n: usize) -> Result<PiecewiseRule> {
    check_eps(eps)?;
    if eps >= 0.25 {
        return Err(Error::domain(format!(
            "min rule construction requires epsilon_bar < 1/4, got {eps}"
        )));
    }
    min_rule(eps, grid_n)
}

/// The same march as [`build_min_rule`] run for `ε̄ ∈ [1/4, 1/2)`, flagged
/// as extrapolated.
pub fn build_min_rule_extrapolated(eps: f64, grid_n: usize) -> Result<PiecewiseRule> {
    check_eps(eps)?;
    if eps >= 0.5 {
        return Err(Error::domain("extrapolated min rule supports epsilon_bar < 1/2"));
    }
    let mut rule = min_rule(eps, grid_n)?;
    rule.extrapolated = eps >= 0.25;
    if rule.extrapolated {
        rule.segment_meta = vec![SegmentMeta::new(0.0, 1.0, "marched_extrapolated")];
    }
    Ok(rule)
}

fn min_rule(eps: f64, grid_n: usize) -> Result<PiecewiseRule> {
    if grid_n < 256 {
        return Err(Error::validation("grid_n must be at least 256"));
    }
    let n = grid_cells(eps, grid_n);
    let target = quack_value(eps)?.consistency_prob;
    let phi = march_forward(eps, n, target)?;
    PiecewiseRule::from_grid(
        RuleKind::Min,
        eps,
        uniform_nodes(n, 1.0),
        phi,
        vec![SegmentMeta::new(0.0, 1.0, "marched")],
    )
}

/// The `ε̄ = 1` continuous rule. The grid stores the pick probability
/// against message 0; evaluation uses both magnitudes.
pub fn eps1_rule(grid_n: usize) -> Result<PiecewiseRule> {
    let n = grid_n.max(256);
    let ms = uniform_nodes(n, 1.0);
    let phi = ms.iter().map(|&m| eps1_pick(0.0, m)).collect();
    PiecewiseRule::from_grid(
        RuleKind::ContinuousEps1,
        1.0,
        ms,
        phi,
        vec![SegmentMeta::new(0.0, 1.0, "continuous_eps1_closed_form")],
    )
}

/// Coin-flip tie-breaking, for comparison with the indifference rules.
pub fn uniform_rule(eps: f64) -> Result<PiecewiseRule> {
    check_eps_closed(eps)?;
    let n = grid_cells(eps, 256);
    PiecewiseRule::from_grid(
        RuleKind::Uniform,
        eps,
        uniform_nodes(n, 1.0),
        vec![0.5; n + 1],
        vec![SegmentMeta::new(0.0, 1.0, "constant")],
    )
}

/// Integral of `W(m,x)·wt(x)` over `[a,b]`, split at the tent kinks.
pub(crate) fn pair_weight_integral<W: Fn(f64) -> f64>(m: f64, a: f64, b: f64, eps: f64, wt: W) -> f64 {
    let kinks = [m, 2.0 * eps - m, m + 2.0 * eps, m - 2.0 * eps];
    gl_pieces(a, b, &kinks, 8, 8, |x| pair_weight(m, x, eps) * wt(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quack_value_examples() {
        let q = quack_value(0.5).unwrap();
        assert!((q.consistency_prob - 5.0 / 12.0).abs() < 1e-15);
        assert!((q.consistency_prob - 2.0 * q.per_identity_payoff).abs() < 1e-15);
        assert!((quack_value(1.0).unwrap().consistency_prob - 2.0 / 3.0).abs() < 1e-15);
        assert!(quack_value(0.0).is_err());
        assert!(quack_value(1.2).is_err());
        assert!(quack_value(1e-9).unwrap().consistency_prob < 1e-8);
    }

    #[test]
    fn zeta_examples() {
        for &e in &[0.1, 0.4, 0.8] {
            assert!((zeta(1.0, e) - (1.0 - e / 3.0)).abs() < 1e-12);
        }
        assert!((zeta(0.0, 0.5) - (0.5 - 0.5 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn continuous_rule_examples() {
        assert_eq!(continuous_rule_eps1(0.3, 0.3).unwrap(), 0.5);
        assert!((continuous_rule_eps1(0.0, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!((continuous_rule_eps1(0.5, 0.8).unwrap() - 0.58125).abs() < 1e-12);
        assert!(continuous_rule_eps1(0.8, 0.5).is_err());
    }

    #[test]
    fn closed_forms_join() {
        let e = 2.0 / 3.0;
        assert!((1.0 - psi2_closed(1.0 / 3.0, e) - 5.0 / 9.0).abs() < 1e-15);
        let t = 1.0 / 3.0;
        let expect = 1.0 - (1.0 / 9.0) * 1f64.exp() * (1f64.sin() + 1f64.cos());
        assert!((phi0_closed(t, t) - expect).abs() < 1e-15);
        assert!((expect - 0.5827).abs() < 1e-4);
        for &e in &[0.55, 0.7, 0.9] {
            let b1 = 2.0 * e - 1.0;
            assert!((psi1_closed(e, e) - (1.0 - phi0_closed(e, e))).abs() < 1e-12);
            assert!((psi1_closed(b1, e) - psi2_closed(b1, e)).abs() < 1e-9);
        }
    }

    #[test]
    fn max_rule_endpoints() {
        for &e in &[0.1, 1.0 / 3.0, 0.45, 0.5, 2.0 / 3.0, 1.0] {
            let r = build_max_rule(e, 4096).unwrap();
            assert!((r.phi(1.0) - (1.0 - e / 3.0)).abs() < 1e-9, "eps {e}");
            assert!((r.phi(0.0) - 0.5).abs() < 1e-4, "eps {e}: {}", r.phi(0.0));
        }
    }

    #[test]
    fn min_rule_start() {
        let r = build_min_rule(0.2, 4096).unwrap();
        assert!((r.phi(0.0) - (0.5 - 0.2 / 6.0)).abs() < 1e-12);
        assert!(build_min_rule(0.25, 4096).is_err());
        let x = build_min_rule_extrapolated(1.0 / 3.0, 4096).unwrap();
        assert!(x.extrapolated);
    }

    #[test]
    fn select_cases() {
        let r = build_max_rule(0.5, 512).unwrap();
        assert_eq!(select(&r, 0.1, 0.9, 0.2, 0.9, OffPath::Coin), Speaker::First);
        assert_eq!(select(&r, 0.4, 0.4, 0.3, 0.49, OffPath::Coin), Speaker::First);
        assert_eq!(select(&r, 0.4, 0.4, 0.3, 0.51, OffPath::Coin), Speaker::Second);
        let p1 = 1.0 - 0.5 / 3.0;
        assert_eq!(select(&r, 1.0, 0.0, 0.5, p1 - 1e-9, OffPath::Coin), Speaker::First);
        assert_eq!(select(&r, 1.0, 0.0, 0.5, p1 + 1e-9, OffPath::Coin), Speaker::Second);
        assert_eq!(select(&r, 1.0, -1.0, 0.0, 0.9, OffPath::FirstSpeaker), Speaker::First);
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        let r = build_max_rule(0.3, 512).unwrap();
        let direct = crate::numerics::simpson(0.0, 0.77, 20000, |x| r.psi(x));
        assert!((r.psi_antiderivative(0.77) - direct).abs() < 1e-8);
    }

    #[test]
    fn pick_integral_matches_quadrature() {
        let rules = [
            build_max_rule(0.3, 512).unwrap(),
            build_min_rule(0.2, 512).unwrap(),
            eps1_rule(512).unwrap(),
            uniform_rule(0.4).unwrap(),
        ];
        for r in &rules {
            for &(m, lo, hi) in &[(0.4f64, -0.7, 0.2), (-0.9, 0.1, 1.0), (0.0, -1.0, -0.3)] {
                let direct = gl_pieces(lo, hi, &[-m.abs(), 0.0, m.abs()], 400, 8, |x| r.pick(m, x));
                let got = r.pick_integral(m, lo, hi);
                assert!((got - direct).abs() < 1e-9, "{:?} {m} {lo} {hi}: {got} vs {direct}", r.kind);
            }
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let r = build_max_rule(0.37, 300).unwrap();
        let back = PiecewiseRule::from_json(&r.to_json().to_string()).unwrap();
        assert_eq!(back.values(), r.values());
        assert_eq!(back.nodes(), r.nodes());
        assert_eq!(back.phi(0.123456), r.phi(0.123456));
        assert!(PiecewiseRule::from_json(r#"{"kind":"max","epsilon_bar":0.5,"grid":[[0,0.5]],"segment_meta":[]}"#).is_err());
    }
}

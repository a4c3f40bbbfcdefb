//! Non-uniform signal noise: the quack's equilibrium density by fixed-point
//! iteration on the per-message payoffs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::DensityTable;
use crate::error::{Error, Result};
use crate::model::NoiseSpec;
use crate::numerics::{brent, gl_pieces};

/// Fixed-point scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSolver {
    /// Log-domain update `ln f += 2·damping·(P − P̄)/P̄`, with the step
    /// shrunk whenever the payoff spread grows.
    #[default]
    Multiplicative,
    /// Average of pure best responses.
    FictitiousPlay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseOptions {
    pub grid_n: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    pub solver: NoiseSolver,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        NoiseOptions {
            grid_n: 401,
            max_iter: 500,
            tol: 1e-4,
            damping: 0.5,
            solver: NoiseSolver::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseEquilibrium {
    pub noise: NoiseSpec,
    /// Quack density on a uniform grid of `[−1,1]`.
    pub f_q: DensityTable,
    /// Per-message quack payoffs at the grid nodes.
    pub payoffs: Vec<f64>,
    /// Mean quack payoff.
    pub payoff: f64,
    /// Spread of `payoffs`.
    pub residual: f64,
    pub iterations: usize,
    pub solver: NoiseSolver,
}

/// Expert first-order check: sign of `dΠ_E/dm′` against `sign(ω − m′)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocReport {
    pub checked: usize,
    pub violations: usize,
    /// `(ω, m′, dΠ_E/dm′)` for each violation.
    pub worst: Vec<(f64, f64, f64)>,
}

/// Judge cutoff between messages `lo < hi` when the quack's log density is
/// `lf`: the judge picks the speaker at `lo` iff the signal is below it.
fn cutoff_with<L: Fn(f64) -> f64>(noise: &NoiseSpec, lf: &L, lo: f64, hi: f64) -> f64 {
    match *noise {
        NoiseSpec::Gaussian { sigma } => {
            0.5 * (lo + hi) - sigma * sigma * (lf(lo) - lf(hi)) / (hi - lo)
        }
        NoiseSpec::Uniform { half_width: a } | NoiseSpec::Triangular { half_width: a } => {
            let (l, r) = (hi - a, lo + a);
            if l >= r {
                return 0.5 * (lo + hi);
            }
            let (fl, fh) = (lf(lo).exp(), lf(hi).exp());
            let gap = |s: f64| fh * noise.density(s - lo) - fl * noise.density(s - hi);
            if let NoiseSpec::Uniform { .. } = noise {
                // flat likelihoods: the judge only compares densities
                return if fh > fl { r } else if fh < fl { l } else { 0.5 * (lo + hi) };
            }
            brent(l, r, 1e-15, gap).unwrap_or(0.5 * (lo + hi))
        }
    }
}

struct Grid {
    xs: Vec<f64>,
    w: Vec<f64>,
    h: f64,
}

impl Grid {
    fn new(n: usize) -> Self {
        let h = 2.0 / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|k| if k == n - 1 { 1.0 } else { -1.0 + k as f64 * h }).collect();
        let mut w = vec![h; n];
        w[0] = h / 2.0;
        w[n - 1] = h / 2.0;
        Grid { xs, w, h }
    }

    fn interp(&self, vals: &[f64], x: f64) -> f64 {
        let n = self.xs.len();
        let t = ((x + 1.0) / self.h).clamp(0.0, (n - 1) as f64);
        let k = (t.floor() as usize).min(n - 2);
        let u = t - k as f64;
        vals[k] + u * (vals[k + 1] - vals[k])
    }
}

/// Per-node quack payoff against a truthful expert with uniform state.
fn payoffs(noise: &NoiseSpec, grid: &Grid, lf: &[f64]) -> Vec<f64> {
    let n = grid.xs.len();
    let lfi = |x: f64| grid.interp(lf, x);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let m = grid.xs[i];
            let mut acc = 0.0;
            for j in 0..n {
                let w = grid.xs[j];
                let v = if j > i {
                    noise.cdf(cutoff_with(noise, &lfi, m, w) - w)
                } else if j < i {
                    1.0 - noise.cdf(cutoff_with(noise, &lfi, w, m) - w)
                } else {
                    0.5
                };
                acc += grid.w[j] * v;
            }
            0.5 * acc
        })
        .collect()
}

fn normalize(grid: &Grid, lf: &mut [f64]) {
    let n = lf.len();
    for k in 0..n / 2 {
        let s = 0.5 * (lf[k] + lf[n - 1 - k]);
        lf[k] = s;
        lf[n - 1 - k] = s;
    }
    let top = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mass: f64 = lf.iter().zip(&grid.w).map(|(l, w)| w * (l - top).exp()).sum();
    let shift = top + mass.ln();
    for l in lf.iter_mut() {
        *l -= shift;
    }
}

fn spread(p: &[f64]) -> f64 {
    let (lo, hi) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo
}

pub fn solve_noise_equilibrium(
    noise: NoiseSpec,
    grid_n: usize,
    max_iter: usize,
    tol: f64,
) -> Result<NoiseEquilibrium> {
    solve_noise_equilibrium_with(noise, NoiseOptions { grid_n, max_iter, tol, ..Default::default() })
}

pub fn solve_noise_equilibrium_with(noise: NoiseSpec, opts: NoiseOptions) -> Result<NoiseEquilibrium> {
    noise.validate()?;
    if let NoiseSpec::Uniform { .. } = noise {
        return Err(Error::domain("uniform noise is the benchmark game; use the rule builders"));
    }
    if opts.grid_n < 11 || opts.grid_n % 2 == 0 {
        return Err(Error::domain("noise grid needs an odd number of at least 11 nodes"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::domain("damping must lie in (0,1]"));
    }
    let grid = Grid::new(opts.grid_n);
    let n = opts.grid_n;
    let mut lf = vec![0.0; n];
    normalize(&grid, &mut lf);
    let mut f: Vec<f64> = lf.iter().map(|l| l.exp()).collect();
    let mut iterations = 0;
    let mut p = payoffs(&noise, &grid, &lf);
    let mut residual = spread(&p);
    let mut step = 2.0 * opts.damping;
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, residual });
        }
        iterations += 1;
        match opts.solver {
            NoiseSolver::Multiplicative => {
                let mean = p.iter().sum::<f64>() / n as f64;
                for (l, v) in lf.iter_mut().zip(&p) {
                    *l += step * (v - mean) / mean;
                }
                normalize(&grid, &mut lf);
            }
            NoiseSolver::FictitiousPlay => {
                let best = p
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                    .unwrap_or(n / 2);
                let t = 1.0 / (iterations as f64 + 1.0);
                for (k, v) in f.iter_mut().enumerate() {
                    // symmetric point masses at ±m_best, spread over one cell
                    let hit = k == best || k == n - 1 - best;
                    let share = if best == n / 2 { 1.0 } else { 0.5 };
                    let mass = if hit { share / grid.w[k] } else { 0.0 };
                    *v = (1.0 - t) * *v + t * mass;
                }
                for (l, v) in lf.iter_mut().zip(&f) {
                    *l = v.max(1e-300).ln();
                }
                normalize(&grid, &mut lf);
            }
        }
        f = lf.iter().map(|l| l.exp()).collect();
        p = payoffs(&noise, &grid, &lf);
        let next = spread(&p);
        // back off when the update overshoots
        if next > residual {
            step = (0.7 * step).max(opts.damping / 8.0);
        }
        residual = next;
    }
    let density: Vec<f64> = lf.iter().map(|l| l.exp()).collect();
    let payoff = p.iter().sum::<f64>() / n as f64;
    let eq = NoiseEquilibrium {
        noise,
        f_q: DensityTable::new(grid.xs.clone(), density)?,
        payoffs: p,
        payoff,
        residual,
        iterations,
        solver: opts.solver,
    };
    if noise.full_support() && !eq.is_unimodal() {
        let k = eq.unimodality_break().unwrap_or(0);
        return Err(Error::construction(
            "quack density is not strictly unimodal",
            eq.f_q.xs[k],
            eq.f_q.density[k],
        ));
    }
    Ok(eq)
}

impl NoiseEquilibrium {
    /// Judge cutoff between two messages, in either order.
    pub fn cutoff(&self, m: f64, m2: f64) -> f64 {
        let (lo, hi) = if m <= m2 { (m, m2) } else { (m2, m) };
        let xs = &self.f_q.xs;
        let h = xs[1] - xs[0];
        let lf = |x: f64| {
            // log-linear between nodes, as in the solver
            let n = xs.len();
            let t = ((x + 1.0) / h).clamp(0.0, (n - 1) as f64);
            let k = (t.floor() as usize).min(n - 2);
            let u = t - k as f64;
            let (a, b) = (self.f_q.density[k].ln(), self.f_q.density[k + 1].ln());
            a + u * (b - a)
        };
        cutoff_with(&self.noise, &lf, lo, hi)
    }

    /// `|h(s−m)f(m′) − h(m′−s)f(m)|` at the cutoff, maximized over node pairs.
    pub fn judge_residual(&self, stride: usize) -> f64 {
        let xs = &self.f_q.xs;
        let mut worst: f64 = 0.0;
        for i in (0..xs.len()).step_by(stride.max(1)) {
            for j in (i + 1..xs.len()).step_by(stride.max(1)) {
                let (lo, hi) = (xs[i], xs[j]);
                let s = self.cutoff(lo, hi);
                let gap = self.noise.density(s - lo) * self.f_q.density[j]
                    - self.noise.density(hi - s) * self.f_q.density[i];
                if matches!(self.noise, NoiseSpec::Gaussian { .. })
                    || (s > hi - self.noise_reach() && s < lo + self.noise_reach())
                {
                    worst = worst.max(gap.abs());
                }
            }
        }
        worst
    }

    fn noise_reach(&self) -> f64 {
        match self.noise {
            NoiseSpec::Gaussian { .. } => f64::INFINITY,
            NoiseSpec::Uniform { half_width } | NoiseSpec::Triangular { half_width } => half_width,
        }
    }

    /// First index where the discrete differences change sign on the wrong
    /// side of the mode.
    fn unimodality_break(&self) -> Option<usize> {
        let d = &self.f_q.density;
        let mid = d.len() / 2;
        (0..mid).find(|&k| d[k + 1] <= d[k]).or_else(|| (mid..d.len() - 1).find(|&k| d[k + 1] >= d[k]))
    }

    /// Strictly increasing up to 0 and strictly decreasing after.
    pub fn is_unimodal(&self) -> bool {
        self.unimodality_break().is_none()
    }

    /// Expert payoff from sending `m2` at state `omega`.
    pub fn expert_payoff(&self, omega: f64, m2: f64) -> f64 {
        let noise = self.noise;
        let v = |m: f64| {
            let f = self.f_q.eval(m);
            if (m - m2).abs() < 1e-6 {
                return 0.5 * f;
            }
            let s = self.cutoff(m, m2);
            if m2 < m {
                f * noise.cdf(s - omega)
            } else {
                f * (1.0 - noise.cdf(s - omega))
            }
        };
        gl_pieces(-1.0, 1.0, &[m2], 64, 8, v)
    }

    /// Checks `sign(dΠ_E/dm′) = sign(ω − m′)` for `|ω − m′| ≥ min_gap` on an
    /// `n × n` grid of `(ω, m′)`.
    pub fn expert_foc_check(&self, n: usize, min_gap: f64) -> FocReport {
        let d = 1e-4;
        let pts: Vec<f64> = (0..n).map(|k| -0.95 + 1.9 * k as f64 / (n - 1) as f64).collect();
        let cases: Vec<(f64, f64)> = pts
            .iter()
            .flat_map(|&w| pts.iter().map(move |&m| (w, m)))
            .filter(|(w, m)| (w - m).abs() >= min_gap)
            .collect();
        let worst: Vec<(f64, f64, f64)> = cases
            .par_iter()
            .filter_map(|&(w, m)| {
                let slope = (self.expert_payoff(w, m + d) - self.expert_payoff(w, m - d)) / (2.0 * d);
                if slope * (w - m) > 0.0 {
                    None
                } else {
                    Some((w, m, slope))
                }
            })
            .collect();
        FocReport { checked: cases.len(), violations: worst.len(), worst }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_cutoff_is_midpoint_for_flat_density() {
        let noise = NoiseSpec::Gaussian { sigma: 0.1 };
        let s = cutoff_with(&noise, &|_| 0.0, -0.2, 0.6);
        assert!((s - 0.2).abs() < 1e-15);
    }

    #[test]
    fn triangular_cutoff_balances_likelihoods() {
        let noise = NoiseSpec::Triangular { half_width: 0.05 };
        let lf = |x: f64| if x > 0.0 { (0.5f64).ln() } else { 0.0 };
        let (lo, hi) = (-0.02, 0.03);
        let s = cutoff_with(&noise, &lf, lo, hi);
        let gap = 0.5 * noise.density(s - lo) - noise.density(s - hi);
        assert!(gap.abs() < 1e-12);
        assert_eq!(cutoff_with(&noise, &lf, -0.5, 0.5), 0.0);
    }
}

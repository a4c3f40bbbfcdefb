//! One speaker against an outside option of value `𝒰`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{consistency_probability, trapezoid_cdf, trapezoid_density, trapezoid_quantile};
use crate::numerics::{brent, gl_pieces};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneSpeakerRegime {
    LemonDropping,
    LemonDroppingMultiple,
    CherryPicking,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneSpeakerEquilibrium {
    pub q: f64,
    pub u: f64,
    pub epsilon_bar: f64,
    pub regime: OneSpeakerRegime,
    /// `(1−q)(1−𝒰)/(q𝒰)`.
    pub v: f64,
    /// Support bound in the lemon-dropping regimes.
    pub m_bar: Option<f64>,
    pub z: Option<f64>,
    /// `1 − z²`, kept apart because `z` rounds to 1 when `𝒱 ≪ ε̄`.
    pub z_complement: Option<f64>,
    /// End of the flat part of the density when cherry-picking.
    pub omega1: Option<f64>,
    /// Density level on the flat part.
    pub flat_density: f64,
    /// Quack's selection probability.
    pub pi: f64,
    /// `(m, f_q(m))` on `[−1, 1]`.
    pub f_q: Vec<(f64, f64)>,
    /// `(m, s(m))` on the nonnegative part of the support.
    pub cutoff_s: Vec<(f64, f64)>,
}

/// Table resolution for `f_q` and `s`.
pub const ONE_SPEAKER_TABLE: usize = 2001;

pub fn one_speaker_value(q: f64, u: f64) -> f64 {
    (1.0 - q) * (1.0 - u) / (q * u)
}

pub fn classify_one_speaker(v: f64, eps: f64) -> OneSpeakerRegime {
    if v < eps {
        OneSpeakerRegime::CherryPicking
    } else if v < eps / (1.0 - 2.0 * eps) {
        OneSpeakerRegime::LemonDropping
    } else {
        OneSpeakerRegime::LemonDroppingMultiple
    }
}

/// Root `z ∈ (0,1)` of `1/ε̄ − 1/𝒱 = 2z − 2 atanh(z)`, for `𝒱 < ε̄`.
pub fn solve_z(v: f64, eps: f64) -> Result<f64> {
    solve_atanh_z(v, eps).map(f64::tanh)
}

fn solve_atanh_z(v: f64, eps: f64) -> Result<f64> {
    let c = 1.0 / eps - 1.0 / v;
    if !(c < 0.0) {
        return Err(Error::domain("the z equation needs V < epsilon_bar"));
    }
    // in t = atanh z the right side is 2 tanh t − 2t, which is below −2t + 2
    let hi = -c / 2.0 + 2.0;
    let tol = 4.0 * f64::EPSILON * hi;
    brent(0.0, hi, tol, |t: f64| 2.0 * t.tanh() - 2.0 * t - c)
}

pub fn one_speaker_equilibrium(q: f64, u: f64, eps: f64) -> Result<OneSpeakerEquilibrium> {
    one_speaker_equilibrium_with(q, u, eps, None)
}

/// `m_bar` picks the equilibrium in the multiple regime; it must lie in
/// `[ε̄/𝒱, 1−2ε̄]` and defaults to `1−2ε̄`.
pub fn one_speaker_equilibrium_with(
    q: f64,
    u: f64,
    eps: f64,
    m_bar: Option<f64>,
) -> Result<OneSpeakerEquilibrium> {
    if !(q > 0.0 && q < 1.0 && u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("q and u must lie in (0,1), got {q}, {u}")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain(format!("epsilon_bar must lie in (0, 1/2), got {eps}")));
    }
    let v = one_speaker_value(q, u);
    let regime = classify_one_speaker(v, eps);
    let mut z_complement = None;
    let (m_bar, z, omega1, pi) = match regime {
        OneSpeakerRegime::CherryPicking => {
            let t = solve_atanh_z(v, eps)?;
            let z = t.tanh();
            // 1 − tanh² t = 4e^{−2t}/(1 + e^{−2t})²
            let e2 = (-2.0 * t).exp();
            let zc = 4.0 * e2 / (1.0 + e2).powi(2);
            z_complement = Some(zc);
            (None, Some(z), Some(1.0 - 2.0 * eps * z), zc * eps / 2.0)
        }
        OneSpeakerRegime::LemonDropping => {
            let mb = eps / v;
            (Some(mb), None, None, consistency_probability(mb, eps))
        }
        OneSpeakerRegime::LemonDroppingMultiple => {
            let (lo, hi) = (eps / v, 1.0 - 2.0 * eps);
            let mb = m_bar.unwrap_or(hi);
            if !(mb >= lo - 1e-15 && mb <= hi + 1e-15) {
                return Err(Error::domain(format!("m_bar must lie in [{lo}, {hi}], got {mb}")));
            }
            (Some(mb), None, None, eps)
        }
    };
    let flat_density = match regime {
        OneSpeakerRegime::CherryPicking => v / (2.0 * eps),
        _ => 0.5 / m_bar.unwrap(),
    };
    let mut eq = OneSpeakerEquilibrium {
        q,
        u,
        epsilon_bar: eps,
        regime,
        v,
        m_bar,
        z,
        z_complement,
        omega1,
        flat_density,
        pi,
        f_q: Vec::new(),
        cutoff_s: Vec::new(),
    };
    let n = ONE_SPEAKER_TABLE;
    let mut xs: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
    xs.extend(omega1.into_iter().chain(m_bar).flat_map(|k| [k, -k]));
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    eq.f_q = xs.iter().map(|&m| (m, eq.density(m))).collect();
    let top = eq.support_bound();
    eq.cutoff_s = xs
        .iter()
        .filter(|&&m| (0.0..=top).contains(&m))
        .map(|&m| (m, eq.cutoff(m)))
        .collect();
    Ok(eq)
}

impl OneSpeakerEquilibrium {
    pub fn support_bound(&self) -> f64 {
        self.m_bar.unwrap_or(1.0)
    }

    pub fn density(&self, m: f64) -> f64 {
        let a = m.abs();
        match self.regime {
            OneSpeakerRegime::CherryPicking => {
                let (zc, w1) = (self.z_complement.unwrap(), self.omega1.unwrap());
                if a > 1.0 {
                    0.0
                } else if a <= w1 {
                    self.flat_density
                } else {
                    let eps = self.epsilon_bar;
                    self.v / ((1.0 - a).powi(2) + 4.0 * eps * eps * zc).sqrt()
                }
            }
            _ => {
                if a <= self.m_bar.unwrap() {
                    self.flat_density
                } else {
                    0.0
                }
            }
        }
    }

    /// Total mass of the density, by quadrature.
    pub fn mass(&self) -> f64 {
        match (self.omega1, self.z_complement) {
            (Some(w1), Some(zc)) => {
                // the rising branch peaks at |m| = 1 with width 2ε̄√(1−z²), which
                // can be far below the spacing of floats near 1; integrate it in
                // x = 1 − |m| on a mesh graded toward x = 0
                let k2 = 4.0 * self.epsilon_bar * self.epsilon_bar * zc;
                let top = 1.0 - w1;
                let mut kinks = vec![];
                let mut d = top / 2.0;
                while d * d > k2 / 256.0 && d > f64::MIN_POSITIVE {
                    kinks.push(d);
                    d /= 4.0;
                }
                let rising = gl_pieces(0.0, top, &kinks, 4, 16, |x| self.v / (x * x + k2).sqrt());
                let flat = gl_pieces(0.0, w1, &[], 16, 16, |m| self.density(m));
                2.0 * (flat + rising)
            }
            _ => {
                let b = self.support_bound();
                2.0 * gl_pieces(0.0, b, &[], 16, 16, |m| self.density(m))
            }
        }
    }

    /// Signal cutoff for message `m ≥ 0`: the judge selects the speaker iff
    /// the signal exceeds it. On the rising branch this is
    /// `1 + ε̄ − 𝒱/f(m)`; elsewhere it is the commitment cutoff
    /// `H⁻¹(H(m+ε̄) − Π)`.
    pub fn cutoff(&self, m: f64) -> f64 {
        let a = m.abs();
        match self.omega1 {
            Some(w1) if a > w1 => self.cutoff_rising(a),
            _ => self.cutoff_commitment(a),
        }
    }

    pub fn cutoff_rising(&self, m: f64) -> f64 {
        1.0 + self.epsilon_bar - self.v / self.density(m)
    }

    pub fn cutoff_commitment(&self, m: f64) -> f64 {
        let eps = self.epsilon_bar;
        trapezoid_quantile(trapezoid_cdf(m.abs() + eps, eps) - self.pi, eps)
    }

    /// Posterior probability that the speaker is the expert given a
    /// consistent pair `(m, s)`.
    pub fn posterior_expert(&self, m: f64, s: f64) -> f64 {
        let eps = self.epsilon_bar;
        let honest = 0.5 * (1.0 - self.q) / (2.0 * eps);
        honest / (honest + self.q * self.density(m) * trapezoid_density(s, eps))
    }

    /// The quack's selection probability from message `m`,
    /// `∫_{s(m)}^{m+ε̄} P(s) ds`.
    pub fn selection_probability(&self, m: f64) -> f64 {
        let eps = self.epsilon_bar;
        let a = m.abs();
        let lo = self.cutoff(a).max(a - eps);
        gl_pieces(lo, a + eps, &[1.0 - eps], 4, 8, |s| trapezoid_density(s, eps))
    }

    /// `1 − 2ε̄√(1 − 2Π/ε̄)`, the flat-part end recovered from the payoff.
    pub fn omega1_from_pi(&self) -> f64 {
        let eps = self.epsilon_bar;
        1.0 - 2.0 * eps * (1.0 - 2.0 * self.pi / eps).sqrt()
    }
}

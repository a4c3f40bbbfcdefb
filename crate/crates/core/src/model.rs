//! Model primitives: the uniform-noise signal, consistency tests, priors,
//! noise laws and the game configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which payoff normalization a number is reported under.
///
/// `PerIdentity` is the probability that a given quack is selected.
/// `Doubled` is twice that, which for the uniform benchmark equals the
/// probability that the quack's message is consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    PerIdentity,
    Doubled,
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon_bar must lie in (0,1), got {eps}")))
    }
}

pub(crate) fn check_eps_closed(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon_bar must lie in (0,1], got {eps}")))
    }
}

/// Density of the judge's signal `s = ω + ε` with `ω ~ U[-1,1]`, `ε ~ U[-ε̄,ε̄]`.
pub fn signal_density(s: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(trapezoid_density(s, eps))
}

/// Cumulative distribution function of the signal.
pub fn signal_cdf(s: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(trapezoid_cdf(s, eps))
}

/// Trapezoid density without domain checks. Valid for `0 < eps <= 1`.
pub(crate) fn trapezoid_density(s: f64, eps: f64) -> f64 {
    let a = s.abs();
    if a >= 1.0 + eps {
        0.0
    } else if a >= 1.0 - eps {
        (1.0 + eps - a) / (4.0 * eps)
    } else {
        0.5
    }
}

pub(crate) fn trapezoid_cdf(s: f64, eps: f64) -> f64 {
    // upper tail mass beyond |s| on one side
    let tail = |a: f64| -> f64 {
        if a >= 1.0 + eps {
            0.0
        } else if a >= 1.0 - eps {
            (1.0 + eps - a).powi(2) / (8.0 * eps)
        } else {
            eps / 2.0 + (1.0 - eps - a) / 2.0
        }
    };
    if s >= 0.0 {
        1.0 - tail(s)
    } else {
        tail(-s)
    }
}

/// Inverse of the signal cdf on `(0,1)`.
pub(crate) fn trapezoid_quantile(p: f64, eps: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let lower = |q: f64| -> f64 {
        // q = mass below s for s <= 0
        let corner = eps / 2.0;
        if q <= corner {
            -1.0 - eps + (8.0 * eps * q).sqrt()
        } else {
            -(1.0 - eps) + 2.0 * (q - corner)
        }
    };
    if p <= 0.5 {
        lower(p)
    } else {
        -lower(1.0 - p)
    }
}

/// `|m − s| ≤ ε̄`, boundary included.
pub fn is_consistent(m: f64, s: f64, eps: f64) -> bool {
    (m - s).abs() <= eps
}

/// Probability that a fixed message is consistent when the state is uniform.
pub fn consistency_probability(m: f64, eps: f64) -> f64 {
    let over = (m.abs() - (1.0 - 2.0 * eps)).max(0.0);
    eps - over * over / (8.0 * eps)
}

/// Probability that both `m` and the true state `omega` are consistent with
/// the signal when the expert is truthful: `max(0, 1 − |m−ω|/(2ε̄))`.
#[inline]
pub fn both_consistent_weight(m: f64, omega: f64, eps: f64) -> f64 {
    tent(m - omega, eps)
}

#[inline]
pub(crate) fn tent(d: f64, eps: f64) -> f64 {
    (1.0 - d.abs() / (2.0 * eps)).max(0.0)
}

/// `∫_a^b tent(t) dt` for `0 <= a <= b`.
pub(crate) fn tent_integral(a: f64, b: f64, eps: f64) -> f64 {
    let f = |t: f64| {
        let t = t.min(2.0 * eps);
        t - t * t / (4.0 * eps)
    };
    f(b) - f(a)
}

/// Number of grid points used to tabulate a unimodal prior's log-density.
pub const PRIOR_GRID: usize = 4097;

/// A symmetric, log-concave state density on `[-1,1]`, tabulated as a
/// log-density with linear interpolation.
#[derive(Debug, Clone)]
pub struct UnimodalPrior {
    log_g: Vec<f64>,
    log_norm: f64,
    // cumulative unnormalized mass at grid nodes
    cum: Vec<f64>,
}

impl UnimodalPrior {
    /// Tabulate `log_density` (up to an additive constant) on the grid.
    pub fn from_log_fn<F: Fn(f64) -> f64>(log_density: F) -> Result<Self> {
        let n = PRIOR_GRID;
        let vals = (0..n).map(|k| log_density(Self::node(k))).collect();
        Self::from_log_table(vals)
    }

    /// Build from tabulated log-density values at the `PRIOR_GRID` nodes.
    pub fn from_log_table(log_g: Vec<f64>) -> Result<Self> {
        if log_g.len() != PRIOR_GRID {
            return Err(Error::validation(format!(
                "unimodal prior needs {PRIOR_GRID} log-density values, got {}",
                log_g.len()
            )));
        }
        if log_g.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("unimodal prior log-density must be finite"));
        }
        let n = log_g.len();
        for k in 0..n / 2 {
            let (a, b) = (log_g[k], log_g[n - 1 - k]);
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Err(Error::validation("unimodal prior must be symmetric about 0"));
            }
        }
        for k in 1..n - 1 {
            if log_g[k + 1] - 2.0 * log_g[k] + log_g[k - 1] > 1e-10 {
                return Err(Error::validation("unimodal prior must be log-concave"));
            }
        }
        let h = Self::step();
        let shift = log_g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut cum = Vec::with_capacity(n);
        cum.push(0.0);
        for k in 0..n - 1 {
            let c = cum[k] + cell_mass(log_g[k] - shift, log_g[k + 1] - shift, h);
            cum.push(c);
        }
        let total = cum[n - 1];
        let log_norm = shift + total.ln();
        let cum = cum.into_iter().map(|c| c / total).collect();
        Ok(UnimodalPrior { log_g, log_norm, cum })
    }

    fn step() -> f64 {
        2.0 / (PRIOR_GRID - 1) as f64
    }

    fn node(k: usize) -> f64 {
        -1.0 + k as f64 * Self::step()
    }

    fn locate(x: f64) -> (usize, f64) {
        let h = Self::step();
        let t = ((x + 1.0) / h).clamp(0.0, (PRIOR_GRID - 1) as f64);
        let k = (t.floor() as usize).min(PRIOR_GRID - 2);
        (k, x + 1.0 - k as f64 * h)
    }

    /// Log of the normalizing constant of the tabulated log-density.
    pub fn log_normalization(&self) -> f64 {
        self.log_norm
    }

    pub fn log_table(&self) -> &[f64] {
        &self.log_g
    }

    pub fn density(&self, x: f64) -> f64 {
        if x.abs() > 1.0 {
            return 0.0;
        }
        let (k, dx) = Self::locate(x);
        let h = Self::step();
        let lg = self.log_g[k] + (self.log_g[k + 1] - self.log_g[k]) * dx / h;
        (lg - self.log_norm).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let (k, dx) = Self::locate(x);
        let h = Self::step();
        let a = self.log_g[k] - self.log_norm;
        let b = (self.log_g[k + 1] - self.log_g[k]) / h;
        self.cum[k] + exp_linear_integral(a, b, dx)
    }

    /// Total mass of the interpolated density, which should be one.
    pub fn total_mass(&self) -> f64 {
        self.cum[PRIOR_GRID - 1]
    }
}

// ∫_0^len exp(a + b t) dt
fn exp_linear_integral(a: f64, b: f64, len: f64) -> f64 {
    let bl = b * len;
    if bl.abs() < 1e-8 {
        a.exp() * len * (1.0 + bl / 2.0)
    } else {
        a.exp() * bl.exp_m1() / b
    }
}

fn cell_mass(la: f64, lb: f64, h: f64) -> f64 {
    exp_linear_integral(la, (lb - la) / h, h)
}

/// State prior on `[-1,1]`.
#[derive(Debug, Clone)]
pub enum PriorSpec {
    Uniform,
    Unimodal(UnimodalPrior),
}

impl PriorSpec {
    /// Symmetric prior with log-density `−c ω²` (up to normalization).
    pub fn quadratic_log(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::validation("quadratic log-prior curvature must be >= 0"));
        }
        Ok(PriorSpec::Unimodal(UnimodalPrior::from_log_fn(|x| -c * x * x)?))
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            PriorSpec::Uniform => {
                if x.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            PriorSpec::Unimodal(p) => p.density(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PriorSpec::Uniform => ((x + 1.0) / 2.0).clamp(0.0, 1.0),
            PriorSpec::Unimodal(p) => p.cdf(x),
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, PriorSpec::Uniform)
    }

    /// Draw from the prior restricted to `[-a, a]`.
    ///
    /// Uses rejection from a uniform proposal; the envelope is the density
    /// at the mode, which is 0 for a symmetric unimodal prior.
    pub fn sample_truncated<R: rand::Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        use rand::RngExt;
        match self {
            PriorSpec::Uniform => a * (2.0 * rng.random::<f64>() - 1.0),
            PriorSpec::Unimodal(p) => {
                let top = p.density(0.0);
                loop {
                    let x = a * (2.0 * rng.random::<f64>() - 1.0);
                    if rng.random::<f64>() * top <= p.density(x) {
                        return x;
                    }
                }
            }
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_truncated(1.0, rng)
    }
}

/// Signal noise law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
    Triangular { half_width: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Uniform { half_width } => half_width > 0.0 && half_width <= 1.0,
            NoiseSpec::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            NoiseSpec::Triangular { half_width } => half_width > 0.0 && half_width.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid noise parameters {self:?}")))
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width } => {
                if x.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            NoiseSpec::Gaussian { sigma } => {
                let z = x / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            NoiseSpec::Triangular { half_width: a } => ((a - x.abs()) / (a * a)).max(0.0),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width } => ((x + half_width) / (2.0 * half_width)).clamp(0.0, 1.0),
            NoiseSpec::Gaussian { sigma } => {
                0.5 * statrs::function::erf::erfc(-x / (sigma * std::f64::consts::SQRT_2))
            }
            NoiseSpec::Triangular { half_width: a } => {
                if x <= -a {
                    0.0
                } else if x >= a {
                    1.0
                } else if x <= 0.0 {
                    (a + x).powi(2) / (2.0 * a * a)
                } else {
                    1.0 - (a - x).powi(2) / (2.0 * a * a)
                }
            }
        }
    }

    /// True for noise laws with full support on the real line.
    pub fn full_support(&self) -> bool {
        matches!(self, NoiseSpec::Gaussian { .. })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        use rand::RngExt;
        match *self {
            NoiseSpec::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            NoiseSpec::Gaussian { sigma } => {
                // Box-Muller; one draw per call keeps stream usage fixed
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random::<f64>();
                sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
            NoiseSpec::Triangular { half_width } => {
                half_width * (rng.random::<f64>() - rng.random::<f64>())
            }
        }
    }
}

/// Parameters of the one-speaker game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSpeakerParams {
    /// Prior probability that the speaker is a quack.
    pub q: f64,
    /// Judge's outside option.
    pub u: f64,
}

impl OneSpeakerParams {
    /// Expected gain from picking an expert relative to the outside option,
    /// `(1−q)(1−𝒰)/(q𝒰)`.
    pub fn v(&self) -> f64 {
        (1.0 - self.q) * (1.0 - self.u) / (self.q * self.u)
    }
}

/// All model parameters.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub epsilon_bar: f64,
    pub prior: PriorSpec,
    pub noise: NoiseSpec,
    /// Prior probability that speaker 1 is the expert.
    pub p1: f64,
    pub one_speaker: Option<OneSpeakerParams>,
}

impl GameConfig {
    /// Benchmark configuration: uniform prior and uniform noise.
    pub fn benchmark(eps: f64) -> Result<Self> {
        let cfg = GameConfig {
            epsilon_bar: eps,
            prior: PriorSpec::Uniform,
            noise: NoiseSpec::Uniform { half_width: eps },
            p1: 0.5,
            one_speaker: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `ε̄ = 1` is accepted because the continuous rule lives there.
    pub fn validate(&self) -> Result<()> {
        check_eps_closed(self.epsilon_bar)?;
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(Error::validation(format!("p1 must lie in (0,1), got {}", self.p1)));
        }
        self.noise.validate()?;
        if let NoiseSpec::Uniform { half_width } = self.noise {
            if (half_width - self.epsilon_bar).abs() > 1e-12 {
                return Err(Error::validation(
                    "uniform noise half-width must equal epsilon_bar",
                ));
            }
        }
        if let Some(os) = self.one_speaker {
            if !(os.q > 0.0 && os.q < 1.0 && os.u > 0.0 && os.u < 1.0) {
                return Err(Error::validation("one_speaker q and u must lie in (0,1)"));
            }
        }
        Ok(())
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PriorFile {
    Uniform,
    /// Log-density `−c ω²` up to normalization.
    QuadraticLog { c: f64 },
    /// Log-density tabulated on the 4097-point grid over `[-1,1]`.
    Unimodal { log_density: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigFile {
    epsilon_bar: f64,
    #[serde(default)]
    prior: Option<PriorFile>,
    #[serde(default)]
    noise: Option<NoiseSpec>,
    #[serde(default)]
    p1: Option<f64>,
    #[serde(default)]
    one_speaker: Option<OneSpeakerParams>,
}

impl GameConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ConfigFile = serde_json::from_str(text)
            .map_err(|e| Error::validation(format!("config: {e}")))?;
        let prior = match raw.prior.unwrap_or(PriorFile::Uniform) {
            PriorFile::Uniform => PriorSpec::Uniform,
            PriorFile::QuadraticLog { c } => PriorSpec::quadratic_log(c)?,
            PriorFile::Unimodal { log_density } => {
                PriorSpec::Unimodal(UnimodalPrior::from_log_table(log_density)?)
            }
        };
        let cfg = GameConfig {
            epsilon_bar: raw.epsilon_bar,
            prior,
            noise: raw.noise.unwrap_or(NoiseSpec::Uniform { half_width: raw.epsilon_bar }),
            p1: raw.p1.unwrap_or(0.5),
            one_speaker: raw.one_speaker,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let prior = match &self.prior {
            PriorSpec::Uniform => PriorFile::Uniform,
            PriorSpec::Unimodal(p) => PriorFile::Unimodal { log_density: p.log_table().to_vec() },
        };
        serde_json::to_value(ConfigFile {
            epsilon_bar: self.epsilon_bar,
            prior: Some(prior),
            noise: Some(self.noise),
            p1: Some(self.p1),
            one_speaker: self.one_speaker,
        })
        .expect("config serializes")
    }
}

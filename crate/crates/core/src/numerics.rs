//! Quadrature, root finding and interpolation helpers.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use argmin::core::{CostFunction, Executor};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use gauss_quad::legendre::GaussLegendre;
use roots::{find_root_brent, SimpleConvergency};

use crate::error::{Error, Result};

fn rule(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(n).expect("positive degree"))
        .as_node_weight_pairs()
        .to_vec()
}

/// Gauss-Legendre nodes and weights on `[-1,1]`, cached for the degrees used here.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static G3: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static G4: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static G8: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static G16: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    match n {
        3 => G3.get_or_init(|| rule(3)),
        4 => G4.get_or_init(|| rule(4)),
        8 => G8.get_or_init(|| rule(8)),
        16 => G16.get_or_init(|| rule(16)),
        _ => panic!("unsupported Gauss-Legendre degree {n}"),
    }
}

/// Gauss-Legendre of degree `n` on `[a,b]`.
#[inline]
pub fn gl<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = 0.0;
    for &(x, w) in gauss_legendre(n) {
        acc += w * f(c + r * x);
    }
    acc * r
}

/// Sorted, deduplicated breakpoints of `[a,b]` including the ends.
pub fn breakpoints(a: f64, b: f64, interior: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = interior.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * x.abs().max(y.abs()));
    pts
}

/// Composite Gauss-Legendre over `[a,b]` split at `kinks`, each piece cut
/// into `panels` equal panels.
pub fn gl_pieces<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    kinks: &[f64],
    panels: usize,
    n: usize,
    mut f: F,
) -> f64 {
    let pts = breakpoints(a, b, kinks);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let lo = w[0] + k as f64 * h;
            acc += gl(lo, lo + h, n, &mut f);
        }
    }
    acc
}

/// Composite Simpson over `[a,b]` split at `kinks`, with at least
/// `min_panels` panels distributed proportionally to piece length.
/// Piece endpoints are evaluated as one-sided limits, so a jump exactly at a
/// kink does not leak into the neighbouring piece.
pub fn simpson_pieces<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    kinks: &[f64],
    min_panels: usize,
    mut f: F,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let pts = breakpoints(a, b, kinks);
    let total = b - a;
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let mut n = ((min_panels as f64 * len / total).ceil() as usize).max(2);
        if n % 2 == 1 {
            n += 1;
        }
        let nudge = 1e-12 * len;
        let (lo, hi) = (w[0], w[1]);
        acc += simpson(lo, hi, n, |x| {
            if x == lo {
                f(lo + nudge)
            } else if x == hi {
                f(hi - nudge)
            } else {
                f(x)
            }
        });
    }
    acc
}

/// Composite Simpson with `n` (even) panels.
pub fn simpson<F: FnMut(f64) -> f64>(a: f64, b: f64, n: usize, mut f: F) -> f64 {
    debug_assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let x = a + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// Bracketed root of `f` on `[a,b]` (Brent's method).
pub fn brent<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, f: F) -> Result<f64> {
    let mut conv = SimpleConvergency { eps: tol, max_iter: 500 };
    find_root_brent(a, b, f, &mut conv).map_err(|e| Error::RootFinding(format!("{e:?}")))
}

/// Bisection for a monotone function with a sign change on `[a,b]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut a: f64, mut b: f64, tol: f64, mut f: F) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= tol {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

struct Negated<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Negated<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, p: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok(-(self.0)(*p))
    }
}

/// Maximize a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(lo: f64, hi: f64, tol: f64, f: F) -> Result<f64> {
    let solver = GoldenSectionSearch::new(lo, hi)
        .and_then(|s| s.with_tolerance(tol))
        .map_err(|e| Error::RootFinding(e.to_string()))?;
    let res = Executor::new(Negated(f), solver)
        .configure(|state| state.param(0.5 * (lo + hi)).max_iters(500))
        .run()
        .map_err(|e| Error::RootFinding(e.to_string()))?;
    res.state
        .best_param
        .ok_or_else(|| Error::RootFinding("golden-section search returned no point".into()))
}

/// Piecewise-linear table on strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        Table { xs, ys }
    }

    /// Index `k` with `xs[k] <= x < xs[k+1]`, clamped to the table.
    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(n - 2)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.cell(x);
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.ys[k] + t * (self.ys[k + 1] - self.ys[k])
    }

    /// Trapezoid integral of the interpolant over its whole range.
    pub fn integral(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }
}

/// Lagrange basis weights at `x` for nodes `xs`.
#[inline]
pub fn lagrange_weights(xs: &[f64], x: f64, out: &mut [f64]) {
    for (l, o) in out.iter_mut().enumerate().take(xs.len()) {
        let mut w = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if j != l {
                w *= (x - xj) / (xs[l] - xj);
            }
        }
        *o = w;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_exact_for_polynomials() {
        let v = gl(0.0, 2.0, 3, |x| x.powi(5));
        assert!((v - 64.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn pieces_handle_kinks() {
        let v = gl_pieces(-1.0, 1.0, &[0.0], 1, 4, |x| x.abs());
        assert!((v - 1.0).abs() < 1e-14);
        let s = simpson_pieces(-1.0, 1.0, &[0.3], 64, |x| (x - 0.3).abs());
        assert!((s - (1.3f64.powi(2) + 0.7f64.powi(2)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn brent_and_golden() {
        let r = brent(0.0, 2.0, 1e-14, |x| x * x - 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let m = golden_max(0.0, 3.0, 1e-10, |x| -(x - 1.2).powi(2)).unwrap();
        assert!((m - 1.2).abs() < 1e-6);
        let b = bisect(0.0, 2.0, 1e-14, |x| x * x * x - 1.0);
        assert!((b - 1.0).abs() < 1e-13);
    }

    #[test]
    fn table_interpolates() {
        let t = Table::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]);
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(2.0), 1.0);
        assert_eq!(t.eval(5.0), 0.0);
        assert!((t.integral() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn lagrange_reproduces_cubic() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let mut w = [0.0; 4];
        lagrange_weights(&xs, 1.7, &mut w);
        let v: f64 = xs.iter().zip(&w).map(|(x, w)| w * x * x * x).sum();
        assert!((v - 1.7f64.powi(3)).abs() < 1e-12);
    }
}

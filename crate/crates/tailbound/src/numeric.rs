//! Small numerical helpers: adaptive quadrature, least squares, grids and
//! Monte Carlo summary statistics.

use serde::Serialize;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Integral of `g` against the standard normal density, adaptively on a
/// truncated interval wide enough for integrands growing like `|x|^p`.
/// The interval is pre-split into panels: a single adaptive pass over the
/// whole range can terminate spuriously on even integrands that vanish at
/// the endpoints and the center.
pub fn gauss_integral<G: Fn(f64) -> f64 + Copy>(g: G, poly_order: f64, tol: f64) -> f64 {
    let cut = 2.0 * (2.0 * poly_order.abs() + 1.0).sqrt() + 12.0;
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let f = |x: f64| g(x) * density(x);
    let panels = 24;
    let width = 2.0 * cut / panels as f64;
    (0..panels)
        .map(|i| {
            let a = -cut + i as f64 * width;
            adaptive_simpson(&f, a, a + width, tol / panels as f64)
        })
        .sum()
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub n: usize,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 3 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let var = rss / (nf - 2.0).max(1.0);
    Some(LineFit { slope, intercept, slope_se: (var / sxx).sqrt(), n })
}

/// `n` log-spaced points on `[lo, hi]`, `lo > 0`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo stability check for `E X^p`: the running mean over growing
/// prefixes must settle. This is a heuristic (finite samples cannot certify
/// moment finiteness) and is reported as such.
#[derive(Debug, Clone, Serialize)]
pub struct MomentStability {
    pub p: f64,
    /// Running means at 1/4, 1/2, 3/4 and all of the sample.
    pub running: [f64; 4],
    /// Largest relative step between consecutive running means.
    pub max_rel_step: f64,
    pub stable: bool,
}

/// Threshold on the relative drift of running p-th moments.
pub const MOMENT_STABILITY_TOL: f64 = 0.25;

pub fn moment_stability(values: &[f64], p: f64) -> MomentStability {
    let n = values.len();
    let mut running = [f64::NAN; 4];
    for (i, frac) in [0.25, 0.5, 0.75, 1.0].iter().enumerate() {
        let k = ((n as f64 * frac) as usize).max(1).min(n);
        running[i] = values[..k].iter().map(|v| v.abs().powf(p)).sum::<f64>() / k as f64;
    }
    let mut max_rel_step: f64 = 0.0;
    for w in running.windows(2) {
        let denom = w[1].abs().max(1e-300);
        max_rel_step = max_rel_step.max((w[1] - w[0]).abs() / denom);
    }
    MomentStability {
        p,
        running,
        max_rel_step,
        stable: max_rel_step <= MOMENT_STABILITY_TOL && running[3].is_finite(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(&|x| x * x * x + 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - (4.0 + 4.0)).abs() < 1e-10);
    }

    #[test]
    fn gaussian_moments() {
        // E eta^2 = 1, E eta^4 = 3.
        assert!((gauss_integral(|x| x * x, 2.0, 1e-12) - 1.0).abs() < 1e-9);
        assert!((gauss_integral(|x| x.powi(4), 4.0, 1e-12) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = ols(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.slope_se < 1e-10);
    }

    #[test]
    fn stability_flags_heavy_moment() {
        // X = Pareto(1): E X^0.5 finite, E X^1.5 infinite.
        let mut vals: Vec<f64> = (1..200_000u64)
            .map(|i| {
                let u = (i as f64 + 0.5) / 200_000.0;
                1.0 / u
            })
            .collect();
        // deterministic shuffle-ish interleave so prefixes look random
        vals.sort_by(|a, b| {
            (a * 7919.0).fract().partial_cmp(&(b * 7919.0).fract()).unwrap()
        });
        assert!(moment_stability(&vals, 0.5).stable);
        assert!(!moment_stability(&vals, 1.5).stable);
    }
}

//! Small numerical helpers shared across modules.

use libm::erfc;

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * INV_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * INV_SQRT_2)
}

/// Mass of the standard normal law on `[a, b)`.
///
/// Picks the tail that avoids cancellation.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

/// `Ψ(-x) = φ(x) - x (1 - Φ(x))` for `x ≥ 0`: the integrated lower tail
/// `∫_{-∞}^{-x} Φ(t) dt`. Small and positive, so second differences keep
/// their relative accuracy.
pub fn integrated_lower_tail(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    (normal_pdf(x) - x * normal_sf(x)).max(0.0)
}

/// `∫_{t_lo}^{t_hi} Φ` where `t_hi − t_lo = gap > 0`, using
/// `∫_{-∞}^t Φ = max(t, 0) + Ψ(-|t|)` so that no large terms cancel.
fn integrated_cdf_difference(t_hi: f64, t_lo: f64, gap: f64) -> f64 {
    if t_lo >= 0.0 {
        gap + integrated_lower_tail(t_hi) - integrated_lower_tail(t_lo)
    } else if t_hi <= 0.0 {
        integrated_lower_tail(-t_hi) - integrated_lower_tail(-t_lo)
    } else {
        t_hi + integrated_lower_tail(t_hi) - integrated_lower_tail(-t_lo)
    }
}

/// Mass on `[a, b)` of `Y + ε Z` with `Y` uniform on `[lo, lo + w)` and `Z`
/// standard normal; `w = 0` is a point source.
///
/// Evaluated through the CDF left of the source centre and through the
/// survival function right of it.
pub fn smoothed_interval_mass(a: f64, b: f64, lo: f64, w: f64, eps: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if w == 0.0 {
        return normal_mass((a - lo) / eps, (b - lo) / eps);
    }
    let hi = lo + w;
    let gap = w / eps;
    let scale = eps / w;
    if 0.5 * (a + b) <= lo + 0.5 * w {
        let cdf = |x: f64| scale * integrated_cdf_difference((x - lo) / eps, (x - hi) / eps, gap);
        (cdf(b) - cdf(a)).max(0.0)
    } else {
        let sf = |x: f64| scale * integrated_cdf_difference((hi - x) / eps, (lo - x) / eps, gap);
        (sf(a) - sf(b)).max(0.0)
    }
}

/// Half-width `R` (in standard deviations) such that the two-sided Gaussian
/// tail beyond `R` is below `tol`.
pub fn gaussian_tail_radius(tol: f64) -> f64 {
    let tol = tol.clamp(1e-300, 0.5);
    let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 2.0 * normal_sf(mid) < tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Ordinary least squares `y ≈ slope * x + intercept`, with the coefficient
/// of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept, r_squared }
}

/// Componentwise floor with the half-open convention, returning the cube
/// index and the fractional part in `[0, 1)`.
pub fn split_point(x: &[f64], cube: &mut [i64], frac: &mut [f64]) {
    for ((xi, ci), fi) in x.iter().zip(cube.iter_mut()).zip(frac.iter_mut()) {
        let (c, f) = split_scalar(*xi);
        *ci = c;
        *fi = f;
    }
}

#[inline]
pub fn split_scalar(x: f64) -> (i64, f64) {
    let n = x.floor();
    let mut f = x - n;
    let mut c = n as i64;
    // x slightly below an integer can round to a fractional part of exactly 1
    if f >= 1.0 {
        f = 0.0;
        c += 1;
    }
    (c, f)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_mass_is_symmetric_and_total() {
        let m = normal_mass(-1.0, 1.0);
        assert!((m - 0.682_689_492_137_085_9).abs() < 1e-14, "{m:e}");
        assert!((normal_mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert!((normal_mass(2.0, 3.0) - normal_mass(-3.0, -2.0)).abs() < 1e-17);
    }

    #[test]
    fn tail_radius_bounds_the_tail() {
        let r = gaussian_tail_radius(1e-12);
        assert!(2.0 * normal_sf(r) < 1e-12);
        assert!(2.0 * normal_sf(r - 0.01) >= 1e-12);
    }

    #[test]
    fn integrated_tail_matches_quadrature() {
        // ∫_{-∞}^{-x} Φ(t) dt by the trapezoid rule on a long interval
        let x = 0.7;
        let (a, b, n) = (-12.0, -x, 200_000);
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (normal_cdf(a) + normal_cdf(b));
        for i in 1..n {
            s += normal_cdf(a + i as f64 * h);
        }
        assert!((s * h - integrated_lower_tail(x)).abs() < 1e-9);
    }

    #[test]
    fn smoothed_mass_matches_quadrature() {
        let (lo, w, eps) = (0.3, 0.02, 0.05);
        for (a, b) in [(0.0, 0.25), (0.25, 0.31), (0.31, 0.33), (0.4, 0.7), (-1.0, 2.0)] {
            let n = 20_000;
            let mut q = 0.0;
            for i in 0..n {
                let y = lo + (i as f64 + 0.5) / n as f64 * w;
                q += normal_mass((a - y) / eps, (b - y) / eps);
            }
            q /= n as f64;
            let m = smoothed_interval_mass(a, b, lo, w, eps);
            assert!((m - q).abs() < 1e-9, "[{a},{b}): {m} vs {q}");
        }
        assert!((smoothed_interval_mass(-10.0, 10.0, lo, w, eps) - 1.0).abs() < 1e-15);
        assert_eq!(smoothed_interval_mass(0.0, 0.1, 0.05, 0.0, 0.1), normal_mass(-0.5, 0.5));
    }

    #[test]
    fn split_handles_negative_rounding() {
        let (c, f) = split_scalar(-1e-18);
        assert_eq!(c, 0);
        assert_eq!(f, 0.0);
        let (c, f) = split_scalar(-0.25);
        assert_eq!((c, f), (-1, 0.75));
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }
}

//! Distribution functions needed by the Welch/Games-Howell tests.
//!
//! The F and t tails go through the regularized incomplete beta function
//! (continued fraction, modified Lentz). The studentized range tail is a double
//! integral: an outer integral over the scaled chi factor `s = sqrt(chi2_df / df)`
//! (integrated in `u = ln s`) and an inner integral giving the probability that
//! the range of `k` standard normals stays below `q * s`. Both levels use
//! adaptively bisected Gauss-Legendre panels.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::sync::OnceLock;

use crate::error::{Error, Result};

const GL_ORDER: usize = 10;
const MAX_DEPTH: u32 = 40;

/// Gauss-Legendre nodes and weights on [-1, 1], computed once.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn gl_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Integrates `f` over `[a, b]` by recursively halving Gauss-Legendre panels
/// until a panel agrees with the sum of its halves to within `tol`.
fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, panels: usize) -> Result<f64> {
    fn refine(
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> std::result::Result<f64, (f64, f64)> {
        let mid = 0.5 * (a + b);
        let left = gl_panel(f, a, mid);
        let right = gl_panel(f, mid, b);
        let err = (left + right - whole).abs();
        if err <= tol {
            return Ok(left + right);
        }
        if depth >= MAX_DEPTH {
            return Err((a, err));
        }
        let l = refine(f, a, mid, left, 0.5 * tol, depth + 1)?;
        let r = refine(f, mid, b, right, 0.5 * tol, depth + 1)?;
        Ok(l + r)
    }

    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + width * i as f64;
        let hi = if i + 1 == panels { b } else { lo + width };
        let whole = gl_panel(&mut f, lo, hi);
        total += refine(&mut f, lo, hi, whole, tol / panels as f64, 0).map_err(|(at, err)| {
            Error::Convergence(format!(
                "quadrature did not reach tolerance {tol:e} near x = {at} (panel error {err:e})"
            ))
        })?;
    }
    Ok(total)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln Γ(z) - [(z - ½) ln z - z + ½ ln 2π]`, the Stirling series remainder.
fn stirling_error(z: f64) -> f64 {
    if z < 15.0 {
        return ln_gamma(z) - ((z - 0.5) * z.ln() - z + 0.5 * LN_2PI);
    }
    let z2 = 1.0 / (z * z);
    (1.0 / 12.0
        - z2 * (1.0 / 360.0 - z2 * (1.0 / 1260.0 - z2 * (1.0 / 1680.0 - z2 / 1188.0))))
        / z
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `a ln(x (a+b) / a)` where `d = x (a+b) - a` is passed separately so the
/// value near the mode goes through `ln_1p`.
fn scaled_log(a: f64, x: f64, d: f64, a_plus_b: f64) -> f64 {
    let r = d / a;
    if r.abs() < 0.5 {
        a * r.ln_1p()
    } else {
        a * (x * a_plus_b / a).ln()
    }
}

/// `ln[x^a y^b / B(a, b)]`, accurate for large shape parameters where the
/// plain log-gamma difference would lose digits.
fn ln_beta_kernel(a: f64, b: f64, x: f64, y: f64) -> f64 {
    let s = a + b;
    let d = x * b - y * a;
    scaled_log(a, x, d, s) + scaled_log(b, y, -d, s) + 0.5 * (a * b / s).ln()
        - 0.5 * LN_2PI
        - stirling_error(a)
        - stirling_error(b)
        + stirling_error(s)
}

/// Regularized incomplete beta `I_x(a, b)` with `y = 1 - x` supplied by the
/// caller so it can be formed without cancellation.
pub fn inc_beta(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Invalid(format!(
            "incomplete beta domain: a={a}, b={b}, x={x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_cf(b, a, y, x)?)
    } else {
        beta_cf(a, b, x, y)
    }
}

fn beta_cf(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let ln_front = ln_beta_kernel(a, b, x, y);
    let front = ln_front.exp() / a;

    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(front * h);
        }
    }
    Err(Error::Convergence(format!(
        "incomplete beta continued fraction (a={a}, b={b}, x={x})"
    )))
}

/// `P(F > x)` for the Fisher F distribution with `(df1, df2)` degrees of freedom.
pub fn f_upper_tail(x: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1 > 0.0 && df2 > 0.0) || !df1.is_finite() || !df2.is_finite() {
        return Err(Error::Invalid(format!(
            "F distribution needs positive finite degrees of freedom, got ({df1}, {df2})"
        )));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Invalid(format!("F statistic must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let denom = df2 + df1 * x;
    inc_beta(0.5 * df2, 0.5 * df1, df2 / denom, df1 * x / denom)
}

/// Two-sided `P(|T| > |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> Result<f64> {
    if df.is_nan() || df <= 0.0 || t.is_nan() {
        return Err(Error::Invalid(format!("t distribution: t={t}, df={df}")));
    }
    let t2 = t * t;
    if t2.is_infinite() {
        return Ok(0.0);
    }
    let denom = df + t2;
    inc_beta(0.5 * df, 0.5, df / denom, t2 / denom)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Phi(z) - Phi(z - w)` without cancellation in either tail.
fn normal_band(z: f64, w: f64) -> f64 {
    let lo = z - w;
    if lo >= 0.0 {
        normal_cdf(-lo) - normal_cdf(-z)
    } else {
        normal_cdf(z) - normal_cdf(lo)
    }
}

const Z_LIMIT: f64 = 8.5;

/// `P(range of k iid N(0,1) > w)`.
fn normal_range_tail(w: f64, k: u32) -> Result<f64> {
    if w <= 0.0 {
        return Ok(1.0);
    }
    let km1 = (k - 1) as i32;
    let inner = integrate(
        |z| normal_pdf(z) * normal_band(z, w).powi(km1),
        -Z_LIMIT,
        Z_LIMIT,
        1e-13,
        4,
    )?;
    Ok((1.0 - k as f64 * inner).clamp(0.0, 1.0))
}

/// Degrees of freedom above which the chi factor is treated as the constant 1.
const DF_INFINITE: f64 = 1e7;
/// Outer integration stops where the chi-factor density falls below `e^-LOG_CUTOFF`
/// of its peak.
const LOG_CUTOFF: f64 = 46.0;

/// Upper tail `P(Q > q)` of the studentized range distribution for `k` groups
/// and `df` degrees of freedom. Absolute error is below 1e-9 for the ranges
/// exercised by the tests (k <= 20, df >= 1).
pub fn studentized_range_upper_tail(q: f64, k: u32, df: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Invalid(format!("studentized range needs k >= 2, got {k}")));
    }
    if df.is_nan() || df <= 0.0 {
        return Err(Error::Invalid(format!("studentized range needs df > 0, got {df}")));
    }
    if q.is_nan() || q < 0.0 {
        return Err(Error::Invalid(format!("studentized range statistic must be >= 0, got {q}")));
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    if q.is_infinite() {
        return Ok(0.0);
    }
    if df > DF_INFINITE {
        return normal_range_tail(q, k);
    }

    // density of u = ln s, s = sqrt(chi2_df / df), relative to its peak at u = 0:
    // exp(df * u - df * (e^{2u} - 1) / 2)
    let half = 0.5 * df;
    let log_c = half * df.ln() - ln_gamma(half) - (half - 1.0) * LN_2;
    let log_peak = log_c - half;
    let rel = |u: f64| df * u - half * (2.0 * u).exp_m1();
    let u_lo = solve_monotone(rel, -(LOG_CUTOFF / df) - 1.0, 0.0, -LOG_CUTOFF);
    let u_hi = solve_monotone(rel, 0.0, (LOG_CUTOFF / df).sqrt() + 1e-3, -LOG_CUTOFF);

    let mut failure = None;
    let tail = integrate(
        |u| {
            let density = (log_peak + rel(u)).exp();
            if density == 0.0 {
                return 0.0;
            }
            match normal_range_tail(q * u.exp(), k) {
                Ok(t) => density * t,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        u_lo,
        u_hi,
        1e-11,
        ((u_hi - u_lo) / 0.75).ceil().clamp(2.0, 64.0) as usize,
    );
    if let Some(e) = failure {
        return Err(Error::Convergence(format!(
            "studentized range tail (q={q}, k={k}, df={df}): {e}"
        )));
    }
    let tail = tail.map_err(|e| {
        Error::Convergence(format!("studentized range tail (q={q}, k={k}, df={df}): {e}"))
    })?;
    Ok(tail.clamp(0.0, 1.0))
}

/// Bisection for `f(x) = target` on `[lo, hi]` where `f` is monotone.
fn solve_monotone(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let increasing = f(hi) > f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Critical value `q` with `P(Q > q) = alpha`, by Brent's method on a bracket
/// grown from `[0, 4]`. The returned value is within 1e-10 of the root.
pub fn studentized_range_quantile(alpha: f64, k: u32, df: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let f = |q: f64| studentized_range_upper_tail(q, k, df).map(|p| p - alpha);
    let (mut lo, mut hi) = (0.0, 4.0);
    let mut f_hi = f(hi)?;
    while f_hi > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Convergence(format!(
                "could not bracket studentized range quantile (alpha={alpha}, k={k}, df={df})"
            )));
        }
        f_hi = f(hi)?;
    }
    let f_lo = f(lo)?;
    brent(f, lo, hi, f_lo, f_hi, 1e-11).map_err(|e| match e {
        Error::Convergence(msg) => Error::Convergence(format!(
            "studentized range quantile (alpha={alpha}, k={k}, df={df}): {msg}"
        )),
        other => other,
    })
}

fn brent(
    f: impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> Result<f64> {
    if fa * fb > 0.0 {
        return Err(Error::Convergence("root is not bracketed".into()));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Err(Error::Convergence(format!(
        "Brent iteration limit reached near {b} (f = {fb:e})"
    )))
}

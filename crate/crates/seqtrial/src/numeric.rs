//! Shared numerical routines: normal distribution helpers, adaptive
//! Gauss-Kronrod quadrature, and bracketed root finding.

use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() * INV_SQRT_2PI
}

/// Standard normal distribution function, via erfc for tail accuracy.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

// 15-point Kronrod rule with embedded 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let (fl, fr) = if x == 0.0 {
            let v = f(c);
            (v, 0.0)
        } else {
            (f(c - h * x), f(c + h * x))
        };
        kronrod += wk * (fl + fr);
        if i % 2 == 1 {
            gauss += WG[i / 2] * (fl + fr);
        } else if x == 0.0 {
            gauss += WG[3] * fl;
        }
    }
    (h * kronrod, h * (kronrod - gauss).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let (val, err) = gk15(f, a, b);
        if err <= tol || !val.is_finite() {
            if !val.is_finite() {
                return Err(Error::Quadrature {
                    at: 0.5 * (a + b),
                    reason: "non-finite integrand".into(),
                });
            }
            return Ok(val);
        }
        if depth >= 50 {
            return Err(Error::Quadrature {
                at: 0.5 * (a + b),
                reason: format!("max subdivision depth reached (err {err:.3e})"),
            });
        }
        let mid = 0.5 * (a + b);
        // Floor the child tolerance at machine scale so integrable endpoint
        // singularities terminate instead of exhausting the depth budget.
        let child_tol = (tol / 2.0).max(1e-16);
        Ok(recurse(f, a, mid, child_tol, depth + 1)?
            + recurse(f, mid, b, child_tol, depth + 1)?)
    }
    recurse(&f, a, b, tol, 0)
}

/// Find a root of `f` in `[lo, hi]` by bisection, expanding the bracket if the
/// endpoints do not straddle a sign change.
///
/// `x_tol` bounds the bracket width at exit; `f_tol` allows early exit when
/// the residual is small.
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    f_tol: f64,
) -> Result<f64> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    let mut expansions = 0;
    while flo * fhi > 0.0 {
        if expansions >= 60 {
            return Err(Error::RootSearch(format!(
                "no sign change in bracket [{lo}, {hi}] (f = {flo:.3e}, {fhi:.3e})"
            )));
        }
        let width = hi - lo;
        if flo.abs() < fhi.abs() {
            lo -= width;
            flo = f(lo);
        } else {
            hi += width;
            fhi = f(hi);
        }
        expansions += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid.abs() <= f_tol || hi - lo <= x_tol {
            return Ok(mid);
        }
        if flo * fmid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pairwise (cascade) summation; the result does not depend on how the input
/// was produced by concurrent workers, only on its order, and the error grows
/// like O(log n) rather than O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

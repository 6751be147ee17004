//! Normal distribution functions, a one-dimensional Nelder-Mead minimizer,
//! and Tukey-biweight robust location/scale.

use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Tukey biweight tuning constant (95% efficiency at the normal).
pub const TUKEY_C: f64 = 4.685;
/// Consistency factor turning the MAD into a normal-scale estimate.
pub const MAD_SCALE: f64 = 1.4826;
const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 200;

/// Standard normal CDF.
///
/// Evaluated through `erfc` on the tail side so that small tail
/// probabilities keep full relative precision.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - 0.5 * libm::erfc(x / SQRT_2)
    } else {
        0.5 * libm::erfc(-x / SQRT_2)
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Log density of `N(0, variance)` at `x`.
pub fn normal_log_pdf(x: f64, variance: f64) -> f64 {
    -0.5 * x * x / variance - 0.5 * variance.ln() - LN_SQRT_2PI
}

/// Inverse of [`std_normal_cdf`].
///
/// Acklam's rational approximation (relative error ~1e-9) polished by one
/// Newton step against the CDF.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let x0 = acklam(p);
    let err = std_normal_cdf(x0) - p;
    Ok(x0 - err / std_normal_pdf(x0))
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    if p < P_LOW {
        tail(p)
    } else if p > 1.0 - P_LOW {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimResult {
    pub argmin: f64,
    pub min_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes a scalar function with a two-point Nelder-Mead simplex.
///
/// Reflection, expansion, contraction and shrink coefficients are
/// 1, 2, 0.5 and 0.5. The run stops once the spread of function values
/// across the simplex falls below `tol` and the two vertices have nearly
/// met; the second test keeps a simplex straddling the minimum
/// symmetrically from stopping early.
pub fn nelder_mead_minimize<F>(objective: F, init: f64, tol: f64, max_iter: usize) -> Result<OptimResult>
where
    F: Fn(f64) -> f64,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;
    const X_TOL: f64 = 1e-8;

    let f0 = objective(init);
    if !init.is_finite() || !f0.is_finite() {
        return Err(Error::input(format!(
            "objective is not finite at the initial point {init}"
        )));
    }
    let step = if init.abs() > 1e-3 { 0.05 * init.abs() } else { 0.00025 };
    let x1 = init + step;
    let f1 = objective(x1);
    let (mut best, mut worst) = if f1 < f0 { ((x1, f1), (init, f0)) } else { ((init, f0), (x1, f1)) };
    let eval = |x: f64| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let settled = |best: (f64, f64), worst: (f64, f64)| {
        (worst.1 - best.1).abs() < tol && (worst.0 - best.0).abs() <= X_TOL * (1.0 + best.0.abs())
    };
    for iter in 0..max_iter {
        if settled(best, worst) {
            return Ok(OptimResult {
                argmin: best.0,
                min_value: best.1,
                iterations: iter,
                converged: true,
            });
        }
        let centroid = best.0;
        let xr = centroid + REFLECT * (centroid - worst.0);
        let fr = eval(xr);
        if fr < best.1 {
            let xe = centroid + EXPAND * (xr - centroid);
            let fe = eval(xe);
            worst = best;
            best = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        // In one dimension the reflected point is never "between" best and
        // second-worst, so fall through to contraction.
        let (xc, fc) = if fr < worst.1 {
            let xc = centroid + CONTRACT * (xr - centroid);
            (xc, eval(xc))
        } else {
            let xc = centroid + CONTRACT * (worst.0 - centroid);
            (xc, eval(xc))
        };
        if fc < worst.1.min(fr) {
            if fc < best.1 {
                worst = best;
                best = (xc, fc);
            } else {
                worst = (xc, fc);
            }
        } else {
            let xs = best.0 + SHRINK * (worst.0 - best.0);
            let fs = eval(xs);
            if fs < best.1 {
                worst = best;
                best = (xs, fs);
            } else {
                worst = (xs, fs);
            }
        }
    }
    Ok(OptimResult {
        argmin: best.0,
        min_value: best.1,
        iterations: max_iter,
        converged: settled(best, worst),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustLocationScale {
    pub location: f64,
    pub scale: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mad_scale(values: &[f64], center: f64) -> f64 {
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    MAD_SCALE * median(&dev)
}

/// Intercept-only M-estimation with Tukey's biweight, fitted by IRLS.
///
/// The scale is `1.4826 * MAD` of the residuals and is re-estimated on every
/// iteration. Iteration starts at the median and stops when the location
/// moves by less than 1e-8.
pub fn robust_intercept_scale(z: &[f64]) -> Result<RobustLocationScale> {
    if z.len() < 3 {
        return Err(Error::input(format!(
            "robust location/scale needs at least 3 values, got {}",
            z.len()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite value {bad} in robust fit")));
    }
    if z.iter().all(|&v| v == z[0]) {
        return Ok(RobustLocationScale {
            location: z[0],
            scale: 0.0,
        });
    }

    let mut location = median(z);
    for _ in 0..IRLS_MAX_ITER {
        let scale = mad_scale(z, location);
        if scale == 0.0 {
            break;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &v in z {
            let u = (v - location) / (TUKEY_C * scale);
            if u.abs() < 1.0 {
                let w = (1.0 - u * u).powi(2);
                num += w * v;
                den += w;
            }
        }
        if den == 0.0 {
            break;
        }
        let next = num / den;
        let moved = (next - location).abs();
        location = next;
        if moved < IRLS_TOL {
            break;
        }
    }
    Ok(RobustLocationScale {
        location,
        scale: mad_scale(z, location),
    })
}

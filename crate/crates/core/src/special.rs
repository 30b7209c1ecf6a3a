//! Special functions for p-values: the complementary error function, the
//! regularized incomplete gamma functions and the Kolmogorov distribution.

use std::f64::consts::PI;

const EPS: f64 = 1e-17;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// `erfc(x)`.
///
/// A positive-term series for `erf` below 2.5 and a Lentz continued fraction
/// above it. Relative accuracy is close to machine precision until the result
/// underflows (x ~ 26.5).
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        -erf(-x)
    } else if x < 2.5 {
        erf_series(x)
    } else {
        1.0 - erfc_continued_fraction(x)
    }
}

// erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (1*3*...*(2n+1))
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..MAX_ITER {
        term *= 2.0 * x2 / (2.0 * n as f64 + 1.0);
        sum += term;
        if term <= sum * EPS {
            break;
        }
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

// erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
fn erfc_continued_fraction(x: f64) -> f64 {
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..MAX_ITER {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x * x).exp() / (f * PI.sqrt())
}

// Stirling correction ln G(a) - [(a - 1/2) ln a - a + ln(2 pi)/2], a >= 10
fn stirling_correction(a: f64) -> f64 {
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / a;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut sum = 0.0;
    for c in C {
        sum += c * pow;
        pow *= inv2;
    }
    sum
}

/// `ln Gamma(a)` for `a > 0`.
pub fn ln_gamma(a: f64) -> f64 {
    assert!(a > 0.0, "ln_gamma needs a > 0, got {a}");
    if a < 10.0 {
        // shift up: G(a) = G(a + k) / (a (a+1) ... (a+k-1))
        let mut prod = 1.0;
        let mut z = a;
        while z < 10.0 {
            prod *= z;
            z += 1.0;
        }
        return ln_gamma(z) - prod.ln();
    }
    (a - 0.5) * a.ln() - a + 0.5 * (2.0 * PI).ln() + stirling_correction(a)
}

// ln(1 + u) - u, accurate for small |u|
fn log1pmx(u: f64) -> f64 {
    if u.abs() < 0.5 {
        let mut pow = u * u;
        let mut sum = 0.0;
        let mut k = 2.0;
        for _ in 0..MAX_ITER {
            let term = pow / k;
            if k as i32 % 2 == 0 {
                sum -= term;
            } else {
                sum += term;
            }
            if term.abs() <= sum.abs() * EPS {
                break;
            }
            pow *= u;
            k += 1.0;
        }
        sum
    } else {
        u.ln_1p() - u
    }
}

// x^a e^{-x} / Gamma(a)
fn gamma_prefactor(a: f64, x: f64) -> f64 {
    if a >= 10.0 {
        let u = (x - a) / a;
        (a / (2.0 * PI)).sqrt() * (a * log1pmx(u) - stirling_correction(a)).exp()
    } else {
        (a * x.ln() - x - ln_gamma(a)).exp()
    }
}

// sum_n x^n / (a (a+1) ... (a+n)), so P(a, x) = prefactor * series
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() <= sum.abs() * EPS {
            break;
        }
    }
    sum
}

// Lentz evaluation of 1/(x+1-a- 1(1-a)/(x+3-a- 2(2-a)/(x+5-a- ...)))
fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized upper incomplete gamma `Q(a, x) = Gamma(a, x) / Gamma(a)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q needs a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - gamma_prefactor(a, x) * lower_series(a, x)).max(0.0)
    } else {
        gamma_prefactor(a, x) * upper_fraction(a, x)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p needs a > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_prefactor(a, x) * lower_series(a, x)
    } else {
        (1.0 - gamma_prefactor(a, x) * upper_fraction(a, x)).max(0.0)
    }
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    gamma_q(dof / 2.0, statistic.max(0.0) / 2.0).clamp(0.0, 1.0)
}

/// Two-sided standard normal tail `P(|Z| >= |z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form, converges fast for small lambda
        let y = -PI * PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            sum += (j * j * y).exp();
        }
        (1.0 - (2.0 * PI).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-20 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `P(N > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

pub fn norm_cdf(x: f64) -> f64 {
    norm_sf(-x)
}

/// `(n−1)!!` for even `n`, i.e. the `n`-th standard normal moment.
pub fn normal_moment(n: u32) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    (1..n).step_by(2).map(f64::from).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * f64::from(n - j) / f64::from(j + 1))
}

/// `E[U_1^p]` for `U` uniform on the unit sphere of `R^d`.
pub fn sphere_coord_moment(d: usize, p: u32) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let mut m = normal_moment(p);
    for l in 0..p / 2 {
        m /= d as f64 + 2.0 * f64::from(l);
    }
    m
}

/// Log volume of the `d`-dimensional ball of radius `r`.
pub fn ln_ball_volume(d: usize, r: f64) -> f64 {
    let d = d as f64;
    0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0) + d * r.ln()
}

/// `E[γ^{-j}]` for `γ ~ Γ(shape, rate)`, infinite when `j ≥ shape`.
pub fn gamma_inverse_moment(shape: f64, rate: f64, j: f64) -> f64 {
    if j >= shape {
        return f64::INFINITY;
    }
    (j * rate.ln() + ln_gamma(shape - j) - ln_gamma(shape)).exp()
}

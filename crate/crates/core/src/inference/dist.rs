use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

pub fn qnorm(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn pnorm(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn qchisq(p: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").inverse_cdf(p)
}

/// Upper tail `P(X > x)`.
pub fn pchisq_upper(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").sf(x)
}

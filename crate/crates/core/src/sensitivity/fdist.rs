use statrs::function::beta::beta_reg;

/// CDF of the F distribution with `d1`, `d2` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let t = d1 * x / (d1 * x + d2);
    beta_reg(d1 / 2.0, d2 / 2.0, t)
}

//! Special functions used by the fading series and its validation.
//!
//! The Gamma function comes from `statrs`; the regularized upper incomplete
//! gamma for integer shape and the Gauss hypergeometric series are local.

pub use statrs::function::gamma::ln_gamma;

/// Regularized upper incomplete gamma `Q(n, x) = Γ(n, x) / Γ(n)` for a
/// positive integer `n`, i.e. the probability that a Poisson(x) count is
/// below `n`.
pub fn gamma_q_int(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    // Above the mode the terms grow first; sum in log space then.
    if x > 700.0 {
        let mut acc = f64::NEG_INFINITY;
        for k in 0..n {
            let lt = k as f64 * x.ln() - x - ln_gamma(k as f64 + 1.0);
            acc = log_add(acc, lt);
        }
        return acc.exp().min(1.0);
    }
    let mut term = (-x).exp();
    let mut sum = term;
    for k in 1..n {
        term *= x / k as f64;
        sum += term;
    }
    sum.min(1.0)
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Rising factorial (Pochhammer symbol) `(x)_k`.
pub fn rising_factorial(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (x + i as f64))
}

/// Gauss hypergeometric function `₂F₁(a, b; c; z)` by direct power series,
/// valid for `|z| < 1`. Returns `None` if the series does not settle within
/// the iteration budget.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Option<f64> {
    if z.abs() >= 1.0 {
        return None;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..10_000 {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return Some(sum);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_ur;

    #[test]
    fn integer_q_matches_statrs() {
        for &n in &[1usize, 2, 3, 7, 20, 60] {
            for &x in &[0.01, 0.5, 1.0, 4.0, 15.0, 80.0] {
                let ours = gamma_q_int(n, x);
                let theirs = gamma_ur(n as f64, x);
                assert!(
                    (ours - theirs).abs() <= 1e-12 + 1e-10 * theirs,
                    "n={n} x={x}: {ours} vs {theirs}"
                );
            }
        }
    }

    #[test]
    fn q_edges() {
        assert_eq!(gamma_q_int(3, 0.0), 1.0);
        assert_eq!(gamma_q_int(0, 2.0), 0.0);
        assert!(gamma_q_int(5, 1000.0) < 1e-300);
    }

    #[test]
    fn hyp2f1_known_values() {
        // 2F1(1,1;2;z) = -ln(1-z)/z
        let z = 0.3;
        let v = hyp2f1(1.0, 1.0, 2.0, z).unwrap();
        assert!((v - (-(1.0f64 - z).ln() / z)).abs() < 1e-14);
        // 2F1(a,b;b;z) = (1-z)^-a
        let v = hyp2f1(2.5, 0.7, 0.7, 0.2).unwrap();
        assert!((v - 0.8f64.powf(-2.5)).abs() < 1e-13);
        assert!(hyp2f1(1.0, 1.0, 1.0, 1.0).is_none());
    }

    #[test]
    fn rising() {
        assert_eq!(rising_factorial(3.0, 0), 1.0);
        assert_eq!(rising_factorial(3.0, 3), 60.0);
    }
}

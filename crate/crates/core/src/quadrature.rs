//! Gauss-Legendre rules and Legendre polynomial evaluation.

use std::f64::consts::PI;

/// `(P_k(x), P_k'(x))` for `k = 0..=deg`.
pub fn legendre_all(deg: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; deg + 1];
    let mut dp = vec![0.0; deg + 1];
    p[0] = 1.0;
    if deg >= 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 1..deg {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    (p, dp)
}

/// Nodes and weights of the `q`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    let qf = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            if q == 1 {
                p1 = t;
                p0 = 1.0;
            } else {
                for k in 1..q {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
            }
            // p1 = P_q(t), p0 = P_{q-1}(t)
            dp = qf * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[q - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    if q == 1 {
        return (vec![0.0], vec![2.0]);
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(q: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(q);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for q in 1..12 {
            let (x, w) = gauss_legendre(q);
            for deg in 0..2 * q {
                let got: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((got - exact).abs() < 1e-13, "q={q} deg={deg}");
            }
        }
    }

    #[test]
    fn legendre_values() {
        let (p, dp) = legendre_all(3, 0.5);
        assert!((p[2] - (-0.125)).abs() < 1e-15);
        assert!((p[3] - (-0.4375)).abs() < 1e-15);
        assert!((dp[3] - 0.375).abs() < 1e-14);
    }

    #[test]
    fn mapped_rule() {
        let (x, w) = gauss_legendre_on(10, 0.0, 3.0);
        let got: f64 = x.iter().zip(&w).map(|(t, v)| v * t.exp()).sum();
        assert!((got - (3f64.exp() - 1.0)).abs() < 1e-10);
    }
}

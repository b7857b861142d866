//! Integer-order Bessel functions J_n and K_n for positive real arguments.

/// J_n(x) for n ≥ 0 by Miller's backward recurrence, normalized with
/// J_0 + 2ΣJ_{2k} = 1.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 1 { -v } else { v };
    }
    if x < 1e-3 {
        return j_series(n, x);
    }
    miller(n, x)[1]
}

/// (J_n(x), J'_n(x)) from a single recurrence pass.
pub fn bessel_j_and_prime(n: u32, x: f64) -> (f64, f64) {
    if x < 1e-3 || n == 0 {
        return (bessel_j(n, x), bessel_j_prime(n, x));
    }
    let [lo, mid, hi] = miller(n, x);
    (mid, 0.5 * (lo - hi))
}

/// Normalized [J_{n-1}, J_n, J_{n+1}] for x > 0 (J_{-1} reported as 0).
fn miller(n: u32, x: f64) -> [f64; 3] {
    let top = (n as f64 + 1.0).max(x);
    let mut m = (top + 20.0 + (50.0 * top).sqrt()) as u32;
    m += m % 2;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut out = [0.0f64; 3];
    for k in (1..=m).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur now holds J_{k-1} (unnormalized)
        let order = k - 1;
        if order + 1 >= n && order <= n + 1 {
            out[(order + 1 - n) as usize] = cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in &mut out {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    out.map(|v| v / norm)
}

/// Power series for small arguments.
fn j_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    for k in 1..30 {
        term *= -half * half / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// dJ_n/dx.
pub fn bessel_j_prime(n: u32, x: f64) -> f64 {
    if n == 0 {
        -bessel_j(1, x)
    } else {
        0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
    }
}

/// e^x·(K_0(x), K_1(x)) from the integral
/// K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(νt) dt, by the trapezoid rule (which
/// converges geometrically for this analytic, rapidly decaying integrand).
fn k_scaled_01(x: f64) -> (f64, f64) {
    let h = 0.05;
    let (mut s0, mut s1) = (0.5, 0.5);
    let mut t = 0.0f64;
    loop {
        t += h;
        let e = (-x * (t.cosh() - 1.0)).exp();
        let f1 = e * t.cosh();
        s0 += e;
        s1 += f1;
        if f1 < 1e-18 * s0 && x * (t.cosh() - 1.0) > 40.0 {
            break;
        }
    }
    (s0 * h, s1 * h)
}

/// e^x·[K_0 … K_{n_max}](x) by upward recurrence.
fn k_scaled_upto(n_max: u32, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "K_n requires a positive argument");
    let (k0, k1) = k_scaled_01(x);
    let mut out = vec![k0, k1];
    for j in 1..n_max {
        let j = j as usize;
        out.push(out[j - 1] + 2.0 * j as f64 / x * out[j]);
    }
    out.truncate(n_max as usize + 1);
    out
}

/// e^x·K_n(x) for n ≥ 0 and x > 0.
pub fn bessel_k_scaled(n: u32, x: f64) -> f64 {
    k_scaled_upto(n, x)[n as usize]
}

/// K_n(x) for n ≥ 0 and x > 0.
pub fn bessel_k(n: u32, x: f64) -> f64 {
    bessel_k_scaled(n, x) * (-x).exp()
}

/// dK_n/dx.
pub fn bessel_k_prime(n: u32, x: f64) -> f64 {
    if n == 0 {
        -bessel_k(1, x)
    } else {
        -0.5 * (bessel_k(n - 1, x) + bessel_k(n + 1, x))
    }
}

/// K'_n(x)/K_n(x), free of under/overflow.
pub fn bessel_k_log_derivative(n: u32, x: f64) -> f64 {
    let k = k_scaled_upto(n + 1, x);
    let n = n as usize;
    if n == 0 {
        -k[1] / k[0]
    } else {
        -0.5 * (k[n - 1] + k[n + 1]) / k[n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn j_matches_reference_values() {
        let cases = [
            (0, 0.5, 0.938469807240813),
            (1, 3.7, 0.053833987745461595),
            (2, 7.5, -0.23027341052579028),
            (5, 1.2, 0.000610104923748968),
            (0, 12.3, 0.11079795030758546),
            (3, 0.01, 2.083320312532557e-08),
            (8, 10.0, 0.31785412684385733),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x);
            assert!(rel(got, want) < 1e-12, "J_{n}({x}) = {got}, want {want}");
        }
        assert!(bessel_j(0, 2.404825557695773).abs() < 1e-15);
    }

    #[test]
    fn k_matches_reference_values() {
        let cases = [
            (0, 0.001, 7.023688800562382),
            (0, 0.5, 0.9244190712276656),
            (1, 1.7, 0.2093624882040825),
            (2, 3.0, 0.06151045847174204),
            (4, 0.3, 5881.729656577575),
            (1, 25.0, 3.5327780731999333e-12),
            (0, 60.0, 1.4138978405591078e-27),
            (6, 9.0, 0.00032349537610766317),
        ];
        for (n, x, want) in cases {
            let got = bessel_k(n, x);
            assert!(rel(got, want) < 1e-12, "K_{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for n in 0..4 {
            for &x in &[0.7, 2.3, 5.1] {
                let fd = (bessel_j(n, x + h) - bessel_j(n, x - h)) / (2.0 * h);
                assert!((bessel_j_prime(n, x) - fd).abs() < 1e-9);
                let (j, jp) = bessel_j_and_prime(n, x);
                assert!(rel(j, bessel_j(n, x)) < 1e-14 && (jp - bessel_j_prime(n, x)).abs() < 1e-14);
                let fd = (bessel_k(n, x + h) - bessel_k(n, x - h)) / (2.0 * h);
                assert!((bessel_k_prime(n, x) - fd).abs() < 1e-8 * fd.abs().max(1.0));
                let ld = bessel_k_prime(n, x) / bessel_k(n, x);
                assert!(rel(bessel_k_log_derivative(n, x), ld) < 1e-13);
            }
        }
    }

    #[test]
    fn recurrence_of_j() {
        // J_{n-1} + J_{n+1} = (2n/x) J_n
        for n in 1..10 {
            for &x in &[0.3, 1.9, 6.2, 11.0] {
                let lhs = bessel_j(n - 1, x) + bessel_j(n + 1, x);
                let rhs = 2.0 * n as f64 / x * bessel_j(n, x);
                assert!((lhs - rhs).abs() < 1e-14);
            }
        }
    }
}

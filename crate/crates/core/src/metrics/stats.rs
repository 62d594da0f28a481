use crate::error::{Error, Result};

/// Welch's unequal-variance t-test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Welch {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Both samples have zero variance; `t` and `p` are set by convention.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<Welch> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::TooFewSamples(a.len().min(b.len())));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            Welch { t: 0.0, df, p: 1.0, degenerate: true }
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            Welch { t, df, p: 0.0, degenerate: true }
        });
    }
    let t = (ma - mb) / libm::sqrt(se2);
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Ok(Welch { t, df, p: 2.0 * student_t_sf(t.abs(), df), degenerate: false })
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom, for `t >= 0`.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
}

/// `I_x(a, b)` by the continued fraction, using the symmetry relation on the slowly converging side.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.0];
        let w = welch_t_test(&a, &a).unwrap();
        assert_eq!((w.t, w.p), (0.0, 1.0));
        assert!(!w.degenerate);
    }

    #[test]
    fn constant_samples() {
        let w = welch_t_test(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!(w.degenerate && w.p == 1.0 && w.t == 0.0);
        let w = welch_t_test(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(w.degenerate && w.p == 0.0 && w.t == f64::NEG_INFINITY);
        assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(Error::TooFewSamples(1))));
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(3.0, 1.0, 0.6) - 0.216).abs() < 1e-14);
        // t with one degree of freedom is Cauchy: P(T > 1) = 1/4
        assert!((student_t_sf(1.0, 1.0) - 0.25).abs() < 1e-14);
    }
}

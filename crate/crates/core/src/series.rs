//! Truncated Taylor series arithmetic.
//!
//! A [`Series`] holds the normalized Taylor coefficients `c_k = f^(k)(x0) / k!`
//! of a function up to a fixed order. Arithmetic on series propagates exact
//! derivatives through compositions, which is how the expression evaluator
//! and the cutoff functions deliver transverse jets of any order without
//! finite differences.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    c: Vec<f64>,
}

impl Series {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Series { c }
    }

    /// The identity function expanded about `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut s = Series::constant(x0, order);
        if order > 0 {
            s.c[1] = 1.0;
        }
        s
    }

    pub fn zero(order: usize) -> Self {
        Series::constant(0.0, order)
    }

    pub fn from_coefficients(c: Vec<f64>) -> Self {
        assert!(!c.is_empty());
        Series { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// Derivatives `f^(k)(x0)` for `k = 0..=order`.
    pub fn derivatives(&self) -> Vec<f64> {
        let mut fact = 1.0;
        self.c
            .iter()
            .enumerate()
            .map(|(k, &ck)| {
                if k > 0 {
                    fact *= k as f64;
                }
                ck * fact
            })
            .collect()
    }

    pub fn scale(&self, a: f64) -> Series {
        Series { c: self.c.iter().map(|x| a * x).collect() }
    }

    pub fn add_scalar(&self, a: f64) -> Series {
        let mut s = self.clone();
        s.c[0] += a;
        s
    }

    pub fn recip(&self) -> Series {
        Series::constant(1.0, self.order()).div(self)
    }

    pub fn div(&self, rhs: &Series) -> Series {
        let n = self.c.len();
        let b0 = rhs.c[0];
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc -= rhs.c[j] * out[k - j];
            }
            out[k] = acc / b0;
        }
        Series { c: out }
    }

    pub fn exp(&self) -> Series {
        let n = self.c.len();
        let mut out = vec![0.0; n];
        out[0] = self.c[0].exp();
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.c[j] * out[k - j];
            }
            out[k] = acc / k as f64;
        }
        Series { c: out }
    }

    pub fn ln(&self) -> Series {
        let n = self.c.len();
        let a0 = self.c[0];
        let mut out = vec![0.0; n];
        out[0] = a0.ln();
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * out[j] * self.c[k - j];
            }
            out[k] = (self.c[k] - acc / k as f64) / a0;
        }
        Series { c: out }
    }

    /// Returns `(sin, cos)` of the series.
    pub fn sin_cos(&self) -> (Series, Series) {
        let n = self.c.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..n {
            let mut acc_s = 0.0;
            let mut acc_c = 0.0;
            for j in 1..=k {
                let ja = j as f64 * self.c[j];
                acc_s += ja * c[k - j];
                acc_c += ja * s[k - j];
            }
            s[k] = acc_s / k as f64;
            c[k] = -acc_c / k as f64;
        }
        (Series { c: s }, Series { c })
    }

    pub fn powi(&self, n: i32) -> Series {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut result = Series::constant(1.0, self.order());
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        result
    }

    pub fn powf(&self, p: f64) -> Series {
        if p.fract() == 0.0 && p.abs() < 64.0 {
            return self.powi(p as i32);
        }
        self.ln().scale(p).exp()
    }

    pub fn sqrt(&self) -> Series {
        self.powf(0.5)
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        Series { c: self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        Series { c: self.c.iter().zip(&rhs.c).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        let n = self.c.len();
        let mut out = vec![0.0; n];
        for (i, &a) in self.c.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for j in 0..n - i {
                out[i + j] += a * rhs.c[j];
            }
        }
        Series { c: out }
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(-1.0)
    }
}

/// `exp(1 - 1/(1 - z^2))` for `|z| < 1`, zero elsewhere; peak value 1 at `z = 0`.
pub fn bump_series(z: &Series) -> Series {
    let order = z.order();
    let z0 = z.value();
    if z0.abs() >= 1.0 {
        return Series::zero(order);
    }
    let one_minus = (&Series::constant(1.0, order) - &(z * z)).recip();
    (&Series::constant(1.0, order) - &one_minus).exp()
}

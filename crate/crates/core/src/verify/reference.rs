//! Closed-form references for the Klein–Gordon characteristic problem
//! `(4 d_u d_v + q) phi = 0`, `phi(0, v) = f(v)`.

use std::sync::Arc;

use crate::geometry::Interval;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `J_0(sqrt(q u s)) = sum_k (-q u s / 4)^k / (k!)^2`, the Riemann function of
/// `4 d_u d_v + q` (for `q u s < 0` this is `I_0`).
pub fn klein_gordon_kernel(q: f64, u: f64, s: f64) -> f64 {
    let z = -0.25 * q * u * s;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= z / (k * k) as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `phi(u, v) = int_{-inf}^v K(u, v - w) f'(w) dw` for `u >= 0` and
/// `-int_v^inf K(u, v - w) f'(w) dw` for `u <= 0`.
#[derive(Clone)]
pub struct KleinGordonReference {
    pub q: f64,
    pub support: Interval,
    fprime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    panels: usize,
}

impl std::fmt::Debug for KleinGordonReference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KleinGordonReference").field("q", &self.q).field("support", &self.support).finish()
    }
}

impl KleinGordonReference {
    pub fn new<F>(q: f64, support: Interval, fprime: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        KleinGordonReference { q, support, fprime: Arc::new(fprime), panels: 64 }
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = panels.max(1);
        self
    }

    fn quad<G: Fn(f64) -> f64>(&self, a: f64, b: f64, g: G) -> f64 {
        if b <= a {
            return 0.0;
        }
        let w = (b - a) / self.panels as f64;
        let mut acc = 0.0;
        for p in 0..self.panels {
            let mid = a + (p as f64 + 0.5) * w;
            for (x, c) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                acc += c * g(mid + 0.5 * w * x);
            }
        }
        0.5 * w * acc
    }

    pub fn value(&self, u: f64, v: f64) -> f64 {
        let (lo, hi) = (self.support.lo, self.support.hi);
        let g = |w: f64| klein_gordon_kernel(self.q, u, v - w) * (self.fprime)(w);
        if u >= 0.0 {
            self.quad(lo, v.min(hi), g)
        } else {
            -self.quad(v.max(lo), hi, g)
        }
    }

    /// `d_u phi(0±, v)`: `-(q/4) int_{-inf}^v f` on the future side and
    /// `(q/4) int_v^inf f` on the past side, given `f` itself.
    pub fn first_jets<F: Fn(f64) -> f64>(&self, f: F, v: f64) -> (f64, f64) {
        let (lo, hi) = (self.support.lo, self.support.hi);
        let fut = -0.25 * self.q * self.quad(lo, v.min(hi), &f);
        let past = 0.25 * self.q * self.quad(v.max(lo), hi, &f);
        (fut, past)
    }
}

/// Jump `d_u phi(0+, v) - d_u phi(0-, v) = -(q/4) int f`, the same for every `v`.
pub fn klein_gordon_u_jump(q: f64, integral_f: f64) -> f64 {
    -0.25 * q * integral_f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - x * x)).exp()
        }
    }

    fn dbump(x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            let d = 1.0 - x * x;
            bump(x) * (-2.0 * x / (d * d))
        }
    }

    fn reference(q: f64) -> KleinGordonReference {
        KleinGordonReference::new(q, Interval::new(3.0, 5.0), |v| dbump(v - 4.0))
    }

    #[test]
    fn kernel_matches_bessel_values() {
        // J0(1) and I0(1)
        assert!((klein_gordon_kernel(4.0, 1.0, 0.25) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((klein_gordon_kernel(-4.0, 1.0, 0.25) - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert_eq!(klein_gordon_kernel(1.0, 0.0, 3.0), 1.0);
    }

    #[test]
    fn trace_is_the_datum() {
        let r = reference(1.0);
        for v in [3.2, 3.9, 4.0, 4.6] {
            assert!((r.value(0.0, v) - bump(v - 4.0)).abs() < 1e-10);
            assert!((r.value(-1e-300, v) - bump(v - 4.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn solves_the_equation() {
        let r = reference(1.0);
        let e = 1e-3;
        for (u, v) in [(0.4, 4.3), (-0.5, 3.8), (0.8, 5.5), (-0.3, 2.6)] {
            let f = |a: f64, b: f64| r.value(a, b);
            let fuv = (f(u + e, v + e) - f(u + e, v - e) - f(u - e, v + e) + f(u - e, v - e)) / (4.0 * e * e);
            assert!((4.0 * fuv + r.q * f(u, v)).abs() < 1e-5, "residual at ({u}, {v})");
        }
    }

    #[test]
    fn one_sided_derivatives_match_the_jets() {
        let r = reference(1.0);
        let e = 1e-5;
        for v in [3.5, 4.2, 6.0] {
            let (fut, past) = r.first_jets(|w| bump(w - 4.0), v);
            let dp = (r.value(e, v) - r.value(0.0, v)) / e;
            let dm = (r.value(-1e-300, v) - r.value(-e, v)) / e;
            assert!((dp - fut).abs() < 1e-4);
            assert!((dm - past).abs() < 1e-4);
        }
        let (fut, past) = r.first_jets(|w| bump(w - 4.0), 6.0);
        let total = r.quad(3.0, 5.0, |w| bump(w - 4.0));
        assert!((fut - past - klein_gordon_u_jump(1.0, total)).abs() < 1e-14);
    }
}

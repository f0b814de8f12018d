//! Truncated Borel sums `sum_n sigma(mu_n u / delta) u^n / n! psi_n(v)` and
//! the simple extension `e(f) = sigma(u / delta_e) f(v)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridRef, SlabGrid};
use crate::operators::{GridField, NodeCoefficients, WaveOperator};
use crate::propagation::{fd_derivative, CharacteristicDatum, JetSequence};
use crate::series::Series;

/// Transition profile `psi` in `sigma = psi(x) / (psi(x) + psi(1 - x))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    /// `psi(x) = exp(-1/x)`.
    #[default]
    Exp,
    /// `psi(x) = exp(-1/x^2)`.
    ExpSquared,
}

/// Smooth cutoff equal to 1 on `|t| <= 1/4` and 0 on `|t| >= 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpFunction {
    pub plateau_radius: f64,
    pub support_radius: f64,
    pub profile: BumpProfile,
}

impl Default for BumpFunction {
    fn default() -> Self {
        BumpFunction::new(BumpProfile::Exp)
    }
}

impl BumpFunction {
    pub fn new(profile: BumpProfile) -> Self {
        BumpFunction { plateau_radius: 0.25, support_radius: 0.5, profile }
    }

    fn psi(&self, x: &Series) -> Series {
        let order = x.order();
        if x.value() <= 0.0 {
            return Series::zero(order);
        }
        match self.profile {
            BumpProfile::Exp => x.recip().scale(-1.0).exp(),
            BumpProfile::ExpSquared => x.powi(2).recip().scale(-1.0).exp(),
        }
    }

    /// `sigma^(k)(t)` for `k = 0..=order`.
    pub fn derivatives(&self, t: f64, order: usize) -> Vec<f64> {
        let r = t.abs();
        let mut out = vec![0.0; order + 1];
        if r <= self.plateau_radius {
            out[0] = 1.0;
            return out;
        }
        if r >= self.support_radius {
            return out;
        }
        // x runs from 1 at the plateau edge to 0 at the support edge.
        let width = self.support_radius - self.plateau_radius;
        let sign = if t < 0.0 { 1.0 } else { -1.0 };
        let x = Series::variable(t, order).scale(sign / width).add_scalar(self.support_radius / width);
        let one_minus = &Series::constant(1.0, order) - &x;
        let a = self.psi(&x);
        let b = self.psi(&one_minus);
        a.div(&(&a + &b)).derivatives()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivatives(t, 0)[0]
    }

    /// `max_{k <= l} sup |sigma^(k)|`, sampled on the transition band.
    pub fn c_norm(&self, l: usize) -> f64 {
        let samples = 2000;
        let (a, b) = (self.plateau_radius, self.support_radius);
        let mut m = 1.0f64;
        for s in 0..=samples {
            let t = a + (b - a) * s as f64 / samples as f64;
            for d in self.derivatives(t, l) {
                m = m.max(d.abs());
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    /// Every `mu_n = 1`.
    #[default]
    Unit,
    /// `mu_n` grows with the jet norms so that the full series would converge.
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionConfig {
    /// Transverse support scale: the sum vanishes for `|u| >= delta / 2`.
    pub delta: f64,
    pub mu_rule: MuRule,
    pub n_jet: usize,
    pub profile: BumpProfile,
}

impl ExtensionConfig {
    /// `delta = 0.9 min(1, u-extent of the grid)` with the unit rule.
    pub fn for_grid(grid: &SlabGrid, n_jet: usize) -> Self {
        ExtensionConfig { delta: default_delta(grid), mu_rule: MuRule::Unit, n_jet, profile: BumpProfile::Exp }
    }
}

pub fn default_delta(grid: &SlabGrid) -> f64 {
    0.9 * grid.u_extent().min(1.0)
}

fn check_delta(delta: f64, grid: &SlabGrid) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Precondition(format!("transverse scale must be positive, got {delta}")));
    }
    let halfwidth = grid.u_extent();
    if delta / 2.0 > halfwidth * (1.0 + 1e-12) {
        return Err(Error::DeltaTooLarge { delta, halfwidth });
    }
    Ok(())
}

/// Stand-ins for the abstract constants of the convergent construction.
fn beta(k: usize) -> f64 {
    2f64.powi(k as i32)
}

const C_SIGMA: f64 = 1.0;

fn alpha(n: usize) -> f64 {
    2f64.powi(-(n as i32))
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// `max_{k <= kmax} sup_v |psi^(k)|` with derivatives from repeated differences.
fn sample_c_norms(psi: &[f64], dpsi: &[f64], kmax: usize, h: f64) -> Vec<f64> {
    let sup = |x: &[f64]| x.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let mut norms = vec![sup(psi)];
    let mut d = dpsi.to_vec();
    for _ in 1..=kmax {
        norms.push(sup(&d));
        d = fd_derivative(&d, h);
    }
    let mut running = 0.0f64;
    norms
        .into_iter()
        .map(|x| {
            running = running.max(x);
            running
        })
        .collect()
}

fn mu_sequence(rule: MuRule, bump: &BumpFunction, psi: &[Vec<f64>], dpsi: &[Vec<f64>], h: f64) -> Vec<f64> {
    match rule {
        MuRule::Unit => vec![1.0; psi.len()],
        MuRule::Growing => {
            let mut sigma_norm = Vec::new();
            (0..psi.len())
                .map(|n| {
                    if n == 0 {
                        return 1.0;
                    }
                    while sigma_norm.len() < n {
                        sigma_norm.push(C_SIGMA * bump.c_norm(sigma_norm.len()));
                    }
                    let s = sigma_norm.iter().fold(0.0f64, |m, x| m.max(*x));
                    let norms = sample_c_norms(&psi[n], &dpsi[n], n - 1, h);
                    let sum: f64 = (0..n).map(|k| 2f64.powi(k as i32) * beta(k) * norms[k]).sum();
                    1.0 + s * sum / (factorial(n) * alpha(n))
                })
                .collect()
        }
    }
}

/// A truncated Borel sum on a grid, with its terms kept for exact `d_u`.
#[derive(Debug, Clone)]
pub struct BorelSeries {
    pub grid: GridRef,
    psi: Vec<Vec<f64>>,
    dpsi: Vec<Vec<f64>>,
    mu: Vec<f64>,
    delta: f64,
    bump: BumpFunction,
}

impl BorelSeries {
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Largest `|u|` where any term is nonzero.
    pub fn u_support(&self) -> f64 {
        let m = self.mu.iter().fold(f64::INFINITY, |m, x| m.min(*x));
        self.bump.support_radius * self.delta / m
    }

    /// `(g_n(u), g_n'(u))` for every term, `g_n(u) = sigma(mu_n u / delta) u^n / n!`.
    fn transverse(&self, u: f64) -> Vec<(f64, f64)> {
        let mut pow = 1.0;
        let mut prev = 0.0;
        (0..self.psi.len())
            .map(|n| {
                if n > 0 {
                    prev = pow;
                    pow *= u / n as f64;
                }
                let s = self.mu[n] / self.delta;
                let sig = self.bump.derivatives(s * u, 1);
                // u^(n-1)/(n-1)! is the previous power.
                let dpow = if n == 0 { 0.0 } else { prev };
                (sig[0] * pow, sig[1] * s * pow + sig[0] * dpow)
            })
            .collect()
    }

    pub fn field(&self) -> GridField {
        let g = &self.grid;
        let rows: Vec<Vec<(f64, f64)>> = (0..g.nu()).map(|i| self.transverse(g.u(i))).collect();
        let mut out = GridField::zeros(g);
        crate::par::fill_rows(&mut out.values, |i, mut row| {
            for j in 0..g.nv() {
                row[j] = rows[i].iter().zip(&self.psi).map(|((t, _), p)| t * p[j]).sum();
            }
        });
        out
    }

    /// `P` applied to the sum, with exact `u`-derivatives and the jets' own
    /// `v`-derivatives.
    pub fn apply_p(&self, op: &WaveOperator) -> GridField {
        self.apply_p_with(&op.sample(&self.grid))
    }

    pub fn apply_p_with(&self, k: &NodeCoefficients) -> GridField {
        let g = &self.grid;
        let rows: Vec<Vec<(f64, f64)>> = (0..g.nu()).map(|i| self.transverse(g.u(i))).collect();
        let mut out = GridField::zeros(g);
        crate::par::fill_rows(&mut out.values, |i, mut row| {
            for j in 0..g.nv() {
                let (mut p, mut pu, mut pv, mut puv) = (0.0, 0.0, 0.0, 0.0);
                for (n, (t, dt)) in rows[i].iter().enumerate() {
                    p += t * self.psi[n][j];
                    pu += dt * self.psi[n][j];
                    pv += t * self.dpsi[n][j];
                    puv += dt * self.dpsi[n][j];
                }
                row[j] = 4.0 * puv + k.a[[i, j]] * pu + k.b[[i, j]] * pv + k.q[[i, j]] * p;
            }
        });
        out
    }
}

/// The Borel sum of `jets` as a series object.
pub fn borel_series(jets: &JetSequence, cfg: &ExtensionConfig, grid: &GridRef) -> Result<BorelSeries> {
    check_delta(cfg.delta, grid)?;
    if cfg.n_jet > jets.order {
        return Err(Error::JetOrderExceeded { requested: cfg.n_jet, available: jets.order });
    }
    if jets.psi[0].len() != grid.nv() {
        return Err(Error::ShapeMismatch);
    }
    let psi = jets.psi[..=cfg.n_jet].to_vec();
    let dpsi = jets.dpsi[..=cfg.n_jet].to_vec();
    let bump = BumpFunction::new(cfg.profile);
    let mu = mu_sequence(cfg.mu_rule, &bump, &psi, &dpsi, grid.h);
    Ok(BorelSeries { grid: grid.clone(), psi, dpsi, mu, delta: cfg.delta, bump })
}

pub fn borel_extend(jets: &JetSequence, cfg: &ExtensionConfig, grid: &GridRef) -> Result<GridField> {
    Ok(borel_series(jets, cfg, grid)?.field())
}

/// `e(f) = sigma(u / delta_e) f(v)` as a one-term series.
pub fn simple_extension_series(
    f: &CharacteristicDatum,
    delta_e: f64,
    profile: BumpProfile,
    grid: &GridRef,
) -> Result<BorelSeries> {
    check_delta(delta_e, grid)?;
    f.validate(grid)?;
    Ok(BorelSeries {
        grid: grid.clone(),
        psi: vec![f.f.clone()],
        dpsi: vec![f.df.clone()],
        mu: vec![1.0],
        delta: delta_e,
        bump: BumpFunction::new(profile),
    })
}

pub fn simple_extension(f: &CharacteristicDatum, delta_e: f64, grid: &GridRef) -> Result<GridField> {
    Ok(simple_extension_series(f, delta_e, BumpProfile::Exp, grid)?.field())
}

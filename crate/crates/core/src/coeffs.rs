//! Builtin coefficient families: driver `f`, obstacle `h` and terminal `xi`.
//!
//! All coefficients see the driving noise only through the Markov state
//! `(B_t, N~_t)` (Brownian level and cumulative compensated jump counts), which
//! is also the regression state of the backward solver.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Measure;
use crate::jumps::JumpMeasure;

/// Obstacle value used when no obstacle is active.
pub const INACTIVE_OBSTACLE: f64 = -1e9;

/// Noise state of one particle at one node.
#[derive(Debug, Clone, Copy)]
pub struct NoiseState<'a> {
    pub brownian: f64,
    pub compensated: &'a [f64],
}

/// Linear driver with an optional bounded nonlinearity in `y`:
///
/// `f(t, y, z, u, mu) = a_y y + s sin(y) + a_z z + <a_u, u> + a_mu mean(mu) + c`.
///
/// Comparison: `f(u1) - f(u2) = <gamma, u1 - u2>_nu` with `gamma_j = a_u[j] / lambda_j`,
/// which is bounded in `L^2_nu`; the comparison hypothesis holds exactly when
/// every `gamma_j >= -1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Driver {
    pub y: f64,
    pub sin_y: f64,
    pub z: f64,
    pub u: Vec<f64>,
    pub mean: f64,
    pub constant: f64,
}

impl Driver {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `f = a * mean(mu)`.
    pub fn linear_mean(a: f64) -> Self {
        Self { mean: a, ..Self::default() }
    }

    #[inline]
    pub fn eval(&self, y: f64, z: f64, u: &[f64], mu_mean: f64) -> f64 {
        let mut v = self.y * y + self.z * z + self.mean * mu_mean + self.constant;
        if self.sin_y != 0.0 {
            v += self.sin_y * y.sin();
        }
        for (a, x) in self.u.iter().zip(u) {
            v += a * x;
        }
        v
    }

    /// Lipschitz constant w.r.t. `|dy| + |dz| + |du|_nu + W_p`.
    pub fn lipschitz(&self, nu: &JumpMeasure) -> f64 {
        let u_part = self
            .u
            .iter()
            .zip(nu.intensities())
            .map(|(a, l)| a * a / l)
            .sum::<f64>()
            .sqrt();
        (self.y.abs() + self.sin_y.abs())
            .max(self.z.abs())
            .max(u_part)
            .max(self.mean.abs())
    }

    pub fn satisfies_comparison(&self, nu: &JumpMeasure) -> bool {
        self.u.iter().zip(nu.intensities()).all(|(a, l)| a / l >= -1.0)
    }

    pub fn depends_on_measure(&self) -> bool {
        self.mean != 0.0
    }
}

/// Deterministic time profile of the obstacle, right-continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Level {
    Constant { value: f64 },
    /// `before` on `[0, switch)`, `after` on `[switch, T]`.
    Step { before: f64, after: f64, switch: f64 },
    /// Linear interpolation from `start` at `t = 0` to `end` at `t = horizon`.
    Ramp { start: f64, end: f64, horizon: f64 },
}

impl Level {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Level::Constant { value } => value,
            Level::Step { before, after, switch } => {
                if t < switch {
                    before
                } else {
                    after
                }
            }
            Level::Ramp { start, end, horizon } => start + (end - start) * (t / horizon),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Level::Step { before, after, .. } if before != after)
    }
}

impl Default for Level {
    fn default() -> Self {
        Level::Constant { value: 0.0 }
    }
}

/// Obstacle
/// `h(t, x, y, mu) = g_y phi(y) + g_mu phi(mean mu) + level(t) + sigma B_t + scale (strike - B_t)^+`,
/// with `phi = tanh` when `bounded` and the identity otherwise.
///
/// The noise part `level(t) + sigma B_t + scale (strike - B_t)^+` plays the
/// role of the separable process in the continuity result for `K`; the
/// interaction part is bounded only when `bounded` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    #[serde(default)]
    pub gamma_y: f64,
    #[serde(default)]
    pub gamma_mean: f64,
    #[serde(default)]
    pub bounded: bool,
    #[serde(default)]
    pub level: Level,
    #[serde(default)]
    pub brownian: f64,
    #[serde(default)]
    pub put_strike: f64,
    #[serde(default)]
    pub put_scale: f64,
}

impl Obstacle {
    /// Effectively absent obstacle (`h = -1e9`).
    pub fn inactive() -> Self {
        Self::deterministic(0.0, 0.0, Level::Constant { value: INACTIVE_OBSTACLE })
    }

    pub fn deterministic(gamma_y: f64, gamma_mean: f64, level: Level) -> Self {
        Self {
            gamma_y,
            gamma_mean,
            bounded: false,
            level,
            brownian: 0.0,
            put_strike: 0.0,
            put_scale: 0.0,
        }
    }

    #[inline]
    fn phi(&self, v: f64) -> f64 {
        if self.bounded {
            v.tanh()
        } else {
            v
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, x: NoiseState<'_>, y: f64, mu_mean: f64) -> f64 {
        let mut v = self.level.at(t);
        if self.gamma_y != 0.0 {
            v += self.gamma_y * self.phi(y);
        }
        if self.gamma_mean != 0.0 {
            v += self.gamma_mean * self.phi(mu_mean);
        }
        if self.brownian != 0.0 {
            v += self.brownian * x.brownian;
        }
        if self.put_scale != 0.0 {
            v += self.put_scale * (self.put_strike - x.brownian).max(0.0);
        }
        v
    }

    /// Solves the binding equation `y = h(t, x, y, mu)`. Since `|g_y| < 1`,
    /// `y - h(y)` is strictly increasing and the root is unique; it is found in
    /// closed form for the linear obstacle and by contraction otherwise.
    pub fn binding_point(&self, t: f64, x: NoiseState<'_>, mu_mean: f64, start: f64) -> (f64, usize) {
        if !self.bounded || self.gamma_y == 0.0 {
            let rest = self.eval(t, x, 0.0, mu_mean);
            return (rest / (1.0 - self.gamma_y), 0);
        }
        let mut y = start;
        for it in 1..=10_000 {
            let next = self.eval(t, x, y, mu_mean);
            if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) {
                return (next, it);
            }
            y = next;
        }
        (y, 10_000)
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma_y.abs()
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma_mean.abs()
    }

    pub fn is_inactive(&self) -> bool {
        matches!(self.level, Level::Constant { value } if value <= INACTIVE_OBSTACLE)
            && self.gamma_y == 0.0
            && self.gamma_mean == 0.0
            && self.brownian == 0.0
            && self.put_scale == 0.0
    }

    /// Whether the obstacle has the separable form `xi_t + kappa(y, mu)` with a
    /// continuous noise part and bounded Lipschitz `kappa`, the setting in
    /// which the limit reflection process `K` is continuous.
    pub fn has_continuous_k_form(&self) -> bool {
        let kappa_bounded = self.bounded || (self.gamma_y == 0.0 && self.gamma_mean == 0.0);
        kappa_bounded && self.level.is_continuous()
    }
}

/// Terminal condition as a functional of the terminal noise state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Terminal {
    Constant {
        value: f64,
    },
    /// `c + a B_T + sum_j b_j N~^j_T`.
    Linear {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        brownian: f64,
        #[serde(default)]
        jumps: Vec<f64>,
    },
    /// `c + scale (strike - B_T)^+`.
    Put {
        #[serde(default)]
        constant: f64,
        strike: f64,
        scale: f64,
    },
}

impl Terminal {
    #[inline]
    pub fn eval(&self, x: NoiseState<'_>) -> f64 {
        match self {
            Terminal::Constant { value } => *value,
            Terminal::Linear { constant, brownian, jumps } => {
                constant
                    + brownian * x.brownian
                    + jumps.iter().zip(x.compensated).map(|(b, n)| b * n).sum::<f64>()
            }
            Terminal::Put { constant, strike, scale } => constant + scale * (strike - x.brownian).max(0.0),
        }
    }
}

/// Coefficients of a mean-field reflected BSDE with their declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub driver: Driver,
    pub obstacle: Obstacle,
    pub terminal: Terminal,
    pub jumps: JumpMeasure,
    /// Moment order `p >= 2`.
    pub p: f64,
}

impl CoefficientSet {
    pub fn new(driver: Driver, obstacle: Obstacle, terminal: Terminal, jumps: JumpMeasure, p: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::param("p", format!("moment order must be >= 2, got {p}")));
        }
        if !driver.u.is_empty() && driver.u.len() != jumps.len() {
            return Err(Error::param(
                "driver.u",
                format!("{} jump coefficients for {} marks", driver.u.len(), jumps.len()),
            ));
        }
        if let Terminal::Linear { jumps: b, .. } = &terminal {
            if b.len() > jumps.len() {
                return Err(Error::param(
                    "terminal.jumps",
                    format!("{} jump coefficients for {} marks", b.len(), jumps.len()),
                ));
            }
        }
        Ok(Self { driver, obstacle, terminal, jumps, p })
    }

    pub fn lipschitz_f(&self) -> f64 {
        self.driver.lipschitz(&self.jumps)
    }

    pub fn gamma1(&self) -> f64 {
        self.obstacle.gamma1()
    }

    pub fn gamma2(&self) -> f64 {
        self.obstacle.gamma2()
    }

    /// Declared (not verified) comparison property of the driver in `u`.
    pub fn comparison_flag(&self) -> bool {
        self.driver.satisfies_comparison(&self.jumps)
    }

    #[inline]
    pub fn f(&self, y: f64, z: f64, u: &[f64], mu: Measure<'_>) -> f64 {
        self.driver.eval(y, z, u, mu.mean())
    }

    #[inline]
    pub fn h(&self, t: f64, x: NoiseState<'_>, y: f64, mu: Measure<'_>) -> f64 {
        self.obstacle.eval(t, x, y, mu.mean())
    }

    /// Spot-checks the declared Lipschitz constants by random probing and
    /// returns the largest observed ratio `|f1 - f2| / (C_f * dist)` and
    /// `|h1 - h2| / (g1 |dy| + g2 W_1)`; both must stay `<= 1`.
    pub fn probe_lipschitz<R: Rng>(&self, rng: &mut R, trials: usize) -> (f64, f64) {
        let m = self.jumps.len();
        let cf = self.lipschitz_f();
        let mut worst_f: f64 = 0.0;
        let mut worst_h: f64 = 0.0;
        let draw = |rng: &mut R| rng.random_range(-5.0..5.0);
        for _ in 0..trials {
            let (y1, y2, z1, z2) = (draw(rng), draw(rng), draw(rng), draw(rng));
            let u1: Vec<f64> = (0..m).map(|_| draw(rng)).collect();
            let u2: Vec<f64> = (0..m).map(|_| draw(rng)).collect();
            let shift = draw(rng);
            let mu1 = vec![draw(rng), draw(rng)];
            let mu2: Vec<f64> = mu1.iter().map(|v| v + shift).collect();
            let (s1, s2) = (crate::flow::sorted(&mu1), crate::flow::sorted(&mu2));
            let (m1, m2) = (Measure::from_sorted(&s1), Measure::from_sorted(&s2));
            // translation: W_p(mu, mu + s) = |s| for every p
            let du: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
            let dist = (y1 - y2).abs() + (z1 - z2).abs() + self.jumps.norm(&du) + shift.abs();
            let df = (self.f(y1, z1, &u1, m1) - self.f(y2, z2, &u2, m2)).abs();
            if dist > 0.0 {
                worst_f = worst_f.max(if cf > 0.0 { df / (cf * dist) } else if df > 1e-12 { f64::INFINITY } else { 0.0 });
            }
            let x = NoiseState { brownian: draw(rng), compensated: &u1 };
            let t = rng.random_range(0.0..1.0);
            let dh = (self.h(t, x, y1, m1) - self.h(t, x, y2, m2)).abs();
            let bound = self.gamma1() * (y1 - y2).abs() + self.gamma2() * shift.abs();
            if bound > 0.0 {
                worst_h = worst_h.max(dh / bound);
            } else if dh > 1e-12 {
                worst_h = f64::INFINITY;
            }
        }
        (worst_f, worst_h)
    }
}

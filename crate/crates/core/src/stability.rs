//! Square-of-step decomposition `y'^2 = y^2 + phi1(y) + phi2(y, noise)` for
//! the truncated Langevin (`TSD`) and exponential (`expTSD`) maps, the
//! dissipation gauges `kappa` / `kappa1`, and a Monte Carlo check of the
//! left-point approximation of the Langevin stochastic integral.
//!
//! `phi1` is the predictable part and `phi2` has zero conditional mean, so
//! `phi1(y) <= -kappa1(|pi(y)|)` is the drift condition that drives the
//! iterates to zero.
//!
//! `phi1` is evaluated as `-(1 - e)((y^2 - c) + k c)` with `c = pi(y)^2`,
//! which is algebraically the textbook form but rounds monotonically: inside
//! the cap `y^2 - c` is exactly zero and `phi1 == -kappa1(|pi(y)|)` bit for
//! bit, outside it `y^2 - c >= 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{BrownianPath, NormalStream, RngSeed};
use crate::real::{one_minus_exp_neg, Real};
use crate::schemes::{langevin_integral, Increment, IntegralMode, SchemeKind};
use crate::stats::{binomial_stderr, compensated_sum, mean_stderr};
use crate::truncation::{check_unit_step, TruncationPolicy};

fn nineteen_twentieths<T: Real>() -> T {
    T::lit(19.0) / T::lit(20.0)
}

fn check_nonnegative<T: Real>(u: T) -> Result<()> {
    if u >= T::zero() {
        Ok(())
    } else {
        Err(Error::invalid("u", format!("must be nonnegative, got {u}")))
    }
}

/// Dissipation of the underlying SDE: `2x a(x) + b(x)^2 = -19 x^4`.
pub fn kappa_underlying<T: Real>(u: T) -> Result<T> {
    check_nonnegative(u)?;
    let u2 = u * u;
    Ok(T::lit(19.0) * u2 * u2)
}

/// `(19/20)(1 - e^{-20 u^2 dt}) u^2`.
pub fn kappa1_tsd<T: Real>(u: T, dt: T) -> Result<T> {
    check_nonnegative(u)?;
    if !(dt > T::zero()) {
        return Err(Error::invalid(
            "delta",
            format!("must be positive, got {dt}"),
        ));
    }
    let c = u * u;
    Ok(one_minus_exp_neg(T::lit(20.0) * c * dt) * (nineteen_twentieths::<T>() * c))
}

/// `(1 - e^{-19 u^2 dt}) u^2`.
pub fn kappa1_exp_tsd<T: Real>(u: T, dt: T) -> Result<T> {
    check_nonnegative(u)?;
    if !(dt > T::zero()) {
        return Err(Error::invalid(
            "delta",
            format!("must be positive, got {dt}"),
        ));
    }
    let c = u * u;
    Ok(one_minus_exp_neg(T::lit(19.0) * c * dt) * c)
}

/// Gauges compared by the stability condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaFn<T> {
    /// `19 u^4`.
    Underlying,
    TsdKappa1 {
        dt: T,
    },
    ExpTsdKappa1 {
        dt: T,
    },
}

impl<T: Real> KappaFn<T> {
    pub fn for_scheme(kind: SchemeKind, dt: T) -> Result<Self> {
        match kind {
            SchemeKind::Tsd => Ok(KappaFn::TsdKappa1 { dt }),
            SchemeKind::ExpTsd => Ok(KappaFn::ExpTsdKappa1 { dt }),
            other => Err(Error::invalid(
                "scheme",
                format!("no decomposition is available for {other}"),
            )),
        }
    }

    pub fn eval(&self, u: T) -> Result<T> {
        match *self {
            KappaFn::Underlying => kappa_underlying(u),
            KappaFn::TsdKappa1 { dt } => kappa1_tsd(u, dt),
            KappaFn::ExpTsdKappa1 { dt } => kappa1_exp_tsd(u, dt),
        }
    }
}

fn frozen<T: Real>(y: T, dt: T, policy: &TruncationPolicy<T>) -> Result<(T, T)> {
    check_unit_step(dt)?;
    let p = policy.clamp_pi(dt, y)?;
    Ok((p, p * p))
}

/// Predictable part for `TSD`: `(1 - e^{-20 c dt})(c/20 - y^2)`.
pub fn phi1_tsd<T: Real>(y: T, dt: T, policy: &TruncationPolicy<T>) -> Result<T> {
    let (_, c) = frozen(y, dt, policy)?;
    let e = one_minus_exp_neg(T::lit(20.0) * c * dt);
    Ok(-(e * ((y * y - c) + nineteen_twentieths::<T>() * c)))
}

/// Predictable part for `expTSD`: `-(1 - e^{-19 c dt}) y^2`.
pub fn phi1_exp_tsd<T: Real>(y: T, dt: T, policy: &TruncationPolicy<T>) -> Result<T> {
    let (_, c) = frozen(y, dt, policy)?;
    let e = one_minus_exp_neg(T::lit(19.0) * c * dt);
    Ok(-(e * ((y * y - c) + c)))
}

/// Martingale part for `TSD`, sharing its integral sample with
/// [`crate::schemes::sd_langevin_step`]:
/// `2 y e^{-10 c dt} c I + c^2 I^2 - (c/20)(1 - e^{-20 c dt})`.
pub fn phi2_tsd_sample<T: Real>(
    y: T,
    dt: T,
    policy: &TruncationPolicy<T>,
    inc: Increment<T>,
    mode: IntegralMode,
) -> Result<T> {
    let (_, c) = frozen(y, dt, policy)?;
    let integral = langevin_integral(c, dt, inc, mode);
    let decay = (-T::lit(10.0) * c * dt).exp();
    let two = T::lit(2.0);
    let ci = c * integral;
    Ok(
        two * y * decay * ci + ci * ci
            - c / T::lit(20.0) * one_minus_exp_neg(T::lit(20.0) * c * dt),
    )
}

/// Martingale part for `expTSD`:
/// `y^2 e^{-19 c dt} (e^{-2 c dt + 2 p dW} - 1)`, so that
/// `y'^2 = y^2 + phi1 + phi2` holds exactly.
pub fn phi2_exp_tsd_sample<T: Real>(y: T, dt: T, policy: &TruncationPolicy<T>, dw: T) -> Result<T> {
    let (p, c) = frozen(y, dt, policy)?;
    let two = T::lit(2.0);
    Ok(y * y * (-T::lit(19.0) * c * dt).exp() * (two * (p * dw - c * dt)).exp_m1())
}

/// Draws `n` samples of `phi2` at fixed `(y, dt)` and returns their mean and
/// standard error. `TSD` uses the exact integral, the only mode in which
/// `phi2` is a martingale increment.
pub fn phi2_mean(
    kind: SchemeKind,
    y: f64,
    dt: f64,
    policy: &TruncationPolicy<f64>,
    n: usize,
    seed: RngSeed,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::invalid("n_draws", "need at least two draws"));
    }
    KappaFn::for_scheme(kind, dt)?;
    let mut stream = NormalStream::new(seed);
    let sd = dt.sqrt();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let dw = sd * stream.next_normal();
        let v = match kind {
            SchemeKind::Tsd => {
                let inc = Increment::with_aux(dw, stream.next_normal());
                phi2_tsd_sample(y, dt, policy, inc, IntegralMode::ExactGaussian)?
            }
            _ => phi2_exp_tsd_sample(y, dt, policy, dw)?,
        };
        samples.push(v);
    }
    Ok(mean_stderr(&samples).expect("n >= 2"))
}

/// Pointwise evaluation of the drift condition on a grid of states.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub scheme: SchemeKind,
    pub delta: f64,
    pub ys: Vec<f64>,
    pub phi1: Vec<f64>,
    /// `kappa1(|pi(y)|)`, nonnegative.
    pub kappa1: Vec<f64>,
    /// `phi1 <= -kappa1` at each point.
    pub holds: Vec<bool>,
    pub phi2_mean: Vec<f64>,
    pub phi2_stderr: Vec<f64>,
    /// Points where `kappa1(|pi(y)|) > 19 |pi(y)|^4`.
    pub kappa_dominance_violations: usize,
}

impl DecompositionReport {
    pub fn violations(&self) -> usize {
        self.holds.iter().filter(|h| !**h).count()
    }

    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

/// Monte Carlo settings for the `phi2` columns of a [`DecompositionReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phi2Sampling {
    pub draws: usize,
    pub seed: u64,
}

/// `y` in `[-5, 5]` with step `0.01`, plus the cap points `+-pi` limit.
pub fn default_inequality_grid(dt: f64, policy: &TruncationPolicy<f64>) -> Result<Vec<f64>> {
    let cap = policy.cap(dt)?;
    let mut ys: Vec<f64> = (0..=1000).map(|i| (i as f64 - 500.0) / 100.0).collect();
    ys.push(cap);
    ys.push(-cap);
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    Ok(ys)
}

pub fn check_drift_inequality(
    kind: SchemeKind,
    dt: f64,
    policy: &TruncationPolicy<f64>,
    ys: &[f64],
    sampling: Option<Phi2Sampling>,
) -> Result<DecompositionReport> {
    check_unit_step(dt)?;
    let kappa1 = KappaFn::for_scheme(kind, dt)?;
    if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::invalid("y_grid", format!("non-finite point {bad}")));
    }
    let rows: Vec<(f64, f64, f64, f64)> = ys
        .par_iter()
        .enumerate()
        .map(|(i, &y)| {
            let phi1 = match kind {
                SchemeKind::Tsd => phi1_tsd(y, dt, policy)?,
                _ => phi1_exp_tsd(y, dt, policy)?,
            };
            let u = policy.clamp_pi(dt, y)?.abs();
            let k1 = kappa1.eval(u)?;
            let (mean, se) = match sampling {
                Some(s) => phi2_mean(kind, y, dt, policy, s.draws, RngSeed::new(s.seed, i as u64))?,
                None => (f64::NAN, f64::NAN),
            };
            Ok((phi1, k1, mean, se))
        })
        .collect::<Result<_>>()?;
    let mut dominance_violations = 0;
    for &y in ys {
        let u = policy.clamp_pi(dt, y)?.abs();
        if kappa1.eval(u)? > kappa_underlying(u)? {
            dominance_violations += 1;
        }
    }
    Ok(DecompositionReport {
        scheme: kind,
        delta: dt,
        ys: ys.to_vec(),
        holds: rows.iter().map(|r| r.0 <= -r.1).collect(),
        phi1: rows.iter().map(|r| r.0).collect(),
        kappa1: rows.iter().map(|r| r.1).collect(),
        phi2_mean: rows.iter().map(|r| r.2).collect(),
        phi2_stderr: rows.iter().map(|r| r.3).collect(),
        kappa_dominance_violations: dominance_violations,
    })
}

/// Exceedance probability of the left-point integral error against its
/// Chebyshev-type bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheckReport {
    pub c: f64,
    pub delta: f64,
    pub r: f64,
    pub n_samples: usize,
    pub n_substeps: usize,
    /// Fraction of samples with `|D| >= delta^r`.
    pub empirical_prob: f64,
    pub stderr: f64,
    /// `2 e^{20 c delta} delta^{1 - 2r}`.
    pub theoretical_bound: f64,
    /// `E[D^2] = int_0^delta (e^{10 c s} - 1)^2 ds`.
    pub exact_variance: f64,
}

impl BoundCheckReport {
    /// Empirical probability at most the bound plus three standard errors.
    pub fn within_bound(&self) -> bool {
        self.empirical_prob <= self.theoretical_bound + 3.0 * self.stderr
    }
}

pub fn integral_bound(c: f64, dt: f64, r: f64) -> f64 {
    2.0 * (20.0 * c * dt).exp() * dt.powf(1.0 - 2.0 * r)
}

/// `int_0^dt (e^{k s} - 1)^2 ds` with `k = 10 c`.
pub fn left_point_error_variance(c: f64, dt: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let k = 10.0 * c;
    (2.0 * k * dt).exp_m1() / (2.0 * k) - 2.0 * (k * dt).exp_m1() / k + dt
}

/// Simulates `D = int_0^dt (e^{10 c s} - 1) dW_s` by left-point sums over
/// `n_substeps` sub-increments and counts `|D| >= dt^r`.
pub fn integral_bound_check(
    c: f64,
    dt: f64,
    r: f64,
    n_samples: usize,
    n_substeps: usize,
    seed: u64,
) -> Result<BoundCheckReport> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::invalid(
            "r",
            format!("must lie in (0, 1/2), got {r}"),
        ));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", format!("must be nonnegative, got {c}")));
    }
    check_unit_step(dt)?;
    if n_substeps < 64 {
        return Err(Error::invalid(
            "n_substeps",
            format!("must be at least 64, got {n_substeps}"),
        ));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    let h = dt / n_substeps as f64;
    let weights: Vec<f64> = (0..n_substeps)
        .map(|j| (10.0 * c * j as f64 * h).exp_m1())
        .collect();
    let threshold = dt.powf(r);
    let hits = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let path = BrownianPath::sample(RngSeed::new(seed, i), n_substeps, h)?;
            let dw = path.level(0).expect("level 0");
            let d = compensated_sum(weights.iter().zip(dw).map(|(w, x)| w * x));
            Ok(d.abs() >= threshold)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    let p = hits as f64 / n_samples as f64;
    Ok(BoundCheckReport {
        c,
        delta: dt,
        r,
        n_samples,
        n_substeps,
        empirical_prob: p,
        stderr: binomial_stderr(p, n_samples),
        theoretical_bound: integral_bound(c, dt, r),
        exact_variance: left_point_error_variance(c, dt),
    })
}

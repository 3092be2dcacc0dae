//! One-step integrators for `dx = -10 x^3 dt + x^2 dW` on a uniform grid.
//!
//! The semi-discrete maps freeze part of each coefficient at the left node so
//! that the remaining per-step SDE is linear and exactly solvable:
//!
//! * Langevin form (`SD` / `TSD`): `dy = -10 c y ds + c dW`, `c = pi(y_n)^2`.
//! * Exponential form (`expSD` / `expTSD`): `dy = -10 c y ds + p y dW`,
//!   `p = pi(y_n)`, solved by a geometric exponential.
//! * Lamperti form (`LSD`): for `z = -1/x`, `dz = 11/z dt + dW`; the step adds
//!   the increment and then solves the Bernoulli ODE exactly.
//!
//! The Langevin form is written relative to the left node, so the exponentials
//! never see the absolute time `t_n` and cannot overflow on long horizons.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::real::{one_minus_exp_neg, Real};
use crate::truncation::{check_unit_step, clamp_to, EmTruncationPolicy, TruncationPolicy};

/// Scalar SDE `dx = a(t, x) dt + b(t, x) dW`.
#[derive(Debug, Clone)]
pub struct SdeProblem<T> {
    drift: fn(T, T) -> T,
    diffusion: fn(T, T) -> T,
    x0: T,
    label: String,
    closed_form: bool,
}

fn cubic_drift<T: Real>(_t: T, x: T) -> T {
    -T::lit(10.0) * x * x * x
}

fn square_diffusion<T: Real>(_t: T, x: T) -> T {
    x * x
}

impl<T: Real> SdeProblem<T> {
    /// `a(x) = -10 x^3`, `b(x) = x^2`. The semi-discrete kinds are only
    /// defined for this problem.
    pub fn cubic_example(x0: T) -> Self {
        Self {
            drift: cubic_drift::<T>,
            diffusion: square_diffusion::<T>,
            x0,
            label: "cubic drift, quadratic diffusion".to_string(),
            closed_form: true,
        }
    }

    /// A problem only the Euler-type kinds can integrate.
    pub fn custom(
        drift: fn(T, T) -> T,
        diffusion: fn(T, T) -> T,
        x0: T,
        label: impl Into<String>,
    ) -> Self {
        Self {
            drift,
            diffusion,
            x0,
            label: label.into(),
            closed_form: false,
        }
    }

    pub fn drift(&self, t: T, x: T) -> T {
        (self.drift)(t, x)
    }

    pub fn diffusion(&self, t: T, x: T) -> T {
        (self.diffusion)(t, x)
    }

    pub fn x0(&self) -> T {
        self.x0
    }

    pub fn with_x0(mut self, x0: T) -> Self {
        self.x0 = x0;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_cubic_example(&self) -> bool {
        self.closed_form
    }
}

/// Equidistant nodes `t_n = t0 + n * delta`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    delta: T,
    n_steps: usize,
    t0: T,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(delta: T, n_steps: usize) -> Result<Self> {
        Self::starting_at(T::zero(), delta, n_steps)
    }

    pub fn starting_at(t0: T, delta: T, n_steps: usize) -> Result<Self> {
        if !(delta > T::zero() && delta.is_finite()) {
            return Err(Error::invalid(
                "delta",
                format!("must be positive, got {delta}"),
            ));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        Ok(Self { delta, n_steps, t0 })
    }

    /// Grid over `[0, horizon]`; `horizon / delta` must be an integer up to
    /// rounding.
    pub fn covering(horizon: T, delta: T) -> Result<Self> {
        if !(horizon >= T::zero() && horizon.is_finite()) {
            return Err(Error::invalid(
                "horizon",
                format!("must be nonnegative, got {horizon}"),
            ));
        }
        if !(delta > T::zero()) {
            return Err(Error::invalid(
                "delta",
                format!("must be positive, got {delta}"),
            ));
        }
        let ratio = horizon / delta;
        let n = ratio.round();
        if (ratio - n).abs() > T::lit(1e-9) * n.max(T::one()) {
            return Err(Error::invalid(
                "horizon",
                format!("{horizon} is not a whole number of steps of {delta}"),
            ));
        }
        Self::new(delta, n.to_usize().unwrap_or(0))
    }

    /// Shortest grid from 0 whose last node is at or past `horizon`,
    /// treating a shortfall within rounding as reaching it.
    pub fn reaching(horizon: T, delta: T) -> Result<Self> {
        if !(horizon >= T::zero() && horizon.is_finite()) {
            return Err(Error::invalid(
                "horizon",
                format!("must be nonnegative, got {horizon}"),
            ));
        }
        if !(delta > T::zero()) {
            return Err(Error::invalid(
                "delta",
                format!("must be positive, got {delta}"),
            ));
        }
        let ratio = horizon / delta;
        let n = (ratio - T::lit(1e-9) * ratio.max(T::one()))
            .ceil()
            .max(T::zero());
        Self::new(delta, n.to_usize().unwrap_or(0))
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn time(&self, n: usize) -> T {
        self.t0 + T::from_usize(n).expect("step index representable") * self.delta
    }

    pub fn horizon(&self) -> T {
        T::from_usize(self.n_steps).expect("step count representable") * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Langevin-type semi-discrete map, untruncated.
    SdLangevin,
    /// Exponential semi-discrete map, untruncated.
    SdExp,
    /// Truncated Langevin-type map.
    Tsd,
    /// Truncated exponential map.
    ExpTsd,
    /// Lamperti semi-discrete map.
    Lsd,
    /// Truncated Euler–Maruyama.
    Tem,
    /// Plain Euler–Maruyama.
    Em,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 7] = [
        SchemeKind::SdLangevin,
        SchemeKind::SdExp,
        SchemeKind::Tsd,
        SchemeKind::ExpTsd,
        SchemeKind::Lsd,
        SchemeKind::Tem,
        SchemeKind::Em,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::SdLangevin => "SD",
            SchemeKind::SdExp => "expSD",
            SchemeKind::Tsd => "TSD",
            SchemeKind::ExpTsd => "expTSD",
            SchemeKind::Lsd => "LSD",
            SchemeKind::Tem => "TEM",
            SchemeKind::Em => "EM",
        }
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, SchemeKind::Tsd | SchemeKind::ExpTsd)
    }

    pub fn needs_em_policy(self) -> bool {
        self == SchemeKind::Tem
    }

    pub fn is_langevin(self) -> bool {
        matches!(self, SchemeKind::SdLangevin | SchemeKind::Tsd)
    }

    pub fn is_semi_discrete(self) -> bool {
        !matches!(self, SchemeKind::Tem | SchemeKind::Em)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Ok(match key.as_str() {
            "SD" | "SD_LANGEVIN" => SchemeKind::SdLangevin,
            "EXPSD" | "SD_EXP" | "EXP_SD" => SchemeKind::SdExp,
            "TSD" => SchemeKind::Tsd,
            "EXPTSD" | "EXP_TSD" => SchemeKind::ExpTsd,
            "LSD" => SchemeKind::Lsd,
            "TEM" => SchemeKind::Tem,
            "EM" => SchemeKind::Em,
            _ => return Err(Error::invalid("scheme", format!("unknown scheme `{s}`"))),
        })
    }
}

/// How the Langevin-type step samples `int e^{-10c(t_{n+1}-s)} dW_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IntegralMode {
    /// Exact Gaussian draw, jointly with the step's Brownian increment.
    ExactGaussian,
    /// Integrand frozen at the left node: `e^{-10c dt} dW`.
    #[default]
    LowerEndpoint,
}

impl fmt::Display for IntegralMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntegralMode::ExactGaussian => "exact",
            IntegralMode::LowerEndpoint => "lower-endpoint",
        })
    }
}

impl FromStr for IntegralMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "exact" | "exact-gaussian" => Ok(IntegralMode::ExactGaussian),
            "lower-endpoint" | "lower" => Ok(IntegralMode::LowerEndpoint),
            _ => Err(Error::invalid(
                "integral_mode",
                format!("unknown mode `{s}`"),
            )),
        }
    }
}

/// Noise consumed by one step: the Brownian increment and, for the exact
/// Langevin mode, one independent standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Increment<T> {
    pub dw: T,
    pub aux: T,
}

impl<T: Real> Increment<T> {
    pub fn new(dw: T) -> Self {
        Self { dw, aux: T::zero() }
    }

    pub fn with_aux(dw: T, aux: T) -> Self {
        Self { dw, aux }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeState<T> {
    pub y: T,
    pub t: T,
    pub step_index: usize,
}

/// A scheme kind together with the policies and options it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme<T> {
    kind: SchemeKind,
    mode: IntegralMode,
    policy: Option<TruncationPolicy<T>>,
    em_policy: Option<EmTruncationPolicy<T>>,
}

impl<T: Real> Scheme<T> {
    pub fn new(
        kind: SchemeKind,
        policy: Option<TruncationPolicy<T>>,
        em_policy: Option<EmTruncationPolicy<T>>,
        mode: IntegralMode,
    ) -> Result<Self> {
        if kind.needs_policy() && policy.is_none() {
            return Err(Error::invalid(
                "policy",
                format!("{kind} requires a truncation policy"),
            ));
        }
        if kind.needs_em_policy() && em_policy.is_none() {
            return Err(Error::invalid(
                "em_policy",
                format!("{kind} requires an Euler truncation policy"),
            ));
        }
        Ok(Self {
            kind,
            mode,
            policy: policy.filter(|_| kind.needs_policy()),
            em_policy: em_policy.filter(|_| kind.needs_em_policy()),
        })
    }

    /// `kind` with the example's policies and the lower-endpoint integral.
    pub fn standard(kind: SchemeKind) -> Self {
        Self::new(
            kind,
            Some(TruncationPolicy::example()),
            Some(EmTruncationPolicy::example()),
            IntegralMode::default(),
        )
        .expect("example policies satisfy every kind")
    }

    pub fn with_mode(mut self, mode: IntegralMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn mode(&self) -> IntegralMode {
        self.mode
    }

    pub fn policy(&self) -> Option<&TruncationPolicy<T>> {
        self.policy.as_ref()
    }

    pub fn em_policy(&self) -> Option<&EmTruncationPolicy<T>> {
        self.em_policy.as_ref()
    }

    /// Whether stepping consumes an auxiliary normal per step.
    pub fn uses_aux(&self) -> bool {
        self.kind.is_langevin() && self.mode == IntegralMode::ExactGaussian
    }

    /// Fixes the step size, precomputing truncation levels.
    pub fn stepper(&self, dt: T) -> Result<Stepper<T>> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::invalid(
                "delta",
                format!("must be positive, got {dt}"),
            ));
        }
        let cap = match (
            self.kind,
            self.kind.needs_policy(),
            self.kind.needs_em_policy(),
        ) {
            (_, true, _) => Some(self.policy.expect("validated").cap(dt)?),
            (_, _, true) => Some(self.em_policy.expect("validated").cap(dt)?),
            _ => None,
        };
        Ok(Stepper {
            kind: self.kind,
            mode: self.mode,
            dt,
            cap,
        })
    }
}

/// A [`Scheme`] bound to one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepper<T> {
    kind: SchemeKind,
    mode: IntegralMode,
    dt: T,
    cap: Option<T>,
}

impl<T: Real> Stepper<T> {
    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn cap(&self) -> Option<T> {
        self.cap
    }

    /// Maps an initial value into the coordinates the recursion runs in.
    pub fn to_internal(&self, x0: T) -> Result<T> {
        if !x0.is_finite() {
            return Err(Error::invalid("x0", "must be finite"));
        }
        match self.kind {
            SchemeKind::Lsd => x_to_lsd(x0),
            _ => Ok(x0),
        }
    }

    pub fn to_output(&self, y: T) -> T {
        match self.kind {
            SchemeKind::Lsd => -y.recip(),
            _ => y,
        }
    }

    /// One step from internal state `y` at time `t`.
    #[inline]
    pub fn step(&self, problem: &SdeProblem<T>, t: T, y: T, inc: Increment<T>) -> T {
        let dt = self.dt;
        match self.kind {
            SchemeKind::SdLangevin | SchemeKind::Tsd => {
                sd_langevin_step(y, dt, inc, self.cap, self.mode)
            }
            SchemeKind::SdExp | SchemeKind::ExpTsd => sd_exp_step(y, dt, inc.dw, self.cap),
            SchemeKind::Lsd => lsd_step(y, dt, inc.dw),
            SchemeKind::Tem => {
                let u = clamp_to(y, self.cap.expect("TEM stepper has a cap"));
                y + problem.drift(t, u) * dt + problem.diffusion(t, u) * inc.dw
            }
            SchemeKind::Em => em_step(problem, t, y, dt, inc.dw),
        }
    }
}

/// Exact transition of `dx = a x dt + b dW` over `dt`, driven by a standard
/// normal `gaussian`.
pub fn exact_linear_step<T: Real>(a: T, b: T, x: T, dt: T, gaussian: T) -> T {
    let two = T::lit(2.0);
    let var = if a == T::zero() {
        dt
    } else {
        (two * a * dt).exp_m1() / (two * a)
    };
    (a * dt).exp() * x + b * var.sqrt() * gaussian
}

/// `(1 - e^{-k dt}) / k`, continuous at `k = 0`.
#[inline]
fn damped_length<T: Real>(k: T, dt: T) -> T {
    if k == T::zero() {
        dt
    } else {
        one_minus_exp_neg(k * dt) / k
    }
}

/// Sample of `int_{t_n}^{t_{n+1}} e^{-10 c (t_{n+1} - s)} dW_s` consistent
/// with the step increment `inc.dw`.
///
/// In exact mode the pair (integral, increment) is drawn from its joint
/// Gaussian law: the regression on `dw` plus an independent residual driven
/// by `inc.aux`.
#[inline]
pub fn langevin_integral<T: Real>(c: T, dt: T, inc: Increment<T>, mode: IntegralMode) -> T {
    let ten = T::lit(10.0);
    match mode {
        IntegralMode::LowerEndpoint => (-ten * c * dt).exp() * inc.dw,
        IntegralMode::ExactGaussian => {
            let var = damped_length(T::lit(20.0) * c, dt);
            let cov = damped_length(ten * c, dt);
            let beta = cov / dt;
            let resid = (var - beta * cov).max(T::zero());
            beta * inc.dw + resid.sqrt() * inc.aux
        }
    }
}

/// Langevin-type semi-discrete step. With `cap` the frozen coefficient is
/// `c = clamp(y)^2`, otherwise `c = y^2`; then
/// `y' = e^{-10 c dt} y + c * I` with `I` from [`langevin_integral`].
#[inline]
pub fn sd_langevin_step<T: Real>(
    y: T,
    dt: T,
    inc: Increment<T>,
    cap: Option<T>,
    mode: IntegralMode,
) -> T {
    let p = cap.map_or(y, |cap| clamp_to(y, cap));
    let c = p * p;
    (-T::lit(10.0) * c * dt).exp() * y + c * langevin_integral(c, dt, inc, mode)
}

/// Exponential semi-discrete step `y exp(-10.5 p^2 dt + p dW)`,
/// `p = clamp(y)` when `cap` is given.
#[inline]
pub fn sd_exp_step<T: Real>(y: T, dt: T, dw: T, cap: Option<T>) -> T {
    let p = cap.map_or(y, |cap| clamp_to(y, cap));
    y * (-T::lit(10.5) * p * p * dt + p * dw).exp()
}

/// Lamperti-coordinate step `-sqrt((dW + y)^2 + 22 dt)`.
#[inline]
pub fn lsd_step<T: Real>(y_tilde: T, dt: T, dw: T) -> T {
    let s = dw + y_tilde;
    -(s * s + T::lit(22.0) * dt).sqrt()
}

/// `x = -1 / y` for a Lamperti state `y < 0`.
pub fn lsd_to_x<T: Real>(y_tilde: T) -> Result<T> {
    if y_tilde < T::zero() {
        Ok(-y_tilde.recip())
    } else {
        Err(Error::invalid(
            "y_tilde",
            format!("Lamperti state must be negative, got {y_tilde}"),
        ))
    }
}

/// `y = -1 / x` for `x > 0`.
pub fn x_to_lsd<T: Real>(x: T) -> Result<T> {
    if x > T::zero() {
        Ok(-x.recip())
    } else {
        Err(Error::invalid(
            "x0",
            format!("the Lamperti scheme needs a positive initial value, got {x}"),
        ))
    }
}

/// Truncated Euler–Maruyama for the example:
/// `y - 10 u^3 dt + u^2 dW`, `u = clamp_em(y)`.
pub fn tem_step<T: Real>(y: T, dt: T, dw: T, policy: &EmTruncationPolicy<T>) -> Result<T> {
    check_unit_step(dt)?;
    let u = clamp_to(y, policy.cap(dt)?);
    Ok(y - T::lit(10.0) * u * u * u * dt + u * u * dw)
}

pub fn em_step<T: Real>(problem: &SdeProblem<T>, t: T, y: T, dt: T, dw: T) -> T {
    y + problem.drift(t, y) * dt + problem.diffusion(t, y) * dw
}

/// How a driven path ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome<T> {
    /// Last finite state (in output coordinates).
    pub last: SchemeState<T>,
    /// Step index whose result was non-finite, if any.
    pub diverged_at: Option<usize>,
}

impl<T> PathOutcome<T> {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Runs `scheme` over `grid`, calling `visit` on every finite state in
/// output coordinates (including the initial one). A non-finite iterate stops
/// the path and is reported through [`PathOutcome::diverged_at`].
pub fn drive<T: Real>(
    scheme: &Scheme<T>,
    problem: &SdeProblem<T>,
    grid: &TimeGrid<T>,
    dw: &[T],
    aux: Option<&[T]>,
    mut visit: impl FnMut(&SchemeState<T>),
) -> Result<PathOutcome<T>> {
    if scheme.kind.is_semi_discrete() && !problem.is_cubic_example() {
        return Err(Error::invalid(
            "scheme",
            format!("{} is only defined for the cubic example", scheme.kind),
        ));
    }
    let n = grid.n_steps();
    if dw.len() < n {
        return Err(Error::InsufficientIncrements {
            level: 0,
            available: dw.len(),
            required: n,
        });
    }
    if scheme.uses_aux() && aux.map_or(0, <[T]>::len) < n {
        return Err(Error::InsufficientIncrements {
            level: 0,
            available: aux.map_or(0, <[T]>::len),
            required: n,
        });
    }
    let stepper = scheme.stepper(grid.delta())?;
    let mut y = stepper.to_internal(problem.x0())?;
    let mut state = SchemeState {
        y: problem.x0(),
        t: grid.t0(),
        step_index: 0,
    };
    visit(&state);
    for i in 0..n {
        let inc = Increment {
            dw: dw[i],
            aux: aux.map_or(T::zero(), |a| a[i]),
        };
        let next = stepper.step(problem, state.t, y, inc);
        let out = stepper.to_output(next);
        if !next.is_finite() || !out.is_finite() {
            return Ok(PathOutcome {
                last: state,
                diverged_at: Some(i + 1),
            });
        }
        y = next;
        state = SchemeState {
            y: out,
            t: grid.time(i + 1),
            step_index: i + 1,
        };
        visit(&state);
    }
    Ok(PathOutcome {
        last: state,
        diverged_at: None,
    })
}

/// Recorded trajectory of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub kind: SchemeKind,
    pub states: Vec<SchemeState<T>>,
    pub diverged_at: Option<usize>,
}

impl<T: Real> Trajectory<T> {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn terminal(&self) -> &SchemeState<T> {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.states.iter().map(|s| s.y)
    }
}

/// Simulates one path using level `level` of `path` as the increments.
/// The level's step size must equal `grid.delta()`.
pub fn simulate_path<T: Real>(
    scheme: &Scheme<T>,
    problem: &SdeProblem<T>,
    grid: &TimeGrid<T>,
    path: &BrownianPath,
    level: usize,
) -> Result<Trajectory<T>> {
    let increments = path.level(level).ok_or(Error::InsufficientIncrements {
        level,
        available: 0,
        required: grid.n_steps(),
    })?;
    if increments.len() < grid.n_steps() {
        return Err(Error::InsufficientIncrements {
            level,
            available: increments.len(),
            required: grid.n_steps(),
        });
    }
    let path_dt = path.step_size(level);
    let grid_dt = grid.delta().to_f64_lossy();
    if (path_dt - grid_dt).abs() > 1e-12 * grid_dt {
        return Err(Error::invalid(
            "delta",
            format!("grid step {grid_dt} does not match path level {level} step {path_dt}"),
        ));
    }
    let dw: Vec<T> = increments[..grid.n_steps()]
        .iter()
        .map(|&w| T::lit(w))
        .collect();
    let aux: Option<Vec<T>> = scheme.uses_aux().then(|| {
        path.auxiliary_normals(level)
            .into_iter()
            .map(T::lit)
            .collect()
    });
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    let outcome = drive(scheme, problem, grid, &dw, aux.as_deref(), |s| {
        states.push(*s)
    })?;
    Ok(Trajectory {
        kind: scheme.kind(),
        states,
        diverged_at: outcome.diverged_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NormalStream, RngSeed};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cubic(x0: f64) -> SdeProblem<f64> {
        SdeProblem::cubic_example(x0)
    }

    #[test]
    fn example_satisfies_dissipativity_identity() {
        let p = cubic(1.0);
        for i in -200..=200 {
            let x = i as f64 / 20.0;
            let lhs = 2.0 * x * p.drift(0.0, x) + p.diffusion(0.0, x).powi(2);
            assert_relative_eq!(lhs, -19.0 * x.powi(4), max_relative = 1e-14);
        }
    }

    #[test]
    fn exact_linear_step_values() {
        assert_eq!(exact_linear_step(0.0, 1.0, 0.0, 1.0, 0.7), 0.7);
        assert_relative_eq!(
            exact_linear_step(-1.0, 0.0, 2.0, 1.0, 0.3),
            2.0 * (-1.0f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn exact_linear_step_variance() {
        let mut s = NormalStream::new(RngSeed::new(21, 0));
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| exact_linear_step(-1.0, 1.0, 0.0, 1.0, s.next_normal()))
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let expected = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((v / expected - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn langevin_step_values() {
        let cap = TruncationPolicy::<f64>::example().cap(1.0).unwrap();
        let inc = Increment::new(0.0);
        let y = sd_langevin_step(1.0, 1.0, inc, Some(cap), IntegralMode::LowerEndpoint);
        assert_relative_eq!(y, (-10.0f64).exp(), max_relative = 1e-14);
        assert_eq!(
            sd_langevin_step(
                0.0,
                0.3,
                Increment::new(1.7),
                None,
                IntegralMode::LowerEndpoint
            ),
            0.0
        );
    }

    #[test]
    fn langevin_exact_second_moment() {
        let mut s = NormalStream::new(RngSeed::new(8, 1));
        let n = 100_000;
        let m2 = (0..n)
            .map(|_| {
                let inc = Increment::with_aux(s.next_normal(), s.next_normal());
                sd_langevin_step(1.0, 1.0, inc, Some(1.0), IntegralMode::ExactGaussian).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let expected = (-20.0f64).exp() + (1.0 - (-20.0f64).exp()) / 20.0;
        assert!((m2 / expected - 1.0).abs() < 0.02, "second moment {m2}");
    }

    #[test]
    fn exact_integral_covariance_with_increment() {
        // Cov(I, dW) = (1 - e^{-10 c dt}) / (10 c).
        let (c, dt) = (0.8f64, 0.25f64);
        let mut s = NormalStream::new(RngSeed::new(4, 4));
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let dw = dt.sqrt() * s.next_normal();
            let i = langevin_integral(
                c,
                dt,
                Increment::with_aux(dw, s.next_normal()),
                IntegralMode::ExactGaussian,
            );
            acc += i * dw;
        }
        let cov = acc / n as f64;
        let expected = (1.0 - (-10.0f64 * c * dt).exp()) / (10.0 * c);
        assert!(
            (cov / expected - 1.0).abs() < 0.03,
            "cov {cov} vs {expected}"
        );
    }

    #[test]
    fn exp_step_values() {
        assert_relative_eq!(
            sd_exp_step(1.0, 1.0, 0.0, Some(1.0)),
            (-10.5f64).exp(),
            max_relative = 1e-14
        );
        assert_eq!(sd_exp_step(0.0, 0.5, 0.3, Some(1.0)), 0.0);
        let cap = TruncationPolicy::<f64>::example().cap(0.01).unwrap();
        assert_relative_eq!(
            sd_exp_step(1.0, 0.01, 0.1, Some(cap)),
            0.995_012_479,
            max_relative = 1e-8
        );
    }

    #[test]
    fn lsd_values() {
        assert_relative_eq!(lsd_step(-0.1, 0.5, 0.0), -3.318_132, max_relative = 1e-6);
        assert_relative_eq!(lsd_step(-1.0, 1e-300, 0.0), -1.0);
        assert_eq!(lsd_to_x(-0.1).unwrap(), 10.0);
        assert_relative_eq!(lsd_to_x(-3.31813).unwrap(), 0.301_374, max_relative = 1e-5);
        assert_eq!(lsd_to_x(-1.0).unwrap(), 1.0);
        assert!(lsd_to_x(0.0).is_err());
        assert!(lsd_to_x(0.5).is_err());
        assert!(x_to_lsd(0.0).is_err());
    }

    #[test]
    fn tem_values() {
        let p = EmTruncationPolicy::<f64>::example();
        assert_relative_eq!(
            tem_step(10.0, 0.01, 0.0, &p).unwrap(),
            10.0 - 0.1f64.sqrt() * 0.1,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            tem_step(10.0, 0.01, 0.0, &p).unwrap(),
            9.968_377,
            max_relative = 1e-7
        );
        assert_eq!(tem_step(0.0, 0.01, 0.3, &p).unwrap(), 0.0);
        assert_relative_eq!(
            tem_step(0.1, 0.01, 0.05, &p).unwrap(),
            0.1004,
            max_relative = 1e-12
        );
        assert!(tem_step(1.0, 2.0, 0.0, &p).is_err());
    }

    #[test]
    fn em_values() {
        let p = cubic(0.0);
        assert_eq!(em_step(&p, 0.0, 0.0, 0.1, 0.5), 0.0);
        assert_relative_eq!(em_step(&p, 0.0, 1.0, 0.01, 0.0), 0.9, max_relative = 1e-15);
        assert_relative_eq!(
            em_step(&p, 0.0, 10.0, 0.1, 0.0),
            -990.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn stepper_matches_tem_step() {
        let s = Scheme::<f64>::standard(SchemeKind::Tem)
            .stepper(0.01)
            .unwrap();
        let p = cubic(0.0);
        let direct = tem_step(3.0, 0.01, 0.2, &EmTruncationPolicy::example()).unwrap();
        assert_eq!(s.step(&p, 0.0, 3.0, Increment::new(0.2)), direct);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert_eq!("exp_tsd".parse::<SchemeKind>().unwrap(), SchemeKind::ExpTsd);
        assert_eq!(
            "SD_LANGEVIN".parse::<SchemeKind>().unwrap(),
            SchemeKind::SdLangevin
        );
        assert!("RK4".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn scheme_requires_policies() {
        assert!(Scheme::<f64>::new(SchemeKind::Tsd, None, None, IntegralMode::default()).is_err());
        assert!(Scheme::<f64>::new(SchemeKind::Tem, None, None, IntegralMode::default()).is_err());
        assert!(Scheme::<f64>::new(SchemeKind::Lsd, None, None, IntegralMode::default()).is_ok());
        // Truncated kinds need dt in (0, 1].
        assert!(Scheme::<f64>::standard(SchemeKind::Tsd)
            .stepper(2.0)
            .is_err());
        assert!(Scheme::<f64>::standard(SchemeKind::SdExp)
            .stepper(2.0)
            .is_ok());
    }

    #[test]
    fn semi_discrete_kinds_reject_other_problems() {
        let p = SdeProblem::custom(|_, x| -x, |_, _| 1.0, 1.0, "OU");
        let grid = TimeGrid::new(0.1, 3).unwrap();
        let dw = [0.0; 3];
        let sd = Scheme::standard(SchemeKind::Tsd);
        assert!(drive(&sd, &p, &grid, &dw, None, |_| {}).is_err());
        let em = Scheme::standard(SchemeKind::Em);
        let out = drive(&em, &p, &grid, &dw, None, |_| {}).unwrap();
        assert_relative_eq!(out.last.y, 0.9f64.powi(3), max_relative = 1e-14);
    }

    #[test]
    fn zero_step_grid_returns_initial_state() {
        let path = BrownianPath::sample(RngSeed::new(1, 1), 4, 0.25).unwrap();
        for kind in SchemeKind::ALL {
            let grid = TimeGrid::new(0.25, 0).unwrap();
            let tr = simulate_path(&Scheme::standard(kind), &cubic(10.0), &grid, &path, 0).unwrap();
            assert_eq!(tr.states.len(), 1);
            assert_eq!(tr.states[0].y, 10.0);
        }
    }

    #[test]
    fn exp_tsd_contracts_without_noise() {
        let path = BrownianPath::from_increments(RngSeed::default(), 0.25, vec![0.0; 40]).unwrap();
        let grid = TimeGrid::new(0.25, 40).unwrap();
        let tr = simulate_path(
            &Scheme::standard(SchemeKind::ExpTsd),
            &cubic(10.0),
            &grid,
            &path,
            0,
        )
        .unwrap();
        let ys: Vec<f64> = tr.values().collect();
        assert!(ys.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        assert!(*ys.last().unwrap() < 0.2);
    }

    #[test]
    fn lsd_trajectory_bounded_after_first_step() {
        let dt = 0.5;
        let path = BrownianPath::sample(RngSeed::new(9, 0), 16, dt).unwrap();
        let grid = TimeGrid::new(dt, 16).unwrap();
        let tr = simulate_path(
            &Scheme::standard(SchemeKind::Lsd),
            &cubic(10.0),
            &grid,
            &path,
            0,
        )
        .unwrap();
        let bound = 1.0 / (22.0f64 * dt).sqrt();
        assert!(tr.states[1..].iter().all(|s| s.y > 0.0 && s.y <= bound));
        assert!(simulate_path(
            &Scheme::standard(SchemeKind::Lsd),
            &cubic(-1.0),
            &grid,
            &path,
            0
        )
        .is_err());
    }

    #[test]
    fn em_diverges_from_large_initial_value() {
        let path = BrownianPath::sample(RngSeed::new(3, 0), 100, 0.5).unwrap();
        let grid = TimeGrid::new(0.5, 100).unwrap();
        let tr = simulate_path(
            &Scheme::standard(SchemeKind::Em),
            &cubic(10.0),
            &grid,
            &path,
            0,
        )
        .unwrap();
        assert!(tr.diverged());
        assert!(tr.states.iter().all(|s| s.y.is_finite()));
    }

    #[test]
    fn simulate_path_checks_level_geometry() {
        let path = BrownianPath::sample(RngSeed::new(3, 0), 4, 0.5).unwrap();
        let s = Scheme::standard(SchemeKind::Tsd);
        assert!(simulate_path(&s, &cubic(1.0), &TimeGrid::new(0.5, 5).unwrap(), &path, 0).is_err());
        assert!(
            simulate_path(&s, &cubic(1.0), &TimeGrid::new(0.25, 4).unwrap(), &path, 0).is_err()
        );
        assert!(simulate_path(&s, &cubic(1.0), &TimeGrid::new(0.5, 4).unwrap(), &path, 1).is_err());
    }

    #[test]
    fn time_grid_covering() {
        let g = TimeGrid::<f64>::covering(50.0, 0.25).unwrap();
        assert_eq!(g.n_steps(), 200);
        assert_eq!(g.horizon(), 50.0);
        assert!(TimeGrid::<f64>::covering(1.0, 0.3).is_err());
        assert!(TimeGrid::<f64>::covering(8.0, 0.09).is_err());
    }

    #[test]
    fn time_grid_reaching() {
        assert_eq!(TimeGrid::<f64>::reaching(8.0, 0.09).unwrap().n_steps(), 89);
        assert_eq!(
            TimeGrid::<f64>::reaching(50.0, 0.09).unwrap().n_steps(),
            556
        );
        assert_eq!(
            TimeGrid::<f64>::reaching(50.0, 0.25).unwrap().n_steps(),
            200
        );
        // 0.3 / 0.1 is slightly above 3 in binary.
        assert_eq!(TimeGrid::<f64>::reaching(0.3, 0.1).unwrap().n_steps(), 3);
        assert_eq!(TimeGrid::<f64>::reaching(0.0, 0.1).unwrap().n_steps(), 0);
        assert!(TimeGrid::<f64>::reaching(-1.0, 0.1).is_err());
    }

    #[test]
    fn f32_schemes_run() {
        let s = Scheme::<f32>::standard(SchemeKind::ExpTsd);
        let grid = TimeGrid::<f32>::new(0.5, 3).unwrap();
        let out = drive(
            &s,
            &SdeProblem::cubic_example(10.0f32),
            &grid,
            &[0.1, -0.2, 0.3],
            None,
            |_| {},
        )
        .unwrap();
        assert!(out.last.y > 0.0 && out.last.y < 10.0);
    }

    fn kinds_with_zero_fixed_point() -> impl Strategy<Value = SchemeKind> {
        prop::sample::select(vec![
            SchemeKind::SdLangevin,
            SchemeKind::SdExp,
            SchemeKind::Tsd,
            SchemeKind::ExpTsd,
            SchemeKind::Tem,
            SchemeKind::Em,
        ])
    }

    proptest! {
        #[test]
        fn zero_is_fixed(kind in kinds_with_zero_fixed_point(), dt in 1e-4f64..=1.0,
                         dw in -3.0f64..3.0, aux in -3.0f64..3.0, exact in any::<bool>()) {
            let mode = if exact { IntegralMode::ExactGaussian } else { IntegralMode::LowerEndpoint };
            let s = Scheme::standard(kind).with_mode(mode).stepper(dt).unwrap();
            prop_assert_eq!(s.step(&cubic(0.0), 0.0, 0.0, Increment::with_aux(dw, aux)), 0.0);
        }

        #[test]
        fn langevin_is_odd(y in -20.0f64..20.0, dt in 1e-4f64..=1.0, dw in -3.0f64..3.0,
                           aux in -3.0f64..3.0, exact in any::<bool>(), truncated in any::<bool>()) {
            let mode = if exact { IntegralMode::ExactGaussian } else { IntegralMode::LowerEndpoint };
            let cap = truncated.then(|| TruncationPolicy::<f64>::example().cap(dt).unwrap());
            let a = sd_langevin_step(y, dt, Increment::with_aux(dw, aux), cap, mode);
            let b = sd_langevin_step(-y, dt, Increment::with_aux(-dw, -aux), cap, mode);
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn positivity_is_structural(x0 in 1e-3f64..100.0, dt in 1e-3f64..=1.0,
                                    dws in prop::collection::vec(-5.0f64..5.0, 1..60)) {
            let grid = TimeGrid::new(dt, dws.len()).unwrap();
            for kind in [SchemeKind::Lsd, SchemeKind::ExpTsd] {
                let out = drive(&Scheme::standard(kind), &cubic(x0), &grid, &dws, None, |s| {
                    assert!(s.y > 0.0, "{kind} produced {}", s.y);
                }).unwrap();
                prop_assert!(!out.diverged());
            }
        }

        #[test]
        fn truncation_inactive_below_cap(x0 in -0.99f64..0.99, dt in 1e-3f64..=1.0,
                                         dws in prop::collection::vec(-0.05f64..0.05, 1..40)) {
            // The cap is at least 1 for the example policy, and these paths stay in (-1, 1).
            let grid = TimeGrid::new(dt, dws.len()).unwrap();
            for (plain, trunc) in [(SchemeKind::SdLangevin, SchemeKind::Tsd), (SchemeKind::SdExp, SchemeKind::ExpTsd)] {
                let mut a = Vec::new();
                let mut b = Vec::new();
                drive(&Scheme::standard(plain), &cubic(x0), &grid, &dws, None, |s| a.push(s.y)).unwrap();
                drive(&Scheme::standard(trunc), &cubic(x0), &grid, &dws, None, |s| b.push(s.y)).unwrap();
                prop_assume!(a.iter().all(|y| y.abs() < 1.0));
                prop_assert_eq!(a, b);
            }
        }
    }
}

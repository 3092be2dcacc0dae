//! Growth envelope `mu(u) = C u^(1+gamma)`, the step-dependent cap
//! `h(dt) = C + sqrt(eps ln(1/dt))` and the clamp `pi_dt` shared by the
//! truncated integrators, plus the cubic-envelope pair used by truncated
//! Euler–Maruyama.

use crate::error::{Error, Result};
use crate::real::Real;

// The maximum of dt^(1/6) h(dt) sits close to dt = 1, so the grid is uniform
// in ln(dt) rather than in octaves.
const GRID_POINTS: u32 = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy<T> {
    c_bar: T,
    gamma: T,
    epsilon: T,
    h_hat: T,
}

impl<T: Real> TruncationPolicy<T> {
    /// Validates the parameters, including a log-grid check of
    /// `dt^(1/6) h(dt) <= h_hat` for `dt` in `[2^-20, 1]`.
    pub fn new(c_bar: T, gamma: T, epsilon: T, h_hat: T) -> Result<Self> {
        if !(c_bar > T::zero() && c_bar.is_finite()) {
            return Err(Error::invalid(
                "c_bar",
                format!("must be positive, got {c_bar}"),
            ));
        }
        if !(gamma > T::zero() && gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be positive, got {gamma}"),
            ));
        }
        let third = T::one() / T::lit(3.0);
        if !(epsilon > T::zero() && epsilon <= third) {
            return Err(Error::invalid(
                "epsilon",
                format!("must lie in (0, 1/3], got {epsilon}"),
            ));
        }
        let policy = Self {
            c_bar,
            gamma,
            epsilon,
            h_hat,
        };
        let floor = T::one().max(policy.mu_unchecked(T::one()));
        if !(h_hat >= floor) {
            return Err(Error::invalid(
                "h_hat",
                format!("must be at least max(1, mu(1)) = {floor}, got {h_hat}"),
            ));
        }
        let sixth = T::one() / T::lit(6.0);
        for k in 0..=GRID_POINTS {
            let dt = T::lit(2f64.powf(-20.0 * k as f64 / GRID_POINTS as f64));
            let scaled = dt.powf(sixth) * policy.h_unchecked(dt);
            if scaled > h_hat {
                return Err(Error::invalid(
                    "h_hat",
                    format!("dt^(1/6) h(dt) = {scaled} exceeds {h_hat} at dt = {dt}"),
                ));
            }
        }
        Ok(policy)
    }

    /// `C = 10`, `gamma = 1`, `eps = 1/3`, `h_hat = 11`: the envelope of
    /// the cubic-drift example.
    pub fn example() -> Self {
        Self::new(T::lit(10.0), T::one(), T::one() / T::lit(3.0), T::lit(11.0))
            .expect("example policy is valid")
    }

    pub fn c_bar(&self) -> T {
        self.c_bar
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn h_hat(&self) -> T {
        self.h_hat
    }

    pub fn mu(&self, u: T) -> Result<T> {
        if !(u >= T::zero()) {
            return Err(Error::invalid("u", format!("must be nonnegative, got {u}")));
        }
        Ok(self.mu_unchecked(u))
    }

    fn mu_unchecked(&self, u: T) -> T {
        if self.gamma == T::one() {
            self.c_bar * u * u
        } else {
            self.c_bar * u.powf(T::one() + self.gamma)
        }
    }

    /// Inverse of `mu` on `[mu(1), inf)`.
    pub fn mu_inverse(&self, v: T) -> Result<T> {
        let lower = self.mu_unchecked(T::one());
        if !(v >= lower) {
            return Err(Error::invalid(
                "v",
                format!("mu^-1 is defined on [{lower}, inf), got {v}"),
            ));
        }
        Ok(self.mu_inverse_unchecked(v))
    }

    fn mu_inverse_unchecked(&self, v: T) -> T {
        let ratio = v / self.c_bar;
        if self.gamma == T::one() {
            ratio.sqrt()
        } else {
            ratio.powf(T::one() / (T::one() + self.gamma))
        }
    }

    pub fn h_of_delta(&self, dt: T) -> Result<T> {
        check_unit_step(dt)?;
        Ok(self.h_unchecked(dt))
    }

    fn h_unchecked(&self, dt: T) -> T {
        self.c_bar + (self.epsilon * -dt.ln()).sqrt()
    }

    /// Truncation level `mu^-1(h(dt))`.
    pub fn cap(&self, dt: T) -> Result<T> {
        check_unit_step(dt)?;
        Ok(self.mu_inverse_unchecked(self.h_unchecked(dt)))
    }

    /// `sign(x) * min(|x|, mu^-1(h(dt)))`, with `0` mapped to `0`.
    pub fn clamp_pi(&self, dt: T, x: T) -> Result<T> {
        Ok(clamp_to(x, self.cap(dt)?))
    }
}

/// Envelope `mu_bar(u) = C u^3` with cap `h_bar(dt) = dt^-q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmTruncationPolicy<T> {
    c_bar: T,
    q: T,
}

impl<T: Real> EmTruncationPolicy<T> {
    pub fn new(c_bar: T, q: T) -> Result<Self> {
        if !(c_bar > T::zero() && c_bar.is_finite()) {
            return Err(Error::invalid(
                "c_bar",
                format!("must be positive, got {c_bar}"),
            ));
        }
        if !(q > T::zero() && q.is_finite()) {
            return Err(Error::invalid("q", format!("must be positive, got {q}")));
        }
        Ok(Self { c_bar, q })
    }

    /// `mu_bar(u) = 10 u^3`, `h_bar(dt) = dt^(-1/4)`.
    pub fn example() -> Self {
        Self::new(T::lit(10.0), T::lit(0.25)).expect("example policy is valid")
    }

    pub fn c_bar(&self) -> T {
        self.c_bar
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn mu_bar(&self, u: T) -> T {
        self.c_bar * u * u * u
    }

    pub fn h_bar(&self, dt: T) -> Result<T> {
        check_unit_step(dt)?;
        Ok(dt.powf(-self.q))
    }

    /// `mu_bar^-1(h_bar(dt))`.
    pub fn cap(&self, dt: T) -> Result<T> {
        Ok((self.h_bar(dt)? / self.c_bar).cbrt())
    }

    pub fn clamp_em(&self, dt: T, x: T) -> Result<T> {
        Ok(clamp_to(x, self.cap(dt)?))
    }
}

/// `sign(x) * min(|x|, cap)`; zero stays zero.
#[inline]
pub fn clamp_to<T: Real>(x: T, cap: T) -> T {
    if x == T::zero() {
        T::zero()
    } else if x.abs() <= cap {
        x
    } else {
        cap.copysign(x)
    }
}

pub(crate) fn check_unit_step<T: Real>(dt: T) -> Result<()> {
    if dt > T::zero() && dt <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(
            "delta",
            format!("must lie in (0, 1], got {dt}"),
        ))
    }
}

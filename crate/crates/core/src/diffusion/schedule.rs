//! DDPM noise schedule: linear betas and the forward (noising) process.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The numbers needed to reconstruct a schedule exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_steps, self.beta_start, self.beta_end)
    }
}

/// Precomputed diffusion coefficients for T steps.
///
/// Betas rise linearly from `beta_start` to `beta_end`; `alpha_bar` is the
/// running product of (1 − β) and is strictly decreasing. Timesteps are
/// 1-based; `alpha_bar(0)` is defined as 1 (the clean-data limit).
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::InvalidInput("schedule needs at least 1 step".into()));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(Error::InvalidInput(format!(
                "invalid beta range [{beta_start}, {beta_end}]"
            )));
        }
        if t_steps > 1 && beta_start == beta_end {
            return Err(Error::InvalidInput(
                "betas must be strictly increasing".into(),
            ));
        }
        let betas: Vec<f64> = (0..t_steps)
            .map(|i| {
                if t_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(t_steps);
        let mut prod = 1.0;
        for b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(NoiseSchedule {
            spec: ScheduleSpec {
                t_steps,
                beta_start,
                beta_end,
            },
            betas,
            alpha_bars,
        })
    }

    /// T = 1000 with the standard 1e-4..0.02 linear range.
    pub fn default_full() -> Self {
        Self::linear(1000, 1e-4, 0.02).unwrap()
    }

    /// T = 100 desk-scale schedule. Betas are scaled by 1000/100 so the
    /// total accumulated noise (alpha_bar at T) matches the full schedule;
    /// otherwise x_T would still carry visible signal and sampling from
    /// pure noise would start from the wrong distribution.
    pub fn default_desk() -> Self {
        Self::linear(100, 1e-3, 0.2).unwrap()
    }

    pub fn spec(&self) -> ScheduleSpec {
        self.spec
    }

    /// Number of steps T.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.len() {
            return Err(Error::InvalidInput(format!(
                "timestep {t} outside [1, {}]",
                self.len()
            )));
        }
        Ok(())
    }

    /// β_t for t ∈ [1, T].
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// ᾱ_t for t ∈ [0, T]; ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Reverse-process posterior variance β̃_t = β_t·(1−ᾱ_{t−1})/(1−ᾱ_t);
    /// zero at t = 1.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
    }

    /// Forward noising: x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·noise.
    ///
    /// `x0` pixels are expected in [-1, 1]; `t` must be in [1, T].
    pub fn forward_sample(
        &self,
        x0: &Array2<f64>,
        t: usize,
        noise: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_t(t)?;
        if x0.dim() != noise.dim() {
            return Err(Error::Shape(format!(
                "x0 is {:?} but noise is {:?}",
                x0.dim(),
                noise.dim()
            )));
        }
        let ab = self.alpha_bar(t);
        let s0 = ab.sqrt();
        let s1 = (1.0 - ab).sqrt();
        Ok(x0 * s0 + noise * s1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn default_schedules_are_valid() {
        for s in [NoiseSchedule::default_full(), NoiseSchedule::default_desk()] {
            // strictly increasing betas in (0, 1)
            for t in 1..=s.len() {
                assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
                if t > 1 {
                    assert!(s.beta(t) > s.beta(t - 1));
                }
            }
            // strictly decreasing alpha_bar, ending far below the start
            for t in 1..=s.len() {
                assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            }
            assert!(s.alpha_bar(s.len()) < 1e-3);
            assert!(s.alpha_bar(1) <= 1.0);
        }
        // desk and full accumulate comparable total noise
        let full = NoiseSchedule::default_full();
        let desk = NoiseSchedule::default_desk();
        let ratio = desk.alpha_bar(desk.len()).ln() / full.alpha_bar(full.len()).ln();
        assert!((0.5..2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::linear(0, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::linear(10, 0.5, 0.2).is_err());
        assert!(NoiseSchedule::linear(10, 1e-4, 1.0).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 0.1).is_err());
        assert!(NoiseSchedule::linear(1, 0.1, 0.1).is_ok());
    }

    #[test]
    fn forward_sample_limits() {
        let s = NoiseSchedule::linear(10, 1e-9, 2e-9).unwrap(); // alpha_bar ≈ 1
        let x0 = Array2::from_elem((64, 64), 0.5);
        let noise = Array2::from_elem((64, 64), 1.0);
        let xt = s.forward_sample(&x0, 10, &noise).unwrap();
        for &v in xt.iter() {
            assert_relative_eq!(v, 0.5, epsilon = 1e-3);
        }

        // x0 = 0 → exactly √(1−ᾱ)·noise
        let s = NoiseSchedule::default_desk();
        let zero = Array2::zeros((64, 64));
        let xt = s.forward_sample(&zero, 50, &noise).unwrap();
        let expect = (1.0 - s.alpha_bar(50)).sqrt();
        for &v in xt.iter() {
            assert_relative_eq!(v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_sample_validates_t() {
        let s = NoiseSchedule::default_desk();
        let x = Array2::zeros((64, 64));
        assert!(s.forward_sample(&x, 0, &x).is_err());
        assert!(s.forward_sample(&x, 101, &x).is_err());
        assert!(s.forward_sample(&x, 1, &x).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn schedule_invariants(t_steps in 1usize..500, b0 in 1e-6f64..0.01, spread in 1.1f64..100.0) {
            let b1 = (b0 * spread).min(0.999);
            let s = NoiseSchedule::linear(t_steps.max(2), b0, b1).unwrap();
            let mut prev = 1.0;
            for t in 1..=s.len() {
                let ab = s.alpha_bar(t);
                prop_assert!(ab < prev);
                prop_assert!(ab > 0.0);
                prev = ab;
            }
            prop_assert!(s.alpha_bar(s.len()) < s.alpha_bar(1));
        }
    }
}

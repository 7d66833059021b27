//! Step-size schedules `α_t = α₀ / (1 + t/τ)^κ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { value: f64 },
    Decaying { initial: f64, tau: f64, kappa: f64 },
}

impl StepSchedule {
    pub fn constant(value: f64) -> Self {
        StepSchedule::Constant { value }
    }

    pub fn decaying(initial: f64, kappa: f64) -> Self {
        StepSchedule::Decaying {
            initial,
            tau: DEFAULT_TAU,
            kappa,
        }
    }

    pub fn at(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant { value } => value,
            StepSchedule::Decaying {
                initial,
                tau,
                kappa,
            } => initial / (1.0 + t as f64 / tau).powf(kappa),
        }
    }

    pub fn initial(&self) -> f64 {
        self.at(0)
    }

    /// Checks the parameters; decaying schedules must have κ ∈ (0.5, 1] so
    /// that `Σα_t = ∞` and `Σα_t² < ∞`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidSchedule(format!(
                        "constant step {value} must be finite and >= 0"
                    )));
                }
            }
            StepSchedule::Decaying {
                initial,
                tau,
                kappa,
            } => {
                if !(initial >= 0.0 && initial.is_finite()) {
                    return Err(Error::InvalidSchedule(format!(
                        "initial step {initial} must be finite and >= 0"
                    )));
                }
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidSchedule(format!(
                        "τ = {tau} must be positive"
                    )));
                }
                if !(kappa > 0.5 && kappa <= 1.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "κ = {kappa} outside (0.5, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_decaying(&self) -> bool {
        matches!(self, StepSchedule::Decaying { .. })
    }

    fn kappa(&self) -> f64 {
        match *self {
            StepSchedule::Constant { .. } => 0.0,
            StepSchedule::Decaying { kappa, .. } => kappa,
        }
    }
}

/// Which of the coupled iterations runs on the slower timescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimescaleRegime {
    /// `β_t / α_t → 0`: the critic tracks the current policy.
    #[default]
    ActorSlower,
    /// `α_t / β_t → 0`.
    CriticSlower,
}

impl TimescaleRegime {
    /// Both schedules must be valid and decaying, with the slower one
    /// decaying at a strictly larger rate.
    pub fn validate(&self, critic: &StepSchedule, actor: &StepSchedule) -> Result<()> {
        critic.validate()?;
        actor.validate()?;
        if !critic.is_decaying() || !actor.is_decaying() {
            return Err(Error::InvalidSchedule(
                "two-timescale runs need decaying schedules".into(),
            ));
        }
        let (fast, slow) = match self {
            TimescaleRegime::ActorSlower => (critic, actor),
            TimescaleRegime::CriticSlower => (actor, critic),
        };
        if slow.kappa() <= fast.kappa() {
            return Err(Error::InvalidSchedule(format!(
                "slow schedule κ = {} must exceed fast schedule κ = {}",
                slow.kappa(),
                fast.kappa()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decaying_values() {
        let s = StepSchedule::Decaying {
            initial: 0.1,
            tau: 10.0,
            kappa: 1.0,
        };
        assert_eq!(s.at(0), 0.1);
        assert!((s.at(10) - 0.05).abs() < 1e-15);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn kappa_bounds() {
        assert!(StepSchedule::decaying(0.1, 0.5).validate().is_err());
        assert!(StepSchedule::decaying(0.1, 1.2).validate().is_err());
        assert!(StepSchedule::decaying(0.1, 0.51).validate().is_ok());
        assert!(StepSchedule::constant(-1.0).validate().is_err());
        assert!(StepSchedule::constant(0.0).validate().is_ok());
    }

    #[test]
    fn regimes() {
        let critic = StepSchedule::decaying(0.1, 0.75);
        let actor = StepSchedule::decaying(0.01, 1.0);
        assert!(TimescaleRegime::ActorSlower
            .validate(&critic, &actor)
            .is_ok());
        assert!(TimescaleRegime::CriticSlower
            .validate(&critic, &actor)
            .is_err());
        assert!(TimescaleRegime::CriticSlower
            .validate(&actor, &critic)
            .is_ok());
        assert!(TimescaleRegime::ActorSlower
            .validate(&critic, &StepSchedule::constant(0.1))
            .is_err());
    }

    #[test]
    fn toml_form() {
        let s: StepSchedule =
            toml::from_str("kind = \"decaying\"\ninitial = 0.5\ntau = 100.0\nkappa = 0.8").unwrap();
        assert_eq!(
            s,
            StepSchedule::Decaying {
                initial: 0.5,
                tau: 100.0,
                kappa: 0.8
            }
        );
    }
}

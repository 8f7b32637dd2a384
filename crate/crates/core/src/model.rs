//! Physical parameters, Bose occupancies and Ohmic bath spectral functions.

use alloc::format;

use crate::error::{Error, Result};

/// Above this |ω/T| the exponential in the Bose factor is replaced by its
/// asymptote.
const EXP_CUTOFF: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemParams {
    /// Interaction scale Δ = ω_EB = ω_BC.
    pub delta: f64,
    /// Mean base frequency ω₀.
    pub omega0: f64,
    pub t_e: f64,
    pub t_b: f64,
    pub t_c: f64,
    /// Ohmic slope, shared by all three baths.
    pub kappa: f64,
    /// Evaluate the base bath in its T_B → 0 limit; `t_b` is then ignored.
    pub zero_tb: bool,
}

impl SystemParams {
    /// Parameters with κ = 1 and ω₀ = 0.
    pub fn new(delta: f64, t_e: f64, t_b: f64, t_c: f64) -> Result<Self> {
        let p = SystemParams {
            delta,
            omega0: 0.0,
            t_e,
            t_b,
            t_c,
            kappa: 1.0,
            zero_tb: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta, self.omega0, self.t_e, self.t_b, self.t_c, self.kappa]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::domain("parameters must be finite"));
        }
        if self.delta <= 0.0 {
            return Err(Error::domain(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::domain(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if self.t_e <= 0.0 || self.t_c <= 0.0 || (!self.zero_tb && self.t_b <= 0.0) {
            return Err(Error::domain("bath temperatures must be > 0"));
        }
        Ok(())
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        self.kappa = kappa;
        self.validate()?;
        Ok(self)
    }

    pub fn with_t_b(mut self, t_b: f64) -> Result<Self> {
        self.t_b = t_b;
        self.validate()?;
        Ok(self)
    }

    /// Switch the base bath to its zero-temperature limit.
    pub fn with_zero_tb(mut self) -> Self {
        self.zero_tb = true;
        self
    }

    pub fn temperature(&self, bath: Bath) -> f64 {
        match bath {
            Bath::Emitter => self.t_e,
            Bath::Base => {
                if self.zero_tb {
                    0.0
                } else {
                    self.t_b
                }
            }
            Bath::Collector => self.t_c,
        }
    }

    /// Rate G_α(ω) for bath α, honouring the T_B → 0 flag.
    pub fn bath_rate(&self, bath: Bath, omega: f64) -> Result<f64> {
        if bath == Bath::Base && self.zero_tb {
            Ok(spectral_function_zero_t(omega, self.kappa))
        } else {
            spectral_function(omega, self.temperature(bath), self.kappa)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Bath {
    Emitter,
    Base,
    Collector,
}

impl Bath {
    pub const ALL: [Bath; 3] = [Bath::Emitter, Bath::Base, Bath::Collector];

    pub fn index(self) -> usize {
        match self {
            Bath::Emitter => 0,
            Bath::Base => 1,
            Bath::Collector => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bath::Emitter => "E",
            Bath::Base => "B",
            Bath::Collector => "C",
        }
    }

    /// Transition frequency Ω_α exchanged with the bath: 2Δ for the base,
    /// Δ otherwise.
    pub fn quantum(self, delta: f64) -> f64 {
        match self {
            Bath::Base => 2.0 * delta,
            _ => delta,
        }
    }
}

/// Bose occupancy n̄(ω) = 1/(e^{ω/T} − 1).
pub fn thermal_occupancy(omega: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("temperature must be > 0, got {t}")));
    }
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::domain("occupancy diverges at omega = 0"));
    }
    let x = omega / t;
    if x > EXP_CUTOFF {
        return Ok(libm::exp(-x));
    }
    if x < -EXP_CUTOFF {
        return Ok(-1.0 - libm::exp(x));
    }
    Ok(1.0 / libm::expm1(x))
}

/// Ohmic emission-convention rate G(ω) = κω(1 + n̄(ω)).
///
/// ω > 0 is emission into the bath, ω < 0 absorption. The ω → 0 limit κT
/// is returned at ω = 0.
pub fn spectral_function(omega: f64, t: f64, kappa: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("temperature must be > 0, got {t}")));
    }
    if omega == 0.0 {
        return Ok(kappa * t);
    }
    let x = omega / t;
    // ω(1+n̄) = ω·e^x/(e^x−1) = ω/(1−e^{−x}) = −ω/expm1(−x)
    let g = if x > EXP_CUTOFF {
        omega
    } else if x < -EXP_CUTOFF {
        -omega * libm::exp(x)
    } else {
        -omega / libm::expm1(-x)
    };
    Ok(kappa * g)
}

/// T → 0 limit of [`spectral_function`]: κω for ω > 0 and zero otherwise.
pub fn spectral_function_zero_t(omega: f64, kappa: f64) -> f64 {
    if omega > 0.0 {
        kappa * omega
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn occupancy_values() {
        assert!(thermal_occupancy(1.0, 1e-6).unwrap() < 1e-300);
        let n = thermal_occupancy(1.0, 0.5).unwrap();
        assert!((n - 0.156_517_642_749_665).abs() < 1e-12);
        let m = thermal_occupancy(-1.0, 0.5).unwrap();
        assert!((m + 1.156_517_642_749_665).abs() < 1e-12);
    }

    #[test]
    fn occupancy_domain() {
        assert!(matches!(thermal_occupancy(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(thermal_occupancy(1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(thermal_occupancy(1.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn spectral_limits() {
        assert!((spectral_function(1.0, 1e-6, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(spectral_function(-1.0, 1e-6, 1.0).unwrap() < 1e-300);
        assert_eq!(spectral_function_zero_t(1.0, 1.0), 1.0);
        assert_eq!(spectral_function_zero_t(-1.0, 1.0), 0.0);
        let r = spectral_function(-1.0, 0.2, 1.0).unwrap() / spectral_function(1.0, 0.2, 1.0).unwrap();
        assert!((r - 6.737_946_999_085_467e-3).abs() < 1e-15);
        assert!((spectral_function(0.0, 0.3, 2.0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(1.0, 0.2, 0.1, 0.02).is_ok());
        assert!(SystemParams::new(0.0, 0.2, 0.1, 0.02).is_err());
        assert!(SystemParams::new(1.0, 0.2, 0.0, 0.02).is_err());
        let p = SystemParams::new(1.0, 0.2, 0.1, 0.02).unwrap();
        assert!(p.with_kappa(-1.0).is_err());
        let z = SystemParams { t_b: 0.0, ..p }.with_zero_tb();
        assert!(z.validate().is_ok());
        assert_eq!(z.bath_rate(Bath::Base, -2.0).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn kms_holds(w in 1e-3f64..20.0, t in 1e-2f64..5.0) {
            let ratio = spectral_function(-w, t, 1.0).unwrap() / spectral_function(w, t, 1.0).unwrap();
            let want = libm::exp(-w / t);
            prop_assert!(((ratio - want) / want).abs() < 1e-12);
        }

        #[test]
        fn rates_non_negative(w in 1e-3f64..50.0, t in 1e-3f64..5.0) {
            prop_assert!(spectral_function(w, t, 1.0).unwrap() >= 0.0);
            prop_assert!(spectral_function(-w, t, 1.0).unwrap() >= 0.0);
        }

        #[test]
        fn occupancy_reflection(w in 1e-3f64..20.0, t in 1e-2f64..5.0) {
            let a = thermal_occupancy(w, t).unwrap();
            let b = thermal_occupancy(-w, t).unwrap();
            prop_assert!((b + 1.0 + a).abs() < 1e-12 * (1.0 + a));
        }
    }
}

//! Free-space / two-ray-ground propagation, reception and carrier sense.
//!
//! Below the crossover distance `4π·ht·hr/λ` power falls off as `d⁻²`
//! (Friis); beyond it as `d⁻⁴` (two-ray ground). Both laws agree at the
//! crossover, so the combined curve is continuous and strictly decreasing.
//! Thresholds are not hand-set: `rx_thresh` is the power at the configured
//! transmission range and `cs_thresh` the power at the carrier-sense range.

use crate::error::{Error, Result};
use crate::mobility::Position;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams<T> {
    /// Transmit power, watts.
    pub pt: T,
    pub gt: T,
    pub gr: T,
    /// Antenna heights, meters.
    pub ht: T,
    pub hr: T,
    /// System loss `L >= 1`.
    pub sys_loss: T,
    pub wavelength: T,
    /// Minimum power for successful reception, watts.
    pub rx_thresh: T,
    /// Minimum power that makes the medium appear busy, watts.
    pub cs_thresh: T,
}

impl<T: Scalar> RadioParams<T> {
    /// Builds parameters whose thresholds correspond exactly to the given
    /// reception and carrier-sense ranges.
    #[allow(clippy::too_many_arguments)]
    pub fn calibrated(
        pt: T,
        gt: T,
        gr: T,
        ht: T,
        hr: T,
        sys_loss: T,
        wavelength: T,
        range: T,
        cs_range: T,
    ) -> Result<Self> {
        let mut p = Self {
            pt,
            gt,
            gr,
            ht,
            hr,
            sys_loss,
            wavelength,
            rx_thresh: T::one(),
            cs_thresh: T::one(),
        };
        if !(range > T::zero()) || !(cs_range >= range) {
            return Err(Error::Parameter(format!(
                "radio ranges must satisfy 0 < range <= cs_range (got {range}, {cs_range})"
            )));
        }
        p.rx_thresh = received_power(&p, range)?;
        p.cs_thresh = received_power(&p, cs_range)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.pt,
            self.gt,
            self.gr,
            self.ht,
            self.hr,
            self.wavelength,
            self.rx_thresh,
            self.cs_thresh,
        ];
        if fields.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::Parameter("radio parameters must be positive".into()));
        }
        if !(self.sys_loss >= T::one()) {
            return Err(Error::Parameter("system loss must be >= 1".into()));
        }
        if self.cs_thresh > self.rx_thresh {
            return Err(Error::Parameter("cs_thresh must not exceed rx_thresh".into()));
        }
        Ok(())
    }

    /// Distance at which the received power equals `rx_thresh`.
    pub fn reception_range(&self) -> T {
        range_for_power(self, self.rx_thresh)
    }

    /// Distance at which the received power equals `cs_thresh`.
    pub fn carrier_sense_range(&self) -> T {
        range_for_power(self, self.cs_thresh)
    }
}

/// `4π·ht·hr / λ`.
pub fn crossover_distance<T: Scalar>(p: &RadioParams<T>) -> T {
    T::lit(4.0) * T::PI() * p.ht * p.hr / p.wavelength
}

/// Friis free-space power `pt·gt·gr·λ² / ((4πd)²·L)`.
pub fn friis_power<T: Scalar>(p: &RadioParams<T>, d: T) -> T {
    let four_pi_d = T::lit(4.0) * T::PI() * d;
    p.pt * p.gt * p.gr * p.wavelength * p.wavelength / (four_pi_d * four_pi_d * p.sys_loss)
}

/// Two-ray ground power `pt·gt·gr·ht²·hr² / (d⁴·L)`.
pub fn two_ray_power<T: Scalar>(p: &RadioParams<T>, d: T) -> T {
    let d2 = d * d;
    p.pt * p.gt * p.gr * p.ht * p.ht * p.hr * p.hr / (d2 * d2 * p.sys_loss)
}

pub fn received_power<T: Scalar>(p: &RadioParams<T>, d: T) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::Domain("received_power requires d > 0"));
    }
    Ok(if d < crossover_distance(p) {
        friis_power(p, d)
    } else {
        two_ray_power(p, d)
    })
}

/// Inverse of [`received_power`] on its decreasing branches.
pub fn range_for_power<T: Scalar>(p: &RadioParams<T>, power: T) -> T {
    let dc = crossover_distance(p);
    let at_crossover = two_ray_power(p, dc);
    if power >= at_crossover {
        let num = p.pt * p.gt * p.gr * p.wavelength * p.wavelength;
        (num / (power * p.sys_loss)).sqrt() / (T::lit(4.0) * T::PI())
    } else {
        let num = p.pt * p.gt * p.gr * p.ht * p.ht * p.hr * p.hr;
        (num / (power * p.sys_loss)).sqrt().sqrt()
    }
}

/// True when a frame sent over `d` meters arrives above the reception
/// threshold. Zero distance counts as co-located and always receives.
pub fn can_receive<T: Scalar>(p: &RadioParams<T>, d: T) -> bool {
    if d <= T::zero() {
        return true;
    }
    received_power(p, d).map(|pw| pw >= p.rx_thresh).unwrap_or(false)
}

/// True when the medium at `at` is busy: some concurrent transmitter's
/// signal arrives at or above the listener's carrier-sense threshold.
pub fn senses_busy<T: Scalar>(
    listener: &RadioParams<T>,
    transmitters: &[(Position<T>, RadioParams<T>)],
    at: Position<T>,
) -> bool {
    transmitters.iter().any(|(pos, tx)| {
        let d = pos.distance(&at);
        d <= T::zero()
            || received_power(tx, d)
                .map(|pw| pw >= listener.cs_thresh)
                .unwrap_or(false)
    })
}

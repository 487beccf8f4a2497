use serde::{Deserialize, Serialize};

use super::constants::{C, OMEGA_E};
use super::{azel_from_enu, ecef_to_geodetic, enu_at, satellite_state, AzEl, EcefPosition, SatelliteState};
use crate::ingest::BroadcastEphemeris;
use crate::{Error, GnssTime, Result};

const RANGE_TOL: f64 = 1e-4;
const MAX_ITER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSolution {
    /// Geometric range between the receiver and the Earth-rotated satellite, m.
    pub range_m: f64,
    pub travel_time: f64,
    pub emission_time: crate::GnssTime,
    /// Satellite state at emission, position in the emission-time frame.
    pub state: SatelliteState,
    /// Satellite position expressed in the ECEF frame of the reception instant.
    pub rotated_position: EcefPosition,
    pub azel: AzEl,
    /// Range change caused by the Earth-rotation correction, m.
    pub sagnac_m: f64,
}

/// Rotates a position about the z axis by `-theta` (frame rotation by the Earth over `theta`).
pub fn rotate_earth(p: &EcefPosition, theta: f64) -> EcefPosition {
    let (s, c) = theta.sin_cos();
    EcefPosition::new(c * p.x + s * p.y, -s * p.x + c * p.y, p.z)
}

/// Light-time solve from the known receiver position at `reception_time`.
pub fn geometric_range(rx: &EcefPosition, reception_time: GnssTime, eph: &BroadcastEphemeris) -> Result<RangeSolution> {
    let mut tau = 0.0;
    let mut prev = f64::NAN;
    for _ in 0..MAX_ITER {
        let emission_time = reception_time.add_seconds(-tau);
        let state = satellite_state(eph, emission_time)?;
        let rotated = rotate_earth(&state.position, OMEGA_E * tau);
        let range = rotated.distance(rx);
        if (range - prev).abs() < RANGE_TOL {
            let geo = ecef_to_geodetic(rx)?;
            let azel = azel_from_enu(enu_at(&geo, rx, &rotated));
            return Ok(RangeSolution {
                range_m: range,
                travel_time: tau,
                emission_time,
                state,
                rotated_position: rotated,
                azel,
                sagnac_m: range - state.position.distance(rx),
            });
        }
        prev = range;
        tau = range / C;
    }
    Err(Error::Numerical(format!(
        "light-time iteration did not converge for {}",
        eph.satellite
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_points_are_fixed_by_rotation() {
        let p = EcefPosition::new(0.0, 0.0, 2.6e7);
        assert_eq!(rotate_earth(&p, 0.123), p);
    }
}

//! Satellite state from broadcast ephemerides, ranging and coordinate utilities.

mod orbit;
mod range;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use orbit::{satellite_state, select_ephemeris, solve_kepler, EphemerisStore, SatelliteState, MAX_EPHEMERIS_AGE};
pub use range::{geometric_range, rotate_earth, RangeSolution};

pub mod constants {
    /// Speed of light in vacuum, m/s.
    pub const C: f64 = 299_792_458.0;
    /// WGS-84 Earth rotation rate, rad/s.
    pub const OMEGA_E: f64 = 7.292_115_146_7e-5;
    /// GPS value of the Earth gravitational constant, m^3/s^2.
    pub const GM_GPS: f64 = 3.986_005e14;
    /// Galileo value of the Earth gravitational constant, m^3/s^2.
    pub const GM_GAL: f64 = 3.986_004_418e14;
    /// Relativistic clock correction constant, s/sqrt(m).
    pub const F_REL: f64 = -4.442_807_633e-10;
    pub const WGS84_A: f64 = 6_378_137.0;
    pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
    pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
}

use constants::{WGS84_A, WGS84_E2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcefPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &EcefPosition) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(&self, other: &EcefPosition, w: f64) -> EcefPosition {
        EcefPosition::new(
            self.x + w * (other.x - self.x),
            self.y + w * (other.y - self.y),
            self.z + w * (other.z - self.z),
        )
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Azimuth in `[0, 2π)` and elevation in `[-π/2, π/2]`, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzEl {
    pub azimuth: f64,
    pub elevation: f64,
}

impl AzEl {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth: azimuth.rem_euclid(2.0 * PI),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Self {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }
}

/// Geodetic latitude, longitude (radians) and ellipsoidal height (m) on WGS-84.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
}

pub fn ecef_to_geodetic(p: &EcefPosition) -> Result<Geodetic> {
    if !p.is_finite() || p.norm() == 0.0 {
        return Err(Error::InvalidInput("geodetic conversion of a zero or non-finite position".into()));
    }
    let lon = p.y.atan2(p.x);
    let rho = p.x.hypot(p.y);
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    for _ in 0..20 {
        let (s, c) = lat.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt();
        let height = rho * c + (p.z + WGS84_E2 * n * s) * s - n;
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + height)));
        let delta = (next - lat).abs();
        lat = next;
        if delta < 1e-13 {
            break;
        }
    }
    let (s, c) = lat.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt();
    let height = rho * c + (p.z + WGS84_E2 * n * s) * s - n;
    Ok(Geodetic { lat, lon, height })
}

pub fn geodetic_to_ecef(g: &Geodetic) -> EcefPosition {
    let (sl, cl) = g.lat.sin_cos();
    let (so, co) = g.lon.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
    EcefPosition::new(
        (n + g.height) * cl * co,
        (n + g.height) * cl * so,
        (n * (1.0 - WGS84_E2) + g.height) * sl,
    )
}

/// East-North-Up components of `target - origin` in the frame at `origin`.
pub fn enu(origin: &EcefPosition, target: &EcefPosition) -> Result<[f64; 3]> {
    let g = ecef_to_geodetic(origin)?;
    Ok(enu_at(&g, origin, target))
}

pub(crate) fn enu_at(g: &Geodetic, origin: &EcefPosition, target: &EcefPosition) -> [f64; 3] {
    let (sl, cl) = g.lat.sin_cos();
    let (so, co) = g.lon.sin_cos();
    let (dx, dy, dz) = (target.x - origin.x, target.y - origin.y, target.z - origin.z);
    let e = -so * dx + co * dy;
    let n = -sl * co * dx - sl * so * dy + cl * dz;
    let u = cl * co * dx + cl * so * dy + sl * dz;
    [e, n, u]
}

pub fn azel_from_enu(v: [f64; 3]) -> AzEl {
    let [e, n, u] = v;
    AzEl::new(e.atan2(n), u.atan2(e.hypot(n)))
}

pub fn azimuth_elevation(rx: &EcefPosition, sat: &EcefPosition) -> Result<AzEl> {
    Ok(azel_from_enu(enu(rx, sat)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equator_points() {
        let g = ecef_to_geodetic(&EcefPosition::new(WGS84_A, 0.0, 0.0)).unwrap();
        assert_eq!(g.lat, 0.0);
        assert_eq!(g.lon, 0.0);
        assert!(g.height.abs() < 1e-9);
        let g = ecef_to_geodetic(&EcefPosition::new(0.0, WGS84_A, 0.0)).unwrap();
        assert!((g.lon - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn zero_position_rejected() {
        assert!(ecef_to_geodetic(&EcefPosition::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn overhead_is_zenith() {
        let rx = EcefPosition::new(WGS84_A, 0.0, 0.0);
        let sat = EcefPosition::new(WGS84_A + 2.0e7, 0.0, 0.0);
        let ae = azimuth_elevation(&rx, &sat).unwrap();
        assert_eq!(ae.elevation, FRAC_PI_2);
    }

    #[test]
    fn north_pole_geodetic() {
        let b = WGS84_A * (1.0 - constants::WGS84_F);
        let g = ecef_to_geodetic(&EcefPosition::new(0.0, 0.0, b + 100.0)).unwrap();
        assert!((g.lat - FRAC_PI_2).abs() < 1e-12);
        assert!((g.height - 100.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn geodetic_round_trip(lat in -1.55f64..1.55, lon in -3.14f64..3.14, h in -500.0f64..20_000.0) {
            let g = Geodetic { lat, lon, height: h };
            let back = ecef_to_geodetic(&geodetic_to_ecef(&g)).unwrap();
            prop_assert!((back.lat - lat).abs() < 1e-9);
            prop_assert!((back.lon - lon).abs() < 1e-9);
            prop_assert!((back.height - h).abs() < 1e-4);
        }

        #[test]
        fn elevation_and_azimuth_ranges(lat in -1.5f64..1.5, lon in -3.1f64..3.1,
                                        sx in -3.0e7f64..3.0e7, sy in -3.0e7f64..3.0e7, sz in -3.0e7f64..3.0e7) {
            let rx = geodetic_to_ecef(&Geodetic { lat, lon, height: 0.0 });
            let sat = EcefPosition::new(sx, sy, sz);
            prop_assume!(sat.distance(&rx) > 1.0);
            let ae = azimuth_elevation(&rx, &sat).unwrap();
            prop_assert!(ae.azimuth >= 0.0 && ae.azimuth < 2.0 * PI);
            prop_assert!(ae.elevation > -FRAC_PI_2 - 1e-15 && ae.elevation <= FRAC_PI_2);
        }

        #[test]
        fn distance_invariant_under_common_rotation(theta in -3.0f64..3.0,
                                                    a in prop::array::uniform3(-3.0e7f64..3.0e7),
                                                    b in prop::array::uniform3(-3.0e7f64..3.0e7)) {
            let p = EcefPosition::new(a[0], a[1], a[2]);
            let q = EcefPosition::new(b[0], b[1], b[2]);
            let d0 = p.distance(&q);
            let d1 = rotate_earth(&p, theta).distance(&rotate_earth(&q, theta));
            prop_assert!((d0 - d1).abs() <= 1e-8 * d0.max(1.0));
        }
    }
}

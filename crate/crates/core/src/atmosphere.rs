//! Ionospheric (Klobuchar) and tropospheric (Saastamoinen) delay models.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geodesy::constants::C;
use crate::geodesy::AzEl;
use crate::ingest::{IonoParams, F_L1};
use crate::{Error, Result};

/// Minimum elevation accepted by the tropospheric mapping, radians (2 degrees).
pub const MIN_TROPO_ELEVATION: f64 = 2.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AtmosphericDelays {
    pub iono: f64,
    pub tropo: f64,
}

/// Klobuchar slant ionospheric delay in meters at `carrier_frequency`.
///
/// `lat`/`lon` are geodetic radians of the receiver, `gps_time` is seconds of
/// GPS week (only its value modulo one day matters).
pub fn klobuchar_delay(iono: Option<&IonoParams>, lat: f64, lon: f64, azel: AzEl, gps_time: f64, carrier_frequency: f64) -> Result<f64> {
    let iono = iono.ok_or_else(|| Error::InvalidInput("Klobuchar coefficients absent".into()))?;
    if azel.elevation < 0.0 {
        return Err(Error::OutOfDomain(format!("negative elevation {}", azel.elevation)));
    }
    if !(carrier_frequency > 0.0) {
        return Err(Error::InvalidInput(format!("bad carrier frequency {carrier_frequency}")));
    }
    // semicircles throughout
    let el = azel.elevation / PI;
    let phi_u = lat / PI;
    let lam_u = lon / PI;
    let psi = 0.0137 / (el + 0.11) - 0.022;
    let phi_i = (phi_u + psi * azel.azimuth.cos()).clamp(-0.416, 0.416);
    let lam_i = lam_u + psi * azel.azimuth.sin() / (phi_i * PI).cos();
    let phi_m = phi_i + 0.064 * ((lam_i - 1.617) * PI).cos();
    let local_time = (4.32e4 * lam_i + gps_time).rem_euclid(86_400.0);

    let poly = |c: &[f64; 4]| c[0] + phi_m * (c[1] + phi_m * (c[2] + phi_m * c[3]));
    let amp = poly(&iono.alpha).max(0.0);
    let per = poly(&iono.beta).max(72_000.0);
    let x = 2.0 * PI * (local_time - 50_400.0) / per;
    let obliquity = 1.0 + 16.0 * (0.53 - el).powi(3);
    let delay_s = if x.abs() < 1.57 {
        obliquity * (5.0e-9 + amp * (1.0 - x * x / 2.0 + x.powi(4) / 24.0))
    } else {
        obliquity * 5.0e-9
    };
    let scale = (F_L1 / carrier_frequency).powi(2);
    Ok(delay_s * C * scale)
}

/// Standard-atmosphere Saastamoinen model with `1/sin(el)` mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TropoModel {
    /// Relative humidity in `[0, 1]`.
    pub relative_humidity: f64,
}

impl Default for TropoModel {
    fn default() -> Self {
        Self { relative_humidity: 0.5 }
    }
}

impl TropoModel {
    /// Zenith total delay at ellipsoidal height `height` (m).
    pub fn zenith_delay(&self, height: f64) -> Result<f64> {
        if !(-1000.0..=40_000.0).contains(&height) {
            return Err(Error::OutOfDomain(format!("height {height} m outside standard atmosphere")));
        }
        let pressure = 1013.25 * (1.0 - 2.2557e-5 * height).powf(5.2568);
        let temperature = 15.0 - 6.5e-3 * height + 273.15;
        let vapour = 6.108 * self.relative_humidity * ((17.15 * temperature - 4684.0) / (temperature - 38.45)).exp();
        let hydrostatic = 0.002_277 * pressure;
        let wet = 0.002_277 * (1255.0 / temperature + 0.05) * vapour;
        Ok(hydrostatic + wet)
    }

    pub fn slant_delay(&self, azel: AzEl, height: f64) -> Result<f64> {
        if azel.elevation <= MIN_TROPO_ELEVATION {
            return Err(Error::OutOfDomain(format!(
                "elevation {:.3} deg below tropospheric mapping limit",
                azel.elevation.to_degrees()
            )));
        }
        Ok(self.zenith_delay(height)? / azel.elevation.sin())
    }
}

/// Slant tropospheric delay (m) with the default humidity.
pub fn tropospheric_delay(azel: AzEl, height: f64) -> Result<f64> {
    TropoModel::default().slant_delay(azel, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::F_L5;
    use proptest::prelude::*;

    const IONO: IonoParams = IonoParams {
        alpha: [1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8],
        beta: [9.0112e4, 4.9152e4, -1.3107e5, -3.2768e5],
    };

    #[test]
    fn night_zenith_floor() {
        // lon 0, gps_time 0 -> local midnight, cosine term clamped
        let d = klobuchar_delay(Some(&IONO), 0.8, 0.0, AzEl::new(0.0, PI / 2.0), 0.0, F_L1).unwrap();
        let f = 1.0 + 16.0 * (0.53f64 - 0.5).powi(3);
        assert!((d - f * 5e-9 * C).abs() < 1e-12);
        assert!((d - 1.5).abs() < 0.01);
    }

    #[test]
    fn low_elevation_larger() {
        let hi = klobuchar_delay(Some(&IONO), 0.8, 0.1, AzEl::from_degrees(30.0, 90.0), 50_000.0, F_L1).unwrap();
        let lo = klobuchar_delay(Some(&IONO), 0.8, 0.1, AzEl::from_degrees(30.0, 5.0), 50_000.0, F_L1).unwrap();
        assert!(lo > hi);
    }

    #[test]
    fn l5_scaling() {
        let azel = AzEl::from_degrees(120.0, 40.0);
        let l1 = klobuchar_delay(Some(&IONO), 0.7, 0.02, azel, 40_000.0, F_L1).unwrap();
        let l5 = klobuchar_delay(Some(&IONO), 0.7, 0.02, azel, 40_000.0, F_L5).unwrap();
        let expect = l1 * (1575.42f64 / 1176.45).powi(2);
        assert!(((l5 - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn absent_coefficients_error() {
        assert!(klobuchar_delay(None, 0.0, 0.0, AzEl::new(0.0, 1.0), 0.0, F_L1).is_err());
    }

    #[test]
    fn tropo_examples() {
        let zen = tropospheric_delay(AzEl::new(0.0, PI / 2.0), 0.0).unwrap();
        assert!(zen > 2.3 && zen < 2.45, "zenith {zen}");
        let at30 = tropospheric_delay(AzEl::from_degrees(0.0, 30.0), 0.0).unwrap();
        assert!((at30 - 2.0 * zen).abs() < 1e-12);
        let high = tropospheric_delay(AzEl::new(0.0, PI / 2.0), 5000.0).unwrap();
        assert!(high < zen);
        assert!(matches!(tropospheric_delay(AzEl::from_degrees(0.0, 2.0), 0.0), Err(Error::OutOfDomain(_))));
    }

    proptest! {
        #[test]
        fn klobuchar_daily_period(lat in -1.4f64..1.4, lon in -3.1f64..3.1, az in 0.0f64..6.28,
                                  el in 0.0f64..1.57, t in 0.0f64..86_400.0, k in 1i32..6) {
            let azel = AzEl::new(az, el);
            let a = klobuchar_delay(Some(&IONO), lat, lon, azel, t, F_L1).unwrap();
            let b = klobuchar_delay(Some(&IONO), lat, lon, azel, t + f64::from(k) * 86_400.0, F_L1).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn delays_non_negative_and_non_increasing_in_elevation(
            lat in -1.4f64..1.4, lon in -3.1f64..3.1, az in 0.0f64..6.28,
            e1 in 0.05f64..1.57, e2 in 0.05f64..1.57, t in 0.0f64..86_400.0, h in 0.0f64..3000.0) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let i_lo = klobuchar_delay(Some(&IONO), lat, lon, AzEl::new(az, lo), t, F_L1).unwrap();
            let i_hi = klobuchar_delay(Some(&IONO), lat, lon, AzEl::new(az, hi), t, F_L1).unwrap();
            prop_assert!(i_hi >= 0.0 && i_hi < 150.0);
            prop_assert!(i_lo >= i_hi, "iono {} at el {} < {} at el {}", i_lo, lo, i_hi, hi);
            let t_lo = tropospheric_delay(AzEl::new(az, lo), h).unwrap();
            let t_hi = tropospheric_delay(AzEl::new(az, hi), h).unwrap();
            prop_assert!(t_hi >= 0.0 && t_lo >= t_hi && t_lo < 100.0);
        }
    }
}

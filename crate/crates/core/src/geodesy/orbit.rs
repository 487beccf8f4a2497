use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::constants::{F_REL, GM_GAL, GM_GPS, OMEGA_E};
use super::EcefPosition;
use crate::ingest::{BroadcastEphemeris, Constellation, SatelliteId};
use crate::{Error, GnssTime, Result};

/// Maximum |t - toe| for which a broadcast record is used, seconds.
pub const MAX_EPHEMERIS_AGE: f64 = 4.0 * 3600.0;
const KEPLER_TOL: f64 = 1e-12;
const KEPLER_MAX_ITER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    /// Antenna position in the ECEF frame of the emission instant.
    pub position: EcefPosition,
    /// Clock polynomial plus relativistic term, seconds. Excludes group delay.
    pub clock_offset: f64,
    pub relativistic_term: f64,
}

/// Healthy record nearest in toe, within [`MAX_EPHEMERIS_AGE`].
pub fn select_ephemeris<'a>(
    collection: &'a [BroadcastEphemeris],
    satellite: SatelliteId,
    time: GnssTime,
) -> Result<&'a BroadcastEphemeris> {
    collection
        .iter()
        .filter(|e| e.satellite == satellite && e.is_healthy())
        .map(|e| (time.seconds_since(&e.toe).abs(), e))
        .filter(|(age, _)| *age <= MAX_EPHEMERIS_AGE)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, e)| e)
        .ok_or_else(|| Error::NoEphemeris {
            satellite: satellite.to_string(),
            time: time.to_string(),
        })
}

/// Ephemerides grouped per satellite, sorted by toe.
#[derive(Debug, Clone, Default)]
pub struct EphemerisStore {
    by_sat: BTreeMap<SatelliteId, Vec<BroadcastEphemeris>>,
}

impl EphemerisStore {
    pub fn new(ephemerides: impl IntoIterator<Item = BroadcastEphemeris>) -> Self {
        let mut by_sat: BTreeMap<SatelliteId, Vec<BroadcastEphemeris>> = BTreeMap::new();
        for e in ephemerides {
            by_sat.entry(e.satellite).or_default().push(e);
        }
        for list in by_sat.values_mut() {
            list.sort_by(|a, b| a.toe.partial_cmp(&b.toe).expect("finite toe"));
        }
        Self { by_sat }
    }

    pub fn select(&self, satellite: SatelliteId, time: GnssTime) -> Result<&BroadcastEphemeris> {
        select_ephemeris(self.by_sat.get(&satellite).map(Vec::as_slice).unwrap_or(&[]), satellite, time)
    }

    pub fn satellites(&self) -> impl Iterator<Item = SatelliteId> + '_ {
        self.by_sat.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.by_sat.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_sat.is_empty()
    }
}

/// Newton solve of `E - e sin E = M`.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    let mut ek = mean_anomaly;
    for _ in 0..KEPLER_MAX_ITER {
        let step = (ek - e * ek.sin() - mean_anomaly) / (1.0 - e * ek.cos());
        ek -= step;
        if step.abs() < KEPLER_TOL {
            return Ok(ek);
        }
    }
    Err(Error::Numerical(format!(
        "Kepler iteration did not converge (M = {mean_anomaly}, e = {e})"
    )))
}

fn gm(c: Constellation) -> f64 {
    match c {
        Constellation::Gps => GM_GPS,
        Constellation::Galileo => GM_GAL,
    }
}

/// Broadcast-ephemeris satellite position and clock at `t` (system time of emission).
pub fn satellite_state(eph: &BroadcastEphemeris, t: GnssTime) -> Result<SatelliteState> {
    let a = eph.sqrt_a * eph.sqrt_a;
    let n0 = (gm(eph.satellite.constellation) / (a * a * a)).sqrt();
    let tk = t.seconds_since(&eph.toe);
    let n = n0 + eph.delta_n;
    let mk = eph.m0 + n * tk;
    let ek = solve_kepler(mk, eph.e)?;
    let (sin_e, cos_e) = ek.sin_cos();

    let nu = ((1.0 - eph.e * eph.e).sqrt() * sin_e).atan2(cos_e - eph.e);
    let phi = nu + eph.omega;
    let (s2, c2) = (2.0 * phi).sin_cos();
    let du = eph.cus * s2 + eph.cuc * c2;
    let dr = eph.crs * s2 + eph.crc * c2;
    let di = eph.cis * s2 + eph.cic * c2;
    let u = phi + du;
    let r = a * (1.0 - eph.e * cos_e) + dr;
    let i = eph.i0 + di + eph.i_dot * tk;
    let (xp, yp) = (r * u.cos(), r * u.sin());
    let omega_k = eph.omega0 + (eph.omega_dot - OMEGA_E) * tk - OMEGA_E * eph.toe.sow;
    let (so, co) = omega_k.sin_cos();
    let (si, ci) = i.sin_cos();
    let position = EcefPosition::new(xp * co - yp * ci * so, xp * so + yp * ci * co, yp * si);

    let dt = t.seconds_since(&eph.toc);
    let relativistic_term = F_REL * eph.e * eph.sqrt_a * sin_e;
    let clock_offset = eph.af0 + eph.af1 * dt + eph.af2 * dt * dt + relativistic_term;
    Ok(SatelliteState {
        position,
        clock_offset,
        relativistic_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sample_eph() -> BroadcastEphemeris {
        // G01, 2020-01-01 02:00:00 broadcast record
        BroadcastEphemeris {
            satellite: SatelliteId::new(Constellation::Gps, 1),
            toc: GnssTime::new(2086, 266400.0),
            toe: GnssTime::new(2086, 266400.0),
            sqrt_a: 5.153604660034e3,
            e: 8.880328526720e-3,
            i0: 9.762625954106e-1,
            omega0: -1.069466757961,
            omega: 7.236658916570e-1,
            m0: 2.519126521085,
            delta_n: 4.063740445115e-9,
            i_dot: 1.139333029883e-10,
            omega_dot: -7.908545732051e-9,
            cuc: -6.346404552460e-6,
            cus: 1.006014645100e-5,
            crc: 1.968750000000e2,
            crs: -1.246875000000e2,
            cic: 9.499490261078e-8,
            cis: -1.713633537292e-7,
            af0: 4.691267386079e-4,
            af1: -9.094947017729e-13,
            af2: 0.0,
            tgd: 5.122274160385e-9,
            health: 0,
            iode: 45.0,
        }
    }

    #[test]
    fn circular_orbit_radius_and_no_relativistic_term() {
        let mut eph = sample_eph();
        eph.e = 0.0;
        for c in [&mut eph.cuc, &mut eph.cus, &mut eph.crc, &mut eph.crs, &mut eph.cic, &mut eph.cis] {
            *c = 0.0;
        }
        for dt in [0.0, 1234.5, -3000.0] {
            let s = satellite_state(&eph, eph.toe.add_seconds(dt)).unwrap();
            let a = eph.sqrt_a * eph.sqrt_a;
            assert!((s.position.norm() - a).abs() < 1e-6, "radius {}", s.position.norm());
            assert_eq!(s.relativistic_term, 0.0);
        }
    }

    #[test]
    fn state_invariants_on_real_record() {
        let eph = sample_eph();
        let s = satellite_state(&eph, eph.toe).unwrap();
        assert!(s.clock_offset.abs() < 1e-2);
        assert!(s.relativistic_term.abs() < 1e-7);
        let r = s.position.norm();
        assert!(r > 2.5e7 && r < 2.75e7);
    }

    #[test]
    fn selection_rules() {
        let mut a = sample_eph();
        a.toe = GnssTime::new(2086, 0.0);
        let mut b = sample_eph();
        b.toe = GnssTime::new(2086, 7200.0);
        let sat = a.satellite;
        let list = vec![a.clone(), b.clone()];
        assert_eq!(select_ephemeris(&list, sat, GnssTime::new(2086, 3000.0)).unwrap().toe, a.toe);
        assert_eq!(select_ephemeris(&list, sat, GnssTime::new(2086, 4000.0)).unwrap().toe, b.toe);

        let single = [a.clone()];
        let far = select_ephemeris(&single, sat, GnssTime::new(2086, 5.0 * 3600.0));
        assert!(matches!(far, Err(Error::NoEphemeris { .. })));

        let mut sick = a.clone();
        sick.toe = GnssTime::new(2086, 3600.0);
        sick.health = 1;
        let mut well = a.clone();
        well.toe = GnssTime::new(2086, 7200.0);
        let pair = [sick, well.clone()];
        let chosen = select_ephemeris(&pair, sat, GnssTime::new(2086, 5400.0)).unwrap();
        assert_eq!(chosen.toe, well.toe);
    }

    proptest! {
        #[test]
        fn kepler_residual(m in 0.0f64..(2.0 * std::f64::consts::PI), e in 0.0f64..0.1) {
            let ek = solve_kepler(m, e).unwrap();
            prop_assert!((ek - e * ek.sin() - m).abs() < 1e-12);
        }
    }
}

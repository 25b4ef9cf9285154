//! Definite-time protection functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scl::{AttributePath, LnClass, ThresholdUnits};
use crate::store::Quantity;

/// Voltages below this fraction of nominal count as a de-energized bus.
pub const DEAD_BUS_PU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProtectionKind {
    Ptoc,
    Ptov,
    Ptuv,
    Ptrc,
    Cilo,
    Pdif,
    Pdis,
}

impl ProtectionKind {
    pub fn from_class(c: &LnClass) -> Option<ProtectionKind> {
        Some(match c {
            LnClass::Ptoc => ProtectionKind::Ptoc,
            LnClass::Ptov => ProtectionKind::Ptov,
            LnClass::Ptuv => ProtectionKind::Ptuv,
            LnClass::Ptrc => ProtectionKind::Ptrc,
            LnClass::Cilo => ProtectionKind::Cilo,
            LnClass::Pdif => ProtectionKind::Pdif,
            LnClass::Pdis => ProtectionKind::Pdis,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProtectionKind::Ptoc => "PTOC",
            ProtectionKind::Ptov => "PTOV",
            ProtectionKind::Ptuv => "PTUV",
            ProtectionKind::Ptrc => "PTRC",
            ProtectionKind::Cilo => "CILO",
            ProtectionKind::Pdif => "PDIF",
            ProtectionKind::Pdis => "PDIS",
        }
    }

    /// Quantity watched when the thresholds do not name inputs.
    pub fn default_quantities(self) -> &'static [Quantity] {
        match self {
            ProtectionKind::Ptoc | ProtectionKind::Pdif => &[Quantity::Current],
            ProtectionKind::Ptov | ProtectionKind::Ptuv => &[Quantity::Voltage],
            ProtectionKind::Pdis => &[Quantity::Voltage, Quantity::Current],
            ProtectionKind::Ptrc | ProtectionKind::Cilo => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    None,
    Alarm,
    Trip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionInput {
    pub path: AttributePath,
    pub quantity: Option<Quantity>,
    /// Store point behind the attribute, if it is locally mapped.
    pub physical: Option<String>,
    /// Nominal value for per-unit scaling.
    pub base: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionConfig {
    pub kind: ProtectionKind,
    /// LN reference inside the IED, e.g. `PTOV1`.
    pub ln: String,
    pub monitored: Vec<ProtectionInput>,
    pub alarm_threshold: Option<f64>,
    pub trip_threshold: Option<f64>,
    pub units: ThresholdUnits,
    pub target_cb: Option<String>,
    pub zone_impedance_ohm: Option<f64>,
    pub pickup_a: Option<f64>,
    /// Remote quantity: partner current (PDIF), partner breaker (CILO),
    /// intertrip signal (PTRC).
    pub partner: Option<AttributePath>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtectionError {
    #[error("no value for `{0}`")]
    MissingValue(String),
}

impl ProtectionConfig {
    /// Convert a raw engineering value of `input` into threshold units.
    pub fn scale(&self, input: &ProtectionInput, raw: f64) -> f64 {
        match (self.units, input.base) {
            (ThresholdUnits::Pu, Some(b)) if b > 0.0 => raw / b,
            _ => raw,
        }
    }

    fn trip_reach(&self) -> Option<f64> {
        self.zone_impedance_ohm.or(self.trip_threshold)
    }
}

fn over(x: f64, alarm: Option<f64>, trip: Option<f64>) -> Decision {
    if trip.is_some_and(|t| x > t) {
        Decision::Trip
    } else if alarm.is_some_and(|a| x > a) {
        Decision::Alarm
    } else {
        Decision::None
    }
}

fn under(x: f64, alarm: Option<f64>, trip: Option<f64>) -> Decision {
    if trip.is_some_and(|t| x < t) {
        Decision::Trip
    } else if alarm.is_some_and(|a| x < a) {
        Decision::Alarm
    } else {
        Decision::None
    }
}

/// Evaluate one function. `values` holds every monitored (and partner)
/// attribute, already in the configuration's units.
pub fn eval_protection(cfg: &ProtectionConfig, values: &BTreeMap<String, f64>) -> Result<Decision, ProtectionError> {
    let get = |p: &AttributePath| {
        values
            .get(p.as_str())
            .copied()
            .ok_or_else(|| ProtectionError::MissingValue(p.to_string()))
    };
    let of = |q: Quantity| -> Result<Vec<f64>, ProtectionError> {
        cfg.monitored
            .iter()
            .filter(|i| i.quantity.is_none_or(|iq| iq == q))
            .map(|i| get(&i.path).map(f64::abs))
            .collect()
    };
    let partner = || {
        cfg.partner
            .as_ref()
            .ok_or_else(|| ProtectionError::MissingValue(format!("{} partner", cfg.ln)))
            .and_then(get)
    };
    Ok(match cfg.kind {
        ProtectionKind::Ptoc | ProtectionKind::Ptov => {
            let q = if cfg.kind == ProtectionKind::Ptoc { Quantity::Current } else { Quantity::Voltage };
            let xs = of(q)?;
            match xs.iter().copied().reduce(f64::max) {
                Some(x) => over(x, cfg.alarm_threshold, cfg.trip_threshold),
                None => Decision::None,
            }
        }
        ProtectionKind::Ptuv => {
            let xs = of(Quantity::Voltage)?;
            let dead_level = match cfg.units {
                ThresholdUnits::Pu => DEAD_BUS_PU,
                _ => cfg
                    .monitored
                    .iter()
                    .find_map(|i| i.base)
                    .map(|b| b * DEAD_BUS_PU)
                    .unwrap_or(1e-9),
            };
            // Undervoltage blocks on a dead bus so an opened feeder does not
            // cascade trips through everything downstream.
            if xs.is_empty() || xs.iter().all(|&x| x < dead_level) {
                Decision::None
            } else {
                under(xs.iter().copied().fold(f64::INFINITY, f64::min), cfg.alarm_threshold, cfg.trip_threshold)
            }
        }
        ProtectionKind::Pdif => {
            let local = of(Quantity::Current)?;
            let Some(&l) = local.first() else {
                return Ok(Decision::None);
            };
            let d = (l - partner()?.abs()).abs();
            over(d, cfg.alarm_threshold, cfg.trip_threshold)
        }
        ProtectionKind::Pdis => {
            let v = cfg
                .monitored
                .iter()
                .filter(|i| i.quantity == Some(Quantity::Voltage))
                .map(|i| get(&i.path).map(f64::abs))
                .collect::<Result<Vec<_>, _>>()?;
            let i = cfg
                .monitored
                .iter()
                .filter(|i| i.quantity == Some(Quantity::Current))
                .map(|i| get(&i.path).map(f64::abs))
                .collect::<Result<Vec<_>, _>>()?;
            let pickup = cfg.pickup_a.unwrap_or(0.0);
            let z = v
                .iter()
                .zip(&i)
                .filter(|(_, &ia)| ia > pickup && ia > 0.0)
                .map(|(&va, &ia)| va / ia)
                .fold(f64::INFINITY, f64::min);
            if z.is_finite() {
                under(z, cfg.alarm_threshold, cfg.trip_reach())
            } else {
                Decision::None
            }
        }
        ProtectionKind::Ptrc => {
            if cfg.partner.is_some() && partner()? >= 0.5 {
                Decision::Trip
            } else {
                Decision::None
            }
        }
        ProtectionKind::Cilo => {
            // Partner breaker open: the interlock demands this one open too.
            if partner()? < 0.5 {
                Decision::Trip
            } else {
                Decision::None
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(p: &str, q: Quantity) -> ProtectionInput {
        ProtectionInput {
            path: p.parse().unwrap(),
            quantity: Some(q),
            physical: None,
            base: None,
        }
    }

    fn cfg(kind: ProtectionKind, monitored: Vec<ProtectionInput>, alarm: f64, trip: f64) -> ProtectionConfig {
        ProtectionConfig {
            kind,
            ln: format!("{}1", kind.as_str()),
            monitored,
            alarm_threshold: Some(alarm),
            trip_threshold: Some(trip),
            units: ThresholdUnits::Pu,
            target_cb: Some("CB1.Pos".into()),
            zone_impedance_ohm: None,
            pickup_a: None,
            partner: None,
        }
    }

    fn vals(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ptov_bands() {
        let c = cfg(ProtectionKind::Ptov, vec![input("I.MMXU1.PhV.phsA", Quantity::Voltage)], 1.05, 1.10);
        let at = |v| eval_protection(&c, &vals(&[("I.MMXU1.PhV.phsA", v)])).unwrap();
        assert_eq!(at(1.2), Decision::Trip);
        assert_eq!(at(1.07), Decision::Alarm);
        assert_eq!(at(1.0), Decision::None);
    }

    #[test]
    fn ptuv_trip_and_dead_bus() {
        let c = cfg(ProtectionKind::Ptuv, vec![input("I.MMXU1.PhV.phsA", Quantity::Voltage)], 0.9, 0.9);
        let at = |v| eval_protection(&c, &vals(&[("I.MMXU1.PhV.phsA", v)])).unwrap();
        assert_eq!(at(0.85), Decision::Trip);
        assert_eq!(at(0.0), Decision::None);
    }

    #[test]
    fn pdif_balanced_through_current() {
        let mut c = cfg(ProtectionKind::Pdif, vec![input("I.MMXU1.A.phsA", Quantity::Current)], 0.1, 0.2);
        c.units = ThresholdUnits::A;
        c.partner = Some("J.MMXU1.A.phsA".parse().unwrap());
        let v = vals(&[("I.MMXU1.A.phsA", 1.0), ("J.MMXU1.A.phsA", 1.0)]);
        assert_eq!(eval_protection(&c, &v).unwrap(), Decision::None);
        let v = vals(&[("I.MMXU1.A.phsA", 1.0), ("J.MMXU1.A.phsA", 0.7)]);
        assert_eq!(eval_protection(&c, &v).unwrap(), Decision::Trip);
    }

    #[test]
    fn pdis_ratio_matches_brute_force() {
        let mut c = cfg(
            ProtectionKind::Pdis,
            vec![input("I.MMXU1.PhV.phsA", Quantity::Voltage), input("I.MMXU1.A.phsA", Quantity::Current)],
            12.0,
            10.0,
        );
        c.units = ThresholdUnits::Ohm;
        let v = vals(&[("I.MMXU1.PhV.phsA", 6000.0), ("I.MMXU1.A.phsA", 1000.0)]);
        assert_eq!(eval_protection(&c, &v).unwrap(), Decision::Trip);
        for (vv, ia) in [(6000.0, 1000.0), (11000.0, 1000.0), (13000.0, 1000.0), (1.0, 0.0)] {
            let z: f64 = if ia > 0.0 { vv / ia } else { f64::INFINITY };
            let expect = if z < 10.0 {
                Decision::Trip
            } else if z < 12.0 {
                Decision::Alarm
            } else {
                Decision::None
            };
            let v = vals(&[("I.MMXU1.PhV.phsA", vv), ("I.MMXU1.A.phsA", ia)]);
            assert_eq!(eval_protection(&c, &v).unwrap(), expect, "z={z}");
        }
    }

    #[test]
    fn missing_value_reported() {
        let c = cfg(ProtectionKind::Ptoc, vec![input("I.MMXU1.A.phsA", Quantity::Current)], 1.0, 2.0);
        assert!(matches!(
            eval_protection(&c, &BTreeMap::new()),
            Err(ProtectionError::MissingValue(_))
        ));
    }
}

//! Built-in standard types for cables/overhead lines and two-winding
//! transformers, with optional JSON overrides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineType {
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerType {
    pub sn_mva: f64,
    pub vk_percent: f64,
    pub vkr_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdTypes {
    #[serde(default)]
    pub line: BTreeMap<String, LineType>,
    #[serde(default)]
    pub trafo: BTreeMap<String, TransformerType>,
}

const LINES: &[(&str, f64, f64)] = &[
    ("NA2XS2Y 1x240", 0.122, 0.112),
    ("NA2XS2Y 1x185", 0.161, 0.117),
    ("NA2XS2Y 1x150", 0.206, 0.116),
    ("NA2XS2Y 1x95", 0.313, 0.132),
    ("NAYY 4x150 SE", 0.208, 0.080),
    ("NAYY 4x120 SE", 0.225, 0.080),
    ("48-AL1/8-ST1A 20.0", 0.5939, 0.372),
    ("94-AL1/15-ST1A 20.0", 0.306, 0.35),
    ("149-AL1/24-ST1A 110.0", 0.194, 0.41),
    ("243-AL1/39-ST1A 110.0", 0.1188, 0.39),
];

const TRAFOS: &[(&str, f64, f64, f64)] = &[
    ("20 MVA 66/11 kV", 20.0, 10.0, 0.5),
    ("40 MVA 66/11 kV", 40.0, 12.0, 0.4),
    ("25 MVA 110/20 kV", 25.0, 12.0, 0.41),
    ("40 MVA 110/20 kV", 40.0, 16.2, 0.34),
    ("63 MVA 110/20 kV", 63.0, 18.0, 0.32),
    ("0.63 MVA 20/0.4 kV", 0.63, 6.0, 1.206),
    ("0.4 MVA 20/0.4 kV", 0.4, 6.0, 1.425),
];

impl Default for StdTypes {
    fn default() -> Self {
        StdTypes {
            line: LINES
                .iter()
                .map(|&(n, r, x)| {
                    (
                        n.to_string(),
                        LineType {
                            r_ohm_per_km: r,
                            x_ohm_per_km: x,
                        },
                    )
                })
                .collect(),
            trafo: TRAFOS
                .iter()
                .map(|&(n, sn, vk, vkr)| {
                    (
                        n.to_string(),
                        TransformerType {
                            sn_mva: sn,
                            vk_percent: vk,
                            vkr_percent: vkr,
                        },
                    )
                })
                .collect(),
        }
    }
}

impl StdTypes {
    /// The built-in table with entries from `json` added or replaced.
    pub fn with_overrides(json: &str) -> Result<StdTypes, serde_json::Error> {
        let extra: StdTypes = serde_json::from_str(json)?;
        let mut out = StdTypes::default();
        out.line.extend(extra.line);
        out.trafo.extend(extra.trafo);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cable_present() {
        let t = StdTypes::default();
        let c = t.line["NA2XS2Y 1x240"];
        assert_eq!((c.r_ohm_per_km, c.x_ohm_per_km), (0.122, 0.112));
    }

    #[test]
    fn overrides_replace_and_extend() {
        let t = StdTypes::with_overrides(
            r#"{"line": {"NA2XS2Y 1x240": {"r_ohm_per_km": 0.2, "x_ohm_per_km": 0.1},
                         "custom": {"r_ohm_per_km": 1.0, "x_ohm_per_km": 2.0}}}"#,
        )
        .unwrap();
        assert_eq!(t.line["NA2XS2Y 1x240"].r_ohm_per_km, 0.2);
        assert!(t.line.contains_key("custom"));
        assert!(t.trafo.contains_key("20 MVA 66/11 kV"));
    }
}

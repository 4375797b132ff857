//! Ready-made configurations, also available through `chemofront preset`.

use crate::error::{Error, Result};
use crate::io::config::{parse_config, RunConfig};

pub const PRESETS: [(&str, &str); 5] = [
    ("standard", include_str!("../presets/standard.cfg")),
    ("steady-state", include_str!("../presets/steady-state.cfg")),
    ("front", include_str!("../presets/front.cfg")),
    ("late", include_str!("../presets/late.cfg")),
    ("lattice", include_str!("../presets/lattice.cfg")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}` (have {})", names.join(", ")))
        })
}

pub fn preset(name: &str) -> Result<RunConfig> {
    parse_config(preset_text(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_builds() {
        for (name, _) in PRESETS {
            let c = preset(name).unwrap();
            c.initial_state().unwrap();
        }
        assert!(preset("nope").is_err());
    }
}

//! Experiment files bundled with the binary. The same files live in the
//! crate's `presets/` directory.

use anyhow::{anyhow, Result};

use crate::config::ConfigFile;

pub const PRESETS: [(&str, &str); 3] = [
    ("crouch_relaxed", include_str!("../presets/crouch_relaxed.toml")),
    ("planar_fig3", include_str!("../presets/planar_fig3.toml")),
    ("rate_fig5", include_str!("../presets/rate_fig5.toml")),
];

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        anyhow!("unknown preset `{name}`, expected one of {}", names.join(", "))
    })
}

pub fn preset(name: &str) -> Result<ConfigFile> {
    ConfigFile::parse(preset_text(name)?).map_err(|e| anyhow!("preset {name}: {e:#}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for (name, _) in PRESETS {
            let runs = preset(name).unwrap().build_runs().unwrap();
            assert!(!runs.is_empty(), "{name}");
        }
    }

    #[test]
    fn preset_grids_have_the_expected_shape() {
        assert_eq!(preset("planar_fig3").unwrap().build_runs().unwrap().len(), 4);
        assert_eq!(preset("rate_fig5").unwrap().build_runs().unwrap().len(), 4);
        assert_eq!(preset("crouch_relaxed").unwrap().build_runs().unwrap().len(), 1);
        assert!(preset("fig9").is_err());
    }
}

//! Figure-reproduction configs shipped with the binary.

use crate::config::RunConfig;
use crate::error::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("fig2a", include_str!("../../../configs/fig2a.toml")),
    ("fig2b", include_str!("../../../configs/fig2b.toml")),
    ("fig2c", include_str!("../../../configs/fig2c.toml")),
    ("fig3a", include_str!("../../../configs/fig3a.toml")),
    ("fig3b", include_str!("../../../configs/fig3b.toml")),
    ("fig4", include_str!("../../../configs/fig4.toml")),
    ("fig5", include_str!("../../../configs/fig5.toml")),
    ("fig6", include_str!("../../../configs/fig6.toml")),
    ("fig7", include_str!("../../../configs/fig7.toml")),
    ("fig8", include_str!("../../../configs/fig8.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let text = preset_text(name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Usage(format!("unknown preset {name}; available: {}", names.join(", ")))
    })?;
    RunConfig::from_toml(text)
}

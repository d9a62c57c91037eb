//! Built-in scenarios. Each preset is the device base overlaid with the
//! settings of one figure.

use super::config::deep_merge;
use crate::{Error, Result};

pub const NAMES: [&str; 6] = ["table1", "fig1c", "fig2c", "fig3b_pulse", "fig3d", "fig4c"];

/// Measured device parameters.
const BASE: &str = r#"
[junction]
gap_ueV = 220.0
dynes = 9.25e-3
r_t_kOhm = 14.7
t_n_mK = 150.0
c_nis_fF = 0.54

[resonator]
f_r_GHz = 4.6704
z_r_Ohm = 63.7

[qubit]
f_q_GHz = 4.1024
anharmonicity_MHz = -273.0
g_MHz = 80.7
chi_MHz = -3.725
kappa_MHz = 0.5
gamma_MHz = 2.0
f_ro_GHz = 7.4386

[sweep]
v_min_uV = 0.0
v_max_uV = 300.0
points = 61
"#;

const FIG1C: &str = r#"
[sweep]
v_min_uV = -600.0
v_max_uV = 600.0
points = 241
"#;

const FIG2C: &str = r#"
[baths]
drive_power_dBm = -130.0
nbar_at_zero_bias = 1.21

[sweep]
v_min_uV = 0.0
v_max_uV = 300.0
points = 201

[spectrum]
state = "coherent"
nbar = 1.21
nmax = 12
points = 20001
"#;

const FIG3B_PULSE: &str = r#"
[baths]
gamma_dr_MHz = 2.0
n_dr = 1.21

[rf]
frequency_GHz = 2.9
model = "tien_gordon"
amplitude = 1.0

[pulse]
period_ns = 20.0
duty = 0.5
rf_on = true
gamma_on_MHz = 1.0
duration_ns = 3000.0
dt_ns = 0.04
record_every = 20
average_from_ns = 1500.0
nmax = 40
"#;

const FIG3D: &str = r#"
[junction]
t_n_mK = 150.0

[baths]
gamma_dr_MHz = 2.0
n_dr = 1.0
"#;

const FIG4C: &str = r#"
[junction]
t_n_mK = 280.0

[baths]
gamma_dr_MHz = 2.0
n_dr = 4.0
"#;

fn parse(text: &str) -> toml::Table {
    text.parse().expect("built-in preset is valid TOML")
}

/// Merged parameter table of a preset.
pub fn preset_table(name: &str) -> Result<toml::Table> {
    let overlay = match name {
        "table1" => "",
        "fig1c" => FIG1C,
        "fig2c" => FIG2C,
        "fig3b_pulse" => FIG3B_PULSE,
        "fig3d" => FIG3D,
        "fig4c" => FIG4C,
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset {other:?}; available: {}", NAMES.join(", ")),
            ))
        }
    };
    let mut table = parse(BASE);
    deep_merge(&mut table, parse(overlay));
    Ok(table)
}

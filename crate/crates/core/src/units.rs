//! Physical constants and boundary unit conversions.
//!
//! Everything inside the crate is SI (kelvin, seconds, metres, kilograms).
//! External interfaces speak microkelvin and microseconds; convert with the
//! helpers here so that round trips through text are bit-stable.

/// Boltzmann constant in J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Mass of a potassium-41 atom (40.9618 u) in kilograms.
pub const POTASSIUM_41_MASS: f64 = 6.8013e-26;

/// Standard gravity in m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Tweezer laser wavelength in metres.
pub const TWEEZER_WAVELENGTH: f64 = 790e-9;

pub fn kelvin_from_micro(uk: f64) -> f64 {
    uk / 1e6
}

pub fn micro_from_kelvin(k: f64) -> f64 {
    k * 1e6
}

pub fn seconds_from_micro(us: f64) -> f64 {
    us / 1e6
}

pub fn micro_from_seconds(s: f64) -> f64 {
    s * 1e6
}

pub fn metres_from_micro(um: f64) -> f64 {
    um / 1e6
}

/// Formats a duration in seconds as microseconds for text output.
///
/// The value is rounded to nine decimals and trailing zeros are trimmed, so
/// a time built with [`seconds_from_micro`] from a decimal microsecond value
/// parses back to the identical `f64`.
pub fn format_micros(s: f64) -> String {
    format_fixed(micro_from_seconds(s), 9)
}

pub(crate) fn format_fixed(value: f64, decimals: usize) -> String {
    let mut text = format!("{value:.decimals$}");
    if text.contains('.') {
        while text.ends_with('0') {
            text.pop();
        }
        if text.ends_with('.') {
            text.pop();
        }
    }
    if text == "-0" {
        text = "0".to_string();
    }
    text
}

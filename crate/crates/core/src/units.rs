//! Unit conversions. Everything internal is SI (W, s, J, °C); money is CNY.

pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Energy in kWh of `watts` held for `seconds`.
#[inline]
pub fn kwh(watts: f64, seconds: f64) -> f64 {
    watts * seconds / JOULES_PER_KWH
}

#[inline]
pub fn hours(seconds: f64) -> f64 {
    seconds / SECONDS_PER_HOUR
}

/// Renders seconds-since-midnight as `HH:MM`.
pub fn clock_label(seconds_since_midnight: f64) -> String {
    let total_minutes = (seconds_since_midnight / 60.0).round() as i64;
    let minutes = total_minutes.rem_euclid(24 * 60);
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

/// Rounds a CNY amount to whole cents.
pub fn to_cents(cny: f64) -> i64 {
    (cny * 100.0).round() as i64
}

pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let abs = cents.unsigned_abs();
    format!("{sign}{}.{:02}", abs / 100, abs % 100)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_kilowatt_for_five_minutes() {
        assert!((kwh(1000.0, 300.0) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn clock_labels() {
        assert_eq!(clock_label(36000.0), "10:00");
        assert_eq!(clock_label(36000.0 + 47.0 * 300.0), "13:55");
    }

    #[test]
    fn cents_formatting() {
        assert_eq!(format_cents(to_cents(248.004)), "248.00");
        assert_eq!(format_cents(to_cents(-119.456)), "-119.46");
        assert_eq!(format_cents(-5), "-0.05");
    }
}

//! Logger setup shared by the binaries.

/// Overrides any `--log` flag when set.
pub const LOG_ENV: &str = "DRPIPE_LOG";

/// The filter in effect: `DRPIPE_LOG` if set and nonempty, else the flag.
pub fn effective_filter(flag: &str, env: Option<&str>) -> String {
    match env {
        Some(v) if !v.trim().is_empty() => v.to_string(),
        _ => flag.to_string(),
    }
}

pub fn init(flag: &str) {
    let filter = effective_filter(flag, std::env::var(LOG_ENV).ok().as_deref());
    let _ = env_logger::Builder::new()
        .parse_filters(&filter)
        .format_timestamp_millis()
        .try_init();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_flag() {
        assert_eq!(effective_filter("info", None), "info");
        assert_eq!(effective_filter("info", Some("")), "info");
        assert_eq!(effective_filter("info", Some("debug")), "debug");
    }
}

//! Plain-text noise schedule tables: one `t sigma` pair per line.

use std::fmt::Write;

use uvfuse_core::scheduler::NoiseSchedule;

use crate::error::{Error, Result};

pub fn format_schedule(schedule: &NoiseSchedule) -> String {
    let mut s = String::from("# t sigma\n");
    for (t, sigma) in schedule.sigmas().iter().enumerate() {
        let _ = writeln!(s, "{t} {sigma:.17e}");
    }
    s
}

/// Reads a table covering `t = 0..=T` in order; `#` starts a comment.
pub fn parse_schedule(text: &str) -> Result<NoiseSchedule> {
    let bad = |line: usize, message: String| Error::Parse {
        path: "<schedule>".into(),
        line,
        message,
    };
    let mut sigmas = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(t), Some(s), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(n + 1, "expected `t sigma`".into()));
        };
        let t: usize = t.parse().map_err(|_| bad(n + 1, format!("bad timestep {t:?}")))?;
        let s: f64 = s.parse().map_err(|_| bad(n + 1, format!("bad sigma {s:?}")))?;
        if t != sigmas.len() {
            return Err(bad(n + 1, format!("expected timestep {}, found {t}", sigmas.len())));
        }
        sigmas.push(s);
    }
    Ok(NoiseSchedule::from_sigmas(sigmas)?)
}

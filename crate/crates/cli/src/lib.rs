//! Config-driven driver for the wienerbv checks.

pub mod config;
pub mod output;
pub mod suite;

use std::fmt::Write;

/// Exit status of a run.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const INTERNAL: i32 = 3;
}

/// Domain catalog, capacity sets and check names, one per line.
pub fn list_catalog() -> String {
    let mut s = String::new();
    let sections: [(&str, &[(&str, &str)]); 3] = [
        ("domains", wienerbv::geometry::CATALOG),
        ("capacity sets", wienerbv::capacity::SET_CATALOG),
        ("checks", config::CHECKS),
    ];
    for (i, (title, rows)) in sections.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "{title}:");
        for (id, desc) in rows.iter() {
            let _ = writeln!(s, "  {id:<20} {desc}");
        }
    }
    s
}

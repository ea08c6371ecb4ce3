//! Reporting for the acceptance suite in `tests/acceptance.rs`.
//!
//! Kept in its own package so `cargo test --workspace` runs every other
//! suite before the long end-to-end checks.

/// Collects one PASS/FAIL line per criterion.
#[derive(Debug, Default)]
pub struct Report {
    failures: usize,
}

impl Report {
    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }

    /// Context that is not itself a criterion.
    pub fn info(&self, name: &str, detail: String) {
        println!("INFO {name}: {detail}");
    }

    pub fn failures(&self) -> usize {
        self.failures
    }
}

//! Bookkeeping for the acceptance run: each criterion collects named checks
//! and reports one line.

use std::fmt::Write as _;
use std::time::Instant;

/// Named pass/fail checks gathered for one criterion.
#[derive(Debug, Default)]
pub struct Checks {
    items: Vec<(String, bool, String)>,
    notes: Vec<String>,
}

impl Checks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) -> bool {
        self.items.push((name.into(), pass, detail.into()));
        pass
    }

    /// Context printed with the result but not counted.
    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|c| c.1)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, pass, detail) in &self.items {
            let _ = write!(s, "\n    [{}] {name}: {detail}", if *pass { "ok" } else { "FAILED" });
        }
        for n in &self.notes {
            let _ = write!(s, "\n    note: {n}");
        }
        s
    }
}

/// Runs criteria in order and prints one verdict line for each.
pub struct Runner {
    results: Vec<bool>,
}

impl Default for Runner {
    fn default() -> Self {
        Self::new()
    }
}

impl Runner {
    pub fn new() -> Self {
        Self { results: Vec::new() }
    }

    pub fn run(&mut self, id: usize, title: &str, f: impl FnOnce() -> Checks) {
        let start = Instant::now();
        let checks = f();
        let pass = checks.passed();
        println!(
            "criterion {id} {}: {title} ({:.1} s){}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            checks.summary()
        );
        self.results.push(pass);
    }

    /// Prints the tally and returns whether every criterion passed.
    pub fn finish(&self) -> bool {
        let passed = self.results.iter().filter(|&&p| p).count();
        println!("acceptance: {passed} of {} criteria passed", self.results.len());
        passed == self.results.len()
    }
}

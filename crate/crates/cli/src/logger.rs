use std::collections::BTreeSet;
use std::sync::Mutex;

use log::{Level, LevelFilter, Log, Metadata, Record};

static WARNINGS: Mutex<BTreeSet<String>> = Mutex::new(BTreeSet::new());

/// Prints to stderr and remembers every distinct warning.
struct Capture {
    level: LevelFilter,
}

impl Log for Capture {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level || metadata.level() <= Level::Warn
    }

    fn log(&self, record: &Record) {
        if record.level() <= Level::Warn {
            let msg = record.args().to_string();
            let fresh = WARNINGS.lock().map(|mut w| w.insert(msg.clone())).unwrap_or(true);
            if fresh && record.level() <= self.level {
                eprintln!("{}: {msg}", record.level().as_str().to_lowercase());
            }
        } else if record.level() <= self.level {
            eprintln!("{}: {}", record.level().as_str().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

/// Install the capturing logger. Safe to call more than once.
pub fn init(level: LevelFilter) {
    if log::set_logger(Box::leak(Box::new(Capture { level }))).is_ok() {
        log::set_max_level(level.max(LevelFilter::Warn));
    }
}

/// Drain the warnings collected since the last call, sorted and unique.
pub fn take_warnings() -> Vec<String> {
    WARNINGS.lock().map(|mut w| std::mem::take(&mut *w).into_iter().collect()).unwrap_or_default()
}

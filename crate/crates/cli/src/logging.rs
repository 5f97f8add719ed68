//! Plain log lines on stderr, timestamped copies in an optional log file.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use log::{LevelFilter, Log, Metadata, Record};

struct TeeLogger {
    level: LevelFilter,
    file: Option<Mutex<File>>,
}

impl Log for TeeLogger {
    fn enabled(&self, metadata: &Metadata<'_>) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record<'_>) {
        if !self.enabled(record.metadata()) {
            return;
        }
        eprintln!("[{}] {}", record.level(), record.args());
        if let Some(file) = &self.file {
            let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
            if let Ok(mut f) = file.lock() {
                let _ = writeln!(
                    f,
                    "{}.{:03} [{}] {}: {}",
                    now.as_secs(),
                    now.subsec_millis(),
                    record.level(),
                    record.target(),
                    record.args()
                );
            }
        }
    }

    fn flush(&self) {
        if let Some(file) = &self.file {
            if let Ok(mut f) = file.lock() {
                let _ = f.flush();
            }
        }
    }
}

pub fn init(level: &str, log_file: Option<&Path>) -> Result<()> {
    let level: LevelFilter = level.parse().with_context(|| format!("unknown log level `{level}`"))?;
    let file = match log_file {
        Some(path) => {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            Some(Mutex::new(f))
        }
        None => None,
    };
    log::set_boxed_logger(Box::new(TeeLogger { level, file })).context("logger already installed")?;
    log::set_max_level(level);
    Ok(())
}

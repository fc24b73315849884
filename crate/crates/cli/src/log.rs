//! Single-line JSON events on standard error, filtered by `MODEKIT_LOG`
//! (`error`, `info` (default) or `debug`).

use serde_json::{json, Value};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Error,
    Info,
    Debug,
}

pub struct Logger {
    level: Level,
}

impl Logger {
    pub fn from_env() -> Self {
        let level = match std::env::var("MODEKIT_LOG").as_deref() {
            Ok("error") => Level::Error,
            Ok("debug") => Level::Debug,
            _ => Level::Info,
        };
        Self { level }
    }

    fn emit(&self, level: Level, name: &str, event: &str, fields: Value) {
        if level > self.level {
            return;
        }
        let mut obj = json!({ "level": name, "event": event });
        if let (Some(o), Value::Object(f)) = (obj.as_object_mut(), fields) {
            o.extend(f);
        }
        eprintln!("{obj}");
    }

    pub fn error(&self, fields: Value) {
        self.emit(Level::Error, "error", "failed", fields);
    }

    pub fn info(&self, event: &str, fields: Value) {
        self.emit(Level::Info, "info", event, fields);
    }

    pub fn debug(&self, event: &str, fields: Value) {
        self.emit(Level::Debug, "debug", event, fields);
    }
}

//! Result files and exit codes.

use std::fs;
use std::io::Write;
use std::path::Path;

use fockchip::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Domain(_) | Error::Json(_) => EXIT_CONFIG,
            Error::NonConvergence { .. } | Error::Undefined(_) | Error::Capacity { .. } => {
                EXIT_NUMERIC
            }
            Error::Io(_) | Error::Format(_) | Error::Unsorted { .. } => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Everything a command produces. Files are only written once the whole
/// computation has succeeded.
#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
}

impl Report {
    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
        text.push(b'\n');
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body.into_bytes()));
    }

    pub fn line(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }

    /// Writes each file through a temporary sibling and a rename, so a
    /// failure never leaves a truncated result behind.
    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        let io = |what: &str, p: &Path, e: std::io::Error| {
            Failure::io(format!("{what} {}: {e}", p.display()))
        };
        fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
        for (name, bytes) in &self.files {
            let target = dir.join(name);
            let tmp = dir.join(format!(".{name}.partial"));
            let result = fs::File::create(&tmp)
                .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
                .and_then(|_| fs::rename(&tmp, &target));
            if let Err(e) = result {
                let _ = fs::remove_file(&tmp);
                return Err(io("cannot write", &target, e));
            }
        }
        Ok(())
    }
}

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] snapcube::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// A self-check ran but did not pass.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Check(_) => "numerical",
            CliError::Core(e) if e.is_io() => "io",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) => "config",
        }
    }

    /// 2 for bad configuration or input, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "numerical" => 3,
            "io" => 4,
            _ => 2,
        }
    }

    /// Single-line report for stderr: `error kind=<kind> code=<n> message="<escaped>"`.
    pub fn error_line(&self) -> String {
        format!(
            "error kind={} code={} message={:?}",
            self.kind(),
            self.exit_code(),
            self.to_string()
        )
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let io = CliError::io(Path::new("a"), std::io::Error::other("boom"));
        assert_eq!(io.exit_code(), 4);
        assert_eq!(CliError::Check("bad".into()).exit_code(), 3);
        let num = CliError::Core(snapcube::Error::Degenerate("flat".into()));
        assert_eq!(num.exit_code(), 3);
        let fmt = CliError::Core(snapcube::Error::Format {
            path: "p".into(),
            reason: "r".into(),
        });
        assert_eq!(fmt.exit_code(), 4);
    }

    #[test]
    fn error_line_is_single_line() {
        let e = CliError::Config("two\nlines \"quoted\"".into());
        let line = e.error_line();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("error kind=config code=2 message=\""));
    }
}

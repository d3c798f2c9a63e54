use spinlab::SpinLabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),

    #[error("{} invalid key(s): {}", .0.len(), .0.iter().map(|(k, m)| format!("{k}: {m}")).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<(String, String)>),

    #[error(transparent)]
    Core(#[from] SpinLabError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// Machine-readable category printed with every error.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Parse(_) => "parse",
            Self::Invalid(_) => "config",
            Self::Core(e) => e.category(),
            Self::Io { .. } => "io",
        }
    }

    /// 2 for unreadable or invalid configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "parse" | "config" => 2,
            "numeric" => 3,
            _ => 4,
        }
    }

    /// One diagnostic line per problem.
    pub fn lines(&self) -> Vec<String> {
        let cat = self.category();
        match self {
            Self::Invalid(v) => v.iter().map(|(k, m)| format!("error[{cat}] {k}: {m}")).collect(),
            Self::Core(SpinLabError::Config { key, message }) => vec![format!("error[{cat}] {key}: {message}")],
            other => vec![format!("error[{cat}] {}", other.to_string().replace('\n', " "))],
        }
    }
}

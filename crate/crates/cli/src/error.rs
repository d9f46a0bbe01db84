//! Error type carrying the process exit code.
//!
//! 1: I/O, parsing or configuration. 2: numerical failure (no convergence,
//! empty result, missing edge). 3: data contract (mismatched vertex sets,
//! duplicate samples, matrices that are not rigid).

use std::fmt;
use std::path::Path;

use jawkit::formats::FormatError;
use jawkit::lie_stats::StatsError;
use jawkit::mesh::MeshError;
use jawkit::pipeline::PipelineError;
use jawkit::registration::RegistrationError;
use jawkit::synth::SynthError;
use jawkit::tmj_sim::TmjError;
use jawkit::xform_tree::TreeError;

pub const IO: u8 = 1;
pub const NUMERICAL: u8 = 2;
pub const CONTRACT: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(IO, message)
    }

    /// Prefixes the message with `context`.
    pub fn context(self, context: impl fmt::Display) -> Self {
        CliError { code: self.code, message: format!("{context}: {}", self.message) }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(IO, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn tree_code(e: &TreeError) -> u8 {
    match e {
        TreeError::MissingEdge { .. } | TreeError::DisconnectedFrames { .. } => NUMERICAL,
        _ => CONTRACT,
    }
}

fn mesh_code(e: &MeshError) -> u8 {
    match e {
        MeshError::Io { .. } | MeshError::Parse { .. } | MeshError::UnsupportedFormat(_) => IO,
        MeshError::EmptyMap | MeshError::EmptyInput => NUMERICAL,
        _ => CONTRACT,
    }
}

fn stats_code(e: &StatsError) -> u8 {
    match e {
        StatsError::DuplicateSample { .. } => CONTRACT,
        _ => NUMERICAL,
    }
}

fn registration_code(e: &RegistrationError) -> u8 {
    match e {
        RegistrationError::InvalidParams(_) => IO,
        RegistrationError::LengthMismatch { .. } => CONTRACT,
        _ => NUMERICAL,
    }
}

fn tmj_code(e: &TmjError) -> u8 {
    match e {
        TmjError::VertexSetMismatch { .. } => CONTRACT,
        TmjError::Mesh(m) => mesh_code(m),
        _ => NUMERICAL,
    }
}

macro_rules! classify {
    ($ty:ty, $f:expr) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::new($f(&e), e.to_string())
            }
        }
    };
}

classify!(TreeError, tree_code);
classify!(MeshError, mesh_code);
classify!(StatsError, stats_code);
classify!(RegistrationError, registration_code);
classify!(TmjError, tmj_code);
classify!(FormatError, |e: &FormatError| match e {
    FormatError::Json { .. } | FormatError::Csv { .. } | FormatError::MatrixLength { .. } => IO,
    FormatError::Matrix { .. } => CONTRACT,
    FormatError::Tree(t) => tree_code(t),
    FormatError::Stats(s) => stats_code(s),
});
classify!(PipelineError, |e: &PipelineError| match e {
    PipelineError::Splint { source, .. } => registration_code(&source.error),
    PipelineError::Joint { source, .. } | PipelineError::Tmj(source) => tmj_code(source),
    PipelineError::Stats(s) => stats_code(s),
});
classify!(SynthError, |e: &SynthError| match e {
    SynthError::BoundsUnreachable { .. } => NUMERICAL,
    SynthError::Mesh(m) => mesh_code(m),
    _ => IO,
});

#[cfg(test)]
mod tests {
    use super::*;
    use jawkit::xform_tree::FrameId;

    #[test]
    fn codes() {
        let f = FrameId::new("F").unwrap();
        let missing = TreeError::MissingEdge { from: f.clone(), to: f.clone() };
        assert_eq!(CliError::from(missing).code, NUMERICAL);
        assert_eq!(CliError::from(FormatError::Json { context: "x".into(), message: "y".into() }).code, IO);
        let dup = StatsError::DuplicateSample { splint_id: "S1".into(), repeat_id: "3t".into() };
        assert_eq!(CliError::from(FormatError::Stats(dup)).code, CONTRACT);
        let mismatch = TmjError::VertexSetMismatch { left: "a".into(), right: "b".into() };
        assert_eq!(CliError::from(mismatch).code, CONTRACT);
        assert_eq!(CliError::from(StatsError::EmptyInput).code, NUMERICAL);
    }
}

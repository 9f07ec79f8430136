//! Coarse error classes, used to pick process exit codes.

use crate::corpus::CorpusError;
use crate::mbr::MbrError;
use crate::mert::MertError;
use crate::metrics::MetricError;
use crate::report::ReportError;
use crate::rerank::RerankError;
use crate::toy_model::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, configuration or arguments.
    Validation,
    /// An external scorer failed or broke the line protocol.
    Scorer,
    /// Reading or writing a file failed.
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 2,
            ErrorClass::Scorer => 3,
            ErrorClass::Io => 4,
        }
    }
}

pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for CorpusError {
    fn class(&self) -> ErrorClass {
        match self {
            CorpusError::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for ModelError {
    fn class(&self) -> ErrorClass {
        match self {
            ModelError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for MetricError {
    fn class(&self) -> ErrorClass {
        match self {
            MetricError::Config(_) | MetricError::Contract { .. } => ErrorClass::Validation,
            MetricError::At { source, .. } => source.class(),
            _ => ErrorClass::Scorer,
        }
    }
}

impl Classify for RerankError {
    fn class(&self) -> ErrorClass {
        match self {
            RerankError::Metric(e) => e.class(),
            RerankError::Corpus(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for MertError {
    fn class(&self) -> ErrorClass {
        match self {
            MertError::Metric(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for MbrError {
    fn class(&self) -> ErrorClass {
        match self {
            MbrError::Utility { source, .. } | MbrError::Metric(source) => source.class(),
            MbrError::Rerank(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

impl Classify for ReportError {
    fn class(&self) -> ErrorClass {
        match self {
            ReportError::Metric(e) => e.class(),
            _ => ErrorClass::Validation,
        }
    }
}

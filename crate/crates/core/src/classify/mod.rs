//! Fall/ADL classifiers over standardized feature vectors, and their
//! persistence container.

mod knn;
mod standardizer;
mod svm;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;

pub use knn::{KnnModel, DEFAULT_K};
pub use standardizer::Standardizer;
pub use svm::{rbf, SvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Svm,
    Knn,
}

impl ClassifierKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Knn => "knn",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ClassifierKind::Svm),
            "knn" => Ok(ClassifierKind::Knn),
            _ => Err(Error::InvalidArgument(format!("unknown classifier `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Svm(SvmModel),
    Knn(KnnModel),
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> Label {
        match self {
            Classifier::Svm(m) => m.predict(x).0,
            Classifier::Knn(m) => m.predict(x),
        }
    }
}

/// Standardizer plus classifier, trained together on raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdModel {
    pub standardizer: Standardizer,
    pub classifier: Classifier,
}

const MAGIC: &[u8; 4] = b"FDML";
const VERSION: u8 = 1;

impl FdModel {
    pub fn train(kind: ClassifierKind, x: &[Vec<f64>], y: &[Label]) -> Result<Self> {
        let standardizer = Standardizer::fit(x)?;
        let z = standardizer.apply_all(x);
        let classifier = match kind {
            ClassifierKind::Svm => Classifier::Svm(SvmModel::train(&z, y, SvmParams::default())?),
            ClassifierKind::Knn => Classifier::Knn(KnnModel::train(&z, y, DEFAULT_K)?),
        };
        Ok(Self {
            standardizer,
            classifier,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        self.classifier.predict(&self.standardizer.apply(x))
    }

    /// `FDML` magic, version byte, `u32` payload length, JSON payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(self)?;
        let mut out = Vec::with_capacity(body.len() + 9);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("classifier container", r);
        if bytes.len() < 9 || &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(bad(&format!("unsupported version {}", bytes[4])));
        }
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        if bytes.len() != 9 + len {
            return Err(bad("payload length mismatch"));
        }
        Ok(serde_json::from_slice(&bytes[9..])?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_roundtrip() {
        let x = vec![vec![0.0, 1.0], vec![0.2, 0.9], vec![3.0, -1.0], vec![3.1, -1.2]];
        let y = vec![Label::Adl, Label::Adl, Label::Fall, Label::Fall];
        for kind in [ClassifierKind::Svm, ClassifierKind::Knn] {
            let m = FdModel::train(kind, &x, &y).unwrap();
            let back = FdModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict(&[3.0, -1.1]), Label::Fall);
        }
        let mut bytes = FdModel::train(ClassifierKind::Knn, &x, &y).unwrap().to_bytes().unwrap();
        bytes.pop();
        assert!(FdModel::from_bytes(&bytes).is_err());
    }
}

//! Image spam detection: raw, Canny and combined image features fed to
//! SVM, MLP and CNN classifiers, with ROC/AUC evaluation and synthetic
//! challenge-corpus generation.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod imaging;
pub mod nn;
pub mod persist;
pub mod svm;

pub use error::{Error, Result};

//! Tensor-factorization knowledge graph embeddings with DURA
//! regularization.
//!
//! Five models (CP, ComplEx, RESCAL and the temporal TComplEx and TRESCAL)
//! are trained with a weighted 1-vs-all cross-entropy and Adagrad, scored by
//! filtered ranking, and paired with a numerical check suite for the
//! penalty's relation to the tensor nuclear 2-norm.

pub mod algebra;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod regularizers;
pub mod theory;
pub mod training;

pub use config::{Precision, TrainConfig};
pub use data::{Dataset, Fact, FilterIndex, RelationType};
pub use error::{KgeError, Result};
pub use evaluation::{evaluate_split, RankingReport, SparsityReport};
pub use models::{BatchExample, Gradients, ModelKind, ModelParams, Shape};
pub use regularizers::{RegKind, RegSpec, SmootherKind};
pub use training::{fit, FitOutcome};

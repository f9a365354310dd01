//! Training-free label prediction for customer-service contacts.
//!
//! Stage one tags the customer's main question in each transcript with a
//! sentence-attention model ([`seacat`]) and stores the tagged questions with
//! their labels in a [`repository`]. Stage two answers a new question by
//! BM25 search over that repository ([`retrieval`]) and aggregates the labels
//! of the retrieved neighbors ([`predictor`]).

pub mod config;
pub mod eval;
pub mod predictor;
pub mod repository;
pub mod retrieval;
pub mod seacat;
pub mod text;

pub use predictor::{CategoricalPrediction, ContinuousPrediction, PredictError, UniversalModel};
pub use repository::{LabelKind, LabelSchema, QuestionRecord, Repository, RepositoryError};
pub use retrieval::{Bm25Params, InvertedIndex, RetrievalError, RetrievalResult};

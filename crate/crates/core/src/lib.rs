pub mod benchmark;
pub mod conjugate;
pub mod curation;
pub mod dataset;
pub mod emb;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod laplace;
pub mod pmi;
pub mod rng;

pub use dataset::{CategoryTag, DatasetPair, EmbeddedDataset};
pub use error::{Error, Result};
pub use gaussian::{conjugate_mean_fit, kl_gaussian, GaussianDist};
pub use laplace::{laplace_fit, FitSettings, PriorSpec};
pub use pmi::{decompose, joint_posterior, pmi_at_eta, pmi_gaussian, pmi_monte_carlo, PmiDecomposition, PmiPath, PmiValue};

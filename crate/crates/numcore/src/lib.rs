//! Numerical substrate for the dialogue models.
//!
//! Everything continuous lives in [`Array`]s. Trainable arrays are kept in a
//! [`ParamStore`] and read into a [`Graph`], a reverse-mode tape that records
//! each op so that [`Graph::backward`] can push gradients back into the store.
//! All arithmetic is `f64`; any op producing NaN or infinity fails with
//! [`NumError::NonFinite`] instead of propagating the value.

mod array;
mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod optim;
mod rng;
mod sample;

pub use array::{Array, ParamStore};
pub use checkpoint::{load_checkpoint, save_checkpoint, ManifestEntry};
pub use error::NumError;
pub use gradcheck::{finite_diff_check, GradCheck};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, Sgd};
pub use rng::Rng;
pub use sample::{sample_uniform_interval, sample_vmf};

pub type Result<T, E = NumError> = std::result::Result<T, E>;

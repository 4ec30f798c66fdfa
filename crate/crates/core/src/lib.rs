//! Distributed kernel adaptive filtering with finite dictionaries.
//!
//! Nodes of a network each learn a nonlinear regressor as a weighted sum of
//! Gaussian kernels centered on past observations. Every round, a node fuses
//! its neighbors' observations before predicting and combines its neighbors'
//! errors before adapting. Dictionary growth is bounded by online vector
//! quantization (`qdklms`) and, optionally, by a hard budget enforced through
//! significance-based pruning (`fbqdklms`).
//!
//! ```
//! use kafnet::filters::{Algorithm, FilterHyperparams, NetworkFilter};
//! use kafnet::kernel::KernelParams;
//!
//! let hyper = FilterHyperparams {
//!     eta: 0.1,
//!     epsilon: 0.2,
//!     zeta: 0.99,
//!     budget: None,
//!     kernel: KernelParams::new(0.5).unwrap(),
//! };
//! let mut filter = NetworkFilter::single(Algorithm::Qklms, hyper, &[0.0, 0.0], 1.0).unwrap();
//! let (y, e) = filter.qklms_step(&[0.1, 0.0], 1.0).unwrap();
//! assert!(y > 0.0 && (y + e - 1.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod config;
pub mod datasets;
pub mod dictionary;
pub mod error;
pub mod filters;
pub mod harness;
pub mod kernel;
pub mod network;

pub use error::{Error, Result};

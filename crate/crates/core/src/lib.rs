//! Model-based learning for joint channel estimation and hybrid precoding.
//!
//! The crate implements the full signal path of a hybrid millimeter-wave
//! uplink in self-contained Rust:
//!
//! * sparse multipath channel generation over an imperfectly known antenna
//!   array ([`array`]),
//! * noisy wideband-free sounding through analog combining matrices
//!   ([`sounding`]),
//! * an unfolded matching-pursuit channel estimator with a learnable
//!   steering dictionary ([`mpnet`]),
//! * an unfolded projected-gradient hybrid precoder with learnable step
//!   sizes ([`upga`]),
//! * classical reference methods — fixed-dictionary matching pursuit,
//!   linear MMSE estimation, fully digital water-filling ([`baselines`]),
//! * and the optimizers that train the unfolded networks layer by layer or
//!   end to end ([`training`]).
//!
//! Differentiation is handled by a reverse-mode tape over complex matrices
//! ([`grad`]) using the conjugate Wirtinger convention; dense linear algebra
//! lives in [`numerics`].

pub mod array;
pub mod baselines;
pub mod error;
pub mod grad;
pub mod mpnet;
pub mod numerics;
pub mod rng;
pub mod sounding;
pub mod training;
pub mod upga;

pub use error::{Error, Result};
pub use grad::{GradCheckReport, GradResult, ParamSet, Tape, Tensor};
pub use numerics::{CMat, RMat, SvdResult};

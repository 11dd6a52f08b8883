//! Knowledge-grounded reinforcement learning for desk-scale surgical analog tasks.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded
//! anywhere; file formats, configuration and the command line live in the
//! `surgirl` companion crate.
//!
//! Layout:
//! - [`approximators`]: MLPs with exact reverse-mode gradients, tanh-squashed
//!   Gaussian heads and a finite-difference checker.
//! - [`knowledge`]: scripted knowledge policies and the expandable knowledge set.
//! - [`policy`]: attention over knowledge keys, Gumbel knowledge sampling,
//!   mixture log-probabilities, categorical entropy and the β schedule.
//! - [`learner`]: replay, twin critics, entropy coefficients and the training loop.
//! - [`envs`]: ten physics-free kinematic tasks with auto-grasp and dense rewards.
//! - [`incremental`]: transfer pipelines and knowledge-set expansion.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod approximators;
pub mod envs;
mod error;
pub mod incremental;
pub mod knowledge;
pub mod learner;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};

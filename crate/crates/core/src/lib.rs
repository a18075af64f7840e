//! Distributed TD(0) policy evaluation with gossip.
//!
//! A network of agents estimates the value function of a fixed-policy
//! Markov chain, each with its own linear feature basis. At every
//! transition agent `i` polls a neighbour `Y` drawn from a doubly
//! stochastic matrix `Q` and bootstraps from the neighbour's estimate of
//! the next state instead of its own. Both discounted and average-cost
//! criteria are supported.
//!
//! Besides the stochastic iterations ([`learner`]) the crate computes the
//! quantities they converge to: exact value functions ([`chain`]), the
//! limits of the coupled iterations through a lifted agent-by-state chain
//! ([`augmented`]), and the approximation-error bounds relating those
//! limits to the best per-basis approximations ([`analysis`]).
//!
//! ```
//! use gossip_td::{augmented, features, gossip::GossipMatrix, harness};
//!
//! let model = harness::build_queue_chain(&harness::QueueSpec::default())?;
//! let bases = features::build_queue_bases(model.states())?;
//! let q = GossipMatrix::queue_preset();
//! let aug = augmented::build_augmented(&model, &q, &bases)?;
//! let fp = augmented::solve_discounted_fixed_point(&aug, 0.9)?;
//! assert_eq!(fp.r_star.len(), 9);
//! # Ok::<(), gossip_td::Error>(())
//! ```

pub mod analysis;
pub mod augmented;
pub mod chain;
pub mod error;
pub mod features;
pub mod gossip;
pub mod harness;
pub mod learner;
pub mod linalg;

pub use error::{Assumption, Error, Result};

//! Regret-bounded learning of policies for reach-avoid and Rabin objectives
//! in MDPs with unknown transition probabilities.
//!
//! The pieces, roughly in pipeline order: [`mdp`] models, [`ltl`] and [`dra`]
//! objectives, [`product`] and [`mec`] for the product construction and its
//! end components, [`graph_learn`] for recovering the edge set, [`confidence`]
//! and [`evi`] for the optimistic planner, [`learner`] for the episodic loop,
//! and [`metrics`] for ground-truth evaluation.

pub mod confidence;
pub mod dra;
pub mod envs;
pub mod error;
pub mod evi;
pub mod graph_learn;
pub mod learner;
pub mod ltl;
pub mod mdp;
pub mod mec;
pub mod metrics;
pub mod pipeline;
pub mod product;
pub mod rng;
pub mod sim;

pub use dra::{reach_avoid_to_dra, Dra};
pub use error::Error;
pub use mdp::{Graph, Letter, Mdp, MdpBuilder, Policy};
pub use sim::{Environment, MdpEnv};

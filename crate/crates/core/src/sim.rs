//! Sampling-only access to an environment.
//!
//! Learners see an [`Environment`]: they can reset it and take actions, but
//! never read transition probabilities.

use crate::mdp::{Mdp, MdpError};
use crate::rng::StreamRng;

pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn init(&self) -> usize;
    fn current(&self) -> usize;
    /// Puts the environment back at its initial state.
    fn reset(&mut self);
    /// Takes action `a` from the current state and returns the successor.
    fn step(&mut self, a: usize, rng: &mut StreamRng) -> Result<usize, MdpError>;
}

/// Black-box handle around a model. The model itself is not exposed.
#[derive(Clone, Debug)]
pub struct MdpEnv {
    mdp: Mdp,
    state: usize,
}

impl MdpEnv {
    pub fn new(mdp: Mdp) -> Self {
        let state = mdp.init();
        MdpEnv { mdp, state }
    }
}

impl Environment for MdpEnv {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn init(&self) -> usize {
        self.mdp.init()
    }

    fn current(&self) -> usize {
        self.state
    }

    fn reset(&mut self) {
        self.state = self.mdp.init();
    }

    fn step(&mut self, a: usize, rng: &mut StreamRng) -> Result<usize, MdpError> {
        self.state = self.mdp.sample_step(self.state, a, rng)?;
        Ok(self.state)
    }
}

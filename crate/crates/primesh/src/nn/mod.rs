//! A small CPU network stack: just enough layers for the three-stream
//! Q-network, with explicit forward caches and hand-written backward passes
//! so gradients stay checkable against finite differences.

mod adam;
mod layers;
mod loss;
mod qnet;

pub use adam::Adam;
pub use layers::{AvgPool, Conv2d, Linear};
pub use loss::{combined_loss, greedy_action, margin_loss, select_action, td_loss, LossTerms};
pub use qnet::{DdqnPair, NetConfig, ObsBatch, QNetwork};

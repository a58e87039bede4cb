pub mod baselines;
pub mod belief;
pub mod cli;
pub mod env;
pub mod error;
pub mod generate;
pub mod grid;
pub mod mcts;
pub mod net;
pub mod scenario;
pub mod train;

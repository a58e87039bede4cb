use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid [{rule}]: {detail}")]
    Invalid { rule: &'static str, detail: String },
    #[error("unknown line {0}")]
    UnknownLine(String),
    #[error("unknown circuit index {0}")]
    UnknownCircuit(usize),
    #[error("unknown zone index {0}")]
    UnknownZone(usize),
    #[error("node {node} is outside zone {zone}")]
    OutsideZone { node: usize, zone: String },
    #[error("fault vector has {got} entries, circuit has {expected} lines")]
    FaultVectorLength { expected: usize, got: usize },
}

impl GridError {
    pub fn invalid(rule: &'static str, detail: impl Into<String>) -> Self {
        Self::Invalid { rule, detail: detail.into() }
    }

    /// Name of the violated validation rule, if this is a validation failure.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            Self::Invalid { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Grid { path: PathBuf, source: GridError },
}

impl ScenarioError {
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            Self::Grid { source, .. } => source.rule(),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("calls and observations on circuit {circuit} have zero probability under the prior")]
    ZeroEvidence { circuit: String },
    #[error("call record is not monotone: node {node} withdrew its call")]
    CallWithdrawn { node: usize },
    #[error("call record has {got} entries, grid has {expected} customer nodes")]
    CallVectorLength { expected: usize, got: usize },
    #[error("line {line} cannot be repaired before it is observed damaged")]
    RepairBeforeDamage { line: String },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode is already over")]
    Terminal,
    #[error("episode is not over yet")]
    NotTerminal,
    #[error("no vehicle is waiting for dispatch")]
    EmptyQueue,
    #[error("vehicle {requested} is not at the head of the request queue (head is {head})")]
    NotQueueHead { requested: String, head: String },
    #[error("vehicle {vehicle} cannot move from {from} to {to}")]
    IllegalAction { vehicle: String, from: usize, to: usize },
    #[error("could not draw trouble calls consistent with the damage after {0} attempts")]
    InconsistentCalls(usize),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("cannot search from a terminal state")]
    TerminalRoot,
    #[error("simulation count must be at least 1")]
    NoSimulations,
    #[error("node has not been expanded")]
    Unexpanded,
    #[error("evaluator returned a non-finite output")]
    NonFinite,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} entries, network expects {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("input contains a non-finite value at {0}")]
    NonFiniteInput(usize),
    #[error("non-finite loss at batch sample {index}")]
    NonFiniteLoss { index: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at episode {episode}: {source}")]
    Diverged { episode: usize, source: NetError },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Net(#[from] NetError),
}

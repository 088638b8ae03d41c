//! Swarm search over model parameter vectors.
//!
//! A population of candidate "experts" (plain real vectors) moves through
//! weight space under personal-best attraction, global-best attraction and
//! global-worst repulsion, guided only by a scalar utility. Around that engine
//! sit utility functions, composition over token distributions, modularity
//! tools (expert removal replay, injection, soups), and the persistence and
//! analysis pieces the `mswarm` command line is built on.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod error;
pub mod grid;
pub mod modularity;
pub mod particle;
pub mod runconfig;
pub mod runlog;
pub mod token;
pub mod utility;
pub mod vector;

pub use config::SwarmConfig;
pub use engine::{search, search_with_sink, RunRecord, SearchOutcome, Swarm, SwarmState};
pub use error::{EvalError, Result, SwarmError};
pub use utility::{FnUtility, Landscape, Utility};
pub use vector::ParamVector;

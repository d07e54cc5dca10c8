//! Simulation and closed-form analysis of the (1,λ)-ES with cumulative
//! step-size adaptation on linear functions.
//!
//! * [`order_stats`]: moments and samples of Gaussian order statistics.
//! * [`es_core`]: the algorithm itself, with full and shortcut selection.
//! * [`theory`]: divergence rates and log-step-size variance in closed form.
//! * [`montecarlo`]: ensembles, quantile series and theory-vs-simulation verdicts.
//! * [`report`]: CSV/JSON emission of the above.

pub mod es_core;
pub mod montecarlo;
pub mod order_stats;
pub mod quadrature;
pub mod report;
pub mod stats;
pub mod theory;

pub use es_core::{AlgorithmParams, EsState, ObjectiveSpec, SelectionMode, UpdateRule};
pub use order_stats::{OrderStatMoments, OrderStatSpec};

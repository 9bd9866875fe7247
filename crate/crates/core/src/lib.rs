//! Discrete-event simulator for mobile wireless sensor networks with
//! adaptive beaconing, grid-based cluster-head election and an energy-aware
//! hybrid (cluster + on-demand) routing layer.
//!
//! Formula-level types are generic over [`Scalar`] (`f32` or `f64`); the
//! network model itself runs in `f64`. Concrete aliases live at the crate
//! root.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod energy;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod routing;
pub mod runner;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod world;

pub use error::{ConfigError, Error, Result};
pub use scalar::Scalar;
pub use scenario::{parse_scenario, BeaconMode, RoutingMode, Scenario};
pub use sim::{Engine, Event, NodeId, RngStream, StreamId};
pub use world::{Counters, RunOutput, World};

pub type Position = mobility::Position<f64>;
pub type PositionF32 = mobility::Position<f32>;
pub type MepSample = mobility::MepSample<f64>;
pub type MepHistory = mobility::MepHistory<f64>;
pub type RadioParams = radio::RadioParams<f64>;
pub type RadioParamsF32 = radio::RadioParams<f32>;
pub type EnergyParams = energy::EnergyParams<f64>;
pub type EnergyLedger = energy::EnergyLedger<f64>;
pub type EnergyLedgerF32 = energy::EnergyLedger<f32>;
pub type ElectionParams = clustering::ElectionParams<f64>;
pub type Grid = clustering::Grid<f64>;
pub type NeighborTable = routing::NeighborTable<f64>;
pub type RouteEntry = routing::RouteEntry<f64>;
pub type RouteTable = routing::RouteTable<f64>;

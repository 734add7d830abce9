//! Shared fixtures for the benchmarks.

use avgfilter::model::{AveragedModel, ModelParams, DEFAULT_QUAD_ORDER};
use avgfilter::rng::RngStream;
use avgfilter::simulator::simulate_truth_and_observations;
use avgfilter::ObservationSeries;

/// Reference two-regime model with simulated observations.
pub struct Instance {
    pub params: ModelParams,
    pub avg: AveragedModel,
    pub obs: ObservationSeries,
}

pub fn reference(epsilon: f64, n_obs: usize) -> Instance {
    let params = ModelParams::reference_two_state(epsilon, n_obs, 0);
    instance(params)
}

/// The grid-oracle sized instance: Δt = 0.05, m = 2, N = 20.
pub fn small() -> Instance {
    let mut params = ModelParams::reference_two_state(0.02, 20, 0);
    params.delta_t = 0.05;
    params.substeps = 2;
    instance(params)
}

fn instance(params: ModelParams) -> Instance {
    let avg = AveragedModel::from_params(&params, DEFAULT_QUAD_ORDER).expect("valid model");
    let (_, obs) =
        simulate_truth_and_observations(&params, RngStream::new(1, 0)).expect("simulation");
    Instance { params, avg, obs }
}

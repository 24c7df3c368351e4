//! Reduced-order electrochemical cell model.

pub mod diffusion;
pub mod electrolyte;
pub mod model;
pub mod ocp;
pub mod params;
pub mod sim;

pub use diffusion::DiffusionKind;
pub use model::{ocv_at_soc, CellModel, CellState, SimConfig, StepOutput};
pub use ocp::OcpTable;
pub use params::{
    compute_capacity, AgingParameterSet, CellParameters, Electrode, Layers, PerElectrode, FARADAY, GAS_CONSTANT,
    NOMINAL_CAPACITY_AH,
};
pub use sim::{reference_capacity, run_protocol, simulate_protocol, simulate_with_model, Sample, SimTrace, TraceMode};

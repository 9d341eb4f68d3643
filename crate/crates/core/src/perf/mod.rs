//! Resource estimation, roofline analysis and hardware design-space search.

mod dse;
mod platform;
mod resources;
mod roofline;

pub use dse::{
    block_as_model, evaluate_design, explore_designs, pick_best_design, DesignPoint, DseOptions, DseReport, EvaluatedDesign, StageEval,
    TileChoice,
};
pub use platform::PlatformSpec;
pub use resources::{estimate_chain, estimate_resources, AlmCoefficients, Calibration, ResourceEstimate};
pub use roofline::{
    block_roofline, block_type_rooflines, compute_roof_gops, roofline, BlockRoofline, BlockTypeRoofline, RooflinePoint,
    WORD_BYTES,
};

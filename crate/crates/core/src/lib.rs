pub mod corpus;
pub mod labels;
pub mod text;
pub mod counterfactual;
pub mod predictor;
pub mod simulator;
pub mod metrics;
pub mod synthetic;
pub mod calibration;
pub mod report;
pub mod pipeline;

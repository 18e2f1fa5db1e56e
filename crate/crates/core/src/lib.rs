pub mod autodiff;
pub mod export;
pub mod graph;
pub mod ingest;
pub mod manifold;
pub mod model;
pub mod optim;
pub mod sparse;
pub mod tensor_store;
pub mod analysis;
pub mod synth;

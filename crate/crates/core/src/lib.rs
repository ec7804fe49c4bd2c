pub mod effective_models;
pub mod exact_scatter;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod reservoir;
pub mod scattering_map;

pub mod composites;
pub mod cones;
pub mod error;
pub mod forms;
pub mod jordan;
pub mod linalg;
pub mod linearization;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod verdict;

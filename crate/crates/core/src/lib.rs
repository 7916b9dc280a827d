pub mod attribution;
pub mod backend;
pub mod corpus;
pub mod generation;
pub mod mock;
pub mod pipeline;
pub mod reflection;

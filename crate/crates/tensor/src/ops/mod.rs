mod conv;
mod elementwise;
mod linalg;
mod norm;
mod pool;
mod shape;

pub use norm::{NormMode, RunningStats};
pub use shape::concat;

//! Acceleration structures answering axis-aligned candidate queries.

mod bvh;
mod range_tree;

pub use bvh::{Bvh, BvhNode, NodeKind};
pub use range_tree::{QueryStats, RangeTree};

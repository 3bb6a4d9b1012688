//! Fusion partitioning of array bytecode.
//!
//! A program is parsed into [`ir::Program`], turned into a WSP graph ([`graph::build_wsp`])
//! of dependency and fuse-preventing edges, and partitioned into kernels by one of the
//! algorithms in [`algorithms`] under a cost model from [`cost`].

pub mod algorithms;
pub mod cache;
pub mod cli;
pub mod cost;
pub mod dot;
pub mod gen;
pub mod graph;
pub mod ir;
pub mod state;

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod se3;
pub mod xform_tree;
pub mod mesh;
pub mod registration;
pub mod lie_stats;
pub mod tmj_sim;
pub mod synth;
pub mod formats;
pub mod pipeline;

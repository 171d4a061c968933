// SPDX-License-Identifier: Apache-2.0

//! Reverse-mode differentiation over the fixed set of operations the
//! alignment objective uses, plus a central-difference checker.

mod check;
mod tape;

pub use check::{finite_diff, grad_check, GradCheckConfig, GradReport, ParamReport};
pub use tape::{forward_backward, Graph, NodeId, Tape};

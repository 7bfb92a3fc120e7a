use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

use super::Graph;

/// `K` applications of degree-normalized neighbor averaging,
/// `vᵢ = Σ_{j∈𝒩ᵢ} uⱼ / dᵢ`. Isolated nodes keep their own row.
pub fn propagate(u: &Tensor, g: &Graph, steps: usize) -> Result<Tensor> {
    check(u, g, steps)?;
    let op = g.mean_operator();
    let mut out = op.matmul_dense(u)?;
    for _ in 1..steps {
        out = op.matmul_dense(&out)?;
    }
    Ok(out)
}

/// Differentiable [`propagate`] recorded on `tape`.
pub fn propagate_on_tape(tape: &mut Tape, u: Var, g: &Graph, steps: usize) -> Result<Var> {
    check(tape.value(u), g, steps)?;
    let op = Arc::new(g.mean_operator());
    let mut out = u;
    for _ in 0..steps {
        out = tape.sparse_matmul(Arc::clone(&op), out)?;
    }
    Ok(out)
}

fn check(u: &Tensor, g: &Graph, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::contract("propagation needs at least one step"));
    }
    if u.rows() != g.num_nodes() {
        return Err(Error::dim(format!(
            "{} embedding rows for {} nodes",
            u.rows(),
            g.num_nodes()
        )));
    }
    Ok(())
}

//! Finite-difference checks of every differentiable op, of a hand-built
//! graph, and of the full training objective on a miniature model.

use dssvae::autodiff::{grad_check, run_op_suite, Graph, Tensor, OP_TOLERANCE};
use dssvae::model::{objective_grad_check, OBJECTIVE_TOLERANCE};

fn main() -> dssvae::error::Result<()> {
    for (name, check) in run_op_suite()? {
        println!("{name:>20}  {check:?}  pass={}", check.passes(OP_TOLERANCE));
    }

    // A custom function: sum(tanh(x W) * x W).
    let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.7, 0.3, 0.2, -0.9])?;
    let w = Tensor::matrix(3, 2, vec![0.5, -0.1, 0.2, 0.8, -0.6, 0.3])?;
    let check = grad_check(
        |g: &mut Graph, v| {
            let h = g.matmul(v[0], v[1])?;
            let t = g.tanh(h);
            let p = g.mul(t, h)?;
            Ok(g.sum(p))
        },
        &[x, w],
        1e-6,
    )?;
    println!("{:>20}  {check:?}", "custom");

    let obj = objective_grad_check(0, 12)?;
    println!("{:>20}  {obj:?}  pass={}", "objective", obj.passes(OBJECTIVE_TOLERANCE));
    Ok(())
}

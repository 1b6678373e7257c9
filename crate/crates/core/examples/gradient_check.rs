//! Compares reverse-mode gradients from the tape against central finite
//! differences for a small attention-style computation.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use std::sync::Arc;

use conjoint::autodiff::{Segments, Tape, Var};
use conjoint::tensor::Tensor;

fn build(tape: &mut Tape, x: Var, w: Var, segs: &Arc<Segments>) -> conjoint::Result<Var> {
    let z = tape.matmul(x, w)?;
    let e = tape.leaky_relu(z, 0.2)?;
    let a = tape.segment_softmax(e, segs.clone())?;
    let weighted = tape.mul(a, z)?;
    let pooled = tape.segment_sum(weighted, segs.clone())?;
    let act = tape.elu(pooled)?;
    tape.sum_squares(act)
}

fn loss(x: &Tensor, w: &Tensor, segs: &Arc<Segments>) -> f64 {
    let mut tape = Tape::new();
    let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
    let out = build(&mut tape, xv, wv, segs).unwrap();
    tape.value(out).item()
}

fn main() -> conjoint::Result<()> {
    let x = Tensor::from_rows(&[
        vec![0.3, -1.2],
        vec![1.1, 0.4],
        vec![-0.7, 0.9],
        vec![0.2, 0.2],
        vec![-1.5, -0.3],
    ])?;
    let w = Tensor::from_rows(&[vec![0.8], vec![-0.6]])?;
    let segs = Arc::new(Segments::new(vec![0, 0, 1, 1, 1], 2)?);

    let mut tape = Tape::new();
    let wv = tape.param(w.clone());
    let xv = tape.constant(x.clone());
    let out = build(&mut tape, xv, wv, &segs)?;
    tape.backward(out)?;
    let analytic = tape.grad(wv).expect("w feeds the loss").clone();

    let h = 1e-6;
    for k in 0..w.len() {
        let (mut plus, mut minus) = (w.clone(), w.clone());
        plus.data_mut()[k] += h;
        minus.data_mut()[k] -= h;
        let numeric = (loss(&x, &plus, &segs) - loss(&x, &minus, &segs)) / (2.0 * h);
        println!(
            "dL/dw[{k}]  analytic {:+.10}  numeric {:+.10}  diff {:.1e}",
            analytic.data()[k],
            numeric,
            (analytic.data()[k] - numeric).abs()
        );
    }
    Ok(())
}

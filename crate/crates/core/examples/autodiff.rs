//! Reverse-mode gradients on a small softmax regression, checked against
//! central finite differences.
//!
//! cargo run --release --example autodiff

use millgnn::tensor::{grad_check, Array, Tape, TensorError, Var};

fn loss<'t>(tape: &'t Tape, p: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let x = tape.constant(Array::from_rows(&[vec![1.0, -0.5], vec![0.3, 2.0], vec![-1.2, 0.7]])?);
    let target = tape.constant(Array::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]])?);
    let probs = x.matmul(p[0])?.broadcast_add(p[1])?.softmax()?;
    Ok(probs.sub(target)?.square().mean())
}

fn main() -> Result<(), TensorError> {
    let w = Array::from_rows(&[vec![0.2, -0.1, 0.4], vec![0.0, 0.3, -0.2]])?;
    let b = Array::from_vec(vec![0.1, 0.0, -0.1]);

    let tape = Tape::new();
    let (wv, bv) = (tape.param(w.clone()), tape.param(b.clone()));
    let l = loss(&tape, &[wv, bv])?;
    let grads = tape.backward(l)?;
    println!("loss {:.6}", l.item());
    println!("dW {:?}", grads.get(wv).map(|g| g.data().to_vec()));
    println!("db {:?}", grads.get(bv).map(|g| g.data().to_vec()));

    let report = grad_check(loss, &[w, b], 1e-6, 1e-6)?;
    println!("finite-difference check: passed {}, max relative error {:.2e}", report.passed, report.max_rel_error());
    Ok(())
}

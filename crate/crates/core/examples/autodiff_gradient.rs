//! Gradient of a small two-layer network through the tape, checked against
//! central differences.

use cpsattack::autodiff::{Tape, Tensor};

fn loss(w1: &Tensor, w2: &Tensor, x: &Tensor) -> cpsattack::Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let x = tape.leaf(x);
    let a = tape.leaf(w1);
    let b = tape.leaf(w2);
    let h = tape.matmul(x, a)?;
    let h = tape.relu(h);
    let out = tape.matmul(h, b)?;
    let l = tape.sum(out);
    let grads = tape.backward(l)?;
    Ok((tape.scalar(l), grads.get(a)))
}

fn main() -> cpsattack::Result<()> {
    let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 1.5, 0.3, -0.7, 2.0])?;
    let w1 = Tensor::matrix(2, 4, vec![0.2, -0.4, 0.9, 0.1, -0.3, 0.8, 0.5, -0.6])?.with_grad();
    let w2 = Tensor::matrix(4, 1, vec![1.0, -0.5, 0.25, 2.0])?.with_grad();

    let (value, grad) = loss(&w1, &w2, &x)?;
    println!("loss {value:.6}");

    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..w1.numel() {
        let mut plus = w1.clone();
        plus.data_mut()[i] += h;
        let mut minus = w1.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss(&plus, &w2, &x)?.0 - loss(&minus, &w2, &x)?.0) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs());
        println!(
            "dL/dW1[{i}] = {:+.6}  (finite difference {fd:+.6})",
            grad[i]
        );
    }
    println!("largest discrepancy {worst:.2e}");
    Ok(())
}

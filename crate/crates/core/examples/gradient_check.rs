//! Reverse-mode gradients from the tape next to central differences, for a
//! two-layer graph convolution on a small path graph.
//!
//! cargo run --example gradient_check

use coarsen_gnn::numeric::{Matrix, Tape, Var};

/// Records `sum(logsumexp_rows(A relu(A X W)))`; returns the `W` leaf and
/// the output.
fn record(tape: &mut Tape, a: &Matrix, x: &Matrix, w: &Matrix) -> (Var, Var) {
    let av = tape.leaf(a.clone()).unwrap();
    let xv = tape.leaf(x.clone()).unwrap();
    let wv = tape.leaf(w.clone()).unwrap();
    let h = tape.matmul(av, xv).unwrap();
    let h = tape.matmul(h, wv).unwrap();
    let h = tape.relu(h).unwrap();
    let h = tape.matmul(av, h).unwrap();
    (wv, tape.logsumexp_rows(h).unwrap())
}

fn loss(a: &Matrix, x: &Matrix, w: &Matrix) -> f64 {
    let mut tape = Tape::new();
    let (_, out) = record(&mut tape, a, x, w);
    tape.value(out).data().iter().sum()
}

fn main() {
    let a = Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
    let x = Matrix::from_rows(&[[0.5, -1.0], [0.3, 0.8], [-0.7, 0.2]]);
    let w = Matrix::from_rows(&[[0.9, -0.4], [0.1, 0.6]]);

    let mut tape = Tape::new();
    let (wv, out) = record(&mut tape, &a, &x, &w);
    let ones = Matrix::filled(1, tape.value(out).cols(), 1.0);
    let grads = tape.backward(out, ones).unwrap();
    let analytic = grads.get(wv).unwrap();

    let step = 1e-5;
    println!("dL/dW   tape            finite difference");
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let mut up = w.clone();
            up.set(i, j, w.get(i, j) + step);
            let mut down = w.clone();
            down.set(i, j, w.get(i, j) - step);
            let fd = (loss(&a, &x, &up) - loss(&a, &x, &down)) / (2.0 * step);
            println!("[{i},{j}]   {:+.10}  {fd:+.10}", analytic.get(i, j));
        }
    }
}

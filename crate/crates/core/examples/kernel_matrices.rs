//! Stable-spline kernel quantities for a zero-order-hold input: the
//! integrated kernel matrix, the Gram matrix `K = Φ O Φᵀ`, and the Laplace
//! vector that turns weights into a transfer function.
//!
//! Run with `cargo run --example kernel_matrices`.

use lebid::kernel::gram_matrix;
use lebid::{InputMatrix, Result, StableSpline};
use num_complex::Complex64;

fn main() -> Result<()> {
    let (delta, n) = (0.5, 5);
    for order in [1, 2] {
        let kernel = StableSpline::new(order, 1.0)?;
        let o = kernel.integrated_matrix(delta, n);
        println!("order {order}, β = 1: integrated matrix O\n{o:.5}");

        let phi = InputMatrix::from_samples(&[1.0, -0.5, 0.25, 0.8, -1.0]);
        let k = gram_matrix(&phi, &o)?;
        let eig = k.clone().symmetric_eigenvalues();
        println!("Gram matrix eigenvalues: {:.3e}", eig.transpose());

        let s = Complex64::new(1.0, 1.0);
        let closed = kernel.laplace_vector(delta, n, s)?;
        let piecewise = kernel.laplace_vector_piecewise(delta, n, s)?;
        println!(
            "Laplace vector at s = 1+i: closed form vs piecewise max difference {:.2e}\n",
            (closed - piecewise).camax()
        );
    }
    Ok(())
}

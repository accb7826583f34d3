//! Truncated path signatures: computing one, checking Chen's identity on a
//! split path, and checking a shuffle relation between coefficients.

use huts::signature::{augment_path, chen_concat, path_signature, sig_length, Path};

fn main() {
    // A short scalar sequence, embedded as a 3-dimensional path with
    // basepoint, time, and lead-lag coordinates.
    let series = [1.0, 3.0, 2.0, 5.0, 4.0];
    let path = augment_path(&series).unwrap();
    println!(
        "embedded path: {} points in {} dimensions",
        path.len(),
        path.dim()
    );

    let m = 2;
    let sig = path_signature(&path, m).unwrap();
    println!(
        "signature truncated at order {m}: {} coefficients (formula {})",
        sig.coeffs().len(),
        sig_length(path.dim(), m).unwrap()
    );
    for (idx, c) in sig.coeffs().iter().enumerate().take(8) {
        println!("  coeff[{idx}] = {c:.6}");
    }

    // Chen's identity: the signature of the whole path equals the tensor
    // product of the signatures of its halves.
    let split = 4;
    let halves: (Vec<Vec<f64>>, Vec<Vec<f64>>) = (
        (0..=split).map(|j| path.point(j).to_vec()).collect(),
        (split..path.len()).map(|j| path.point(j).to_vec()).collect(),
    );
    let first = Path::from_points(path.dim(), &halves.0).unwrap();
    let second = Path::from_points(path.dim(), &halves.1).unwrap();
    let combined = chen_concat(
        &path_signature(&first, m).unwrap(),
        &path_signature(&second, m).unwrap(),
    )
    .unwrap();
    let max_gap = sig
        .coeffs()
        .iter()
        .zip(combined.coeffs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("Chen identity max deviation: {max_gap:.2e}");

    // Shuffle relation at order 1x1: S(i) S(j) = S(ij) + S(ji).
    let d = path.dim();
    let s = |word: &[usize]| sig.coeff(word).unwrap();
    for i in 1..=d {
        for j in 1..=d {
            let lhs = s(&[i]) * s(&[j]);
            let rhs = s(&[i, j]) + s(&[j, i]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
    println!("shuffle relation S(i)S(j) = S(ij) + S(ji) holds for all {d}x{d} pairs");
}

//! Iterative radix-2 FFT.

use alloc::vec::Vec;

use crate::linalg::C64;

/// In-place forward transform X_k = Σ_n x_n e^{−2πikn/N}. `N` must be a
/// power of two.
pub(crate) fn fft_in_place(x: &mut [C64]) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            x.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let ang = -2.0 * core::f64::consts::PI / len as f64;
        let tw: Vec<C64> = (0..half)
            .map(|k| C64::new(libm::cos(ang * k as f64), libm::sin(ang * k as f64)))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = x[start + k];
                let b = x[start + k + half] * tw[k];
                x[start + k] = a + b;
                x[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

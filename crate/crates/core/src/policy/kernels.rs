//! Dense-layer primitives over flat row-major weights (`out × in`).

#[inline]
pub fn dense(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let n_in = x.len();
    debug_assert_eq!(w.len(), y.len() * n_in);
    for (o, y_o) in y.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = b[o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *y_o = acc;
    }
}

#[inline]
pub fn dense_tanh(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    dense(w, b, x, y);
    y.iter_mut().for_each(|v| *v = v.tanh());
}

/// Accumulate weight and bias gradients for `y = W x + b` and, when `dx` is
/// given, add `Wᵀ dy` into it.
#[inline]
pub fn dense_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        db[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (r, xi) in row.iter_mut().zip(x) {
            *r += g * xi;
        }
    }
    if let Some(dx) = dx {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &w[o * n_in..(o + 1) * n_in];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += g * wi;
            }
        }
    }
}

/// In-place `dy ← dy ⊙ (1 − a²)` where `a = tanh(·)`.
#[inline]
pub fn tanh_backward(activated: &[f64], dy: &mut [f64]) {
    for (d, a) in dy.iter_mut().zip(activated) {
        *d *= 1.0 - a * a;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

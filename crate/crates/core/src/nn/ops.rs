use super::Real;

pub const LN_EPS: f64 = 1e-5;

/// `c = a·b + beta·c` with `a` logically `m×k` and `b` logically `k×n`.
/// A transposed operand is stored row-major in its transposed shape.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], a_t: bool, b: &[T], b_t: bool, c: &mut [T], beta: T) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every strided access.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y = x·w + bias` for `x: rows×inp`, `w: inp×out`.
pub fn linear<T: Real>(x: &[T], rows: usize, inp: usize, w: &[T], bias: &[T], out: usize) -> alloc::vec::Vec<T> {
    let mut y = alloc::vec![T::zero(); rows * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(bias);
    }
    gemm(rows, inp, out, x, false, w, false, &mut y, T::one());
    y
}

/// Accumulates weight and bias gradients of [`linear`] and returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    rows: usize,
    inp: usize,
    w: &[T],
    out: usize,
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> alloc::vec::Vec<T> {
    gemm(inp, rows, out, x, true, dy, false, dw, T::one());
    for row in dy.chunks_exact(out) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = alloc::vec![T::zero(); rows * inp];
    gemm(rows, out, inp, dy, false, w, true, &mut dx, T::zero());
    dx
}

pub struct LnCache<T> {
    pub xhat: alloc::vec::Vec<T>,
    pub rstd: alloc::vec::Vec<T>,
}

pub fn layer_norm<T: Real>(x: &[T], cols: usize, g: &[T], b: &[T]) -> (alloc::vec::Vec<T>, LnCache<T>) {
    let rows = x.len() / cols;
    let n = T::from_usize(cols).unwrap();
    let eps = T::lit(LN_EPS);
    let mut y = alloc::vec![T::zero(); x.len()];
    let mut xhat = alloc::vec![T::zero(); x.len()];
    let mut rstd = alloc::vec![T::zero(); rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) / n;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..cols {
            let xh = (row[c] - mean) * rs;
            xhat[r * cols + c] = xh;
            y[r * cols + c] = g[c] * xh + b[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Real>(
    dy: &[T],
    cols: usize,
    g: &[T],
    cache: &LnCache<T>,
    dg: &mut [T],
    db: &mut [T],
) -> alloc::vec::Vec<T> {
    let rows = dy.len() / cols;
    let n = T::from_usize(cols).unwrap();
    let mut dx = alloc::vec![T::zero(); dy.len()];
    for r in 0..rows {
        let dyr = &dy[r * cols..(r + 1) * cols];
        let xh = &cache.xhat[r * cols..(r + 1) * cols];
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for c in 0..cols {
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
            let dxh = dyr[c] * g[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[c];
        }
        mean_dxh = mean_dxh / n;
        mean_dxh_xh = mean_dxh_xh / n;
        let rs = cache.rstd[r];
        for c in 0..cols {
            let dxh = dyr[c] * g[c];
            dx[r * cols + c] = rs * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

fn gelu_consts<T: Real>() -> (T, T) {
    (T::lit(0.797_884_560_802_865_4), T::lit(0.044_715))
}

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let (k, c) = gelu_consts::<T>();
    let half = T::lit(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let (k, c) = gelu_consts::<T>();
    let half = T::lit(0.5);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::lit(3.0) * c * x * x)
}

pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp()).ln() + max;
    for v in row.iter_mut() {
        *v -= lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]] (2x3), b = [[1,0],[0,1],[1,1]] (3x2)
        let a = [1.0f64, 2., 3., 4., 5., 6.];
        let b = [1.0f64, 0., 0., 1., 1., 1.];
        let mut c = [0.0f64; 4];
        gemm(2, 3, 2, &a, false, &b, false, &mut c, 0.0);
        assert_eq!(c, [4., 5., 10., 11.]);
        let at = [1.0f64, 4., 2., 5., 3., 6.];
        let bt = [1.0f64, 0., 1., 0., 1., 1.];
        let mut c2 = [1.0f64; 4];
        gemm(2, 3, 2, &at, true, &bt, true, &mut c2, 1.0);
        assert_eq!(c2, [5., 6., 11., 12.]);
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0f64, -1.0, -0.1, 0.0, 0.3, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut row = [1.0f32, 2.0, -3.0, 1000.0];
        softmax_in_place(&mut row);
        let s: f32 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        let mut lp = [0.5f64, -0.5, 2.0];
        log_softmax_in_place(&mut lp);
        let s: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

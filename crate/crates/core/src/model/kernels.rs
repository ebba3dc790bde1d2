//! Dense kernels over row-major slices: strided GEMM, layer norm, GELU.

use std::fmt::Debug;

use num_traits::Float;

/// Floating-point element type of the encoder.
pub trait Real: Float + Default + Debug + Send + Sync + 'static {
    /// `c = alpha * a @ b + beta * c` over strided views.
    ///
    /// # Safety
    /// Every index reachable through the given shapes and strides must lie
    /// inside the allocations behind `a`, `b` and `c`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// A strided 2-D view: element (i, j) lives at `offset + i*rs + j*cs`.
#[derive(Clone, Copy, Debug)]
pub struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub const fn rows(offset: usize, cols: usize) -> Self {
        Self { offset, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub const fn transposed(offset: usize, cols: usize) -> Self {
        Self { offset, rs: 1, cs: cols }
    }

    pub const fn strided(offset: usize, rs: usize, cs: usize) -> Self {
        Self { offset, rs, cs }
    }

    fn last(&self, rows: usize, cols: usize) -> usize {
        self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs
    }
}

/// `c[m×n] = alpha * a[m×k] @ b[k×n] + beta * c`. When `beta` is zero
/// `c` is overwritten without being read.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    av: View,
    b: &[T],
    bv: View,
    beta: T,
    c: &mut [T],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[cv.offset + i * cv.rs + j * cv.cs];
                *x = if beta == T::zero() { T::zero() } else { beta * *x };
            }
        }
        return;
    }
    assert!(av.last(m, k) < a.len(), "gemm: lhs view out of bounds");
    assert!(bv.last(k, n) < b.len(), "gemm: rhs view out of bounds");
    assert!(cv.last(m, n) < c.len(), "gemm: output view out of bounds");
    // SAFETY: the three asserts bound every reachable index of each view.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.offset),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// `y[rows×out] = x[rows×in] @ w[in×out] + bias`.
pub fn linear<T: Real>(x: &[T], w: &[T], bias: &[T], rows: usize, inp: usize, out: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(rows, inp, out, T::one(), x, View::rows(0, inp), w, View::rows(0, out), T::one(), &mut y, View::rows(0, out));
    y
}

/// Backward of [`linear`]: accumulates `dw += xᵀ dy`, `db += Σ dy` and
/// returns `dx = dy wᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    rows: usize,
    inp: usize,
    out: usize,
) -> Vec<T> {
    gemm(inp, rows, out, T::one(), x, View::transposed(0, inp), dy, View::rows(0, out), T::one(), dw, View::rows(0, out));
    for row in dy.chunks_exact(out) {
        for (b, g) in db.iter_mut().zip(row) {
            *b = *b + *g;
        }
    }
    let mut dx = vec![T::zero(); rows * inp];
    gemm(rows, out, inp, T::one(), dy, View::rows(0, out), w, View::transposed(0, out), T::zero(), &mut dx, View::rows(0, inp));
    dx
}

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Per-row normalization cache: `xhat` and the reciprocal std.
#[derive(Debug, Clone, Default)]
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub fn layer_norm<T: Real>(x: &[T], gamma: &[T], beta: &[T], width: usize) -> (Vec<T>, NormCache<T>) {
    let rows = x.len() / width;
    let inv = T::from_f64(1.0 / width as f64);
    let eps = T::from_f64(LAYER_NORM_EPS);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv;
        let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        for j in 0..width {
            let h = (row[j] - mean) * rs;
            xhat[r * width + j] = h;
            y[r * width + j] = gamma[j] * h + beta[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Real>(
    dy: &[T],
    cache: &NormCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    width: usize,
) -> Vec<T> {
    let inv = T::from_f64(1.0 / width as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); width];
    for (r, &rs) in cache.rstd.iter().enumerate() {
        let base = r * width;
        let mut mean_d = T::zero();
        let mut mean_dx = T::zero();
        for j in 0..width {
            let g = dy[base + j];
            let h = cache.xhat[base + j];
            dgamma[j] = dgamma[j] + g * h;
            dbeta[j] = dbeta[j] + g;
            let d = g * gamma[j];
            dxhat[j] = d;
            mean_d = mean_d + d;
            mean_dx = mean_dx + d * h;
        }
        mean_d = mean_d * inv;
        mean_dx = mean_dx * inv;
        for j in 0..width {
            dx[base + j] = rs * (dxhat[j] - mean_d - cache.xhat[base + j] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

/// In-place softmax over `row` restricted to `keep`; dropped entries get 0.
pub fn masked_softmax<T: Real>(row: &mut [T], keep: &[u8]) {
    let max = row
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k != 0)
        .map(|(&v, _)| v)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut sum = T::zero();
    for (v, &k) in row.iter_mut().zip(keep) {
        if k != 0 {
            *v = (*v - max).exp();
            sum = sum + *v;
        } else {
            *v = T::zero();
        }
    }
    let inv = T::one() / sum;
    row.iter_mut().for_each(|v| *v = *v * inv);
}

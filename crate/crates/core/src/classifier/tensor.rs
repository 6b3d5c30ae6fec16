use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of the network. `f32` trains, `f64` backs gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// `c = alpha * a * b + beta * c` for an `m x k` by `k x n` product with
    /// explicit row/column strides.
    ///
    /// # Safety
    ///
    /// The pointers must address buffers covering every element reached by
    /// the given dimensions and strides, and `c` must not alias `a` or `b`.
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

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major `c (m x n) [+]= op(a) * op(b)`.
///
/// `a` is stored `m x k`, or `k x m` when `trans_a`; `b` is stored `k x n`,
/// or `n x k` when `trans_b`.
#[allow(clippy::too_many_arguments)]
pub fn matmul<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    trans_a: bool,
    b: &[S],
    trans_b: bool,
    c: &mut [S],
    accumulate: bool,
) {
    assert!(a.len() >= m * k, "lhs too short");
    assert!(b.len() >= k * n, "rhs too short");
    assert!(c.len() >= m * n, "output too short");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { S::one() } else { S::zero() };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            S::one(),
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
        )
    }
}

/// Dense `N x C x H x W` tensor. Feature vectors use `H = W = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub shape: [usize; 4],
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Self { shape, data }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, i: usize) -> &[S] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    /// Collapses `C x H x W` into a feature axis.
    pub fn flatten(self) -> Self {
        let f = self.sample_len();
        Self {
            shape: [self.shape[0], f, 1, 1],
            data: self.data,
        }
    }

    pub fn reshape(self, shape: [usize; 4]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "reshape changes size");
        Self { shape, data: self.data }
    }
}

/// Holds forward activations needed by backward; clones start empty so that
/// snapshotting a network never copies activations.
#[derive(Debug)]
pub struct Cache<T>(pub Option<T>);

impl<T> Default for Cache<T> {
    fn default() -> Self {
        Cache(None)
    }
}

impl<T> Clone for Cache<T> {
    fn clone(&self) -> Self {
        Cache(None)
    }
}

impl<T> Cache<T> {
    pub fn put(&mut self, v: T) {
        self.0 = Some(v);
    }

    pub fn take(&mut self, layer: &str) -> T {
        self.0
            .take()
            .unwrap_or_else(|| panic!("{layer}: backward called without a training forward pass"))
    }

    pub fn clear(&mut self) {
        self.0 = None;
    }
}

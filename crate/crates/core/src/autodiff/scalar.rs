//! Element-type abstraction: f32 for training, f64 for verification-mode math.

use num_traits::Float;

/// Numeric precision of a tensor element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::F32 => write!(f, "f32"),
            Precision::F64 => write!(f, "f64"),
        }
    }
}

/// Floating-point element type usable by the tensor engine.
///
/// Dense matrix products dispatch to `matrixmultiply`'s sgemm/dgemm so both
/// precisions share one code path everywhere else.
pub trait Scalar: Float + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static {
    const PRECISION: Precision;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn to_f32(self) -> f32;

    /// C(m x n) := alpha * op(A) * op(B) + beta * C, all buffers row-major.
    ///
    /// `ta`/`tb` select the transposed view: with `ta` the slice holds a
    /// (k x m) matrix read as its transpose, likewise `tb` for a (n x k) B.
    fn gemm(
        ta: bool,
        tb: bool,
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_scalar {
    ($t:ty, $prec:expr, $mm:path) => {
        impl Scalar for $t {
            const PRECISION: Precision = $prec;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_f32(x: f32) -> Self {
                x as $t
            }
            #[inline]
            fn to_f32(self) -> f32 {
                self as f32
            }

            fn gemm(
                ta: bool,
                tb: bool,
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k, "gemm: A too short");
                assert!(b.len() >= k * n, "gemm: B too short");
                assert!(c.len() >= m * n, "gemm: C too short");
                let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
                unsafe {
                    $mm(
                        m,
                        k,
                        n,
                        alpha,
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
        }
    };
}

impl_scalar!(f32, Precision::F32, matrixmultiply::sgemm);
impl_scalar!(f64, Precision::F64, matrixmultiply::dgemm);

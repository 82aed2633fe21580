//! Transformer encoder trained with masked language modeling.
//!
//! Parameters live in one flat buffer described by a [`model::Layout`];
//! forward and backward passes are written out by hand, one sequence at a
//! time, so sequences never need padding. The model is generic over the
//! float type: training runs in `f32`, gradient checks in `f64`.

pub mod data;
pub mod fill;
pub mod mlm;
pub mod model;
mod ops;
pub mod optim;
pub mod train;

use core::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign};

pub use fill::{fill_mask_topk, Candidate, FillConfig};
pub use mlm::apply_mlm_masking;
pub use model::{Activation, Layout, Model, ModelConfig, ParamSpec, PositionalEmbedding};
pub use train::{train, Checkpoint, EpochLog, TrainConfig, TrainOutcome};

/// Float type the network is computed in.
pub trait Real: Float + NumAssign + FromPrimitive + Default + Debug + Send + Sync + 'static {
    /// `c = alpha * a * b + beta * c` on strided row-major views.
    ///
    /// # Safety
    /// The strided views must stay inside the buffers behind the pointers.
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

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
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
}

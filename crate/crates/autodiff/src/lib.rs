//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! Values live on a [`Tape`]; trainable weights live in a [`ParamStore`] and are
//! bound to the tape by id, so a forward pass never copies them. After
//! [`Tape::backward`], gradients are moved into the store and consumed by [`Adam`].
//!
//! ```
//! use cdbin_autodiff::{Tape, ParamStore, Tensor};
//!
//! let store = ParamStore::<f64>::new();
//! let mut tape = Tape::new(&store);
//! let x = tape.input(Tensor::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap());
//! let sq = tape.square(x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, -4.0, 1.0]);
//! ```

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod param;
pub mod real;
pub mod tape;
pub mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{check_gradients, layer_suite, GradCheckReport, SuiteCase};
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, Dense};
pub use optim::{Adam, AdamConfig};
pub use param::{ParamId, ParamStore, Role, StatUpdate};
pub use real::Real;
pub use tape::{BnMode, Gradients, Tape, Var, BN_EPS, PROB_EPS};
pub use tensor::Tensor;

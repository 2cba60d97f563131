//! Reference systems: the two RLC circuits with uncontrollable and
//! unobservable realizations, plus small scalar examples with known answers.

use crate::statespace::StateSpaceSystem;

/// Left circuit, state `(i₁, i₂, v₃, v₄)`. Transfer function is identically 1,
/// the observable part is one-dimensional and `±j` are uncontrollable.
pub fn circuit1() -> StateSpaceSystem {
    StateSpaceSystem::from_rows(
        4,
        1,
        1,
        &[
            -1.0, -1.0, 1.0, 0.0, //
            -1.0, -1.0, 0.0, 1.0, //
            -1.0, 0.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, 0.0,
        ],
        &[1.0, 1.0, 1.0, 1.0],
        &[-1.0, -1.0, 1.0, 1.0],
        &[1.0],
    )
    .expect("circuit1 dimensions")
    .with_label("circuit1")
}

/// Right circuit in the coordinates `(i₁+i₂, v₃+v₄, i₂, v₄)`; lossless with
/// transfer function `2ξ/(ξ²+1)`.
pub fn circuit2() -> StateSpaceSystem {
    StateSpaceSystem::from_rows(
        4,
        1,
        1,
        &[
            0.0, 1.0, 0.0, 0.0, //
            -1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, -1.0, 0.0,
        ],
        &[0.0, 2.0, 0.0, 1.0],
        &[0.0, 1.0, 0.0, 0.0],
        &[0.0],
    )
    .expect("circuit2 dimensions")
    .with_label("circuit2")
}

/// Two-state observable part of [`circuit2`].
pub fn circuit2_observable() -> StateSpaceSystem {
    StateSpaceSystem::from_rows(
        2,
        1,
        1,
        &[0.0, 1.0, -1.0, 0.0],
        &[0.0, 2.0],
        &[0.0, 1.0],
        &[0.0],
    )
    .expect("dimensions")
    .with_label("circuit2-observable")
}

/// Scalar `(a, b, c, d)` system.
pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> StateSpaceSystem {
    StateSpaceSystem::from_rows(1, 1, 1, &[a], &[b], &[c], &[d])
        .expect("scalar dimensions")
        .with_label(format!("scalar({a},{b},{c},{d})"))
}

/// The transform `T` taking circuit 1 to its observer form; row 1 is
/// `i₁+i₂−v₃−v₄`.
pub fn circuit1_transform() -> crate::numkernel::Mat {
    crate::numkernel::Mat::from_row_slice(
        4,
        4,
        &[
            1.0, 1.0, -1.0, -1.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    )
}

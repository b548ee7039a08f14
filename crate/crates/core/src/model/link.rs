use serde::{Deserialize, Serialize};

use crate::real::Real;

/// The map `g` applied to the squared residual norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    /// `g(x) = x`: least-squares data fit.
    Identity,
    /// `g(x) = √x`: square-root (scaled) data fit.
    SquareRoot,
}

impl LinkFunction {
    pub fn value<T: Real>(self, x: T) -> T {
        match self {
            LinkFunction::Identity => x,
            LinkFunction::SquareRoot => x.sqrt(),
        }
    }

    /// `g'(x)`; the square-root link returns `+∞` at `x = 0`.
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            LinkFunction::Identity => T::one(),
            LinkFunction::SquareRoot => (T::lit(2.0) * x.sqrt()).recip(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LinkFunction::Identity => "identity",
            LinkFunction::SquareRoot => "square_root",
        }
    }
}

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Compares the tape gradient of a scalar function against central
/// differences and returns the largest relative error
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// `f` receives a fresh tape and the recorded input; it must return a
/// one-element value.
pub fn finite_diff_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone().with_requires_grad(true));
    let loss = f(&mut tape, xv)?;
    tape.backward(loss)?;
    let analytic = tape.take_grad(xv).expect("leaf gradient after backward");

    let eval = |probe: Tensor<T>| -> Result<T> {
        let mut t = Tape::new();
        let v = t.constant(probe);
        let out = f(&mut t, v)?;
        t.value(out).item()
    };

    let floor = T::lit(1e-8);
    let two_eps = eps + eps;
    let mut worst = T::zero();
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / two_eps;
        let rel = (a - numeric).abs() / floor.max(a.abs() + numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

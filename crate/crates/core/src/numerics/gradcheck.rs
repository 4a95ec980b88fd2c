use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Central-difference estimate `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every
/// coordinate of `x`.
pub fn finite_diff_grad<T: Real>(mut f: impl FnMut(&Tensor<T>) -> T, x: &Tensor<T>, h: T) -> Result<Tensor<T>> {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.dims().to_vec());
    let two_h = h + h;
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle { coord: i });
        }
        out.data_mut()[i] = (plus - minus) / two_h;
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-6)`. The floor keeps pairs of vanishing
/// gradients from dividing noise by noise.
pub fn relative_error<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let diff = libm::sqrt(
        a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
            .sum::<f64>(),
    );
    let na: f64 = a.norm().to_f64();
    let nb: f64 = b.norm().to_f64();
    diff / na.max(nb).max(1e-6)
}

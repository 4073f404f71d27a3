use super::tensor::Tensor;
use crate::error::{PpmError, Result};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gradients of an affine map `y = x·W + b`.
#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// `y = x·W + b` with `x: [n×in]`, `W: [in×out]`, `b: [out]`.
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (_, out) = w.dims2()?;
    if b.shape() != [out] {
        return Err(PpmError::shape(
            "affine_forward",
            format!("bias {:?} for weight {:?}", b.shape(), w.shape()),
        ));
    }
    let mut y = x.matmul(w)?;
    let bias = b.data();
    for i in 0..y.shape()[0] {
        for (v, bb) in y.row_mut(i).iter_mut().zip(bias) {
            *v += bb;
        }
    }
    Ok(y)
}

/// Backward pass of [`affine_forward`]; `x` and `w` are the forward inputs.
pub fn affine_backward(grad_y: &Tensor, x: &Tensor, w: &Tensor) -> Result<AffineGrads> {
    let (n, out) = grad_y.dims2()?;
    let (nx, _) = x.dims2()?;
    if n != nx || w.dims2()?.1 != out {
        return Err(PpmError::shape(
            "affine_backward",
            format!("grad {:?}, x {:?}, w {:?}", grad_y.shape(), x.shape(), w.shape()),
        ));
    }
    Ok(AffineGrads {
        input: grad_y.matmul_nt(w)?,
        weight: x.matmul_tn(grad_y)?,
        bias: grad_y.sum_rows()?,
    })
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2))
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Exact GeLU, `x·Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn gelu_forward(x: &Tensor) -> Tensor {
    x.map(gelu)
}

pub fn gelu_backward(grad_y: &Tensor, x: &Tensor) -> Result<Tensor> {
    grad_y.zip_map(x, |g, v| g * gelu_grad(v))
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log Σ exp(v)`, shifted by the maximum.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    let max = v
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or(PpmError::Empty("log_sum_exp"))?;
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    let s: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

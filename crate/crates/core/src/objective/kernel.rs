use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PpmError, Result};

/// Smoothing kernel for the density estimate, unit scale and normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KdeKernel {
    #[default]
    Gaussian,
    StudentT { nu: f64 },
    Laplace,
    Logistic,
    Cauchy,
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

impl KdeKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KdeKernel::StudentT { nu } if !(nu > 0.0 && nu.is_finite()) => Err(
                PpmError::InvalidArgument(format!("student-t kernel needs nu > 0, got {nu}")),
            ),
            _ => Ok(()),
        }
    }

    /// `log K(u)`.
    #[inline]
    pub fn log_kernel(&self, u: f64) -> f64 {
        match *self {
            KdeKernel::Gaussian => -0.5 * u * u - 0.5 * (2.0 * PI).ln(),
            KdeKernel::StudentT { nu } => {
                ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * PI).ln()
                    - 0.5 * (nu + 1.0) * (u * u / nu).ln_1p()
            }
            KdeKernel::Laplace => -(2f64.ln()) - u.abs(),
            KdeKernel::Logistic => {
                // symmetric, so evaluate on |u| to keep exp() bounded
                let a = u.abs();
                -a - 2.0 * (-a).exp().ln_1p()
            }
            KdeKernel::Cauchy => -PI.ln() - (u * u).ln_1p(),
        }
    }

    /// `d/du log K(u)`.
    #[inline]
    pub fn dlog_kernel(&self, u: f64) -> f64 {
        match *self {
            KdeKernel::Gaussian => -u,
            KdeKernel::StudentT { nu } => -(nu + 1.0) * u / (nu + u * u),
            KdeKernel::Laplace => {
                if u > 0.0 {
                    -1.0
                } else if u < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KdeKernel::Logistic => -(0.5 * u).tanh(),
            KdeKernel::Cauchy => -2.0 * u / (1.0 + u * u),
        }
    }
}

impl fmt::Display for KdeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KdeKernel::Gaussian => write!(f, "gaussian"),
            KdeKernel::StudentT { nu } => write!(f, "student_t:{nu}"),
            KdeKernel::Laplace => write!(f, "laplace"),
            KdeKernel::Logistic => write!(f, "logistic"),
            KdeKernel::Cauchy => write!(f, "cauchy"),
        }
    }
}

impl FromStr for KdeKernel {
    type Err = PpmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let k = match s.as_str() {
            "gaussian" | "normal" => KdeKernel::Gaussian,
            "laplace" => KdeKernel::Laplace,
            "logistic" => KdeKernel::Logistic,
            "cauchy" => KdeKernel::Cauchy,
            "student_t" => KdeKernel::StudentT { nu: 3.0 },
            other => match other.strip_prefix("student_t:") {
                Some(v) => KdeKernel::StudentT {
                    nu: v
                        .parse()
                        .map_err(|_| PpmError::Config(format!("bad kernel degrees of freedom: {v}")))?,
                },
                None => return Err(PpmError::Config(format!("unknown kernel {s}"))),
            },
        };
        k.validate()?;
        Ok(k)
    }
}

impl TryFrom<String> for KdeKernel {
    type Error = PpmError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KdeKernel> for String {
    fn from(k: KdeKernel) -> String {
        k.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [KdeKernel; 5] = [
        KdeKernel::Gaussian,
        KdeKernel::StudentT { nu: 3.0 },
        KdeKernel::Laplace,
        KdeKernel::Logistic,
        KdeKernel::Cauchy,
    ];

    #[test]
    fn kernels_integrate_to_one() {
        // trapezoid on a wide grid; Cauchy tails are added analytically
        for k in ALL {
            let (a, n) = (200.0, 4_000_000);
            let dx = 2.0 * a / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let u = -a + i as f64 * dx;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                s += w * k.log_kernel(u).exp();
            }
            s *= dx;
            let tail = match k {
                KdeKernel::Cauchy => 2.0 * (0.5 - (a.atan() / PI)),
                _ => 0.0,
            };
            let tol = if let KdeKernel::StudentT { .. } = k { 1e-4 } else { 1e-6 };
            assert!((s + tail - 1.0).abs() < tol, "{k}: {}", s + tail);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for k in ALL {
            for &u in &[-3.1, -0.7, 0.4, 1.9, 6.0] {
                let h = 1e-6;
                let fd = (k.log_kernel(u + h) - k.log_kernel(u - h)) / (2.0 * h);
                assert!((fd - k.dlog_kernel(u)).abs() < 1e-7, "{k} at {u}");
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        for k in ALL {
            assert_eq!(k.to_string().parse::<KdeKernel>().unwrap(), k);
        }
        assert!("epanechnikov".parse::<KdeKernel>().is_err());
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rng::RngState;
use super::tensor::Tensor;
use crate::error::{PpmError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Base noise family for reparameterized prior draws.
///
/// All families except Student-t are standardized to mean 0 and variance 1.
/// Student-t keeps unit scale, so its variance is `nu / (nu - 2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PriorFamily {
    #[default]
    Gaussian,
    Uniform,
    Laplace,
    StudentT { nu: f64 },
    Logistic,
    Gumbel,
}

impl PriorFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorFamily::StudentT { nu } if !(nu > 2.0 && nu.is_finite()) => {
                Err(PpmError::InvalidArgument(format!(
                    "student-t prior needs nu > 2 for finite variance, got {nu}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Variance of the standardized draw.
    pub fn variance(&self) -> f64 {
        match *self {
            PriorFamily::StudentT { nu } => nu / (nu - 2.0),
            _ => 1.0,
        }
    }

    /// One standardized draw. Everything but the Gaussian and Student-t goes
    /// through an inverse CDF of a single open-interval uniform.
    pub fn draw(&self, rng: &mut RngState) -> f64 {
        match *self {
            PriorFamily::Gaussian => rng.standard_normal(),
            PriorFamily::Uniform => 3f64.sqrt() * (2.0 * rng.uniform_open() - 1.0),
            PriorFamily::Laplace => {
                let b = std::f64::consts::FRAC_1_SQRT_2;
                let u = rng.uniform_open() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            PriorFamily::StudentT { nu } => {
                let z = rng.standard_normal();
                let v = rng.chi_squared(nu);
                z / (v / nu).sqrt()
            }
            PriorFamily::Logistic => {
                let s = 3f64.sqrt() / std::f64::consts::PI;
                let u = rng.uniform_open();
                s * (u / (1.0 - u)).ln()
            }
            PriorFamily::Gumbel => {
                let u = rng.uniform_open();
                let g = -(-u.ln()).ln();
                (g - EULER_GAMMA) * 6f64.sqrt() / std::f64::consts::PI
            }
        }
    }

    pub fn fill(&self, out: &mut [f64], rng: &mut RngState) {
        for v in out {
            *v = self.draw(rng);
        }
    }
}

/// I.i.d. standardized draws of the given shape.
pub fn sample_standard(family: PriorFamily, shape: &[usize], rng: &mut RngState) -> Result<Tensor> {
    family.validate()?;
    let mut t = Tensor::zeros(shape);
    family.fill(t.data_mut(), rng);
    Ok(t)
}

impl fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorFamily::Gaussian => write!(f, "gaussian"),
            PriorFamily::Uniform => write!(f, "uniform"),
            PriorFamily::Laplace => write!(f, "laplace"),
            PriorFamily::StudentT { nu } => write!(f, "student_t:{nu}"),
            PriorFamily::Logistic => write!(f, "logistic"),
            PriorFamily::Gumbel => write!(f, "gumbel"),
        }
    }
}

impl FromStr for PriorFamily {
    type Err = PpmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let fam = match s.as_str() {
            "gaussian" | "normal" => PriorFamily::Gaussian,
            "uniform" => PriorFamily::Uniform,
            "laplace" => PriorFamily::Laplace,
            "logistic" => PriorFamily::Logistic,
            "gumbel" => PriorFamily::Gumbel,
            other => match other.strip_prefix("student_t") {
                Some(rest) => {
                    let nu = match rest.strip_prefix(':') {
                        Some(v) => v.parse::<f64>().map_err(|_| {
                            PpmError::Config(format!("bad student_t degrees of freedom: {v}"))
                        })?,
                        None if rest.is_empty() => 5.0,
                        None => return Err(PpmError::Config(format!("unknown prior family {s}"))),
                    };
                    PriorFamily::StudentT { nu }
                }
                None => return Err(PpmError::Config(format!("unknown prior family {s}"))),
            },
        };
        fam.validate()?;
        Ok(fam)
    }
}

impl TryFrom<String> for PriorFamily {
    type Error = PpmError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PriorFamily> for String {
    fn from(f: PriorFamily) -> String {
        f.to_string()
    }
}

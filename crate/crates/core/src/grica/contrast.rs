use serde::{Deserialize, Serialize};

/// Smooth even contrast applied componentwise to demixed samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contrast {
    /// `g(u) = log cosh(βu) / β`, which tends to `|u|` as `β` grows.
    SmoothL1 { beta: f64 },
    /// `g(u) = log cosh(u / scale)`.
    LogCosh { scale: f64 },
}

impl Default for Contrast {
    fn default() -> Self {
        Contrast::SmoothL1 { beta: 10.0 }
    }
}

impl Contrast {
    pub fn check(&self) -> Result<(), String> {
        match *self {
            Contrast::SmoothL1 { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(format!("contrast sharpness must be positive, got {beta}"))
            }
            Contrast::LogCosh { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(format!("contrast scale must be positive, got {scale}"))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Contrast::SmoothL1 { beta } => log_cosh(beta * u) / beta,
            Contrast::LogCosh { scale } => log_cosh(u / scale),
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Contrast::SmoothL1 { beta } => tanh_fast(beta * u),
            Contrast::LogCosh { scale } => tanh_fast(u / scale) / scale,
        }
    }

    /// Value and derivative together.
    #[inline]
    pub fn eval(&self, u: f64) -> (f64, f64) {
        // g(u) = a log cosh(z) with z = u / s, so g'(u) = (a / s) tanh(z).
        let (z, a, d) = match *self {
            Contrast::SmoothL1 { beta } => (beta * u, 1.0 / beta, 1.0),
            Contrast::LogCosh { scale } => (u / scale, 1.0, 1.0 / scale),
        };
        let az = z.abs();
        if az > 20.0 {
            (a * (az - LN_2), d * z.signum())
        } else {
            let e = (-2.0 * az).exp();
            (a * (az + e.ln_1p() - LN_2), d * z.signum() * (1.0 - e) / (1.0 + e))
        }
    }
}

const LN_2: f64 = std::f64::consts::LN_2;

/// `log cosh z` without overflow.
#[inline]
pub fn log_cosh(z: f64) -> f64 {
    let az = z.abs();
    if az > 20.0 {
        az - LN_2
    } else {
        az + (-2.0 * az).exp().ln_1p() - LN_2
    }
}

#[inline]
fn tanh_fast(z: f64) -> f64 {
    if z.abs() > 20.0 {
        z.signum()
    } else {
        z.tanh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cosh_matches_naive() {
        for z in [-30.0f64, -19.9, -3.0, -0.1, 0.0, 0.2, 5.0, 20.1, 40.0] {
            let naive = if z.abs() < 300.0 { f64::cosh(z).ln() } else { f64::NAN };
            assert!((log_cosh(z) - naive).abs() < 1e-12, "{z}");
        }
    }

    #[test]
    fn eval_agrees_with_parts() {
        for c in [Contrast::SmoothL1 { beta: 10.0 }, Contrast::LogCosh { scale: 0.7 }] {
            for i in -40..=40 {
                let u = i as f64 * 0.137;
                let (v, d) = c.eval(u);
                assert!((v - c.value(u)).abs() < 1e-14);
                assert!((d - c.derivative(u)).abs() < 1e-14);
                let h = 1e-6;
                let fd = (c.value(u + h) - c.value(u - h)) / (2.0 * h);
                assert!((fd - d).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn smooth_l1_approaches_abs() {
        let c = Contrast::SmoothL1 { beta: 1000.0 };
        assert!((c.value(-2.5) - 2.5).abs() < 1e-3);
        assert_eq!(c.value(0.0), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Contrast::SmoothL1 { beta: 0.0 }.check().is_err());
        assert!(Contrast::LogCosh { scale: -1.0 }.check().is_err());
        assert!(Contrast::default().check().is_ok());
    }
}

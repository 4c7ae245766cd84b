use serde::{Deserialize, Serialize};

/// Output nonlinearity applied to the summed modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Activation::Identity => s,
            Activation::Tanh => s.tanh(),
            Activation::Softplus => s.max(0.0) + (-s.abs()).exp().ln_1p(),
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = s.tanh();
                1.0 - t * t
            }
            Activation::Softplus => {
                if s >= 0.0 {
                    1.0 / (1.0 + (-s).exp())
                } else {
                    let e = s.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(crate::error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        for act in [Activation::Identity, Activation::Tanh, Activation::Softplus] {
            for &s in &[-30.0, -2.0, -0.3, 0.0, 0.7, 3.0, 40.0] {
                let h = 1e-6;
                let fd = (act.apply(s + h) - act.apply(s - h)) / (2.0 * h);
                assert!((fd - act.derivative(s)).abs() < 1e-8, "{act:?} at {s}");
            }
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(Activation::Softplus.apply(800.0), 800.0);
        assert!(Activation::Softplus.apply(-800.0) >= 0.0);
        assert!((Activation::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}

//! Named waveforms for boundary data `b(t)` and initial data `u₀(x)`.
//!
//! `{"type": "sin", "amplitude": 1, "frequency": 2, "phase": 0}` is
//! `sin(2s)`; `sum` adds its `terms`.

use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Waveform {
    Zero,
    Constant {
        value: f64,
    },
    Sin {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Cos {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `Σ coeffs[k] s^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    Sum {
        terms: Vec<Waveform>,
    },
}

impl Waveform {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => *value,
            Waveform::Sin {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * s + phase).sin(),
            Waveform::Cos {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * s + phase).cos(),
            Waveform::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c),
            Waveform::Sum { terms } => terms.iter().map(|w| w.eval(s)).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Waveform::Zero => true,
            Waveform::Constant { value } => *value == 0.0,
            Waveform::Sin { amplitude, .. } | Waveform::Cos { amplitude, .. } => *amplitude == 0.0,
            Waveform::Polynomial { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            Waveform::Sum { terms } => terms.iter().all(Waveform::is_zero),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_evaluate() {
        let w: Waveform = serde_json::from_str(
            r#"{"type":"sum","terms":[{"type":"sin","amplitude":-1,"frequency":0.5},
                {"type":"polynomial","coeffs":[1,0,2]},{"type":"constant","value":0.25}]}"#,
        )
        .unwrap();
        let s: f64 = 0.7;
        let want = -(0.5 * s).sin() + 1.0 + 2.0 * s * s + 0.25;
        assert!((w.eval(s) - want).abs() < 1e-15);
        let c: Waveform = serde_json::from_str(r#"{"type":"cos"}"#).unwrap();
        assert_eq!(c.eval(0.0), 1.0);
        assert!(serde_json::from_str::<Waveform>(r#"{"type":"square"}"#).is_err());
        assert!(Waveform::Sum {
            terms: vec![Waveform::Zero]
        }
        .is_zero());
    }
}

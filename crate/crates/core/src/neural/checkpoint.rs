//! Text checkpoints: a version line, then one line per tensor:
//!
//! ```text
//! rhf-checkpoint v1
//! dense0.weight 16x7 0.12 -0.03 ...
//! dense0.bias 16 0 0 ...
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load cycle is exact.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::Parameterized;

pub const CHECKPOINT_HEADER: &str = "rhf-checkpoint v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (expected header `{CHECKPOINT_HEADER}`)")]
    BadHeader,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("tensor `{name}` has shape {found}, model expects {expected}")]
    Shape {
        name: String,
        expected: String,
        found: String,
    },
    #[error("tensor `{0}` missing from checkpoint")]
    Missing(String),
    #[error("checkpoint has unknown tensor `{0}`")]
    Unknown(String),
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub fn save_checkpoint<M: Parameterized>(model: &M) -> String {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_HEADER}").unwrap();
    for t in model.tensors() {
        write!(out, "{} {}", t.name, shape_str(&t.shape)).unwrap();
        for v in t.data {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Loads into `model`, which must have exactly the checkpoint's tensors and
/// shapes. The model is left unchanged on error.
pub fn load_checkpoint<M: Parameterized>(model: &mut M, text: &str) -> Result<(), CheckpointError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CHECKPOINT_HEADER => {}
        _ => return Err(CheckpointError::BadHeader),
    }
    let mut found: HashMap<String, (String, Vec<f64>)> = HashMap::new();
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let Some(name) = parts.next() else { continue };
        let err = |message: String| CheckpointError::Parse { line: i + 1, message };
        let shape = parts
            .next()
            .ok_or_else(|| err(format!("tensor `{name}` has no shape")))?;
        let values = parts
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value `{v}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if found.insert(name.to_string(), (shape.to_string(), values)).is_some() {
            return Err(err(format!("duplicate tensor `{name}`")));
        }
    }

    let mut flat = Vec::with_capacity(model.param_count());
    for t in model.tensors() {
        let (shape, values) = found
            .remove(&t.name)
            .ok_or_else(|| CheckpointError::Missing(t.name.clone()))?;
        let expected = shape_str(&t.shape);
        if shape != expected || values.len() != t.data.len() {
            return Err(CheckpointError::Shape {
                name: t.name,
                expected,
                found: shape,
            });
        }
        flat.extend(values);
    }
    if let Some(name) = found.into_keys().min() {
        return Err(CheckpointError::Unknown(name));
    }
    model.set_flat(&flat);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, GruCell, Mlp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mlp::new(&[7, 16, 32, 7], Activation::Softmax, &mut rng);
        let text = save_checkpoint(&m);
        let mut other = Mlp::new(&[7, 16, 32, 7], Activation::Softmax, &mut rng);
        assert_ne!(other, m);
        load_checkpoint(&mut other, &text).unwrap();
        assert_eq!(other, m);

        let g = GruCell::new(3, 4, &mut rng);
        let mut h = GruCell::new(3, 4, &mut rng);
        load_checkpoint(&mut h, &save_checkpoint(&g)).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mlp::new(&[7, 16, 7], Activation::Softmax, &mut rng);
        let mut other = Mlp::new(&[26, 16, 7], Activation::Softmax, &mut rng);
        let before = other.clone();
        assert!(matches!(
            load_checkpoint(&mut other, &save_checkpoint(&m)),
            Err(CheckpointError::Shape { .. })
        ));
        assert_eq!(other, before);
        let mut gru = GruCell::new(7, 4, &mut rng);
        assert!(matches!(
            load_checkpoint(&mut gru, &save_checkpoint(&m)),
            Err(CheckpointError::Missing(_))
        ));
        assert_eq!(load_checkpoint(&mut gru, "junk"), Err(CheckpointError::BadHeader));
    }
}

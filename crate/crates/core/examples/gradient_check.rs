//! Finite-difference check of the hand-written backward pass for every MLP
//! kind and activation, tied and untied.
//!
//!     cargo run --release --example gradient_check

use caplab::model::{grad_check, Activation, MlpKind, ModelConfig};

fn main() -> caplab::Result<()> {
    for tie_weights in [true, false] {
        for mlp in [MlpKind::Standard, MlpKind::Gated, MlpKind::Quarter, MlpKind::None] {
            for activation in [Activation::Gelu, Activation::Silu] {
                let c = ModelConfig {
                    layers: 2,
                    heads: 2,
                    head_dim: 8,
                    mlp,
                    activation,
                    tie_weights,
                    vocab_size: 31,
                    window_len: 16,
                };
                let g = grad_check(&c, 1)?;
                println!(
                    "tied={tie_weights:<5} {:<8} {:<4}  max rel err {:.2e} over {} params (worst in {})",
                    format!("{mlp:?}"),
                    format!("{activation:?}"),
                    g.max_rel_error,
                    g.checked,
                    g.worst
                );
            }
        }
    }
    Ok(())
}

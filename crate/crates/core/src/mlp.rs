use rand::Rng;

use crate::autodiff::{ParamId, ParameterStore, Tape, Var};
use crate::error::{Error, Result};

/// One tanh hidden layer followed by a linear output layer.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub hidden_w: ParamId,
    pub hidden_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
    ) -> Self {
        Mlp {
            hidden_w: store.add_uniform(&format!("{prefix}.hidden.w"), hidden, input, rng),
            hidden_b: store.add_zeros(&format!("{prefix}.hidden.b"), hidden, 1),
            out_w: store.add_uniform(&format!("{prefix}.out.w"), output, hidden, rng),
            out_b: store.add_zeros(&format!("{prefix}.out.b"), output, 1),
        }
    }

    pub fn from_store(store: &ParameterStore, prefix: &str) -> Result<Self> {
        let id = |suffix: &str| {
            let name = format!("{prefix}.{suffix}");
            store
                .id(&name)
                .ok_or_else(|| Error::ModelFormat(format!("missing parameter {name}")))
        };
        Ok(Mlp {
            hidden_w: id("hidden.w")?,
            hidden_b: id("hidden.b")?,
            out_w: id("out.w")?,
            out_b: id("out.b")?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, input: Var) -> Result<Var> {
        let w1 = tape.param(store, self.hidden_w);
        let b1 = tape.param(store, self.hidden_b);
        let w2 = tape.param(store, self.out_w);
        let b2 = tape.param(store, self.out_b);
        let pre = tape.affine(w1, input, b1)?;
        let hidden = tape.tanh(pre)?;
        Ok(tape.affine(w2, hidden, b2)?)
    }
}

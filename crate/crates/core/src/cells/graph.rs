use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::step::{step_layer, LayerMask, LayerParams, LayerVars, StackParams};
use super::{CellError, Model, ModelConfig, ModelState};
use crate::corpus::VOCAB_SIZE;
use crate::numcore::{dropout_mask, Tape, Tensor, Var};

/// Dropout is active only in training mode.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

/// Units whose hidden (and, unless `hidden_only`, cell) values are forced
/// to zero after every cell update, keyed by layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ablation {
    pub units: BTreeMap<usize, Vec<usize>>,
    pub hidden_only: bool,
}

impl Ablation {
    pub fn none() -> Self {
        Ablation::default()
    }

    pub fn top_layer(config: &ModelConfig, units: &[usize]) -> Result<Self, CellError> {
        let mut a = Ablation::none();
        a.units.insert(config.layers - 1, units.to_vec());
        a.validate(config)?;
        Ok(a)
    }

    pub fn all_layers(config: &ModelConfig, units: &[usize]) -> Result<Self, CellError> {
        let mut a = Ablation::none();
        for l in 0..config.layers {
            a.units.insert(l, units.to_vec());
        }
        a.validate(config)?;
        Ok(a)
    }

    pub fn hidden_only(mut self, yes: bool) -> Self {
        self.hidden_only = yes;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.units.values().all(Vec::is_empty)
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<(), CellError> {
        for (&layer, units) in &self.units {
            if layer >= config.layers {
                return Err(CellError::Config(format!("ablation layer {layer} out of range")));
            }
            if let Some(&u) = units.iter().find(|&&u| u >= config.hidden) {
                return Err(CellError::InvalidUnit { unit: u, hidden: config.hidden });
            }
        }
        Ok(())
    }
}

/// Tape handles for the whole model state.
pub type StateVars = Vec<LayerVars>;

/// A model bound to a tape. Parameter leaves (and ablation masks) sit at the
/// bottom of the tape and survive [`Graph::reset`].
pub struct Graph<'m, 'r> {
    model: &'m Model,
    pub tape: Tape,
    params: Vec<Var>,
    embed: Var,
    layers: Vec<LayerParams>,
    dec_w: Var,
    dec_b: Var,
    masks: Vec<Option<LayerMask>>,
    base: usize,
    mode: Mode<'r>,
}

impl<'m, 'r> Graph<'m, 'r> {
    pub fn new(model: &'m Model, mode: Mode<'r>) -> Self {
        Self::with_ablation(model, mode, &Ablation::none()).expect("empty ablation is valid")
    }

    pub fn with_ablation(model: &'m Model, mode: Mode<'r>, ablation: &Ablation) -> Result<Self, CellError> {
        let cfg = &model.config;
        ablation.validate(cfg)?;
        let mut tape = Tape::new();
        let params: Vec<Var> = model.params.iter().map(|(_, p)| tape.leaf(p.value.clone())).collect();
        let var = |name: &str| params[model.params.index_of(name).unwrap_or_else(|| panic!("parameter {name}"))];
        let layers = (0..cfg.layers)
            .map(|l| LayerParams {
                w: var(&format!("l{l}.w")),
                u: var(&format!("l{l}.u")),
                b: var(&format!("l{l}.b")),
                stack: cfg.architecture.has_stack().then(|| StackParams {
                    read: var(&format!("l{l}.stack.read")),
                    act_w: var(&format!("l{l}.stack.act.w")),
                    act_b: var(&format!("l{l}.stack.act.b")),
                    push_w: var(&format!("l{l}.stack.push.w")),
                    push_b: var(&format!("l{l}.stack.push.b")),
                }),
            })
            .collect();
        let (embed, dec_w, dec_b) = (var("embed"), var("dec.w"), var("dec.b"));
        let masks = (0..cfg.layers)
            .map(|l| match ablation.units.get(&l) {
                Some(units) if !units.is_empty() => {
                    let mut m = Tensor::filled(1, cfg.hidden, 1.0);
                    for &u in units {
                        m[(0, u)] = 0.0;
                    }
                    Some(LayerMask { mask: tape.leaf(m), cell: !ablation.hidden_only })
                }
                _ => None,
            })
            .collect();
        let base = tape.len();
        Ok(Graph { model, tape, params, embed, layers, dec_w, dec_b, masks, base, mode })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// Parameter leaves in [`ParamStore`](crate::numcore::ParamStore) order.
    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }

    /// Drops everything recorded since construction.
    pub fn reset(&mut self) {
        self.tape.truncate(self.base);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    /// Places a (detached) state on the tape as leaves.
    pub fn bind_state(&mut self, state: ModelState) -> StateVars {
        state
            .layers
            .into_iter()
            .map(|l| LayerVars {
                h: self.tape.leaf(l.h),
                c: l.c.map(|c| self.tape.leaf(c)),
                stacks: l.stacks.into_iter().map(|s| self.tape.leaf(s)).collect(),
            })
            .collect()
    }

    /// Copies the state values off the tape.
    pub fn state(&self, vars: &StateVars) -> ModelState {
        ModelState {
            layers: vars
                .iter()
                .map(|l| super::LayerState {
                    h: self.tape.value(l.h).clone(),
                    c: l.c.map(|c| self.tape.value(c).clone()),
                    stacks: l.stacks.iter().map(|&s| self.tape.value(s).clone()).collect(),
                })
                .collect(),
        }
    }

    /// Moves the state values off the tape; the vars must not be used again.
    pub fn take_state(&mut self, vars: &StateVars) -> ModelState {
        ModelState {
            layers: vars
                .iter()
                .map(|l| super::LayerState {
                    h: self.tape.take_value(l.h),
                    c: l.c.map(|c| self.tape.take_value(c)),
                    stacks: l.stacks.iter().map(|&s| self.tape.take_value(s)).collect(),
                })
                .collect(),
        }
    }

    fn maybe_dropout(&mut self, x: Var) -> Var {
        let rate = self.model.config.dropout;
        match &mut self.mode {
            Mode::Train(rng) if rate > 0.0 => {
                let (r, c) = self.tape.value(x).shape();
                let mask = dropout_mask(r, c, rate, &mut **rng);
                let m = self.tape.leaf(mask);
                self.tape.mul(x, m)
            }
            _ => x,
        }
    }

    /// Feeds one token per batch row through every layer.
    pub fn step(&mut self, ids: &[usize], state: &StateVars) -> Result<StateVars, CellError> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= VOCAB_SIZE) {
            return Err(CellError::InvalidId(bad));
        }
        let cfg = self.model.config;
        if state.len() != cfg.layers || self.tape.value(state[0].h).rows() != ids.len() {
            return Err(CellError::Shape(format!("state does not match batch of {}", ids.len())));
        }
        let x = self.tape.gather(self.embed, ids);
        let mut x = self.maybe_dropout(x);
        let mut next = Vec::with_capacity(cfg.layers);
        for (l, prev) in state.iter().enumerate() {
            if l > 0 {
                x = self.maybe_dropout(x);
            }
            let p = self.layers[l];
            let out = step_layer(&mut self.tape, &cfg, &p, x, prev, self.masks[l]);
            x = out.h;
            next.push(out);
        }
        Ok(next)
    }

    /// Decoder logits from the top hidden state.
    pub fn decode(&mut self, h: Var) -> Var {
        self.tape.affine(h, self.dec_w, self.dec_b)
    }

    pub fn top(vars: &StateVars) -> Var {
        vars.last().expect("at least one layer").h
    }
}

/// Runs `ids` (one equal-length sequence per batch row) from `state` and
/// returns the logits at every position plus the final state.
pub fn lm_forward(
    model: &Model,
    state: &ModelState,
    ids: &[Vec<usize>],
    mode: Mode<'_>,
) -> Result<(Vec<Tensor>, ModelState), CellError> {
    let batch = ids.len();
    state.check(&model.config, batch)?;
    let len = ids.first().map_or(0, Vec::len);
    if ids.iter().any(|s| s.len() != len) {
        return Err(CellError::Shape("sequences differ in length".into()));
    }
    let mut g = Graph::new(model, mode);
    let mut state = state.clone();
    let mut logits = Vec::with_capacity(len);
    let mut col = vec![0; batch];
    for t in 0..len {
        for (c, s) in col.iter_mut().zip(ids) {
            *c = s[t];
        }
        g.reset();
        let vars = g.bind_state(state);
        let next = g.step(&col, &vars)?;
        let out = g.decode(Graph::top(&next));
        logits.push(g.tape.take_value(out));
        state = g.take_state(&next);
    }
    Ok((logits, state))
}

/// Loss, parameter gradients and carried state of one truncated window.
pub struct WindowOutput {
    pub loss: f64,
    /// One gradient per parameter, in store order.
    pub grads: Vec<Tensor>,
    pub state: ModelState,
}

/// Mean next-token cross-entropy over a time-major window (`inputs[t][b]`
/// predicts `targets[t][b]`), starting from a detached `state`.
pub fn window_loss(
    model: &Model,
    state: ModelState,
    inputs: &[Vec<usize>],
    targets: &[Vec<usize>],
    mode: Mode<'_>,
) -> Result<WindowOutput, CellError> {
    assert_eq!(inputs.len(), targets.len(), "one target column per input column");
    if let Some(&bad) = targets.iter().flatten().find(|&&t| t >= VOCAB_SIZE) {
        return Err(CellError::InvalidId(bad));
    }
    let batch = inputs.first().map_or(0, Vec::len);
    state.check(&model.config, batch)?;
    let mut g = Graph::new(model, mode);
    let mut vars = g.bind_state(state);
    let mut logits = Vec::with_capacity(inputs.len());
    for col in inputs {
        vars = g.step(col, &vars)?;
        logits.push(g.decode(Graph::top(&vars)));
    }
    let all = g.tape.concat_rows(&logits);
    let flat: Vec<usize> = targets.iter().flatten().copied().collect();
    let loss = g.tape.cross_entropy(all, &flat);
    let mut grads = g.tape.backward(loss);
    let grads = g
        .params
        .iter()
        .map(|&p| {
            grads.take(p).unwrap_or_else(|| {
                let (r, c) = g.tape.value(p).shape();
                Tensor::zeros(r, c)
            })
        })
        .collect();
    Ok(WindowOutput { loss: g.tape.value(loss)[(0, 0)], grads, state: g.state(&vars) })
}

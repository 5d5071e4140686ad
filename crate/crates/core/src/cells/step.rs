use super::{Architecture, ModelConfig, STACK_READOUT};
use crate::numcore::{Tape, Var};

#[derive(Clone, Copy, Debug)]
pub(crate) struct StackParams {
    pub read: Var,
    pub act_w: Var,
    pub act_b: Var,
    pub push_w: Var,
    pub push_b: Var,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerParams {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub stack: Option<StackParams>,
}

/// Tape handles of one layer's state.
#[derive(Clone, Debug)]
pub struct LayerVars {
    pub h: Var,
    pub c: Option<Var>,
    pub stacks: Vec<Var>,
}

/// Zeroing masks applied right after the cell update.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerMask {
    pub mask: Var,
    pub cell: bool,
}

/// One recurrent step of one layer. Never touches `prev`.
pub(crate) fn step_layer(
    tape: &mut Tape,
    cfg: &ModelConfig,
    p: &LayerParams,
    x: Var,
    prev: &LayerVars,
    mask: Option<LayerMask>,
) -> LayerVars {
    let hsz = cfg.hidden;
    let h_in = match &p.stack {
        Some(sp) => {
            let tops: Vec<Var> = prev.stacks.iter().map(|&s| tape.slice_cols(s, 0, STACK_READOUT * hsz)).collect();
            let read = if tops.len() == 1 { tops[0] } else { tape.concat_cols(&tops) };
            let fed = tape.matmul_t(read, sp.read);
            tape.add(prev.h, fed)
        }
        None => prev.h,
    };
    let px = tape.affine(x, p.w, p.b);
    let ph = tape.matmul_t(h_in, p.u);
    let (mut h, mut c) = match cfg.architecture {
        Architecture::Srn | Architecture::Stackrnn => {
            let pre = tape.add(px, ph);
            (tape.tanh(pre), None)
        }
        Architecture::Gru => gru(tape, hsz, px, ph, h_in),
        Architecture::Lstm | Architecture::Stacklstm => {
            let pre = tape.add(px, ph);
            let c_prev = prev.c.expect("lstm state has a cell");
            let i = gate(tape, pre, 0, hsz, true);
            let f = gate(tape, pre, hsz, hsz, true);
            let g = gate(tape, pre, 2 * hsz, hsz, false);
            let o = gate(tape, pre, 3 * hsz, hsz, true);
            let (h, c) = cell_output(tape, f, i, g, o, c_prev);
            (h, Some(c))
        }
        Architecture::Onlstm => {
            let pre = tape.add(px, ph);
            let (h, c) = onlstm(tape, cfg, pre, prev.c.expect("onlstm state has a cell"));
            (h, Some(c))
        }
    };
    if let Some(m) = mask {
        h = tape.mul_row(h, m.mask);
        if m.cell {
            c = c.map(|c| tape.mul_row(c, m.mask));
        }
    }
    let stacks = match &p.stack {
        Some(sp) => {
            let n_act = cfg.stack.n_actions();
            let logits = tape.affine(h, sp.act_w, sp.act_b);
            let push = tape.affine(h, sp.push_w, sp.push_b);
            prev.stacks
                .iter()
                .enumerate()
                .map(|(j, &s)| {
                    let a = tape.slice_cols(logits, j * n_act, n_act);
                    let a = tape.softmax_rows(a);
                    let v = gate(tape, push, j * hsz, hsz, true);
                    tape.stack_update(s, a, v, cfg.stack.depth)
                })
                .collect()
        }
        None => Vec::new(),
    };
    LayerVars { h, c, stacks }
}

fn gate(tape: &mut Tape, pre: Var, start: usize, len: usize, sigmoid: bool) -> Var {
    let s = tape.slice_cols(pre, start, len);
    if sigmoid {
        tape.sigmoid(s)
    } else {
        tape.tanh(s)
    }
}

/// `c = f∘c_prev + i∘g`, `h = o∘tanh(c)`.
fn cell_output(tape: &mut Tape, f: Var, i: Var, g: Var, o: Var, c_prev: Var) -> (Var, Var) {
    let keep = tape.mul(f, c_prev);
    let write = tape.mul(i, g);
    let c = tape.add(keep, write);
    let tc = tape.tanh(c);
    (tape.mul(o, tc), c)
}

/// Reset gate `r`, update gate `z`, candidate `n = tanh(W_n x + r∘(U_n h))`,
/// `h = (1 − z)∘n + z∘h_prev`.
fn gru(tape: &mut Tape, hsz: usize, px: Var, ph: Var, h_prev: Var) -> (Var, Option<Var>) {
    let rz_x = tape.slice_cols(px, 0, 2 * hsz);
    let rz_h = tape.slice_cols(ph, 0, 2 * hsz);
    let rz = tape.add(rz_x, rz_h);
    let r = gate(tape, rz, 0, hsz, true);
    let z = gate(tape, rz, hsz, hsz, true);
    let nx = tape.slice_cols(px, 2 * hsz, hsz);
    let nh = tape.slice_cols(ph, 2 * hsz, hsz);
    let rn = tape.mul(r, nh);
    let n = tape.add(nx, rn);
    let n = tape.tanh(n);
    let one_z = tape.one_minus(z);
    let a = tape.mul(one_z, n);
    let b = tape.mul(z, h_prev);
    (tape.add(a, b), None)
}

/// Ordered-neuron update. Gate block layout:
/// `[master_f (H/chunk), master_i (H/chunk), i, f, g, o]`.
fn onlstm(tape: &mut Tape, cfg: &ModelConfig, pre: Var, c_prev: Var) -> (Var, Var) {
    let hsz = cfg.hidden;
    let m = hsz / cfg.chunk;
    let mf = tape.slice_cols(pre, 0, m);
    let mf = tape.cumax_rows(mf);
    let mi = tape.slice_cols(pre, m, m);
    let mi = tape.cumax_rows(mi);
    let mi = tape.one_minus(mi);
    let (mf, mi) = if cfg.chunk > 1 {
        (tape.repeat_cols(mf, cfg.chunk), tape.repeat_cols(mi, cfg.chunk))
    } else {
        (mf, mi)
    };
    let i = gate(tape, pre, 2 * m, hsz, true);
    let f = gate(tape, pre, 2 * m + hsz, hsz, true);
    let g = gate(tape, pre, 2 * m + 2 * hsz, hsz, false);
    let o = gate(tape, pre, 2 * m + 3 * hsz, hsz, true);
    let omega = tape.mul(mf, mi);
    let f_in = tape.mul(f, omega);
    let f_out = tape.sub(mf, omega);
    let f_hat = tape.add(f_in, f_out);
    let i_in = tape.mul(i, omega);
    let i_out = tape.sub(mi, omega);
    let i_hat = tape.add(i_in, i_out);
    cell_output(tape, f_hat, i_hat, g, o, c_prev)
}

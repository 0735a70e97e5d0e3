//! Stacked bidirectional LSTM with diagonal peephole connections.
//!
//! Gate pre-activations are laid out as `[i | f | g | o]` blocks of `hidden`
//! columns in `w_x` (`input × 4H`), `w_h` (`H × 4H`) and `b` (`1 × 4H`).
//! Peepholes `p_i`, `p_f` read the previous cell state and `p_o` the current
//! one:
//!
//! ```text
//! i = σ(W_xi x + W_hi h₋ + p_i ⊙ c₋ + b_i)
//! f = σ(W_xf x + W_hf h₋ + p_f ⊙ c₋ + b_f)
//! g = tanh(W_xg x + W_hg h₋ + b_g)
//! c = f ⊙ c₋ + i ⊙ g
//! o = σ(W_xo x + W_ho h₋ + p_o ⊙ c + b_o)
//! h = o ⊙ tanh(c)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

pub const FORGET_BIAS: f64 = 5.0;
pub const INIT_RANGE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fw",
            Direction::Backward => "bw",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_dim: 360,
            hidden: 320,
            layers: 4,
        }
    }
}

impl EncoderConfig {
    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            2 * self.hidden
        }
    }
}

/// Name prefix of one cell's parameters, e.g. `enc.l0.fw`.
pub fn cell_prefix(layer: usize, dir: Direction) -> String {
    format!("enc.l{layer}.{}", dir.tag())
}

/// One cell's parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct CellVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
    pub p_i: Var,
    pub p_f: Var,
    pub p_o: Var,
    pub hidden: usize,
}

impl CellVars {
    pub fn record(tape: &mut Tape, params: &ParamStore, prefix: &str) -> Result<Self> {
        let mut get = |name: &str| tape.param(params, &format!("{prefix}.{name}"));
        let cell = CellVars {
            w_x: get("w_x")?,
            w_h: get("w_h")?,
            b: get("b")?,
            p_i: get("p_i")?,
            p_f: get("p_f")?,
            p_o: get("p_o")?,
            hidden: params.get(&format!("{prefix}.p_i"))?.cols(),
        };
        Ok(cell)
    }
}

/// One recurrence step given the input projection `gates_x = W_x x + b`
/// (a `1 × 4H` row). `None` states stand for zeros.
pub fn lstm_step(
    tape: &mut Tape,
    cell: &CellVars,
    gates_x: Var,
    h_prev: Option<Var>,
    c_prev: Option<Var>,
) -> Result<(Var, Var)> {
    let hd = cell.hidden;
    let pre = match h_prev {
        Some(h) => {
            let rec = tape.matmul(h, cell.w_h)?;
            tape.add(gates_x, rec)?
        }
        None => gates_x,
    };
    let mut i_pre = tape.slice_cols(pre, 0, hd)?;
    let mut f_pre = tape.slice_cols(pre, hd, 2 * hd)?;
    let g_pre = tape.slice_cols(pre, 2 * hd, 3 * hd)?;
    let o_pre = tape.slice_cols(pre, 3 * hd, 4 * hd)?;
    if let Some(c) = c_prev {
        let pi = tape.mul(cell.p_i, c)?;
        i_pre = tape.add(i_pre, pi)?;
        let pf = tape.mul(cell.p_f, c)?;
        f_pre = tape.add(f_pre, pf)?;
    }
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let ig = tape.mul(i, g)?;
    let c = match c_prev {
        Some(c_prev) => {
            let fc = tape.mul(f, c_prev)?;
            tape.add(fc, ig)?
        }
        None => ig,
    };
    let po = tape.mul(cell.p_o, c)?;
    let o_pre = tape.add(o_pre, po)?;
    let o = tape.sigmoid(o_pre)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Scan one direction over a `T × D` input, returning `T × H` outputs in
/// time order.
pub fn run_direction(tape: &mut Tape, cell: &CellVars, input: Var, dir: Direction) -> Result<Var> {
    let t_len = tape.value(input).rows();
    let proj = tape.matmul(input, cell.w_x)?;
    let gates_x = tape.add_row(proj, cell.b)?;
    let order: Vec<usize> = match dir {
        Direction::Forward => (0..t_len).collect(),
        Direction::Backward => (0..t_len).rev().collect(),
    };
    let mut outputs = vec![None; t_len];
    let (mut h, mut c) = (None, None);
    for t in order {
        let gx = tape.row(gates_x, t)?;
        let (h_t, c_t) = lstm_step(tape, cell, gx, h, c)?;
        outputs[t] = Some(h_t);
        h = Some(h_t);
        c = Some(c_t);
    }
    let rows: Vec<Var> = outputs.into_iter().map(|v| v.expect("every frame visited")).collect();
    tape.stack_rows(&rows)
}

/// The bidirectional stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstmStack {
    pub config: EncoderConfig,
}

impl BiLstmStack {
    pub fn new(config: EncoderConfig) -> Self {
        BiLstmStack { config }
    }

    /// `T × D` frames to `T × 2H` hidden features.
    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, frames: Var) -> Result<Var> {
        let dim = tape.value(frames).cols();
        if dim != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                op: "BiLstmStack::forward",
                lhs: vec![self.config.input_dim],
                rhs: vec![dim],
            });
        }
        if tape.value(frames).rows() == 0 {
            return Err(Error::InvalidArgument("encoder input has no frames".into()));
        }
        let mut x = frames;
        for layer in 0..self.config.layers {
            let fw = CellVars::record(tape, params, &cell_prefix(layer, Direction::Forward))?;
            let bw = CellVars::record(tape, params, &cell_prefix(layer, Direction::Backward))?;
            let hf = run_direction(tape, &fw, x, Direction::Forward)?;
            let hb = run_direction(tape, &bw, x, Direction::Backward)?;
            x = tape.concat_cols(&[hf, hb])?;
        }
        Ok(x)
    }

    /// Untracked forward pass.
    pub fn run(&self, params: &ParamStore, frames: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(frames.clone())?;
        let h = self.forward(&mut tape, params, x)?;
        Ok(tape.value(h).clone())
    }

    /// Add freshly initialized encoder parameters to `params`.
    ///
    /// Weights are uniform in `(−0.05, 0.05)`, biases zero except the forget
    /// gate at 5, peepholes zero.
    pub fn init_params(&self, params: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let hd = self.config.hidden;
        for layer in 0..self.config.layers {
            let input = self.config.layer_input_dim(layer);
            for dir in [Direction::Forward, Direction::Backward] {
                let prefix = cell_prefix(layer, dir);
                params.insert(format!("{prefix}.w_x"), uniform(&[input, 4 * hd], rng))?;
                params.insert(format!("{prefix}.w_h"), uniform(&[hd, 4 * hd], rng))?;
                let mut b = Tensor::zeros(&[1, 4 * hd]);
                for k in hd..2 * hd {
                    b.set(0, k, FORGET_BIAS);
                }
                params.insert(format!("{prefix}.b"), b)?;
                for p in ["p_i", "p_f", "p_o"] {
                    params.insert(format!("{prefix}.{p}"), Tensor::zeros(&[1, hd]))?;
                }
            }
        }
        Ok(())
    }

    /// Standalone initialization from a seed.
    pub fn init(&self, seed: u64) -> Result<ParamStore> {
        let mut params = ParamStore::new();
        self.init_params(&mut params, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(params)
    }
}

pub(crate) fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent extents")
}

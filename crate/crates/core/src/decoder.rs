//! The generative captioner.
//!
//! Raw location features are reduced by a 1x1 projection with ReLU, words
//! are embedded, and an LSTM consumes at every step the attended visual
//! vector together with the embedding of the previous word. Attention is
//! computed from the state *before* the current word is consumed.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttendOutput, Attention, AttentionParams, ParamRole, SaliencyGrid, Variant};
use crate::data_io::tensor_file;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::vocab::PAD;

const GATES: [&str; 4] = ["i", "f", "o", "g"];
const INPUT_STD: f64 = 0.01;

/// Sizes and attention variant of a captioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Channels of the raw input features (`D_raw`).
    pub raw_feature_dim: usize,
    /// Channels after the 1x1 projection (`D`).
    pub feature_dim: usize,
    pub hidden: usize,
    pub embed: usize,
    /// Hidden size of the attention scoring network (`D_att`).
    pub att_dim: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("raw_feature_dim", self.raw_feature_dim),
            ("feature_dim", self.feature_dim),
            ("hidden", self.hidden),
            ("embed", self.embed),
            ("att_dim", self.att_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Names and dims of every parameter, in registration order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>, Init)> {
        let (d, h, e, v) = (self.feature_dim, self.hidden, self.embed, self.vocab_size);
        let mut out = vec![
            ("proj.W".to_string(), vec![d, self.raw_feature_dim], Init::Glorot),
            ("proj.b".to_string(), vec![d], Init::Zero),
            ("emb".to_string(), vec![v, e], Init::Gaussian),
            ("out.W_p".to_string(), vec![v, h], Init::Gaussian),
        ];
        for g in GATES {
            out.push((format!("lstm.W_v.{g}"), vec![h, d], Init::Gaussian));
            out.push((format!("lstm.W_w.{g}"), vec![h, e], Init::Gaussian));
            out.push((format!("lstm.W_h.{g}"), vec![h, h], Init::Orthogonal));
            out.push((format!("lstm.b.{g}"), vec![h], Init::Zero));
        }
        for (name, dims, role) in attention::param_layout(self.variant, d, h, self.att_dim) {
            let init = match role {
                ParamRole::Input => Init::Gaussian,
                ParamRole::Recurrent => Init::Orthogonal,
                ParamRole::Zero => Init::Zero,
            };
            out.push((name, dims, init));
        }
        out
    }
}

/// Initialisation rule of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `N(0, 0.01^2)`.
    Gaussian,
    /// Orthogonal matrix from the QR factorisation of a standard Gaussian matrix.
    Orthogonal,
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    Glorot,
    Zero,
}

/// Image-side inputs: raw `L x D_raw` features and the saliency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pub features: Tensor,
    pub saliency: SaliencyGrid,
}

impl ImageInput {
    pub fn new(features: Tensor, saliency: SaliencyGrid) -> Result<Self> {
        if features.rank() != 2 || features.rows() != saliency.len() {
            return Err(Error::shape(format!(
                "features {:?} do not match {} saliency locations",
                features.dims(),
                saliency.len()
            )));
        }
        Ok(ImageInput { features, saliency })
    }

    pub fn locations(&self) -> usize {
        self.saliency.len()
    }
}

/// Per-gate LSTM weights on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub w_v: Var,
    pub w_w: Var,
    pub w_h: Var,
    pub b: Var,
}

/// LSTM weights for the input, forget, output and candidate gates.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input: GateVars,
    pub forget: GateVars,
    pub output: GateVars,
    pub cell: GateVars,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, hidden: usize) -> Self {
        LstmState {
            h: tape.constant(Tensor::zeros(&[hidden])),
            c: tape.constant(Tensor::zeros(&[hidden])),
        }
    }
}

/// New state plus the gate activations that produced it.
#[derive(Debug, Clone, Copy)]
pub struct LstmStep {
    pub state: LstmState,
    pub i: Var,
    pub f: Var,
    pub o: Var,
    pub g: Var,
}

fn gate_pre(tape: &mut Tape, v_hat: Var, w: Var, h_prev: Var, p: &GateVars) -> Result<Var> {
    let a = tape.matmul(p.w_v, v_hat)?;
    let b = tape.matmul(p.w_w, w)?;
    let c = tape.matmul(p.w_h, h_prev)?;
    let ab = tape.add(a, b)?;
    let abc = tape.add(ab, c)?;
    tape.add(abc, p.b)
}

/// One LSTM step:
/// `c_t = f * c_prev + i * g`, `h_t = o * tanh(c_t)`.
pub fn lstm_step(tape: &mut Tape, v_hat: Var, w: Var, state: LstmState, p: &LstmVars) -> Result<LstmStep> {
    let pre_i = gate_pre(tape, v_hat, w, state.h, &p.input)?;
    let i = tape.sigmoid(pre_i)?;
    let pre_f = gate_pre(tape, v_hat, w, state.h, &p.forget)?;
    let f = tape.sigmoid(pre_f)?;
    let pre_o = gate_pre(tape, v_hat, w, state.h, &p.output)?;
    let o = tape.sigmoid(pre_o)?;
    let pre_g = gate_pre(tape, v_hat, w, state.h, &p.cell)?;
    let g = tape.tanh(pre_g)?;
    let keep = tape.hadamard(f, state.c)?;
    let write = tape.hadamard(i, g)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.hadamard(o, squashed)?;
    Ok(LstmStep {
        state: LstmState { h, c },
        i,
        f,
        o,
        g,
    })
}

/// `a_i = relu(W raw_i + b)` for every location, i.e. a 1x1 convolution.
pub fn project_features(tape: &mut Tape, raw: Var, w: Var, b: Var) -> Result<Var> {
    let w_t = tape.transpose(w)?;
    let lin = tape.matmul(raw, w_t)?;
    let biased = tape.add_row(lin, b)?;
    tape.relu(biased)
}

/// Vocabulary logits `W_p h`.
pub fn output_logits(tape: &mut Tape, h: Var, w_p: Var) -> Result<Var> {
    tape.matmul(w_p, h)
}

/// Word distribution `softmax(W_p h)`.
pub fn output_distribution(tape: &mut Tape, h: Var, w_p: Var) -> Result<Var> {
    let logits = output_logits(tape, h, w_p)?;
    tape.softmax(logits)
}

#[derive(Debug, Clone, Copy)]
struct GateIds {
    w_v: ParamId,
    w_w: ParamId,
    w_h: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ModelIds {
    proj_w: ParamId,
    proj_b: ParamId,
    emb: ParamId,
    w_p: ParamId,
    gates: [GateIds; 4],
    attention: AttentionParams,
}

/// A captioner: configuration plus its parameter store.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    ids: ModelIds,
}

/// Orthonormal `n x n` matrix: Gram-Schmidt on the columns of a Gaussian
/// matrix, which is the Q of its QR factorisation with positive `diag(R)`.
pub fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let g: Vec<f64> = (0..n * n).map(|_| normal.sample(rng)).collect();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| g[i * n + j]).collect()).collect();
    for j in 0..n {
        // Two passes keep the columns orthogonal to machine precision.
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * q;
                }
            }
        }
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    let mut data = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            data[i * n + j] = x;
        }
    }
    Tensor::new(vec![n, n], data).expect("square dims")
}

impl Model {
    /// Initialises every parameter deterministically from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaussian = Normal::new(0.0, INPUT_STD).expect("valid normal");
        let mut store = ParamStore::new();
        for (name, dims, init) in config.param_layout() {
            let n: usize = dims.iter().product();
            let value = match init {
                Init::Zero => Tensor::zeros(&dims),
                Init::Gaussian => Tensor::new(dims, (0..n).map(|_| gaussian.sample(&mut rng)).collect())?,
                Init::Orthogonal => {
                    if dims[0] != dims[1] {
                        return Err(Error::Config(format!("{name}: orthogonal init needs a square matrix")));
                    }
                    orthogonal(dims[0], &mut rng)
                }
                Init::Glorot => {
                    let limit = (6.0 / (dims[0] + dims[1]) as f64).sqrt();
                    let u = Uniform::new_inclusive(-limit, limit).expect("valid range");
                    Tensor::new(dims, (0..n).map(|_| u.sample(&mut rng)).collect())?
                }
            };
            store.insert(name, value)?;
        }
        Self::from_store(config, store)
    }

    /// Wraps an existing store, checking that names and dims match `config`.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if layout.len() != store.len() {
            return Err(Error::Config(format!(
                "expected {} parameters for this configuration, found {}",
                layout.len(),
                store.len()
            )));
        }
        for (name, dims, _) in &layout {
            let slot = store
                .by_name(name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
            if slot.value.dims() != dims.as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has dims {:?}, expected {dims:?}",
                    slot.value.dims()
                )));
            }
        }
        let id = |n: &str| store.id(n).expect("checked above");
        let gate = |g: &str| GateIds {
            w_v: id(&format!("lstm.W_v.{g}")),
            w_w: id(&format!("lstm.W_w.{g}")),
            w_h: id(&format!("lstm.W_h.{g}")),
            b: id(&format!("lstm.b.{g}")),
        };
        let ids = ModelIds {
            proj_w: id("proj.W"),
            proj_b: id("proj.b"),
            emb: id("emb"),
            w_p: id("out.W_p"),
            gates: GATES.map(gate),
            attention: AttentionParams::bind(&store, config.variant)?,
        };
        Ok(Model { config, store, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_params(self) -> ParamStore {
        self.store
    }

    /// Binds the parameters to `tape`, projects the image features and
    /// prepares attention; the returned session steps the decoder.
    pub fn session(&self, tape: &mut Tape, image: &ImageInput) -> Result<Session> {
        if image.features.cols() != self.config.raw_feature_dim {
            return Err(Error::shape(format!(
                "features have {} channels, model expects {}",
                image.features.cols(),
                self.config.raw_feature_dim
            )));
        }
        let p = |tape: &mut Tape, id| tape.param(&self.store, id);
        let proj_w = p(tape, self.ids.proj_w);
        let proj_b = p(tape, self.ids.proj_b);
        let emb = p(tape, self.ids.emb);
        let w_p = p(tape, self.ids.w_p);
        let [gi, gf, go, gg] = self.ids.gates.map(|g| GateVars {
            w_v: tape.param(&self.store, g.w_v),
            w_w: tape.param(&self.store, g.w_w),
            w_h: tape.param(&self.store, g.w_h),
            b: tape.param(&self.store, g.b),
        });
        let lstm = LstmVars {
            input: gi,
            forget: gf,
            output: go,
            cell: gg,
        };
        let att_vars = self.ids.attention.vars(tape, &self.store);
        let raw = tape.constant(image.features.clone());
        let grid = project_features(tape, raw, proj_w, proj_b)?;
        let attention = Attention::prepare(tape, &att_vars, self.config.variant, grid, &image.saliency)?;
        let state = LstmState::zeros(tape, self.config.hidden);
        Ok(Session {
            emb,
            w_p,
            lstm,
            grid,
            attention,
            state,
            vocab_size: self.config.vocab_size,
        })
    }

    /// Teacher-forced summed negative log-likelihood of `ids`
    /// (`BOS w_1 .. w_n EOS`, optionally right-padded with PAD).
    /// Returns the loss variable and the number of scored tokens.
    pub fn sequence_nll(&self, tape: &mut Tape, image: &ImageInput, ids: &[usize]) -> Result<(Var, usize)> {
        if ids.is_empty() {
            return Err(Error::arg("empty token sequence"));
        }
        let steps = ids.iter().skip(1).take_while(|&&t| t != PAD).count();
        if ids[1 + steps..].iter().any(|&t| t != PAD) {
            return Err(Error::arg("PAD must only appear as right padding"));
        }
        if steps == 0 {
            return Err(Error::arg("sequence has no non-pad target tokens"));
        }
        let mut session = self.session(tape, image)?;
        let mut total: Option<Var> = None;
        for t in 0..steps {
            let out = session.step(tape, ids[t])?;
            let nll = tape.cross_entropy(out.logits, ids[t + 1])?;
            total = Some(match total {
                Some(acc) => tape.add(acc, nll)?,
                None => nll,
            });
        }
        Ok((total.expect("at least one step"), steps))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = serde_json::to_string_pretty(&self.config).expect("config serializes");
        let cfg_path = dir.join("model.json");
        std::fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
        tensor_file::save_params(&self.store, dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("model.json");
        let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config: ModelConfig = serde_json::from_str(&text).map_err(|e| Error::json(&cfg_path, e))?;
        let store = tensor_file::load_params(dir)?;
        Self::from_store(config, store)
    }
}

/// Output of one decoder step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub attention: AttendOutput,
    pub lstm: LstmStep,
    pub logits: Var,
}

/// Decoder state for one image on one tape.
#[derive(Debug, Clone)]
pub struct Session {
    emb: Var,
    w_p: Var,
    lstm: LstmVars,
    grid: Var,
    attention: Attention,
    state: LstmState,
    vocab_size: usize,
}

impl Session {
    /// Attends from the current state, consumes `word`, and predicts the next word.
    pub fn step(&mut self, tape: &mut Tape, word: usize) -> Result<StepOutput> {
        if word >= self.vocab_size {
            return Err(Error::arg(format!(
                "token id {word} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        let attention = self.attention.attend(tape, self.state.h)?;
        let w = tape.row(self.emb, word)?;
        let lstm = lstm_step(tape, attention.v_hat, w, self.state, &self.lstm)?;
        self.state = lstm.state;
        let logits = output_logits(tape, lstm.state.h, self.w_p)?;
        Ok(StepOutput {
            attention,
            lstm,
            logits,
        })
    }

    /// The projected feature grid `{a_i}`.
    pub fn grid(&self) -> Var {
        self.grid
    }

    pub fn state(&self) -> LstmState {
        self.state
    }
}

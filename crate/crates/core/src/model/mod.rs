//! Conversation model: bidirectional recurrent encoder, speaker and context
//! graph streams (relational aggregation, hypergraph smoothing, signed
//! frequency gate), modality reconstruction with attention refinement, and
//! an utterance classifier.

mod checkpoint;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Conversation, Dataset, NUM_MODALITIES};
use crate::diffcore::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{
    build_hypergraph, build_interaction_graph, ContextRelation, InteractionGraph, RelationKind,
    WeightedHypergraph,
};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use layers::GruWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dims: [usize; NUM_MODALITIES],
    pub num_classes: usize,
    /// Speaker ids must be below this; speaker-pair relations number its square.
    pub num_speakers: usize,
    /// Per-stream graph extent.
    pub hidden: usize,
    pub window: usize,
    pub hyper_layers: usize,
    pub heads: usize,
    /// Attention extent; defaults to the smallest multiple of `heads` that is
    /// at least the total feature extent.
    pub att_dim: Option<usize>,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub use_speaker: bool,
    pub use_context: bool,
    pub use_freq_gate: bool,
    pub use_self_opt: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dims: [8, 8, 8],
            num_classes: 4,
            num_speakers: 2,
            hidden: 16,
            window: 2,
            hyper_layers: 2,
            heads: 4,
            att_dim: None,
            dropout: 0.5,
            leaky_slope: 0.01,
            use_speaker: true,
            use_context: true,
            use_freq_gate: true,
            use_self_opt: true,
        }
    }
}

/// Table-style ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Drop the speaker stream.
    Sp,
    /// Drop the context stream.
    Co,
    /// Bypass the frequency gate.
    Fre,
    /// Bypass attention refinement.
    Op,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Sp, Ablation::Co, Ablation::Fre, Ablation::Op];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Sp => "w/o Sp",
            Ablation::Co => "w/o Co",
            Ablation::Fre => "w/o Fre",
            Ablation::Op => "w/o Op",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(Ablation::Sp),
            "co" => Ok(Ablation::Co),
            "fre" => Ok(Ablation::Fre),
            "op" => Ok(Ablation::Op),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?} (expected sp, co, fre or op)"
            ))),
        }
    }
}

impl ModelConfig {
    pub fn feature_extent(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Per-direction recurrent extent.
    pub fn gru_hidden(&self) -> usize {
        self.feature_extent().div_ceil(2)
    }

    pub fn streams(&self) -> usize {
        usize::from(self.use_speaker) + usize::from(self.use_context)
    }

    /// Width of the fused latent.
    pub fn latent_extent(&self) -> usize {
        self.hidden * self.streams()
    }

    pub fn attention_extent(&self) -> usize {
        self.att_dim.unwrap_or_else(|| {
            self.feature_extent().div_ceil(self.heads.max(1)) * self.heads.max(1)
        })
    }

    pub fn speaker_relations(&self) -> usize {
        self.num_speakers * self.num_speakers
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::Sp => self.use_speaker = false,
            Ablation::Co => self.use_context = false,
            Ablation::Fre => self.use_freq_gate = false,
            Ablation::Op => self.use_self_opt = false,
        }
        self
    }

    /// Fills data-dependent fields from a dataset.
    pub fn for_dataset(mut self, ds: &Dataset) -> Self {
        self.dims = ds.dims;
        self.num_classes = ds.num_classes;
        self.num_speakers = self.num_speakers.max(ds.speaker_space());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dims.contains(&0) || self.num_classes < 2 || self.num_speakers == 0 {
            return bad(format!(
                "dims {:?}, {} classes and {} speakers must all be positive (classes >= 2)",
                self.dims, self.num_classes, self.num_speakers
            ));
        }
        if self.hidden == 0 {
            return bad("hidden extent must be positive".into());
        }
        if self.window == 0 {
            return bad("context window must be positive".into());
        }
        if self.streams() == 0 {
            return bad("at least one of the speaker and context streams must be enabled".into());
        }
        if self.heads == 0 {
            return bad("attention needs at least one head".into());
        }
        if let Some(a) = self.att_dim {
            if a == 0 || a % self.heads != 0 {
                return bad(format!(
                    "attention extent {a} is not divisible by {} heads",
                    self.heads
                ));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return bad(format!(
                "leaky slope {} must be finite and >= 0",
                self.leaky_slope
            ));
        }
        Ok(())
    }
}

/// Graph structures of one conversation, built once and reused every epoch.
#[derive(Clone, Debug)]
pub struct ConvGraphs {
    pub interaction: InteractionGraph,
    pub hypergraph: WeightedHypergraph,
}

impl ConvGraphs {
    pub fn build(conv: &Conversation, window: usize) -> Result<Self> {
        Ok(Self {
            interaction: build_interaction_graph(conv, window)?,
            hypergraph: build_hypergraph(conv, window, 1.0, 1.0)?,
        })
    }
}

/// Tape handles of one forward pass.
pub struct ForwardOutput<'t> {
    /// Fused latent, `[n, latent_extent]`.
    pub latent: Var<'t>,
    /// Affine reconstructions per modality, before attention.
    pub recon_raw: [Var<'t>; NUM_MODALITIES],
    /// Attention-refined reconstructions per modality (equal to `recon_raw`
    /// when refinement is off).
    pub recon: [Var<'t>; NUM_MODALITIES],
    pub logits: Var<'t>,
    /// Row-stochastic class probabilities.
    pub probs: Var<'t>,
}

/// Detached forward results.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub latent: Tensor,
    pub recon: [Tensor; NUM_MODALITIES],
    pub probs: Tensor,
}

impl Prediction {
    pub fn labels(&self) -> Vec<usize> {
        self.probs.argmax_rows()
    }
}

impl ForwardOutput<'_> {
    pub fn detach(&self) -> Prediction {
        Prediction {
            latent: self.latent.value().as_ref().clone(),
            recon: std::array::from_fn(|m| self.recon[m].value().as_ref().clone()),
            probs: self.probs.value().as_ref().clone(),
        }
    }
}

pub fn hyper_param_names(conv_id: &str) -> (String, String) {
    (
        format!("hyper/{conv_id}/log_gamma"),
        format!("hyper/{conv_id}/log_lambda"),
    )
}

const STREAMS: [(RelationKind, &str); 2] =
    [(RelationKind::Speaker, "sp"), (RelationKind::Context, "co")];

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Random initialization; weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let d = config.feature_extent();
        let hd = config.gru_hidden();
        let h = config.hidden;

        p.insert_uniform(
            "enc/speaker_proj/w",
            &[d + config.num_speakers, d],
            &mut rng,
        )?;
        p.insert("enc/speaker_proj/b", Tensor::zeros(&[d]))?;
        for dir in ["fwd", "bwd"] {
            p.insert_uniform(format!("enc/{dir}/w_x"), &[d, 3 * hd], &mut rng)?;
            p.insert_uniform(format!("enc/{dir}/u_zr"), &[hd, 2 * hd], &mut rng)?;
            p.insert_uniform(format!("enc/{dir}/u_n"), &[hd, hd], &mut rng)?;
            p.insert(format!("enc/{dir}/b"), Tensor::zeros(&[3 * hd]))?;
        }
        if 2 * hd != d {
            p.insert_uniform("enc/out/w", &[2 * hd, d], &mut rng)?;
            p.insert("enc/out/b", Tensor::zeros(&[d]))?;
        }
        for (kind, tag) in STREAMS {
            if !config.stream_enabled(kind) {
                continue;
            }
            for r in 0..config.relation_count(kind) {
                p.insert_uniform(format!("rgcn/{tag}/{r}"), &[d, h], &mut rng)?;
            }
            if config.use_freq_gate {
                for r in 0..config.relation_count(kind) {
                    p.insert_uniform(format!("gate/{tag}/{r}"), &[2 * h, 1], &mut rng)?;
                }
            }
        }
        let lat = config.latent_extent();
        for (m, dm) in ["a", "v", "t"].iter().zip(config.dims) {
            p.insert_uniform(format!("rec/{m}/w"), &[lat, dm], &mut rng)?;
            p.insert(format!("rec/{m}/b"), Tensor::zeros(&[dm]))?;
        }
        if config.use_self_opt {
            let a = config.attention_extent();
            for name in ["w_q", "w_k", "w_v"] {
                p.insert_uniform(format!("att/{name}"), &[d, a], &mut rng)?;
            }
            p.insert_uniform("att/w_o", &[a, d], &mut rng)?;
        }
        p.insert_uniform("cls/w", &[lat, config.num_classes], &mut rng)?;
        p.insert("cls/b", Tensor::zeros(&[config.num_classes]))?;
        Ok(Self { config, params: p })
    }

    /// Adds trainable hypergraph weights (log-parameterized, initialized to
    /// weight 1) for every conversation not yet registered.
    pub fn register_hypergraph(&mut self, conv_id: &str, hg: &WeightedHypergraph) -> Result<()> {
        let (g, l) = hyper_param_names(conv_id);
        if self.params.id(&g).is_none() {
            self.params
                .insert(g, Tensor::zeros(&[hg.incidences.len()]))?;
            self.params.insert(l, Tensor::zeros(&[hg.num_edges()]))?;
        }
        Ok(())
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        conv: &Conversation,
        graphs: &ConvGraphs,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardOutput<'t>> {
        forward(tape, &self.config, &self.params, conv, graphs, rng)
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, conv: &Conversation, graphs: &ConvGraphs) -> Result<Prediction> {
        let tape = Tape::new();
        Ok(self.forward(&tape, conv, graphs, None)?.detach())
    }
}

impl ModelConfig {
    fn stream_enabled(&self, kind: RelationKind) -> bool {
        match kind {
            RelationKind::Speaker => self.use_speaker,
            RelationKind::Context => self.use_context,
        }
    }

    fn relation_count(&self, kind: RelationKind) -> usize {
        match kind {
            RelationKind::Speaker => self.speaker_relations(),
            RelationKind::Context => ContextRelation::COUNT,
        }
    }
}

fn check_conversation(cfg: &ModelConfig, conv: &Conversation, graphs: &ConvGraphs) -> Result<()> {
    if conv.is_empty() {
        return Err(Error::Data(format!("conversation {} is empty", conv.id)));
    }
    if graphs.interaction.n != conv.len() || graphs.hypergraph.n != conv.len() {
        return Err(Error::Graph(format!(
            "graphs of conversation {} do not match its length",
            conv.id
        )));
    }
    for (i, u) in conv.utterances.iter().enumerate() {
        if u.speaker >= cfg.num_speakers {
            return Err(Error::Data(format!(
                "conversation {} utterance {}: speaker {} outside the model's {} speakers",
                conv.id,
                i + 1,
                u.speaker,
                cfg.num_speakers
            )));
        }
        for m in 0..NUM_MODALITIES {
            if u.features[m].len() != cfg.dims[m] {
                return Err(Error::Shape {
                    op: "model input",
                    lhs: cfg.dims.to_vec(),
                    rhs: u.features.iter().map(Vec::len).collect(),
                });
            }
        }
    }
    Ok(())
}

/// Encoder input: imputed features concatenated with a speaker one-hot.
pub fn input_matrix(conv: &Conversation, num_speakers: usize) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = conv
        .utterances
        .iter()
        .map(|u| {
            let mut row = u.imputed_row();
            row.extend((0..num_speakers).map(|s| if s == u.speaker { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// Speaker-aware bidirectional encoder; returns `[n, feature_extent]`.
pub fn encode_context<'t>(
    tape: &'t Tape,
    cfg: &ModelConfig,
    store: &ParamStore,
    conv: &Conversation,
) -> Result<Var<'t>> {
    if conv.is_empty() {
        return Err(Error::Data(format!("conversation {} is empty", conv.id)));
    }
    let p = |name: &str| tape.param_named(store, name);
    let x = tape
        .constant(input_matrix(conv, cfg.num_speakers)?)
        .matmul(p("enc/speaker_proj/w")?)?
        .add_bias(p("enc/speaker_proj/b")?)?;
    let dir = |d: &str| -> Result<GruWeights<'t>> {
        Ok(GruWeights {
            w_x: p(&format!("enc/{d}/w_x"))?,
            u_zr: p(&format!("enc/{d}/u_zr"))?,
            u_n: p(&format!("enc/{d}/u_n"))?,
            b: p(&format!("enc/{d}/b"))?,
        })
    };
    let fwd = layers::gru_pass(tape, x, &dir("fwd")?, false)?;
    let bwd = layers::gru_pass(tape, x, &dir("bwd")?, true)?;
    let h = tape.concat(&[fwd, bwd], 1)?;
    if 2 * cfg.gru_hidden() == cfg.feature_extent() {
        Ok(h)
    } else {
        h.matmul(p("enc/out/w")?)?.add_bias(p("enc/out/b")?)
    }
}

/// Trainable hypergraph weights of `conv_id` if registered, else constant ones.
fn hyper_weights<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    conv_id: &str,
    hg: &WeightedHypergraph,
) -> (Var<'t>, Var<'t>) {
    let (g, l) = hyper_param_names(conv_id);
    match (store.id(&g), store.id(&l)) {
        (Some(g), Some(l))
            if store.value(g).numel() == hg.incidences.len()
                && store.value(l).numel() == hg.num_edges() =>
        {
            (tape.param(store, g).exp(), tape.param(store, l).exp())
        }
        _ => (
            tape.constant(Tensor::full(&[hg.incidences.len()], 1.0)),
            tape.constant(Tensor::full(&[hg.num_edges()], 1.0)),
        ),
    }
}

/// Full pipeline. Dropout is active iff `rng` is given.
pub fn forward<'t>(
    tape: &'t Tape,
    cfg: &ModelConfig,
    store: &ParamStore,
    conv: &Conversation,
    graphs: &ConvGraphs,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardOutput<'t>> {
    check_conversation(cfg, conv, graphs)?;
    let p = |name: &str| tape.param_named(store, name);
    let mut drop = |v: Var<'t>| -> Result<Var<'t>> {
        match rng.as_deref_mut() {
            Some(r) => v.dropout(cfg.dropout, true, r),
            None => Ok(v),
        }
    };

    let h = drop(encode_context(tape, cfg, store, conv)?)?;
    let (gamma, lambda) = hyper_weights(tape, store, &conv.id, &graphs.hypergraph);

    let mut streams = Vec::with_capacity(2);
    for (kind, tag) in STREAMS {
        if !cfg.stream_enabled(kind) {
            continue;
        }
        let n_rel = cfg.relation_count(kind);
        let weights = (0..n_rel)
            .map(|r| p(&format!("rgcn/{tag}/{r}")))
            .collect::<Result<Vec<_>>>()?;
        let v = layers::rgcn(
            tape,
            h,
            &graphs.interaction,
            kind,
            &weights,
            cfg.num_speakers,
        )?;
        let v = layers::hypergraph_conv(
            tape,
            v,
            &graphs.hypergraph,
            gamma,
            lambda,
            cfg.hyper_layers,
            cfg.leaky_slope,
        )?;
        let v = if cfg.use_freq_gate {
            let gates = (0..n_rel)
                .map(|r| p(&format!("gate/{tag}/{r}")))
                .collect::<Result<Vec<_>>>()?;
            let gate = tape.concat(&gates, 1)?;
            layers::freq_gate(tape, v, &graphs.interaction, kind, gate, cfg.num_speakers)?
        } else {
            v
        };
        streams.push(v);
    }
    let latent = if streams.len() == 1 {
        streams[0]
    } else {
        tape.concat(&streams, 1)?
    };
    let latent = drop(latent)?;

    let recon_raw = ["a", "v", "t"].map(|m| -> Result<Var<'t>> {
        latent
            .matmul(p(&format!("rec/{m}/w"))?)?
            .add_bias(p(&format!("rec/{m}/b"))?)
    });
    let [ra, rv, rt] = recon_raw;
    let recon_raw = [ra?, rv?, rt?];
    let recon = if cfg.use_self_opt {
        let joined = tape.concat(&recon_raw, 1)?;
        let refined = layers::attention(
            tape,
            joined,
            p("att/w_q")?,
            p("att/w_k")?,
            p("att/w_v")?,
            p("att/w_o")?,
            cfg.heads,
        )?;
        let mut offset = 0;
        let mut parts = Vec::with_capacity(NUM_MODALITIES);
        for dm in cfg.dims {
            parts.push(refined.slice(1, offset, dm)?);
            offset += dm;
        }
        [parts[0], parts[1], parts[2]]
    } else {
        recon_raw
    };

    let logits = latent.matmul(p("cls/w")?)?.add_bias(p("cls/b")?)?;
    let probs = logits.softmax(1)?;
    Ok(ForwardOutput {
        latent,
        recon_raw,
        recon,
        logits,
        probs,
    })
}

/// Random source for dropout masks, derived from a run seed.
pub fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5eed);
    rng
}

//! Finite-difference suite over every layer and the composed model.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Conversation, Utterance};
use crate::diffcore::{
    check_gradients, objective, GradCheckConfig, ParamCheck, ParamStore, Tape, Tensor, Var,
};
use crate::error::{Error, Result};
use crate::graph::RelationKind;
use crate::model::layers::{attention, freq_gate, gru_step, hypergraph_conv, rgcn, GruWeights};
use crate::model::{encode_context, forward, ConvGraphs, Model, ModelConfig};
use crate::training::{conversation_loss, loss_ce, TrainConfig};

/// Results of one layer (or the composed model).
#[derive(Clone, Debug)]
pub struct GroupCheck {
    pub group: &'static str,
    pub params: Vec<ParamCheck>,
}

impl GroupCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

#[derive(Clone, Debug)]
pub struct GradSuiteReport {
    pub tolerance: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_err() < self.tolerance)
    }

    /// `(group, parameter)` of every check at or above tolerance.
    pub fn failures(&self) -> Vec<(&'static str, &ParamCheck)> {
        self.groups
            .iter()
            .flat_map(|g| g.params.iter().map(move |p| (g.group, p)))
            .filter(|(_, p)| !(p.max_rel_err < self.tolerance))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let verdict = if g.max_rel_err() < self.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            let _ = writeln!(
                out,
                "{:<16} max rel err {:.3e}  {verdict}",
                g.group,
                g.max_rel_err()
            );
            for p in &g.params {
                let _ = writeln!(out, "  {:<28} {:.3e}", p.name, p.max_rel_err);
            }
        }
        let _ = writeln!(
            out,
            "tolerance {:e}: {}",
            self.tolerance,
            if self.passed() { "pass" } else { "fail" }
        );
        out
    }

    /// `Ok` when everything passed, else a numeric error naming the first
    /// offending layer and parameter.
    pub fn into_result(self) -> Result<Self> {
        let worst = self.failures().first().map(|(g, p)| {
            format!(
                "{g}: parameter {} has relative error {:.3e} (tolerance {:e})",
                p.name, p.max_rel_err, self.tolerance
            )
        });
        match worst {
            Some(msg) => Err(Error::Numeric(format!("gradient check failed in {msg}"))),
            None => Ok(self),
        }
    }
}

const N: usize = 5;
const DIMS: [usize; 3] = [3, 3, 3];
const HIDDEN: usize = 4;

fn suite_config() -> ModelConfig {
    ModelConfig {
        dims: DIMS,
        num_classes: 3,
        num_speakers: 2,
        hidden: HIDDEN,
        window: 2,
        hyper_layers: 2,
        heads: 2,
        ..ModelConfig::default()
    }
}

/// Five utterances, two speakers, some slots masked.
fn suite_conversation(rng: &mut ChaCha8Rng) -> Conversation {
    let speakers = [0, 1, 1, 0, 1];
    let masks = [
        [true, true, true],
        [true, false, true],
        [false, false, true],
        [true, true, false],
        [true, true, true],
    ];
    Conversation {
        id: "gradcheck".into(),
        speakers: vec![0, 1],
        utterances: (0..N)
            .map(|i| Utterance {
                speaker: speakers[i],
                label: rng.random_range(0..3),
                mask: masks[i],
                features: std::array::from_fn(|m| {
                    (0..DIMS[m]).map(|_| rng.random_range(-1.0..1.0)).collect()
                }),
            })
            .collect(),
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let numel = shape.iter().product();
    Tensor::new(
        shape,
        (0..numel)
            .map(|_| rng.random_range(-scale..scale))
            .collect(),
    )
    .expect("shape matches data")
}

/// `Σ out ⊙ probe` for a fixed random probe, so every output entry matters.
fn project<'t>(tape: &'t Tape, out: Var<'t>, probe: &Tensor) -> Result<Var<'t>> {
    Ok(out.mul(tape.constant(probe.clone()))?.sum())
}

fn run<F>(
    group: &'static str,
    store: &ParamStore,
    f: F,
    cfg: &GradCheckConfig,
) -> Result<GroupCheck>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    Ok(GroupCheck {
        group,
        params: check_gradients(store, f, None, cfg)?,
    })
}

/// Runs every group with `cfg` (tolerance, step and optional fault
/// injection). Inputs are drawn from `seed`.
pub fn gradient_suite(cfg: &GradCheckConfig, seed: u64) -> Result<GradSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mcfg = suite_config();
    let conv = suite_conversation(&mut rng);
    let graphs = ConvGraphs::build(&conv, mcfg.window)?;
    let mut groups = Vec::new();

    // recurrent cell
    {
        let (d, hd) = (4, 3);
        let mut s = ParamStore::new();
        s.insert("gru/x", random(&mut rng, &[1, d], 1.0))?;
        s.insert("gru/h", random(&mut rng, &[1, hd], 1.0))?;
        s.insert("gru/w_x", random(&mut rng, &[d, 3 * hd], 0.8))?;
        s.insert("gru/u_zr", random(&mut rng, &[hd, 2 * hd], 0.8))?;
        s.insert("gru/u_n", random(&mut rng, &[hd, hd], 0.8))?;
        s.insert("gru/b", random(&mut rng, &[3 * hd], 0.5))?;
        let probe = random(&mut rng, &[1, hd], 1.0);
        let f = objective(|tape, st| {
            let p = |n: &str| tape.param_named(st, n);
            let w = GruWeights {
                w_x: p("gru/w_x")?,
                u_zr: p("gru/u_zr")?,
                u_n: p("gru/u_n")?,
                b: p("gru/b")?,
            };
            let x_proj = p("gru/x")?.matmul(w.w_x)?.add_bias(w.b)?;
            project(tape, gru_step(x_proj, p("gru/h")?, &w)?, &probe)
        });
        groups.push(run("encoder cell", &s, f, cfg)?);
    }

    // full encoder: speaker projection, both directions, output projection
    {
        let model = Model::new(mcfg.clone(), seed)?;
        let ids: Vec<_> = model
            .params
            .iter()
            .filter(|(_, p)| p.name.starts_with("enc/"))
            .map(|(id, _)| id)
            .collect();
        let ecfg = model.config.clone();
        let probe = random(&mut rng, &[N, ecfg.feature_extent()], 1.0);
        let f =
            objective(|tape, st| project(tape, encode_context(tape, &ecfg, st, &conv)?, &probe));
        groups.push(GroupCheck {
            group: "encoder",
            params: check_gradients(&model.params, f, Some(&ids), cfg)?,
        });
    }

    // relation-typed aggregation, both relation families
    for (group, kind, relations) in [
        ("rgcn context", RelationKind::Context, 3),
        ("rgcn speaker", RelationKind::Speaker, 4),
    ] {
        let d = 3;
        let mut s = ParamStore::new();
        s.insert("rgcn/input", random(&mut rng, &[N, d], 1.0))?;
        for r in 0..relations {
            s.insert(format!("rgcn/{r}"), random(&mut rng, &[d, HIDDEN], 1.0))?;
        }
        let probe = random(&mut rng, &[N, HIDDEN], 1.0);
        let g = &graphs.interaction;
        let f = objective(|tape, st| {
            let ws = (0..relations)
                .map(|r| tape.param_named(st, &format!("rgcn/{r}")))
                .collect::<Result<Vec<_>>>()?;
            project(
                tape,
                rgcn(tape, tape.param_named(st, "rgcn/input")?, g, kind, &ws, 2)?,
                &probe,
            )
        });
        groups.push(run(group, &s, f, cfg)?);
    }

    // hypergraph convolution, including the incidence and edge weights
    {
        let hg = &graphs.hypergraph;
        let mut s = ParamStore::new();
        s.insert("hyper/input", random(&mut rng, &[N, HIDDEN], 1.0))?;
        s.insert(
            "hyper/log_gamma",
            random(&mut rng, &[hg.incidences.len()], 0.5),
        )?;
        s.insert("hyper/log_lambda", random(&mut rng, &[hg.num_edges()], 0.5))?;
        let probe = random(&mut rng, &[N, HIDDEN], 1.0);
        let f = objective(|tape, st| {
            let p = |n: &str| tape.param_named(st, n);
            let v = hypergraph_conv(
                tape,
                p("hyper/input")?,
                hg,
                p("hyper/log_gamma")?.exp(),
                p("hyper/log_lambda")?.exp(),
                2,
                0.01,
            )?;
            project(tape, v, &probe)
        });
        groups.push(run("hypergraph", &s, f, cfg)?);
    }

    // frequency gate
    {
        let mut s = ParamStore::new();
        s.insert("gate/input", random(&mut rng, &[N, HIDDEN], 1.0))?;
        s.insert("gate/w", random(&mut rng, &[2 * HIDDEN, 3], 1.0))?;
        let probe = random(&mut rng, &[N, HIDDEN], 1.0);
        let g = &graphs.interaction;
        let f = objective(|tape, st| {
            let v = freq_gate(
                tape,
                tape.param_named(st, "gate/input")?,
                g,
                RelationKind::Context,
                tape.param_named(st, "gate/w")?,
                2,
            )?;
            project(tape, v, &probe)
        });
        groups.push(run("freq gate", &s, f, cfg)?);
    }

    // reconstruction head
    {
        let lat = 2 * HIDDEN;
        let mut s = ParamStore::new();
        s.insert("rec/latent", random(&mut rng, &[N, lat], 1.0))?;
        s.insert("rec/w", random(&mut rng, &[lat, 3], 1.0))?;
        s.insert("rec/b", random(&mut rng, &[3], 1.0))?;
        let probe = random(&mut rng, &[N, 3], 1.0);
        let f = objective(|tape, st| {
            let p = |n: &str| tape.param_named(st, n);
            project(
                tape,
                p("rec/latent")?
                    .matmul(p("rec/w")?)?
                    .add_bias(p("rec/b")?)?,
                &probe,
            )
        });
        groups.push(run("reconstruction", &s, f, cfg)?);
    }

    // multi-head attention
    {
        let (d, a) = (9, 10);
        let mut s = ParamStore::new();
        s.insert("att/input", random(&mut rng, &[N, d], 1.0))?;
        for name in ["att/w_q", "att/w_k", "att/w_v"] {
            s.insert(name, random(&mut rng, &[d, a], 0.5))?;
        }
        s.insert("att/w_o", random(&mut rng, &[a, d], 0.5))?;
        let probe = random(&mut rng, &[N, d], 1.0);
        let f = objective(|tape, st| {
            let p = |n: &str| tape.param_named(st, n);
            let out = attention(
                tape,
                p("att/input")?,
                p("att/w_q")?,
                p("att/w_k")?,
                p("att/w_v")?,
                p("att/w_o")?,
                mcfg.heads,
            )?;
            project(tape, out, &probe)
        });
        groups.push(run("attention", &s, f, cfg)?);
    }

    // classifier with cross-entropy
    {
        let lat = 2 * HIDDEN;
        let mut s = ParamStore::new();
        s.insert("cls/latent", random(&mut rng, &[N, lat], 1.0))?;
        s.insert("cls/w", random(&mut rng, &[lat, 3], 1.0))?;
        s.insert("cls/b", random(&mut rng, &[3], 1.0))?;
        let labels = conv.labels();
        let f = objective(|tape, st| {
            let p = |n: &str| tape.param_named(st, n);
            let probs = p("cls/latent")?
                .matmul(p("cls/w")?)?
                .add_bias(p("cls/b")?)?
                .softmax(1)?;
            loss_ce(probs, &labels)
        });
        groups.push(run("classifier", &s, f, cfg)?);
    }

    // composed forward pass and joint loss
    {
        let mut model = Model::new(mcfg.clone(), seed)?;
        model.register_hypergraph(&conv.id, &graphs.hypergraph)?;
        for p in model
            .params
            .iter_mut()
            .filter(|p| p.name.starts_with("hyper/"))
        {
            for v in p.value.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let tcfg = TrainConfig::default();
        let f = objective(|tape, st| {
            let out = forward(tape, &mcfg, st, &conv, &graphs, None)?;
            Ok(conversation_loss(tape, &out, &conv, &tcfg)?.total)
        });
        groups.push(run("composed", &model.params, f, cfg)?);
    }

    Ok(GradSuiteReport {
        tolerance: cfg.tolerance,
        groups,
    })
}

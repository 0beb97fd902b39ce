//! Brute-force references shared by the integration and acceptance tests.
#![allow(dead_code)]

use depctx::autodiff::{ParameterStore, Tape, Var};
use depctx::encoder::{EncoderConfig, EncoderMode, Vocab};
use depctx::graph::{
    sibling_range, ArcScores, DecoderKind, GraphConfig, GraphModel, Order, SiblingScores, SurfaceFeatures,
};
use depctx::synth;
use depctx::transition::{Configuration, FeatureSet, Oracle, SwapStrategy, TransitionConfig, TransitionParser};
use depctx::treebank::{is_projective, DepTree, Sentence};
use rand::Rng;

/// Every head vector over `n` tokens that forms a tree with exactly one
/// dependent of the root.
pub fn all_trees(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut heads = vec![0; n];
    loop {
        let tree = DepTree::unlabeled(heads.clone());
        if tree.is_valid() && tree.root_children() == 1 {
            out.push(heads.clone());
        }
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            heads[i] += 1;
            if heads[i] <= n {
                break;
            }
            heads[i] = 0;
            i += 1;
        }
    }
}

pub fn projective_trees(n: usize) -> Vec<Vec<usize>> {
    all_trees(n)
        .into_iter()
        .filter(|h| is_projective(&DepTree::unlabeled(h.clone())))
        .collect()
}

pub fn best_score(trees: &[Vec<usize>], score: impl Fn(&[usize]) -> f64) -> f64 {
    trees.iter().map(|h| score(h)).fold(f64::NEG_INFINITY, f64::max)
}

/// Integer-valued scores keep every sum exact; ties are frequent.
pub fn random_arc_scores<R: Rng>(n: usize, rng: &mut R, integer: bool) -> ArcScores {
    ArcScores::from_fn(n, |_, _| {
        if integer {
            rng.gen_range(-20..=20) as f64
        } else {
            rng.gen_range(-5.0..5.0)
        }
    })
}

pub fn random_sibling_scores<R: Rng>(n: usize, rng: &mut R, integer: bool) -> SiblingScores {
    SiblingScores::from_fn(n, |_, _, _| {
        if integer {
            rng.gen_range(-20..=20) as f64
        } else {
            rng.gen_range(-5.0..5.0)
        }
    })
}

/// `|a - b| / max(|a|, |b|)`, falling back to the absolute error when both
/// are below `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between tape gradients of the scalar built by
/// `f` and central differences, over `samples` parameter entries drawn
/// among those with a nonzero gradient.
pub fn param_gradient_error<M, R: Rng>(
    model: &mut M,
    store: fn(&mut M) -> &mut ParameterStore,
    f: impl Fn(&mut Tape, &M) -> Var,
    samples: usize,
    rng: &mut R,
) -> f64 {
    store(model).zero_grad();
    let mut tape = Tape::new();
    let out = f(&mut tape, model);
    let grads = tape.backward(out).unwrap();
    grads.accumulate(&tape, store(model));
    let value = |model: &M| {
        let mut t = Tape::new();
        let v = f(&mut t, model);
        t.scalar(v)
    };
    let coords: Vec<(String, usize, f64)> = store(model)
        .params()
        .iter()
        .flat_map(|p| {
            p.grad
                .iter()
                .enumerate()
                .filter(|(_, g)| **g != 0.0)
                .map(move |(i, g)| (p.name.clone(), i, *g))
        })
        .collect();
    assert!(!coords.is_empty(), "no parameter receives a gradient");
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (name, i, analytic) = coords[rng.gen_range(0..coords.len())].clone();
        let id = store(model).id(&name).unwrap();
        let x = store(model).get(id).value[i];
        let h = 1e-5 * x.abs().max(1.0);
        store(model).value_mut(id)[i] = x + h;
        let up = value(model);
        store(model).value_mut(id)[i] = x - h;
        let down = value(model);
        store(model).value_mut(id)[i] = x;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic, numeric, 1e-4));
    }
    worst
}

/// Gradient check for a tape op: the op output is reduced to a scalar by a
/// fixed random projection, and the gradients of every input are compared
/// with central differences.
pub fn op_gradient_error<R: Rng>(
    inputs: &[(usize, usize, Vec<f64>)],
    op: impl Fn(&mut Tape, &[Var]) -> Var,
    rng: &mut R,
) -> f64 {
    let build = |vals: &[(usize, usize, Vec<f64>)]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals
            .iter()
            .map(|(r, c, v)| t.input(*r, *c, v.clone()).unwrap())
            .collect();
        let y = op(&mut t, &vars);
        (t, vars, y)
    };
    let (t0, _, y0) = build(inputs);
    let weights: Vec<f64> = (0..t0.dim(y0)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scalar = |vals: &[(usize, usize, Vec<f64>)]| {
        let (mut t, vars, y) = build(vals);
        let (r, c) = t.shape(y);
        let w = t.input(r, c, weights.clone()).unwrap();
        let p = t.mul(y, w).unwrap();
        let s = t.sum(p).unwrap();
        (t, vars, s)
    };
    let (t, vars, s) = scalar(inputs);
    let grads = t.backward(s).unwrap();
    let mut worst: f64 = 0.0;
    for (k, (_, _, v)) in inputs.iter().enumerate() {
        let analytic = grads.dense(vars[k], v.len());
        for i in 0..v.len() {
            let h = 1e-6 * v[i].abs().max(1.0);
            let mut up = inputs.to_vec();
            up[k].2[i] += h;
            let mut down = inputs.to_vec();
            down[k].2[i] -= h;
            let (tu, _, su) = scalar(&up);
            let (td, _, sd) = scalar(&down);
            let numeric = (tu.scalar(su) - td.scalar(sd)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], numeric, 1e-4));
        }
    }
    worst
}

pub fn random_values<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

pub type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

/// Every differentiable tape op with input shapes; inputs are reused in a
/// few cases so that gradient accumulation is exercised too.
pub fn op_cases() -> Vec<(&'static str, Vec<(usize, usize)>, OpFn)> {
    vec![
        (
            "matmul",
            vec![(3, 4), (4, 2)],
            Box::new(|t, v| t.matmul(v[0], v[1]).unwrap()),
        ),
        (
            "affine",
            vec![(3, 4), (4, 1), (3, 1)],
            Box::new(|t, v| t.affine(v[0], v[1], v[2]).unwrap()),
        ),
        ("add", vec![(3, 2), (3, 2)], Box::new(|t, v| t.add(v[0], v[1]).unwrap())),
        (
            "add_all",
            vec![(4, 1), (4, 1), (4, 1)],
            Box::new(|t, v| t.add_all(v).unwrap()),
        ),
        ("sub", vec![(5, 1), (5, 1)], Box::new(|t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", vec![(5, 1), (5, 1)], Box::new(|t, v| t.mul(v[0], v[1]).unwrap())),
        ("mul_self", vec![(5, 1)], Box::new(|t, v| t.mul(v[0], v[0]).unwrap())),
        (
            "maximum",
            vec![(6, 1), (6, 1)],
            Box::new(|t, v| t.maximum(v[0], v[1]).unwrap()),
        ),
        ("scale", vec![(4, 1)], Box::new(|t, v| t.scale(v[0], -1.7).unwrap())),
        (
            "add_scalar",
            vec![(4, 1)],
            Box::new(|t, v| t.add_scalar(v[0], 0.3).unwrap()),
        ),
        ("tanh", vec![(6, 1)], Box::new(|t, v| t.tanh(v[0]).unwrap())),
        ("sigmoid", vec![(6, 1)], Box::new(|t, v| t.sigmoid(v[0]).unwrap())),
        (
            "concat",
            vec![(2, 1), (3, 1), (2, 1)],
            Box::new(|t, v| t.concat(&[v[0], v[1], v[2], v[0]]).unwrap()),
        ),
        ("slice", vec![(7, 1)], Box::new(|t, v| t.slice(v[0], 2, 3).unwrap())),
        ("pick", vec![(5, 1)], Box::new(|t, v| t.pick(v[0], 3).unwrap())),
        ("sum", vec![(3, 3)], Box::new(|t, v| t.sum(v[0]).unwrap())),
        (
            "chain",
            vec![(3, 3), (3, 1)],
            Box::new(|t, v| {
                let a = t.affine(v[0], v[1], v[1]).unwrap();
                let b = t.tanh(a).unwrap();
                let c = t.sigmoid(a).unwrap();
                t.mul(b, c).unwrap()
            }),
        ),
    ]
}

/// Worst op-level error over `instances` random inputs per op, together
/// with the name of the worst op.
pub fn worst_op_error<R: Rng>(instances: usize, rng: &mut R) -> (f64, &'static str) {
    let mut worst = (0.0, "");
    for (name, shapes, op) in op_cases() {
        for _ in 0..instances {
            let inputs: Vec<(usize, usize, Vec<f64>)> =
                shapes.iter().map(|&(r, c)| (r, c, random_values(r * c, rng))).collect();
            let e = op_gradient_error(&inputs, &op, rng);
            if e > worst.0 {
                worst = (e, name);
            }
        }
    }
    worst
}

/// Embedding lookups and parameter nodes, checked through the store.
pub fn worst_param_op_error<R: Rng>(instances: usize, rng: &mut R) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mut store = ParameterStore::new();
        let e = store.add("e", 5, 3, random_values(15, rng));
        let w = store.add("w", 2, 3, random_values(6, rng));
        let row = rng.gen_range(0..5);
        let other = rng.gen_range(0..5);
        let f = move |t: &mut Tape, s: &ParameterStore| {
            let x = t.lookup(s, e, row).unwrap();
            let y = t.lookup(s, e, other).unwrap();
            let w = t.param(s, w);
            let z = t.add(x, y).unwrap();
            let z = t.tanh(z).unwrap();
            let o = t.matmul(w, z).unwrap();
            let o = t.mul(o, o).unwrap();
            t.sum(o).unwrap()
        };
        worst = worst.max(param_gradient_error(&mut store, |s| s, f, 8, rng));
    }
    worst
}

pub fn small_encoder(mode: EncoderMode, layers: usize) -> EncoderConfig {
    EncoderConfig {
        word_dim: 6,
        pos_dim: 3,
        lstm_dim: 4,
        lstm_layers: layers,
        mode,
        root_token: false,
        word_dropout: 0.0,
    }
}

pub fn gradient_corpus() -> (Vec<Sentence>, Vocab) {
    let data = synth::treebank(21, 0, 30, 7);
    let vocab = Vocab::build(&data).unwrap();
    (data, vocab)
}

/// A configuration on the oracle path of `sentence`, after a random number
/// of transitions.
pub fn oracle_configuration<R: Rng>(sentence: &Sentence, vocab: &Vocab, rng: &mut R) -> Configuration {
    let gold = sentence.gold_tree();
    let labels = sentence
        .tokens
        .iter()
        .map(|t| vocab.label_id(&t.label).unwrap())
        .collect();
    let seq = Oracle::new(&gold, labels, SwapStrategy::Lazy).sequence().unwrap();
    let mut config = Configuration::initial(sentence.len());
    for &t in &seq[..rng.gen_range(0..seq.len())] {
        config.apply(t).unwrap();
    }
    config
}

/// Worst error of the transition score (one random transition of a random
/// oracle configuration) over `instances` cases.
pub fn transition_model_error<R: Rng>(instances: usize, rng: &mut R) -> f64 {
    let (data, vocab) = gradient_corpus();
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let mode = if k % 4 == 3 {
            EncoderMode::Direct
        } else {
            EncoderMode::Bilstm
        };
        let config = TransitionConfig {
            encoder: small_encoder(mode, 1 + k % 2),
            features: if k % 2 == 0 {
                FeatureSet::simple()
            } else {
                FeatureSet::extended()
            },
            hidden: 8,
            ..TransitionConfig::default()
        };
        let mut parser = TransitionParser::new(config, vocab.clone(), k as u64).unwrap();
        let sentence = &data[rng.gen_range(0..data.len())];
        let state = oracle_configuration(sentence, &vocab, rng);
        let ids = parser.encoder().token_ids(&vocab, sentence, false, rng);
        let exclude = (k % 5 == 4 && sentence.len() > 1).then(|| rng.gen_range(1..=sentence.len()));
        let output = rng.gen_range(0..2 + 2 * vocab.num_labels());
        let f = move |t: &mut Tape, p: &TransitionParser| {
            let encoded = p.encoder().encode(t, &p.store, &ids, exclude).unwrap();
            let scores = p.score_configuration(t, &encoded, &state).unwrap();
            t.pick(scores, output).unwrap()
        };
        worst = worst.max(param_gradient_error(&mut parser, |p| &mut p.store, f, 6, rng));
    }
    worst
}

/// Worst error of an arc (or sibling-part) score of a random arc, and of a
/// label score, over `instances` cases.
pub fn graph_model_error<R: Rng>(instances: usize, rng: &mut R) -> f64 {
    let (data, vocab) = gradient_corpus();
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let order = if k % 2 == 0 { Order::First } else { Order::Second };
        let mode = if k % 4 == 3 {
            EncoderMode::Direct
        } else {
            EncoderMode::Bilstm
        };
        let config = GraphConfig {
            encoder: small_encoder(mode, 1 + k % 2),
            order,
            decoder: DecoderKind::default_for(order),
            surface: SurfaceFeatures {
                dist: k % 3 != 0,
                window: k % 3,
            },
            hidden: 8,
            label_hidden: 5,
            dist_dim: 3,
            ..GraphConfig::default()
        };
        let mut model = GraphModel::new(config, vocab.clone(), k as u64).unwrap();
        let sentence = &data[rng.gen_range(0..data.len())];
        let n = sentence.len();
        let ids = model.encoder().token_ids(&vocab, sentence, false, rng);
        let d = rng.gen_range(1..=n);
        let h = loop {
            let h = rng.gen_range(0..=n);
            if h != d {
                break h;
            }
        };
        let range = sibling_range(h, d);
        let sib = (order == Order::Second && !range.is_empty() && rng.gen_bool(0.7)).then(|| rng.gen_range(range));
        let label = k % 3 == 2;
        let pick = rng.gen_range(0..vocab.num_labels());
        let f = move |t: &mut Tape, m: &GraphModel| {
            let encoded = m.encoder().encode(t, &m.store, &ids, None).unwrap();
            let proj = m.project(t, encoded).unwrap();
            if label {
                let scores = m.label_scores(t, &proj, h, d).unwrap();
                t.pick(scores, pick).unwrap()
            } else {
                m.arc_score(t, &proj, h, d, sib).unwrap()
            }
        };
        worst = worst.max(param_gradient_error(&mut model, |m| &mut m.store, f, 6, rng));
    }
    worst
}

/// p-value by listing every assignment of the pooled midranks to sample A.
pub fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let rank = |x: f64| {
        let below = pooled.iter().filter(|&&y| y < x).count() as f64;
        let equal = pooled.iter().filter(|&&y| y == x).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = pooled.iter().map(|&x| rank(x)).collect();
    let n = pooled.len();
    let expected = a.len() as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..a.len()].iter().sum::<f64>() - expected).abs();
    let (mut total, mut extreme) = (0u64, 0u64);
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        if (w - expected).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

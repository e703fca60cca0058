#![allow(dead_code)]

use dura_kge::data::{reciprocal_of, Fact, FilterIndex};
use dura_kge::models::{BatchExample, ModelKind, ModelParams, ParamGroup, Shape};
use dura_kge::regularizers::{RegKind, RegSpec, SmootherKind};
use dura_kge::training::batch_objective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Every (model, regularizer) pair the library accepts.
pub fn supported_pairs() -> Vec<(ModelKind, RegKind)> {
    let mut out = Vec::new();
    for model in ModelKind::ALL {
        for reg in RegKind::ALL {
            if spec_for(model, reg, 0).validate(model).is_ok() {
                out.push((model, reg));
            }
        }
    }
    out
}

pub fn spec_for(model: ModelKind, reg: RegKind, seed: u64) -> RegSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let mut spec = RegSpec::new(reg, rng.random_range(0.05..0.5)).with_weights(
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
    );
    if model == ModelKind::TRescal && reg == RegKind::TWeighted {
        spec.lambda1 = 0.0;
        spec.lambda2 = 0.0;
    }
    if model.is_temporal() {
        spec.smoother = if seed.is_multiple_of(2) { SmootherKind::L3 } else { SmootherKind::L2 };
        spec.smoother_weight = 0.3;
    }
    spec.conjugate_tail_projection = seed.is_multiple_of(3);
    spec
}

/// Worst norm-wise relative error between the analytic gradient of the batch
/// objective and central differences, on one random instance with six
/// entities.
pub fn gradient_error(model: ModelKind, reg: RegKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = if model.is_complex() {
        2 * rng.random_range(1..=4)
    } else {
        rng.random_range(1..=8)
    };
    let timestamps = if model.is_temporal() { 3 } else { 0 };
    let shape = Shape {
        entities: 6,
        relations: 4,
        timestamps,
    };
    let mut params = ModelParams::init(model, dim, shape, 0.5, &mut rng).unwrap();
    let batch: Vec<BatchExample> = (0..4)
        .map(|_| BatchExample {
            head: rng.random_range(0..6),
            relation: rng.random_range(0..4),
            tail: rng.random_range(0..6),
            time: model.is_temporal().then(|| rng.random_range(0..3)),
            weight: rng.random_range(0.2..=1.0),
        })
        .collect();
    let spec = spec_for(model, reg, seed);
    let chain_len = if seed.is_multiple_of(2) { 3 } else { 2 };
    let (_, grads) = batch_objective(&params, &batch, &spec, chain_len).unwrap();

    let groups: Vec<ParamGroup> = params.tables().iter().map(|(g, _)| *g).collect();
    let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
    for group in groups {
        let analytic = grads.dense(&params, group).unwrap();
        let len = params.table(group).unwrap().len();
        for idx in 0..len {
            let orig = params.table(group).unwrap().as_slice().unwrap()[idx];
            let eval = |x: f64, p: &mut ModelParams| {
                p.table_mut(group).unwrap().as_slice_mut().unwrap()[idx] = x;
                batch_objective(p, &batch, &spec, chain_len).unwrap().0
            };
            let plus = eval(orig + FD_STEP, &mut params);
            let minus = eval(orig - FD_STEP, &mut params);
            eval(orig, &mut params);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.as_slice().unwrap()[idx];
            diff_sq += (a - numeric).powi(2);
            a_sq += a * a;
            n_sq += numeric * numeric;
        }
    }
    diff_sq.sqrt() / a_sq.sqrt().max(n_sq.sqrt()).max(1e-12)
}

/// A random reciprocal-augmented KG with at most `max_entities` entities and
/// at most `max_facts` facts after augmentation, plus random parameters whose
/// coarse values force exact score ties.
pub fn random_ranking_case(seed: u64, max_entities: u32, max_facts: usize) -> (ModelParams, Vec<Fact>, FilterIndex) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_ent = rng.random_range(2..=max_entities);
    let n_rel = rng.random_range(1..=3u32);
    let mut facts: Vec<Fact> = Vec::new();
    for _ in 0..rng.random_range(1..=max_facts / 2) {
        let f = Fact::triple(
            rng.random_range(0..n_ent),
            rng.random_range(0..n_rel),
            rng.random_range(0..n_ent),
        );
        if !facts.contains(&f) {
            facts.push(f);
        }
    }
    let inverse: Vec<Fact> = facts.iter().map(|f| reciprocal_of(f, n_rel)).collect();
    facts.extend(inverse);
    let kind = [ModelKind::Cp, ModelKind::ComplEx, ModelKind::Rescal][rng.random_range(0..3)];
    let mut params = ModelParams::init(
        kind,
        4,
        Shape {
            entities: n_ent as usize,
            relations: 2 * n_rel as usize,
            timestamps: 0,
        },
        1.0,
        &mut rng,
    )
    .unwrap();
    for (_, t) in params.tables_mut() {
        t.mapv_inplace(|x| (x * 2.0).round() / 2.0);
    }
    let filter = FilterIndex::from_facts(&facts);
    (params, facts, filter)
}

/// Exhaustive metrics: for each query, sort every unfiltered candidate by
/// score and average the positions of the block tied with the target.
pub fn oracle_metrics(params: &ModelParams, facts: &[Fact]) -> (f64, f64, f64, f64) {
    let n = params.num_entities() as u32;
    let mut ranks = Vec::new();
    for f in facts {
        let mut cands: Vec<(f64, u32)> = (0..n)
            .filter(|&k| {
                k == f.tail
                    || !facts
                        .iter()
                        .any(|g| g.head == f.head && g.relation == f.relation && g.tail == k)
            })
            .map(|k| {
                let ex = BatchExample {
                    head: f.head,
                    relation: f.relation,
                    tail: k,
                    time: None,
                    weight: 1.0,
                };
                (params.score(&ex).unwrap(), k)
            })
            .collect();
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        let s = cands.iter().find(|c| c.1 == f.tail).unwrap().0;
        let pos: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].0 == s).map(|i| i + 1).collect();
        ranks.push((pos[0] + pos[pos.len() - 1]) as f64 / 2.0);
    }
    let m = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / m;
    (
        ranks.iter().map(|r| 1.0 / r).sum::<f64>() / m,
        hits(1.0),
        hits(3.0),
        hits(10.0),
    )
}

//! Score functions and analytic gradients for the five bilinear
//! models.
//!
//! Every model scores a query `(head, relation[, time])` against a candidate
//! tail `v` as `⟨q, v⟩`, where `q` is the head embedding transformed by the
//! relation (and timestamp). Scoring all candidates is one matrix-vector
//! product of `q` against the tail table; training stacks the queries of a
//! batch and uses one matrix-matrix product.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{linalg::general_mat_mul, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::algebra::{dot, row_matvec_into};
use crate::data::Fact;
use crate::error::{KgeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Cp,
    ComplEx,
    Rescal,
    TComplEx,
    TRescal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Cp,
        ModelKind::ComplEx,
        ModelKind::Rescal,
        ModelKind::TComplEx,
        ModelKind::TRescal,
    ];

    pub fn is_complex(self) -> bool {
        matches!(self, ModelKind::ComplEx | ModelKind::TComplEx)
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, ModelKind::TComplEx | ModelKind::TRescal)
    }

    /// Relations (and timestamps) are dense `D×D` matrices rather than diagonals.
    pub fn has_dense_relations(self) -> bool {
        matches!(self, ModelKind::Rescal | ModelKind::TRescal)
    }

    /// CP keeps a tail table separate from the head table.
    pub fn has_separate_tail(self) -> bool {
        self == ModelKind::Cp
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Cp => 0,
            ModelKind::ComplEx => 1,
            ModelKind::Rescal => 2,
            ModelKind::TComplEx => 3,
            ModelKind::TRescal => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| KgeError::Format(format!("unknown model tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cp => "cp",
            ModelKind::ComplEx => "complex",
            ModelKind::Rescal => "rescal",
            ModelKind::TComplEx => "tcomplex",
            ModelKind::TRescal => "trescal",
        }
    }

    /// Width of one relation or timestamp row for embedding size `dim`.
    pub fn relation_width(self, dim: usize) -> usize {
        if self.has_dense_relations() {
            dim * dim
        } else {
            dim
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = KgeError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| KgeError::Config(format!("unknown model '{s}'")))
    }
}

/// One training or evaluation query with its target and loss weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchExample {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
    pub time: Option<u32>,
    pub weight: f64,
}

impl BatchExample {
    pub fn new(fact: &Fact, weight: f64) -> Self {
        BatchExample {
            head: fact.head,
            relation: fact.relation,
            tail: fact.tail,
            time: fact.time,
            weight,
        }
    }
}

impl From<&Fact> for BatchExample {
    fn from(f: &Fact) -> Self {
        BatchExample::new(f, 1.0)
    }
}

/// Parameter tables of one model. Each table is row-major with one row per
/// entity, relation or timestamp; dense relation matrices are flattened into
/// rows of width `D*D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub dim: usize,
    pub entity: Array2<f64>,
    /// Tail table for CP; every other kind scores tails against `entity`.
    pub tail: Option<Array2<f64>>,
    pub relation: Array2<f64>,
    pub time: Option<Array2<f64>>,
}

/// Parameter table identifiers, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Entity,
    Tail,
    Relation,
    Time,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Entity => "entity",
            ParamGroup::Tail => "tail",
            ParamGroup::Relation => "relation",
            ParamGroup::Time => "time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
}

impl ModelParams {
    /// Zero-initialised parameters.
    pub fn zeros(kind: ModelKind, dim: usize, shape: Shape) -> Result<Self> {
        if dim == 0 {
            return Err(KgeError::Config("embedding size must be positive".into()));
        }
        if kind.is_complex() && !dim.is_multiple_of(2) {
            return Err(KgeError::Config(format!(
                "{kind} needs an even embedding size, got {dim}"
            )));
        }
        if kind.is_temporal() && shape.timestamps == 0 {
            return Err(KgeError::Config(format!("{kind} needs at least one timestamp")));
        }
        let w = kind.relation_width(dim);
        Ok(ModelParams {
            kind,
            dim,
            entity: Array2::zeros((shape.entities, dim)),
            tail: kind
                .has_separate_tail()
                .then(|| Array2::zeros((shape.entities, dim))),
            relation: Array2::zeros((shape.relations, w)),
            time: kind
                .is_temporal()
                .then(|| Array2::zeros((shape.timestamps, w))),
        })
    }

    /// I.i.d. zero-mean Gaussian initialisation with standard deviation `scale`.
    pub fn init<R: Rng>(
        kind: ModelKind,
        dim: usize,
        shape: Shape,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(kind, dim, shape)?;
        let normal = Normal::new(0.0, scale)
            .map_err(|e| KgeError::Config(format!("invalid init scale {scale}: {e}")))?;
        for (_, table) in p.tables_mut() {
            table.iter_mut().for_each(|x| *x = normal.sample(rng));
        }
        Ok(p)
    }

    pub fn shape(&self) -> Shape {
        Shape {
            entities: self.entity.nrows(),
            relations: self.relation.nrows(),
            timestamps: self.time.as_ref().map_or(0, |t| t.nrows()),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity.nrows()
    }

    pub fn tail_table(&self) -> &Array2<f64> {
        self.tail.as_ref().unwrap_or(&self.entity)
    }

    pub fn head_row(&self, e: u32) -> &[f64] {
        row(&self.entity, e)
    }

    pub fn tail_row(&self, e: u32) -> &[f64] {
        row(self.tail_table(), e)
    }

    pub fn relation_row(&self, r: u32) -> &[f64] {
        row(&self.relation, r)
    }

    pub fn time_row(&self, t: u32) -> Option<&[f64]> {
        self.time.as_ref().map(|tab| row(tab, t))
    }

    pub fn tables(&self) -> Vec<(ParamGroup, &Array2<f64>)> {
        let mut v = vec![(ParamGroup::Entity, &self.entity)];
        if let Some(t) = &self.tail {
            v.push((ParamGroup::Tail, t));
        }
        v.push((ParamGroup::Relation, &self.relation));
        if let Some(t) = &self.time {
            v.push((ParamGroup::Time, t));
        }
        v
    }

    pub fn tables_mut(&mut self) -> Vec<(ParamGroup, &mut Array2<f64>)> {
        let mut v = vec![(ParamGroup::Entity, &mut self.entity)];
        if let Some(t) = &mut self.tail {
            v.push((ParamGroup::Tail, t));
        }
        v.push((ParamGroup::Relation, &mut self.relation));
        if let Some(t) = &mut self.time {
            v.push((ParamGroup::Time, t));
        }
        v
    }

    pub fn table(&self, group: ParamGroup) -> Option<&Array2<f64>> {
        match group {
            ParamGroup::Entity => Some(&self.entity),
            ParamGroup::Tail => self.tail.as_ref(),
            ParamGroup::Relation => Some(&self.relation),
            ParamGroup::Time => self.time.as_ref(),
        }
    }

    pub fn table_mut(&mut self, group: ParamGroup) -> Option<&mut Array2<f64>> {
        match group {
            ParamGroup::Entity => Some(&mut self.entity),
            ParamGroup::Tail => self.tail.as_mut(),
            ParamGroup::Relation => Some(&mut self.relation),
            ParamGroup::Time => self.time.as_mut(),
        }
    }

    /// Entity tables only (the head table, plus CP's tail table).
    pub fn entity_tables_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.entity];
        if let Some(t) = &mut self.tail {
            v.push(t);
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.tables()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Rounds every parameter to the nearest 32-bit float, matching what a
    /// checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.tables_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    pub fn validate_ids(&self, head: u32, relation: u32, tail: u32, time: Option<u32>) -> Result<()> {
        let n = self.num_entities() as u32;
        if head >= n || tail >= n {
            return Err(KgeError::Data(format!(
                "entity id out of range: head {head}, tail {tail}, |E| = {n}"
            )));
        }
        if relation as usize >= self.relation.nrows() {
            return Err(KgeError::Data(format!(
                "relation id {relation} out of range (|R| = {})",
                self.relation.nrows()
            )));
        }
        if self.kind.is_temporal() {
            let t = time.ok_or_else(|| {
                KgeError::Data(format!("{} requires a timestamp id", self.kind))
            })?;
            let nt = self.shape().timestamps;
            if t as usize >= nt {
                return Err(KgeError::Data(format!(
                    "timestamp id {t} out of range (|T| = {nt})"
                )));
            }
        }
        Ok(())
    }

    /// Transformed head `q` such that `score(k) = ⟨q, tail_k⟩`.
    pub fn query(&self, head: u32, relation: u32, time: Option<u32>) -> Result<Vec<f64>> {
        self.validate_ids(head, relation, 0, time)?;
        let mut q = vec![0.0; self.dim];
        self.query_into(head, relation, time, &mut q);
        Ok(q)
    }

    /// Ids must already be validated.
    pub(crate) fn query_into(&self, head: u32, relation: u32, time: Option<u32>, q: &mut [f64]) {
        let u = self.head_row(head);
        let r = self.relation_row(relation);
        match self.kind {
            ModelKind::Cp => {
                for ((o, a), b) in q.iter_mut().zip(u).zip(r) {
                    *o = a * b;
                }
            }
            ModelKind::ComplEx => complex_query(u, r, q),
            ModelKind::TComplEx => {
                let t = self.time_row(time.unwrap()).unwrap();
                let rt = complex_mul(r, t);
                complex_query(u, &rt, q);
            }
            ModelKind::Rescal => row_matvec_into(u, r, q),
            ModelKind::TRescal => {
                let t = self.time_row(time.unwrap()).unwrap();
                let m: Vec<f64> = r.iter().zip(t).map(|(a, b)| a * b).collect();
                row_matvec_into(u, &m, q);
            }
        }
    }

    /// Score of a single fact.
    pub fn score(&self, ex: &BatchExample) -> Result<f64> {
        self.validate_ids(ex.head, ex.relation, ex.tail, ex.time)?;
        let q = self.query(ex.head, ex.relation, ex.time)?;
        Ok(dot(&q, self.tail_row(ex.tail)))
    }

    /// Scores of every entity as the tail of `(head, relation[, time])`.
    /// Entry `k` is bitwise equal to `score` on the same query with tail `k`.
    pub fn score_all_candidates(
        &self,
        head: u32,
        relation: u32,
        time: Option<u32>,
    ) -> Result<Vec<f64>> {
        let q = self.query(head, relation, time)?;
        Ok(self.scores_for_query(&q))
    }

    pub(crate) fn scores_for_query(&self, q: &[f64]) -> Vec<f64> {
        self.tail_table()
            .rows()
            .into_iter()
            .map(|v| dot(q, v.as_slice().unwrap()))
            .collect()
    }

    /// Stacked queries of a batch, one row per example.
    pub fn batch_queries(&self, batch: &[BatchExample]) -> Result<Array2<f64>> {
        let mut q = Array2::zeros((batch.len(), self.dim));
        for (i, ex) in batch.iter().enumerate() {
            self.validate_ids(ex.head, ex.relation, ex.tail, ex.time)?;
            self.query_into(
                ex.head,
                ex.relation,
                ex.time,
                q.row_mut(i).as_slice_mut().unwrap(),
            );
        }
        Ok(q)
    }

    /// Candidate scores of a batch: `queries · tailᵀ`.
    pub fn batch_scores(&self, queries: &Array2<f64>) -> Array2<f64> {
        let mut s = Array2::zeros((queries.nrows(), self.num_entities()));
        general_mat_mul(1.0, queries, &self.tail_table().t(), 0.0, &mut s);
        s
    }

    /// Chains a gradient with respect to the query of `ex` back onto the
    /// head, relation and timestamp rows it was built from.
    pub fn query_backward(&self, ex: &BatchExample, dq: &[f64], grads: &mut Gradients) {
        let d = self.dim;
        let u = self.head_row(ex.head);
        let r = self.relation_row(ex.relation);
        let mut du = vec![0.0; d];
        match self.kind {
            ModelKind::Cp => {
                let mut dr = vec![0.0; d];
                for i in 0..d {
                    du[i] = dq[i] * r[i];
                    dr[i] = dq[i] * u[i];
                }
                grads.add_relation(ex.relation, &dr);
            }
            ModelKind::ComplEx => {
                let mut dr = vec![0.0; d];
                complex_query_backward(u, r, dq, &mut du, &mut dr);
                grads.add_relation(ex.relation, &dr);
            }
            ModelKind::TComplEx => {
                let t = self.time_row(ex.time.unwrap()).unwrap();
                let rt = complex_mul(r, t);
                let mut drt = vec![0.0; d];
                complex_query_backward(u, &rt, dq, &mut du, &mut drt);
                let (dr, dt) = complex_mul_backward(r, t, &drt);
                grads.add_relation(ex.relation, &dr);
                grads.add_time(ex.time.unwrap(), &dt);
            }
            ModelKind::Rescal => {
                let mut dr = vec![0.0; d * d];
                for i in 0..d {
                    du[i] = dot(&r[i * d..(i + 1) * d], dq);
                    for j in 0..d {
                        dr[i * d + j] = u[i] * dq[j];
                    }
                }
                grads.add_relation(ex.relation, &dr);
            }
            ModelKind::TRescal => {
                let t = self.time_row(ex.time.unwrap()).unwrap();
                let mut dr = vec![0.0; d * d];
                let mut dt = vec![0.0; d * d];
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        let k = i * d + j;
                        acc += r[k] * t[k] * dq[j];
                        let dm = u[i] * dq[j];
                        dr[k] = dm * t[k];
                        dt[k] = dm * r[k];
                    }
                    du[i] = acc;
                }
                grads.add_relation(ex.relation, &dr);
                grads.add_time(ex.time.unwrap(), &dt);
            }
        }
        grads.add_head(ex.head, &du);
    }

    /// Gradients of `Σ_i Σ_k upstream[i,k] · score(batch[i], k)` given the
    /// stacked batch queries.
    pub fn backward(
        &self,
        batch: &[BatchExample],
        queries: &Array2<f64>,
        upstream: ArrayView2<'_, f64>,
    ) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(batch, queries, upstream, &mut grads);
        grads
    }

    pub(crate) fn backward_into(
        &self,
        batch: &[BatchExample],
        queries: &Array2<f64>,
        upstream: ArrayView2<'_, f64>,
        grads: &mut Gradients,
    ) {
        // d tail = upstreamᵀ · Q, d Q = upstream · tail
        let tail_grad = grads.tail_table_mut();
        general_mat_mul(1.0, &upstream.t(), queries, 1.0, tail_grad);
        let mut dq = Array2::zeros((batch.len(), self.dim));
        general_mat_mul(1.0, &upstream, self.tail_table(), 0.0, &mut dq);
        for (i, ex) in batch.iter().enumerate() {
            self.query_backward(ex, dq.row(i).as_slice().unwrap(), grads);
        }
    }
}

fn row(table: &Array2<f64>, i: u32) -> &[f64] {
    table
        .row(i as usize)
        .to_slice()
        .expect("parameter tables are contiguous row-major")
}

/// Split-half complex product.
fn complex_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    crate::algebra::complex_hadamard(a, b)
}

fn complex_mul_backward(a: &[f64], b: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = a.len() / 2;
    let mut da = vec![0.0; a.len()];
    let mut db = vec![0.0; a.len()];
    for k in 0..n {
        let (ar, ai, br, bi) = (a[k], a[n + k], b[k], b[n + k]);
        let (gr, gi) = (dout[k], dout[n + k]);
        // out_r = ar br - ai bi ; out_i = ar bi + ai br
        da[k] = gr * br + gi * bi;
        da[n + k] = -gr * bi + gi * br;
        db[k] = gr * ar + gi * ai;
        db[n + k] = -gr * ai + gi * ar;
    }
    (da, db)
}

/// `q = (Re w, −Im w)` with `w = conj(u) ∘ r`, so that `⟨q, v⟩ = Re Σ conj(u) r v`.
fn complex_query(u: &[f64], r: &[f64], q: &mut [f64]) {
    let n = u.len() / 2;
    for k in 0..n {
        let (ua, ub, ra, rb) = (u[k], u[n + k], r[k], r[n + k]);
        q[k] = ua * ra + ub * rb;
        q[n + k] = ub * ra - ua * rb;
    }
}

fn complex_query_backward(u: &[f64], r: &[f64], dq: &[f64], du: &mut [f64], dr: &mut [f64]) {
    let n = u.len() / 2;
    for k in 0..n {
        let (ua, ub, ra, rb) = (u[k], u[n + k], r[k], r[n + k]);
        let (ga, gb) = (dq[k], dq[n + k]);
        // q_a = ua ra + ub rb ; q_b = ub ra - ua rb
        du[k] += ga * ra - gb * rb;
        du[n + k] += ga * rb + gb * ra;
        dr[k] += ga * ua + gb * ub;
        dr[n + k] += ga * ub - gb * ua;
    }
}

/// Gradients for one optimisation step. Entity tables are dense because the
/// softmax over all candidates touches every tail row; relation and
/// timestamp gradients are kept per touched row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entity: Array2<f64>,
    pub tail: Option<Array2<f64>>,
    pub relation: BTreeMap<u32, Vec<f64>>,
    pub time: BTreeMap<u32, Vec<f64>>,
    relation_width: usize,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Gradients {
            entity: Array2::zeros(p.entity.raw_dim()),
            tail: p.tail.as_ref().map(|t| Array2::zeros(t.raw_dim())),
            relation: BTreeMap::new(),
            time: BTreeMap::new(),
            relation_width: p.relation.ncols(),
        }
    }

    pub fn clear(&mut self) {
        self.entity.fill(0.0);
        if let Some(t) = &mut self.tail {
            t.fill(0.0);
        }
        self.relation.clear();
        self.time.clear();
    }

    fn tail_table_mut(&mut self) -> &mut Array2<f64> {
        self.tail.as_mut().unwrap_or(&mut self.entity)
    }

    pub fn add_head(&mut self, e: u32, g: &[f64]) {
        add_row(&mut self.entity, e, g);
    }

    pub fn add_tail(&mut self, e: u32, g: &[f64]) {
        add_row(self.tail_table_mut(), e, g);
    }

    pub fn add_relation(&mut self, r: u32, g: &[f64]) {
        let w = self.relation_width;
        let slot = self.relation.entry(r).or_insert_with(|| vec![0.0; w]);
        slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }

    pub fn add_time(&mut self, t: u32, g: &[f64]) {
        let w = self.relation_width;
        let slot = self.time.entry(t).or_insert_with(|| vec![0.0; w]);
        slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }

    /// Multiplies every gradient by `s`.
    pub fn scale(&mut self, s: f64) {
        self.entity.mapv_inplace(|x| x * s);
        if let Some(t) = &mut self.tail {
            t.mapv_inplace(|x| x * s);
        }
        for v in self.relation.values_mut().chain(self.time.values_mut()) {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Dense copy of one group's gradient, shaped like the parameter table.
    pub fn dense(&self, p: &ModelParams, group: ParamGroup) -> Option<Array2<f64>> {
        match group {
            ParamGroup::Entity => Some(self.entity.clone()),
            ParamGroup::Tail => self.tail.clone(),
            ParamGroup::Relation | ParamGroup::Time => {
                let table = p.table(group)?;
                let mut out = Array2::zeros(table.raw_dim());
                let rows = if group == ParamGroup::Relation {
                    &self.relation
                } else {
                    &self.time
                };
                for (&i, g) in rows {
                    out.row_mut(i as usize)
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, b)| *a = *b);
                }
                Some(out)
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entity.iter().all(|x| x.is_finite())
            && self.tail.iter().flat_map(|t| t.iter()).all(|x| x.is_finite())
            && self
                .relation
                .values()
                .chain(self.time.values())
                .flatten()
                .all(|x| x.is_finite())
    }
}

fn add_row(table: &mut Array2<f64>, i: u32, g: &[f64]) {
    table
        .row_mut(i as usize)
        .iter_mut()
        .zip(g)
        .for_each(|(a, b)| *a += b);
}

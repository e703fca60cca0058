//! Filtered ranking metrics, per-relation-type breakdowns, λ-sparsity and
//! CSR export of thresholded entity tables.

use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::data::{Fact, FilterIndex, RelationType, RelationTypeMap};
use crate::error::{KgeError, Result};
use crate::models::ModelParams;

pub const CSR_MAGIC: &[u8; 4] = b"KCSR";
pub const CSR_VERSION: u32 = 1;

/// Rank of `target` among the candidates not in `filtered`, counting half of
/// every tie: `1 + #greater + #ties / 2`.
pub fn filtered_rank(scores: &[f64], target: u32, filtered: &[u32]) -> Result<f64> {
    let t = target as usize;
    if t >= scores.len() {
        return Err(KgeError::Data(format!(
            "target {target} out of range for {} candidates",
            scores.len()
        )));
    }
    if filtered.contains(&target) {
        return Err(KgeError::Protocol(format!("target {target} is in the filter set")));
    }
    let s = scores[t];
    let mut greater = 0usize;
    let mut ties = 0usize;
    for &x in scores {
        if x > s {
            greater += 1;
        } else if x == s {
            ties += 1;
        }
    }
    ties -= 1;
    for &f in filtered {
        let x = scores[f as usize];
        if x > s {
            greater -= 1;
        } else if x == s {
            ties -= 1;
        }
    }
    Ok(1.0 + greater as f64 + ties as f64 / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
    pub per_type: Vec<(RelationType, RankingReport)>,
}

impl RankingReport {
    pub fn from_ranks(ranks: &[f64]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(KgeError::Data("cannot summarise an empty set of ranks".into()));
        }
        let n = ranks.len() as f64;
        let frac = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(RankingReport {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits1: frac(1.0),
            hits3: frac(3.0),
            hits10: frac(10.0),
            count: ranks.len(),
            per_type: Vec::new(),
        })
    }

    /// `key=value` lines; per-type entries are prefixed with the type name.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        push_kv(&mut s, "", self);
        for (ty, r) in &self.per_type {
            push_kv(&mut s, &format!("{}.", ty.name()), r);
        }
        s
    }
}

fn push_kv(s: &mut String, prefix: &str, r: &RankingReport) {
    use std::fmt::Write as _;
    let _ = writeln!(s, "{prefix}queries={}", r.count);
    let _ = writeln!(s, "{prefix}mrr={}", r.mrr);
    let _ = writeln!(s, "{prefix}hits@1={}", r.hits1);
    let _ = writeln!(s, "{prefix}hits@3={}", r.hits3);
    let _ = writeln!(s, "{prefix}hits@10={}", r.hits10);
}

impl fmt::Display for RankingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>8} {:>7} {:>7} {:>7} {:>7}", "subset", "queries", "MRR", "H@1", "H@3", "H@10")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, r: &RankingReport| {
            writeln!(
                f,
                "{:<8} {:>8} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                name, r.count, r.mrr, r.hits1, r.hits3, r.hits10
            )
        };
        row(f, "all", self)?;
        for (ty, r) in &self.per_type {
            row(f, ty.name(), r)?;
        }
        Ok(())
    }
}

/// Filtered rank of every query in `split`, in split order.
pub fn rank_queries(params: &ModelParams, split: &[Fact], filter: &FilterIndex) -> Result<Vec<f64>> {
    split
        .par_iter()
        .map(|f| {
            let scores = params.score_all_candidates(f.head, f.relation, f.time)?;
            let known = filter.answers(f.head, f.relation, f.time);
            let others: Vec<u32> = known.iter().copied().filter(|&e| e != f.tail).collect();
            filtered_rank(&scores, f.tail, &others)
        })
        .collect()
}

/// Filtered MRR and Hits@{1,3,10} over every query of a reciprocal-augmented
/// split, optionally broken down by the relation type of each query.
pub fn evaluate_split(
    params: &ModelParams,
    split: &[Fact],
    filter: &FilterIndex,
    types: Option<&RelationTypeMap>,
) -> Result<RankingReport> {
    if split.is_empty() {
        return Err(KgeError::Data("cannot evaluate an empty split".into()));
    }
    let ranks = rank_queries(params, split, filter)?;
    let mut report = RankingReport::from_ranks(&ranks)?;
    if let Some(types) = types {
        for ty in RelationType::ALL {
            let sub: Vec<f64> = split
                .iter()
                .zip(&ranks)
                .filter(|(f, _)| types.query_type(f.relation) == ty)
                .map(|(_, &r)| r)
                .collect();
            if !sub.is_empty() {
                report.per_type.push((ty, RankingReport::from_ranks(&sub)?));
            }
        }
    }
    Ok(report)
}

/// Fraction of entries with magnitude strictly below `lambda`.
pub fn lambda_sparsity(table: ArrayView2<'_, f64>, lambda: f64) -> f64 {
    if table.is_empty() {
        return 0.0;
    }
    table.iter().filter(|x| x.abs() < lambda).count() as f64 / table.len() as f64
}

/// λ-sparsity over every entity table of a model.
pub fn entity_sparsity(params: &ModelParams, lambda: f64) -> f64 {
    let (mut below, mut total) = (0usize, 0usize);
    for t in entity_tables(params) {
        below += t.iter().filter(|x| x.abs() < lambda).count();
        total += t.len();
    }
    if total == 0 {
        0.0
    } else {
        below as f64 / total as f64
    }
}

fn entity_tables(params: &ModelParams) -> Vec<&Array2<f64>> {
    let mut v = vec![&params.entity];
    if let Some(t) = &params.tail {
        v.push(t);
    }
    v
}

/// Smallest threshold whose λ-sparsity over `magnitudes` reaches `target`.
pub fn sparsity_threshold(magnitudes: &mut [f64], target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(KgeError::Config(format!("target sparsity must lie in [0, 1), got {target}")));
    }
    let m = (target * magnitudes.len() as f64).ceil() as usize;
    if m == 0 {
        return Ok(0.0);
    }
    magnitudes.sort_by(f64::total_cmp);
    Ok(magnitudes[m - 1].next_up())
}

/// Compressed sparse rows with `u64` row pointers, `u32` column indices and
/// `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub cols: usize,
    pub indptr: Vec<u64>,
    pub indices: Vec<u32>,
    pub data: Vec<f32>,
}

impl Csr {
    pub fn from_dense(table: ArrayView2<'_, f64>) -> Self {
        let mut indptr = Vec::with_capacity(table.nrows() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in table.rows() {
            for (j, &x) in row.iter().enumerate() {
                let v = x as f32;
                if v != 0.0 {
                    indices.push(j as u32);
                    data.push(v);
                }
            }
            indptr.push(indices.len() as u64);
        }
        Csr {
            cols: table.ncols(),
            indptr,
            indices,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows(), self.cols));
        for i in 0..self.rows() {
            for k in self.indptr[i] as usize..self.indptr[i + 1] as usize {
                out[[i, self.indices[k] as usize]] = self.data[k] as f64;
            }
        }
        out
    }

    /// Bytes of the three arrays, headers excluded.
    pub fn payload_bytes(&self) -> usize {
        self.indptr.len() * 8 + self.indices.len() * 4 + self.data.len() * 4
    }

    fn paths(prefix: &Path) -> [PathBuf; 3] {
        let with = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            PathBuf::from(p)
        };
        [with(".indptr"), with(".indices"), with(".data")]
    }

    /// Writes `<prefix>.indptr`, `<prefix>.indices` and `<prefix>.data`. The
    /// pointer file stores the column count right after its header.
    pub fn write(&self, prefix: &Path) -> Result<Vec<PathBuf>> {
        let paths = Self::paths(prefix);
        let mut bufs: [Vec<u8>; 3] = Default::default();
        for b in bufs.iter_mut() {
            b.extend_from_slice(CSR_MAGIC);
            b.extend_from_slice(&CSR_VERSION.to_le_bytes());
        }
        bufs[0].extend_from_slice(&(self.cols as u64).to_le_bytes());
        for p in &self.indptr {
            bufs[0].extend_from_slice(&p.to_le_bytes());
        }
        for i in &self.indices {
            bufs[1].extend_from_slice(&i.to_le_bytes());
        }
        for v in &self.data {
            bufs[2].extend_from_slice(&v.to_le_bytes());
        }
        for (path, buf) in paths.iter().zip(&bufs) {
            let file = fs::File::create(path).map_err(|e| KgeError::io(path, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(buf).and_then(|_| w.flush()).map_err(|e| KgeError::io(path, e))?;
        }
        Ok(paths.to_vec())
    }

    pub fn read(prefix: &Path) -> Result<Self> {
        let paths = Self::paths(prefix);
        let mut payloads = Vec::with_capacity(3);
        for path in &paths {
            let file = fs::File::open(path).map_err(|e| KgeError::io(path, e))?;
            let mut bytes = Vec::new();
            BufReader::new(file)
                .read_to_end(&mut bytes)
                .map_err(|e| KgeError::io(path, e))?;
            if bytes.len() < 8 || &bytes[..4] != CSR_MAGIC {
                return Err(KgeError::Format(format!("{}: missing KCSR header", path.display())));
            }
            let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
            if version != CSR_VERSION {
                return Err(KgeError::Format(format!(
                    "{}: unsupported CSR version {version}",
                    path.display()
                )));
            }
            payloads.push(bytes.split_off(8));
        }
        let ptr = &payloads[0];
        if ptr.len() < 16 || ptr.len() % 8 != 0 || payloads[1].len() % 4 != 0 || payloads[2].len() % 4 != 0 {
            return Err(KgeError::Format("truncated CSR arrays".into()));
        }
        let cols = u64::from_le_bytes(ptr[..8].try_into().unwrap()) as usize;
        let indptr: Vec<u64> = ptr[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let indices: Vec<u32> = payloads[1]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let data: Vec<f32> = payloads[2]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let nnz = *indptr.last().unwrap() as usize;
        let monotone = indptr.windows(2).all(|w| w[0] <= w[1]) && indptr[0] == 0;
        if nnz != indices.len() || nnz != data.len() || !monotone {
            return Err(KgeError::Format("inconsistent CSR arrays".into()));
        }
        if indices.iter().any(|&j| j as usize >= cols) {
            return Err(KgeError::Format("CSR column index out of range".into()));
        }
        Ok(Csr {
            cols,
            indptr,
            indices,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub target: f64,
    pub lambda: f64,
    pub achieved: f64,
    pub mrr_before: f64,
    pub mrr_after: f64,
    pub nnz: usize,
    pub csr_bytes: usize,
    pub dense_bytes: usize,
}

impl SparsityReport {
    pub fn relative_mrr_drop(&self) -> f64 {
        (self.mrr_before - self.mrr_after) / self.mrr_before
    }

    /// `1 − csr / dense`.
    pub fn storage_saving(&self) -> f64 {
        1.0 - self.csr_bytes as f64 / self.dense_bytes as f64
    }

    pub fn to_kv(&self) -> String {
        format!(
            "target={}\nlambda={:e}\nachieved={}\nmrr_before={}\nmrr_after={}\nnnz={}\ncsr_bytes={}\ndense_bytes={}\n",
            self.target,
            self.lambda,
            self.achieved,
            self.mrr_before,
            self.mrr_after,
            self.nnz,
            self.csr_bytes,
            self.dense_bytes
        )
    }
}

/// Copy of `params` with every entity-table entry below the threshold set to
/// zero, together with the threshold used.
pub fn threshold_entities(params: &ModelParams, target: f64) -> Result<(ModelParams, f64)> {
    let mut mags: Vec<f64> = entity_tables(params)
        .iter()
        .flat_map(|t| t.iter().map(|x| x.abs()))
        .collect();
    let lambda = sparsity_threshold(&mut mags, target)?;
    let mut out = params.clone();
    for t in out.entity_tables_mut() {
        t.mapv_inplace(|x| if x.abs() < lambda { 0.0 } else { x });
    }
    if entity_tables(&out).iter().all(|t| t.iter().all(|&x| x == 0.0)) {
        return Err(KgeError::Data("thresholding left every entity entry at zero".into()));
    }
    Ok((out, lambda))
}

/// Thresholds the entity tables to `target` sparsity, re-evaluates on
/// `split`, and writes one CSR triple per entity table under `out_dir`.
pub fn threshold_and_export(
    params: &ModelParams,
    target: f64,
    split: &[Fact],
    filter: &FilterIndex,
    out_dir: Option<&Path>,
) -> Result<(SparsityReport, ModelParams)> {
    let (sparse, lambda) = threshold_entities(params, target)?;
    let mrr_before = evaluate_split(params, split, filter, None)?.mrr;
    let mrr_after = evaluate_split(&sparse, split, filter, None)?.mrr;
    let mut nnz = 0;
    let mut csr_bytes = 0;
    let mut dense_bytes = 0;
    for (name, table) in [("entity", Some(&sparse.entity)), ("tail", sparse.tail.as_ref())] {
        let Some(table) = table else { continue };
        let csr = Csr::from_dense(table.view());
        nnz += csr.nnz();
        csr_bytes += csr.payload_bytes();
        dense_bytes += table.len() * 4;
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| KgeError::io(dir, e))?;
            csr.write(&dir.join(name))?;
        }
    }
    let report = SparsityReport {
        target,
        lambda,
        achieved: entity_sparsity(&sparse, lambda),
        mrr_before,
        mrr_after,
        nnz,
        csr_bytes,
        dense_bytes,
    };
    Ok((report, sparse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::classify_relations;
    use crate::models::{ModelKind, Shape};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unique_best_is_rank_one() {
        assert_eq!(filtered_rank(&[0.1, 5.0, 0.3], 1, &[]).unwrap(), 1.0);
    }

    #[test]
    fn ties_count_half() {
        assert_eq!(filtered_rank(&[3.0, 2.0, 2.0, 1.0], 1, &[0]).unwrap(), 1.5);
        assert_eq!(filtered_rank(&[1.0; 5], 2, &[]).unwrap(), 3.0);
    }

    #[test]
    fn filtered_target_is_a_protocol_error() {
        assert!(matches!(
            filtered_rank(&[1.0, 2.0], 0, &[0]),
            Err(KgeError::Protocol(_))
        ));
    }

    #[test]
    fn mrr_of_known_ranks() {
        let r = RankingReport::from_ranks(&[1.0, 2.0, 4.0]).unwrap();
        assert!((r.mrr - 0.5833).abs() < 1e-4);
        assert!((r.mrr - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!((r.hits1, r.hits3, r.hits10), (1.0 / 3.0, 2.0 / 3.0, 1.0));
        assert!(RankingReport::from_ranks(&[]).is_err());
    }

    /// Sorts the surviving candidates and averages the positions of the
    /// block of scores equal to the target's.
    fn oracle_rank(scores: &[f64], target: usize, filtered: &[u32]) -> f64 {
        let mut kept: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| !filtered.contains(&(*i as u32)))
            .map(|(i, &s)| (s, i))
            .collect();
        kept.sort_by(|a, b| b.0.total_cmp(&a.0));
        let s = scores[target];
        let pos: Vec<usize> = kept
            .iter()
            .enumerate()
            .filter(|(_, (x, _))| *x == s)
            .map(|(p, _)| p + 1)
            .collect();
        (pos[0] + pos[pos.len() - 1]) as f64 / 2.0
    }

    fn random_case(seed: u64) -> (ModelParams, Vec<Fact>, FilterIndex) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_ent = rng.random_range(2..=10u32);
        let n_rel = rng.random_range(1..=3u32);
        let n_facts = rng.random_range(1..=20);
        let mut facts = Vec::new();
        for _ in 0..n_facts {
            let f = Fact::triple(
                rng.random_range(0..n_ent),
                rng.random_range(0..n_rel),
                rng.random_range(0..n_ent),
            );
            if !facts.contains(&f) {
                facts.push(f);
            }
        }
        let inverse: Vec<Fact> = facts.iter().map(|f| crate::data::reciprocal_of(f, n_rel)).collect();
        facts.extend(inverse);
        let kind = ModelKind::ALL[rng.random_range(0..3)];
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
        // Coarse values force exact ties.
        for (_, t) in params.tables_mut() {
            t.mapv_inplace(|x| (x * 2.0).round() / 2.0);
        }
        let filter = FilterIndex::from_facts(&facts);
        (params, facts, filter)
    }

    #[test]
    fn split_report_matches_sort_oracle() {
        for seed in 0..50 {
            let (params, facts, filter) = random_case(seed);
            let report = evaluate_split(&params, &facts, &filter, None).unwrap();
            let ranks: Vec<f64> = facts
                .iter()
                .map(|f| {
                    let scores: Vec<f64> = (0..params.num_entities() as u32)
                        .map(|k| params.score(&crate::models::BatchExample {
                            head: f.head,
                            relation: f.relation,
                            tail: k,
                            time: None,
                            weight: 1.0,
                        }).unwrap())
                        .collect();
                    let others: Vec<u32> = facts
                        .iter()
                        .filter(|g| g.head == f.head && g.relation == f.relation && g.tail != f.tail)
                        .map(|g| g.tail)
                        .collect();
                    oracle_rank(&scores, f.tail as usize, &others)
                })
                .collect();
            let n = ranks.len() as f64;
            let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n;
            let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
            assert_eq!(report.mrr, mrr, "seed {seed}");
            assert_eq!((report.hits1, report.hits3, report.hits10), (hits(1.0), hits(3.0), hits(10.0)));
        }
    }

    #[test]
    fn perfect_ranker() {
        // Entity i answers relation 0 for head i with tail i; identity-like CP.
        let n = 4;
        let mut p = ModelParams::zeros(
            ModelKind::Cp,
            n,
            Shape {
                entities: n,
                relations: 2,
                timestamps: 0,
            },
        )
        .unwrap();
        for i in 0..n {
            p.entity[[i, i]] = 1.0;
            p.tail.as_mut().unwrap()[[i, i]] = 1.0;
        }
        p.relation.fill(1.0);
        let facts: Vec<Fact> = (0..n as u32).map(|i| Fact::triple(i, 0, i)).collect();
        let filter = FilterIndex::from_facts(&facts);
        let types = classify_relations(&facts, 1);
        let r = evaluate_split(&p, &facts, &filter, Some(&types)).unwrap();
        assert_eq!((r.mrr, r.hits1, r.hits3, r.hits10), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.per_type.len(), 1);
        assert_eq!(r.per_type[0].0, RelationType::OneToOne);
        assert!(r.to_kv().contains("1-1.mrr=1"));
        assert!(evaluate_split(&p, &[], &filter, None).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let e = array![[0.1, -0.5], [0.01, 2.0]];
        assert_eq!(lambda_sparsity(e.view(), 0.0), 0.0);
        assert_eq!(lambda_sparsity(e.view(), 0.2), 0.5);
        assert_eq!(lambda_sparsity(e.view(), 1e9), 1.0);
    }

    fn random_cp(rows: usize, dim: usize, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams::init(
            ModelKind::Cp,
            dim,
            Shape {
                entities: rows,
                relations: 2,
                timestamps: 0,
            },
            1.0,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn half_sparsity_zeroes_the_smallest_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = random_cp(4, 4, 1);
        p.tail = None;
        p.kind = ModelKind::ComplEx;
        p.entity.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let mut mags: Vec<(f64, usize)> = p.entity.iter().map(|x| x.abs()).zip(0..).collect();
        mags.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (sparse, _) = threshold_entities(&p, 0.5).unwrap();
        let flat: Vec<f64> = sparse.entity.iter().copied().collect();
        for (k, &(_, idx)) in mags.iter().enumerate() {
            assert_eq!(flat[idx] == 0.0, k < 8, "entry {idx}");
        }
    }

    #[test]
    fn zero_target_changes_nothing() {
        let p = random_cp(5, 6, 2);
        let facts = vec![Fact::triple(0, 0, 1), Fact::triple(1, 1, 0)];
        let filter = FilterIndex::from_facts(&facts);
        let (report, sparse) = threshold_and_export(&p, 0.0, &facts, &filter, None).unwrap();
        assert_eq!(sparse, p);
        assert_eq!(report.mrr_before, report.mrr_after);
        assert!(report.csr_bytes > report.dense_bytes);
        assert!(threshold_entities(&p, 1.0).is_err());
    }

    #[test]
    fn csr_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = random_cp(7, 5, 3);
        let (sparse, _) = threshold_entities(&p, 0.6).unwrap();
        let mut expect = sparse.entity.clone();
        expect.mapv_inplace(|x| x as f32 as f64);
        let csr = Csr::from_dense(sparse.entity.view());
        let files = csr.write(&dir.path().join("entity")).unwrap();
        assert_eq!(files.len(), 3);
        for f in &files {
            assert_eq!(&fs::read(f).unwrap()[..4], CSR_MAGIC);
        }
        let back = Csr::read(&dir.path().join("entity")).unwrap();
        assert_eq!(back, csr);
        assert_eq!(back.to_dense(), expect);
        assert_eq!(csr.payload_bytes(), 8 * 8 + csr.nnz() * 8);
    }

    proptest! {
        #[test]
        fn rank_ignores_monotone_transforms(scores in proptest::collection::vec(-3i32..3, 2..12), t in 0usize..12, shift in -5.0f64..5.0) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let t = t % scores.len();
            let filtered: Vec<u32> = (0..scores.len() as u32).filter(|&i| i as usize != t && i % 3 == 0).collect();
            let a = filtered_rank(&scores, t as u32, &filtered).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|x| (x * 0.5).exp() + shift).collect();
            let b = filtered_rank(&mapped, t as u32, &filtered).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(a, oracle_rank(&scores, t, &filtered));
        }

        #[test]
        fn sparsity_is_monotone_and_target_is_met(vals in proptest::collection::vec(-2.0f64..2.0, 1..40), target in 0.0f64..0.99, a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let t = Array2::from_shape_vec((1, vals.len()), vals.clone()).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lambda_sparsity(t.view(), lo) <= lambda_sparsity(t.view(), hi));
            let mut mags: Vec<f64> = vals.iter().map(|x| x.abs()).collect();
            let lambda = sparsity_threshold(&mut mags, target).unwrap();
            prop_assert!(lambda_sparsity(t.view(), lambda) >= target);
            // Nothing smaller works.
            if lambda > 0.0 {
                prop_assert!(lambda_sparsity(t.view(), lambda.next_down()) < target);
            }
        }
    }
}

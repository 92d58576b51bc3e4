//! Document clustering with anchor words.
//!
//! Documents are rows and words are columns of a tf-idf matrix. The selected
//! columns are anchor words, one per topic; each document joins the topic
//! whose anchor column has its largest entry.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::baselines::{weight_matrix, SelectorConfig, DEFAULT_NNLS_TOL};
use crate::er::er_practical;
use crate::error::{Error, Result};
use crate::evalbench::Algorithm;
use crate::matrix::io::read_coordinate;
use crate::matrix::{reduce, DataMatrix, SparseMatrix};
use crate::SCHEMA_VERSION;

/// Bag-of-words counts, documents by words.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub counts: SparseMatrix,
    pub vocab: Vec<String>,
    /// Class label per document.
    pub labels: Option<Vec<usize>>,
}

impl Corpus {
    pub fn new(counts: SparseMatrix, vocab: Option<Vec<String>>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(bad) = counts.values().iter().find(|&&v| v < 0.0 || v.fract() != 0.0) {
            return Err(Error::input(format!("counts must be nonnegative integers, found {bad}")));
        }
        let vocab = match vocab {
            Some(v) if v.len() != counts.ncols() => {
                return Err(Error::input(format!(
                    "vocabulary has {} words, count matrix has {} columns",
                    v.len(),
                    counts.ncols()
                )))
            }
            Some(v) => v,
            None => (1..=counts.ncols()).map(|j| format!("w{j}")).collect(),
        };
        if let Some(l) = &labels {
            if l.len() != counts.nrows() {
                return Err(Error::input(format!(
                    "{} labels for {} documents",
                    l.len(),
                    counts.nrows()
                )));
            }
        }
        Ok(Corpus { counts, vocab, labels })
    }

    /// Reads a `d m nnz` / `doc word count` file plus optional vocabulary
    /// (one word per line) and label (one integer per line) files.
    pub fn load(counts: &Path, vocab: Option<&Path>, labels: Option<&Path>) -> Result<Self> {
        let c = read_coordinate(fs::File::open(counts)?)?;
        let v = vocab
            .map(|p| -> Result<Vec<String>> {
                Ok(fs::read_to_string(p)?.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
            })
            .transpose()?;
        let l = labels
            .map(|p| -> Result<Vec<usize>> {
                fs::read_to_string(p)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|t| t.parse().map_err(|_| Error::input(format!("bad label {t:?}"))))
                    .collect()
            })
            .transpose()?;
        Corpus::new(c, v, l)
    }

    pub fn docs(&self) -> usize {
        self.counts.nrows()
    }

    /// Documents without any word.
    pub fn empty_docs(&self) -> Vec<usize> {
        let mut seen = vec![false; self.docs()];
        for (i, _, _) in self.counts.triplets() {
            seen[i] = true;
        }
        (0..self.docs()).filter(|&i| !seen[i]).collect()
    }

    /// Drops words that occur in no document.
    pub fn prune_unused_words(&self) -> Corpus {
        let keep: Vec<usize> =
            (0..self.counts.ncols()).filter(|&j| self.counts.column_iter(j).next().is_some()).collect();
        Corpus {
            counts: self.counts.select_columns(&keep),
            vocab: keep.iter().map(|&j| self.vocab[j].clone()).collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tfidf {
    pub matrix: DataMatrix,
    /// Rows left at zero and not normalized.
    pub empty_rows: Vec<usize>,
}

/// `tf(i,j) ln(d / df(j))`, each nonzero row scaled to unit 1-norm.
pub fn tfidf(corpus: &Corpus) -> Result<Tfidf> {
    let c = &corpus.counts;
    let (d, m) = (c.nrows(), c.ncols());
    let mut idf = vec![0.0; m];
    for (j, w) in idf.iter_mut().enumerate() {
        let df = c.column_iter(j).filter(|&(_, v)| v > 0.0).count();
        if df == 0 {
            return Err(Error::input(format!(
                "word {:?} occurs in no document; prune it first",
                corpus.vocab[j]
            )));
        }
        *w = (d as f64 / df as f64).ln();
    }
    let weighted: Vec<(usize, usize, f64)> = c.triplets().map(|(i, j, v)| (i, j, v * idf[j])).collect();
    let mut row_sum = vec![0.0; d];
    for &(i, _, v) in &weighted {
        row_sum[i] += v.abs();
    }
    let empty_rows: Vec<usize> = (0..d).filter(|&i| row_sum[i] == 0.0).collect();
    let trip = weighted
        .into_iter()
        .map(|(i, j, v)| (i, j, if row_sum[i] > 0.0 { v / row_sum[i] } else { v }));
    Ok(Tfidf { matrix: DataMatrix::sparse(SparseMatrix::from_triplets(d, m, trip)?)?, empty_rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct Topic {
    pub anchor_word: String,
    /// 1-based word column.
    pub anchor_index: usize,
    pub top_words: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub schema_version: &'static str,
    pub algorithm: Algorithm,
    pub used_low_rank: bool,
    /// Topic per document, in `1..=r`.
    pub assignments: Vec<usize>,
    pub topics: Vec<Topic>,
    pub ac: Option<f64>,
    pub nmi: Option<f64>,
    /// Documents whose coefficient row was all zero (assigned to topic 1).
    pub zero_rows: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterConfig {
    pub r: usize,
    pub algorithm: Algorithm,
    pub use_low_rank: bool,
    pub top_k: usize,
    pub seed: u64,
}

/// Anchor-word clustering of a documents-by-words matrix.
pub fn cluster(mdw: &DataMatrix, vocab: &[String], labels: Option<&[usize]>, cfg: &ClusterConfig) -> Result<ClusterReport> {
    let r = cfg.r;
    if vocab.len() != mdw.ncols() {
        return Err(Error::input("vocabulary length does not match the number of columns"));
    }
    let sel = SelectorConfig::new(cfg.algorithm.selector()).with_seed(cfg.seed);
    let anchors = match cfg.algorithm {
        Algorithm::Baseline(_) => sel.select(mdw, r)?,
        Algorithm::Er(_) => er_practical(mdw, r, r, &sel)?.indices,
    };
    let f = if cfg.use_low_rank {
        reduce(mdw, r)?.low_rank_columns(&anchors)
    } else {
        mdw.select_columns(&anchors)
    };
    let scale = f.amax();
    let mut zero_rows = Vec::new();
    let assignments: Vec<usize> = f
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.amax() <= 1e-12 * scale {
                zero_rows.push(i + 1);
                return 1;
            }
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect();

    let w = weight_matrix(mdw, &anchors, DEFAULT_NNLS_TOL)?;
    let topics = anchors
        .iter()
        .enumerate()
        .map(|(k, &a)| Topic {
            anchor_word: vocab[a].clone(),
            anchor_index: a + 1,
            top_words: top_entries(&w, k, a, cfg.top_k).into_iter().map(|j| vocab[j].clone()).collect(),
        })
        .collect();
    let (ac, nmi) = match labels {
        Some(l) => (Some(accuracy(l, &assignments)?), Some(nmi(l, &assignments)?)),
        None => (None, None),
    };
    Ok(ClusterReport {
        schema_version: SCHEMA_VERSION,
        algorithm: cfg.algorithm,
        used_low_rank: cfg.use_low_rank,
        assignments,
        topics,
        ac,
        nmi,
        zero_rows,
    })
}

/// Columns of the `k` largest entries of row `row`, skipping `exclude`.
fn top_entries(w: &DMatrix<f64>, row: usize, exclude: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.ncols()).filter(|&j| j != exclude && w[(row, j)] > 0.0).collect();
    idx.sort_by(|&a, &b| w[(row, b)].total_cmp(&w[(row, a)]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

impl ClusterReport {
    /// Anchor word followed by the top words, one topic per line.
    pub fn topic_table(&self) -> String {
        let mut out = String::new();
        for (k, t) in self.topics.iter().enumerate() {
            out.push_str(&format!("topic {}\t{}\t{}\n", k + 1, t.anchor_word, t.top_words.join(" ")));
        }
        out
    }
}

/// Relabels to `0..k` in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let v = labels
        .iter()
        .map(|l| {
            let n = map.len();
            *map.entry(*l).or_insert(n)
        })
        .collect();
    (v, map.len())
}

fn contingency(classes: &[usize], clusters: &[usize]) -> Result<(Vec<Vec<u64>>, usize, usize)> {
    if classes.len() != clusters.len() || classes.is_empty() {
        return Err(Error::input(format!(
            "partitions cover {} and {} documents",
            classes.len(),
            clusters.len()
        )));
    }
    let (a, ka) = compact(classes);
    let (b, kb) = compact(clusters);
    let mut t = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(&b) {
        t[x][y] += 1;
    }
    Ok((t, ka, kb))
}

/// Best class-to-cluster matching, as a fraction of documents.
pub fn accuracy(classes: &[usize], clusters: &[usize]) -> Result<f64> {
    let (t, ka, kb) = contingency(classes, clusters)?;
    let n = ka.max(kb);
    let mut w = Matrix::new(n, n, 0i64);
    for (i, row) in t.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            w[(i, j)] = c as i64;
        }
    }
    let (total, _) = kuhn_munkres(&w);
    Ok(total as f64 / classes.len() as f64)
}

/// Mutual information over the mean of the two entropies, natural log.
pub fn nmi(classes: &[usize], clusters: &[usize]) -> Result<f64> {
    let (t, _, _) = contingency(classes, clusters)?;
    let n = classes.len() as f64;
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> =
        (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let mut mi = 0.0;
    for (i, row) in t.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[i] * cols[j])).ln();
            }
        }
    }
    let ent = |v: &[f64]| -> f64 { v.iter().filter(|&&x| x > 0.0).map(|&x| -(x / n) * (x / n).ln()).sum() };
    let denom = 0.5 * (ent(&rows) + ent(&cols));
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusConfig {
    pub docs: usize,
    pub words: usize,
    pub topics: usize,
    /// Relative multiplicative noise on expected counts.
    pub noise: f64,
    /// Weight spread over the other topics; the dominant topic keeps at least `1 - mix`.
    pub mix: f64,
    /// Expected words per document.
    pub doc_length: f64,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn new(docs: usize, words: usize, topics: usize, noise: f64, seed: u64) -> Self {
        CorpusConfig { docs, words, topics, noise, mix: 0.3, doc_length: 5000.0, seed }
    }
}

/// Generated corpus with its hidden factors.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// `topics x words`, rows sum to 1.
    pub topic_matrix: DMatrix<f64>,
    /// `docs x topics`, rows on the simplex.
    pub coefficients: DMatrix<f64>,
    /// Anchor word column of each topic.
    pub anchors: Vec<usize>,
}

/// Documents `a_i = f_i^T W`: topic rows `W = (I, K) Pi` normalized to sum
/// to 1 with `K` columns uniform on the simplex, and
/// `f_i = (1 - mix) e_label + mix g_i` with `g_i` uniform on the simplex.
/// Counts are `round(len a_ij (1 + noise z))` clamped at 0.
pub fn gen_corpus(cfg: &CorpusConfig) -> Result<SyntheticCorpus> {
    let (d, m, r) = (cfg.docs, cfg.words, cfg.topics);
    if r == 0 || m < r || d == 0 {
        return Err(Error::input(format!("need docs >= 1 and words >= topics >= 1, got {d}, {m}, {r}")));
    }
    if !(0.0..0.5).contains(&cfg.mix) || !(cfg.noise >= 0.0) || !(cfg.doc_length > 0.0) {
        return Err(Error::input("corpus parameters out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Gamma::new(1.0, 1.0).expect("valid shape");
    let simplex = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
        let g: Vec<f64> = (0..k).map(|_| unit.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    };
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    let anchors = perm[..r].to_vec();
    let mut w = DMatrix::zeros(r, m);
    for (k, &a) in anchors.iter().enumerate() {
        w[(k, a)] = 1.0;
    }
    for &col in &perm[r..] {
        let g = simplex(&mut rng, r);
        for k in 0..r {
            w[(k, col)] = g[k];
        }
    }
    for mut row in w.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let topic_ids: Vec<usize> = (0..r).collect();
    let mut labels = Vec::with_capacity(d);
    let mut coef = DMatrix::zeros(d, r);
    for i in 0..d {
        let label = *topic_ids.choose(&mut rng).expect("r >= 1");
        let g = simplex(&mut rng, r);
        for k in 0..r {
            coef[(i, k)] = cfg.mix * g[k] + if k == label { 1.0 - cfg.mix } else { 0.0 };
        }
        labels.push(label + 1);
    }
    let a = &coef * &w;
    let mut trip = Vec::new();
    for i in 0..d {
        for j in 0..m {
            let z: f64 = if cfg.noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            let v = (cfg.doc_length * a[(i, j)] * (1.0 + cfg.noise * z)).round().max(0.0);
            if v > 0.0 {
                trip.push((i, j, v));
            }
        }
    }
    let counts = SparseMatrix::from_triplets(d, m, trip)?;
    Ok(SyntheticCorpus {
        corpus: Corpus::new(counts, None, Some(labels))?,
        topic_matrix: w,
        coefficients: coef,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(d: usize, m: usize, trip: Vec<(usize, usize, f64)>) -> Corpus {
        Corpus::new(SparseMatrix::from_triplets(d, m, trip).unwrap(), None, None).unwrap()
    }

    #[test]
    fn ubiquitous_word_has_zero_weight() {
        let c = corpus(2, 2, vec![(0, 0, 3.0), (1, 0, 1.0), (1, 1, 2.0)]);
        let t = tfidf(&c).unwrap().matrix.to_dense();
        assert_eq!(t.column(0).amax(), 0.0);
        assert_eq!(t[(1, 1)], 1.0);
    }

    #[test]
    fn single_document_row_is_flagged() {
        let c = corpus(1, 1, vec![(0, 0, 4.0)]);
        assert_eq!(tfidf(&c).unwrap().empty_rows, vec![0]);
    }

    #[test]
    fn hand_computed_table() {
        // docs: {a:2, b:1}, {a:1, c:3}, {b:2}
        let c = corpus(3, 3, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 2, 3.0), (2, 1, 2.0)]);
        let t = tfidf(&c).unwrap().matrix.to_dense();
        let l15 = 1.5f64.ln();
        let l3 = 3f64.ln();
        let raw = [[2.0 * l15, l15, 0.0], [l15, 0.0, 3.0 * l3], [0.0, 2.0 * l15, 0.0]];
        for i in 0..3 {
            let s: f64 = raw[i].iter().sum();
            for j in 0..3 {
                assert!((t[(i, j)] - raw[i][j] / s).abs() < 1e-15);
            }
            assert!((t.row(i).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unused_word_is_rejected_until_pruned() {
        let c = corpus(2, 3, vec![(0, 0, 1.0), (1, 2, 1.0)]);
        assert!(tfidf(&c).is_err());
        let p = c.prune_unused_words();
        assert_eq!(p.vocab, vec!["w1".to_string(), "w3".to_string()]);
        assert!(tfidf(&p).is_ok());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 1, 2, 2], &[5, 5, 3, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap(), 0.5);
        assert!(accuracy(&[1, 2], &[1]).is_err());
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[1, 1, 2, 2], &[2, 2, 1, 1]).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmi(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&[1, 1, 1], &[1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn generated_topics_have_anchor_columns() {
        let sc = gen_corpus(&CorpusConfig::new(50, 40, 3, 0.0, 1)).unwrap();
        for (k, &a) in sc.anchors.iter().enumerate() {
            let col = sc.topic_matrix.column(a);
            assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 1);
            assert!(col[k] > 0.0);
        }
        for row in sc.topic_matrix.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}

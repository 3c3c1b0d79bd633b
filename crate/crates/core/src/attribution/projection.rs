//! Keyword embeddings (external vector files or PPMI co-occurrence
//! factorization) and their 3-D principal-component projection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::AttributionError;

/// Rank of the internally trained embeddings.
pub const INTERNAL_EMBEDDING_RANK: usize = 50;
pub const MIN_PROJECTED_KEYWORDS: usize = 4;
const PCA_MAX_ITER: usize = 100_000;
const PCA_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    ExternalVectors { dim: usize },
    InternalCooccurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub dim: usize,
    pub source: EmbeddingSource,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

/// Read `word v1 .. vd` lines. Blank lines are skipped; a repeated word keeps
/// its last vector.
pub fn parse_embeddings<R: BufRead>(reader: R) -> Result<Embeddings, AttributionError> {
    let mut vectors = BTreeMap::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| AttributionError::Io(e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| AttributionError::EmbeddingParse {
                line: line_no,
                message: "non-numeric or non-finite component".into(),
            })?;
        if values.is_empty() {
            return Err(AttributionError::EmbeddingParse {
                line: line_no,
                message: "no vector components".into(),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(AttributionError::EmbeddingParse {
                    line: line_no,
                    message: format!("expected {d} components, found {}", values.len()),
                })
            }
            _ => {}
        }
        if vectors.insert(word.to_lowercase(), values).is_some() {
            log::warn!("embedding line {line_no}: repeated word {word:?}, keeping the later vector");
        }
    }
    let dim = dim.ok_or_else(|| AttributionError::EmbeddingParse {
        line: 0,
        message: "empty embedding file".into(),
    })?;
    Ok(Embeddings {
        dim,
        source: EmbeddingSource::ExternalVectors { dim },
        vectors,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Remove the components of `v` along each (unit) vector in `basis`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes keep the result orthogonal to rounding level
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// Symmetric `n x n` matrix-vector product.
fn mat_vec(m: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// A unit vector orthogonal to `basis`, drawn from `rng`.
fn random_orthogonal(n: usize, basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        orthogonalize(&mut v, basis);
        if normalize(&mut v) > 1e-8 {
            return v;
        }
    }
}

/// Leading `k` eigenpairs of a symmetric positive semi-definite matrix by
/// block orthogonal iteration. Eigenvalues come out non-increasing.
fn top_eigen(m: &[f64], n: usize, k: usize, iterations: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let v = random_orthogonal(n, &q, &mut rng);
        q.push(v);
    }
    for _ in 0..iterations {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(k);
        for col in &q {
            let mut z = mat_vec(m, n, col);
            orthogonalize(&mut z, &next);
            if normalize(&mut z) < 1e-12 {
                z = random_orthogonal(n, &next, &mut rng);
            }
            next.push(z);
        }
        q = next;
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = q
        .into_iter()
        .map(|v| (dot(&v, &mat_vec(m, n, &v)).max(0.0), v))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.into_iter().unzip()
}

/// Train embeddings for `vocabulary` from positive PMI between each word and
/// the tokens within `window` positions of it in `docs`, factorized to
/// `rank` dimensions (fewer when the vocabulary is smaller).
pub fn internal_embeddings(
    docs: &[Vec<String>],
    vocabulary: &[String],
    window: usize,
    rank: usize,
    seed: u64,
) -> Result<Embeddings, AttributionError> {
    if window == 0 || rank == 0 {
        return Err(AttributionError::Invalid("window and rank must be positive".into()));
    }
    let vocab: BTreeSet<&str> = vocabulary.iter().map(String::as_str).collect();
    let mut rows: BTreeMap<&str, usize> = BTreeMap::new();
    let mut contexts: HashMap<&str, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for doc in docs {
        for (i, word) in doc.iter().enumerate() {
            if !vocab.contains(word.as_str()) {
                continue;
            }
            let next_row = rows.len();
            let r = *rows.entry(word.as_str()).or_insert(next_row);
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(doc.len());
            for (j, ctx) in doc.iter().enumerate().take(hi).skip(lo) {
                if j == i {
                    continue;
                }
                let next_ctx = contexts.len();
                let c = *contexts.entry(ctx.as_str()).or_insert(next_ctx);
                *cells.entry((r, c)).or_default() += 1.0;
            }
        }
    }
    let n = rows.len();
    if n == 0 {
        return Err(AttributionError::TooFewKeywords { need: 1, got: 0 });
    }
    let mut row_sum = vec![0.0; n];
    let mut col_sum = vec![0.0; contexts.len()];
    for (&(r, c), &v) in &cells {
        row_sum[r] += v;
        col_sum[c] += v;
    }
    let total: f64 = row_sum.iter().sum();
    // sparse PPMI rows, sorted by context so the Gram products are order-stable
    let mut ppmi: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(r, c), &v) in &cells {
        let pmi = (v * total / (row_sum[r] * col_sum[c])).ln();
        if pmi > 0.0 {
            ppmi[r].push((c, pmi));
        }
    }
    ppmi.iter_mut().for_each(|row| row.sort_by_key(|e| e.0));
    let sparse_dot = |a: &[(usize, f64)], b: &[(usize, f64)]| {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    };
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g = sparse_dot(&ppmi[i], &ppmi[j]);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let k = rank.min(n);
    let (values, vectors) = top_eigen(&gram, n, k, 300, seed);
    // left factor of the rank-k factorization: U sqrt(lambda)
    let scale: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    let embeddings = rows
        .into_iter()
        .map(|(word, r)| {
            let v = vectors.iter().zip(&scale).map(|(u, s)| u[r] * s).collect();
            (word.to_string(), v)
        })
        .collect();
    Ok(Embeddings {
        dim: k,
        source: EmbeddingSource::InternalCooccurrence,
        vectors: embeddings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProjection {
    pub source: EmbeddingSource,
    /// Embeddable keywords, first occurrence order.
    pub keywords: Vec<String>,
    pub coords: Vec<[f64; 3]>,
    /// Unit principal axes in embedding space.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Variance along each axis, non-increasing.
    pub explained_variance: [f64; 3],
    pub total_variance: f64,
    /// Requested keywords without a vector.
    pub missing: Vec<String>,
}

impl EmbeddingProjection {
    /// Map the projected point of keyword `i` back to embedding space.
    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let mut v = self.mean.clone();
        for (c, comp) in self.coords[i].iter().zip(&self.components) {
            v.iter_mut().zip(comp).for_each(|(x, y)| *x += c * y);
        }
        v
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("keyword\tpc1\tpc2\tpc3\n");
        for (k, c) in self.keywords.iter().zip(&self.coords) {
            out.push_str(&format!("{k}\t{}\t{}\t{}\n", c[0], c[1], c[2]));
        }
        out
    }
}

/// Project `keywords` onto the top three principal components of their
/// centered embedding matrix, found by power iteration with deflation.
pub fn pca_projection(
    keywords: &[String],
    emb: &Embeddings,
    seed: u64,
) -> Result<EmbeddingProjection, AttributionError> {
    if emb.dim < 3 {
        return Err(AttributionError::Invalid(format!(
            "embedding dimension {} is below 3",
            emb.dim
        )));
    }
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    let mut missing = Vec::new();
    for k in keywords {
        if !seen.insert(k.as_str()) {
            continue;
        }
        match emb.get(k) {
            Some(_) => kept.push(k.clone()),
            None => missing.push(k.clone()),
        }
    }
    if kept.len() < MIN_PROJECTED_KEYWORDS {
        return Err(AttributionError::TooFewKeywords {
            need: MIN_PROJECTED_KEYWORDS,
            got: kept.len(),
        });
    }
    let d = emb.dim;
    let n = kept.len();
    let rows: Vec<&[f64]> = kept
        .iter()
        .map(|k| emb.get(k).expect("kept keywords have vectors"))
        .collect();
    let mut mean = vec![0.0; d];
    for r in &rows {
        mean.iter_mut().zip(*r).for_each(|(m, x)| *m += x / n as f64);
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in &centered {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let total_variance = (0..d).map(|i| cov[i * d + i]).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut variances = [0.0; 3];
    let mut deflated = cov.clone();
    for slot in &mut variances {
        let mut v = random_orthogonal(d, &components, &mut rng);
        for _ in 0..PCA_MAX_ITER {
            let mut w = mat_vec(&deflated, d, &v);
            orthogonalize(&mut w, &components);
            if normalize(&mut w) < 1e-300 {
                // remaining spectrum is zero: any orthogonal direction will do
                break;
            }
            let diff = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            if diff < PCA_TOL {
                break;
            }
        }
        let lambda = dot(&v, &mat_vec(&cov, d, &v)).max(0.0);
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        *slot = lambda;
        components.push(v);
    }
    let coords = centered
        .iter()
        .map(|r| [dot(r, &components[0]), dot(r, &components[1]), dot(r, &components[2])])
        .collect();
    Ok(EmbeddingProjection {
        source: emb.source,
        keywords: kept,
        coords,
        components,
        mean,
        explained_variance: variances,
        total_variance,
        missing,
    })
}

/// The `k` words closest to `word` by cosine distance, ties alphabetical;
/// `None` when `word` has no vector.
pub fn nearest_neighbors(emb: &Embeddings, word: &str, k: usize) -> Option<Vec<(String, f64)>> {
    let q = emb.get(word)?;
    let qn = dot(q, q).sqrt();
    let mut out: Vec<(String, f64)> = emb
        .vectors
        .iter()
        .filter(|(w, _)| w.as_str() != word)
        .map(|(w, v)| {
            let denom = qn * dot(v, v).sqrt();
            let cos = if denom > 0.0 { dot(q, v) / denom } else { 0.0 };
            (w.clone(), 1.0 - cos)
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(k);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 * 0.05))
                    .collect()
            })
            .collect()
    }

    fn embeddings(rows: &[Vec<f64>]) -> (Vec<String>, Embeddings) {
        let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i:04}")).collect();
        let vectors = words.iter().cloned().zip(rows.iter().cloned()).collect();
        let dim = rows[0].len();
        (
            words,
            Embeddings {
                dim,
                source: EmbeddingSource::ExternalVectors { dim },
                vectors,
            },
        )
    }

    #[test]
    fn gaussian_cloud_matches_dense_eigensolver() {
        let rows = gaussian(200, 50, 7);
        let (words, emb) = embeddings(&rows);
        let p = pca_projection(&words, &emb, 1).unwrap();

        // oracle: covariance eigenvalues from a dense symmetric solver
        let x = DMatrix::from_fn(200, 50, |i, j| rows[i][j]);
        let mean = x.row_mean();
        let xc = DMatrix::from_fn(200, 50, |i, j| x[(i, j)] - mean[j]);
        let cov = xc.transpose() * &xc / 199.0;
        let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for j in 0..3 {
            assert!(
                (p.explained_variance[j] - ev[j]).abs() < 1e-6,
                "{j}: {} vs {}",
                p.explained_variance[j],
                ev[j]
            );
        }
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&p.components[a], &p.components[b]) - want).abs() < 1e-9);
            }
        }
        // projected variance matches the eigenvalue along each axis
        for j in 0..3 {
            let var = p.coords.iter().map(|c| c[j] * c[j]).sum::<f64>() / 199.0;
            assert!((var - p.explained_variance[j]).abs() < 1e-6);
        }
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
        assert!(p.explained_variance[1] >= p.explained_variance[2]);
    }

    #[test]
    fn affine_subspace_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 50;
        let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let basis: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let a: [f64; 3] = [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ];
                (0..d)
                    .map(|j| offset[j] + (0..3).map(|k| a[k] * basis[k][j]).sum::<f64>())
                    .collect()
            })
            .collect();
        let (words, emb) = embeddings(&rows);
        let p = pca_projection(&words, &emb, 0).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let err = p
                .reconstruct(i)
                .iter()
                .zip(row)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "row {i}: {err}");
        }
    }

    #[test]
    fn low_rank_still_gives_orthonormal_axes() {
        // four points on a line: one non-zero component
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 2.0 * i as f64, 0.0, 1.0]).collect();
        let (words, emb) = embeddings(&rows);
        let p = pca_projection(&words, &emb, 0).unwrap();
        assert!(p.explained_variance[1].abs() < 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&p.components[a], &p.components[b]) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicate_vectors_project_together() {
        let mut rows = gaussian(6, 5, 2);
        rows[4] = rows[1].clone();
        let (words, emb) = embeddings(&rows);
        let p = pca_projection(&words, &emb, 9).unwrap();
        assert_eq!(p.coords[1], p.coords[4]);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (words, emb) = embeddings(&gaussian(20, 8, 5));
        assert_eq!(
            pca_projection(&words, &emb, 4).unwrap(),
            pca_projection(&words, &emb, 4).unwrap()
        );
    }

    #[test]
    fn too_few_keywords() {
        let (mut words, emb) = embeddings(&gaussian(3, 5, 1));
        words.push("unknown".into());
        words.push("w0000".into());
        assert_eq!(
            pca_projection(&words, &emb, 0).unwrap_err(),
            AttributionError::TooFewKeywords { need: 4, got: 3 }
        );
    }

    #[test]
    fn parse_vectors() {
        let e = parse_embeddings("pain 1 0 0\n\nFamily 0 1 0.5\n".as_bytes()).unwrap();
        assert_eq!(e.dim, 3);
        assert_eq!(e.source, EmbeddingSource::ExternalVectors { dim: 3 });
        assert_eq!(e.get("family"), Some(&[0.0, 1.0, 0.5][..]));
        let err = parse_embeddings("a 1 2\nb 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, AttributionError::EmbeddingParse { line: 2, .. }));
        let err = parse_embeddings("a 1 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, AttributionError::EmbeddingParse { line: 1, .. }));
        assert!(parse_embeddings("".as_bytes()).is_err());
    }

    #[test]
    fn neighbors_by_cosine() {
        let e = parse_embeddings("a 1 0\nb 2 0.1\nc 0 1\nd 2 0\n".as_bytes()).unwrap();
        let nn = nearest_neighbors(&e, "a", 2).unwrap();
        assert_eq!(nn[0].0, "d");
        assert!(nn[0].1.abs() < 1e-15);
        assert_eq!(nn[1].0, "b");
        assert!(nearest_neighbors(&e, "zzz", 2).is_none());
    }

    fn docs() -> Vec<Vec<String>> {
        let raw = [
            "i feel sad and alone tonight",
            "so sad and alone at home",
            "my dad hit me at home",
            "dad yelled and hit me again",
            "school bully pushed me",
            "the bully at school again",
        ];
        raw.iter()
            .cycle()
            .take(60)
            .map(|s| s.split(' ').map(String::from).collect())
            .collect()
    }

    #[test]
    fn internal_embeddings_group_shared_contexts() {
        let vocab: Vec<String> = ["sad", "alone", "dad", "hit", "bully", "school"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let e = internal_embeddings(&docs(), &vocab, 2, INTERNAL_EMBEDDING_RANK, 11).unwrap();
        assert_eq!(e.source, EmbeddingSource::InternalCooccurrence);
        assert_eq!(e.dim, 6);
        assert_eq!(nearest_neighbors(&e, "sad", 1).unwrap()[0].0, "alone");
        assert_eq!(nearest_neighbors(&e, "bully", 1).unwrap()[0].0, "school");
        assert_eq!(
            e,
            internal_embeddings(&docs(), &vocab, 2, INTERNAL_EMBEDDING_RANK, 11).unwrap()
        );
    }

    #[test]
    fn internal_embeddings_full_rank() {
        let vocab: Vec<String> = ["sad", "alone", "dad", "hit"].iter().map(|s| s.to_string()).collect();
        let e = internal_embeddings(&docs(), &vocab, 2, 10, 0).unwrap();
        assert_eq!(e.dim, 4);
        let cos = |a: &str, b: &str| {
            let (x, y) = (e.get(a).unwrap(), e.get(b).unwrap());
            dot(x, y) / (dot(x, x) * dot(y, y)).sqrt()
        };
        assert!(cos("sad", "alone") > cos("sad", "dad"));
        assert!(cos("dad", "hit") > cos("dad", "alone"));
    }
}

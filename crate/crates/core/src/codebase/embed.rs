use serde::{Deserialize, Serialize};

pub const EMBED_DIMS: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Bucket and sign a token hashes to.
pub fn token_slot(token: &str) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let sign = if h & (1 << 8) == 0 { 1.0 } else { -1.0 };
    ((h % EMBED_DIMS as u64) as usize, sign)
}

/// Unit-length (or all-zero) feature-hash vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn zero() -> Self {
        Embedding(vec![0.0; EMBED_DIMS])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| *x == 0.0)
    }
}

/// Signed per-bucket token counts, i.e. the embedding before normalization.
pub fn token_counts(text: &str) -> Vec<i64> {
    let mut v = vec![0i64; EMBED_DIMS];
    for token in tokenize(text) {
        let (i, sign) = token_slot(&token);
        v[i] += sign as i64;
    }
    v
}

pub fn embed(text: &str) -> Embedding {
    let counts = token_counts(text);
    let norm = (counts.iter().map(|c| c * c).sum::<i64>() as f64).sqrt();
    let v = counts
        .iter()
        .map(|c| if norm > 0.0 { *c as f64 / norm } else { 0.0 })
        .collect();
    Embedding(v)
}

/// Cosine similarity of two texts kept as an exact fraction of their token
/// counts. Mathematically equal similarities compare equal, which float
/// cosines of normalized vectors do not guarantee, so rankings can break
/// ties by id reliably.
#[derive(Debug, Clone, Copy)]
pub struct Similarity {
    dot: i128,
    /// Product of the squared norms.
    norms: i128,
}

impl Similarity {
    pub fn between(a: &str, b: &str) -> Self {
        let (a, b) = (token_counts(a), token_counts(b));
        let sq = |v: &[i64]| v.iter().map(|x| i128::from(*x).pow(2)).sum::<i128>();
        let dot = a
            .iter()
            .zip(&b)
            .map(|(x, y)| i128::from(*x) * i128::from(*y))
            .sum();
        Similarity {
            dot,
            norms: sq(&a) * sq(&b),
        }
    }

    pub fn value(&self) -> f64 {
        if self.norms == 0 {
            0.0
        } else {
            self.dot as f64 / (self.norms as f64).sqrt()
        }
    }

    fn sign(&self) -> i8 {
        if self.norms == 0 {
            0
        } else {
            self.dot.signum() as i8
        }
    }
}

impl Ord for Similarity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (sa, sb) = (self.sign(), other.sign());
        if sa != sb || sa == 0 {
            return sa.cmp(&sb);
        }
        // Compare dot_a / sqrt(n_a) with dot_b / sqrt(n_b) by squaring.
        let lhs = self.dot * self.dot * other.norms;
        let rhs = other.dot * other.dot * self.norms;
        if sa > 0 {
            lhs.cmp(&rhs)
        } else {
            rhs.cmp(&lhs)
        }
    }
}

impl PartialOrd for Similarity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Similarity {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Similarity {}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

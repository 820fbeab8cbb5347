//! Input generators shared by the benchmarks.

use webforge_core::{ScoreKind, ScoreRecord};

/// Deterministic pseudo-random stream (xorshift), enough for shaping inputs.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

/// A trajectory's worth of score records spread over the three kinds.
pub fn score_records(n: usize, seed: u64) -> Vec<ScoreRecord> {
    let mut s = Stream::new(seed);
    (0..n)
        .map(|step| {
            let kind = ScoreKind::ALL[s.below(3) as usize];
            let value = match kind {
                ScoreKind::BackendFunctionality => s.below(3) as f64 - 1.0,
                _ => 1.0 + s.below(5) as f64,
            };
            ScoreRecord::new(kind, value, step).expect("values are in range")
        })
        .collect()
}

const WORDS: &[&str] = &[
    "build", "a", "web", "app", "for", "tracking", "team", "tasks", "with", "due", "dates", "and", "comments", "where",
    "users", "can", "sign", "in", "share", "boards", "browse", "recipes", "rate", "movies", "plan", "trips",
];

/// `n` instruction-like sentences of 8 to 30 words.
pub fn instructions(n: usize, seed: u64) -> Vec<String> {
    let mut s = Stream::new(seed);
    (0..n)
        .map(|_| {
            let len = 8 + s.below(23) as usize;
            (0..len).map(|_| WORDS[s.below(WORDS.len() as u64) as usize]).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

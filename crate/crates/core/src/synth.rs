//! Synthetic corpora with a planted vocabulary, for tests and benchmarks.
//!
//! Every class owns a few marker words that occur in each of its documents
//! and nowhere else; the rest of a document is drawn from a shared filler
//! vocabulary.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub classes: usize,
    pub docs_per_class: usize,
    /// Marker words per class.
    pub markers: usize,
    pub filler_vocabulary: usize,
    pub filler_per_doc: usize,
    pub seed: u64,
}

impl Default for PlantedCorpus {
    fn default() -> Self {
        PlantedCorpus {
            classes: 4,
            docs_per_class: 10,
            markers: 3,
            filler_vocabulary: 400,
            filler_per_doc: 6,
            seed: 7,
        }
    }
}

/// Letters-only pseudo-word; distinct `n` give distinct words.
fn word(prefix: &str, mut n: usize) -> String {
    let mut s = String::from(prefix);
    loop {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    s
}

impl PlantedCorpus {
    pub fn class_name(&self, c: usize) -> String {
        format!("topic{}", word("", c))
    }

    pub fn marker(&self, class: usize, m: usize) -> String {
        word("mark", class * self.markers + m)
    }

    /// Document texts per class.
    pub fn generate(&self) -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let filler: Vec<String> = (0..self.filler_vocabulary).map(|i| word("fill", i)).collect();
        (0..self.classes)
            .map(|c| {
                (0..self.docs_per_class)
                    .map(|_| {
                        let mut words: Vec<String> =
                            (0..self.markers).map(|m| self.marker(c, m)).collect();
                        for _ in 0..self.filler_per_doc {
                            words.push(filler[rng.random_range(0..filler.len())].clone());
                        }
                        words.shuffle(&mut rng);
                        words.join(" ")
                    })
                    .collect()
            })
            .collect()
    }

    /// Writes `<root>/<class>/<nnn>.txt`.
    pub fn write(&self, root: &Path) -> Result<()> {
        for (c, docs) in self.generate().into_iter().enumerate() {
            let dir = root.join(self.class_name(c));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (i, text) in docs.iter().enumerate() {
                let path = dir.join(format!("{i:03}.txt"));
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

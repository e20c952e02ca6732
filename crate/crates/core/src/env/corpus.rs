//! Distraction excerpts appended to observations.

use std::path::Path;

use rand::Rng;

const BUILTIN: &str = include_str!("../../assets/distractions.txt");

/// Paragraph-length excerpts, one per blank-line separated block of text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistractionCorpus {
    excerpts: Vec<String>,
}

impl DistractionCorpus {
    pub fn from_text(text: &str) -> Self {
        let excerpts = text
            .split("\n\n")
            .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|p| !p.is_empty())
            .collect();
        Self { excerpts }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn empty() -> Self {
        Self { excerpts: Vec::new() }
    }

    pub fn excerpts(&self) -> &[String] {
        &self.excerpts
    }

    pub fn len(&self) -> usize {
        self.excerpts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excerpts.is_empty()
    }

    /// Uniformly chosen excerpt, or `None` when empty.
    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&str> {
        if self.excerpts.is_empty() {
            None
        } else {
            Some(&self.excerpts[rng.random_range(0..self.excerpts.len())])
        }
    }
}

impl Default for DistractionCorpus {
    /// The bundled corpus.
    fn default() -> Self {
        Self::from_text(BUILTIN)
    }
}

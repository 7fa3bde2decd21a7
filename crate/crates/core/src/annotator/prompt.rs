use crate::corpus::Paper;
use crate::io::sha256_hex;

/// The rubric system prompt sent with every annotation request.
pub const SYSTEM_PROMPT: &str = include_str!("system_prompt.txt");

/// A rendered two-message chat prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: &'static str,
    pub user: String,
}

impl Prompt {
    /// System and user messages as one text, in send order.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    /// Stable content hash of both messages.
    pub fn hash(&self) -> String {
        let mut buf = Vec::with_capacity(self.system.len() + self.user.len() + 1);
        buf.extend_from_slice(self.system.as_bytes());
        buf.push(0);
        buf.extend_from_slice(self.user.as_bytes());
        sha256_hex(&buf)
    }
}

pub fn build_prompt(seed: &Paper, candidate: &Paper) -> Prompt {
    Prompt {
        system: SYSTEM_PROMPT,
        user: format!(
            "Seed paper\nTitle: {}\nAbstract: {}\n\nCandidate paper\nTitle: {}\nAbstract: {}\n",
            seed.title.trim(),
            seed.abstract_text.trim(),
            candidate.title.trim(),
            candidate.abstract_text.trim(),
        ),
    }
}

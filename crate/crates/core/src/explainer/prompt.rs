use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv1a64;

/// Instruction given to the explanation generator, verbatim.
pub const EXPLAIN_INSTRUCTION: &str = "Read the given text and generate a short explanation of the emotional or situational context behind the sentence. The explanation should be concise and relevant to the sentence. Do not explicitly mention emotions but focus on the implications behind the sentence.";

pub const CANONICAL_VERSION: &str = "explain-v1";

/// How the instruction and the input text are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLayout {
    /// `{instruction}\n\nText: {text}\nExplanation:`
    TextThenExplanation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub instruction: String,
    pub layout: PromptLayout,
}

/// Versions shipped with the crate and the content digest each one pins.
const REGISTERED: &[(&str, &str, PromptLayout)] = &[(
    CANONICAL_VERSION,
    EXPLAIN_INSTRUCTION,
    PromptLayout::TextThenExplanation,
)];

impl PromptTemplate {
    pub fn canonical() -> Self {
        PromptTemplate {
            version: CANONICAL_VERSION.to_string(),
            instruction: EXPLAIN_INSTRUCTION.to_string(),
            layout: PromptLayout::TextThenExplanation,
        }
    }

    /// Look up a registered template by version.
    pub fn by_version(version: &str) -> Result<Self> {
        REGISTERED
            .iter()
            .find(|(v, _, _)| *v == version)
            .map(|(v, instruction, layout)| PromptTemplate {
                version: v.to_string(),
                instruction: instruction.to_string(),
                layout: *layout,
            })
            .ok_or_else(|| Error::Template {
                version: version.to_string(),
                message: "unknown prompt template version".into(),
            })
    }

    /// Digest of instruction and layout; two templates with the same
    /// version must have the same fingerprint.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a64::new();
        h.update(self.instruction.as_bytes())
            .update(&[0x1f])
            .update(format!("{:?}", self.layout).as_bytes());
        h.finish()
    }

    /// A registered version must carry exactly its registered content;
    /// edited content needs a new version string.
    pub fn validate(&self) -> Result<()> {
        let err = |message: &str| Error::Template {
            version: self.version.clone(),
            message: message.to_string(),
        };
        if self.version.trim().is_empty() {
            return Err(err("version must be non-empty"));
        }
        if self.instruction.trim().is_empty() {
            return Err(err("instruction must be non-empty"));
        }
        if let Some((_, instruction, layout)) = REGISTERED.iter().find(|(v, _, _)| *v == self.version) {
            if self.instruction != *instruction || self.layout != *layout {
                return Err(err(
                    "content differs from the registered template; bump the version",
                ));
            }
        }
        Ok(())
    }
}

pub fn build_prompt(template: &PromptTemplate, text: &str) -> Result<String> {
    if text.is_empty() {
        return Err(Error::Argument("prompt text must be non-empty".into()));
    }
    match template.layout {
        PromptLayout::TextThenExplanation => {
            let mut out = String::with_capacity(template.instruction.len() + text.len() + 24);
            out.push_str(&template.instruction);
            out.push_str("\n\nText: ");
            out.push_str(text);
            out.push_str("\nExplanation:");
            Ok(out)
        }
    }
}

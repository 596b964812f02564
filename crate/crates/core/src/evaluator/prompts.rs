//! Versioned prompt templates.
//!
//! A template file has a `=== system ===` section and a `=== user ===` section;
//! `{{text}}` in either is replaced by the narrative. The repair template is a
//! plain body with an `{{error}}` placeholder.

use std::path::Path;

use super::{prompt_hash, ChatMessage, EvaluatorError, Protocol};

const SYSTEM_MARK: &str = "=== system ===";
const USER_MARK: &str = "=== user ===";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn hash(&self) -> String {
        prompt_hash(&self.system, &self.user)
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage::new("system", self.system.clone()),
            ChatMessage::new("user", self.user.clone()),
        ]
    }
}

impl PromptTemplate {
    pub fn parse(name: &str, raw: &str) -> Result<Self, EvaluatorError> {
        let fail = |reason: &str| EvaluatorError::Template {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let sys_at = raw.find(SYSTEM_MARK).ok_or_else(|| fail("no system section"))?;
        let user_at = raw.find(USER_MARK).ok_or_else(|| fail("no user section"))?;
        if user_at < sys_at {
            return Err(fail("user section precedes system section"));
        }
        let system = raw[sys_at + SYSTEM_MARK.len()..user_at].trim().to_string();
        let user = raw[user_at + USER_MARK.len()..].trim().to_string();
        if !system.contains("{{text}}") && !user.contains("{{text}}") {
            return Err(fail("no {{text}} placeholder"));
        }
        Ok(PromptTemplate {
            name: name.to_string(),
            system,
            user,
        })
    }

    pub fn render(&self, text: &str) -> RenderedPrompt {
        RenderedPrompt {
            system: self.system.replace("{{text}}", text),
            user: self.user.replace("{{text}}", text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairTemplate {
    pub body: String,
}

impl RepairTemplate {
    pub fn parse(raw: &str) -> Result<Self, EvaluatorError> {
        if !raw.contains("{{error}}") {
            return Err(EvaluatorError::Template {
                name: "repair".into(),
                reason: "no {{error}} placeholder".into(),
            });
        }
        Ok(RepairTemplate {
            body: raw.trim().to_string(),
        })
    }

    pub fn render_repair(&self, error: &str) -> String {
        self.body.replace("{{error}}", error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub propositional: PromptTemplate,
    pub labov: PromptTemplate,
    pub clinical: PromptTemplate,
    pub repair: RepairTemplate,
}

const FILES: [(&str, &str); 4] = [
    ("propositional", "propositional.v1.txt"),
    ("labov", "labov.v1.txt"),
    ("clinical", "clinical.v1.txt"),
    ("repair", "repair.v1.txt"),
];

impl PromptSet {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        Self::from_sources([
            include_str!("../../prompts/propositional.v1.txt"),
            include_str!("../../prompts/labov.v1.txt"),
            include_str!("../../prompts/clinical.v1.txt"),
            include_str!("../../prompts/repair.v1.txt"),
        ])
        .expect("bundled templates parse")
    }

    /// Loads `propositional.v1.txt`, `labov.v1.txt`, `clinical.v1.txt` and
    /// `repair.v1.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, EvaluatorError> {
        let mut sources = Vec::with_capacity(4);
        for (name, file) in FILES {
            let path = dir.join(file);
            let raw = std::fs::read_to_string(&path).map_err(|e| EvaluatorError::Template {
                name: name.to_string(),
                reason: format!("{}: {e}", path.display()),
            })?;
            sources.push(raw);
        }
        Self::from_sources([&sources[0], &sources[1], &sources[2], &sources[3]])
    }

    fn from_sources(src: [&str; 4]) -> Result<Self, EvaluatorError> {
        Ok(PromptSet {
            propositional: PromptTemplate::parse("propositional", src[0])?,
            labov: PromptTemplate::parse("labov", src[1])?,
            clinical: PromptTemplate::parse("clinical", src[2])?,
            repair: RepairTemplate::parse(src[3])?,
        })
    }

    pub fn for_protocol(&self, p: Protocol) -> &PromptTemplate {
        match p {
            Protocol::Propositional => &self.propositional,
            Protocol::Labov => &self.labov,
            Protocol::Clinical => &self.clinical,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_render() {
        let set = PromptSet::builtin();
        for p in Protocol::ALL {
            let r = set.for_protocol(*p).render("那天我回家了。");
            assert!(r.user.contains("那天我回家了。"));
            assert!(!r.user.contains("{{text}}"));
            assert_eq!(r.hash().len(), 64);
        }
        assert_ne!(
            set.labov.render("a").hash(),
            set.labov.render("b").hash()
        );
        assert!(set.repair.render_repair("bad").contains("bad"));
    }

    #[test]
    fn malformed_templates_rejected() {
        assert!(PromptTemplate::parse("x", "no sections {{text}}").is_err());
        assert!(PromptTemplate::parse("x", "=== system ===\na\n=== user ===\nb").is_err());
        assert!(RepairTemplate::parse("fix it").is_err());
    }
}

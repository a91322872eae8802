//! Versioned prompt templates, one per gateway role.
//!
//! File format:
//!
//! ```text
//! version: <n>
//! --- system ---
//! <system prompt>
//! --- user ---
//! <user prompt with {slot} placeholders>
//! ```

use std::collections::BTreeSet;

use super::{GatewayError, Role};

const ADAPTER: &str = include_str!("../../data/templates/adapter.txt");
const PLANNER: &str = include_str!("../../data/templates/planner.txt");
const VALIDATOR: &str = include_str!("../../data/templates/validator.txt");
const REFLECTOR: &str = include_str!("../../data/templates/reflector.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub role: Role,
    pub version: u32,
    pub system: String,
    pub user: String,
}

impl Template {
    pub fn parse(role: Role, text: &str) -> Result<Self, GatewayError> {
        let bad = |m: &str| GatewayError::Config(format!("{} template: {m}", role.as_str()));
        let mut lines = text.lines();
        let version = lines
            .next()
            .and_then(|l| l.strip_prefix("version:"))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("missing version line"))?;
        let rest: Vec<&str> = lines.collect();
        let sys_at = rest
            .iter()
            .position(|l| l.trim() == "--- system ---")
            .ok_or_else(|| bad("missing system section"))?;
        let user_at = rest
            .iter()
            .position(|l| l.trim() == "--- user ---")
            .ok_or_else(|| bad("missing user section"))?;
        if user_at < sys_at {
            return Err(bad("user section precedes system section"));
        }
        Ok(Self {
            role,
            version,
            system: rest[sys_at + 1..user_at].join("\n").trim().to_string(),
            user: rest[user_at + 1..].join("\n").trim().to_string(),
        })
    }

    pub fn builtin(role: Role) -> Self {
        let text = match role {
            Role::Adapter => ADAPTER,
            Role::Planner => PLANNER,
            Role::Validator => VALIDATOR,
            Role::Reflector => REFLECTOR,
        };
        Self::parse(role, text).expect("built-in templates parse")
    }

    /// Placeholder names in the user prompt.
    pub fn slots(&self) -> BTreeSet<String> {
        let mut slots = BTreeSet::new();
        let mut rest = self.user.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) => {
                    let name = &after[..close];
                    if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                        slots.insert(name.to_string());
                    }
                    rest = &after[close + 1..];
                }
                None => break,
            }
        }
        slots
    }

    /// Fills every slot; a missing variable is an error.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, GatewayError> {
        let mut out = self.user.clone();
        for slot in self.slots() {
            let value = vars
                .iter()
                .find(|(k, _)| *k == slot)
                .map(|(_, v)| *v)
                .ok_or_else(|| GatewayError::MissingVariable(slot.clone()))?;
            out = out.replace(&format!("{{{slot}}}"), value);
        }
        Ok(out)
    }
}

//! Prompt templates. Slots are written `{name}`.

use super::backend::Capability;

pub const CLUE: &str = include_str!("../../prompts/clue.txt");
pub const ACT: &str = include_str!("../../prompts/act.txt");
pub const ACT_RETRY: &str = include_str!("../../prompts/act_retry.txt");
pub const REASON: &str = include_str!("../../prompts/reason.txt");
pub const EVAL: &str = include_str!("../../prompts/eval.txt");
pub const REFINE: &str = include_str!("../../prompts/refine.txt");
pub const SUMMARIZE: &str = include_str!("../../prompts/summarize.txt");

pub fn template(capability: Capability) -> &'static str {
    match capability {
        Capability::Clue => CLUE,
        Capability::Act => ACT,
        Capability::Reason => REASON,
        Capability::Eval => EVAL,
        Capability::Refine => REFINE,
        Capability::Summarize => SUMMARIZE,
    }
}

/// Fill `{slot}` placeholders. Unknown slots are left as written.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match slots.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + close + 2]),
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Names of the slots a template uses.
pub fn slots(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let name = &after[..close];
        if !names.contains(&name) {
            names.push(name);
        }
        rest = &after[close + 1..];
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_and_keeps_unknown() {
        assert_eq!(render("a {x} b {y}", &[("x", "1")]), "a 1 b {y}");
        assert_eq!(render("{x}{x}", &[("x", "z")]), "zz");
        assert_eq!(render("open { only", &[]), "open { only");
    }

    #[test]
    fn template_slots_are_pinned() {
        assert_eq!(slots(CLUE), ["frame_count", "subtitles", "question", "options"]);
        assert_eq!(slots(ACT), ["frame_count", "subtitles", "question", "options"]);
        assert_eq!(slots(ACT_RETRY), ["question", "options", "labels"]);
        assert_eq!(slots(REASON), ["frame_count", "question", "answer"]);
        assert_eq!(slots(EVAL), ["question", "options", "responses"]);
        assert_eq!(slots(REFINE), ["question", "options", "clue", "responses", "pruned"]);
        assert_eq!(slots(SUMMARIZE), ["answer", "question", "options", "clues", "responses"]);
    }
}

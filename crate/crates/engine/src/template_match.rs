//! Recover slot values from a rendered prompt.

use std::collections::BTreeMap;

use regex::Regex;

use imagine_core::PromptTemplate;

/// Inverse of [`PromptTemplate::render`]: if `prompt` could have been
/// rendered from `template`, return the value of each slot (first
/// occurrence). Slots match lazily, so adjacent slots are ambiguous.
pub fn match_template(template: &PromptTemplate, prompt: &str) -> Option<BTreeMap<String, String>> {
    let mut pattern = String::from("(?s)^");
    let mut names = Vec::new();
    let mut rest = template.text.as_str();
    while !rest.is_empty() {
        let Some(i) = rest.find(['{', '}']) else {
            pattern.push_str(&regex::escape(rest));
            break;
        };
        pattern.push_str(&regex::escape(&rest[..i]));
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            pattern.push_str(&regex::escape(&tail[..1]));
            rest = &tail[2..];
            continue;
        }
        let end = tail.find('}')?;
        let name = &tail[1..end];
        if names.iter().any(|n| n == name) {
            pattern.push_str("(?:.*?)");
        } else {
            pattern.push_str("(.*?)");
            names.push(name.to_string());
        }
        rest = &tail[end + 1..];
    }
    pattern.push('$');
    let re = Regex::new(&pattern).ok()?;
    let caps = re.captures(prompt)?;
    Some(
        names
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, caps.get(i + 1).map_or("", |m| m.as_str()).to_string()))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_rendered_values() {
        let t = PromptTemplate::new("Talk to a {persona} about {topic}. The {persona} is {{ok}}.").unwrap();
        let vals: BTreeMap<String, String> = [("persona", "layman"), ("topic", "Q-learning")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let prompt = t.render(&vals).unwrap();
        assert_eq!(match_template(&t, &prompt), Some(vals));
        assert_eq!(match_template(&t, "something else"), None);
    }
}

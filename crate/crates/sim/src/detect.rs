//! Catalog mentions in free text.

use std::collections::HashMap;

use regex::Regex;

use imagine_core::{CatalogItem, Category, Speaker, TaskDescription, Utterance};

/// Case-insensitive whole-word matcher over a set of names. Among matches the
/// earliest wins, then the longest.
#[derive(Debug, Clone)]
struct NameMatcher {
    re: Option<Regex>,
    lookup: HashMap<String, usize>,
}

impl NameMatcher {
    fn new<'a>(names: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let mut lookup = HashMap::new();
        for (name, i) in names {
            let key = name.trim().to_lowercase();
            if !key.is_empty() {
                lookup.entry(key).or_insert(i);
            }
        }
        let mut keys: Vec<&String> = lookup.keys().collect();
        keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let re = (!keys.is_empty()).then(|| {
            let alts: Vec<String> = keys.iter().map(|k| regex::escape(k)).collect();
            Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).expect("escaped alternation")
        });
        NameMatcher { re, lookup }
    }

    fn find(&self, text: &str) -> Option<usize> {
        let m = self.re.as_ref()?.find(text)?;
        self.lookup.get(&m.as_str().to_lowercase()).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// Item names and their aliases.
    #[default]
    Aliases,
    /// Canonical item names only.
    NamesOnly,
}

#[derive(Debug, Clone)]
pub struct Detector {
    items: Vec<CatalogItem>,
    categories: Vec<Category>,
    item_names: NameMatcher,
    category_names: NameMatcher,
}

impl Detector {
    pub fn new(task: &TaskDescription, mode: DetectionMode) -> Self {
        let item_names = NameMatcher::new(task.catalog.iter().enumerate().flat_map(|(i, it)| {
            let aliases: &[String] = match mode {
                DetectionMode::Aliases => &it.aliases,
                DetectionMode::NamesOnly => &[],
            };
            std::iter::once(it.name.as_str())
                .chain(aliases.iter().map(String::as_str))
                .map(move |n| (n, i))
        }));
        let category_names = NameMatcher::new(task.categories.iter().enumerate().flat_map(|(i, c)| {
            std::iter::once(c.name.as_str())
                .chain(c.aliases.iter().map(String::as_str))
                .map(move |n| (n, i))
        }));
        Detector {
            items: task.catalog.clone(),
            categories: task.categories.clone(),
            item_names,
            category_names,
        }
    }

    /// Catalog item mentioned in `text`. Categories never count.
    pub fn recommendation(&self, text: &str) -> Option<&CatalogItem> {
        self.item_names.find(text).map(|i| &self.items[i])
    }

    pub fn category(&self, text: &str) -> Option<&Category> {
        self.category_names.find(text).map(|i| &self.categories[i])
    }
}

/// Item recommended by an agent utterance, if any.
pub fn detect_recommendation(utterance: &Utterance, task: &TaskDescription) -> Option<CatalogItem> {
    if utterance.speaker != Speaker::Agent {
        return None;
    }
    Detector::new(task, DetectionMode::Aliases)
        .recommendation(&utterance.text)
        .cloned()
}

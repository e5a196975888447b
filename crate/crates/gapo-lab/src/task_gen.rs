//! Synthetic selection tasks: vocabulary, prompts, rendering, parsing.
//!
//! The task universe is a fixed vocabulary of opaque tokens: a handful
//! of reserved control tokens, one token per prompt template, one token
//! per category name, and the category item pools themselves. A prompt
//! either shows an explicit list of items drawn from one category
//! (`ListSelection`) or asks for any member of a named category
//! (`OpenEnded`). A well-formed response is exactly
//! `<answer> item </answer>`, optionally followed by end-of-sequence;
//! anything else is invalid. Parsing is strict on purpose: the reward
//! layer depends on an unambiguous valid/invalid verdict.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::{child_rng, fnv1a};

/// Index into the vocabulary.
pub type TokenId = usize;

// ---- Reserved control tokens ----

/// Opening answer tag, rendered as `<answer>`.
pub const TOK_ANSWER_OPEN: TokenId = 0;
/// Closing answer tag, rendered as `</answer>`.
pub const TOK_ANSWER_CLOSE: TokenId = 1;
/// End of sequence.
pub const TOK_EOS: TokenId = 2;
/// Padding / placeholder.
pub const TOK_PAD: TokenId = 3;
/// Number of reserved tokens preceding templates, categories and items.
pub const RESERVED_TOKENS: usize = 4;

/// Longest list a prompt may display; positional parameters in the MLP
/// policy are sized against this bound.
pub const MAX_LIST_LEN: usize = 12;

// ---- Vocabulary ----

/// One category: its name token and its item pool.
#[derive(Debug, Clone)]
pub struct Category {
    pub name: String,
    pub token: TokenId,
    pub items: Vec<TokenId>,
}

/// One prompt template: its token and display text. Open-ended template
/// texts contain `{}` where the category name is substituted.
#[derive(Debug, Clone)]
pub struct Template {
    pub token: TokenId,
    pub text: String,
}

/// The closed token universe for a run.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    names: Vec<String>,
    categories: Vec<Category>,
    list_templates: Vec<Template>,
    open_templates: Vec<Template>,
    /// token id -> index into `categories` for item tokens.
    item_category: Vec<Option<usize>>,
}

/// Suffix appended to every rendered prompt text, mirroring the format
/// instruction a chat model would receive.
pub const FORMAT_SUFFIX: &str =
    "Format your response as follows: <answer>selected_item</answer>";

const LIST_TEMPLATE_TEXTS: [&str; 6] = [
    "Pick exactly one option, ensuring uniform selection:",
    "Please select one from these options:",
    "Take one from these choices:",
    "Please randomly select one option with equal probability:",
    "Instruction: please pick one from the following list:",
    "Please choose just one from the list:",
];

const OPEN_TEMPLATE_TEXTS: [&str; 3] = [
    "Name exactly one of the {}, any one you like.",
    "Please mention a single example from the {}.",
    "Give one example of the {}, chosen at random.",
];

/// Built-in category pools. The first eight are intended for training;
/// the final ten are conventionally held out for generalization
/// evaluation, but any subset may be selected in a dataset config.
const CATEGORY_POOLS: [(&str, &[&str]); 18] = [
    (
        "animals",
        &[
            "otter", "heron", "badger", "lynx", "ibis", "marmot", "gecko", "bison", "tapir",
            "osprey", "stoat", "civet", "okapi", "vole",
        ],
    ),
    (
        "countries",
        &[
            "Japan", "Brazil", "Kenya", "Norway", "Chile", "Vietnam", "Portugal", "Canada",
            "Morocco", "Iceland", "Peru", "Latvia", "Nepal", "Ghana",
        ],
    ),
    (
        "emotions",
        &[
            "joy", "sorrow", "awe", "envy", "calm", "dread", "pride", "relief", "longing",
            "wonder", "guilt", "hope", "boredom", "delight",
        ],
    ),
    (
        "words",
        &[
            "lantern", "meadow", "copper", "whisper", "orchard", "velvet", "thimble", "harbor",
            "ember", "saddle", "ripple", "parchment", "attic", "compass",
        ],
    ),
    (
        "foods",
        &[
            "dumpling", "bagel", "risotto", "taco", "chowder", "falafel", "pancake", "samosa",
            "gumbo", "pretzel", "sashimi", "goulash", "scone", "paella",
        ],
    ),
    (
        "letters",
        &[
            "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "N",
        ],
    ),
    (
        "numbers",
        &[
            "3827", "5061", "7634", "1498", "9250", "2713", "6085", "4172", "8346", "1930",
            "5507", "7261", "3694", "8815",
        ],
    ),
    (
        "vehicles",
        &[
            "tram", "kayak", "scooter", "glider", "ferry", "rickshaw", "snowplow", "zeppelin",
            "unicycle", "trawler", "sidecar", "gondola", "minivan", "forklift",
        ],
    ),
    (
        "planets",
        &[
            "Mercury", "Venus", "Earth", "Mars", "Jupiter", "Saturn", "Uranus", "Neptune",
            "Pluto", "Ceres", "Eris", "Haumea", "Makemake", "Sedna",
        ],
    ),
    (
        "instruments",
        &[
            "cello", "oboe", "banjo", "marimba", "accordion", "sitar", "piccolo", "timpani",
            "mandolin", "bassoon", "ukulele", "zither", "cornet", "dulcimer",
        ],
    ),
    (
        "books",
        &[
            "The Glass Harbor",
            "A Ledger of Storms",
            "The Cartographer's Daughter",
            "Salt and Cinder",
            "The Quiet Orchard",
            "Letters to a Lighthouse",
            "The Clockmaker's Garden",
            "Night Trains North",
            "The Paper Aviary",
            "Among Tall Grasses",
            "The Winter Archivist",
            "A Field Guide to Leaving",
            "The Last Ferryman",
            "Songs for the Tide",
        ],
    ),
    (
        "celebrities",
        &[
            "Mara Ellison",
            "Theo Navarro",
            "Ivy Castellan",
            "Rhys Calloway",
            "Nadia Okafor",
            "Julian Hartwell",
            "Priya Raman",
            "Felix Moreau",
            "Sofia Lindqvist",
            "Dante Reyes",
            "Clara Voss",
            "Emre Dalman",
            "Lena Petrova",
            "Marcus Tilley",
        ],
    ),
    (
        "flowers",
        &[
            "tulip", "peony", "lupine", "dahlia", "freesia", "zinnia", "aster", "camellia",
            "foxglove", "marigold", "anemone", "hyacinth", "begonia", "clematis",
        ],
    ),
    (
        "colors",
        &[
            "crimson",
            "teal",
            "ochre",
            "indigo",
            "sage",
            "maroon",
            "periwinkle",
            "amber",
            "slate",
            "fuchsia",
            "olive",
            "cobalt",
            "coral",
            "mauve",
        ],
    ),
    (
        "languages",
        &[
            "Finnish",
            "Swahili",
            "Tagalog",
            "Basque",
            "Quechua",
            "Maori",
            "Icelandic",
            "Khmer",
            "Yoruba",
            "Catalan",
            "Mongolian",
            "Welsh",
            "Estonian",
            "Farsi",
        ],
    ),
    (
        "cities",
        &[
            "Lisbon",
            "Osaka",
            "Cusco",
            "Tallinn",
            "Marrakesh",
            "Wellington",
            "Bergen",
            "Valparaiso",
            "Hanoi",
            "Tbilisi",
            "Quebec",
            "Ljubljana",
            "Dakar",
            "Adelaide",
        ],
    ),
    (
        "sports",
        &[
            "curling",
            "fencing",
            "badminton",
            "rowing",
            "biathlon",
            "squash",
            "handball",
            "archery",
            "lacrosse",
            "judo",
            "snooker",
            "netball",
            "triathlon",
            "bouldering",
        ],
    ),
    (
        "movies",
        &[
            "Paper Comet",
            "The Salt Orchard",
            "Harbor of Echoes",
            "Midnight Tramline",
            "The Violet Hour",
            "Cartography of Rain",
            "The Tin Astronaut",
            "Gardens Under Glass",
            "The Long Thaw",
            "Static and Starlight",
            "The Borrowed Coast",
            "A Theory of Kites",
            "The Ninth Lantern",
            "Driftwood Summer",
        ],
    ),
];

/// Category names conventionally used for training runs.
pub const DEFAULT_TRAIN_CATEGORIES: [&str; 8] = [
    "animals", "countries", "emotions", "words", "foods", "letters", "numbers", "vehicles",
];

/// Category names conventionally held out for generalization evaluation.
pub const DEFAULT_EVAL_CATEGORIES: [&str; 10] = [
    "planets",
    "instruments",
    "books",
    "celebrities",
    "flowers",
    "colors",
    "languages",
    "cities",
    "sports",
    "movies",
];

impl Vocabulary {
    /// The full built-in vocabulary (18 categories, 14 items each).
    pub fn standard() -> Self {
        Self::from_pools(&CATEGORY_POOLS, &LIST_TEMPLATE_TEXTS, &OPEN_TEMPLATE_TEXTS)
            .expect("built-in pools are well-formed")
    }

    /// Builds a vocabulary from caller-supplied pools. Useful for small
    /// test and oracle universes where enumeration must stay cheap.
    pub fn from_pools(
        pools: &[(&str, &[&str])],
        list_templates: &[&str],
        open_templates: &[&str],
    ) -> Result<Self> {
        if pools.is_empty() || list_templates.is_empty() || open_templates.is_empty() {
            return Err(LabError::config(
                "vocabulary",
                "needs at least one category and one template of each kind",
            ));
        }
        let mut names = vec![
            "<answer>".to_string(),
            "</answer>".to_string(),
            "<eos>".to_string(),
            "<pad>".to_string(),
        ];
        let mut list_tpl = Vec::new();
        for text in list_templates {
            list_tpl.push(Template {
                token: names.len(),
                text: text.to_string(),
            });
            names.push(format!("<tpl:{}>", list_tpl.len() - 1));
        }
        let mut open_tpl = Vec::new();
        for text in open_templates {
            open_tpl.push(Template {
                token: names.len(),
                text: text.to_string(),
            });
            names.push(format!("<open-tpl:{}>", open_tpl.len() - 1));
        }
        let mut categories = Vec::new();
        for (name, _) in pools {
            categories.push(Category {
                name: name.to_string(),
                token: names.len(),
                items: Vec::new(),
            });
            names.push(format!("<cat:{name}>"));
        }
        let mut item_category = vec![None; names.len()];
        for (idx, (_, items)) in pools.iter().enumerate() {
            for item in *items {
                categories[idx].items.push(names.len());
                item_category.push(Some(idx));
                names.push(item.to_string());
            }
        }
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(LabError::config(
                "vocabulary",
                "token display names must be unique",
            ));
        }
        Ok(Vocabulary {
            names,
            categories,
            list_templates: list_tpl,
            open_templates: open_tpl,
            item_category,
        })
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn token_text(&self, token: TokenId) -> &str {
        &self.names[token]
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn category(&self, name: &str) -> Result<&Category> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| LabError::UnknownCategory(name.to_string()))
    }

    pub fn list_templates(&self) -> &[Template] {
        &self.list_templates
    }

    pub fn open_templates(&self) -> &[Template] {
        &self.open_templates
    }

    pub fn is_item(&self, token: TokenId) -> bool {
        self.item_category.get(token).is_some_and(|c| c.is_some())
    }

    /// Renders a sampled response as display text.
    pub fn decode_text(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.token_text(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

// ---- Prompts ----

/// Task flavor of a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptMode {
    #[serde(rename = "LIST_SELECTION")]
    ListSelection,
    #[serde(rename = "OPEN_ENDED")]
    OpenEnded,
}

/// A single task instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub template_id: usize,
    pub category: String,
    /// Token of the category name (used by open-ended rendering).
    pub category_token: TokenId,
    /// Displayed items, in display order. Empty for open-ended prompts.
    pub items: Vec<TokenId>,
    pub mode: PromptMode,
}

impl Prompt {
    /// The token sequence shown to the policy.
    pub fn render(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(2 + self.items.len());
        match self.mode {
            PromptMode::ListSelection => {
                out.push(vocab.list_templates()[self.template_id].token);
                out.extend_from_slice(&self.items);
            }
            PromptMode::OpenEnded => {
                out.push(vocab.open_templates()[self.template_id].token);
                out.push(self.category_token);
            }
        }
        out
    }

    /// Stable identity of the prompt, used to key logs and tabular
    /// policy rows. Injective over (mode, template, displayed items,
    /// category) for a fixed vocabulary.
    pub fn identity_hash(&self) -> u64 {
        let mut bytes = Vec::with_capacity(24 + self.items.len() * 8);
        bytes.push(match self.mode {
            PromptMode::ListSelection => 0u8,
            PromptMode::OpenEnded => 1u8,
        });
        bytes.extend_from_slice(&(self.template_id as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.category_token as u64).to_le_bytes());
        for &t in &self.items {
            bytes.extend_from_slice(&(t as u64).to_le_bytes());
        }
        fnv1a(&bytes)
    }

    /// Human-readable prompt text.
    pub fn render_text(&self, vocab: &Vocabulary) -> String {
        match self.mode {
            PromptMode::ListSelection => {
                let tpl = &vocab.list_templates()[self.template_id];
                let items = self
                    .items
                    .iter()
                    .map(|&t| vocab.token_text(t))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("{} {}. {}", tpl.text, items, FORMAT_SUFFIX)
            }
            PromptMode::OpenEnded => {
                let tpl = &vocab.open_templates()[self.template_id];
                format!("{} {}", tpl.text.replace("{}", &self.category), FORMAT_SUFFIX)
            }
        }
    }
}

/// The answer options a response is graded against: the displayed list
/// for list-selection prompts, the whole category pool for open-ended
/// prompts.
pub fn valid_items(vocab: &Vocabulary, prompt: &Prompt) -> Result<Vec<TokenId>> {
    match prompt.mode {
        PromptMode::ListSelection => Ok(prompt.items.clone()),
        PromptMode::OpenEnded => Ok(vocab.category(&prompt.category)?.items.clone()),
    }
}

// ---- Parsing ----

/// Outcome of parsing one sampled response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Exactly `<answer> item </answer>` with `item` among the valid
    /// options (an optional trailing end-of-sequence is tolerated).
    Valid(TokenId),
    Invalid,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid(_))
    }

    pub fn item(&self) -> Option<TokenId> {
        match self {
            Verdict::Valid(t) => Some(*t),
            Verdict::Invalid => None,
        }
    }
}

/// Strictly parses a response against the valid options.
pub fn parse_answer(tokens: &[TokenId], valid: &[TokenId]) -> Verdict {
    let body = match tokens {
        [TOK_ANSWER_OPEN, item, TOK_ANSWER_CLOSE] => Some(*item),
        [TOK_ANSWER_OPEN, item, TOK_ANSWER_CLOSE, TOK_EOS] => Some(*item),
        _ => None,
    };
    match body {
        Some(item) if valid.contains(&item) => Verdict::Valid(item),
        _ => Verdict::Invalid,
    }
}

// ---- Dataset generation ----

/// Declarative description of a prompt dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Category names prompts are drawn from (uniformly).
    pub categories: Vec<String>,
    /// Number of prompts to generate.
    pub count: usize,
    /// Inclusive bounds on displayed list length.
    pub length_min: usize,
    pub length_max: usize,
    /// Fraction of prompts that are open-ended instead of list-based.
    pub open_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            categories: DEFAULT_TRAIN_CATEGORIES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            count: 512,
            length_min: 8,
            length_max: 8,
            open_fraction: 0.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.categories.is_empty() {
            return Err(LabError::config("dataset.categories", "must not be empty"));
        }
        if self.count == 0 {
            return Err(LabError::config("dataset.count", "must be at least 1"));
        }
        if self.length_min < 2 {
            return Err(LabError::config(
                "dataset.length_min",
                "lists need at least 2 options",
            ));
        }
        if self.length_min > self.length_max {
            return Err(LabError::config(
                "dataset.length_min",
                "must not exceed length_max",
            ));
        }
        if self.length_max > MAX_LIST_LEN {
            return Err(LabError::config(
                "dataset.length_max",
                format!("must not exceed {MAX_LIST_LEN}"),
            ));
        }
        if !(0.0..=1.0).contains(&self.open_fraction) {
            return Err(LabError::config(
                "dataset.open_fraction",
                "must lie in [0, 1]",
            ));
        }
        for name in &self.categories {
            let cat = vocab.category(name)?;
            if cat.items.len() < self.length_max {
                return Err(LabError::ListLength {
                    category: name.clone(),
                    requested: self.length_max,
                    available: cat.items.len(),
                });
            }
        }
        Ok(())
    }
}

/// Generates a dataset deterministically from the given stream.
pub fn generate_dataset(
    vocab: &Vocabulary,
    config: &DatasetConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Prompt>> {
    config.validate(vocab)?;
    let mut prompts = Vec::with_capacity(config.count);
    for _ in 0..config.count {
        let name = &config.categories[rng.gen_range(0..config.categories.len())];
        let cat = vocab.category(name)?;
        let open = rng.gen::<f64>() < config.open_fraction;
        if open {
            prompts.push(Prompt {
                template_id: rng.gen_range(0..vocab.open_templates().len()),
                category: cat.name.clone(),
                category_token: cat.token,
                items: Vec::new(),
                mode: PromptMode::OpenEnded,
            });
        } else {
            let len = rng.gen_range(config.length_min..=config.length_max);
            let items: Vec<TokenId> = cat
                .items
                .choose_multiple(rng, len)
                .copied()
                .collect();
            prompts.push(Prompt {
                template_id: rng.gen_range(0..vocab.list_templates().len()),
                category: cat.name.clone(),
                category_token: cat.token,
                items,
                mode: PromptMode::ListSelection,
            });
        }
    }
    Ok(prompts)
}

/// Splits category names into train and held-out sets.
///
/// `ratio` is the train share; at least one category lands on each side.
pub fn split_held_out(
    categories: &[String],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if categories.len() < 2 {
        return Err(LabError::config(
            "categories",
            "need at least 2 categories to split",
        ));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(LabError::config("ratio", "must lie in [0, 1]"));
    }
    let mut order: Vec<usize> = (0..categories.len()).collect();
    order.shuffle(&mut child_rng(seed, "held-out-split", 0));
    let n_train = ((categories.len() as f64 * ratio).round() as usize)
        .clamp(1, categories.len() - 1);
    let train_set: HashSet<usize> = order[..n_train].iter().copied().collect();
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for (i, name) in categories.iter().enumerate() {
        if train_set.contains(&i) {
            train.push(name.clone());
        } else {
            held_out.push(name.clone());
        }
    }
    Ok((train, held_out))
}

// ---- JSON Lines import/export ----

/// On-disk record for one prompt.
#[derive(Debug, Serialize, Deserialize)]
struct PromptRecord {
    template_id: usize,
    category: String,
    items: Vec<TokenId>,
    mode: PromptMode,
}

/// Writes a dataset as JSON Lines.
pub fn write_dataset(path: &Path, prompts: &[Prompt]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in prompts {
        let record = PromptRecord {
            template_id: p.template_id,
            category: p.category.clone(),
            items: p.items.clone(),
            mode: p.mode,
        };
        serde_json::to_writer(&mut file, &record)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Reads a JSON Lines dataset, validating every record against the
/// vocabulary.
pub fn read_dataset(path: &Path, vocab: &Vocabulary) -> Result<Vec<Prompt>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut prompts = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord = serde_json::from_str(&line)
            .map_err(|e| LabError::DatasetFormat(format!("line {}: {e}", lineno + 1)))?;
        let cat = vocab.category(&record.category)?;
        let template_count = match record.mode {
            PromptMode::ListSelection => vocab.list_templates().len(),
            PromptMode::OpenEnded => vocab.open_templates().len(),
        };
        if record.template_id >= template_count {
            return Err(LabError::DatasetFormat(format!(
                "line {}: template_id {} out of range",
                lineno + 1,
                record.template_id
            )));
        }
        match record.mode {
            PromptMode::ListSelection => {
                if record.items.is_empty() {
                    return Err(LabError::DatasetFormat(format!(
                        "line {}: list-selection prompt without items",
                        lineno + 1
                    )));
                }
                for &item in &record.items {
                    if !cat.items.contains(&item) {
                        return Err(LabError::DatasetFormat(format!(
                            "line {}: item {item} is not in category `{}`",
                            lineno + 1,
                            record.category
                        )));
                    }
                }
            }
            PromptMode::OpenEnded => {
                if !record.items.is_empty() {
                    return Err(LabError::DatasetFormat(format!(
                        "line {}: open-ended prompt must not list items",
                        lineno + 1
                    )));
                }
            }
        }
        prompts.push(Prompt {
            template_id: record.template_id,
            category: record.category,
            category_token: cat.token,
            items: record.items,
            mode: record.mode,
        });
    }
    Ok(prompts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        child_rng(seed, "test", 0)
    }

    #[test]
    fn standard_vocabulary_is_well_formed() {
        let v = Vocabulary::standard();
        assert_eq!(v.size(), v.names.len());
        assert_eq!(v.categories().len(), 18);
        for cat in v.categories() {
            assert!(
                cat.items.len() >= 12,
                "category {} has only {} items",
                cat.name,
                cat.items.len()
            );
            for &item in &cat.items {
                assert!(v.is_item(item));
            }
        }
        // Reserved tokens are distinct from everything else by layout.
        assert!(!v.is_item(TOK_ANSWER_OPEN));
        assert!(!v.is_item(TOK_EOS));
        assert_eq!(v.token_text(TOK_ANSWER_OPEN), "<answer>");
        assert_eq!(v.token_text(TOK_ANSWER_CLOSE), "</answer>");
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let v = Vocabulary::standard();
        let cfg = DatasetConfig::default();
        let a = generate_dataset(&v, &cfg, &mut rng(9)).unwrap();
        let b = generate_dataset(&v, &cfg, &mut rng(9)).unwrap();
        let c = generate_dataset(&v, &cfg, &mut rng(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn generated_lists_draw_without_replacement_from_one_category() {
        let v = Vocabulary::standard();
        let cfg = DatasetConfig {
            count: 64,
            length_min: 4,
            length_max: 8,
            ..DatasetConfig::default()
        };
        let prompts = generate_dataset(&v, &cfg, &mut rng(3)).unwrap();
        for p in prompts {
            assert!(p.items.len() >= 4 && p.items.len() <= 8);
            let unique: HashSet<_> = p.items.iter().collect();
            assert_eq!(unique.len(), p.items.len(), "duplicate item in list");
            let cat = v.category(&p.category).unwrap();
            for item in &p.items {
                assert!(cat.items.contains(item));
            }
        }
    }

    #[test]
    fn unknown_category_is_an_error() {
        let v = Vocabulary::standard();
        let cfg = DatasetConfig {
            categories: vec!["gemstones".into()],
            ..DatasetConfig::default()
        };
        let err = generate_dataset(&v, &cfg, &mut rng(0)).unwrap_err();
        assert!(matches!(err, LabError::UnknownCategory(name) if name == "gemstones"));
    }

    #[test]
    fn oversized_list_request_is_an_error() {
        let v = Vocabulary::standard();
        let cfg = DatasetConfig {
            length_min: 2,
            length_max: 12,
            categories: vec!["animals".into()],
            ..DatasetConfig::default()
        };
        // animals has 14 items, so 12 is fine; shrink the pool instead.
        let tiny = Vocabulary::from_pools(
            &[("pair", &["left", "right"] as &[&str])],
            &["choose:"],
            &["name one of the {}."],
        )
        .unwrap();
        let err = generate_dataset(&tiny, &cfg, &mut rng(0)).unwrap_err();
        assert!(matches!(err, LabError::ListLength { .. } | LabError::UnknownCategory(_)));
        let cfg_ok = DatasetConfig {
            categories: vec!["pair".into()],
            length_min: 2,
            length_max: 2,
            count: 4,
            ..DatasetConfig::default()
        };
        assert!(generate_dataset(&tiny, &cfg_ok, &mut rng(0)).is_ok());
    }

    #[test]
    fn render_is_template_then_options() {
        let v = Vocabulary::standard();
        let cat = v.category("animals").unwrap();
        let p = Prompt {
            template_id: 2,
            category: cat.name.clone(),
            category_token: cat.token,
            items: cat.items[..4].to_vec(),
            mode: PromptMode::ListSelection,
        };
        let r = p.render(&v);
        assert_eq!(r.len(), 5);
        assert_eq!(r[0], v.list_templates()[2].token);
        assert_eq!(&r[1..], &cat.items[..4]);
        let text = p.render_text(&v);
        assert!(text.contains("otter"));
        assert!(text.ends_with(FORMAT_SUFFIX));
    }

    #[test]
    fn prompt_hash_distinguishes_item_order() {
        let v = Vocabulary::standard();
        let cat = v.category("colors").unwrap();
        let mut p = Prompt {
            template_id: 0,
            category: cat.name.clone(),
            category_token: cat.token,
            items: cat.items[..4].to_vec(),
            mode: PromptMode::ListSelection,
        };
        let h1 = p.identity_hash();
        p.items.swap(0, 1);
        assert_ne!(h1, p.identity_hash());
    }

    #[test]
    fn parse_accepts_only_the_strict_tag_format() {
        let valid = vec![100, 101, 102];
        assert_eq!(
            parse_answer(&[TOK_ANSWER_OPEN, 101, TOK_ANSWER_CLOSE], &valid),
            Verdict::Valid(101)
        );
        assert_eq!(
            parse_answer(&[TOK_ANSWER_OPEN, 102, TOK_ANSWER_CLOSE, TOK_EOS], &valid),
            Verdict::Valid(102)
        );
        // Wrong item, missing tags, extra tokens, reordered tags.
        assert_eq!(
            parse_answer(&[TOK_ANSWER_OPEN, 999, TOK_ANSWER_CLOSE], &valid),
            Verdict::Invalid
        );
        assert_eq!(parse_answer(&[101], &valid), Verdict::Invalid);
        assert_eq!(
            parse_answer(&[TOK_ANSWER_OPEN, 101], &valid),
            Verdict::Invalid
        );
        assert_eq!(
            parse_answer(
                &[TOK_ANSWER_OPEN, 101, TOK_ANSWER_CLOSE, TOK_ANSWER_CLOSE],
                &valid
            ),
            Verdict::Invalid
        );
        assert_eq!(
            parse_answer(&[TOK_ANSWER_CLOSE, 101, TOK_ANSWER_OPEN], &valid),
            Verdict::Invalid
        );
        assert_eq!(parse_answer(&[], &valid), Verdict::Invalid);
    }

    #[test]
    fn split_held_out_is_deterministic_and_covers() {
        let cats: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let (tr1, ev1) = split_held_out(&cats, 0.8, 5).unwrap();
        let (tr2, ev2) = split_held_out(&cats, 0.8, 5).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(ev1, ev2);
        assert_eq!(tr1.len(), 8);
        assert_eq!(ev1.len(), 2);
        let mut all: Vec<String> = tr1.iter().chain(ev1.iter()).cloned().collect();
        all.sort();
        let mut expect = cats.clone();
        expect.sort();
        assert_eq!(all, expect);
    }

    #[test]
    fn split_always_leaves_at_least_one_on_each_side() {
        let cats: Vec<String> = vec!["a".into(), "b".into()];
        let (tr, ev) = split_held_out(&cats, 0.8, 1).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(ev.len(), 1);
        let (tr, ev) = split_held_out(&cats, 0.0, 1).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(ev.len(), 1);
        assert!(split_held_out(&["solo".to_string()], 0.5, 1).is_err());
    }

    #[test]
    fn dataset_jsonl_round_trips() {
        let v = Vocabulary::standard();
        let cfg = DatasetConfig {
            open_fraction: 0.3,
            count: 64,
            ..DatasetConfig::default()
        };
        let prompts = generate_dataset(&v, &cfg, &mut rng(11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.jsonl");
        write_dataset(&path, &prompts).unwrap();
        let back = read_dataset(&path, &v).unwrap();
        assert_eq!(prompts, back);
    }

    #[test]
    fn malformed_dataset_lines_are_rejected() {
        let v = Vocabulary::standard();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"template_id\":0,\"category\":\"animals\",\"items\":[1],\"mode\":\"LIST_SELECTION\"}\n",
        )
        .unwrap();
        // Token 1 is a reserved token, not an animals item.
        assert!(read_dataset(&path, &v).is_err());
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            read_dataset(&path, &v).unwrap_err(),
            LabError::DatasetFormat(_)
        ));
    }
}

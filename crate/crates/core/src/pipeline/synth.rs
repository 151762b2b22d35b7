//! Synthetic browse pages and titles in English, French and German.
//!
//! Every language shares slot structure and a pool of brand names but has its
//! own vocabulary, slot names and word order. Title templates depend on the
//! category group, so each title is a deterministic function of its page.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{BrowsePage, TagMap};

/// High- to low-resource training size ratio of the preset (222k:10k, rounded).
pub const HIGH_LOW_RATIO: usize = 20;

const BRAND_POOL_SEED: u64 = 0x5107_6e4e;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid template `{template}`: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("no synthetic grammar for language `{0}`")]
    UnknownLanguage(String),
    #[error("could only draw {got} distinct pages for `{language}`, wanted {wanted}")]
    Exhausted { language: String, got: usize, wanted: usize },
}

/// Sizes to generate, per language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub train: BTreeMap<String, usize>,
    pub dev: BTreeMap<String, usize>,
    pub test: BTreeMap<String, usize>,
    /// Titles without pages, for copy augmentation.
    pub monolingual: BTreeMap<String, usize>,
    pub brands: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train: BTreeMap::new(),
            dev: BTreeMap::new(),
            test: BTreeMap::new(),
            monolingual: BTreeMap::new(),
            brands: 80,
        }
    }
}

fn sizes(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|(l, n)| (l.to_string(), *n)).collect()
}

impl SynthSpec {
    /// English 2000 / French 100 training pages, 200 French dev pages and
    /// 1000 French monolingual titles.
    pub fn high_low(high: &str, low: &str, low_train: usize) -> Self {
        SynthSpec {
            train: sizes(&[(high, low_train * HIGH_LOW_RATIO), (low, low_train)]),
            dev: sizes(&[(low, 200)]),
            test: BTreeMap::new(),
            monolingual: sizes(&[(low, 1000)]),
            ..SynthSpec::default()
        }
    }

    /// A single language with the given train/dev sizes.
    pub fn single(language: &str, train: usize, dev: usize) -> Self {
        SynthSpec {
            train: sizes(&[(language, train)]),
            dev: sizes(&[(language, dev)]),
            ..SynthSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthCorpus {
    pub train: BTreeMap<String, Vec<BrowsePage>>,
    pub dev: BTreeMap<String, Vec<BrowsePage>>,
    pub test: BTreeMap<String, Vec<BrowsePage>>,
    pub monolingual: BTreeMap<String, Vec<String>>,
    pub tags: TagMap,
    pub brands: Vec<String>,
}

impl SynthCorpus {
    pub fn all_train(&self) -> Vec<BrowsePage> {
        self.train.values().flatten().cloned().collect()
    }

    pub fn all_dev(&self) -> Vec<BrowsePage> {
        self.dev.values().flatten().cloned().collect()
    }

    pub fn all_test(&self) -> Vec<BrowsePage> {
        self.test.values().flatten().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Apparel,
    Footwear,
    Bags,
    Home,
    Electronics,
}

const GROUPS: [Group; 5] = [Group::Apparel, Group::Footwear, Group::Bags, Group::Home, Group::Electronics];

/// `[en, fr, de]` renderings.
type Tri = [&'static str; 3];

const CATEGORIES: [(Group, Tri); 15] = [
    (Group::Apparel, ["T-Shirt", "T-shirt", "T-Shirt"]),
    (Group::Apparel, ["Dress", "Robe", "Kleid"]),
    (Group::Apparel, ["Jacket", "Veste", "Jacke"]),
    (Group::Apparel, ["Sweater", "Pull", "Pullover"]),
    (Group::Footwear, ["Sneakers", "Baskets", "Sneaker"]),
    (Group::Footwear, ["Boots", "Bottes", "Stiefel"]),
    (Group::Footwear, ["Sandals", "Sandales", "Sandalen"]),
    (Group::Bags, ["Backpack", "Sac à dos", "Rucksack"]),
    (Group::Bags, ["Handbag", "Sac à main", "Handtasche"]),
    (Group::Bags, ["Wallet", "Portefeuille", "Geldbörse"]),
    (Group::Home, ["Lamp", "Lampe", "Lampe"]),
    (Group::Home, ["Mug", "Tasse", "Becher"]),
    (Group::Home, ["Cushion", "Coussin", "Kissen"]),
    (Group::Electronics, ["Headphones", "Casque audio", "Kopfhörer"]),
    (Group::Electronics, ["Speaker", "Enceinte", "Lautsprecher"]),
];

const COLORS: [Tri; 12] = [
    ["Black", "Noir", "Schwarz"],
    ["White", "Blanc", "Weiß"],
    ["Red", "Rouge", "Rot"],
    ["Blue", "Bleu", "Blau"],
    ["Green", "Vert", "Grün"],
    ["Grey", "Gris", "Grau"],
    ["Brown", "Marron", "Braun"],
    ["Pink", "Rose", "Rosa"],
    ["Navy", "Bleu marine", "Marineblau"],
    ["Beige", "Beige", "Beige"],
    ["Yellow", "Jaune", "Gelb"],
    ["Purple", "Violet", "Lila"],
];

const APPAREL_MATERIALS: [Tri; 5] = [
    ["Cotton", "coton", "Baumwolle"],
    ["Wool", "laine", "Wolle"],
    ["Linen", "lin", "Leinen"],
    ["Polyester", "polyester", "Polyester"],
    ["Denim", "denim", "Denim"],
];
const SHOE_MATERIALS: [Tri; 4] = [
    ["Leather", "cuir", "Leder"],
    ["Suede", "daim", "Wildleder"],
    ["Canvas", "toile", "Canvas"],
    ["Rubber", "caoutchouc", "Gummi"],
];
const BAG_MATERIALS: [Tri; 3] = [["Leather", "cuir", "Leder"], ["Nylon", "nylon", "Nylon"], ["Canvas", "toile", "Canvas"]];
const HOME_MATERIALS: [Tri; 4] = [
    ["Ceramic", "céramique", "Keramik"],
    ["Glass", "verre", "Glas"],
    ["Wood", "bois", "Holz"],
    ["Metal", "métal", "Metall"],
];
const GENDERS: [Tri; 3] = [["Men", "homme", "Herren"], ["Women", "femme", "Damen"], ["Kids", "enfant", "Kinder"]];
const CONNECTIVITY: [Tri; 3] = [
    ["Bluetooth", "Bluetooth", "Bluetooth"],
    ["Wireless", "sans fil", "kabellos"],
    ["Wired", "filaire", "kabelgebunden"],
];
const SIZES: [&str; 6] = ["XS", "S", "M", "L", "XL", "XXL"];

/// `(tag, [en, fr, de] slot names)`.
const SLOT_NAMES: [(&str, Tri); 7] = [
    ("brand", ["Brand", "Marque", "Marke"]),
    ("color", ["Color", "Couleur", "Farbe"]),
    ("material", ["Material", "Matiere", "Material"]),
    ("gender", ["Department", "Genre", "Abteilung"]),
    ("size", ["Size", "Taille", "Groesse"]),
    ("shoesize", ["Shoe Size", "Pointure", "Schuhgroesse"]),
    ("connectivity", ["Connectivity", "Connectivite", "Konnektivitaet"]),
];

const SLOT_KEYS: [&str; 8] = ["cat", "brand", "color", "material", "gender", "size", "shoesize", "connectivity"];

fn templates(lang: usize, group: Group) -> &'static str {
    use Group::*;
    match (lang, group) {
        (0, Apparel) => "{brand} {color} [{material} ]{cat}[ for {gender}] - Size {size}",
        (0, Footwear) => "{brand} [{gender} ]{cat} {color}[ {material}] EU {shoesize}",
        (0, Bags) => "{brand} {color} [{material} ]{cat}",
        (0, Home) => "{color} [{material} ]{cat} by {brand}",
        (0, Electronics) => "{brand} {connectivity} {cat} in {color}",
        (1, Apparel) => "{cat} {brand} [en {material} ]{color}[ pour {gender}] - Taille {size}",
        (1, Footwear) => "{cat} {brand}[ {gender}] {color}[ en {material}] pointure {shoesize}",
        (1, Bags) => "{cat} [en {material} ]{color} {brand}",
        (1, Home) => "{cat} [en {material} ]{color} - {brand}",
        (1, Electronics) => "{cat} {connectivity} {brand} {color}",
        (_, Apparel) => "{brand} [{gender} ]{cat} {color}[ aus {material}] Größe {size}",
        (_, Footwear) => "{brand} [{gender} ]{cat} {color}[ aus {material}] Gr. {shoesize}",
        (_, Bags) => "{brand} {cat} [aus {material} ]in {color}",
        (_, Home) => "{cat} [aus {material} ]{color} von {brand}",
        (_, Electronics) => "{brand} {cat} {connectivity} {color}",
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
    /// Rendered only when every slot inside is present.
    Optional(Vec<Piece>),
}

/// A title template: literal text, `{slot}` references and `[optional]`
/// segments (not nested).
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let err = |reason: &str| SynthError::InvalidTemplate {
            template: text.to_string(),
            reason: reason.to_string(),
        };
        let mut stack: Vec<Vec<Piece>> = vec![Vec::new()];
        let mut literal = String::new();
        let mut chars = text.chars();
        while let Some(c) = chars.next() {
            match c {
                '{' => {
                    let name: String = chars.by_ref().take_while(|&c| c != '}').collect();
                    if !SLOT_KEYS.contains(&name.as_str()) {
                        return Err(err(&format!("unknown slot `{name}`")));
                    }
                    let top = stack.last_mut().unwrap();
                    if !literal.is_empty() {
                        top.push(Piece::Text(std::mem::take(&mut literal)));
                    }
                    top.push(Piece::Slot(name));
                }
                '[' => {
                    if stack.len() > 1 {
                        return Err(err("nested optional segment"));
                    }
                    if !literal.is_empty() {
                        stack[0].push(Piece::Text(std::mem::take(&mut literal)));
                    }
                    stack.push(Vec::new());
                }
                ']' => {
                    if stack.len() != 2 {
                        return Err(err("unbalanced `]`"));
                    }
                    let mut inner = stack.pop().unwrap();
                    if !literal.is_empty() {
                        inner.push(Piece::Text(std::mem::take(&mut literal)));
                    }
                    if !inner.iter().any(|p| matches!(p, Piece::Slot(_))) {
                        return Err(err("optional segment without a slot"));
                    }
                    stack[0].push(Piece::Optional(inner));
                }
                '}' => return Err(err("unbalanced `}`")),
                c => literal.push(c),
            }
        }
        if stack.len() != 1 {
            return Err(err("unclosed `[`"));
        }
        let mut pieces = stack.pop().unwrap();
        if !literal.is_empty() {
            pieces.push(Piece::Text(literal));
        }
        Ok(Template { pieces })
    }

    fn render_into(pieces: &[Piece], values: &BTreeMap<&str, String>, out: &mut String) -> bool {
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => match values.get(s.as_str()) {
                    Some(v) => out.push_str(v),
                    None => return false,
                },
                Piece::Optional(inner) => {
                    let mut buf = String::new();
                    if Self::render_into(inner, values, &mut buf) {
                        out.push_str(&buf);
                    }
                }
            }
        }
        true
    }

    /// `None` when a required slot is missing.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Option<String> {
        let mut out = String::new();
        Self::render_into(&self.pieces, values, &mut out).then_some(out)
    }
}

fn lang_index(language: &str) -> Result<usize, SynthError> {
    match language {
        "en" => Ok(0),
        "fr" => Ok(1),
        "de" => Ok(2),
        other => Err(SynthError::UnknownLanguage(other.to_string())),
    }
}

/// A fixed pool of invented brand names (about one in five has two words).
pub fn brand_pool(n: usize) -> Vec<String> {
    const ONSETS: [&str; 16] = ["b", "k", "d", "v", "z", "t", "m", "n", "l", "r", "s", "p", "g", "f", "br", "tr"];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
    const CODAS: [&str; 7] = ["", "n", "r", "x", "l", "s", "k"];
    const SUFFIXES: [&str; 5] = ["Co", "Studio", "Labs", "Works", "Outdoor"];
    let mut rng = ChaCha8Rng::seed_from_u64(BRAND_POOL_SEED);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut name = String::new();
        for _ in 0..syllables {
            name.push_str(ONSETS.choose(&mut rng).unwrap());
            name.push_str(VOWELS.choose(&mut rng).unwrap());
        }
        name.push_str(CODAS.choose(&mut rng).unwrap());
        let mut name: String = name[..1].to_uppercase() + &name[1..];
        if rng.gen_bool(0.2) {
            name = format!("{name} {}", SUFFIXES.choose(&mut rng).unwrap());
        }
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

/// Tag map from every localized slot name to its shared tag.
pub fn synthetic_tags() -> TagMap {
    let mut tags = TagMap::new();
    for (tag, names) in SLOT_NAMES {
        for name in names {
            tags.insert(name, tag);
        }
    }
    tags
}

struct Grammar {
    lang: usize,
    language: String,
    templates: Vec<(Group, Template)>,
    brands: Vec<String>,
}

impl Grammar {
    fn new(language: &str, brands: &[String]) -> Result<Self, SynthError> {
        let lang = lang_index(language)?;
        let templates = GROUPS
            .iter()
            .map(|&g| Ok((g, Template::parse(templates(lang, g))?)))
            .collect::<Result<_, SynthError>>()?;
        Ok(Grammar {
            lang,
            language: language.to_string(),
            templates,
            brands: brands.to_vec(),
        })
    }

    fn slot_name(&self, key: &str) -> &'static str {
        SLOT_NAMES.iter().find(|(t, _)| *t == key).unwrap().1[self.lang]
    }

    fn page<R: Rng>(&self, rng: &mut R) -> BrowsePage {
        let l = self.lang;
        let group = *GROUPS.choose(rng).unwrap();
        let cats: Vec<&Tri> = CATEGORIES.iter().filter(|(g, _)| *g == group).map(|(_, t)| t).collect();
        let category = cats.choose(rng).unwrap()[l];
        let mut values: Vec<(&str, String)> = vec![
            ("brand", self.brands.choose(rng).unwrap().clone()),
            ("color", COLORS.choose(rng).unwrap()[l].to_string()),
        ];
        let materials: &[Tri] = match group {
            Group::Apparel => &APPAREL_MATERIALS,
            Group::Footwear => &SHOE_MATERIALS,
            Group::Bags => &BAG_MATERIALS,
            Group::Home => &HOME_MATERIALS,
            Group::Electronics => &[],
        };
        if !materials.is_empty() && rng.gen_bool(0.8) {
            values.push(("material", materials.choose(rng).unwrap()[l].to_string()));
        }
        match group {
            Group::Apparel | Group::Footwear => {
                if rng.gen_bool(0.7) {
                    values.push(("gender", GENDERS.choose(rng).unwrap()[l].to_string()));
                }
                if group == Group::Apparel {
                    values.push(("size", SIZES.choose(rng).unwrap().to_string()));
                } else {
                    values.push(("shoesize", rng.gen_range(36..=46).to_string()));
                }
            }
            Group::Electronics => values.push(("connectivity", CONNECTIVITY.choose(rng).unwrap()[l].to_string())),
            _ => {}
        }
        let mut page = BrowsePage::new(&self.language, category);
        for (key, v) in &values {
            page = page.with_slot(self.slot_name(key), v);
        }
        let mut map: BTreeMap<&str, String> = values.into_iter().collect();
        map.insert("cat", category.to_string());
        let template = &self.templates.iter().find(|(g, _)| *g == group).unwrap().1;
        let title = template.render(&map).expect("required slots are always drawn");
        page.with_title(&title)
    }
}

fn page_key(p: &BrowsePage) -> String {
    serde_json::to_string(&(&p.language, &p.category, &p.slots)).expect("page serializes")
}

/// Draws `n` pages not yet in `seen`.
fn draw<R: Rng>(g: &Grammar, n: usize, seen: &mut BTreeSet<String>, rng: &mut R) -> Result<Vec<BrowsePage>, SynthError> {
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 50 * n + 1000 {
            return Err(SynthError::Exhausted {
                language: g.language.clone(),
                got: out.len(),
                wanted: n,
            });
        }
        let p = g.page(rng);
        if seen.insert(page_key(&p)) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Generates a corpus. Train, dev, test and monolingual pages are pairwise
/// distinct within a language.
pub fn make_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus, SynthError> {
    let brands = brand_pool(spec.brands.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut languages: BTreeSet<&String> = BTreeSet::new();
    for m in [&spec.train, &spec.dev, &spec.test, &spec.monolingual] {
        languages.extend(m.keys());
    }
    let mut corpus = SynthCorpus {
        tags: synthetic_tags(),
        brands: brands.clone(),
        ..SynthCorpus::default()
    };
    for language in languages {
        let g = Grammar::new(language, &brands)?;
        let mut seen = BTreeSet::new();
        let n = |m: &BTreeMap<String, usize>| m.get(language).copied().unwrap_or(0);
        let train = draw(&g, n(&spec.train), &mut seen, &mut rng)?;
        let dev = draw(&g, n(&spec.dev), &mut seen, &mut rng)?;
        let test = draw(&g, n(&spec.test), &mut seen, &mut rng)?;
        let mono = draw(&g, n(&spec.monolingual), &mut seen, &mut rng)?;
        for (map, pages) in [(&mut corpus.train, train), (&mut corpus.dev, dev), (&mut corpus.test, test)] {
            if !pages.is_empty() {
                map.insert(language.clone(), pages);
            }
        }
        if !mono.is_empty() {
            corpus
                .monolingual
                .insert(language.clone(), mono.into_iter().filter_map(|p| p.title).collect());
        }
    }
    Ok(corpus)
}

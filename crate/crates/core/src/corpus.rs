//! Uniform example model, validation, and the synthetic dataset families
//! used for desk-scale generalization studies.
//!
//! A synthetic family is defined by three knobs: the question templates (the
//! question language), the context style (the context source) and the
//! phenomenon (single-fact lookup or a two-hop bridge). Families that differ
//! in these knobs play the role of distinct reading-comprehension datasets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::normalize_answer;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Wikipedia,
    Snippet,
    News,
    Synthetic,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
    pub source_tag: SourceTag,
}

impl Document {
    pub fn new(text: impl Into<String>) -> Self {
        Document {
            title: None,
            text: text.into(),
            source_tag: SourceTag::Other,
        }
    }
}

/// One question with its documents and gold answer aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformExample {
    pub id: String,
    pub question: String,
    pub documents: Vec<Document>,
    pub answers: Vec<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl UniformExample {
    /// Checks the record invariants. Empty `answers` is allowed (blind test).
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidRecord {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.id.trim().is_empty() {
            return fail("empty id");
        }
        if self.question.trim().is_empty() {
            return fail("empty question");
        }
        if self.documents.is_empty() {
            return fail("no documents");
        }
        if self.documents.iter().any(|d| d.text.trim().is_empty()) {
            return fail("document with empty text");
        }
        if self.answers.iter().any(|a| normalize_answer(a).is_empty()) {
            return fail("answer alias is empty after normalization");
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but also requires gold answers.
    pub fn validate_labeled(&self) -> Result<()> {
        self.validate()?;
        if self.answers.is_empty() {
            return Err(Error::InvalidRecord {
                id: self.id.clone(),
                reason: "labeled example without answers".to_string(),
            });
        }
        Ok(())
    }
}

/// Validates every record and id uniqueness within one dataset.
pub fn validate_dataset(examples: &[UniformExample]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for ex in examples {
        ex.validate()?;
        if !seen.insert(ex.id.as_str()) {
            return Err(Error::DuplicateId(ex.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextStyle {
    WikiLike,
    SnippetLike,
    NewsLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phenomenon {
    SingleFact,
    TwoHop,
}

/// Attribute asked about by a template; fixes the answer vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Color,
    City,
    Year,
    Material,
    Founder,
    Floors,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Color,
        Relation::City,
        Relation::Year,
        Relation::Material,
        Relation::Founder,
        Relation::Floors,
    ];

    fn name(self) -> &'static str {
        match self {
            Relation::Color => "color",
            Relation::City => "city",
            Relation::Year => "year",
            Relation::Material => "material",
            Relation::Founder => "founder",
            Relation::Floors => "floors",
        }
    }

    fn value(self, rng: &mut ChaCha8Rng) -> String {
        const COLORS: &[&str] = &[
            "red", "blue", "green", "yellow", "purple", "orange", "black", "white", "silver", "golden", "crimson",
            "teal",
        ];
        const CITIES: &[&str] = &[
            "Lisbon",
            "Oslo",
            "Cairo",
            "Lima",
            "Quito",
            "Dakar",
            "Hanoi",
            "Perth",
            "Turin",
            "Kyoto",
            "Porto",
            "Riga",
            "Bern",
            "Accra",
            "New Haven",
            "San Remo",
        ];
        const MATERIALS: &[&str] = &[
            "granite",
            "oak",
            "copper",
            "glass",
            "marble",
            "steel",
            "clay",
            "bamboo",
            "bronze",
            "limestone",
        ];
        const FIRST: &[&str] = &[
            "Ada", "Bruno", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Luca",
            "Mina", "Nils", "Olga", "Pavel",
        ];
        const LAST: &[&str] = &[
            "Arden", "Brandt", "Castillo", "Dorsey", "Ekberg", "Falk", "Gruber", "Holm", "Ivers", "Jansen", "Kovac",
            "Lind", "Moreau", "Novak", "Ortiz", "Pryce",
        ];
        let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs[rng.gen_range(0..xs.len())].to_string();
        match self {
            Relation::Color => pick(rng, COLORS),
            Relation::City => pick(rng, CITIES),
            Relation::Material => pick(rng, MATERIALS),
            Relation::Year => format!("{}", rng.gen_range(1820..2021)),
            Relation::Founder => format!("{} {}", pick(rng, FIRST), pick(rng, LAST)),
            Relation::Floors => format!("{}", rng.gen_range(3..120)),
        }
    }
}

/// A question template: `{e}` is replaced by the entity and, for two-hop
/// families, `{b}` by the bridge noun.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub relation: Relation,
    pub text: String,
}

impl QuestionTemplate {
    pub fn new(relation: Relation, text: &str) -> Self {
        QuestionTemplate {
            relation,
            text: text.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthFamilyConfig {
    pub family_id: String,
    pub question_templates: Vec<QuestionTemplate>,
    pub context_style: ContextStyle,
    pub phenomenon: Phenomenon,
    pub entity_vocabulary_size: usize,
    pub distractor_documents: usize,
    pub seed: u64,
}

impl SynthFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.question_templates.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one question template is required".into(),
            ));
        }
        if self.entity_vocabulary_size < 2 {
            return Err(Error::InvalidConfig("entity_vocabulary_size must be at least 2".into()));
        }
        if self.question_templates.iter().any(|t| !t.text.contains("{e}")) {
            return Err(Error::InvalidConfig("every template needs an {e} slot".into()));
        }
        if self.family_id.is_empty() || self.family_id.contains(':') {
            return Err(Error::InvalidConfig(
                "family_id must be non-empty and free of ':'".into(),
            ));
        }
        Ok(())
    }

    /// Built-in families `A`, `B`, `C` and `H`.
    ///
    /// `A` is encyclopedic and asks about colors, years and materials; `B`
    /// uses web-snippet contexts and asks about cities, founders and floor
    /// counts; `C` is newswire with its own phrasing and mixes relations from
    /// both; `H` is a two-hop variant of `A`.
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        use Relation::*;
        let t = QuestionTemplate::new;
        let (style, phenomenon, templates) = match name {
            "A" => (
                ContextStyle::WikiLike,
                Phenomenon::SingleFact,
                alloc::vec![
                    t(Color, "what color is {e}?"),
                    t(Year, "when was {e} built?"),
                    t(Material, "what is {e} made of?"),
                ],
            ),
            "B" => (
                ContextStyle::SnippetLike,
                Phenomenon::SingleFact,
                alloc::vec![
                    t(City, "where is {e} located?"),
                    t(Founder, "who founded {e}?"),
                    t(Floors, "how many floors does {e} have?"),
                ],
            ),
            "C" => (
                ContextStyle::NewsLike,
                Phenomenon::SingleFact,
                alloc::vec![
                    t(Color, "which color was {e} painted?"),
                    t(City, "in which city is {e}?"),
                    t(Founder, "who started {e}?"),
                    t(Year, "in what year did {e} open?"),
                ],
            ),
            "H" => (
                ContextStyle::WikiLike,
                Phenomenon::TwoHop,
                alloc::vec![
                    t(Color, "what color is the {b} of {e}?"),
                    t(Year, "when was the {b} of {e} built?"),
                ],
            ),
            _ => return None,
        };
        Some(SynthFamilyConfig {
            family_id: name.to_string(),
            question_templates: templates,
            context_style: style,
            phenomenon,
            entity_vocabulary_size: 400,
            distractor_documents: 2,
            seed,
        })
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "re", "vu", "to", "sen", "dal", "or", "bri", "cor", "fen", "gil", "hol", "jun", "mar", "nor",
    "pel", "quin", "sel", "tav", "vel", "wen", "zar",
];

/// `count` distinct capitalized pseudo-words, stable in `count`.
fn entity_names(count: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(count);
    let mut seen = BTreeSet::new();
    let base = SYLLABLES.len();
    let mut i = 0usize;
    while names.len() < count {
        let mut word = String::new();
        let mut k = i;
        let mut digits = 0;
        while k > 0 || digits < 2 {
            word.push_str(SYLLABLES[k % base]);
            k /= base;
            digits += 1;
        }
        let mut chars = word.chars();
        let name: String = match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => String::new(),
        };
        if seen.insert(name.clone()) {
            names.push(name);
        }
        i += 1;
    }
    names
}

struct Facts<'a> {
    names: &'a [String],
    seed: u64,
}

impl Facts<'_> {
    /// The attribute value of `entity` for `relation`, fixed per family seed.
    fn value(&self, entity: usize, relation: Relation) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            derive_seed(self.seed, entity as u64),
            relation as u64 + 101,
        ));
        relation.value(&mut rng)
    }

    fn bridge(&self, entity: usize) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed ^ 0xB41D, entity as u64));
        let n = self.names.len();
        (entity + 1 + rng.gen_range(0..n - 1)) % n
    }
}

const BRIDGES: &[&str] = &["rival", "partner", "neighbor", "successor"];

fn fact_sentence(style: ContextStyle, relation: Relation, entity: &str, value: &str, variant: usize) -> String {
    use ContextStyle::*;
    use Relation::*;
    let v = variant % 2;
    match (style, relation, v) {
        (WikiLike, Color, 0) => format!("The facade of {entity} is painted {value}."),
        (WikiLike, Color, _) => format!("{entity} is known for its {value} exterior."),
        (WikiLike, City, 0) => format!("{entity} is located in {value}."),
        (WikiLike, City, _) => format!("{entity} stands in the city of {value}."),
        (WikiLike, Year, 0) => format!("{entity} was completed in {value}."),
        (WikiLike, Year, _) => format!("Construction of {entity} ended in {value}."),
        (WikiLike, Material, 0) => format!("{entity} is built mainly from {value}."),
        (WikiLike, Material, _) => format!("The walls of {entity} are made of {value}."),
        (WikiLike, Founder, 0) => format!("{entity} was founded by {value}."),
        (WikiLike, Founder, _) => format!("The founder of {entity} was {value}."),
        (WikiLike, Floors, 0) => format!("{entity} has {value} floors."),
        (WikiLike, Floors, _) => format!("The building of {entity} rises {value} floors."),

        (SnippetLike, Color, 0) => format!("{entity} | colour scheme : {value} | photos"),
        (SnippetLike, Color, _) => format!("{entity} ( {value} ) - reviews and tips"),
        (SnippetLike, City, 0) => format!("{entity} - address : {value} , main square"),
        (SnippetLike, City, _) => format!("visit {entity} in {value} | opening hours"),
        (SnippetLike, Year, 0) => format!("{entity} | est . {value} | history"),
        (SnippetLike, Year, _) => format!("{entity} since {value} - official site"),
        (SnippetLike, Material, 0) => format!("{entity} | material : {value} | gallery"),
        (SnippetLike, Material, _) => format!("{entity} , {value} facade - travel forum"),
        (SnippetLike, Founder, 0) => format!("{entity} | founder : {value} | about us"),
        (SnippetLike, Founder, _) => format!("{value} , creator of {entity} - interview"),
        (SnippetLike, Floors, 0) => format!("{entity} | {value} floors | tickets"),
        (SnippetLike, Floors, _) => format!("{entity} tower guide : {value} levels"),

        (NewsLike, Color, 0) => format!("Workers repainted {entity} {value} on Monday, officials said."),
        (NewsLike, Color, _) => format!("The newly {value} {entity} drew crowds this week."),
        (NewsLike, City, 0) => format!("{value} officials said {entity} would stay open."),
        (NewsLike, City, _) => format!("Residents of {value} gathered outside {entity} on Friday."),
        (NewsLike, Year, 0) => format!("{entity}, which opened in {value}, reported record visits."),
        (NewsLike, Year, _) => format!("Since opening in {value}, {entity} has changed owners twice."),
        (NewsLike, Material, 0) => format!("Engineers said the {value} frame of {entity} was sound."),
        (NewsLike, Material, _) => format!("{entity} will replace its {value} roof, a spokesman said."),
        (NewsLike, Founder, 0) => format!("{value}, who started {entity}, declined to comment."),
        (NewsLike, Founder, _) => format!("{entity} was started by {value}, according to records."),
        (NewsLike, Floors, 0) => format!("All {value} floors of {entity} were evacuated on Tuesday."),
        (NewsLike, Floors, _) => format!("The {value}-floor {entity} reopened after repairs."),
    }
}

fn filler_sentence(style: ContextStyle, entity: &str, variant: usize) -> String {
    match (style, variant % 3) {
        (ContextStyle::WikiLike, 0) => format!("{entity} is a landmark listed in several regional guides."),
        (ContextStyle::WikiLike, 1) => format!("It was renovated after a storm damaged {entity}."),
        (ContextStyle::WikiLike, _) => format!("Historians have written about {entity} at length."),
        (ContextStyle::SnippetLike, 0) => format!("{entity} - wikitravel"),
        (ContextStyle::SnippetLike, 1) => format!("top 10 things near {entity}"),
        (ContextStyle::SnippetLike, _) => format!("{entity} photos , maps , directions"),
        (ContextStyle::NewsLike, 0) => format!("A spokesman for {entity} did not return calls."),
        (ContextStyle::NewsLike, 1) => format!("Visitors to {entity} rose sharply last year."),
        (ContextStyle::NewsLike, _) => format!("Local reporters visited {entity} on Sunday."),
    }
}

fn source_tag(style: ContextStyle) -> SourceTag {
    match style {
        ContextStyle::WikiLike => SourceTag::Wikipedia,
        ContextStyle::SnippetLike => SourceTag::Snippet,
        ContextStyle::NewsLike => SourceTag::News,
    }
}

fn join_sentences(style: ContextStyle, sentences: &[String]) -> String {
    let sep = if style == ContextStyle::SnippetLike {
        " ... "
    } else {
        " "
    };
    sentences.join(sep)
}

/// A document about `entity` that states `relations` (asked fact included
/// when listed) plus filler.
fn entity_document(
    cfg: &SynthFamilyConfig,
    facts: &Facts<'_>,
    entity: usize,
    relations: &[Relation],
    extra: Option<String>,
    rng: &mut ChaCha8Rng,
) -> Document {
    let name = &facts.names[entity];
    let mut sentences: Vec<String> = relations
        .iter()
        .map(|&r| fact_sentence(cfg.context_style, r, name, &facts.value(entity, r), rng.gen()))
        .collect();
    sentences.extend(extra);
    sentences.push(filler_sentence(cfg.context_style, name, rng.gen()));
    sentences.shuffle(rng);
    Document {
        title: (cfg.context_style == ContextStyle::WikiLike).then(|| name.clone()),
        text: join_sentences(cfg.context_style, &sentences),
        source_tag: source_tag(cfg.context_style),
    }
}

/// Generates `n` examples; output is a deterministic function of
/// `(config, n)` and prefixes agree across different `n`.
pub fn generate_synthetic(config: &SynthFamilyConfig, n: usize) -> Result<Vec<UniformExample>> {
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let space = config.question_templates.len() * config.entity_vocabulary_size;
    if n > space {
        return Err(Error::NotEnoughExamples {
            requested: n,
            available: space,
        });
    }
    let needed_entities = 1 + config.distractor_documents + usize::from(config.phenomenon == Phenomenon::TwoHop);
    if config.entity_vocabulary_size < needed_entities {
        return Err(Error::InvalidConfig(format!(
            "entity_vocabulary_size must be at least {needed_entities} for this family"
        )));
    }

    let names = entity_names(config.entity_vocabulary_size);
    let facts = Facts {
        names: &names,
        seed: config.seed,
    };
    let family_relations: Vec<Relation> = {
        let set: BTreeSet<Relation> = config.question_templates.iter().map(|t| t.relation).collect();
        set.into_iter().collect()
    };

    let mut combos: Vec<(usize, usize)> = (0..config.question_templates.len())
        .flat_map(|t| (0..config.entity_vocabulary_size).map(move |e| (t, e)))
        .collect();
    combos.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let mut out = Vec::with_capacity(n);
    for (k, &(t_idx, entity)) in combos.iter().take(n).enumerate() {
        let template = &config.question_templates[t_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            (t_idx * config.entity_vocabulary_size + entity) as u64,
        ));
        let bridge_noun = BRIDGES[rng.gen_range(0..BRIDGES.len())];
        let question = template.text.replace("{e}", &names[entity]).replace("{b}", bridge_noun);

        let mut used = BTreeSet::from([entity]);
        let mut documents = Vec::new();
        let answer_entity = match config.phenomenon {
            Phenomenon::SingleFact => {
                documents.push(entity_document(
                    config,
                    &facts,
                    entity,
                    &family_relations,
                    None,
                    &mut rng,
                ));
                entity
            }
            Phenomenon::TwoHop => {
                let target = facts.bridge(entity);
                used.insert(target);
                let link = format!("The {bridge_noun} of {} is {}.", names[entity], names[target]);
                let others: Vec<Relation> = family_relations
                    .iter()
                    .copied()
                    .filter(|&r| r != template.relation)
                    .collect();
                documents.push(entity_document(config, &facts, entity, &others, Some(link), &mut rng));
                documents.push(entity_document(
                    config,
                    &facts,
                    target,
                    &family_relations,
                    None,
                    &mut rng,
                ));
                target
            }
        };
        while used.len() < needed_entities {
            let d = rng.gen_range(0..config.entity_vocabulary_size);
            if used.insert(d) {
                documents.push(entity_document(config, &facts, d, &family_relations, None, &mut rng));
            }
        }
        documents.shuffle(&mut rng);

        let mut metadata = BTreeMap::new();
        metadata.insert("dataset".to_string(), config.family_id.clone());
        metadata.insert("relation".to_string(), template.relation.name().to_string());
        metadata.insert("template".to_string(), format!("{t_idx}"));
        metadata.insert(
            "phenomenon".to_string(),
            match config.phenomenon {
                Phenomenon::SingleFact => "single_fact",
                Phenomenon::TwoHop => "two_hop",
            }
            .to_string(),
        );
        out.push(UniformExample {
            id: format!("{}-{k:06}", config.family_id),
            question,
            documents,
            answers: alloc::vec![facts.value(answer_entity, template.relation)],
            metadata,
        });
    }
    Ok(out)
}

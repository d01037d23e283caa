//! Template-driven synthetic dialogues with two controlled phenomena:
//!
//! * knowledge-dependent slots: in the test split an open-lexicon slot value is
//!   replaced, with probability `knowledge_rate`, by an entity that never occurs
//!   in training. Many templates leave the slot type ambiguous (`what about X ?`),
//!   so only the KB triples of X reveal its type.
//! * context-dependent acts: an answer to a system question is a bare `yes` /
//!   `no` with probability `context_rate`. The act (`confirm` vs `accept`,
//!   `deny` vs `reject`) then depends on which question was asked, sometimes
//!   several turns back when a hesitation intervenes. The same rate governs
//!   bare slot answers (`boston` after "where should i pick you up ?").

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dialogue, Labels, SlotSpan, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeTriple;

pub const ACTS: [&str; 15] = [
    "accept",
    "ack",
    "confirm",
    "confirm_question",
    "deny",
    "goodbye",
    "greeting",
    "hesitate",
    "inform",
    "offer",
    "reject",
    "request",
    "request_info",
    "request_more",
    "thanks",
];

/// Acts whose label is decided by an earlier question when the reply is bare.
pub const CONTEXT_ACTS: [&str; 4] = ["accept", "confirm", "deny", "reject"];

pub const SLOTS: [&str; 11] = [
    "city",
    "cuisine",
    "date",
    "dropoff_city",
    "genre",
    "moviename",
    "numberofpeople",
    "pickup_city",
    "pricing",
    "restaurantname",
    "starttime",
];

const DOMAINS: [&str; 3] = ["movie", "restaurant", "taxi"];

fn slot_lexicon(slot: &str) -> &str {
    match slot {
        "pickup_city" | "dropoff_city" => "city",
        "starttime" => "time",
        "numberofpeople" => "number",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub train: Vec<String>,
    /// Entities that only ever appear in the test split.
    #[serde(default)]
    pub test_only: Vec<String>,
    /// Tail of the `is a` triple given to every entry; `None` means the
    /// entries are not KB entities (numbers, times, names).
    #[serde(default)]
    pub kb_type: Option<String>,
    /// Extra true `related to` tails for KB entities.
    #[serde(default)]
    pub related: Vec<String>,
}

fn words(s: &str) -> Vec<String> {
    s.split(',').map(|w| w.trim().to_string()).collect()
}

fn lexicon(train: &str, test_only: &str, kb_type: Option<&str>, related: &str) -> Lexicon {
    let split = |s: &str| if s.is_empty() { vec![] } else { words(s) };
    Lexicon {
        train: split(train),
        test_only: split(test_only),
        kb_type: kb_type.map(String::from),
        related: split(related),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub train_dialogues: usize,
    pub test_dialogues: usize,
    pub knowledge_rate: f64,
    pub context_rate: f64,
    pub min_turns: usize,
    pub max_turns: usize,
    pub domains: Vec<String>,
    pub lexicons: BTreeMap<String, Lexicon>,
    /// Tails for distractor triples.
    pub noise: Vec<String>,
}

impl Default for GenConfig {
    fn default() -> Self {
        let mut lexicons = BTreeMap::new();
        lexicons.insert(
            "city".into(),
            lexicon(
                "boston, denver, chicago, austin, portland, miami, atlanta, dallas, phoenix, houston, \
                 detroit, memphis, nashville, orlando, tampa, raleigh, tucson, omaha, fresno, oakland",
                "seattle, tacoma, spokane, olympia, boise, reno, eugene, salem, yakima, bellevue",
                Some("city"),
                "place, town",
            ),
        );
        lexicons.insert(
            "genre".into(),
            lexicon(
                "comedy, drama, thriller, horror, romance, action, documentary, animation, western, \
                 musical, mystery, fantasy",
                "noir, satire, biopic, slasher, heist, superhero",
                Some("genre"),
                "film, story",
            ),
        );
        lexicons.insert(
            "cuisine".into(),
            lexicon(
                "italian, mexican, chinese, thai, indian, french, japanese, korean, greek, spanish, \
                 vietnamese, turkish",
                "ethiopian, peruvian, lebanese, moroccan, persian, cuban",
                Some("cuisine"),
                "food, dish",
            ),
        );
        lexicons.insert(
            "pricing".into(),
            lexicon("cheap, expensive, moderate, affordable, pricey", "", None, ""),
        );
        lexicons.insert(
            "date".into(),
            lexicon(
                "today, tomorrow, tonight, this weekend, monday, tuesday, wednesday, thursday, \
                 friday, saturday, sunday, next friday",
                "",
                None,
                "",
            ),
        );
        lexicons.insert(
            "time".into(),
            lexicon("6 pm, 7 pm, 8 pm, 9 pm, 8:30 pm, noon, 10 am, midnight", "", None, ""),
        );
        lexicons.insert("number".into(), lexicon("2, 3, 4, 5, 6, 7, 8", "", None, ""));
        lexicons.insert(
            "moviename".into(),
            lexicon(
                "whiskey tango foxtrot, the big short, zootopia, deadpool, the jungle book, sully, \
                 arrival, moana, inferno, the accountant, doctor strange, la la land",
                "",
                None,
                "",
            ),
        );
        lexicons.insert(
            "restaurantname".into(),
            lexicon(
                "blue fig, the golden spoon, casa lupe, little saigon, pasta house, \
                 the corner bistro, sakura, taj palace, le petit chef, green table",
                "",
                None,
                "",
            ),
        );
        Self {
            train_dialogues: 600,
            test_dialogues: 200,
            knowledge_rate: 0.3,
            context_rate: 0.3,
            min_turns: 2,
            max_turns: 8,
            domains: DOMAINS.iter().map(|d| d.to_string()).collect(),
            lexicons,
            noise: words("rain, music, coffee, blue, paper, river, winter, game, light, stone, garden, travel"),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("knowledge_rate", self.knowledge_rate),
            ("context_rate", self.context_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        if self.min_turns < 1 || self.min_turns > self.max_turns {
            return Err(Error::invalid(format!(
                "turn range {}..={} is empty or starts below 1",
                self.min_turns, self.max_turns
            )));
        }
        if self.domains.is_empty() {
            return Err(Error::invalid("no domains configured"));
        }
        if let Some(d) = self.domains.iter().find(|d| !DOMAINS.contains(&d.as_str())) {
            return Err(Error::invalid(format!("unknown domain {d:?}; known: {DOMAINS:?}")));
        }
        for slot in SLOTS {
            let name = slot_lexicon(slot);
            let lex = self
                .lexicons
                .get(name)
                .ok_or_else(|| Error::invalid(format!("missing lexicon {name:?}")))?;
            if lex.train.is_empty() {
                return Err(Error::invalid(format!("lexicon {name:?} has no training entries")));
            }
            if lex.test_only.iter().any(|v| lex.train.contains(v)) {
                return Err(Error::invalid(format!(
                    "lexicon {name:?}: test-only entry also in train"
                )));
            }
            let entries = lex.train.iter().chain(&lex.test_only);
            if entries.clone().any(|v| v.split_whitespace().count() == 0) {
                return Err(Error::invalid(format!("lexicon {name:?} has an empty entry")));
            }
            if lex.kb_type.is_some() && entries.clone().any(|v| v.contains(' ')) {
                return Err(Error::invalid(format!(
                    "lexicon {name:?}: KB entities must be single tokens"
                )));
            }
        }
        Ok(())
    }
}

/// A test span whose value is an entity never seen in training.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnowledgeSpan {
    pub dialogue: String,
    pub turn: usize,
    pub span: SlotSpan,
}

/// Where each phenomenon occurs, for restricted evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phenomena {
    /// `(dialogue id, turn)` of bare answers whose act depends on an earlier question.
    pub context_turns: BTreeSet<(String, usize)>,
    pub knowledge_spans: Vec<KnowledgeSpan>,
}

impl Phenomena {
    pub fn is_context_turn(&self, dialogue: &str, turn: usize) -> bool {
        self.context_turns.contains(&(dialogue.to_string(), turn))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenStats {
    /// Test slot fills drawn from a lexicon that has test-only entries.
    pub eligible: usize,
    /// How many of those received a test-only entity.
    pub kb_only: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub triples: Vec<KnowledgeTriple>,
    pub labels: Labels,
    pub phenomena: Phenomena,
    pub stats: GenStats,
}

struct DomainTemplates {
    requests: &'static [&'static str],
    /// Slot types a `{?}` placeholder may take; resolved only through the KB.
    ambiguous: &'static [&'static str],
    offers: &'static [&'static str],
    informs: &'static [&'static str],
    asks: &'static [(&'static str, &'static str)],
    /// Free user follow-ups when no question is pending.
    follow_ups: &'static [&'static str],
}

fn templates(domain: &str) -> DomainTemplates {
    match domain {
        "movie" => DomainTemplates {
            requests: &[
                "i want to see a {genre} movie {date}",
                "is there something that's maybe a good intelligent {genre} ?",
                "find me a {genre} film playing in {city}",
                "can i get {numberofpeople} tickets for {moviename} {date}",
                "any {genre} showing in {city} around {starttime} ?",
                "i would like to watch {moviename} in {city}",
                "what do you have for {?} ?",
                "show me options for {?}",
            ],
            ambiguous: &["genre", "city"],
            offers: &[
                "how about {moviename} at {starttime} ?",
                "i can book {moviename} for {date} , shall i ?",
                "{moviename} has seats at {starttime} , want them ?",
            ],
            informs: &[
                "{moviename} is playing at {starttime}",
                "there is a {genre} showing {date}",
            ],
            asks: &[
                ("what city are you in ?", "city"),
                ("how many tickets ?", "numberofpeople"),
                ("which day works ?", "date"),
            ],
            follow_ups: &["what about {?} ?", "how about {?} instead ?", "i also need it {date}"],
        },
        "restaurant" => DomainTemplates {
            requests: &[
                "i need a {pricing} {cuisine} place in {city}",
                "book a table for {numberofpeople} at {restaurantname} {date}",
                "find a {cuisine} restaurant near {city} for {starttime}",
                "any {pricing} places open {date} ?",
                "i am craving {cuisine} food",
                "what do you have for {?} ?",
                "show me options for {?}",
            ],
            ambiguous: &["cuisine", "city"],
            offers: &[
                "how about {restaurantname} at {starttime} ?",
                "i can reserve {restaurantname} for {date} , shall i ?",
            ],
            informs: &[
                "{restaurantname} is {pricing} and opens at {starttime}",
                "{restaurantname} serves {cuisine} food",
            ],
            asks: &[
                ("which city ?", "city"),
                ("how many people ?", "numberofpeople"),
                ("what kind of food ?", "cuisine"),
            ],
            follow_ups: &[
                "what about {?} ?",
                "how about {?} instead ?",
                "make it {pricing} please",
            ],
        },
        _ => DomainTemplates {
            requests: &[
                "i need a taxi from {pickup_city} to {dropoff_city}",
                "get me a cab to {dropoff_city} at {starttime}",
                "can you send a car to {pickup_city} {date} ?",
                "i need a ride for {numberofpeople} people to {dropoff_city}",
            ],
            ambiguous: &[],
            offers: &[
                "a car can pick you up at {starttime} , shall i book it ?",
                "i can send a taxi {date} at {starttime} , ok ?",
            ],
            informs: &["your driver arrives at {starttime}"],
            asks: &[
                ("where should i pick you up ?", "pickup_city"),
                ("where are you heading ?", "dropoff_city"),
                ("what time ?", "starttime"),
            ],
            follow_ups: &["actually make it {starttime}", "i am going to {dropoff_city} instead"],
        },
    }
}

const CONFIRM_QUESTIONS: [&str; 4] = [
    "did you say {=} ?",
    "so {=} , right ?",
    "just to confirm , {=} ?",
    "you want {=} , correct ?",
];
const BARE_YES: [&str; 4] = ["yes", "yeah", "sure", "yes please"];
const BARE_NO: [&str; 3] = ["no", "nope", "not really"];

fn explicit_answer(slot: &str) -> &'static str {
    match slot {
        "city" => "i am in {*}",
        "pickup_city" => "pick me up in {*}",
        "dropoff_city" => "i am going to {*}",
        "numberofpeople" => "for {*} people",
        "date" => "on {*} please",
        "starttime" => "at {*} please",
        "cuisine" => "{*} food please",
        _ => "{*} please",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Question {
    Confirm,
    Offer,
}

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    None,
    Question { kind: Question, hesitated: bool },
    Ask(&'static str),
    Hesitating(Question),
    Closing,
    Done,
}

#[derive(Debug, Clone)]
struct Value {
    text: String,
    test_only: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Split {
    Train,
    Test,
}

struct Generator<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    seen: BTreeMap<String, BTreeSet<String>>,
    stats: GenStats,
    split: Split,
}

struct DialogueState {
    id: String,
    turns: Vec<Utterance>,
    values: BTreeMap<&'static str, Value>,
    focus: Option<&'static str>,
    knowledge: Vec<KnowledgeSpan>,
    context: Vec<usize>,
}

fn slot_static(name: &str) -> Option<&'static str> {
    SLOTS.iter().copied().find(|s| *s == name)
}

impl Generator<'_> {
    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        *items.choose(&mut self.rng).expect("non-empty template list")
    }

    fn draw(&mut self, slot: &str) -> Value {
        let lex_name = slot_lexicon(slot);
        let lex = &self.cfg.lexicons[lex_name];
        match self.split {
            Split::Train => {
                let text = lex.train.choose(&mut self.rng).unwrap().clone();
                self.seen.entry(lex_name.to_string()).or_default().insert(text.clone());
                Value { text, test_only: false }
            }
            Split::Test => {
                if !lex.test_only.is_empty() {
                    self.stats.eligible += 1;
                    if self.rng.gen_bool(self.cfg.knowledge_rate) {
                        self.stats.kb_only += 1;
                        let text = lex.test_only.choose(&mut self.rng).unwrap().clone();
                        return Value { text, test_only: true };
                    }
                }
                let pool: Vec<&String> = match self.seen.get(lex_name) {
                    Some(s) if !s.is_empty() => s.iter().collect(),
                    _ => lex.train.iter().collect(),
                };
                Value {
                    text: pool.choose(&mut self.rng).unwrap().to_string(),
                    test_only: false,
                }
            }
        }
    }

    /// Expands a template. `{slot}` draws a fresh value, `{?}` draws a value of
    /// an ambiguous slot type, `{=}` repeats the focus slot's current value and
    /// `{*}` draws a fresh value for the focus slot.
    fn realize(
        &mut self,
        st: &mut DialogueState,
        domain: &DomainTemplates,
        speaker: Speaker,
        template: &str,
        acts: &[&str],
    ) -> Result<()> {
        let turn = st.turns.len();
        let mut tokens = Vec::new();
        let mut slots = Vec::new();
        for piece in template.split_whitespace() {
            let Some(inner) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) else {
                tokens.push(piece.to_string());
                continue;
            };
            let (slot, value) = match inner {
                "=" => {
                    let slot = st.focus.expect("focus set before repeat");
                    (slot, st.values[slot].clone())
                }
                "*" => {
                    let slot = st.focus.expect("focus set before fresh draw");
                    (slot, self.draw(slot))
                }
                "?" => {
                    let slot = self.pick(domain.ambiguous);
                    (slot, self.draw(slot))
                }
                name => {
                    let slot = slot_static(name).ok_or_else(|| Error::invalid(format!("template slot {name:?}")))?;
                    (slot, self.draw(slot))
                }
            };
            let start = tokens.len();
            tokens.extend(value.text.split_whitespace().map(String::from));
            let span = SlotSpan::new(slot, start, tokens.len());
            if value.test_only {
                st.knowledge.push(KnowledgeSpan {
                    dialogue: st.id.clone(),
                    turn,
                    span: span.clone(),
                });
            }
            slots.push(span);
            st.values.insert(slot, value);
        }
        let utt = Utterance {
            speaker,
            tokens,
            acts: acts.iter().map(|a| a.to_string()).collect(),
            slots,
        };
        // over-long templates are an authoring error, never truncated
        utt.validate(None)?;
        st.turns.push(utt);
        Ok(())
    }

    fn user_turn(
        &mut self,
        st: &mut DialogueState,
        d: &DomainTemplates,
        pending: Pending,
        remaining: usize,
    ) -> Result<Pending> {
        let user = Speaker::User;
        if st.turns.is_empty() {
            let t = self.pick(d.requests);
            if self.rng.gen_bool(0.3) {
                self.realize(st, d, user, &format!("hi , {t}"), &["greeting", "request"])?;
            } else {
                self.realize(st, d, user, t, &["request"])?;
            }
            return Ok(Pending::None);
        }
        match pending {
            Pending::Question { kind, hesitated } => {
                if !hesitated && remaining > 3 && self.rng.gen_bool(0.3) {
                    let t = self.pick(&["hmm let me think", "hold on", "let me check"]);
                    self.realize(st, d, user, t, &["hesitate"])?;
                    return Ok(Pending::Hesitating(kind));
                }
                let yes = self.rng.gen_bool(0.6);
                let act = match (kind, yes) {
                    (Question::Confirm, true) => "confirm",
                    (Question::Confirm, false) => "deny",
                    (Question::Offer, true) => "accept",
                    (Question::Offer, false) => "reject",
                };
                if self.rng.gen_bool(self.cfg.context_rate) {
                    let t = if yes { self.pick(&BARE_YES) } else { self.pick(&BARE_NO) };
                    self.realize(st, d, user, t, &[act])?;
                    st.context.push(st.turns.len() - 1);
                } else {
                    match act {
                        "confirm" => {
                            let t = self.pick(&["yes , that is right", "that is correct", "right , exactly"]);
                            self.realize(st, d, user, t, &[act])?;
                        }
                        "deny" => {
                            let t = self.pick(&["no , i said {*}", "no , i meant {*}"]);
                            self.realize(st, d, user, t, &["deny", "inform"])?;
                        }
                        "accept" => {
                            let t = self.pick(&["yes , book it please", "sounds great , book it"]);
                            self.realize(st, d, user, t, &[act])?;
                        }
                        _ => {
                            let t = self.pick(&["no , i do not like that one", "something else please"]);
                            self.realize(st, d, user, t, &[act])?;
                        }
                    }
                }
                Ok(if yes { Pending::None } else { Pending::Ask("") })
            }
            Pending::Ask(slot) if !slot.is_empty() => {
                st.focus = Some(slot);
                let t = if self.rng.gen_bool(self.cfg.context_rate) {
                    "{*}"
                } else {
                    explicit_answer(slot)
                };
                self.realize(st, d, user, t, &["inform"])?;
                Ok(Pending::None)
            }
            Pending::Closing => {
                self.realize(st, d, user, "that is all , bye", &["goodbye"])?;
                Ok(Pending::Done)
            }
            _ => {
                if remaining <= 2 {
                    if self.rng.gen_bool(0.5) {
                        self.realize(st, d, user, "thank you , bye", &["thanks", "goodbye"])?;
                        return Ok(Pending::Done);
                    }
                    self.realize(st, d, user, "thanks", &["thanks"])?;
                    return Ok(Pending::Closing);
                }
                let t = self.pick(d.follow_ups);
                self.realize(st, d, user, t, &["inform"])?;
                Ok(Pending::None)
            }
        }
    }

    fn system_turn(&mut self, st: &mut DialogueState, d: &DomainTemplates, pending: Pending) -> Result<Pending> {
        let sys = Speaker::System;
        match pending {
            Pending::Hesitating(kind) => {
                let t = self.pick(&["take your time", "sure , no rush", "ok"]);
                self.realize(st, d, sys, t, &["ack"])?;
                return Ok(Pending::Question { kind, hesitated: true });
            }
            Pending::Closing => {
                self.realize(st, d, sys, "you are welcome , anything else ?", &["request_more"])?;
                return Ok(Pending::Closing);
            }
            Pending::Done => {
                self.realize(st, d, sys, "goodbye", &["goodbye"])?;
                return Ok(Pending::Done);
            }
            Pending::Ask(_) => {
                self.realize(st, d, sys, "sorry , what would you like instead ?", &["request_info"])?;
                return Ok(Pending::None);
            }
            _ => {}
        }
        let roll: f64 = self.rng.gen();
        if roll < 0.3 && !st.values.is_empty() {
            let keys: Vec<&'static str> = st.values.keys().copied().collect();
            st.focus = Some(self.pick(&keys));
            let t = self.pick(&CONFIRM_QUESTIONS);
            self.realize(st, d, sys, t, &["confirm_question"])?;
            Ok(Pending::Question {
                kind: Question::Confirm,
                hesitated: false,
            })
        } else if roll < 0.6 {
            let t = self.pick(d.offers);
            self.realize(st, d, sys, t, &["offer"])?;
            Ok(Pending::Question {
                kind: Question::Offer,
                hesitated: false,
            })
        } else if roll < 0.85 {
            let (q, slot) = self.pick(d.asks);
            self.realize(st, d, sys, q, &["request_info"])?;
            Ok(Pending::Ask(slot))
        } else {
            let t = self.pick(d.informs);
            self.realize(st, d, sys, t, &["inform"])?;
            Ok(Pending::None)
        }
    }

    fn dialogue(&mut self, id: String, phenomena: &mut Phenomena) -> Result<Dialogue> {
        let domain = self.pick(&self.cfg.domains.iter().map(String::as_str).collect::<Vec<_>>());
        let d = templates(domain);
        let n = self.rng.gen_range(self.cfg.min_turns..=self.cfg.max_turns);
        let mut st = DialogueState {
            id,
            turns: Vec::new(),
            values: BTreeMap::new(),
            focus: None,
            knowledge: Vec::new(),
            context: Vec::new(),
        };
        let mut pending = Pending::None;
        while st.turns.len() < n {
            let remaining = n - st.turns.len();
            pending = if st.turns.len().is_multiple_of(2) {
                self.user_turn(&mut st, &d, pending, remaining)?
            } else {
                self.system_turn(&mut st, &d, pending)?
            };
        }
        for t in st.context {
            phenomena.context_turns.insert((st.id.clone(), t));
        }
        if self.split == Split::Test {
            phenomena.knowledge_spans.extend(st.knowledge);
        }
        Ok(Dialogue {
            id: st.id,
            turns: st.turns,
        })
    }
}

fn kb_triples(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Vec<KnowledgeTriple>> {
    let mut triples = Vec::new();
    for lex in cfg.lexicons.values() {
        let Some(kind) = &lex.kb_type else { continue };
        for entity in lex.train.iter().chain(&lex.test_only) {
            triples.push(KnowledgeTriple::new(entity, "is a", kind, rng.gen_range(0.8..=1.0))?);
            let extra = rng.gen_range(0..=lex.related.len());
            for tail in lex.related.choose_multiple(rng, extra) {
                triples.push(KnowledgeTriple::new(
                    entity,
                    "related to",
                    tail,
                    rng.gen_range(0.5..0.9),
                )?);
            }
            for _ in 0..rng.gen_range(1..=3) {
                let rel = *["related to", "antonym", "synonym"].choose(rng).unwrap();
                let tail = cfg
                    .noise
                    .choose(rng)
                    .ok_or_else(|| Error::invalid("empty noise list"))?;
                triples.push(KnowledgeTriple::new(entity, rel, tail, rng.gen_range(0.05..0.7))?);
            }
        }
    }
    for (h, r, t, w) in [
        ("comedy", "related to", "comic", 1.0),
        ("comedy", "is a", "drama", 0.9),
        ("foxtrot", "related to", "dance", 0.8),
        ("cheap", "related to", "affordable", 0.99),
        ("expensive", "antonym", "cheap", 0.9),
        ("tomorrow", "antonym", "yesterday", 0.7),
        ("area", "is a", "region", 0.8),
        ("movie", "is a", "film", 0.9),
        ("restaurant", "is a", "place", 0.9),
        ("taxi", "is a", "car", 0.9),
    ] {
        triples.push(KnowledgeTriple::new(h, r, t, w)?);
    }
    Ok(triples)
}

/// Generates train and test corpora, the KB and the label inventories as a
/// pure function of `(cfg, seed)`.
pub fn generate_synthetic(cfg: &GenConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        seen: BTreeMap::new(),
        stats: GenStats::default(),
        split: Split::Train,
    };
    let mut train_phen = Phenomena::default();
    let train = (0..cfg.train_dialogues)
        .map(|i| g.dialogue(format!("train-{i:04}"), &mut train_phen))
        .collect::<Result<Vec<_>>>()?;
    g.split = Split::Test;
    let mut phenomena = Phenomena::default();
    let test = (0..cfg.test_dialogues)
        .map(|i| g.dialogue(format!("test-{i:04}"), &mut phenomena))
        .collect::<Result<Vec<_>>>()?;
    let triples = kb_triples(cfg, &mut g.rng)?;
    let labels = Labels::new(
        ACTS.iter().map(|s| s.to_string()).collect(),
        SLOTS.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok(SyntheticCorpus {
        train,
        test,
        triples,
        labels,
        phenomena,
        stats: g.stats,
    })
}

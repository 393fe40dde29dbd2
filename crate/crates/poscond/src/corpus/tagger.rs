//! Rule-based Universal-POS tagging.
//!
//! Closed-class words (determiners, pronouns, auxiliaries, adpositions,
//! particles, conjunctions) come from lexicons, open-class words from suffix
//! heuristics with a NOUN fallback. This favors precision on the function
//! class, which is what the content/function analyses depend on; open-class
//! distinctions are best-effort.

use std::collections::{HashMap, HashSet};

use super::PosClass;

/// Tagging backend. Tags are Universal-POS strings (NOUN, VERB, DET, ...).
pub trait PosTagger: Send + Sync {
    fn id(&self) -> &str;
    /// One tag per word, computed over the full word sequence.
    fn tag(&self, words: &[String]) -> Vec<String>;
}

/// Maps a Universal-POS tag to its word class. Pure function over the tag.
pub fn pos_class_for(tag: &str) -> PosClass {
    match tag {
        "NOUN" | "PROPN" | "VERB" | "ADJ" | "ADV" => PosClass::Content,
        "PRON" | "AUX" | "DET" | "ADP" | "PART" => PosClass::Function,
        _ => PosClass::Other,
    }
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "each", "every", "either", "neither",
    "some", "any", "no", "all", "both", "half", "such", "what", "which", "whose", "another",
];

const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "mine",
    "yours", "his", "hers", "ours", "theirs", "my", "your", "its", "our", "their", "myself",
    "yourself", "himself", "herself", "itself", "ourselves", "yourselves", "themselves", "who",
    "whom", "whoever", "something", "anything", "nothing", "everything", "someone", "anyone",
    "everyone", "somebody", "anybody", "nobody", "everybody", "oneself",
];

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having",
    "do", "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might",
    "must", "ought",
];

const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "into", "onto", "over", "under",
    "above", "below", "between", "among", "through", "during", "before", "after", "against",
    "about", "around", "near", "without", "within", "along", "across", "behind", "beyond",
    "despite", "except", "inside", "outside", "toward", "towards", "upon", "via", "per",
    "since", "until", "off",
];

const PARTICLES: &[&str] = &["to", "not"];

const COORDINATORS: &[&str] = &["and", "or", "but", "nor", "yet", "plus"];

const SUBORDINATORS: &[&str] = &[
    "if", "because", "although", "though", "while", "when", "whereas", "unless", "whether",
    "once", "so",
];

const INTERJECTIONS: &[&str] = &[
    "oh", "ah", "wow", "hey", "hello", "hi", "yes", "yeah", "hmm", "huh", "alas", "ugh",
    "oops", "ouch", "phew", "gosh", "okay", "ok",
];

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    "hundred", "thousand", "million", "billion",
];

const COMMON_ADVERBS: &[&str] = &[
    "very", "quite", "too", "also", "just", "only", "often", "never", "always", "sometimes",
    "usually", "again", "soon", "still", "then", "there", "here", "now", "already", "perhaps",
    "maybe", "almost", "even", "rather", "really", "away", "instead", "together", "far",
    "enough", "indeed", "nearly", "suddenly", "however", "early", "late", "today", "yesterday",
    "tomorrow",
];

const COMMON_VERBS: &[&str] = &[
    "go", "goes", "went", "gone", "going", "come", "comes", "came", "coming", "say", "says",
    "said", "see", "sees", "saw", "seen", "get", "gets", "got", "gotten", "make", "makes",
    "made", "take", "takes", "took", "taken", "know", "knows", "knew", "known", "think",
    "thinks", "thought", "tell", "tells", "told", "run", "runs", "ran", "want", "wants",
    "use", "uses", "began", "begin", "begins", "begun", "feel", "feels", "felt", "bring",
    "brings", "brought", "keep", "keeps", "kept", "hold", "holds", "held", "write", "writes",
    "wrote", "written", "stand", "stands", "stood", "hear", "hears", "heard", "mean", "means",
    "meant", "meet", "meets", "met", "pay", "pays", "paid", "eat", "eats", "ate", "eaten",
    "give", "gives", "gave", "given", "sit", "sits", "sat", "find", "finds", "found", "speak",
    "speaks", "spoke", "spoken", "break", "breaks", "broke", "broken", "drive", "drives",
    "drove", "driven", "choose", "chooses", "chose", "chosen", "rise", "rises", "rose",
    "risen", "fall", "falls", "fell", "fallen", "grow", "grows", "grew", "grown", "draw",
    "draws", "drew", "drawn", "throw", "throws", "threw", "thrown", "fly", "flies", "flew",
    "flown", "wear", "wears", "wore", "worn", "sing", "sings", "sang", "sung", "become",
    "becomes", "became", "sell", "sells", "sold", "build", "builds", "built", "send", "sends",
    "sent", "spend", "spends", "spent", "lose", "loses", "lost", "sleep", "sleeps", "slept",
    "win", "wins", "won", "buy", "buys", "bought", "catch", "catches", "caught", "teach",
    "teaches", "taught", "fight", "fights", "fought", "seek", "seeks", "sought", "lead",
    "leads", "led", "leave", "leaves", "left", "let", "lets", "put", "puts", "read", "reads",
    "look", "looks", "seem", "seems", "help", "helps", "talk", "talks", "start", "starts",
    "turn", "turns", "move", "moves", "live", "lives", "call", "calls", "try", "tries",
    "ask", "asks", "work", "works",
];

const NOUN_SUFFIXES: &[&str] = &[
    "tion", "sion", "ment", "ness", "ity", "ance", "ence", "ship", "hood", "ism",
];

const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "less", "able", "ible", "ive", "ish"];

/// The built-in lexicon + suffix tagger.
pub struct RuleTagger {
    lexicon: HashMap<&'static str, &'static str>,
    pronouns: HashSet<&'static str>,
}

impl RuleTagger {
    pub fn new() -> Self {
        let mut lexicon = HashMap::new();
        // Insertion order resolves membership conflicts: earlier lists win
        // (e.g. "no" is DET, not INTJ; "so" is SCONJ, not CCONJ).
        let groups: [(&[&str], &str); 10] = [
            (DETERMINERS, "DET"),
            (PRONOUNS, "PRON"),
            (AUXILIARIES, "AUX"),
            (ADPOSITIONS, "ADP"),
            (PARTICLES, "PART"),
            (COORDINATORS, "CCONJ"),
            (SUBORDINATORS, "SCONJ"),
            (INTERJECTIONS, "INTJ"),
            (NUMBER_WORDS, "NUM"),
            (COMMON_ADVERBS, "ADV"),
        ];
        for (words, tag) in groups {
            for w in words {
                lexicon.entry(*w).or_insert(tag);
            }
        }
        for w in COMMON_VERBS {
            lexicon.entry(*w).or_insert("VERB");
        }
        RuleTagger {
            lexicon,
            pronouns: PRONOUNS.iter().copied().collect(),
        }
    }

    fn tag_word(&self, surface: &str) -> String {
        let core: String = surface
            .trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
            .trim_matches('\'')
            .to_string();
        if core.is_empty() {
            return "PUNCT".to_string();
        }
        let lower = core.to_lowercase();
        if lower.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            return "NUM".to_string();
        }
        if let Some(tag) = self.lexicon.get(lower.as_str()) {
            return (*tag).to_string();
        }
        // Contractions: "didn't" -> AUX; "it's" / "we're" -> PRON head.
        if lower.ends_with("n't") || lower.ends_with("'ll") {
            return "AUX".to_string();
        }
        if let Some(head) = lower.split('\'').next() {
            if head != lower && self.pronouns.contains(head) {
                return "PRON".to_string();
            }
        }
        if lower.len() > 3 && lower.ends_with("ly") {
            return "ADV".to_string();
        }
        if lower.len() > 4 && lower.ends_with("ing") {
            return "VERB".to_string();
        }
        if lower.len() > 3 && lower.ends_with("ed") {
            return "VERB".to_string();
        }
        for suf in NOUN_SUFFIXES {
            if lower.len() > suf.len() + 1 && lower.ends_with(suf) {
                return "NOUN".to_string();
            }
        }
        for suf in ADJ_SUFFIXES {
            if lower.len() > suf.len() + 1 && lower.ends_with(suf) {
                return "ADJ".to_string();
            }
        }
        if core.chars().next().is_some_and(|c| c.is_uppercase()) {
            return "PROPN".to_string();
        }
        "NOUN".to_string()
    }
}

impl Default for RuleTagger {
    fn default() -> Self {
        Self::new()
    }
}

impl PosTagger for RuleTagger {
    fn id(&self) -> &str {
        "rule-en-v1"
    }

    fn tag(&self, words: &[String]) -> Vec<String> {
        words.iter().map(|w| self.tag_word(w)).collect()
    }
}
